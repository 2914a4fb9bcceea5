//! Frozen vision-language embedding space.
//!
//! Category embeddings stand in for text-encoder outputs; oracle pixel
//! embeddings stand in for dense image-encoder features.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{cosine_sim, dot, norm, rng_for, row_normalize, Matrix};
use crate::scenegen::RenderedView;

/// Largest allowed |cos| between distinct category rows.
pub const MAX_CATEGORY_SIMILARITY: f64 = 0.3;
pub const DEFAULT_EMBED_DIM: usize = 32;
const DEFAULT_PERTURBATION: f64 = 0.15;

/// Unit-norm embedding per category name. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    names: Vec<String>,
    embeddings: Matrix,
}

impl CategoryTable {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `L × C` unit rows.
    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn n_categories(&self) -> usize {
        self.names.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn row(&self, category: usize) -> &[f64] {
        self.embeddings.row(category)
    }

    /// Largest |cos| between two distinct rows.
    pub fn max_off_diagonal(&self) -> f64 {
        let gram = cosine_sim(&self.embeddings, &self.embeddings).expect("same dim");
        let l = self.n_categories();
        let mut worst: f64 = 0.0;
        for i in 0..l {
            for j in 0..l {
                if i != j {
                    worst = worst.max(gram[(i, j)].abs());
                }
            }
        }
        worst
    }

    /// Unit-norm mean of the rows of the given categories: the caption
    /// embedding of a view showing exactly those categories.
    pub fn caption_embedding(&self, categories: &[usize]) -> Result<Matrix> {
        if categories.is_empty() {
            return Err(Error::EmptyInput("caption of an empty category set".into()));
        }
        let mut acc = vec![0.0; self.dim()];
        for &c in categories {
            for (a, v) in acc.iter_mut().zip(self.row(c)) {
                *a += v;
            }
        }
        let n = categories.len() as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        row_normalize(&Matrix::row_vector(&acc)?)
    }
}

/// Builds the table with the default perturbation strength.
pub fn build_category_table<S: AsRef<str>>(names: &[S], dim: usize, seed: u64) -> Result<CategoryTable> {
    build_category_table_with(names, dim, seed, DEFAULT_PERTURBATION)
}

/// Orthonormalizes random Gaussian directions, then mixes in a shared
/// perturbation of the given strength so categories are only
/// quasi-orthogonal. Strength is halved until the similarity bound holds.
pub fn build_category_table_with<S: AsRef<str>>(
    names: &[S],
    dim: usize,
    seed: u64,
    perturbation: f64,
) -> Result<CategoryTable> {
    let l = names.len();
    if l == 0 {
        return Err(Error::Config("category table needs at least one name".into()));
    }
    if l > dim {
        return Err(Error::Config(format!(
            "{l} categories do not fit quasi-orthogonally in {dim} dimensions"
        )));
    }
    let mut rng = rng_for(seed, 0x7E47);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(l);
    while basis.len() < l {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    let noise: Vec<Vec<f64>> = (0..l)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();

    let mut strength = perturbation.max(0.0);
    loop {
        let rows: Vec<Vec<f64>> = basis
            .iter()
            .zip(&noise)
            .map(|(b, e)| {
                b.iter()
                    .zip(e)
                    .map(|(x, y)| x + strength * y / (dim as f64).sqrt())
                    .collect()
            })
            .collect();
        let embeddings = row_normalize(&Matrix::from_rows(&rows)?)?;
        let table = CategoryTable {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            embeddings,
        };
        if table.max_off_diagonal() <= MAX_CATEGORY_SIMILARITY || strength == 0.0 {
            return Ok(table);
        }
        strength = if strength < 1e-3 { 0.0 } else { strength / 2.0 };
    }
}

/// `(H·W) × C` map with each pixel's category embedding; zero at VOID.
pub fn oracle_pixel_embeddings(view: &RenderedView, table: &CategoryTable) -> Matrix {
    let mut out = Matrix::zeros(view.label_image.len(), table.dim());
    for (p, label) in view.label_image.iter().enumerate() {
        if let Some(l) = label {
            out.row_mut(p).copy_from_slice(table.row(*l as usize));
        }
    }
    out
}
