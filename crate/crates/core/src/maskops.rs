//! Mask algebra: back-projection of 2D masks onto points, pseudo mask
//! features, 3D mask pooling, the masked-attention matrix and the teacher
//! mask embeddings.

use crate::embedspace::{oracle_pixel_embeddings, CategoryTable};
use crate::error::{dim_mismatch, Error, Result};
use crate::geometry::Correspondence;
use crate::numeric::{norm, Matrix, MIN_ROW_NORM};
use crate::scenegen::RenderedView;

/// Exclusive per-pixel mask assignment plus one embedding per mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    height: usize,
    width: usize,
    /// Mask index per raster pixel; `None` at VOID pixels.
    assignment: Vec<Option<usize>>,
    /// `M × C` unit rows.
    embeddings: Matrix,
}

impl MaskSet {
    pub fn new(
        height: usize,
        width: usize,
        assignment: Vec<Option<usize>>,
        embeddings: Matrix,
    ) -> Result<Self> {
        if assignment.len() != height * width {
            return Err(dim_mismatch(format!(
                "assignment of {} pixels for a {height}×{width} image",
                assignment.len()
            )));
        }
        if let Some(bad) = assignment.iter().flatten().find(|&&m| m >= embeddings.rows()) {
            return Err(dim_mismatch(format!(
                "mask index {bad} with {} embeddings",
                embeddings.rows()
            )));
        }
        Ok(Self {
            height,
            width,
            assignment,
            embeddings,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_masks(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    /// Binary map of mask `i` in raster order.
    pub fn mask(&self, i: usize) -> Vec<bool> {
        self.assignment.iter().map(|a| *a == Some(i)).collect()
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_masks()];
        for m in self.assignment.iter().flatten() {
            counts[*m] += 1;
        }
        counts
    }
}

/// Binary `N′ × M` point-to-mask matrix aligned to a correspondence.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3D {
    matrix: Matrix,
}

impl Mask3D {
    /// Validates that entries are 0/1 with at most one 1 per row.
    pub fn new(matrix: Matrix) -> Result<Self> {
        for r in 0..matrix.rows() {
            let row = matrix.row(r);
            if row.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::DimMismatch(format!("row {r} is not binary")));
            }
            if row.iter().filter(|v| **v == 1.0).count() > 1 {
                return Err(Error::DimMismatch(format!("row {r} belongs to several masks")));
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_masks(&self) -> usize {
        self.matrix.cols()
    }

    /// Mask of each row, if any.
    pub fn row_masks(&self) -> Vec<Option<usize>> {
        (0..self.n_rows())
            .map(|r| self.matrix.row(r).iter().position(|v| *v == 1.0))
            .collect()
    }

    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_masks()];
        for m in self.row_masks().into_iter().flatten() {
            counts[m] += 1;
        }
        counts
    }
}

pub fn backproject_masks(ms: &MaskSet, corr: &Correspondence) -> Result<Mask3D> {
    if ms.height != corr.height || ms.width != corr.width {
        return Err(dim_mismatch(format!(
            "masks are {}×{} but correspondence is {}×{}",
            ms.height, ms.width, corr.height, corr.width
        )));
    }
    let mut m = Matrix::zeros(corr.n_prime(), ms.n_masks());
    for (j, e) in corr.entries.iter().enumerate() {
        if let Some(i) = ms.assignment[e.row * ms.width + e.col] {
            m[(j, i)] = 1.0;
        }
    }
    Ok(Mask3D { matrix: m })
}

/// `F₂d = M₃d · G₂d`.
pub fn pseudo_mask_feature(m3d: &Mask3D, g2d: &Matrix) -> Result<Matrix> {
    m3d.matrix.matmul(g2d)
}

/// Mean of the rows belonging to each mask; masks without rows are invalid
/// and left zero.
pub fn mask_pool_3d(features: &Matrix, m3d: &Mask3D) -> Result<(Matrix, Vec<bool>)> {
    if features.rows() != m3d.n_rows() {
        return Err(dim_mismatch(format!(
            "{} feature rows for {} mask rows",
            features.rows(),
            m3d.n_rows()
        )));
    }
    let mut pooled = Matrix::zeros(m3d.n_masks(), features.cols());
    let mut counts = vec![0usize; m3d.n_masks()];
    for (j, m) in m3d.row_masks().into_iter().enumerate() {
        if let Some(i) = m {
            counts[i] += 1;
            for (p, v) in pooled.row_mut(i).iter_mut().zip(features.row(j)) {
                *p += v;
            }
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            pooled.row_mut(i).iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    Ok((pooled, counts.iter().map(|c| *c > 0).collect()))
}

/// Gradient of [`mask_pool_3d`] with respect to its input rows.
pub fn mask_pool_3d_backward(m3d: &Mask3D, d_pooled: &Matrix) -> Matrix {
    let counts = m3d.column_counts();
    let mut out = Matrix::zeros(m3d.n_rows(), d_pooled.cols());
    for (j, m) in m3d.row_masks().into_iter().enumerate() {
        if let Some(i) = m {
            let c = counts[i] as f64;
            for (o, g) in out.row_mut(j).iter_mut().zip(d_pooled.row(i)) {
                *o = g / c;
            }
        }
    }
    out
}

/// Boolean `(T+1+M)²` attention mask, `true` meaning "may not attend".
///
/// Token order: `T` image tokens, one class token, then `M` mask tokens.
/// Stored by its patch-membership block; every other block is constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    n_tokens: usize,
    n_masks: usize,
    /// `M × T`, row-major; `false` where mask `i` touches token `j`.
    membership: Vec<bool>,
}

impl AttentionMask {
    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn n_masks(&self) -> usize {
        self.n_masks
    }

    pub fn size(&self) -> usize {
        self.n_tokens + 1 + self.n_masks
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        let s = self.size();
        assert!(r < s && c < s, "attention index ({r}, {c}) outside {s}×{s}");
        let t = self.n_tokens;
        if r <= t {
            c > t
        } else if c < t {
            self.membership[(r - t - 1) * t + c]
        } else {
            c > t
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        let s = self.size();
        (0..s).map(|r| (0..s).map(|c| self.get(r, c)).collect()).collect()
    }
}

/// Assembles the attention mask from the `M × T` membership block.
pub fn build_attention_mask(membership: &[Vec<bool>], n_tokens: usize, n_masks: usize) -> Result<AttentionMask> {
    if membership.len() != n_masks {
        return Err(dim_mismatch(format!(
            "{} membership rows for {n_masks} masks",
            membership.len()
        )));
    }
    let mut flat = Vec::with_capacity(n_masks * n_tokens);
    for (i, row) in membership.iter().enumerate() {
        if row.len() != n_tokens {
            return Err(dim_mismatch(format!(
                "membership row {i} has {} entries for {n_tokens} tokens",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    Ok(AttentionMask {
        n_tokens,
        n_masks,
        membership: flat,
    })
}

/// Membership block with one token per non-VOID pixel, raster order.
pub fn pixel_token_membership(ms: &MaskSet) -> Vec<Vec<bool>> {
    let tokens: Vec<usize> = ms.assignment.iter().filter_map(|a| *a).collect();
    (0..ms.n_masks())
        .map(|i| tokens.iter().map(|&m| m != i).collect())
        .collect()
}

/// Teacher embedding per mask from frozen pixel embeddings.
///
/// Every non-VOID pixel is an image token carrying its oracle embedding and
/// the class token carries zero. Each mask token attends under
/// [`build_attention_mask`] with all-zero scores and identity values, so its
/// output is the member sum divided by `members + 1`; rows are then
/// unit-normalized. Masks with no pixels are invalid and left zero.
pub fn teacher_mask_embeddings(
    view: &RenderedView,
    ms: &MaskSet,
    table: &CategoryTable,
) -> Result<(Matrix, Vec<bool>)> {
    if view.label_image.len() != ms.assignment.len() {
        return Err(dim_mismatch(String::from("teacher view and masks differ in size")));
    }
    let oracle = oracle_pixel_embeddings(view, table);
    let token_pixels: Vec<usize> = ms
        .assignment
        .iter()
        .enumerate()
        .filter_map(|(p, a)| a.map(|_| p))
        .collect();
    let t = token_pixels.len();
    let m = ms.n_masks();
    let attn = build_attention_mask(&pixel_token_membership(ms), t, m)?;
    let c = table.dim();

    let mut out = Matrix::zeros(m, c);
    let mut valid = vec![false; m];
    for i in 0..m {
        let r = t + 1 + i;
        let allowed: Vec<usize> = (0..attn.size()).filter(|&col| !attn.get(r, col)).collect();
        let members = allowed.iter().filter(|&&col| col < t).count();
        if members == 0 {
            continue;
        }
        // Equal scores give equal softmax weights over the allowed tokens.
        let w = 1.0 / allowed.len() as f64;
        let row = out.row_mut(i);
        for &col in &allowed {
            if col < t {
                for (o, v) in row.iter_mut().zip(oracle.row(token_pixels[col])) {
                    *o += w * v;
                }
            }
        }
        let n = norm(row);
        if n > MIN_ROW_NORM {
            row.iter_mut().for_each(|v| *v /= n);
            valid[i] = true;
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok((out, valid))
}
