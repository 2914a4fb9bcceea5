use std::collections::BTreeMap;

use super::matrix::{dot, norm, Matrix};
use crate::error::{dim_mismatch, Error, Result};

/// Rows whose L2 norm falls at or below this are treated as degenerate.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// A scalar value with gradients keyed by input name.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair {
    pub value: f64,
    pub grads: BTreeMap<String, Matrix>,
}

impl GradPair {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            grads: BTreeMap::new(),
        }
    }

    pub fn with_grad(mut self, name: impl Into<String>, grad: Matrix) -> Self {
        self.grads.insert(name.into(), grad);
        self
    }

    pub fn grad(&self, name: &str) -> Option<&Matrix> {
        self.grads.get(name)
    }

    /// Takes a gradient out, panicking if the loss did not produce it.
    pub fn take(&mut self, name: &str) -> Matrix {
        self.grads
            .remove(name)
            .unwrap_or_else(|| panic!("gradient `{name}` missing"))
    }
}

/// Scales each row to unit L2 norm.
pub fn row_normalize(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let n = norm(m.row(r));
        if n <= MIN_ROW_NORM {
            return Err(Error::ZeroNormRow(r));
        }
        out.row_mut(r).iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

/// Row norms, in order.
pub fn row_norms(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|r| norm(m.row(r))).collect()
}

/// Back-propagates through `row_normalize`.
///
/// Given the normalized rows `unit`, the original norms, and `d_unit`, returns
/// `(I − u uᵀ) d_unit / ‖x‖` per row.
pub fn row_normalize_backward(unit: &Matrix, norms: &[f64], d_unit: &Matrix) -> Matrix {
    let mut out = d_unit.clone();
    for r in 0..unit.rows() {
        let u = unit.row(r);
        let proj = dot(u, d_unit.row(r));
        let n = norms[r];
        for (o, ui) in out.row_mut(r).iter_mut().zip(u) {
            *o = (*o - proj * ui) / n;
        }
    }
    out
}

/// Pairwise cosine similarity of unit rows: `a · bᵀ`.
pub fn cosine_sim(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(dim_mismatch(format!(
            "cosine_sim embedding dims {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    a.matmul_nt(b)
}

/// Numerically stable softmax over each row.
pub fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    logits.ensure_finite("softmax input")?;
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(f: F, x: &Matrix, eps: f64) -> Matrix
where
    F: Fn(&Matrix) -> f64,
{
    assert!(
        (1e-6..=1e-2).contains(&eps),
        "finite-difference step {eps} outside [1e-6, 1e-2]"
    );
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for idx in 0..x.data().len() {
        let orig = probe.data()[idx];
        probe.data_mut()[idx] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[idx] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[idx] = orig;
        grad.data_mut()[idx] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Largest entrywise relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &Matrix, b: &Matrix, floor: f64) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
