//! Training objectives with analytic gradients, score modulation and
//! inference-time logit fusion.

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::numeric::{dot, norm, softmax_in_place, GradPair, Matrix, MIN_ROW_NORM};

pub const TAU_INIT: f64 = 0.07;
pub const TAU_MIN: f64 = 0.01;
pub const TAU_MAX: f64 = 1.0;
/// Floor applied to probabilities before the fusion power.
pub const PROB_FLOOR: f64 = 1e-12;
/// Binary scores are clipped to `[BCE_CLIP, 1 − BCE_CLIP]`.
pub const BCE_CLIP: f64 = 1e-7;

pub fn clamp_tau(tau: f64) -> f64 {
    tau.clamp(TAU_MIN, TAU_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub seg: f64,
    pub mask: f64,
    pub view_3d: f64,
    pub view_2d: f64,
    pub view_fuse: f64,
    pub bi: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            seg: 4.0,
            mask: 1.0,
            view_3d: 1.0,
            view_2d: 4.0,
            view_fuse: 1.5,
            bi: 16.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            seg: 0.0,
            mask: 0.0,
            view_3d: 0.0,
            view_2d: 0.0,
            view_fuse: 0.0,
            bi: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("seg", self.seg),
            ("mask", self.mask),
            ("view_3d", self.view_3d),
            ("view_2d", self.view_2d),
            ("view_fuse", self.view_fuse),
            ("bi", self.bi),
        ];
        for (name, w) in all {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("loss weight {name} = {w} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }
}

fn unit(v: &[f64], row: usize) -> Result<(Vec<f64>, f64)> {
    let n = norm(v);
    if n <= MIN_ROW_NORM {
        return Err(Error::ZeroNormRow(row));
    }
    Ok((v.iter().map(|x| x / n).collect(), n))
}

/// Gradient of `cos(a, b)` with respect to `a`, given unit `â`, `b̂` and `‖a‖`.
fn cos_grad(a_unit: &[f64], b_unit: &[f64], a_norm: f64) -> Vec<f64> {
    let c = dot(a_unit, b_unit);
    a_unit
        .iter()
        .zip(b_unit)
        .map(|(a, b)| (b - c * a) / a_norm)
        .collect()
}

/// Mean cross-entropy of `softmax(cos(f, t_k)/τ)` over the given columns, for
/// supervised rows. Gradients: `features` (`N × C`) and `tau` (`1 × 1`).
pub fn segmentation_loss(
    features: &Matrix,
    text: &Matrix,
    labels: &[usize],
    tau: f64,
    supervised: &[bool],
    columns: &[usize],
) -> Result<GradPair> {
    let n = features.rows();
    if labels.len() != n || supervised.len() != n {
        return Err(dim_mismatch(format!(
            "{n} feature rows, {} labels, {} supervision flags",
            labels.len(),
            supervised.len()
        )));
    }
    if features.cols() != text.cols() {
        return Err(dim_mismatch(format!(
            "feature dim {} vs text dim {}",
            features.cols(),
            text.cols()
        )));
    }
    let count = supervised.iter().filter(|s| **s).count();
    if count == 0 {
        return Err(Error::EmptySupervision);
    }
    let scale = 1.0 / count as f64;
    let mut d_features = Matrix::zeros(n, features.cols());
    let mut d_tau = 0.0;
    let mut loss = 0.0;
    let mut z = vec![0.0; columns.len()];
    for r in (0..n).filter(|&r| supervised[r]) {
        let target = columns
            .iter()
            .position(|&c| c == labels[r])
            .ok_or_else(|| Error::Config(format!("label {} of row {r} is not a scored column", labels[r])))?;
        let (u, len) = unit(features.row(r), r)?;
        for (k, &c) in columns.iter().enumerate() {
            z[k] = dot(&u, text.row(c)) / tau;
        }
        let zy = z[target];
        let mut p = z.clone();
        softmax_in_place(&mut p);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - zy;

        let mut du = vec![0.0; u.len()];
        for (k, &c) in columns.iter().enumerate() {
            let dz = (p[k] - if k == target { 1.0 } else { 0.0 }) * scale;
            d_tau -= dz * z[k] / tau;
            for (d, t) in du.iter_mut().zip(text.row(c)) {
                *d += dz * t / tau;
            }
        }
        let proj = dot(&u, &du);
        for ((g, d), ui) in d_features.row_mut(r).iter_mut().zip(&du).zip(&u) {
            *g = (d - proj * ui) / len;
        }
    }
    Ok(GradPair::new(loss * scale)
        .with_grad("features", d_features)
        .with_grad("tau", Matrix::filled(1, 1, d_tau)))
}

/// Mean over valid masks of `1 − cos(G₃d_i, G_CLIP_i)`. Gradient: `g3d`.
pub fn mask_regularization_loss(g3d: &Matrix, g_clip: &Matrix, valid: &[bool]) -> Result<GradPair> {
    if g3d.shape() != g_clip.shape() || valid.len() != g3d.rows() {
        return Err(dim_mismatch(format!(
            "mask loss over {:?} and {:?} with {} flags",
            g3d.shape(),
            g_clip.shape(),
            valid.len()
        )));
    }
    let count = valid.iter().filter(|v| **v).count();
    if count == 0 {
        return Err(Error::NoValidMasks);
    }
    let scale = 1.0 / count as f64;
    let mut grad = Matrix::zeros(g3d.rows(), g3d.cols());
    let mut loss = 0.0;
    for i in (0..g3d.rows()).filter(|&i| valid[i]) {
        let (a, an) = unit(g3d.row(i), i)?;
        let (b, _) = unit(g_clip.row(i), i)?;
        loss += 1.0 - dot(&a, &b);
        for (g, d) in grad.row_mut(i).iter_mut().zip(cos_grad(&a, &b, an)) {
            *g = -d * scale;
        }
    }
    Ok(GradPair::new(loss * scale).with_grad("g3d", grad))
}

/// `1 − cos(mean of dense rows, target)`. Gradient: `features`.
pub fn view_regularization_loss(dense: &Matrix, target: &Matrix) -> Result<GradPair> {
    if dense.cols() != target.cols() || target.rows() != 1 {
        return Err(dim_mismatch(format!(
            "view loss over {:?} with target {:?}",
            dense.shape(),
            target.shape()
        )));
    }
    let pooled = dense.mean_rows()?;
    let (a, an) = unit(pooled.row(0), 0)?;
    let (b, _) = unit(target.row(0), 0)?;
    let loss = 1.0 - dot(&a, &b);
    let share: Vec<f64> = cos_grad(&a, &b, an)
        .into_iter()
        .map(|d| -d / dense.rows() as f64)
        .collect();
    let mut grad = Matrix::zeros(dense.rows(), dense.cols());
    for r in 0..dense.rows() {
        grad.row_mut(r).copy_from_slice(&share);
    }
    Ok(GradPair::new(loss).with_grad("features", grad))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `σ(logits)` against target 0 on base points
/// and 1 elsewhere. Gradient: `logits`.
pub fn binary_loss(logits: &Matrix, base_mask: &[bool]) -> Result<GradPair> {
    if logits.cols() != 1 || logits.rows() != base_mask.len() {
        return Err(dim_mismatch(format!(
            "binary logits {:?} for {} points",
            logits.shape(),
            base_mask.len()
        )));
    }
    let n = logits.rows();
    if n == 0 {
        return Err(Error::EmptyInput("binary loss over zero points".into()));
    }
    let mut grad = Matrix::zeros(n, 1);
    let mut loss = 0.0;
    for (r, &base) in base_mask.iter().enumerate() {
        let raw = sigmoid(logits.data()[r]);
        let s = raw.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
        let y = if base { 0.0 } else { 1.0 };
        loss -= y * s.ln() + (1.0 - y) * (1.0 - s).ln();
        if s == raw {
            grad.data_mut()[r] = (s - y) / n as f64;
        }
    }
    Ok(GradPair::new(loss / n as f64).with_grad("logits", grad))
}

/// Per-batch component losses, each optional.
#[derive(Debug, Clone, Default)]
pub struct LossComponents {
    pub seg_3d: Option<GradPair>,
    pub seg_2d: Option<GradPair>,
    pub seg_fuse: Option<GradPair>,
    pub mask: Option<GradPair>,
    pub view_3d: Option<GradPair>,
    pub view_2d: Option<GradPair>,
    pub view_fuse: Option<GradPair>,
    pub bi: Option<GradPair>,
}

/// `ω_mask`, or zero during the warmup epochs.
pub fn effective_mask_weight(w: &LossWeights, epoch: usize, total_epochs: usize, warmup_fraction: f64) -> f64 {
    if (epoch as f64) < warmup_fraction * total_epochs as f64 {
        0.0
    } else {
        w.mask
    }
}

/// Weighted objective. Gradients are keyed `component.input`, for example
/// `seg_3d.features`, and already carry the component weight.
pub fn total_loss(
    c: &LossComponents,
    w: &LossWeights,
    epoch: usize,
    total_epochs: usize,
    warmup_fraction: f64,
) -> GradPair {
    let mask_w = effective_mask_weight(w, epoch, total_epochs, warmup_fraction);
    let parts = [
        ("seg_3d", &c.seg_3d, w.seg),
        ("seg_2d", &c.seg_2d, w.seg),
        ("seg_fuse", &c.seg_fuse, w.seg),
        ("mask", &c.mask, mask_w),
        ("view_3d", &c.view_3d, w.view_3d),
        ("view_2d", &c.view_2d, w.view_2d),
        ("view_fuse", &c.view_fuse, w.view_fuse),
        ("bi", &c.bi, w.bi),
    ];
    let mut out = GradPair::new(0.0);
    for (name, part, weight) in parts {
        let Some(part) = part else { continue };
        if weight == 0.0 {
            continue;
        }
        out.value += weight * part.value;
        for (k, g) in &part.grads {
            out.grads.insert(format!("{name}.{k}"), g.scale(weight));
        }
    }
    out
}

/// `s = s_B·(1 − s_b) + s_N·s_b`, row by row.
pub fn modulate_scores(s_base: &Matrix, s_novel: &Matrix, s_b: &[f64]) -> Result<Matrix> {
    if s_base.shape() != s_novel.shape() || s_b.len() != s_base.rows() {
        return Err(dim_mismatch(format!(
            "modulation of {:?} and {:?} with {} binary scores",
            s_base.shape(),
            s_novel.shape(),
            s_b.len()
        )));
    }
    let mut out = s_base.clone();
    for (r, &b) in s_b.iter().enumerate() {
        for (o, n) in out.row_mut(r).iter_mut().zip(s_novel.row(r)) {
            *o = *o * (1.0 - b) + n * b;
        }
    }
    Ok(out)
}

/// Softmax of `logits` restricted to `columns`, zero elsewhere.
pub fn restricted_softmax(logits: &Matrix, columns: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    let mut buf = vec![0.0; columns.len()];
    for r in 0..logits.rows() {
        for (b, &c) in buf.iter_mut().zip(columns) {
            *b = logits[(r, c)];
        }
        softmax_in_place(&mut buf);
        for (b, &c) in buf.iter().zip(columns) {
            out[(r, c)] = *b;
        }
    }
    out
}

/// `p_final ∝ p^λ · p_aux^(1−λ)` with both inputs floored at [`PROB_FLOOR`].
pub fn fuse_inference_logits(p: &Matrix, p_aux: &Matrix, lambda: f64) -> Result<Matrix> {
    if p.shape() != p_aux.shape() {
        return Err(dim_mismatch(format!("fusing {:?} with {:?}", p.shape(), p_aux.shape())));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("balancing factor {lambda} outside [0, 1]")));
    }
    let mut out = p.clone();
    for r in 0..p.rows() {
        let row = out.row_mut(r);
        for (o, q) in row.iter_mut().zip(p_aux.row(r)) {
            *o = o.max(PROB_FLOOR).powf(lambda) * q.max(PROB_FLOOR).powf(1.0 - lambda);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(out)
}

/// Index of the largest entry of each row, ties to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
