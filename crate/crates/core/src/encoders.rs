//! Trainable networks: the point encoder, the condition networks, the forward
//! noising step and the conditioned 2D feature extractor with its mask head.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedspace::{oracle_pixel_embeddings, CategoryTable};
use crate::error::{dim_mismatch, Error, Result};
use crate::maskops::MaskSet;
use crate::numeric::{dot, row_normalize, row_normalize_backward, row_norms, softmax_rows, Matrix, Mlp, MlpTrace};
use crate::scenegen::{RenderedView, Scene, ROOM_SIZE};

pub const DEFAULT_GLOBAL_DIM: usize = 64;
pub const DEFAULT_COND_DIM: usize = 32;
pub const DEFAULT_N_MASKS: usize = 8;
pub const PIXEL_HIDDEN: usize = 32;
pub const CONDITION_HIDDEN: usize = 32;
const SMALL_INIT: f64 = 0.1;

/// Source of the condition injected into the 2D branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionMode {
    /// Caption embedding of the categories visible in the view.
    Text,
    /// Adapter over the pooled frozen pixel embeddings.
    Image2d,
    /// Captioner over the global point-cloud feature.
    Geom3d,
}

impl ConditionMode {
    pub const ALL: [ConditionMode; 3] = [ConditionMode::Text, ConditionMode::Image2d, ConditionMode::Geom3d];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionMode::Text => "text",
            ConditionMode::Image2d => "image2d",
            ConditionMode::Geom3d => "geom3d",
        }
    }
}

impl fmt::Display for ConditionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(ConditionMode::Text),
            "image2d" | "2d" => Ok(ConditionMode::Image2d),
            "geom3d" | "3d" => Ok(ConditionMode::Geom3d),
            other => Err(Error::Mode(format!("unknown condition mode `{other}`"))),
        }
    }
}

fn small_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| SMALL_INIT * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::new(rows, cols, data).expect("finite init")
}

/// Per-point encoder input: room-centered positions followed by attributes.
pub fn point_inputs(scene: &Scene) -> Matrix {
    let n = scene.n_points();
    let a = scene.attributes.cols();
    let mut out = Matrix::zeros(n, 3 + a);
    for i in 0..n {
        let row = out.row_mut(i);
        let p = scene.positions.row(i);
        for k in 0..3 {
            row[k] = p[k] / ROOM_SIZE[2] - ROOM_SIZE[k] / (2.0 * ROOM_SIZE[2]);
        }
        row[3..].copy_from_slice(scene.attributes.row(i));
    }
    out
}

/// Point-wise MLP `in → C_g → C_g → C`; the global feature is the mean of
/// the second hidden layer over all points.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder3D {
    pub mlp: Mlp,
}

/// Forward pass of [`Encoder3D`] with the activations needed for backward.
#[derive(Debug, Clone)]
pub struct Encoded3D {
    /// `N × C`
    pub features: Matrix,
    /// `1 × C_g`
    pub global: Matrix,
    trace: MlpTrace,
}

impl Encoder3D {
    pub fn init<R: Rng + ?Sized>(input_dim: usize, global_dim: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::init(&[input_dim, global_dim, global_dim, dim], rng),
        }
    }

    pub fn zeros(input_dim: usize, global_dim: usize, dim: usize) -> Self {
        Self {
            mlp: Mlp::zeros(&[input_dim, global_dim, global_dim, dim]),
        }
    }

    pub fn global_dim(&self) -> usize {
        self.mlp.layers[1].output_dim()
    }

    pub fn forward(&self, scene: &Scene) -> Result<Encoded3D> {
        let trace = self.mlp.forward_trace(&point_inputs(scene))?;
        let global = trace.hidden(1).mean_rows()?;
        Ok(Encoded3D {
            features: trace.output.clone(),
            global,
            trace,
        })
    }

    /// Parameter gradients given upstream gradients for the per-point
    /// features and, optionally, the global feature.
    pub fn backward(&self, enc: &Encoded3D, d_features: &Matrix, d_global: Option<&Matrix>) -> Result<Mlp> {
        let hidden = match d_global {
            Some(g) => {
                let n = enc.features.rows();
                let mut spread = Matrix::zeros(n, g.cols());
                let share = g.scale(1.0 / n as f64);
                for r in 0..n {
                    spread.row_mut(r).copy_from_slice(share.row(0));
                }
                vec![None, Some(spread)]
            }
            None => vec![],
        };
        Ok(self.mlp.backward(&enc.trace, d_features, &hidden)?.1)
    }
}

/// Per-point features `F₃d` and global feature `f₃d`.
pub fn encode_3d(scene: &Scene, enc: &Encoder3D) -> Result<(Matrix, Matrix)> {
    let e = enc.forward(scene)?;
    Ok((e.features, e.global))
}

/// Condition network `in → 32 → C_cond`, used both as the point-cloud
/// captioner and as the pooled-image adapter.
pub type Captioner3D = Mlp;

pub fn init_condition_net<R: Rng + ?Sized>(input_dim: usize, cond_dim: usize, rng: &mut R) -> Mlp {
    Mlp::init(&[input_dim, CONDITION_HIDDEN, cond_dim], rng)
}

/// Unit caption embedding of the categories visible in the view; zero when
/// nothing is visible.
pub fn text_condition(view: &RenderedView, table: &CategoryTable) -> Result<Matrix> {
    let present = view.categories_present(table.n_categories());
    if present.is_empty() {
        return Ok(Matrix::zeros(1, table.dim()));
    }
    table.caption_embedding(&present)
}

/// Mean frozen pixel embedding over non-VOID pixels; zero when nothing is visible.
pub fn pooled_pixel_embedding(view: &RenderedView, table: &CategoryTable) -> Matrix {
    let pixels = view.nonvoid_pixels();
    if pixels.is_empty() {
        return Matrix::zeros(1, table.dim());
    }
    oracle_pixel_embeddings(view, table)
        .select_rows(&pixels)
        .mean_rows()
        .expect("non-empty")
}

/// Forward noising schedule with `α_t = 1 − β_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(10, 1e-4, 0.02).expect("valid default schedule")
    }
}

impl NoiseSchedule {
    /// Betas spaced linearly from `beta_start` to `beta_end`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("noise schedule needs at least one step".into()));
        }
        let alphas = (0..steps)
            .map(|k| {
                let f = if steps == 1 { 0.0 } else { k as f64 / (steps - 1) as f64 };
                1.0 - (beta_start + f * (beta_end - beta_start))
            })
            .collect();
        Self::from_alphas(alphas)
    }

    /// Each alpha must lie in `(0, 1]`.
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Config("noise schedule needs at least one step".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(Error::Config(format!("alpha {a} outside (0, 1]")));
        }
        let mut acc = 1.0;
        let alpha_bars = alphas
            .iter()
            .map(|a| {
                acc *= a;
                acc
            })
            .collect();
        Ok(Self { alphas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `ᾱ_t` for `1 ≤ t ≤ T`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps() {
            return Err(Error::StepOutOfRange { t, max: self.steps() });
        }
        Ok(self.alpha_bars[t - 1])
    }

    /// Uniform step in `[1, T]`.
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(1..=self.steps())
    }

    /// `√ᾱ_t·x + √(1−ᾱ_t)·ε` for a given `ε`.
    pub fn apply(&self, x: &Matrix, t: usize, eps: &Matrix) -> Result<Matrix> {
        let ab = self.alpha_bar(t)?;
        if x.shape() != eps.shape() {
            return Err(dim_mismatch(format!("noise {:?} for input {:?}", eps.shape(), x.shape())));
        }
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        let data = x.data().iter().zip(eps.data()).map(|(x, e)| a * x + b * e).collect();
        Matrix::new(x.rows(), x.cols(), data)
    }
}

/// Standard normal matrix.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::new(rows, cols, data).expect("finite normals")
}

/// Draws `ε` and applies the noising step at `t`.
pub fn noisy_sample<R: Rng + ?Sized>(x: &Matrix, t: usize, sched: &NoiseSchedule, rng: &mut R) -> Result<Matrix> {
    sched.alpha_bar(t)?;
    let eps = standard_normal(x.rows(), x.cols(), rng);
    sched.apply(x, t, &eps)
}

/// Dense per-pixel features stored for non-VOID pixels only.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    /// Raster indices of the stored pixels, ascending.
    pub pixels: Vec<usize>,
    /// One row per entry of `pixels`.
    pub features: Matrix,
}

impl FeatureMap {
    /// `(H·W) × C` with zero rows at VOID pixels.
    pub fn dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.height * self.width, self.features.cols());
        for (k, &p) in self.pixels.iter().enumerate() {
            out.row_mut(p).copy_from_slice(self.features.row(k));
        }
        out
    }
}

/// Conditioned per-pixel feature extractor and query-based mask generator.
///
/// Pixel features are `h ⊙ (1 + cond·W_γ) + cond·W_β` with `h` a per-pixel
/// MLP of the noised appearance, instance-normalized over the view's pixels
/// (per channel, as in the adaptive group norm of a denoising UNet). Query `i` is `Q_i` plus its slice of
/// `cond·W_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHead {
    pub pixel_mlp: Mlp,
    /// `C_cond × C`
    pub w_gamma: Matrix,
    /// `C_cond × C`
    pub w_beta: Matrix,
    /// `M × C`
    pub queries: Matrix,
    /// `C_cond × (M·C)`
    pub w_query: Matrix,
}

/// Activations of one view through [`MaskHead::forward_view`].
#[derive(Debug, Clone)]
pub struct View2dForward {
    pub features: FeatureMap,
    pub masks: MaskSet,
    pixel_trace: MlpTrace,
    norm: InstanceNorm,
    gamma: Matrix,
    decoder: QueryDecoder,
    out_norms: Vec<f64>,
}

impl MaskHead {
    pub fn init<R: Rng + ?Sized>(
        appearance_dim: usize,
        dim: usize,
        cond_dim: usize,
        n_masks: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            pixel_mlp: Mlp::init(&[appearance_dim, PIXEL_HIDDEN, dim], rng),
            w_gamma: small_normal(cond_dim, dim, rng),
            w_beta: small_normal(cond_dim, dim, rng),
            queries: small_normal(n_masks, dim, rng),
            w_query: small_normal(cond_dim, n_masks * dim, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            pixel_mlp: self.pixel_mlp.zeros_like(),
            w_gamma: Matrix::zeros(self.w_gamma.rows(), self.w_gamma.cols()),
            w_beta: Matrix::zeros(self.w_beta.rows(), self.w_beta.cols()),
            queries: Matrix::zeros(self.queries.rows(), self.queries.cols()),
            w_query: Matrix::zeros(self.w_query.rows(), self.w_query.cols()),
        }
    }

    pub fn n_masks(&self) -> usize {
        self.queries.rows()
    }

    pub fn dim(&self) -> usize {
        self.queries.cols()
    }

    pub fn cond_dim(&self) -> usize {
        self.w_gamma.rows()
    }

    fn check_condition(&self, cond: &Matrix) -> Result<()> {
        if cond.shape() != (1, self.cond_dim()) {
            return Err(dim_mismatch(format!(
                "condition {:?}, expected (1, {})",
                cond.shape(),
                self.cond_dim()
            )));
        }
        Ok(())
    }

    /// `M × C` queries after adding the condition bias.
    pub fn conditioned_queries(&self, cond: &Matrix) -> Result<Matrix> {
        self.check_condition(cond)?;
        let bias = cond.matmul(&self.w_query)?;
        let mut q = self.queries.clone();
        for (v, b) in q.data_mut().iter_mut().zip(bias.data()) {
            *v += b;
        }
        Ok(q)
    }

    /// Modulated features for already-noised appearance rows.
    pub fn pixel_features(&self, noisy: &Matrix, cond: &Matrix) -> Result<Matrix> {
        Ok(self.pixel_forward(noisy, cond)?.0)
    }

    fn pixel_forward(&self, noisy: &Matrix, cond: &Matrix) -> Result<(Matrix, MlpTrace, InstanceNorm, Matrix)> {
        self.check_condition(cond)?;
        let trace = self.pixel_mlp.forward_trace(noisy)?;
        let norm = InstanceNorm::forward(&trace.output);
        let gamma = cond.matmul(&self.w_gamma)?;
        let beta = cond.matmul(&self.w_beta)?;
        let mut f = norm.output.clone();
        for r in 0..f.rows() {
            for ((v, g), b) in f.row_mut(r).iter_mut().zip(gamma.data()).zip(beta.data()) {
                *v = *v * (1.0 + g) + b;
            }
        }
        Ok((f, trace, norm, gamma))
    }

    /// Full 2D pass for one view: features, exclusive masks and embeddings.
    pub fn forward_view(
        &self,
        noisy: &Matrix,
        pixels: Vec<usize>,
        height: usize,
        width: usize,
        cond: &Matrix,
    ) -> Result<View2dForward> {
        if noisy.rows() != pixels.len() {
            return Err(dim_mismatch(format!(
                "{} noised rows for {} pixels",
                noisy.rows(),
                pixels.len()
            )));
        }
        let (f, pixel_trace, norm, gamma) = self.pixel_forward(noisy, cond)?;
        let q = self.conditioned_queries(cond)?;
        let decoder = QueryDecoder::compute(&f, &q)?;
        let out_norms = row_norms(&decoder.output);
        let embeddings = row_normalize(&decoder.output)?;
        let mut assignment = vec![None; height * width];
        for (&p, &m) in pixels.iter().zip(&decoder.owner) {
            assignment[p] = Some(m);
        }
        Ok(View2dForward {
            masks: MaskSet::new(height, width, assignment, embeddings)?,
            features: FeatureMap {
                height,
                width,
                pixels,
                features: f,
            },
            pixel_trace,
            norm,
            gamma,
            decoder,
            out_norms,
        })
    }

    /// Gradients of the head parameters and of the condition, given the
    /// upstream gradient of the unit mask embeddings and, optionally, of the
    /// pixel features.
    pub fn backward_view(
        &self,
        fwd: &View2dForward,
        cond: &Matrix,
        d_embeddings: &Matrix,
        d_features: Option<&Matrix>,
    ) -> Result<(MaskHead, Matrix)> {
        let c = self.dim();
        let d_out = row_normalize_backward(fwd.masks.embeddings(), &fwd.out_norms, d_embeddings);

        let f = &fwd.features.features;
        let mut df = match d_features {
            Some(d) => d.clone(),
            None => Matrix::zeros(f.rows(), c),
        };
        let d_queries = fwd.decoder.backward(f, &d_out, &mut df)?;

        let h = &fwd.norm.output;
        let mut dh = df.clone();
        let mut d_gamma = Matrix::zeros(1, c);
        let d_beta = df.sum_rows();
        for r in 0..df.rows() {
            for j in 0..c {
                d_gamma.data_mut()[j] += df[(r, j)] * h[(r, j)];
                dh[(r, j)] *= 1.0 + fwd.gamma.data()[j];
            }
        }
        let dh = fwd.norm.backward(&dh);
        let (_, pixel_grads) = self.pixel_mlp.backward(&fwd.pixel_trace, &dh, &[])?;

        let d_query_flat = Matrix::new(1, d_queries.data().len(), d_queries.data().to_vec())?;
        let grads = MaskHead {
            pixel_mlp: pixel_grads,
            w_gamma: cond.matmul_tn(&d_gamma)?,
            w_beta: cond.matmul_tn(&d_beta)?,
            queries: d_queries,
            w_query: cond.matmul_tn(&d_query_flat)?,
        };
        let mut d_cond = d_gamma.matmul_nt(&self.w_gamma)?;
        d_cond.add_scaled(1.0, &d_beta.matmul_nt(&self.w_beta)?)?;
        d_cond.add_scaled(1.0, &d_query_flat.matmul_nt(&self.w_query)?)?;
        Ok((grads, d_cond))
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &MaskHead) -> Result<()> {
        self.pixel_mlp.add_scaled(alpha, &other.pixel_mlp)?;
        self.w_gamma.add_scaled(alpha, &other.w_gamma)?;
        self.w_beta.add_scaled(alpha, &other.w_beta)?;
        self.queries.add_scaled(alpha, &other.queries)?;
        self.w_query.add_scaled(alpha, &other.w_query)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Matrix)> {
        let mut out = self.pixel_mlp.named_params(&format!("{prefix}.pixel_mlp"));
        out.push((format!("{prefix}.w_gamma"), &self.w_gamma));
        out.push((format!("{prefix}.w_beta"), &self.w_beta));
        out.push((format!("{prefix}.queries"), &self.queries));
        out.push((format!("{prefix}.w_query"), &self.w_query));
        out
    }

    pub fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Matrix)> {
        let mut out = self.pixel_mlp.named_params_mut(&format!("{prefix}.pixel_mlp"));
        out.push((format!("{prefix}.w_gamma"), &mut self.w_gamma));
        out.push((format!("{prefix}.w_beta"), &mut self.w_beta));
        out.push((format!("{prefix}.queries"), &mut self.queries));
        out.push((format!("{prefix}.w_query"), &mut self.w_query));
        out
    }
}

const NORM_EPS: f64 = 1e-5;

/// Per-column standardization over the rows.
#[derive(Debug, Clone)]
struct InstanceNorm {
    output: Matrix,
    inv_std: Vec<f64>,
}

impl InstanceNorm {
    fn forward(x: &Matrix) -> Self {
        let (n, c) = x.shape();
        let mut output = x.clone();
        let mut inv_std = vec![0.0; c];
        if n == 0 {
            return Self { output, inv_std };
        }
        let mean: Vec<f64> = x.sum_rows().data().iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; c];
        for r in 0..n {
            for ((v, x), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        for (s, v) in inv_std.iter_mut().zip(&var) {
            *s = 1.0 / (v / n as f64 + NORM_EPS).sqrt();
        }
        for r in 0..n {
            for ((o, m), s) in output.row_mut(r).iter_mut().zip(&mean).zip(&inv_std) {
                *o = (*o - m) * s;
            }
        }
        Self { output, inv_std }
    }

    fn backward(&self, dy: &Matrix) -> Matrix {
        let (n, c) = dy.shape();
        if n == 0 {
            return dy.clone();
        }
        let mut mean_dy = vec![0.0; c];
        let mut mean_dy_y = vec![0.0; c];
        for r in 0..n {
            for (j, (d, y)) in dy.row(r).iter().zip(self.output.row(r)).enumerate() {
                mean_dy[j] += d / n as f64;
                mean_dy_y[j] += d * y / n as f64;
            }
        }
        let mut dx = dy.clone();
        for r in 0..n {
            let y = self.output.row(r);
            for (j, v) in dx.row_mut(r).iter_mut().enumerate() {
                *v = self.inv_std[j] * (*v - mean_dy[j] - y[j] * mean_dy_y[j]);
            }
        }
        dx
    }
}

/// Read-out rounds of the query decoder.
pub const DECODER_LAYERS: usize = 3;

/// One read-out round: `o_i = Q'_i + Σ_p a_pi f_p / Σ_p a_pi` with `a_p` the
/// softmax of `f_p·qᵀ` over the queries, `q` being the previous round's
/// output (`Q'` in the first round).
#[derive(Debug, Clone)]
struct Readout {
    input: Matrix,
    /// `P × M` softmax weights.
    soft: Matrix,
    /// Column sums of `soft`.
    mass: Vec<f64>,
    /// `M × C` weighted means.
    pooled: Matrix,
}

impl Readout {
    fn compute(f: &Matrix, input: Matrix) -> Result<Self> {
        let soft = softmax_rows(&f.matmul_nt(&input)?)?;
        let mass = soft.sum_rows().data().to_vec();
        let mut pooled = soft.matmul_tn(f)?;
        for (i, &s) in mass.iter().enumerate() {
            if s > 0.0 {
                pooled.row_mut(i).iter_mut().for_each(|v| *v /= s);
            }
        }
        Ok(Self {
            input,
            soft,
            mass,
            pooled,
        })
    }

    /// Adds the pixel-feature gradient into `df` and returns the gradient of
    /// the round's input queries through the softmax weights.
    fn backward(&self, f: &Matrix, d_pooled: &Matrix, df: &mut Matrix) -> Result<Matrix> {
        let (p, m) = self.soft.shape();
        let inv: Vec<f64> = self.mass.iter().map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 }).collect();
        let mut weights = self.soft.clone();
        for r in 0..p {
            weights.row_mut(r).iter_mut().zip(&inv).for_each(|(w, i)| *w *= i);
        }
        df.add_scaled(1.0, &weights.matmul(d_pooled)?)?;

        // d a_pi = (f_p − pooled_i)·d_pooled_i / mass_i
        let centre: Vec<f64> = (0..m).map(|i| dot(self.pooled.row(i), d_pooled.row(i))).collect();
        let mut d_logits = f.matmul_nt(d_pooled)?;
        for r in 0..p {
            let a = self.soft.row(r);
            let row = d_logits.row_mut(r);
            for i in 0..m {
                row[i] = (row[i] - centre[i]) * inv[i];
            }
            let mean: f64 = a.iter().zip(row.iter()).map(|(x, y)| x * y).sum();
            for i in 0..m {
                row[i] = a[i] * (row[i] - mean);
            }
        }
        df.add_scaled(1.0, &d_logits.matmul(&self.input)?)?;
        d_logits.matmul_tn(f)
    }
}

/// Query decoder over the pixel features.
///
/// [`DECODER_LAYERS`] read-out rounds refine the queries. The mask logits are
/// `f·oᵀ` with `o` the final output and each pixel goes to its argmax query
/// (ties to the lower index), so the mask embeddings and the mask logits come
/// from the same output vectors.
#[derive(Debug, Clone)]
struct QueryDecoder {
    rounds: Vec<Readout>,
    output: Matrix,
    owner: Vec<usize>,
}

impl QueryDecoder {
    fn compute(f: &Matrix, q: &Matrix) -> Result<Self> {
        let mut rounds = Vec::with_capacity(DECODER_LAYERS);
        let mut output = q.clone();
        for _ in 0..DECODER_LAYERS {
            let round = Readout::compute(f, output)?;
            output = q.clone();
            output.add_scaled(1.0, &round.pooled)?;
            rounds.push(round);
        }
        let logits = f.matmul_nt(&output)?;
        let owner = (0..f.rows())
            .map(|r| {
                let row = logits.row(r);
                (1..q.rows()).fold(0, |best, i| if row[i] > row[best] { i } else { best })
            })
            .collect();
        Ok(Self { rounds, output, owner })
    }

    /// Adds the pixel-feature gradient into `df` and returns the gradient of
    /// the conditioned queries.
    fn backward(&self, f: &Matrix, d_output: &Matrix, df: &mut Matrix) -> Result<Matrix> {
        let mut dq = Matrix::zeros(d_output.rows(), d_output.cols());
        let mut d_out = d_output.clone();
        for round in self.rounds.iter().rev() {
            dq.add_scaled(1.0, &d_out)?;
            d_out = round.backward(f, &d_out, df)?;
        }
        dq.add_scaled(1.0, &d_out)?;
        Ok(dq)
    }
}

/// Noised, conditioned per-pixel features of a view.
pub fn conditioned_2d_features<R: Rng + ?Sized>(
    view: &RenderedView,
    condition: &Matrix,
    head: &MaskHead,
    sched: &NoiseSchedule,
    t: usize,
    rng: &mut R,
) -> Result<FeatureMap> {
    let pixels = view.nonvoid_pixels();
    let noisy = noisy_sample(&view.appearance.select_rows(&pixels), t, sched, rng)?;
    Ok(FeatureMap {
        height: view.height(),
        width: view.width(),
        features: head.pixel_features(&noisy, condition)?,
        pixels,
    })
}

/// Exclusive masks and unit mask embeddings from pixel features.
pub fn generate_masks(f: &FeatureMap, head: &MaskHead, condition: &Matrix) -> Result<MaskSet> {
    f.features.ensure_finite("pixel features")?;
    let q = head.conditioned_queries(condition)?;
    let decoder = QueryDecoder::compute(&f.features, &q)?;
    let mut assignment = vec![None; f.height * f.width];
    for (&p, &m) in f.pixels.iter().zip(&decoder.owner) {
        assignment[p] = Some(m);
    }
    MaskSet::new(f.height, f.width, assignment, row_normalize(&decoder.output)?)
}
