//! Training and inference wiring: run configuration, the trained model, the
//! 3D–2D fusion block, final prediction, training loop, evaluation and
//! checkpoints.

mod checkpoint;
mod evaluate;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedspace::{build_category_table, CategoryTable, DEFAULT_EMBED_DIM};
use crate::encoders::{
    init_condition_net, ConditionMode, Encoder3D, MaskHead, NoiseSchedule, DEFAULT_COND_DIM,
    DEFAULT_GLOBAL_DIM, DEFAULT_N_MASKS,
};
use crate::error::{dim_mismatch, Error, Result};
use crate::eval::{RunMetadata, RunReport};
use crate::geometry::Correspondence;
use crate::losses::{
    fuse_inference_logits, modulate_scores, restricted_softmax, argmax_rows, LossWeights, TAU_INIT,
};
use crate::numeric::{cosine_sim, rng_for, row_normalize, softmax_rows, Dense, Matrix, Mlp};
use crate::scenegen::{CategoryPartition, SceneParams, APPEARANCE_DIM, CATEGORY_NAMES};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use evaluate::{evaluate, evaluate_prepared, predict_scene, EvalOutcome, ScenePredictions};
pub use train::{
    generate_run_scenes, prepare_scene, scene_seed, step_gradients, train, train_with_scenes, PreparedScene,
    PreparedView, StepLosses, StepNoise, StepResult, TrainOutcome, TrainState,
};

pub const BINARY_HIDDEN: usize = 16;
/// Scale of the random perturbation added to the pass-through fusion init.
const FUSION_INIT_NOISE: f64 = 0.05;

/// Every knob of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub n_scenes: usize,
    pub n_val_scenes: usize,
    pub n_epochs: usize,
    pub learning_rate: f64,
    /// Views of one scene per step; values above the view count mean all.
    pub batch_views: usize,
    /// Global gradient-norm cap per step; 0 disables it.
    pub max_grad_norm: f64,
    pub warmup_fraction: f64,
    pub condition_mode: ConditionMode,
    pub mask_loss_enabled: bool,
    pub lambda: f64,
    pub tau_init: f64,
    pub n_masks: usize,
    pub dim: usize,
    pub global_dim: usize,
    pub cond_dim: usize,
    pub noise_steps: usize,
    /// Seed of the frozen category embedding table.
    pub embedding_seed: u64,
    pub weights: LossWeights,
    pub scene: SceneParams,
    pub partition: CategoryPartition,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            n_scenes: 24,
            n_val_scenes: 6,
            n_epochs: 60,
            learning_rate: 0.05,
            max_grad_norm: 5.0,
            batch_views: 4,
            warmup_fraction: 1.0 / 3.0,
            condition_mode: ConditionMode::Geom3d,
            mask_loss_enabled: true,
            lambda: 0.65,
            tau_init: TAU_INIT,
            n_masks: DEFAULT_N_MASKS,
            dim: DEFAULT_EMBED_DIM,
            global_dim: DEFAULT_GLOBAL_DIM,
            cond_dim: DEFAULT_COND_DIM,
            noise_steps: 10,
            embedding_seed: 0,
            weights: LossWeights::default(),
            scene: SceneParams::default(),
            partition: CategoryPartition::default_b8_n4(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_scenes", self.n_scenes),
            ("n_val_scenes", self.n_val_scenes),
            ("n_epochs", self.n_epochs),
            ("n_masks", self.n_masks),
            ("batch_views", self.batch_views),
            ("dim", self.dim),
            ("global_dim", self.global_dim),
            ("cond_dim", self.cond_dim),
            ("noise_steps", self.noise_steps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate {} must be finite and ≥ 0", self.learning_rate)));
        }
        if !(self.max_grad_norm.is_finite() && self.max_grad_norm >= 0.0) {
            return Err(Error::Config(format!("max_grad_norm {} must be finite and ≥ 0", self.max_grad_norm)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.tau_init > 0.0 && self.tau_init.is_finite()) {
            return Err(Error::Config(format!("tau_init {} must be positive", self.tau_init)));
        }
        if self.condition_mode == ConditionMode::Text && self.cond_dim != self.dim {
            return Err(Error::Config(format!(
                "text conditioning needs cond_dim = dim, got {} and {}",
                self.cond_dim, self.dim
            )));
        }
        self.weights.validate()?;
        let canonical = CategoryPartition::new(self.partition.base_ids.clone(), self.partition.novel_ids.clone())?;
        if canonical != self.partition {
            return Err(Error::Config("partition ids must be sorted and unique".into()));
        }
        self.partition.validate(self.scene.n_categories)?;
        if self.scene.n_categories > self.dim {
            return Err(Error::Config(format!(
                "{} categories need dim ≥ {}",
                self.scene.n_categories, self.scene.n_categories
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn category_names(&self) -> Vec<&'static str> {
        CATEGORY_NAMES[..self.scene.n_categories].to_vec()
    }

    pub fn category_table(&self) -> Result<CategoryTable> {
        build_category_table(&self.category_names(), self.dim, self.embedding_seed)
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.noise_steps, 1e-4, 0.02)
    }
}

/// All trainable state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub encoder: Encoder3D,
    pub captioner: Mlp,
    pub image_adapter: Mlp,
    pub head: MaskHead,
    /// `2C → 2C → C`
    pub fusion: Mlp,
    /// `C → 16 → 1`
    pub binary_head: Mlp,
    pub tau: f64,
}

/// Fusion MLP that copies the first `C` inputs: `x ↦ relu(x) − relu(−x)`.
pub fn pass_through_fusion(dim: usize) -> Mlp {
    let mut first = Dense::zeros(2 * dim, 2 * dim);
    let mut second = Dense::zeros(2 * dim, dim);
    for k in 0..dim {
        first.weight[(k, k)] = 1.0;
        first.weight[(k, dim + k)] = -1.0;
        second.weight[(k, k)] = 1.0;
        second.weight[(dim + k, k)] = -1.0;
    }
    Mlp {
        layers: vec![first, second],
    }
}

impl TrainedModel {
    pub fn init(cfg: &RunConfig) -> Self {
        let mut rng = rng_for(cfg.master_seed, 0x1417);
        let c = cfg.dim;
        let mut fusion = pass_through_fusion(c);
        for layer in &mut fusion.layers {
            for v in layer.weight.data_mut() {
                *v += FUSION_INIT_NOISE * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        Self {
            encoder: Encoder3D::init(3 + APPEARANCE_DIM, cfg.global_dim, c, &mut rng),
            captioner: init_condition_net(cfg.global_dim, cfg.cond_dim, &mut rng),
            image_adapter: init_condition_net(c, cfg.cond_dim, &mut rng),
            head: MaskHead::init(APPEARANCE_DIM, c, cfg.cond_dim, cfg.n_masks, &mut rng),
            fusion,
            binary_head: Mlp::init(&[c, BINARY_HIDDEN, 1], &mut rng),
            tau: cfg.tau_init,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: Encoder3D {
                mlp: self.encoder.mlp.zeros_like(),
            },
            captioner: self.captioner.zeros_like(),
            image_adapter: self.image_adapter.zeros_like(),
            head: self.head.zeros_like(),
            fusion: self.fusion.zeros_like(),
            binary_head: self.binary_head.zeros_like(),
            tau: 0.0,
        }
    }

    /// Named parameter arrays in a fixed order; `tau` is a `1 × 1` array.
    pub fn named_params(&self) -> Vec<(String, Matrix)> {
        let mut out: Vec<(String, Matrix)> = Vec::new();
        let mut push = |v: Vec<(String, &Matrix)>| out.extend(v.into_iter().map(|(n, m)| (n, m.clone())));
        push(self.encoder.mlp.named_params("encoder"));
        push(self.captioner.named_params("captioner"));
        push(self.image_adapter.named_params("image_adapter"));
        push(self.head.named_params("head"));
        push(self.fusion.named_params("fusion"));
        push(self.binary_head.named_params("binary_head"));
        out.push(("tau".into(), Matrix::filled(1, 1, self.tau)));
        out
    }

    /// Mutable views of every array except `tau`, same order as [`Self::named_params`].
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = self.encoder.mlp.named_params_mut("encoder");
        out.extend(self.captioner.named_params_mut("captioner"));
        out.extend(self.image_adapter.named_params_mut("image_adapter"));
        out.extend(self.head.named_params_mut("head"));
        out.extend(self.fusion.named_params_mut("fusion"));
        out.extend(self.binary_head.named_params_mut("binary_head"));
        out
    }

    /// `self += alpha · other` for every parameter including `tau`.
    pub fn add_scaled(&mut self, alpha: f64, other: &TrainedModel) -> Result<()> {
        self.encoder.mlp.add_scaled(alpha, &other.encoder.mlp)?;
        self.captioner.add_scaled(alpha, &other.captioner)?;
        self.image_adapter.add_scaled(alpha, &other.image_adapter)?;
        self.head.add_scaled(alpha, &other.head)?;
        self.fusion.add_scaled(alpha, &other.fusion)?;
        self.binary_head.add_scaled(alpha, &other.binary_head)?;
        self.tau += alpha * other.tau;
        Ok(())
    }

    /// Every array except `tau`.
    pub fn array_refs(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = Vec::new();
        for (_, m) in self
            .encoder
            .mlp
            .named_params("")
            .into_iter()
            .chain(self.captioner.named_params(""))
            .chain(self.image_adapter.named_params(""))
            .chain(self.head.named_params(""))
            .chain(self.fusion.named_params(""))
            .chain(self.binary_head.named_params(""))
        {
            out.push(m);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tau.is_finite() && self.named_params().iter().all(|(_, m)| m.is_finite())
    }

    /// Flattened parameters, for comparisons between models.
    pub fn flat(&self) -> Vec<f64> {
        self.named_params().into_iter().flat_map(|(_, m)| m.into_data()).collect()
    }
}

/// Trains on the run's training scenes, then evaluates on its validation
/// scenes. `created` is copied into the report metadata verbatim.
pub fn run_experiment(cfg: &RunConfig, created: Option<String>) -> Result<(TrainedModel, RunReport)> {
    cfg.validate()?;
    let table = cfg.category_table()?;
    let (train_scenes, val_scenes) = generate_run_scenes(cfg, &table)?;
    let out = train_with_scenes(cfg, &train_scenes, &val_scenes, &table)?;
    let ev = evaluate_prepared(&out.model, cfg, &val_scenes, &table)?;
    let report = RunReport {
        meta: RunMetadata {
            seed: cfg.master_seed,
            config_hash: cfg.hash(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            condition_mode: cfg.condition_mode.to_string(),
            mask_loss_enabled: cfg.mask_loss_enabled,
            created,
        },
        category_names: table.names().to_vec(),
        fused: ev.fused,
        branch_3d: ev.branch_3d,
        branch_2d: ev.branch_2d,
        history: out.history,
    };
    Ok((out.model, report))
}

/// `F_fuse`: corresponded rows go through the fusion MLP over
/// `[F₃d | F₂d]`; the rest are copied from `F₃d`.
pub fn fuse_features(f3d: &Matrix, f2d: &Matrix, corr: &Correspondence, fusion: &Mlp) -> Result<Matrix> {
    if f2d.rows() != corr.n_prime() || f2d.cols() != f3d.cols() {
        return Err(dim_mismatch(format!(
            "2D features {:?} for {} entries of {}-dim features",
            f2d.shape(),
            corr.n_prime(),
            f3d.cols()
        )));
    }
    let mut out = f3d.clone();
    if corr.is_empty() {
        return Ok(out);
    }
    let idx = corr.point_indices();
    let fused = fusion.forward(&f3d.select_rows(&idx).hcat(f2d)?)?;
    for (k, &p) in idx.iter().enumerate() {
        out.row_mut(p).copy_from_slice(fused.row(k));
    }
    Ok(out)
}

/// Mask-level evidence for the rows passed to [`predict_labels`].
#[derive(Debug, Clone, Copy)]
pub struct MaskEvidence<'a> {
    /// `M × C` teacher embeddings.
    pub g_clip: &'a Matrix,
    pub valid: &'a [bool],
    /// Mask of each feature row.
    pub row_masks: &'a [Option<usize>],
}

/// Category per row of `features`.
///
/// Cosine logits over the table are split into base-only and novel-only
/// softmaxes, blended by the binary score, then, for rows whose mask has a
/// valid teacher embedding, fused with that mask's teacher probabilities.
/// Ties go to the lowest category id.
pub fn predict_labels(
    features: &Matrix,
    text: &Matrix,
    s_b: &[f64],
    lambda: f64,
    tau: f64,
    partition: &CategoryPartition,
    evidence: Option<MaskEvidence<'_>>,
) -> Result<Vec<usize>> {
    let s = modulated_scores(features, text, s_b, tau, partition)?;
    let Some(ev) = evidence else {
        return Ok(argmax_rows(&s));
    };
    if ev.row_masks.len() != features.rows() {
        return Err(dim_mismatch(format!(
            "{} mask ids for {} rows",
            ev.row_masks.len(),
            features.rows()
        )));
    }
    let p_aux = teacher_probabilities(ev.g_clip, ev.valid, text, tau)?;
    let mut out = argmax_rows(&s);
    for (r, m) in ev.row_masks.iter().enumerate() {
        if let Some(i) = *m {
            if ev.valid[i] {
                let p = Matrix::row_vector(s.row(r))?;
                let q = Matrix::row_vector(p_aux.row(i))?;
                out[r] = argmax_rows(&fuse_inference_logits(&p, &q, lambda)?)[0];
            }
        }
    }
    Ok(out)
}

/// Modulated semantic scores `s` for each row.
pub fn modulated_scores(
    features: &Matrix,
    text: &Matrix,
    s_b: &[f64],
    tau: f64,
    partition: &CategoryPartition,
) -> Result<Matrix> {
    if s_b.len() != features.rows() {
        return Err(dim_mismatch(format!(
            "{} binary scores for {} rows",
            s_b.len(),
            features.rows()
        )));
    }
    let logits = cosine_sim(&row_normalize(features)?, text)?.scale(1.0 / tau);
    let s_base = restricted_softmax(&logits, &partition.base_ids);
    let s_novel = restricted_softmax(&logits, &partition.novel_ids);
    modulate_scores(&s_base, &s_novel, s_b)
}

/// `softmax(cos(G_CLIP, F_text)/τ)`; invalid rows are left zero.
pub fn teacher_probabilities(g_clip: &Matrix, valid: &[bool], text: &Matrix, tau: f64) -> Result<Matrix> {
    let mut out = Matrix::zeros(g_clip.rows(), text.rows());
    for i in (0..g_clip.rows()).filter(|&i| valid[i]) {
        let g = row_normalize(&Matrix::row_vector(g_clip.row(i))?)?;
        let p = softmax_rows(&cosine_sim(&g, text)?.scale(1.0 / tau))?;
        out.row_mut(i).copy_from_slice(p.row(0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_correspondence, Camera};
    use crate::losses::sigmoid;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_for(seed, 3);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn corr_for(n: usize) -> (Matrix, Correspondence) {
        let pts = random(n, 3, 9);
        let mut shifted = pts.clone();
        for r in 0..n {
            shifted[(r, 2)] = 2.0 + pts[(r, 2)];
        }
        let cam = Camera::look_at(
            [0.0; 3],
            [0.0, 0.0, 1.0],
            [0.0, -1.0, 0.0],
            Camera::pinhole_intrinsics(8.0, 7.5, 7.5),
            16,
            16,
        )
        .unwrap();
        let corr = build_correspondence(&shifted, &cam);
        (shifted, corr)
    }

    #[test]
    fn fusion_cases() {
        let (_, corr) = corr_for(60);
        assert!(corr.n_prime() > 10 && corr.n_prime() < 60);
        let f3d = random(60, 4, 1);
        let f2d = random(corr.n_prime(), 4, 2);

        let empty = Correspondence {
            entries: vec![],
            height: 16,
            width: 16,
        };
        let mlp = Mlp::init(&[8, 8, 4], &mut rng_for(1, 1));
        assert_eq!(fuse_features(&f3d, &Matrix::zeros(0, 4), &empty, &mlp).unwrap(), f3d);

        let id = fuse_features(&f3d, &f2d, &corr, &pass_through_fusion(4)).unwrap();
        assert_eq!(id, f3d);

        let fused = fuse_features(&f3d, &f2d, &corr, &mlp).unwrap();
        let entry = corr.entry_of_point(60);
        for p in 0..60 {
            match entry[p] {
                None => assert_eq!(fused.row(p), f3d.row(p)),
                Some(k) => {
                    let mut cat = f3d.row(p).to_vec();
                    cat.extend_from_slice(f2d.row(k));
                    let h: Vec<f64> = (0..8)
                        .map(|j| {
                            let l = &mlp.layers[0];
                            let v: f64 = (0..8).map(|i| cat[i] * l.weight[(i, j)]).sum::<f64>() + l.bias[(0, j)];
                            v.max(0.0)
                        })
                        .collect();
                    for j in 0..4 {
                        let l = &mlp.layers[1];
                        let v: f64 = (0..8).map(|i| h[i] * l.weight[(i, j)]).sum::<f64>() + l.bias[(0, j)];
                        assert!((fused[(p, j)] - v).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_features_predict_truth() {
        let partition = CategoryPartition::new(vec![0, 1, 2], vec![3, 4]).unwrap();
        let table = build_category_table(&["a", "b", "c", "d", "e"], 8, 4).unwrap();
        let labels = [0usize, 3, 1, 4, 2, 3];
        let f = table.embeddings().select_rows(&labels);
        let s_b: Vec<f64> = labels.iter().map(|&l| if partition.is_base(l) { 0.0 } else { 1.0 }).collect();
        let pred = predict_labels(&f, table.embeddings(), &s_b, 1.0, 0.07, &partition, None).unwrap();
        assert_eq!(pred, labels);

        let two = build_category_table_orth();
        let p2 = CategoryPartition::new(vec![0, 1], vec![]).unwrap();
        let pred = predict_labels(&Matrix::from_rows(&[[2.0, 0.0]]).unwrap(), &two, &[0.3], 0.65, 0.5, &p2, None).unwrap();
        assert_eq!(pred, vec![0]);
    }

    fn build_category_table_orth() -> Matrix {
        Matrix::identity(2)
    }

    #[test]
    fn prediction_matches_composed_formula() {
        let partition = CategoryPartition::new(vec![0, 2, 3], vec![1, 4]).unwrap();
        let table = build_category_table(&["a", "b", "c", "d", "e"], 6, 8).unwrap();
        let text = table.embeddings();
        let mut rng = rng_for(2, 2);
        for case in 0..20 {
            let f = random(7, 6, 100 + case);
            let s_b: Vec<f64> = (0..7).map(|_| sigmoid(rng.random_range(-3.0..3.0))).collect();
            let g = random(3, 6, 200 + case);
            let valid = [true, false, true];
            let masks = [Some(0), Some(1), None, Some(2), Some(0), None, Some(2)];
            let (lambda, tau) = (0.65, 0.2);
            let ev = MaskEvidence {
                g_clip: &g,
                valid: &valid,
                row_masks: &masks,
            };
            let got = predict_labels(&f, text, &s_b, lambda, tau, &partition, Some(ev)).unwrap();

            for r in 0..7 {
                let fr = f.row(r);
                let nf = fr.iter().map(|v| v * v).sum::<f64>().sqrt();
                let z: Vec<f64> = (0..5)
                    .map(|c| fr.iter().zip(text.row(c)).map(|(a, b)| a * b).sum::<f64>() / nf / tau)
                    .collect();
                let soft = |cols: &[usize]| {
                    let mut out = [0.0; 5];
                    let m = cols.iter().map(|&c| z[c]).fold(f64::NEG_INFINITY, f64::max);
                    let s: f64 = cols.iter().map(|&c| (z[c] - m).exp()).sum();
                    for &c in cols {
                        out[c] = (z[c] - m).exp() / s;
                    }
                    out
                };
                let (sb, sn) = (soft(&[0, 2, 3]), soft(&[1, 4]));
                let mut s: Vec<f64> = (0..5).map(|c| sb[c] * (1.0 - s_b[r]) + sn[c] * s_b[r]).collect();
                if let Some(i) = masks[r].filter(|&i| valid[i]) {
                    let gr = g.row(i);
                    let ng = gr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let za: Vec<f64> = (0..5)
                        .map(|c| gr.iter().zip(text.row(c)).map(|(a, b)| a * b).sum::<f64>() / ng / tau)
                        .collect();
                    let m = za.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let tot: f64 = za.iter().map(|v| (v - m).exp()).sum();
                    for c in 0..5 {
                        let q = (za[c] - m).exp() / tot;
                        s[c] = s[c].max(1e-12).powf(lambda) * q.max(1e-12).powf(1.0 - lambda);
                    }
                }
                let best = (0..5).fold(0, |b, c| if s[c] > s[b] { c } else { b });
                assert_eq!(got[r], best, "case {case} row {r}");
            }
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.hash().len(), 64);

        let partial = RunConfig::from_toml("n_epochs = 3\n[weights]\nbi = 2.0\n").unwrap();
        assert_eq!(partial.n_epochs, 3);
        assert_eq!(partial.weights.bi, 2.0);
        assert_eq!(partial.weights.seg, 4.0);

        assert!(matches!(RunConfig::from_toml("n_epoch = 3"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("warmup_fraction = 1.0"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("condition_mode = \"audio\"").is_err());
        assert!(RunConfig::from_toml("[partition]\nbase_ids = [0]\nnovel_ids = [1]").is_err());
    }
}
