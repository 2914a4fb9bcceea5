use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::{evaluate_prepared, RunConfig, TrainedModel};
use crate::embedspace::CategoryTable;
use crate::encoders::{pooled_pixel_embedding, standard_normal, text_condition, ConditionMode, NoiseSchedule};
use crate::error::{dim_mismatch, Error, Result};
use crate::eval::EpochRecord;
use crate::geometry::Correspondence;
use crate::losses::{
    binary_loss, clamp_tau, effective_mask_weight, mask_regularization_loss, segmentation_loss, total_loss,
    view_regularization_loss, LossComponents, LossWeights,
};
use crate::maskops::{backproject_masks, mask_pool_3d, mask_pool_3d_backward, pseudo_mask_feature, teacher_mask_embeddings};
use crate::numeric::{mix_seed, rng_for, GradPair, Matrix};
use crate::scenegen::{generate_scene_with, render_with_correspondence, RenderedView, Scene};
use crate::geometry::build_correspondence;

/// Seed of scene `k` in a split (0 = training, 1 = validation).
pub fn scene_seed(master_seed: u64, split: u64, k: usize) -> u64 {
    mix_seed(mix_seed(master_seed, 0x5CE0 + split), k as u64)
}

/// A view with everything that does not depend on trainable weights.
#[derive(Debug, Clone)]
pub struct PreparedView {
    pub view: RenderedView,
    pub corr: Correspondence,
    /// Non-VOID raster pixels, ascending.
    pub pixels: Vec<usize>,
    /// Appearance rows of `pixels`.
    pub appearance: Matrix,
    /// Caption embedding of the visible categories; `None` for an empty view.
    pub target: Option<Matrix>,
    pub text_condition: Matrix,
    pub pooled_pixels: Matrix,
}

#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub scene: Scene,
    pub labels: Vec<usize>,
    /// Points whose label is a base category.
    pub base_mask: Vec<bool>,
    pub views: Vec<PreparedView>,
}

pub fn prepare_scene(scene: Scene, table: &CategoryTable, cfg: &RunConfig) -> Result<PreparedScene> {
    let mut views = Vec::with_capacity(scene.cameras.len());
    for cam in &scene.cameras {
        let corr = build_correspondence(&scene.positions, cam);
        let view = render_with_correspondence(&scene, cam, &corr);
        let pixels = view.nonvoid_pixels();
        let present = view.categories_present(table.n_categories());
        views.push(PreparedView {
            appearance: view.appearance.select_rows(&pixels),
            target: if present.is_empty() {
                None
            } else {
                Some(table.caption_embedding(&present)?)
            },
            text_condition: text_condition(&view, table)?,
            pooled_pixels: pooled_pixel_embedding(&view, table),
            pixels,
            corr,
            view,
        });
    }
    let labels: Vec<usize> = scene.labels.iter().map(|&l| l as usize).collect();
    let base_mask = labels.iter().map(|&l| cfg.partition.is_base(l)).collect();
    Ok(PreparedScene {
        scene,
        labels,
        base_mask,
        views,
    })
}

/// Pre-drawn noising step and noise for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise {
    pub t: usize,
    pub eps: Matrix,
}

impl StepNoise {
    /// One draw per listed view, in order.
    pub fn draw<R: Rng + ?Sized>(
        prep: &PreparedScene,
        views: &[usize],
        sched: &NoiseSchedule,
        rng: &mut R,
    ) -> Vec<StepNoise> {
        views
            .iter()
            .map(|&v| {
                let a = &prep.views[v].appearance;
                StepNoise {
                    t: sched.sample_step(rng),
                    eps: standard_normal(a.rows(), a.cols(), rng),
                }
            })
            .collect()
    }

    /// Fixed evaluation noise: step 1, with `ε` keyed by the scene's point
    /// positions, so a scene read back from disk gets the same draw.
    pub fn for_eval(prep: &PreparedScene) -> Vec<StepNoise> {
        let digest = Sha256::digest(
            prep.scene
                .positions
                .data()
                .iter()
                .flat_map(|v| v.to_le_bytes())
                .collect::<Vec<u8>>(),
        );
        let key = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        prep.views
            .iter()
            .enumerate()
            .map(|(v, view)| StepNoise {
                t: 1,
                eps: standard_normal(
                    view.appearance.rows(),
                    view.appearance.cols(),
                    &mut rng_for(mix_seed(key, 0xE7A1), v as u64),
                ),
            })
            .collect()
    }
}

/// Unweighted component losses of one step, averaged over views.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepLosses {
    pub seg_3d: f64,
    pub seg_2d: f64,
    pub seg_fuse: f64,
    pub mask: f64,
    pub view_3d: f64,
    pub view_2d: f64,
    pub view_fuse: f64,
    pub bi: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    /// Weighted objective.
    pub loss: f64,
    pub grads: TrainedModel,
    pub losses: StepLosses,
}

fn grad_or_zero(g: &mut GradPair, key: &str, rows: usize, cols: usize, scale: f64) -> Matrix {
    match g.grads.remove(key) {
        Some(m) => m.scale(scale),
        None => Matrix::zeros(rows, cols),
    }
}

fn optional(r: Result<GradPair>) -> Result<Option<GradPair>> {
    match r {
        Ok(g) => Ok(Some(g)),
        Err(Error::EmptySupervision | Error::NoValidMasks | Error::EmptyInput(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Objective value and gradients of every parameter for a batch made of
/// some views of one scene. `noise[j]` belongs to `views[j]`. Scene-level
/// terms are counted once; per-view terms are averaged over the views.
pub fn step_gradients(
    model: &TrainedModel,
    cfg: &RunConfig,
    prep: &PreparedScene,
    views: &[usize],
    noise: &[StepNoise],
    table: &CategoryTable,
    epoch: usize,
) -> Result<StepResult> {
    let text = table.embeddings();
    let base_cols = &cfg.partition.base_ids;
    let sched = cfg.noise_schedule()?;
    let weights = LossWeights {
        mask: if cfg.mask_loss_enabled { cfg.weights.mask } else { 0.0 },
        ..cfg.weights
    };
    let mask_active = effective_mask_weight(&weights, epoch, cfg.n_epochs, cfg.warmup_fraction) > 0.0;
    let tau = model.tau;
    let c = cfg.dim;

    let enc = model.encoder.forward(&prep.scene)?;
    let f = &enc.features;
    let n = f.rows();
    let mut grads = model.zeros_like();
    let mut d_f = Matrix::zeros(n, c);
    let mut d_global = Matrix::zeros(1, enc.global.cols());
    let mut losses = StepLosses::default();

    let bi_trace = model.binary_head.forward_trace(f)?;
    let bi = binary_loss(&bi_trace.output, &prep.base_mask)?;
    let seg3 = segmentation_loss(f, text, &prep.labels, tau, &prep.base_mask, base_cols);
    let seg3 = optional(seg3)?;
    losses.bi = bi.value;
    losses.seg_3d = seg3.as_ref().map_or(0.0, |g| g.value);
    let shared_parts = LossComponents {
        seg_3d: seg3,
        bi: Some(bi),
        ..Default::default()
    };
    let mut shared = total_loss(&shared_parts, &weights, epoch, cfg.n_epochs, cfg.warmup_fraction);
    let mut loss = shared.value;
    d_f.add_scaled(1.0, &grad_or_zero(&mut shared, "seg_3d.features", n, c, 1.0))?;
    grads.tau += grad_or_zero(&mut shared, "seg_3d.tau", 1, 1, 1.0).data()[0];
    let d_logits = grad_or_zero(&mut shared, "bi.logits", n, 1, 1.0);
    let (dx, g_bi) = model.binary_head.backward(&bi_trace, &d_logits, &[])?;
    d_f.add_scaled(1.0, &dx)?;
    grads.binary_head = g_bi;

    if noise.len() != views.len() {
        return Err(dim_mismatch(format!("{} noise draws for {} views", noise.len(), views.len())));
    }
    let active: Vec<usize> = (0..views.len()).filter(|&j| !prep.views[views[j]].corr.is_empty()).collect();
    let share = if active.is_empty() { 0.0 } else { 1.0 / active.len() as f64 };
    for &j in &active {
        let v = views[j];
        let pv = &prep.views[v];
        let (cond, cond_trace) = match cfg.condition_mode {
            ConditionMode::Text => (pv.text_condition.clone(), None),
            ConditionMode::Image2d => {
                let tr = model.image_adapter.forward_trace(&pv.pooled_pixels)?;
                (tr.output.clone(), Some(tr))
            }
            ConditionMode::Geom3d => {
                let tr = model.captioner.forward_trace(&enc.global)?;
                (tr.output.clone(), Some(tr))
            }
        };
        let noisy = sched.apply(&pv.appearance, noise[j].t, &noise[j].eps)?;
        let fwd = model
            .head
            .forward_view(&noisy, pv.pixels.clone(), pv.view.height(), pv.view.width(), &cond)?;
        let m3d = backproject_masks(&fwd.masks, &pv.corr)?;
        let f2d = pseudo_mask_feature(&m3d, fwd.masks.embeddings())?;
        let idx = pv.corr.point_indices();
        let f3c = f.select_rows(&idx);
        let fus = model.fusion.forward_trace(&f3c.hcat(&f2d)?)?;
        let mut f_fuse = f.clone();
        for (k, &p) in idx.iter().enumerate() {
            f_fuse.row_mut(p).copy_from_slice(fus.output.row(k));
        }
        let labels_c: Vec<usize> = idx.iter().map(|&p| prep.labels[p]).collect();
        let sup_c: Vec<bool> = idx.iter().map(|&p| prep.base_mask[p]).collect();

        let mut parts = LossComponents {
            seg_2d: optional(segmentation_loss(&f2d, text, &labels_c, tau, &sup_c, base_cols))?,
            seg_fuse: optional(segmentation_loss(&f_fuse, text, &prep.labels, tau, &prep.base_mask, base_cols))?,
            ..Default::default()
        };
        if mask_active {
            let (g3, valid3) = mask_pool_3d(&f3c, &m3d)?;
            let (gc, validc) = teacher_mask_embeddings(&pv.view, &fwd.masks, table)?;
            let valid: Vec<bool> = valid3.iter().zip(&validc).map(|(a, b)| *a && *b).collect();
            parts.mask = optional(mask_regularization_loss(&g3, &gc, &valid))?;
        }
        if let Some(target) = &pv.target {
            parts.view_3d = optional(view_regularization_loss(&f3c, target))?;
            parts.view_2d = optional(view_regularization_loss(&fwd.features.features, target))?;
            parts.view_fuse = optional(view_regularization_loss(&fus.output, target))?;
        }
        let value = |g: &Option<GradPair>| g.as_ref().map_or(0.0, |g| g.value * share);
        losses.seg_2d += value(&parts.seg_2d);
        losses.seg_fuse += value(&parts.seg_fuse);
        losses.mask += value(&parts.mask);
        losses.view_3d += value(&parts.view_3d);
        losses.view_2d += value(&parts.view_2d);
        losses.view_fuse += value(&parts.view_fuse);

        let mut tl = total_loss(&parts, &weights, epoch, cfg.n_epochs, cfg.warmup_fraction);
        loss += share * tl.value;
        let np = idx.len();
        let d_ffuse = grad_or_zero(&mut tl, "seg_fuse.features", n, c, share);
        let mut d_fus_out = grad_or_zero(&mut tl, "view_fuse.features", np, c, share);
        let corresponded = pv.corr.entry_of_point(n);
        for p in 0..n {
            match corresponded[p] {
                Some(k) => {
                    for (d, g) in d_fus_out.row_mut(k).iter_mut().zip(d_ffuse.row(p)) {
                        *d += g;
                    }
                }
                None => {
                    for (d, g) in d_f.row_mut(p).iter_mut().zip(d_ffuse.row(p)) {
                        *d += g;
                    }
                }
            }
        }
        let (d_x, g_fusion) = model.fusion.backward(&fus, &d_fus_out, &[])?;
        grads.fusion.add_scaled(1.0, &g_fusion)?;
        let (mut d_f3c, mut d_f2d) = d_x.hsplit(c);
        d_f2d.add_scaled(1.0, &grad_or_zero(&mut tl, "seg_2d.features", np, c, share))?;
        d_f3c.add_scaled(1.0, &grad_or_zero(&mut tl, "view_3d.features", np, c, share))?;
        if let Some(d_g3) = tl.grads.remove("mask.g3d") {
            d_f3c.add_scaled(share, &mask_pool_3d_backward(&m3d, &d_g3))?;
        }
        for (k, &p) in idx.iter().enumerate() {
            for (d, g) in d_f.row_mut(p).iter_mut().zip(d_f3c.row(k)) {
                *d += g;
            }
        }
        let d_g2d = m3d.matrix().matmul_tn(&d_f2d)?;
        let d_pix = tl.grads.remove("view_2d.features").map(|g| g.scale(share));
        let (g_head, d_cond) = model.head.backward_view(&fwd, &cond, &d_g2d, d_pix.as_ref())?;
        grads.head.add_scaled(1.0, &g_head)?;
        match (cfg.condition_mode, cond_trace) {
            (ConditionMode::Geom3d, Some(tr)) => {
                let (dx, g) = model.captioner.backward(&tr, &d_cond, &[])?;
                d_global.add_scaled(1.0, &dx)?;
                grads.captioner.add_scaled(1.0, &g)?;
            }
            (ConditionMode::Image2d, Some(tr)) => {
                let (_, g) = model.image_adapter.backward(&tr, &d_cond, &[])?;
                grads.image_adapter.add_scaled(1.0, &g)?;
            }
            _ => {}
        }
        for key in ["seg_2d.tau", "seg_fuse.tau"] {
            grads.tau += grad_or_zero(&mut tl, key, 1, 1, share).data()[0];
        }
    }

    let global = (cfg.condition_mode == ConditionMode::Geom3d).then_some(&d_global);
    grads.encoder.mlp = model.encoder.backward(&enc, &d_f, global)?;
    Ok(StepResult { loss, grads, losses })
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: Vec<EpochRecord>,
}

/// Mutable state of a run in progress.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: TrainedModel,
    pub step: usize,
    pub total_steps: usize,
}

impl TrainState {
    pub fn learning_rate(&self, base: f64) -> f64 {
        let frac = self.step as f64 / self.total_steps.max(1) as f64;
        base * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
    }

    /// One SGD step.
    ///
    /// The temperature moves in log space (its gradient there is `τ·∂L/∂τ`)
    /// and is then clamped. When the joint gradient norm exceeds
    /// `max_norm` (if positive) the whole step is scaled down to it.
    pub fn apply(&mut self, grads: &TrainedModel, lr: f64, max_norm: f64) -> Result<()> {
        let tau = self.model.tau;
        let g_log_tau = tau * grads.tau;
        let sq: f64 = grads
            .array_refs()
            .iter()
            .map(|m| m.data().iter().map(|x| x * x).sum::<f64>())
            .sum();
        let norm = (sq + g_log_tau * g_log_tau).sqrt();
        let scale = if max_norm > 0.0 && norm > max_norm { max_norm / norm } else { 1.0 };
        let saved_tau = self.model.tau;
        self.model.add_scaled(-lr * scale, grads)?;
        self.model.tau = clamp_tau(saved_tau * (-lr * scale * g_log_tau).exp());
        self.step += 1;
        Ok(())
    }
}

fn generate_split(cfg: &RunConfig, split: u64, count: usize, table: &CategoryTable) -> Result<Vec<PreparedScene>> {
    (0..count)
        .map(|k| {
            let scene = generate_scene_with(scene_seed(cfg.master_seed, split, k), &cfg.scene, &cfg.partition)?;
            prepare_scene(scene, table, cfg)
        })
        .collect()
}

/// Training and validation scenes of a run.
pub fn generate_run_scenes(cfg: &RunConfig, table: &CategoryTable) -> Result<(Vec<PreparedScene>, Vec<PreparedScene>)> {
    Ok((
        generate_split(cfg, 0, cfg.n_scenes, table)?,
        generate_split(cfg, 1, cfg.n_val_scenes, table)?,
    ))
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let table = cfg.category_table()?;
    let (train_scenes, val_scenes) = generate_run_scenes(cfg, &table)?;
    train_with_scenes(cfg, &train_scenes, &val_scenes, &table)
}

fn non_finite(epoch: usize, scene: usize, r: &StepResult) -> Error {
    Error::NonFiniteLoss {
        epoch,
        scene,
        detail: format!("total {} with components {:?}", r.loss, r.losses),
    }
}

pub fn train_with_scenes(
    cfg: &RunConfig,
    train_scenes: &[PreparedScene],
    val_scenes: &[PreparedScene],
    table: &CategoryTable,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_scenes.is_empty() {
        return Err(Error::Config("no training scenes".into()));
    }
    let sched = cfg.noise_schedule()?;
    let mut batches: Vec<(usize, Vec<usize>)> = Vec::new();
    for (s, p) in train_scenes.iter().enumerate() {
        let views: Vec<usize> = (0..p.views.len()).collect();
        batches.extend(views.chunks(cfg.batch_views).map(|c| (s, c.to_vec())));
    }
    let mut state = TrainState {
        model: TrainedModel::init(cfg),
        step: 0,
        total_steps: cfg.n_epochs * batches.len(),
    };
    let mut history = Vec::with_capacity(cfg.n_epochs);
    for epoch in 0..cfg.n_epochs {
        let mut order = batches.clone();
        order.shuffle(&mut rng_for(cfg.master_seed, 0xE90C_0000 + epoch as u64));
        let mut total = 0.0;
        let mut lr = 0.0;
        for (s, views) in &order {
            let prep = &train_scenes[*s];
            let mut rng = rng_for(mix_seed(cfg.master_seed, 0x0015_E000), state.step as u64);
            let noise = StepNoise::draw(prep, views, &sched, &mut rng);
            let r = step_gradients(&state.model, cfg, prep, views, &noise, table, epoch)?;
            if !r.loss.is_finite() || !r.grads.is_finite() {
                return Err(non_finite(epoch, *s, &r));
            }
            lr = state.learning_rate(cfg.learning_rate);
            state.apply(&r.grads, lr, cfg.max_grad_norm)?;
            total += r.loss;
        }
        let (val_miou, val_base, val_novel, val_hiou) = if val_scenes.is_empty() {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            let f = evaluate_prepared(&state.model, cfg, val_scenes, table)?.fused;
            (f.miou(), f.base_miou, f.novel_miou, f.hiou)
        };
        history.push(EpochRecord {
            epoch,
            learning_rate: lr,
            loss: total / order.len() as f64,
            tau: state.model.tau,
            val_miou,
            val_base,
            val_novel,
            val_hiou,
        });
    }
    Ok(TrainOutcome {
        model: state.model,
        history,
    })
}
