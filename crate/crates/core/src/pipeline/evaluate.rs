use super::{predict_labels, prepare_scene, MaskEvidence, PreparedScene, RunConfig, StepNoise, TrainedModel};
use crate::embedspace::CategoryTable;
use crate::encoders::ConditionMode;
use crate::error::Result;
use crate::eval::{confusion_matrix, Confusion, MetricReport};
use crate::losses::sigmoid;
use crate::maskops::{backproject_masks, pseudo_mask_feature, teacher_mask_embeddings};
use crate::scenegen::Scene;

/// Metrics of the fused output and of each branch on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub fused: MetricReport,
    pub branch_3d: MetricReport,
    pub branch_2d: MetricReport,
}

/// Per-point labels predicted for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePredictions {
    pub fused: Vec<usize>,
    pub branch_3d: Vec<usize>,
    pub branch_2d: Vec<usize>,
}

/// Predictions for one scene.
///
/// Each point is read from the view where it lies closest to the camera
/// (earliest view on ties). Points seen by no view keep the 3D prediction in
/// every output.
pub fn predict_scene(
    model: &TrainedModel,
    cfg: &RunConfig,
    prep: &PreparedScene,
    table: &CategoryTable,
) -> Result<ScenePredictions> {
    let text = table.embeddings();
    let enc = model.encoder.forward(&prep.scene)?;
    let f = &enc.features;
    let n = f.rows();
    let s_b: Vec<f64> = model.binary_head.forward(f)?.data().iter().map(|&x| sigmoid(x)).collect();
    let branch_3d = predict_labels(f, text, &s_b, cfg.lambda, model.tau, &cfg.partition, None)?;

    // (depth, view, entry)
    let mut best: Vec<Option<(f64, usize, usize)>> = vec![None; n];
    for (v, pv) in prep.views.iter().enumerate() {
        for (k, e) in pv.corr.entries.iter().enumerate() {
            if best[e.point].is_none_or(|(d, _, _)| e.depth < d) {
                best[e.point] = Some((e.depth, v, k));
            }
        }
    }

    let mut branch_2d = branch_3d.clone();
    let mut fused = branch_3d.clone();
    let sched = cfg.noise_schedule()?;
    let noise = StepNoise::for_eval(prep);
    for (v, pv) in prep.views.iter().enumerate() {
        let chosen: Vec<(usize, usize)> = best
            .iter()
            .enumerate()
            .filter_map(|(p, b)| b.filter(|b| b.1 == v).map(|b| (p, b.2)))
            .collect();
        if chosen.is_empty() {
            continue;
        }
        let cond = match cfg.condition_mode {
            ConditionMode::Text => pv.text_condition.clone(),
            ConditionMode::Image2d => model.image_adapter.forward(&pv.pooled_pixels)?,
            ConditionMode::Geom3d => model.captioner.forward(&enc.global)?,
        };
        let noisy = sched.apply(&pv.appearance, noise[v].t, &noise[v].eps)?;
        let fwd = model
            .head
            .forward_view(&noisy, pv.pixels.clone(), pv.view.height(), pv.view.width(), &cond)?;
        let m3d = backproject_masks(&fwd.masks, &pv.corr)?;
        let f2d = pseudo_mask_feature(&m3d, fwd.masks.embeddings())?;
        let (g_clip, valid) = teacher_mask_embeddings(&pv.view, &fwd.masks, table)?;

        let points: Vec<usize> = chosen.iter().map(|c| c.0).collect();
        let entries: Vec<usize> = chosen.iter().map(|c| c.1).collect();
        let sb: Vec<f64> = points.iter().map(|&p| s_b[p]).collect();
        let f2_rows = f2d.select_rows(&entries);
        let fused_rows = model.fusion.forward(&f.select_rows(&points).hcat(&f2_rows)?)?;
        let all_masks = m3d.row_masks();
        let row_masks: Vec<Option<usize>> = entries.iter().map(|&k| all_masks[k]).collect();

        let p2 = predict_labels(&f2_rows, text, &sb, cfg.lambda, model.tau, &cfg.partition, None)?;
        let evidence = MaskEvidence {
            g_clip: &g_clip,
            valid: &valid,
            row_masks: &row_masks,
        };
        let pf = predict_labels(&fused_rows, text, &sb, cfg.lambda, model.tau, &cfg.partition, Some(evidence))?;
        for (j, &p) in points.iter().enumerate() {
            branch_2d[p] = p2[j];
            fused[p] = pf[j];
        }
    }
    Ok(ScenePredictions {
        fused,
        branch_3d,
        branch_2d,
    })
}

fn accumulate(total: &mut Confusion, part: &Confusion) {
    for (a, b) in total.iter_mut().zip(part) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

/// Metrics over already prepared scenes, pooled across scenes.
pub fn evaluate_prepared(
    model: &TrainedModel,
    cfg: &RunConfig,
    scenes: &[PreparedScene],
    table: &CategoryTable,
) -> Result<EvalOutcome> {
    let l = table.n_categories();
    let mut conf = [vec![vec![0u64; l]; l], vec![vec![0u64; l]; l], vec![vec![0u64; l]; l]];
    for prep in scenes {
        let pred = predict_scene(model, cfg, prep, table)?;
        for (total, p) in conf.iter_mut().zip([&pred.fused, &pred.branch_3d, &pred.branch_2d]) {
            accumulate(total, &confusion_matrix(&prep.labels, p, l)?);
        }
    }
    let [fused, b3, b2] = conf;
    Ok(EvalOutcome {
        fused: MetricReport::from_confusion(fused, &cfg.partition)?,
        branch_3d: MetricReport::from_confusion(b3, &cfg.partition)?,
        branch_2d: MetricReport::from_confusion(b2, &cfg.partition)?,
    })
}

pub fn evaluate(model: &TrainedModel, cfg: &RunConfig, scenes: &[Scene]) -> Result<EvalOutcome> {
    let table = cfg.category_table()?;
    let prepared = scenes
        .iter()
        .map(|s| prepare_scene(s.clone(), &table, cfg))
        .collect::<Result<Vec<_>>>()?;
    evaluate_prepared(model, cfg, &prepared, &table)
}
