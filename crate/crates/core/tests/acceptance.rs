//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs the default desk configuration end to end (six training runs plus a
//! repeat), so it takes several minutes. The process fails only when a
//! criterion fails that is not listed in `KNOWN_FAILURES`.

use std::time::{Duration, Instant};

use rand::Rng;
use xmask3d::embedspace::build_category_table;
use xmask3d::encoders::{noisy_sample, ConditionMode, NoiseSchedule};
use xmask3d::eval::{compute_hiou, median, RunReport};
use xmask3d::geometry::{build_correspondence, Camera};
use xmask3d::losses::{binary_loss, mask_regularization_loss, segmentation_loss, view_regularization_loss};
use xmask3d::maskops::{
    backproject_masks, build_attention_mask, mask_pool_3d, pseudo_mask_feature, teacher_mask_embeddings, MaskSet,
};
use xmask3d::numeric::{finite_diff_grad, row_normalize, rng_for, GradPair, Matrix};
use xmask3d::pipeline::{
    prepare_scene, run_experiment, scene_seed, step_gradients, write_checkpoint, RunConfig, StepNoise, TrainedModel,
};
use xmask3d::scenegen::{generate_scene, generate_scene_with, render_view, CategoryPartition, SceneParams};

/// Criteria that fail for reasons recorded in the decisions ledger.
const KNOWN_FAILURES: &[(usize, &str)] = &[(
    1,
    "three printed table triples are inconsistent with the harmonic mean (LSeg B12/N7, 3DGenZ B12/N7, OpenScene B12/N7)",
)];

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

/// Runs one criterion; `limit` is its runtime budget in seconds, if any.
fn run(id: usize, name: &'static str, limit: Option<f64>, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (mut pass, mut detail) = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        let within = elapsed.as_secs_f64() < limit;
        pass &= within;
        detail.push_str(&format!("; runtime {} {limit} s", if within { "<" } else { "≥" }));
    }
    let out = Outcome {
        id,
        name,
        pass,
        detail,
        elapsed,
    };
    println!(
        "criterion {} {:<28} {}  [{:.1} s]  {}",
        out.id,
        out.name,
        if out.pass { "PASS" } else { "FAIL" },
        out.elapsed.as_secs_f64(),
        out.detail
    );
    out
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

// (method / benchmark, hIoU, base, novel) as published for the open-vocabulary benchmarks.
const TABLE_TRIPLES: &[(&str, f64, f64, f64)] = &[
    ("LSeg-3D ScanNet B15/N4", 0.0, 64.4, 0.0),
    ("LSeg-3D ScanNet B12/N7", 0.9, 55.7, 0.1),
    ("LSeg-3D ScanNet B10/N9", 1.8, 68.4, 0.9),
    ("LSeg-3D ScanNet200 B170/N30", 1.5, 21.1, 0.8),
    ("LSeg-3D ScanNet200 B150/N50", 3.0, 20.6, 1.6),
    ("3DGenZ ScanNet B15/N4", 20.6, 56.0, 12.6),
    ("3DGenZ ScanNet B12/N7", 19.8, 35.5, 13.3),
    ("3DGenZ ScanNet B10/N9", 12.0, 63.6, 6.6),
    ("3DGenZ ScanNet200 B170/N30", 2.6, 15.8, 1.4),
    ("3DGenZ ScanNet200 B150/N50", 3.3, 14.1, 1.9),
    ("3DTZSL ScanNet B15/N4", 10.5, 36.7, 6.1),
    ("3DTZSL ScanNet B12/N7", 3.8, 36.6, 2.0),
    ("3DTZSL ScanNet B10/N9", 7.8, 55.5, 4.2),
    ("3DTZSL ScanNet200 B170/N30", 0.9, 4.0, 0.5),
    ("3DTZSL ScanNet200 B150/N50", 0.7, 3.8, 0.4),
    ("PLA ScanNet B15/N4", 65.3, 68.3, 62.4),
    ("PLA ScanNet B12/N7", 55.3, 69.5, 45.9),
    ("PLA ScanNet B10/N9", 53.1, 76.2, 40.8),
    ("PLA ScanNet200 B170/N30", 11.4, 20.9, 7.8),
    ("PLA ScanNet200 B150/N50", 10.1, 20.9, 6.6),
    ("OpenScene ScanNet B15/N4", 65.7, 68.8, 62.8),
    ("OpenScene ScanNet B12/N7", 56.8, 61.5, 51.7),
    ("OpenScene ScanNet B10/N9", 54.3, 71.8, 43.6),
    ("OpenScene ScanNet200 B170/N30", 14.2, 22.5, 10.4),
    ("OpenScene ScanNet200 B150/N50", 15.2, 23.5, 11.2),
    ("OV3D ScanNet B15/N4", 72.4, 70.2, 74.7),
    ("OV3D ScanNet B12/N7", 68.5, 74.1, 63.7),
    ("OV3D ScanNet B10/N9", 64.8, 77.6, 55.6),
    ("XMask3D ScanNet B15/N4", 70.0, 69.8, 70.2),
    ("XMask3D ScanNet B12/N7", 61.7, 70.2, 55.1),
    ("XMask3D ScanNet B10/N9", 55.7, 76.5, 43.8),
    ("XMask3D ScanNet200 B170/N30", 18.0, 27.8, 13.3),
    ("XMask3D ScanNet200 B150/N50", 15.5, 24.4, 11.4),
    ("LSeg-3D S3DIS B8/N4", 0.1, 49.0, 0.1),
    ("LSeg-3D S3DIS B6/N6", 0.0, 30.1, 0.0),
    ("3DTZSL S3DIS B8/N4", 8.4, 43.1, 4.7),
    ("3DTZSL S3DIS B6/N6", 3.5, 28.2, 1.9),
    ("3DGenZ S3DIS B8/N4", 8.8, 50.3, 4.8),
    ("3DGenZ S3DIS B6/N6", 9.4, 20.3, 6.1),
    ("PLA S3DIS B8/N4", 34.6, 59.0, 24.5),
    ("PLA S3DIS B6/N6", 38.5, 55.5, 29.4),
    ("OpenScene S3DIS B8/N4", 42.4, 58.6, 33.2),
    ("OpenScene S3DIS B6/N6", 44.2, 56.2, 36.4),
    ("XMask3D S3DIS B8/N4", 46.8, 63.1, 37.2),
    ("XMask3D S3DIS B6/N6", 44.9, 52.8, 39.1),
];

fn hiou_tables() -> (bool, String) {
    let misses: Vec<String> = TABLE_TRIPLES
        .iter()
        .filter_map(|&(name, h, b, n)| {
            let got = compute_hiou(b, n);
            ((got - h).abs() > 0.15).then(|| format!("{name}: {b}/{n} -> {got:.2}, printed {h}"))
        })
        .collect();
    let detail = format!("{}/{} within ±0.15", TABLE_TRIPLES.len() - misses.len(), TABLE_TRIPLES.len());
    if misses.is_empty() {
        (true, detail)
    } else {
        (false, format!("{detail}; off: {}", misses.join("; ")))
    }
}

/// Largest `|a − n| / max(|a|, |n|)` over entries where either is above
/// round-off level.
fn rel_err(analytic: &Matrix, numeric: &Matrix) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn gradient_suite() -> (bool, String) {
    const INSTANCES: u64 = 100;
    const EPS: f64 = 1e-4;
    let mut worst = [0.0f64; 4];
    for k in 0..INSTANCES {
        let mut rng = rng_for(0x6AD, k);
        let (n, c, l) = (rng.random_range(2..12), rng.random_range(2..10), rng.random_range(2..8));

        let f = random_matrix(n, c, -1.0, 1.0, &mut rng);
        let text = row_normalize(&random_matrix(l, c, -1.0, 1.0, &mut rng)).unwrap();
        let columns: Vec<usize> = (0..l).filter(|_| rng.random_bool(0.7)).collect();
        let columns = if columns.is_empty() { vec![0] } else { columns };
        let labels: Vec<usize> = (0..n).map(|_| columns[rng.random_range(0..columns.len())]).collect();
        let mut supervised: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        supervised[0] = true;
        let tau = rng.random_range(0.07..1.0);
        let seg = |x: &Matrix, t: f64| segmentation_loss(x, &text, &labels, t, &supervised, &columns).unwrap();
        let g = seg(&f, tau);
        let num = finite_diff_grad(|x| seg(x, tau).value, &f, EPS);
        let num_tau = finite_diff_grad(|t| seg(&f, t.data()[0]).value, &Matrix::filled(1, 1, tau), EPS);
        worst[0] = worst[0]
            .max(rel_err(g.grad("features").unwrap(), &num))
            .max(rel_err(g.grad("tau").unwrap(), &num_tau));

        let m = rng.random_range(1..8);
        let g3d = random_matrix(m, c, -1.0, 1.0, &mut rng);
        let g_clip = random_matrix(m, c, -1.0, 1.0, &mut rng);
        let mut valid: Vec<bool> = (0..m).map(|_| rng.random_bool(0.8)).collect();
        valid[0] = true;
        let mask = |x: &Matrix| mask_regularization_loss(x, &g_clip, &valid).unwrap();
        worst[1] = worst[1].max(rel_err(mask(&g3d).grad("g3d").unwrap(), &finite_diff_grad(|x| mask(x).value, &g3d, EPS)));

        let target = random_matrix(1, c, -1.0, 1.0, &mut rng);
        let view = |x: &Matrix| view_regularization_loss(x, &target).unwrap();
        worst[2] = worst[2].max(rel_err(view(&f).grad("features").unwrap(), &finite_diff_grad(|x| view(x).value, &f, EPS)));

        let logits = random_matrix(n, 1, -4.0, 4.0, &mut rng);
        let base: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let bi = |x: &Matrix| -> GradPair { binary_loss(x, &base).unwrap() };
        worst[3] = worst[3].max(rel_err(bi(&logits).grad("logits").unwrap(), &finite_diff_grad(|x| bi(x).value, &logits, EPS)));
    }
    let pass = worst.iter().all(|w| *w <= 1e-5);
    (
        pass,
        format!(
            "{INSTANCES} instances each, max rel err seg {:.1e} mask {:.1e} view {:.1e} bi {:.1e} (≤ 1e-5)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn geometry_round_trip() -> (bool, String) {
    let mut worst = 0.0f64;
    let mut entries = 0;
    for k in 0..100u64 {
        let mut rng = rng_for(0x6E0, k);
        let eye = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.5..2.5)];
        let target = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..1.5)];
        let size = rng.random_range(16..96);
        let k_mat = Camera::pinhole_intrinsics(rng.random_range(0.6..1.4) * size as f64, size as f64 / 2.0, size as f64 / 2.0);
        let Ok(cam) = Camera::look_at(eye, target, [0.0, 0.0, 1.0], k_mat, size, size) else {
            continue;
        };
        // 100 points per camera, placed inside the frustum.
        let mut data = Vec::with_capacity(300);
        for _ in 0..100 {
            let p = cam.unproject(
                rng.random_range(-0.5..size as f64 - 0.5),
                rng.random_range(-0.5..size as f64 - 0.5),
                rng.random_range(0.3..8.0),
            );
            data.extend_from_slice(&p);
        }
        let pts = Matrix::new(100, 3, data).unwrap();
        let corr = build_correspondence(&pts, &cam);
        for e in &corr.entries {
            let back = cam.unproject(e.u, e.v, e.depth);
            for c in 0..3 {
                worst = worst.max((back[c] - pts[(e.point, c)]).abs());
            }
        }
        entries += corr.n_prime();
    }

    let partition = CategoryPartition::default_b8_n4();
    let mut render_ok = true;
    for s in 0..20u64 {
        let scene = generate_scene(0x5CE + s, 4096, &partition, 12).unwrap();
        for cam in &scene.cameras {
            let view = render_view(&scene, cam);
            let corr = build_correspondence(&scene.positions, cam);
            let mut expected = vec![None; cam.pixel_count()];
            for e in &corr.entries {
                expected[e.row * cam.width + e.col] = Some(e.point);
            }
            render_ok &= view.point_index == expected;
        }
    }
    (
        worst <= 1e-6 && render_ok && entries > 0,
        format!(
            "10^4 point/camera pairs, {entries} correspondences, max un-projection error {worst:.1e} m (≤ 1e-6); renderer point_index {} on 20 scenes",
            if render_ok { "identical" } else { "differs" }
        ),
    )
}

fn mask_algebra() -> (bool, String) {
    let mut ok = [true; 4];
    let mut worst_teacher = 0.0f64;
    let partition = CategoryPartition::default_b8_n4();
    let params = SceneParams {
        n_points: 2000,
        image_size: 24,
        ..SceneParams::default()
    };
    let names: Vec<String> = (0..12).map(|i| format!("category{i}")).collect();
    let table = build_category_table(&names, 32, 0).unwrap();
    for k in 0..100u64 {
        let mut rng = rng_for(0x3A5C, k);
        let scene = generate_scene_with(mix(k), &params, &partition).unwrap();
        let cam = &scene.cameras[rng.random_range(0..scene.cameras.len())];
        let view = render_view(&scene, cam);
        let corr = build_correspondence(&scene.positions, cam);
        let m = rng.random_range(1..9);
        let c = rng.random_range(2..12);
        let assignment: Vec<Option<usize>> = view
            .point_index
            .iter()
            .map(|p| p.map(|_| rng.random_range(0..m)))
            .collect();
        let emb = row_normalize(&random_matrix(m, c, -1.0, 1.0, &mut rng)).unwrap();
        let ms = MaskSet::new(cam.height, cam.width, assignment.clone(), emb.clone()).unwrap();

        // back-projection: per-entry pixel lookup
        let m3d = backproject_masks(&ms, &corr).unwrap();
        for (j, e) in corr.entries.iter().enumerate() {
            for i in 0..m {
                let want = if assignment[e.row * cam.width + e.col] == Some(i) { 1.0 } else { 0.0 };
                ok[0] &= m3d.matrix()[(j, i)] == want;
            }
        }

        // pseudo feature: explicit sum over masks of M3d[j][i]·G[i]
        let f2d = pseudo_mask_feature(&m3d, &emb).unwrap();
        for j in 0..corr.n_prime() {
            for d in 0..c {
                let mut s = 0.0;
                for i in 0..m {
                    s += m3d.matrix()[(j, i)] * emb[(i, d)];
                }
                ok[1] &= f2d[(j, d)] == s;
            }
        }

        // 3D pooling: masked mean per mask
        let feats = random_matrix(corr.n_prime(), c, -1.0, 1.0, &mut rng);
        let (pooled, valid) = mask_pool_3d(&feats, &m3d).unwrap();
        for i in 0..m {
            let rows: Vec<usize> = (0..corr.n_prime()).filter(|&j| m3d.matrix()[(j, i)] == 1.0).collect();
            ok[2] &= valid[i] == !rows.is_empty();
            for d in 0..c {
                let want = if rows.is_empty() {
                    0.0
                } else {
                    rows.iter().map(|&j| feats[(j, d)]).sum::<f64>() / rows.len() as f64
                };
                ok[2] &= pooled[(i, d)] == want;
            }
        }

        // teacher: dense masked softmax attention over [pixel tokens, class
        // token, mask tokens] with zero scores, then unit rows
        let (g, tvalid) = teacher_mask_embeddings(&view, &ms, &table).unwrap();
        let tokens: Vec<usize> = (0..assignment.len()).filter(|&p| assignment[p].is_some()).collect();
        let t = tokens.len();
        let value = |col: usize| -> Vec<f64> {
            if col < t {
                table.row(view.label_image[tokens[col]].unwrap() as usize).to_vec()
            } else {
                vec![0.0; table.dim()]
            }
        };
        for i in 0..m {
            let scores: Vec<f64> = (0..t + 1 + m)
                .map(|col| {
                    let open = (col < t && assignment[tokens[col]] == Some(i)) || col == t;
                    if open {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let total: f64 = scores.iter().map(|s| s.exp()).sum();
            let mut out = vec![0.0; table.dim()];
            for (col, s) in scores.iter().enumerate() {
                let w = s.exp() / total;
                if w > 0.0 {
                    for (o, v) in out.iter_mut().zip(value(col)) {
                        *o += w * v;
                    }
                }
            }
            let members = (0..t).filter(|&col| assignment[tokens[col]] == Some(i)).count();
            ok[3] &= tvalid[i] == (members > 0);
            if members == 0 {
                continue;
            }
            let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (d, v) in out.iter().enumerate() {
                worst_teacher = worst_teacher.max((g[(i, d)] - v / n).abs());
            }
        }
    }
    ok[3] &= worst_teacher == 0.0;

    // hand-built T = 4, M = 2 case
    let member = vec![vec![false, false, true, true], vec![true, true, false, true]];
    let attn = build_attention_mask(&member, 4, 2).unwrap().to_dense();
    let (f, t) = (false, true);
    let expected = vec![
        vec![f, f, f, f, f, t, t],
        vec![f, f, f, f, f, t, t],
        vec![f, f, f, f, f, t, t],
        vec![f, f, f, f, f, t, t],
        vec![f, f, f, f, f, t, t],
        vec![f, f, t, t, f, t, t],
        vec![t, t, f, t, f, t, t],
    ];
    let hand = attn == expected;

    // block structure on random (T, M, ℙ)
    let mut blocks = true;
    for k in 0..50u64 {
        let mut rng = rng_for(0xB10C, k);
        let (tk, m) = (rng.random_range(1..40), rng.random_range(1..10));
        let member: Vec<Vec<bool>> = (0..m).map(|_| (0..tk).map(|_| rng.random_bool(0.5)).collect()).collect();
        let a = build_attention_mask(&member, tk, m).unwrap().to_dense();
        let s = tk + 1 + m;
        blocks &= a.len() == s;
        for r in 0..s {
            for c in 0..s {
                let want = if r <= tk {
                    c > tk
                } else if c < tk {
                    member[r - tk - 1][c]
                } else {
                    c > tk
                };
                blocks &= a[r][c] == want;
            }
        }
    }

    let pass = ok.iter().all(|v| *v) && hand && blocks;
    (
        pass,
        format!(
            "100 instances: backproject {} pseudo {} pool {} teacher {} (max diff {worst_teacher:.1e}); 7×7 hand case {}; 50 block checks {}",
            word(ok[0]),
            word(ok[1]),
            word(ok[2]),
            word(ok[3]),
            word(hand),
            word(blocks)
        ),
    )
}

fn word(b: bool) -> &'static str {
    if b {
        "exact"
    } else {
        "MISMATCH"
    }
}

fn mix(k: u64) -> u64 {
    xmask3d::numeric::mix_seed(0xACCE, k)
}

fn noising_statistics() -> (bool, String) {
    let sched = NoiseSchedule::default();
    let x = Matrix::zeros(100_000, 1);
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, t) in [1, sched.steps() / 2, sched.steps()].into_iter().enumerate() {
        let y = noisy_sample(&x, t, &sched, &mut rng_for(0x401, i as u64)).unwrap();
        let n = y.data().len() as f64;
        let mean = y.data().iter().sum::<f64>() / n;
        let var = y.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let want = 1.0 - sched.alpha_bar(t).unwrap();
        let rel = (var - want).abs() / want;
        pass &= rel <= 0.05;
        parts.push(format!("t={t} var {var:.3e} vs {want:.3e} ({:.2}%)", rel * 100.0));
    }
    let clean = NoiseSchedule::from_alphas(vec![1.0; 5]).unwrap();
    let x = random_matrix(64, 6, -2.0, 2.0, &mut rng_for(0x402, 0));
    let identity = (1..=5).all(|t| noisy_sample(&x, t, &clean, &mut rng_for(0x403, t as u64)).unwrap() == x);
    pass &= identity;
    (
        pass,
        format!(
            "{}; identity at ᾱ=1 {}",
            parts.join(", "),
            if identity { "exact" } else { "broken" }
        ),
    )
}

fn condition_contract() -> (bool, String) {
    let mut parts = Vec::new();
    let mut pass = true;
    for mode in ConditionMode::ALL {
        let cfg = RunConfig {
            n_scenes: 1,
            n_val_scenes: 1,
            n_epochs: 1,
            condition_mode: mode,
            dim: 16,
            cond_dim: if mode == ConditionMode::Text { 16 } else { 8 },
            global_dim: 8,
            n_masks: 4,
            scene: SceneParams {
                n_points: 2000,
                image_size: 24,
                ..SceneParams::default()
            },
            ..RunConfig::default()
        };
        let table = cfg.category_table().unwrap();
        let scene = generate_scene_with(scene_seed(cfg.master_seed, 0, 0), &cfg.scene, &cfg.partition).unwrap();
        let prep = prepare_scene(scene, &table, &cfg).unwrap();
        let views = [0, 1, 2, 3];
        let noise = StepNoise::draw(&prep, &views, &cfg.noise_schedule().unwrap(), &mut rng_for(0xC0D, 0));
        let loss_2d = |m: &TrainedModel| {
            let r = step_gradients(m, &cfg, &prep, &views, &noise, &table, 0).unwrap();
            r.losses.seg_2d + r.losses.view_2d
        };
        let model = TrainedModel::init(&cfg);
        let eps = 1e-4;
        let mut max_sens = 0.0f64;
        for (pi, name) in model
            .named_params()
            .iter()
            .map(|(n, _)| n.clone())
            .enumerate()
            .filter(|(_, n)| n.starts_with("encoder."))
        {
            let len = model.named_params()[pi].1.data().len();
            for idx in (0..len).step_by((len / 6).max(1)) {
                let mut plus = model.clone();
                plus.named_params_mut()[pi].1.data_mut()[idx] += eps;
                let mut minus = model.clone();
                minus.named_params_mut()[pi].1.data_mut()[idx] -= eps;
                let d = (loss_2d(&plus) - loss_2d(&minus)) / (2.0 * eps);
                max_sens = max_sens.max(d.abs());
                let _ = &name;
            }
        }
        let ok = if mode == ConditionMode::Geom3d { max_sens > 0.0 } else { max_sens == 0.0 };
        pass &= ok;
        parts.push(format!("{mode} {max_sens:.2e}"));
    }
    (
        pass,
        format!(
            "max |d L_2d / d encoder| by finite differences: {} (geom3d > 0, others = 0)",
            parts.join(", ")
        ),
    )
}

struct EndToEnd {
    on: Vec<(TrainedModel, RunReport)>,
    off: Vec<RunReport>,
    elapsed: Duration,
}

fn end_to_end_runs() -> EndToEnd {
    let start = Instant::now();
    let mut on = Vec::new();
    let mut off = Vec::new();
    for seed in 0..3 {
        for enabled in [true, false] {
            let cfg = RunConfig {
                master_seed: seed,
                mask_loss_enabled: enabled,
                ..RunConfig::default()
            };
            let (model, report) = run_experiment(&cfg, None).unwrap();
            if enabled {
                on.push((model, report));
            } else {
                off.push(report);
            }
        }
    }
    EndToEnd {
        on,
        off,
        elapsed: start.elapsed(),
    }
}

fn end_to_end(e: &EndToEnd) -> (bool, String) {
    let med = |xs: Vec<f64>| median(&xs);
    let reports_on: Vec<&RunReport> = e.on.iter().map(|(_, r)| r).collect();
    let first_base = med(reports_on.iter().map(|r| r.history[0].val_base).collect());
    let first_novel = med(reports_on.iter().map(|r| r.history[0].val_novel).collect());
    let a = first_base > first_novel;

    let novel_3d_on = med(reports_on.iter().map(|r| r.branch_3d.novel_miou).collect());
    let novel_3d_off = med(e.off.iter().map(|r| r.branch_3d.novel_miou).collect());
    let novel_fused_on = med(reports_on.iter().map(|r| r.fused.novel_miou).collect());
    let novel_fused_off = med(e.off.iter().map(|r| r.fused.novel_miou).collect());
    let b = novel_3d_on > novel_3d_off && novel_fused_on > novel_fused_off;

    let fused = med(reports_on.iter().map(|r| r.fused.hiou).collect());
    let h3 = med(reports_on.iter().map(|r| r.branch_3d.hiou).collect());
    let h2 = med(reports_on.iter().map(|r| r.branch_2d.hiou).collect());
    let c = fused >= h3.max(h2) - 1.0;

    let secs = e.elapsed.as_secs_f64();
    let fast = secs < 600.0;
    (
        a && b && c && fast,
        format!(
            "(a) epoch-0 base {first_base:.1} > novel {first_novel:.1}: {}; (b) novel with/without mask loss 3D {novel_3d_on:.1}/{novel_3d_off:.1}, fused {novel_fused_on:.1}/{novel_fused_off:.1}: {}; (c) fused hIoU {fused:.1} ≥ max(3D {h3:.1}, 2D {h2:.1}) − 1: {}; 6 runs in {secs:.0} s (< 600 s)",
            yes(a),
            yes(b),
            yes(c)
        ),
    )
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn determinism(e: &EndToEnd) -> (bool, String) {
    let cfg = RunConfig {
        master_seed: 0,
        ..RunConfig::default()
    };
    let (model, report) = run_experiment(&cfg, None).unwrap();
    let bytes = |m: &TrainedModel| {
        let mut buf = Vec::new();
        write_checkpoint(m, &cfg, &mut buf).unwrap();
        buf
    };
    let (first_model, first_report) = &e.on[0];
    let same_ckpt = bytes(&model) == bytes(first_model);
    let same_report = report.to_json().unwrap() == first_report.to_json().unwrap();
    (
        same_ckpt && same_report,
        format!(
            "default config seed 0 run twice: checkpoint bytes {}, report JSON {}",
            if same_ckpt { "identical" } else { "differ" },
            if same_report { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    // Optional criterion numbers on the command line restrict the run.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: usize| only.is_empty() || only.contains(&id);
    println!("acceptance suite");
    let mut outcomes = Vec::new();
    if wanted(1) {
        outcomes.push(run(1, "hIoU table reproduction", Some(1.0), hiou_tables));
    }
    if wanted(2) {
        outcomes.push(run(2, "loss gradient suite", Some(30.0), gradient_suite));
    }
    if wanted(3) {
        outcomes.push(run(3, "geometry round trip", Some(30.0), geometry_round_trip));
    }
    if wanted(4) {
        outcomes.push(run(4, "mask algebra oracles", Some(30.0), mask_algebra));
    }
    if wanted(5) {
        outcomes.push(run(5, "noising statistics", Some(10.0), noising_statistics));
    }
    let e2e = (wanted(6) || wanted(8)).then(end_to_end_runs);
    if let (true, Some(e)) = (wanted(6), &e2e) {
        outcomes.push(run(6, "end-to-end open vocabulary", None, || end_to_end(e)));
    }
    if wanted(7) {
        outcomes.push(run(7, "condition-mode contract", Some(30.0), condition_contract));
    }
    if let (true, Some(e)) = (wanted(8), &e2e) {
        outcomes.push(run(8, "determinism", None, || determinism(e)));
    }

    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    let mut unexpected = false;
    for o in outcomes.iter().filter(|o| !o.pass) {
        match KNOWN_FAILURES.iter().find(|(id, _)| *id == o.id) {
            Some((_, why)) => println!("criterion {} ({}) fails as documented: {why}", o.id, o.name),
            None => {
                println!("criterion {} ({}) failed unexpectedly", o.id, o.name);
                unexpected = true;
            }
        }
    }
    if unexpected {
        std::process::exit(1);
    }
}
