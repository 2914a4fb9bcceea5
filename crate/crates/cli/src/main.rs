use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use xmask3d::encoders::ConditionMode;
use xmask3d::eval::{summary_table, RunReport, Summary};
use xmask3d::pipeline::{
    evaluate, load_checkpoint, run_experiment, save_checkpoint, scene_seed, RunConfig,
};
use xmask3d::scenegen::{generate_scene_with, read_scene_file, write_scene_file};

#[derive(Parser)]
#[command(name = "xmask", version, about = "Open-vocabulary 3D segmentation experiments on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOpts {
    /// Master seed; repeat to run several seeds and report medians.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Directory for checkpoints, reports and tables.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Maximum number of runs executed at the same time.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Train every variant along one ablation axis.
    Ablate {
        #[arg(long, value_enum)]
        axis: Axis,
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Evaluate a checkpoint on scene files.
    Eval {
        checkpoint: PathBuf,
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write the training and validation scenes of a configuration.
    GenScenes {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "scenes")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Condition,
    MaskLoss,
}

/// Failure to read the configuration file; exits with status 2.
#[derive(Debug)]
struct MissingConfig(String);

impl std::fmt::Display for MissingConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for MissingConfig {}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| MissingConfig(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Report timestamp; honours SOURCE_DATE_EPOCH for reproducible output.
fn timestamp() -> String {
    let now = match std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse::<u64>().ok()) {
        Some(secs) => UNIX_EPOCH + Duration::from_secs(secs),
        None => SystemTime::now(),
    };
    humantime::format_rfc3339_seconds(now).to_string()
}

struct Job {
    label: String,
    cfg: RunConfig,
    dir: PathBuf,
}

/// Runs every job with at most `parallel` in flight; results keep job order.
fn run_jobs(jobs: &[Job], parallel: usize) -> Result<Vec<RunReport>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunReport>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..parallel.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                eprintln!("[{}] training", job.label);
                let r = run_one(job);
                match &r {
                    Ok(rep) => eprintln!("[{}] done: hIoU {:.1}", job.label, rep.fused.hiou),
                    Err(e) => eprintln!("[{}] failed: {e:#}", job.label),
                }
                *slots[i].lock().expect("result slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every job ran"))
        .collect()
}

fn run_one(job: &Job) -> Result<RunReport> {
    let (model, report) = run_experiment(&job.cfg, Some(timestamp()))?;
    fs::create_dir_all(&job.dir).with_context(|| format!("creating {}", job.dir.display()))?;
    save_checkpoint(&model, &job.cfg, &job.dir.join("checkpoint.xmck"))?;
    fs::write(job.dir.join("report.json"), report.to_json()?)?;
    fs::write(job.dir.join("report.txt"), report.text_table())?;
    Ok(report)
}

fn seeds_or_default(opts: &RunOpts, cfg: &RunConfig) -> Vec<u64> {
    if opts.seeds.is_empty() {
        vec![cfg.master_seed]
    } else {
        opts.seeds.clone()
    }
}

#[derive(Serialize)]
struct VariantSummary {
    variant: String,
    seeds: Vec<u64>,
    fused: Summary,
    branch_3d: Summary,
    branch_2d: Summary,
}

fn summarize(variant: &str, seeds: &[u64], reports: &[RunReport]) -> VariantSummary {
    let med = |f: fn(&RunReport) -> Summary| Summary::median_of(&reports.iter().map(f).collect::<Vec<_>>());
    VariantSummary {
        variant: variant.to_string(),
        seeds: seeds.to_vec(),
        fused: med(|r| r.fused.summary()),
        branch_3d: med(|r| r.branch_3d.summary()),
        branch_2d: med(|r| r.branch_2d.summary()),
    }
}

fn write_summary(dir: &Path, name: &str, summaries: &[VariantSummary], delta: bool) -> Result<String> {
    let rows: Vec<(String, Summary)> = summaries.iter().map(|s| (s.variant.clone(), s.fused)).collect();
    let mut text = String::from("Fused output (median over seeds)\n");
    text.push_str(&summary_table(&rows, delta));
    text.push_str("\n3D branch (median over seeds)\n");
    let rows3: Vec<(String, Summary)> = summaries.iter().map(|s| (s.variant.clone(), s.branch_3d)).collect();
    text.push_str(&summary_table(&rows3, delta));
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{name}.txt")), &text)?;
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(summaries)?)?;
    Ok(text)
}

fn cmd_run(config: &Path, opts: &RunOpts) -> Result<()> {
    let cfg = load_config(config)?;
    let seeds = seeds_or_default(opts, &cfg);
    let jobs: Vec<Job> = seeds
        .iter()
        .map(|&seed| Job {
            label: format!("seed {seed}"),
            cfg: RunConfig { master_seed: seed, ..cfg.clone() },
            dir: opts.out_dir.join(format!("seed-{seed}")),
        })
        .collect();
    let reports = run_jobs(&jobs, opts.parallel)?;
    if reports.len() == 1 {
        print!("{}", reports[0].text_table());
    } else {
        let s = summarize("run", &seeds, &reports);
        print!("{}", write_summary(&opts.out_dir, "summary", &[s], false)?);
    }
    Ok(())
}

fn cmd_ablate(axis: Axis, config: &Path, opts: &RunOpts) -> Result<()> {
    let cfg = load_config(config)?;
    let seeds = seeds_or_default(opts, &cfg);
    let variants: Vec<(String, RunConfig)> = match axis {
        Axis::MaskLoss => [true, false]
            .into_iter()
            .map(|on| {
                let name = if on { "mask-loss-on" } else { "mask-loss-off" };
                (name.to_string(), RunConfig { mask_loss_enabled: on, ..cfg.clone() })
            })
            .collect(),
        Axis::Condition => ConditionMode::ALL
            .into_iter()
            .map(|mode| {
                let mut c = RunConfig { condition_mode: mode, ..cfg.clone() };
                if mode == ConditionMode::Text {
                    c.cond_dim = c.dim;
                }
                (format!("condition-{mode}"), c)
            })
            .collect(),
    };
    let mut jobs = Vec::new();
    for (name, vcfg) in &variants {
        vcfg.validate()?;
        for &seed in &seeds {
            jobs.push(Job {
                label: format!("{name} seed {seed}"),
                cfg: RunConfig { master_seed: seed, ..vcfg.clone() },
                dir: opts.out_dir.join(name).join(format!("seed-{seed}")),
            });
        }
    }
    let reports = run_jobs(&jobs, opts.parallel)?;
    let summaries: Vec<VariantSummary> = variants
        .iter()
        .zip(reports.chunks(seeds.len()))
        .map(|((name, _), reps)| summarize(name, &seeds, reps))
        .collect();
    print!("{}", write_summary(&opts.out_dir, "ablation", &summaries, true)?);
    Ok(())
}

fn cmd_eval(checkpoint: &Path, scenes: &[PathBuf], out_dir: Option<&Path>) -> Result<()> {
    let (model, cfg) = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let loaded = scenes
        .iter()
        .map(|p| read_scene_file(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    for (p, s) in scenes.iter().zip(&loaded) {
        if s.n_categories != cfg.scene.n_categories {
            bail!(
                "{} has {} categories, the checkpoint expects {}",
                p.display(),
                s.n_categories,
                cfg.scene.n_categories
            );
        }
    }
    let ev = evaluate(&model, &cfg, &loaded)?;
    let rows = [
        ("3D branch".to_string(), ev.branch_3d.summary()),
        ("2D branch".to_string(), ev.branch_2d.summary()),
        ("Fused".to_string(), ev.fused.summary()),
    ];
    let table = summary_table(&rows, false);
    print!("{table}");
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("eval.txt"), &table)?;
        let json = serde_json::json!({
            "checkpoint": checkpoint.display().to_string(),
            "created": timestamp(),
            "fused": ev.fused,
            "branch_3d": ev.branch_3d,
            "branch_2d": ev.branch_2d,
        });
        fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&json)?)?;
    }
    Ok(())
}

fn cmd_gen_scenes(config: &Path, seed: Option<u64>, out_dir: &Path) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    for (split, name, count) in [(0, "train", cfg.n_scenes), (1, "val", cfg.n_val_scenes)] {
        let dir = out_dir.join(name);
        fs::create_dir_all(&dir)?;
        for k in 0..count {
            let scene = generate_scene_with(scene_seed(cfg.master_seed, split, k), &cfg.scene, &cfg.partition)?;
            write_scene_file(&scene, &dir.join(format!("scene-{k:03}.xm3d")))?;
        }
        println!("wrote {count} {name} scenes to {}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, opts } => cmd_run(config, opts),
        Command::Ablate { axis, config, opts } => cmd_ablate(*axis, config, opts),
        Command::Eval {
            checkpoint,
            scenes,
            out_dir,
        } => cmd_eval(checkpoint, scenes, out_dir.as_deref()),
        Command::GenScenes { config, seed, out_dir } => cmd_gen_scenes(config, *seed, out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<MissingConfig>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
