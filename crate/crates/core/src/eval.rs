//! Segmentation metrics, run reports and the plain-text result tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::scenegen::CategoryPartition;

/// Counts indexed `[ground truth][prediction]`.
pub type Confusion = Vec<Vec<u64>>;

pub fn confusion_matrix(truth: &[usize], pred: &[usize], n_categories: usize) -> Result<Confusion> {
    if truth.len() != pred.len() {
        return Err(dim_mismatch(format!(
            "{} labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut m = vec![vec![0u64; n_categories]; n_categories];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= n_categories || p >= n_categories {
            return Err(dim_mismatch(format!("label pair ({t}, {p}) outside {n_categories} classes")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// IoU per class in percent; `None` where the class has zero union.
pub fn compute_iou(confusion: &[Vec<u64>]) -> Result<Vec<Option<f64>>> {
    let l = confusion.len();
    if confusion.iter().any(|r| r.len() != l) {
        return Err(dim_mismatch("confusion matrix is not square"));
    }
    Ok((0..l)
        .map(|c| {
            let tp = confusion[c][c];
            let fn_: u64 = confusion[c].iter().sum::<u64>() - tp;
            let fp: u64 = (0..l).map(|r| confusion[r][c]).sum::<u64>() - tp;
            let union = tp + fp + fn_;
            (union > 0).then(|| 100.0 * tp as f64 / union as f64)
        })
        .collect())
}

/// Harmonic mean of base and novel mIoU; zero when both are zero.
pub fn compute_hiou(base_miou: f64, novel_miou: f64) -> f64 {
    let s = base_miou + novel_miou;
    if s > 0.0 {
        2.0 * base_miou * novel_miou / s
    } else {
        0.0
    }
}

fn mean_present(iou: &[Option<f64>], classes: &[usize]) -> f64 {
    let vals: Vec<f64> = classes.iter().filter_map(|&c| iou.get(c).copied().flatten()).collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub confusion: Confusion,
    pub per_class_iou: Vec<Option<f64>>,
    pub base_miou: f64,
    pub novel_miou: f64,
    pub hiou: f64,
}

impl MetricReport {
    pub fn from_confusion(confusion: Confusion, partition: &CategoryPartition) -> Result<Self> {
        let per_class_iou = compute_iou(&confusion)?;
        let base_miou = mean_present(&per_class_iou, &partition.base_ids);
        let novel_miou = mean_present(&per_class_iou, &partition.novel_ids);
        Ok(Self {
            confusion,
            per_class_iou,
            base_miou,
            novel_miou,
            hiou: compute_hiou(base_miou, novel_miou),
        })
    }

    /// Mean IoU over every class with a nonzero union.
    pub fn miou(&self) -> f64 {
        let all: Vec<usize> = (0..self.per_class_iou.len()).collect();
        mean_present(&self.per_class_iou, &all)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            hiou: self.hiou,
            base: self.base_miou,
            novel: self.novel_miou,
        }
    }
}

/// The (hIoU, base, novel) triple shown in result tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub hiou: f64,
    pub base: f64,
    pub novel: f64,
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl Summary {
    /// Component-wise median.
    pub fn median_of(items: &[Summary]) -> Summary {
        let pick = |f: fn(&Summary) -> f64| median(&items.iter().map(f).collect::<Vec<_>>());
        Summary {
            hiou: pick(|s| s.hiou),
            base: pick(|s| s.base),
            novel: pick(|s| s.novel),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub loss: f64,
    pub tau: f64,
    /// Fused-output validation metrics after this epoch.
    pub val_miou: f64,
    pub val_base: f64,
    pub val_novel: f64,
    pub val_hiou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    /// SHA-256 of the canonical configuration text.
    pub config_hash: String,
    pub library_version: String,
    pub condition_mode: String,
    pub mask_loss_enabled: bool,
    /// Filled in by front ends; the library never reads the clock.
    pub created: Option<String>,
}

/// Everything one training run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub meta: RunMetadata,
    pub category_names: Vec<String>,
    pub fused: MetricReport,
    pub branch_3d: MetricReport,
    pub branch_2d: MetricReport,
    pub history: Vec<EpochRecord>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    /// Branch table followed by per-class IoU of the fused output.
    pub fn text_table(&self) -> String {
        let rows = [
            ("3D branch".to_string(), self.branch_3d.summary()),
            ("2D branch".to_string(), self.branch_2d.summary()),
            ("Fused".to_string(), self.fused.summary()),
        ];
        let mut out = format!(
            "seed {}  mode {}  mask loss {}\n",
            self.meta.seed,
            self.meta.condition_mode,
            if self.meta.mask_loss_enabled { "on" } else { "off" }
        );
        out.push_str(&summary_table(&rows, false));
        out.push('\n');
        let width = self.category_names.iter().map(|n| n.len()).max().unwrap_or(5).max(8);
        let _ = writeln!(out, "{:<width$}  {:>6}", "Category", "IoU");
        for (name, iou) in self.category_names.iter().zip(&self.fused.per_class_iou) {
            let v = iou.map_or("-".to_string(), |v| format!("{v:.1}"));
            let _ = writeln!(out, "{name:<width$}  {v:>6}");
        }
        out
    }
}

/// Aligned `hIoU / Base / Novel` table; with `delta`, each row after the
/// first also shows its difference from the first row.
pub fn summary_table(rows: &[(String, Summary)], delta: bool) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(7).max(7);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}  {:>6}  {:>6}  {:>6}", "Variant", "hIoU", "Base", "Novel");
    if delta {
        let _ = write!(out, "  {:>7}  {:>7}  {:>7}", "ΔhIoU", "ΔBase", "ΔNovel");
    }
    out.push('\n');
    for (name, s) in rows {
        let _ = write!(out, "{name:<width$}  {:>6.1}  {:>6.1}  {:>6.1}", s.hiou, s.base, s.novel);
        if delta {
            let r0 = rows[0].1;
            let _ = write!(
                out,
                "  {:>+7.1}  {:>+7.1}  {:>+7.1}",
                s.hiou - r0.hiou,
                s.base - r0.base,
                s.novel - r0.novel
            );
        }
        out.push('\n');
    }
    out
}
