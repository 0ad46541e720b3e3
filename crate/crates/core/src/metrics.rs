//! Classification accuracies, point-level segmentation metrics and timing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Error, Result};
use crate::features::labels_match;
use crate::kdtree::KdTree;
use crate::par;

pub const DEFAULT_MAX_DIST: f64 = 0.05;

/// Per-object classification outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub object_id: i32,
    /// Label predicted by each view.
    pub views: Vec<String>,
    /// The strategy's single prediction, if it produced one.
    pub prediction: Option<String>,
    pub ground_truth: String,
}

impl ClassificationRecord {
    pub fn view_hits(&self) -> usize {
        self.views.iter().filter(|v| labels_match(v, &self.ground_truth)).count()
    }
}

/// Mean over objects of the fraction of correct views.
pub fn view_accuracy(records: &[ClassificationRecord]) -> Result<f64> {
    ensure_arg!(!records.is_empty(), "no classification records");
    let mut sum = 0.0;
    for r in records {
        ensure_arg!(!r.views.is_empty(), "object {} has no views", r.object_id);
        sum += r.view_hits() as f64 / r.views.len() as f64;
    }
    Ok(sum / records.len() as f64)
}

/// Fraction of objects whose prediction matches; missing predictions are wrong.
pub fn object_accuracy(records: &[ClassificationRecord]) -> Result<f64> {
    ensure_arg!(!records.is_empty(), "no classification records");
    let hits = records
        .iter()
        .filter(|r| r.prediction.as_deref().is_some_and(|p| labels_match(p, &r.ground_truth)))
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Fraction of objects for which at least one view is correct.
pub fn upper_bound_accuracy(records: &[ClassificationRecord]) -> Result<f64> {
    ensure_arg!(!records.is_empty(), "no classification records");
    let hits = records.iter().filter(|r| r.view_hits() > 0).count();
    Ok(hits as f64 / records.len() as f64)
}

/// For every ground-truth point, the class of the nearest labeled predicted
/// point within `max_dist`, else −1. Predicted points with class −1 are ignored.
pub fn transfer_labels(
    predicted: &[[f64; 3]],
    predicted_class: &[i32],
    gt: &[[f64; 3]],
    max_dist: f64,
) -> Result<Vec<i32>> {
    ensure_arg!(
        predicted.len() == predicted_class.len(),
        "{} predicted points but {} classes",
        predicted.len(),
        predicted_class.len()
    );
    ensure_arg!(max_dist >= 0.0, "max_dist must be non-negative");
    let (pts, cls): (Vec<[f64; 3]>, Vec<i32>) = predicted
        .iter()
        .zip(predicted_class)
        .filter(|(_, &c)| c >= 0)
        .map(|(p, &c)| (*p, c))
        .unzip();
    if pts.is_empty() {
        return Ok(vec![-1; gt.len()]);
    }
    let tree = KdTree::build(pts);
    let limit = max_dist * max_dist;
    Ok(par::map(gt, |q| match tree.nearest_one(q) {
        Some(n) if n.dist2 <= limit => cls[n.index],
        _ => -1,
    }))
}

/// mAcc variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaccForm {
    /// `TPᵢ / (TPᵢ + FPᵢ)`.
    #[default]
    Precision,
    /// `TPᵢ / nᵢ`.
    Recall,
}

impl FromStr for MaccForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precision" => Ok(MaccForm::Precision),
            "recall" => Ok(MaccForm::Recall),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mAcc form {s:?} (expected precision or recall)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Ground-truth points of this class.
    pub n: u64,
}

/// Per-class confusion counts keyed by class id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub classes: BTreeMap<i32, ClassCounts>,
}

impl ConfusionTally {
    /// Ground-truth −1 points are skipped; a −1 prediction is a miss only.
    pub fn count(gt: &[i32], pred: &[i32]) -> Result<Self> {
        ensure_arg!(
            gt.len() == pred.len(),
            "{} ground-truth labels but {} predictions",
            gt.len(),
            pred.len()
        );
        let pairs: Vec<(i32, i32)> = gt.iter().copied().zip(pred.iter().copied()).collect();
        Ok(par::fold_chunks(
            &pairs,
            1 << 14,
            ConfusionTally::default(),
            |mut t, chunk| {
                for &(g, p) in chunk {
                    t.add(g, p);
                }
                t
            },
            ConfusionTally::merge,
        ))
    }

    fn add(&mut self, g: i32, p: i32) {
        if g < 0 {
            return;
        }
        let gc = self.classes.entry(g).or_default();
        gc.n += 1;
        if p == g {
            gc.tp += 1;
            return;
        }
        gc.fn_ += 1;
        if p >= 0 {
            self.classes.entry(p).or_default().fp += 1;
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (k, c) in other.classes {
            let e = self.classes.entry(k).or_default();
            e.tp += c.tp;
            e.fp += c.fp;
            e.fn_ += c.fn_;
            e.n += c.n;
        }
        self
    }

    /// Classes with at least one ground-truth point.
    pub fn gt_classes(&self) -> impl Iterator<Item = (i32, &ClassCounts)> {
        self.classes.iter().filter(|(_, c)| c.n > 0).map(|(&k, c)| (k, c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: i32,
    pub iou: f64,
    pub acc: f64,
    #[serde(flatten)]
    pub counts: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMetrics {
    pub miou: f64,
    pub fmiou: f64,
    pub macc: f64,
    pub macc_form: MaccForm,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// mIOU, frequency-weighted mIOU and mAcc over the classes present in `gt`.
pub fn segmentation_metrics(gt: &[i32], pred: &[i32], form: MaccForm) -> Result<SegmentationMetrics> {
    let tally = ConfusionTally::count(gt, pred)?;
    metrics_from_tally(&tally, form)
}

pub fn metrics_from_tally(tally: &ConfusionTally, form: MaccForm) -> Result<SegmentationMetrics> {
    let per_class: Vec<ClassMetrics> = tally
        .gt_classes()
        .map(|(k, c)| ClassMetrics {
            class_id: k,
            iou: ratio(c.tp, c.tp + c.fp + c.fn_),
            acc: match form {
                MaccForm::Precision => ratio(c.tp, c.tp + c.fp),
                MaccForm::Recall => ratio(c.tp, c.n),
            },
            counts: *c,
        })
        .collect();
    ensure_arg!(!per_class.is_empty(), "ground truth contains no labeled points");
    let n = per_class.len() as f64;
    let total: u64 = per_class.iter().map(|c| c.counts.n).sum();
    Ok(SegmentationMetrics {
        miou: per_class.iter().map(|c| c.iou).sum::<f64>() / n,
        fmiou: per_class.iter().map(|c| c.counts.n as f64 * c.iou).sum::<f64>() / total as f64,
        macc: per_class.iter().map(|c| c.acc).sum::<f64>() / n,
        macc_form: form,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub stages: Vec<StageTime>,
    pub total_seconds: f64,
    pub sampled_frames: usize,
    pub fps: f64,
}

/// Frames per second over the sampled frames.
pub fn fps(sampled_frames: usize, total_seconds: f64) -> Result<f64> {
    ensure_arg!(
        total_seconds >= 0.0 && total_seconds.is_finite(),
        "total time must be finite and non-negative"
    );
    if total_seconds == 0.0 {
        return Err(Error::UndefinedFps);
    }
    Ok(sampled_frames as f64 / total_seconds)
}

pub fn timing_report(stages: &[(String, Duration)], sampled_frames: usize) -> Result<TimingReport> {
    let stages: Vec<StageTime> = stages
        .iter()
        .map(|(s, d)| StageTime {
            stage: s.clone(),
            seconds: d.as_secs_f64(),
        })
        .collect();
    let total: f64 = stages.iter().map(|s| s.seconds).sum();
    Ok(TimingReport {
        fps: fps(sampled_frames, total)?,
        stages,
        total_seconds: total,
        sampled_frames,
    })
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.stages.iter().map(|s| s.stage.len()).max().unwrap_or(5).max(5);
        writeln!(f, "{:<w$}  {:>10}", "stage", "seconds")?;
        for s in &self.stages {
            writeln!(f, "{:<w$}  {:>10.3}", s.stage, s.seconds)?;
        }
        writeln!(f, "{:<w$}  {:>10.3}", "total", self.total_seconds)?;
        writeln!(f, "{:<w$}  {:>10}", "frames", self.sampled_frames)?;
        write!(f, "{:<w$}  {:>10.3}", "fps", self.fps)
    }
}
