//! Leave-one-subject-out evaluation: folds, detection matching, metrics and
//! the per-window ROC curve.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dataio::GroundTruthEntry;
use crate::error::{Error, Result};
use crate::features::VideoFeatures;
use crate::pipeline::{fit, spot_video, training_samples};
use crate::spotting::{
    detection_rows, overlap_ratio, write_detections_csv, Detection, DetectionRow,
    COVERAGE_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosoFold {
    pub held_out: String,
    pub train_videos: Vec<String>,
    pub test_videos: Vec<String>,
}

/// One fold per distinct subject, in subject order. `videos` holds
/// `(video_id, subject_id)` pairs.
pub fn loso_folds<'a>(
    videos: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<Vec<LosoFold>> {
    let mut by_subject: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut all = Vec::new();
    for (video, subject) in videos {
        by_subject.entry(subject).or_default().push(video);
        all.push((video, subject));
    }
    if by_subject.len() < 2 {
        return Err(Error::Validation(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            by_subject.len()
        )));
    }
    Ok(by_subject
        .iter()
        .map(|(&subject, test)| LosoFold {
            held_out: subject.to_string(),
            train_videos: all
                .iter()
                .filter(|(_, s)| *s != subject)
                .map(|(v, _)| v.to_string())
                .collect(),
            test_videos: test.iter().map(|v| v.to_string()).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub detection: usize,
    pub ground_truth: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: Vec<Match>,
}

/// Greedy one-to-one matching in descending confidence. A detection is a
/// true positive when it covers at least 80% of a still unmatched
/// ground-truth interval of its video; the best-covered one is taken.
pub fn match_detections(
    kept: &[Detection],
    ground_truth: &[GroundTruthEntry],
) -> Result<MatchResult> {
    for (i, a) in kept.iter().enumerate() {
        for b in &kept[i + 1..] {
            if a.window.video_id == b.window.video_id
                && a.window.interval().intersects(&b.window.interval())
            {
                return Err(Error::Contract(format!(
                    "{}: detections [{}, {}) and [{}, {}) overlap; run suppression first",
                    a.window.video_id, a.window.start, a.window.end, b.window.start, b.window.end
                )));
            }
        }
    }
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| {
        kept[b]
            .confidence
            .total_cmp(&kept[a].confidence)
            .then(kept[a].window.start.cmp(&kept[b].window.start))
    });
    let mut taken = vec![false; ground_truth.len()];
    let mut result = MatchResult::default();
    for d in order {
        let span = kept[d].window.interval();
        let mut best: Option<(usize, f64)> = None;
        for (g, entry) in ground_truth.iter().enumerate() {
            if taken[g] || entry.video_id != kept[d].window.video_id {
                continue;
            }
            let ratio = overlap_ratio(&span, &entry.interval())?;
            if ratio >= COVERAGE_THRESHOLD && best.is_none_or(|(_, r)| ratio > r) {
                best = Some((g, ratio));
            }
        }
        match best {
            Some((g, _)) => {
                taken[g] = true;
                result.tp += 1;
                result.matches.push(Match {
                    detection: d,
                    ground_truth: g,
                });
            }
            None => result.fp += 1,
        }
    }
    result.fn_ = ground_truth.len() - result.tp;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// No ground truth: recall is reported as 0.
    pub recall_undefined: bool,
    /// No detections: precision is reported as 0.
    pub precision_undefined: bool,
}

pub fn metrics(tp: usize, fp: usize, fn_: usize) -> Metrics {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            (0.0, true)
        } else {
            (num as f64 / den as f64, false)
        }
    };
    let (recall, recall_undefined) = ratio(tp, tp + fn_);
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let f1 = if recall + precision > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        recall,
        precision,
        f1,
        recall_undefined,
        precision_undefined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Windows scoring at least this are called positive; absent for the
    /// origin.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC over `(confidence, label)` pairs, one point per distinct confidence
/// from high to low, starting at the origin and ending at (1, 1).
pub fn roc_curve(scored: &[(f64, bool)]) -> Result<Vec<RocPoint>> {
    let positives = scored.iter().filter(|(_, l)| *l).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Validation(format!(
            "ROC needs both classes, got {positives} positive and {negatives} negative windows"
        )));
    }
    if let Some((c, _)) = scored.iter().find(|(c, _)| !c.is_finite()) {
        return Err(Error::Validation(format!("non-finite confidence {c}")));
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint {
        threshold: None,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(c, label)) in sorted.iter().enumerate() {
        if label {
            tp += 1;
        } else {
            fp += 1;
        }
        if sorted.get(i + 1).is_none_or(|next| next.0 != c) {
            points.push(RocPoint {
                threshold: Some(c),
                fpr: fp as f64 / negatives as f64,
                tpr: tp as f64 / positives as f64,
            });
        }
    }
    Ok(points)
}

/// Trapezoidal area under a curve whose points are ordered by FPR.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub held_out: String,
    pub train_videos: Vec<String>,
    pub test_videos: Vec<String>,
    pub train_windows: usize,
    pub train_positives: usize,
    pub test_windows: usize,
    pub final_loss: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub metrics: Metrics,
    pub auc: f64,
    pub roc: Vec<RocPoint>,
    pub folds: Vec<FoldReport>,
    /// Every test window with its held-out confidence, `kept` marking the
    /// detections that survived threshold and suppression.
    #[serde(skip)]
    pub detections: Vec<DetectionRow>,
}

struct FoldOutcome {
    report: FoldReport,
    scored: Vec<(f64, bool)>,
    rows: Vec<DetectionRow>,
}

fn run_fold(
    fold: &LosoFold,
    features: &[VideoFeatures],
    ground_truth: &[GroundTruthEntry],
    config: &PipelineConfig,
) -> Result<FoldOutcome> {
    let pick = |ids: &[String]| -> Vec<&VideoFeatures> {
        features
            .iter()
            .filter(|f| ids.contains(&f.video_id))
            .collect()
    };
    let train_set = pick(&fold.train_videos);
    let test_set = pick(&fold.test_videos);
    if let Some(leak) = train_set.iter().find(|f| f.subject_id == fold.held_out) {
        return Err(Error::Contract(format!(
            "{} of held-out subject {} is in training",
            leak.video_id, fold.held_out
        )));
    }
    let samples = training_samples(&train_set)?;
    let outcome = fit(&samples, config)?;
    tracing::info!(subject = %fold.held_out, samples = samples.len(), "fold trained");

    let mut scored = Vec::new();
    let mut rows = Vec::new();
    let mut kept_all = Vec::new();
    for video in &test_set {
        let (all, kept) = spot_video(video, &outcome.model, config.spotting.threshold)?;
        for (d, s) in all.iter().zip(&video.sequences) {
            let label = s.label.ok_or_else(|| {
                Error::Consistency(format!(
                    "{}: window {} is unlabelled",
                    video.video_id, s.window.index
                ))
            })?;
            scored.push((d.confidence, label));
        }
        rows.extend(detection_rows(&all, &kept));
        kept_all.extend(kept);
    }
    let test_gt: Vec<GroundTruthEntry> = ground_truth
        .iter()
        .filter(|g| fold.test_videos.contains(&g.video_id))
        .cloned()
        .collect();
    let m = match_detections(&kept_all, &test_gt)?;
    Ok(FoldOutcome {
        report: FoldReport {
            held_out: fold.held_out.clone(),
            train_videos: fold.train_videos.clone(),
            test_videos: fold.test_videos.clone(),
            train_windows: samples.len(),
            train_positives: samples.iter().filter(|s| s.label).count(),
            test_windows: scored.len(),
            final_loss: outcome.loss_history.last().copied().unwrap_or(f64::NAN),
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
        },
        scored,
        rows,
    })
}

/// Trains one model per held-out subject, spots its videos, and pools the
/// results. `features` must be labelled.
pub fn run_loso_evaluation(
    features: &[VideoFeatures],
    ground_truth: &[GroundTruthEntry],
    config: &PipelineConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let folds = loso_folds(
        features
            .iter()
            .map(|f| (f.video_id.as_str(), f.subject_id.as_str())),
    )?;
    let outcomes = folds
        .par_iter()
        .map(|fold| run_fold(fold, features, ground_truth, config))
        .collect::<Result<Vec<_>>>()?;

    let mut scored = Vec::new();
    let mut detections = Vec::new();
    let mut fold_reports = Vec::new();
    for o in outcomes {
        scored.extend(o.scored);
        detections.extend(o.rows);
        fold_reports.push(o.report);
    }
    let tp = fold_reports.iter().map(|f| f.tp).sum();
    let fp = fold_reports.iter().map(|f| f.fp).sum();
    let fn_ = fold_reports.iter().map(|f| f.fn_).sum();
    let roc = roc_curve(&scored)?;
    Ok(EvalReport {
        threshold: config.spotting.threshold,
        tp,
        fp,
        fn_,
        metrics: metrics(tp, fp, fn_),
        auc: auc(&roc),
        roc,
        folds: fold_reports,
        detections,
    })
}

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ROC_FILE: &str = "roc.csv";
pub const DETECTIONS_FILE: &str = "detections.csv";

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    fold: &'a str,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    recall: f64,
    precision: f64,
    f1: f64,
}

#[derive(Serialize)]
struct RocRow {
    threshold: Option<f64>,
    fpr: f64,
    tpr: f64,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>, path: &Path) -> Result<Vec<u8>> {
    let mut out = csv::Writer::from_writer(Vec::new());
    for row in rows {
        out.serialize(row)
            .map_err(|e| Error::format("csv", path, e))?;
    }
    out.into_inner().map_err(|e| Error::format("csv", path, e))
}

/// Writes report.json, metrics.csv (one row per fold plus `all`), roc.csv
/// and detections.csv into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_vec_pretty(report).expect("report serializes");
    write_bytes(&dir.join(REPORT_FILE), &json)?;

    let path = dir.join(METRICS_FILE);
    let fold_rows = report.folds.iter().map(|f| {
        let m = metrics(f.tp, f.fp, f.fn_);
        MetricsRow {
            fold: &f.held_out,
            tp: f.tp,
            fp: f.fp,
            fn_: f.fn_,
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
        }
    });
    let pooled = MetricsRow {
        fold: "all",
        tp: report.tp,
        fp: report.fp,
        fn_: report.fn_,
        recall: report.metrics.recall,
        precision: report.metrics.precision,
        f1: report.metrics.f1,
    };
    write_bytes(
        &path,
        &csv_bytes(fold_rows.chain(std::iter::once(pooled)), &path)?,
    )?;

    let path = dir.join(ROC_FILE);
    let roc_rows = report.roc.iter().map(|p| RocRow {
        threshold: p.threshold,
        fpr: p.fpr,
        tpr: p.tpr,
    });
    write_bytes(&path, &csv_bytes(roc_rows, &path)?)?;

    write_detections_csv(&dir.join(DETECTIONS_FILE), &report.detections)
}

pub fn read_report(dir: &Path) -> Result<EvalReport> {
    let path = dir.join(REPORT_FILE);
    let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::format("report", &path, e))
}
