//! Classification metrics: ROC curve, AUC and the confusion-matrix suite
//! (sensitivity, specificity, accuracy, F₁), plus the mean ± SD report
//! shapes the validation harness fills in.
//!
//! AUC is computed from tie-grouped integer counts with a single final
//! division, which makes the trapezoidal area and the Mann–Whitney pairwise
//! statistic literally the same number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ROC curve points from sweeping the decision threshold over descending
/// unique scores. Tied scores are grouped, so ties across classes appear as
/// diagonal segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    /// Score threshold generating each point ("positive iff score ≥ t");
    /// the first entry is +∞ for the all-negative corner.
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fpr", "tpr", "threshold"])?;
        for ((fpr, tpr), t) in self.points.iter().zip(&self.thresholds) {
            w.write_record([format!("{fpr}"), format!("{tpr}"), format!("{t}")])?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8"))
    }
}

/// Scores sorted descending and tie-grouped: (score, positives, negatives).
fn tie_groups(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, u64, u64)>> {
    if scores.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN"));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some((s, p, n)) if *s == scores[i] => {
                if labels[i] == 1 {
                    *p += 1;
                } else {
                    *n += 1;
                }
            }
            _ => {
                let (p, n) = if labels[i] == 1 { (1, 0) } else { (0, 1) };
                groups.push((scores[i], p, n));
            }
        }
    }
    Ok(groups)
}

fn class_totals(labels: &[u8]) -> Result<(u64, u64)> {
    let positives = labels.iter().filter(|&&l| l == 1).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Domain(
            "both classes must be present to compute ranking metrics".into(),
        ));
    }
    Ok((positives, negatives))
}

/// ROC curve over descending unique scores. Errors when only one class is
/// present (the rates are undefined).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (positives, negatives) = class_totals(labels)?;
    let groups = tie_groups(scores, labels)?;
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let mut tp = 0u64;
    let mut fp = 0u64;
    for (score, p, n) in groups {
        tp += p;
        fp += n;
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
        thresholds.push(score);
    }
    Ok(RocCurve { points, thresholds })
}

/// Area under the ROC curve. Computed as an integer numerator over
/// tie-grouped counts divided once by `2·P·N`, which is simultaneously the
/// exact trapezoidal area and the exact Mann–Whitney statistic
/// `P(score⁺ > score⁻) + ½·P(tie)`.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (positives, negatives) = class_totals(labels)?;
    let groups = tie_groups(scores, labels)?;
    let mut numerator: u128 = 0;
    let mut tp_above = 0u64; // positives with strictly higher score
    for (_, p, n) in groups {
        numerator += n as u128 * (2 * tp_above + p) as u128;
        tp_above += p;
    }
    Ok(numerator as f64 / (2 * positives * negatives) as f64)
}

/// Raw confusion-matrix counts at one operating threshold, with the event
/// class (label 1) as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionCounts {
    /// Count outcomes with the rule "positive iff score > threshold".
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts> {
        if scores.len() != labels.len() {
            return Err(Error::Domain(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        let mut c = ConfusionCounts {
            tp: 0,
            fn_: 0,
            tn: 0,
            fp: 0,
        };
        for (&s, &y) in scores.iter().zip(labels) {
            let predicted_positive = s > threshold;
            match (y == 1, predicted_positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
            }
        }
        Ok(c)
    }

    pub fn sensitivity(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn specificity(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp) as f64
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / (self.tp + self.tn + self.fp + self.fn_) as f64
    }

    /// Harmonic mean of precision and recall; 0 when both vanish.
    pub fn f1(&self) -> f64 {
        let denominator = 2 * self.tp + self.fp + self.fn_;
        if denominator == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / denominator as f64
    }
}

/// The (sensitivity, specificity, accuracy, F₁) tuple at one threshold.
/// Errors when a class is absent, since sensitivity or specificity would
/// be 0/0.
pub fn confusion_metrics(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<(f64, f64, f64, f64)> {
    class_totals(labels)?;
    let c = ConfusionCounts::from_scores(scores, labels, threshold)?;
    Ok((c.sensitivity(), c.specificity(), c.accuracy(), c.f1()))
}

/// A value reported as mean ± SD over repeats (population SD, so a single
/// repeat reports SD = 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn from_values(values: &[f64]) -> MeanSd {
        assert!(!values.is_empty(), "mean of zero values");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanSd {
            mean,
            sd: variance.sqrt(),
        }
    }
}

/// The metric set computed on one repeat's pooled out-of-fold scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub f1: f64,
}

impl MetricValues {
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricValues> {
        let (sensitivity, specificity, accuracy, f1) =
            confusion_metrics(scores, labels, threshold)?;
        Ok(MetricValues {
            auc: auc(scores, labels)?,
            sensitivity,
            specificity,
            accuracy,
            f1,
        })
    }
}

/// Cross-validation report: per-repeat values plus mean ± SD aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Fold scheme descriptor, e.g. "loocv" or "5-fold".
    pub scheme: String,
    pub repeats: usize,
    /// Operating threshold for the confusion metrics.
    pub threshold: f64,
    /// How per-repeat metrics were computed (recorded for transparency).
    pub score_pooling: String,
    pub per_repeat: Vec<MetricValues>,
    pub auc: MeanSd,
    pub sensitivity: MeanSd,
    pub specificity: MeanSd,
    pub accuracy: MeanSd,
    pub f1: MeanSd,
}

impl MetricsReport {
    pub fn aggregate(scheme: &str, threshold: f64, per_repeat: Vec<MetricValues>) -> MetricsReport {
        let pick = |f: fn(&MetricValues) -> f64| -> MeanSd {
            MeanSd::from_values(&per_repeat.iter().map(f).collect::<Vec<_>>())
        };
        MetricsReport {
            scheme: scheme.to_string(),
            repeats: per_repeat.len(),
            threshold,
            score_pooling: "pooled out-of-fold scores per repeat".to_string(),
            auc: pick(|m| m.auc),
            sensitivity: pick(|m| m.sensitivity),
            specificity: pick(|m| m.specificity),
            accuracy: pick(|m| m.accuracy),
            f1: pick(|m| m.f1),
            per_repeat,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        Ok(json)
    }
}
