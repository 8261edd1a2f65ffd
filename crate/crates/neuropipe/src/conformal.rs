//! Split conformal prediction over classifier scores: per-label p-values and
//! prediction sets at a chosen significance level.
//!
//! Nonconformity of a subject is `1 - score(its label)` where `score` is the
//! classifier's positive-class tendency in [0, 1] (so the score of label 0
//! is `1 - score(1)`). Calibration scores are stored sorted; ties between a
//! new score and calibration scores count toward the p-value (conservative).

use serde::{Deserialize, Serialize};

use crate::classify::FittedClassifier;
use crate::error::{Error, Result};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibration {
    /// Sorted ascending nonconformity scores of the calibration subjects.
    pub scores: Vec<f64>,
}

impl ConformalCalibration {
    pub fn n_cal(&self) -> usize {
        self.scores.len()
    }
}

fn nonconformity(positive_score: f64, label: u8) -> f64 {
    if label == 1 {
        1.0 - positive_score
    } else {
        positive_score
    }
}

/// Score a disjoint calibration set. The caller is responsible for keeping
/// calibration subjects out of training (the CV engine's leakage trace
/// enforces this when wired through it).
pub fn calibrate(
    classifier: &FittedClassifier,
    rows: &[&[f64]],
    labels: &[u8],
) -> Result<ConformalCalibration> {
    if rows.is_empty() {
        return Err(Error::InvalidData("empty calibration set".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::InvalidData("calibration row/label count mismatch".into()));
    }
    let mut scores = Vec::with_capacity(rows.len());
    for (row, &label) in rows.iter().zip(labels) {
        scores.push(nonconformity(classifier.decision_score(row)?, label));
    }
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ConformalCalibration { scores })
}

/// p = (#{calibration scores >= s_new} + 1) / (n_cal + 1), with
/// s_new = 1 - score(candidate label).
pub fn p_value(cal: &ConformalCalibration, classifier: &FittedClassifier, row: &[f64], label: u8) -> Result<f64> {
    let s_new = nonconformity(classifier.decision_score(row)?, label);
    Ok(p_value_of_score(cal, s_new))
}

/// The p-value for an already-computed nonconformity score.
pub fn p_value_of_score(cal: &ConformalCalibration, s_new: f64) -> f64 {
    // sorted ascending: count of scores >= s_new via partition point
    let below = cal.scores.partition_point(|&s| s < s_new);
    let at_least = cal.scores.len() - below;
    (at_least + 1) as f64 / (cal.scores.len() + 1) as f64
}

/// Labels whose p-value exceeds the significance level; may be empty or both.
pub fn prediction_set(
    cal: &ConformalCalibration,
    classifier: &FittedClassifier,
    row: &[f64],
    significance: f64,
) -> Result<Vec<u8>> {
    if !(0.0..1.0).contains(&significance) || significance == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "significance {significance} must lie in (0, 1)"
        )));
    }
    let mut set = Vec::new();
    for label in [0u8, 1u8] {
        if p_value(cal, classifier, row, label)? > significance {
            set.push(label);
        }
    }
    Ok(set)
}
