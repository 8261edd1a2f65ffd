//! Output artifacts: FP/TP operating tables at a fixed FPR grid, ROC point
//! lists with AUC, sensitivity/specificity summaries, ranked
//! feature-importance lists, and deterministic file rendering (delimited
//! tables, a structured summary, a static SVG ROC plot).
//!
//! Thresholding convention, used consistently everywhere in this module:
//! a subject is called positive when `score >= t`. For each target FPR the
//! table reports the maximum TPR attainable with achieved FPR <= target
//! (scanning every distinct pooled score as a candidate threshold; among
//! thresholds tied on TPR the largest — most conservative — one is kept).
//! Scores are pooled across folds and repeats; per-fold curve averaging is
//! deliberately not done, and the summary file says so.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cv::{DecisionLog, ModelReport};
use crate::error::{Error, Result};

/// One operating point: the threshold maximizing TPR subject to
/// FPR <= target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_fpr: f64,
    pub threshold: f64,
    pub achieved_fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingTable {
    pub points: Vec<OperatingPoint>,
}

fn pooled_scores(log: &DecisionLog) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut negatives = Vec::new();
    let mut positives = Vec::new();
    for row in &log.rows {
        if row.true_label == 1 {
            positives.push(row.score);
        } else {
            negatives.push(row.score);
        }
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InvalidData("degenerate log: both classes are required".into()));
    }
    Ok((negatives, positives))
}

fn rates_at(negatives: &[f64], positives: &[f64], t: f64) -> (f64, f64) {
    let fp = negatives.iter().filter(|&&s| s >= t).count();
    let tp = positives.iter().filter(|&&s| s >= t).count();
    (fp as f64 / negatives.len() as f64, tp as f64 / positives.len() as f64)
}

/// Exhaustive threshold search over pooled decision scores for each target
/// FPR in the grid.
pub fn operating_table(log: &DecisionLog, fpr_grid: &[f64]) -> Result<OperatingTable> {
    let (negatives, positives) = pooled_scores(log)?;
    let mut candidates: Vec<f64> = negatives.iter().chain(&positives).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    // A threshold above every score (nothing called positive) is always
    // feasible, so every target has an operating point.
    candidates.push(f64::INFINITY);

    let mut points = Vec::with_capacity(fpr_grid.len());
    for &target in fpr_grid {
        let mut best: Option<OperatingPoint> = None;
        for &t in &candidates {
            let (fpr, tpr) = rates_at(&negatives, &positives, t);
            if fpr > target {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => tpr > b.tpr || (tpr == b.tpr && t > b.threshold),
            };
            if better {
                best = Some(OperatingPoint { target_fpr: target, threshold: t, achieved_fpr: fpr, tpr });
            }
        }
        points.push(best.expect("the +inf threshold always satisfies any target"));
    }
    Ok(OperatingTable { points })
}

/// Sensitivity and specificity of the logged (already thresholded) class
/// decisions.
pub fn sens_spec(log: &DecisionLog) -> Result<(f64, f64)> {
    let mut tally = [[0usize; 2]; 2]; // [true][predicted]
    for row in &log.rows {
        tally[row.true_label as usize][row.predicted as usize] += 1;
    }
    let positives = tally[1][0] + tally[1][1];
    let negatives = tally[0][0] + tally[0][1];
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidData("degenerate log: both classes are required".into()));
    }
    Ok((
        tally[1][1] as f64 / positives as f64,
        tally[0][0] as f64 / negatives as f64,
    ))
}

/// ROC step-function points (FPR, TPR), one per distinct threshold, from
/// (0,0)-ish high thresholds to (1,1).
pub fn roc_points(log: &DecisionLog) -> Result<Vec<(f64, f64)>> {
    let (negatives, positives) = pooled_scores(log)?;
    let mut thresholds: Vec<f64> = negatives.iter().chain(&positives).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for &t in &thresholds {
        points.push(rates_at(&negatives, &positives, t));
    }
    if *points.last().unwrap() != (1.0, 1.0) {
        points.push((1.0, 1.0));
    }
    Ok(points)
}

/// AUC by trapezoid integration of the ROC points.
pub fn auc_trapezoid(points: &[(f64, f64)]) -> f64 {
    let mut auc = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        auc += (x1 - x0) * (y0 + y1) / 2.0;
    }
    auc
}

/// AUC as the Mann-Whitney rank statistic: P(positive score > negative
/// score) + 0.5 P(tie).
pub fn auc_rank(log: &DecisionLog) -> Result<f64> {
    let (negatives, positives) = pooled_scores(log)?;
    let mut wins = 0.0;
    for &p in &positives {
        for &n in &negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (positives.len() * negatives.len()) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    /// Fraction of folds in which the feature was selected.
    pub selection_frequency: f64,
    /// Mean classifier importance over folds providing one; absent when no
    /// fold produced importances for this feature.
    pub mean_importance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub entries: Vec<ImportanceEntry>,
    /// Set when no fold provided model importances and the ranking is by
    /// selection frequency alone.
    pub note: Option<String>,
}

/// Rank features by cross-fold selection frequency, then mean importance,
/// then name.
pub fn importance_report(report: &ModelReport) -> ImportanceReport {
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let folds = report.outcomes.len().max(1);
    for outcome in &report.outcomes {
        for (i, feature) in outcome.selected_features.iter().enumerate() {
            *counts.entry(feature).or_default() += 1;
            if let Some(importances) = &outcome.importances {
                if let Some(&imp) = importances.get(i) {
                    let slot = sums.entry(feature).or_default();
                    slot.0 += imp;
                    slot.1 += 1;
                }
            }
        }
    }
    let mut entries: Vec<ImportanceEntry> = counts
        .iter()
        .map(|(&feature, &count)| ImportanceEntry {
            feature: feature.to_string(),
            selection_frequency: count as f64 / folds as f64,
            mean_importance: sums.get(feature).map(|&(sum, n)| sum / n as f64),
        })
        .collect();
    entries.sort_by(|a, b| {
        b.selection_frequency
            .partial_cmp(&a.selection_frequency)
            .unwrap()
            .then(
                b.mean_importance
                    .unwrap_or(f64::NEG_INFINITY)
                    .partial_cmp(&a.mean_importance.unwrap_or(f64::NEG_INFINITY))
                    .unwrap(),
            )
            .then(a.feature.cmp(&b.feature))
    });
    let note = if !entries.is_empty() && sums.is_empty() {
        Some("no model importances available; ranking is by selection frequency only".to_string())
    } else {
        None
    };
    ImportanceReport { entries, note }
}

fn render_roc_svg(points: &[(f64, f64)]) -> String {
    let size = 400.0;
    let margin = 40.0;
    let scale = size - 2.0 * margin;
    let map = |x: f64, y: f64| (margin + x * scale, size - margin - y * scale);
    let mut path = String::new();
    for (i, &(x, y)) in points.iter().enumerate() {
        let (px, py) = map(x, y);
        path.push_str(if i == 0 { "M" } else { " L" });
        path.push_str(&format!("{px} {py}"));
    }
    let (dx0, dy0) = map(0.0, 0.0);
    let (dx1, dy1) = map(1.0, 1.0);
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" viewBox=\"0 0 400 400\">\n",
            "<rect x=\"40\" y=\"40\" width=\"320\" height=\"320\" fill=\"none\" stroke=\"black\"/>\n",
            "<line x1=\"{dx0}\" y1=\"{dy0}\" x2=\"{dx1}\" y2=\"{dy1}\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n",
            "<path d=\"{path}\" fill=\"none\" stroke=\"crimson\" stroke-width=\"2\"/>\n",
            "<text x=\"200\" y=\"392\" text-anchor=\"middle\" font-size=\"12\">false positive rate</text>\n",
            "<text x=\"12\" y=\"200\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 12 200)\">true positive rate</text>\n",
            "</svg>\n"
        ),
        dx0 = dx0,
        dy0 = dy0,
        dx1 = dx1,
        dy1 = dy1,
        path = path,
    )
}

/// Render the full report set into `out_dir`: `operating_table.csv`,
/// `importance.csv`, `summary.toml`, `roc.svg`. Output bytes are a pure
/// function of the inputs.
pub fn render(
    out_dir: &Path,
    log: &DecisionLog,
    model_report: &ModelReport,
    fpr_grid: &[f64],
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let table = operating_table(log, fpr_grid)?;
    let (sensitivity, specificity) = sens_spec(log)?;
    let roc = roc_points(log)?;
    let auc_t = auc_trapezoid(&roc);
    let auc_r = auc_rank(log)?;
    let importance = importance_report(model_report);

    let mut written = Vec::new();

    let path = out_dir.join("operating_table.csv");
    let mut out = Vec::new();
    writeln!(out, "target_fpr,threshold,achieved_fpr,tpr").unwrap();
    for p in &table.points {
        writeln!(out, "{},{},{},{}", p.target_fpr, p.threshold, p.achieved_fpr, p.tpr).unwrap();
    }
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = out_dir.join("importance.csv");
    let mut out = Vec::new();
    writeln!(out, "feature,selection_frequency,mean_importance").unwrap();
    for e in &importance.entries {
        let imp = e.mean_importance.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", e.feature, e.selection_frequency, imp).unwrap();
    }
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = out_dir.join("summary.toml");
    let mut out = Vec::new();
    writeln!(out, "# scores pooled across folds and repeats; per-fold ROC averaging not applied").unwrap();
    writeln!(out, "experiment = {:?}", model_report.experiment).unwrap();
    writeln!(out, "decisions = {}", log.rows.len()).unwrap();
    writeln!(out, "accuracy = {}", model_report.accuracy).unwrap();
    writeln!(out, "sensitivity = {sensitivity}").unwrap();
    writeln!(out, "specificity = {specificity}").unwrap();
    writeln!(out, "auc = {auc_t}").unwrap();
    writeln!(out, "auc_rank = {auc_r}").unwrap();
    if let Some(note) = &importance.note {
        writeln!(out, "importance_note = {note:?}").unwrap();
    }
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = out_dir.join("roc.svg");
    std::fs::write(&path, render_roc_svg(&roc)).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    Ok(written)
}
