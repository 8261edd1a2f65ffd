//! Univariate and model-based feature selection with a strict fit/apply
//! split: scoring is fitted on fold-train rows only and test rows are
//! projected through the stored indices.

use crate::classify::{fit, ClassifierFamily, ClassifierSpec, FittedClassifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMethod {
    AnovaF,
    Chi2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScores {
    pub method: ScoreMethod,
    /// Finite or `+inf` (within-group scatter zero while groups differ).
    pub scores: Vec<f64>,
}

fn check_classes(labels: &[u8]) -> Result<()> {
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::InvalidData("feature scoring needs both classes present".into()));
    }
    Ok(())
}

/// One-way ANOVA F per feature: `(between-group SS / df_b) / (within-group SS / df_w)`.
/// Conventions: 0/0 -> 0 (constant feature), positive/0 -> `+inf`.
pub fn anova_f(rows: &[&[f64]], labels: &[u8]) -> Result<FeatureScores> {
    check_classes(labels)?;
    let n = rows.len();
    let p = rows[0].len();
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = n - n1;

    let mut scores = Vec::with_capacity(p);
    for j in 0..p {
        let mut sum0 = 0.0;
        let mut sum1 = 0.0;
        for (row, &l) in rows.iter().zip(labels) {
            if l == 1 {
                sum1 += row[j];
            } else {
                sum0 += row[j];
            }
        }
        let mean0 = sum0 / n0 as f64;
        let mean1 = sum1 / n1 as f64;
        let grand = (sum0 + sum1) / n as f64;

        let ssb = n0 as f64 * (mean0 - grand).powi(2) + n1 as f64 * (mean1 - grand).powi(2);
        let mut ssw = 0.0;
        for (row, &l) in rows.iter().zip(labels) {
            let m = if l == 1 { mean1 } else { mean0 };
            ssw += (row[j] - m).powi(2);
        }
        let df_w = (n - 2) as f64;
        let score = if ssw > 0.0 && df_w > 0.0 {
            ssb / (ssw / df_w)
        } else if ssb > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        scores.push(score);
    }
    Ok(FeatureScores { method: ScoreMethod::AnovaF, scores })
}

/// Pearson chi-squared per feature from a two-row contingency construction:
/// per-class feature sums versus per-class complements against the feature's
/// training maximum, compared with the expectation under label independence.
/// Feature values must be non-negative; enable `min_shift` to shift each
/// feature by its training minimum first.
pub fn chi2_scores(rows: &[&[f64]], labels: &[u8], min_shift: bool) -> Result<FeatureScores> {
    check_classes(labels)?;
    let n = rows.len();
    let p = rows[0].len();
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = n - n1;

    let mut scores = Vec::with_capacity(p);
    for j in 0..p {
        let shift = if min_shift {
            rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min).min(0.0)
        } else {
            0.0
        };
        let value = |row: &[f64]| row[j] - shift;
        if !min_shift {
            if let Some(row) = rows.iter().find(|r| r[j] < 0.0) {
                return Err(Error::InvalidData(format!(
                    "chi2 requires non-negative values; feature {j} has {} (enable min-shift)",
                    row[j]
                )));
            }
        }

        let max = rows.iter().map(|r| value(r)).fold(0.0f64, f64::max);
        let mut present = [0.0f64; 2];
        for (row, &l) in rows.iter().zip(labels) {
            present[l as usize] += value(row);
        }
        let absent = [n0 as f64 * max - present[0], n1 as f64 * max - present[1]];

        let row_totals = [present[0] + present[1], absent[0] + absent[1]];
        let col_totals = [present[0] + absent[0], present[1] + absent[1]];
        let grand = row_totals[0] + row_totals[1];

        let mut chi2 = 0.0;
        if grand > 0.0 {
            for (r, &rt) in row_totals.iter().enumerate() {
                for (c, &ct) in col_totals.iter().enumerate() {
                    let expected = rt * ct / grand;
                    if expected > 0.0 {
                        let observed = if r == 0 { present[c] } else { absent[c] };
                        chi2 += (observed - expected).powi(2) / expected;
                    }
                }
            }
        }
        scores.push(chi2);
    }
    Ok(FeatureScores { method: ScoreMethod::Chi2, scores })
}

/// Top-k indices by descending score; ties and `+inf` groups resolve by
/// ascending feature index.
pub fn select_k_best(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::InvalidConfig(format!(
            "k={k} exceeds feature count {}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order.into_iter().take(k).collect();
    selected.sort_unstable();
    Ok(selected)
}

/// Project rows onto previously selected feature indices (pure; no refit).
pub fn project(rows: &[&[f64]], selected: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| selected.iter().map(|&j| row[j]).collect())
        .collect()
}

/// Importance-based selection wrapping a classifier fit on the provided
/// training rows only. KNN exposes no importances and falls back to ANOVA
/// scoring with a logged warning.
pub fn model_based_select(
    rows: &[&[f64]],
    labels: &[u8],
    family: ClassifierFamily,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let importances = match family {
        ClassifierFamily::Knn => {
            log::warn!("KNN has no native feature importances; falling back to ANOVA F scoring");
            anova_f(rows, labels)?.scores
        }
        ClassifierFamily::Lr | ClassifierFamily::Rfc | ClassifierFamily::Etc => {
            let spec = ClassifierSpec::default_for(family);
            let fitted = fit(&spec, rows, labels, seed)?;
            fitted.feature_importance().ok_or_else(|| {
                Error::Invariant(format!("{family:?} should expose importances"))
            })?
        }
        ClassifierFamily::Svm => {
            let spec = ClassifierSpec::default_for(family);
            let fitted = fit(&spec, rows, labels, seed)?;
            match fitted {
                FittedClassifier::Svm { ref weights, .. } => {
                    weights.iter().map(|w| w.abs()).collect()
                }
                _ => unreachable!(),
            }
        }
    };
    select_k_best(&importances, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn as_refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn anova_f_matches_hand_computation() {
        // class A {0,2}, class B {4,6}: SSB=16 (df 1), SSW=4 (df 2) -> F=8
        let rows = vec![vec![0.0], vec![2.0], vec![4.0], vec![6.0]];
        let labels = [0, 0, 1, 1];
        let s = anova_f(&as_refs(&rows), &labels).unwrap();
        assert_eq!(s.scores, vec![8.0]);
    }

    #[test]
    fn anova_constant_feature_scores_zero() {
        let rows = vec![vec![3.0], vec![3.0], vec![3.0], vec![3.0]];
        let s = anova_f(&as_refs(&rows), &[0, 0, 1, 1]).unwrap();
        assert_eq!(s.scores, vec![0.0]);
    }

    #[test]
    fn anova_identical_class_distributions_score_zero() {
        let rows = vec![vec![1.0], vec![5.0], vec![1.0], vec![5.0]];
        let s = anova_f(&as_refs(&rows), &[0, 0, 1, 1]).unwrap();
        assert_eq!(s.scores, vec![0.0]);
    }

    #[test]
    fn anova_perfect_separation_with_zero_within_is_infinite() {
        let rows = vec![vec![1.0], vec![1.0], vec![2.0], vec![2.0]];
        let s = anova_f(&as_refs(&rows), &[0, 0, 1, 1]).unwrap();
        assert_eq!(s.scores, vec![f64::INFINITY]);
    }

    #[test]
    fn anova_is_affine_invariant() {
        let rows = vec![vec![0.3], vec![1.9], vec![4.1], vec![5.7], vec![2.2], vec![6.0]];
        let labels = [0, 0, 0, 1, 1, 1];
        let base = anova_f(&as_refs(&rows), &labels).unwrap().scores[0];
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| vec![-2.5 * r[0] + 17.0]).collect();
        let transformed = anova_f(&as_refs(&scaled), &labels).unwrap().scores[0];
        approx::assert_abs_diff_eq!(base, transformed, epsilon = 1e-9);
    }

    #[test]
    fn chi2_constant_feature_scores_zero() {
        let rows = vec![vec![2.0]; 6];
        let s = chi2_scores(&as_refs(&rows), &[0, 0, 0, 1, 1, 1], false).unwrap();
        assert_eq!(s.scores, vec![0.0]);
    }

    #[test]
    fn chi2_one_hot_aligned_with_labels_is_four() {
        // 2x2 contingency [[2,0],[0,2]] on 4 samples: chi2 = 4
        let rows = vec![vec![1.0], vec![1.0], vec![0.0], vec![0.0]];
        let s = chi2_scores(&as_refs(&rows), &[1, 1, 0, 0], false).unwrap();
        approx::assert_abs_diff_eq!(s.scores[0], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn chi2_negative_values_without_shift_rejected() {
        let rows = vec![vec![-1.0], vec![1.0], vec![0.5], vec![2.0]];
        assert!(chi2_scores(&as_refs(&rows), &[0, 0, 1, 1], false).is_err());
        assert!(chi2_scores(&as_refs(&rows), &[0, 0, 1, 1], true).is_ok());
    }

    #[test]
    fn select_k_best_orders_and_breaks_ties_by_index() {
        let scores = [0.5, 2.0, 2.0, 0.1, f64::INFINITY];
        assert_eq!(select_k_best(&scores, 1).unwrap(), vec![4]);
        assert_eq!(select_k_best(&scores, 2).unwrap(), vec![1, 4]);
        // equal scores at the k-th rank: lower index wins
        assert_eq!(select_k_best(&scores, 3).unwrap(), vec![1, 2, 4]);
        assert_eq!(select_k_best(&scores, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(select_k_best(&scores, 6).is_err());
    }

    #[test]
    fn scores_are_permutation_equivariant() {
        let rows = vec![
            vec![0.0, 9.0, 1.0],
            vec![1.0, 8.0, 1.5],
            vec![5.0, 2.0, 0.5],
            vec![6.0, 1.0, 0.75],
        ];
        let labels = [0, 0, 1, 1];
        let base = anova_f(&as_refs(&rows), &labels).unwrap().scores;
        let permuted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[2], r[0], r[1]]).collect();
        let p = anova_f(&as_refs(&permuted), &labels).unwrap().scores;
        assert_eq!(p, vec![base[2], base[0], base[1]]);
    }

    #[test]
    fn project_is_pure_index_selection() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let out = project(&as_refs(&rows), &[0, 2]);
        assert_eq!(out, vec![vec![1.0, 3.0], vec![4.0, 6.0]]);
    }

    #[test]
    fn model_based_lr_finds_planted_signal() {
        // feature 0 carries the signal, features 1-3 are structured noise
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let class = i % 2;
            let x0 = if class == 1 { 3.0 } else { -3.0 } + (i as f64 * 0.618).sin() * 0.2;
            let noise = [(i as f64 * 1.3).sin(), (i as f64 * 0.7).cos(), ((i * i) % 7) as f64 / 7.0];
            rows.push(vec![x0, noise[0], noise[1], noise[2]]);
            labels.push(class as u8);
        }
        let selected =
            model_based_select(&as_refs(&rows), &labels, ClassifierFamily::Lr, 1, 7).unwrap();
        assert_eq!(selected, vec![0]);
    }

    #[test]
    fn model_based_k_all_is_identity() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 5.0], vec![4.0, 4.0]];
        let selected =
            model_based_select(&as_refs(&rows), &[0, 0, 1, 1], ClassifierFamily::Rfc, 2, 1).unwrap();
        assert_eq!(selected, vec![0, 1]);
    }
}
