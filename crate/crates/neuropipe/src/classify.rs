//! The classifier families behind one uniform contract: fit, predict,
//! continuous decision score in [0, 1], and feature importance where the
//! family supports it.
//!
//! Everything is trained deterministically: logistic regression by full-batch
//! gradient descent, forests with counter-based per-tree RNG streams, the
//! linear SVM by deterministic full-batch subgradient epochs. Identical
//! `(spec, data, seed)` always produce identical models.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierFamily {
    Lr,
    Knn,
    Rfc,
    Etc,
    Svm,
}

impl ClassifierFamily {
    pub const ALL: [ClassifierFamily; 5] = [
        ClassifierFamily::Lr,
        ClassifierFamily::Knn,
        ClassifierFamily::Rfc,
        ClassifierFamily::Etc,
        ClassifierFamily::Svm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierFamily::Lr => "lr",
            ClassifierFamily::Knn => "knn",
            ClassifierFamily::Rfc => "rfc",
            ClassifierFamily::Etc => "etc",
            ClassifierFamily::Svm => "svm",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|f| f.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown classifier {name:?}; registered: {}",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrParams {
    pub l2: f64,
    /// Multiplier on the safe Lipschitz step.
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams { l2: 1.0, learning_rate: 1.0, max_iters: 5000, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(p))`.
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { trees: 100, max_depth: None, min_leaf: 1, features_per_split: None }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1.0, epochs: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ClassifierSpec {
    Lr(LrParams),
    Knn(KnnParams),
    Rfc(ForestParams),
    Etc(ForestParams),
    Svm(SvmParams),
}

impl ClassifierSpec {
    pub fn family(&self) -> ClassifierFamily {
        match self {
            ClassifierSpec::Lr(_) => ClassifierFamily::Lr,
            ClassifierSpec::Knn(_) => ClassifierFamily::Knn,
            ClassifierSpec::Rfc(_) => ClassifierFamily::Rfc,
            ClassifierSpec::Etc(_) => ClassifierFamily::Etc,
            ClassifierSpec::Svm(_) => ClassifierFamily::Svm,
        }
    }

    pub fn default_for(family: ClassifierFamily) -> Self {
        match family {
            ClassifierFamily::Lr => ClassifierSpec::Lr(LrParams::default()),
            ClassifierFamily::Knn => ClassifierSpec::Knn(KnnParams::default()),
            ClassifierFamily::Rfc => ClassifierSpec::Rfc(ForestParams::default()),
            ClassifierFamily::Etc => ClassifierSpec::Etc(ForestParams::default()),
            ClassifierFamily::Svm => ClassifierSpec::Svm(SvmParams::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClassifierSpec::Lr(p) => {
                if p.l2 < 0.0 || p.learning_rate <= 0.0 || p.max_iters == 0 {
                    return Err(Error::InvalidConfig("lr: l2 >= 0, learning_rate > 0, max_iters > 0 required".into()));
                }
            }
            ClassifierSpec::Knn(p) => {
                if p.k == 0 {
                    return Err(Error::InvalidConfig("knn: k must be positive".into()));
                }
            }
            ClassifierSpec::Rfc(p) | ClassifierSpec::Etc(p) => {
                if p.trees == 0 || p.min_leaf == 0 {
                    return Err(Error::InvalidConfig("forest: trees and min_leaf must be positive".into()));
                }
            }
            ClassifierSpec::Svm(p) => {
                if p.c <= 0.0 || p.epochs == 0 {
                    return Err(Error::InvalidConfig("svm: c > 0 and epochs > 0 required".into()));
                }
            }
        }
        Ok(())
    }

    /// Compact human-readable form recorded in decision logs.
    pub fn describe(&self) -> String {
        match self {
            ClassifierSpec::Lr(p) => format!("lr(l2={})", p.l2),
            ClassifierSpec::Knn(p) => format!("knn(k={})", p.k),
            ClassifierSpec::Rfc(p) => format!("rfc(trees={})", p.trees),
            ClassifierSpec::Etc(p) => format!("etc(trees={})", p.trees),
            ClassifierSpec::Svm(p) => format!("svm(c={})", p.c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TreeNode {
    Leaf { label: u8 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> u8 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { label } => return *label,
                TreeNode::Split { feature, threshold, left, right } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedClassifier {
    Lr { weights: Vec<f64>, bias: f64 },
    Knn { k: usize, train_rows: Vec<Vec<f64>>, train_labels: Vec<u8> },
    Forest { family: ClassifierFamily, trees: Vec<Tree>, importances: Vec<f64>, n_features: usize },
    Svm { weights: Vec<f64>, bias: f64 },
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// L2-regularized logistic loss: mean log(1+exp(-y m)) + l2/(2n) ||w||^2,
/// bias unregularized. Exposed so the gradient can be checked against finite
/// differences.
pub fn lr_loss(weights: &[f64], bias: f64, rows: &[&[f64]], labels: &[u8], l2: f64) -> f64 {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    for (row, &label) in rows.iter().zip(labels) {
        let y = if label == 1 { 1.0 } else { -1.0 };
        let margin = y * (dot(weights, row) + bias);
        // log(1+exp(-m)) computed stably
        loss += if margin > 0.0 {
            (-margin).exp().ln_1p()
        } else {
            -margin + margin.exp().ln_1p()
        };
    }
    loss / n + l2 / (2.0 * n) * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`lr_loss`]; returns (d/dw, d/db).
pub fn lr_gradient(
    weights: &[f64],
    bias: f64,
    rows: &[&[f64]],
    labels: &[u8],
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = rows.len() as f64;
    let p = weights.len();
    let mut gw = vec![0.0; p];
    let mut gb = 0.0;
    for (row, &label) in rows.iter().zip(labels) {
        let y = if label == 1 { 1.0 } else { -1.0 };
        let margin = y * (dot(weights, row) + bias);
        let coeff = -y * sigmoid(-margin);
        for (g, &x) in gw.iter_mut().zip(*row) {
            *g += coeff * x;
        }
        gb += coeff;
    }
    for (g, &w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 / n * w;
    }
    (gw, gb / n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_training_input(rows: &[&[f64]], labels: &[u8]) -> Result<usize> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::InvalidData("training set must have rows and features".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::InvalidData("row/label count mismatch".into()));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::InvalidData("training set must contain both classes".into()));
    }
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidData("training rows contain non-finite values".into()));
    }
    Ok(rows[0].len())
}

fn fit_lr(params: &LrParams, rows: &[&[f64]], labels: &[u8]) -> FittedClassifier {
    let n = rows.len() as f64;
    let p = rows[0].len();
    let mut weights = vec![0.0; p];
    let mut bias = 0.0;

    // Safe step from the Hessian bound (1/4n) tr(X X^T) + l2/n + bias curvature.
    let sq_sum: f64 = rows.iter().map(|r| dot(r, r) + 1.0).sum();
    let lipschitz = sq_sum / (4.0 * n) + params.l2 / n;
    let step = params.learning_rate / lipschitz.max(1e-12);

    for _ in 0..params.max_iters {
        let (gw, gb) = lr_gradient(&weights, bias, rows, labels, params.l2);
        let grad_norm = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if grad_norm < params.tolerance {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= step * g;
        }
        bias -= step * gb;
    }
    FittedClassifier::Lr { weights, bias }
}

fn gini(counts: [usize; 2]) -> f64 {
    let total = (counts[0] + counts[1]) as f64;
    if total == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / total;
    let p1 = counts[1] as f64 / total;
    1.0 - p0 * p0 - p1 * p1
}

struct TreeBuilder<'a> {
    rows: &'a [&'a [f64]],
    labels: &'a [u8],
    params: &'a ForestParams,
    random_thresholds: bool,
    nodes: Vec<TreeNode>,
    /// Impurity decrease accumulated per feature, weighted by node size.
    importance: Vec<f64>,
    total: usize,
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.class_counts(&samples);
        let node_gini = gini(counts);
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);

        if node_gini == 0.0 || depth_capped || samples.len() < 2 * self.params.min_leaf {
            return self.push_leaf(counts);
        }

        let p = self.rows[0].len();
        let m = self.params.features_per_split.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize);
        let candidates = sample_without_replacement(p, m.clamp(1, p), rng);

        let mut best: Option<(f64, usize, f64)> = None; // (weighted child gini, feature, threshold)
        for &feature in &candidates {
            let split = if self.random_thresholds {
                self.random_split(&samples, feature, rng)
            } else {
                self.best_split(&samples, feature)
            };
            if let Some((score, threshold)) = split {
                let better = match best {
                    None => true,
                    Some((s, _, _)) => score < s - 1e-15,
                };
                if better {
                    best = Some((score, feature, threshold));
                }
            }
        }

        let Some((child_gini, feature, threshold)) = best else {
            return self.push_leaf(counts);
        };

        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&i| self.rows[i][feature] <= threshold);
        if left.len() < self.params.min_leaf || right.len() < self.params.min_leaf {
            return self.push_leaf(counts);
        }

        let weight = samples.len() as f64 / self.total as f64;
        self.importance[feature] += weight * (node_gini - child_gini);

        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { label: 0 }); // placeholder
        let left_idx = self.build(left, depth + 1, rng);
        let right_idx = self.build(right, depth + 1, rng);
        self.nodes[idx] = TreeNode::Split { feature, threshold, left: left_idx, right: right_idx };
        idx
    }

    fn class_counts(&self, samples: &[usize]) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for &i in samples {
            counts[self.labels[i] as usize] += 1;
        }
        counts
    }

    fn push_leaf(&mut self, counts: [usize; 2]) -> usize {
        let label = u8::from(counts[1] > counts[0]);
        self.nodes.push(TreeNode::Leaf { label });
        self.nodes.len() - 1
    }

    /// Exhaustive threshold search at sorted-value midpoints (RFC style).
    fn best_split(&self, samples: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut values: Vec<(f64, u8)> =
            samples.iter().map(|&i| (self.rows[i][feature], self.labels[i])).collect();
        values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let total = values.len();
        let mut left = [0usize; 2];
        let mut right = self.class_counts(samples);
        let mut best: Option<(f64, f64)> = None;
        for i in 0..total - 1 {
            left[values[i].1 as usize] += 1;
            right[values[i].1 as usize] -= 1;
            if values[i].0 == values[i + 1].0 {
                continue;
            }
            let nl = i + 1;
            let nr = total - nl;
            if nl < self.params.min_leaf || nr < self.params.min_leaf {
                continue;
            }
            let score = (nl as f64 * gini(left) + nr as f64 * gini(right)) / total as f64;
            let threshold = (values[i].0 + values[i + 1].0) / 2.0;
            if best.is_none_or(|(s, _)| score < s - 1e-15) {
                best = Some((score, threshold));
            }
        }
        best
    }

    /// Uniform random threshold in (min, max) (ETC style).
    fn random_split(&self, samples: &[usize], feature: usize, rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in samples {
            lo = lo.min(self.rows[i][feature]);
            hi = hi.max(self.rows[i][feature]);
        }
        if lo >= hi {
            return None;
        }
        let u: f64 = rng.random();
        let threshold = lo + (hi - lo) * u.clamp(f64::MIN_POSITIVE, 1.0 - 1e-12);
        let mut left = [0usize; 2];
        let mut nl = 0usize;
        for &i in samples {
            if self.rows[i][feature] <= threshold {
                left[self.labels[i] as usize] += 1;
                nl += 1;
            }
        }
        let mut right = self.class_counts(samples);
        right[0] -= left[0];
        right[1] -= left[1];
        let nr = samples.len() - nl;
        if nl == 0 || nr == 0 {
            return None;
        }
        let score = (nl as f64 * gini(left) + nr as f64 * gini(right)) / samples.len() as f64;
        Some((score, threshold))
    }
}

fn sample_without_replacement(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.random_range(0..n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

fn fit_forest(
    family: ClassifierFamily,
    params: &ForestParams,
    rows: &[&[f64]],
    labels: &[u8],
    seed: u64,
) -> FittedClassifier {
    let n = rows.len();
    let p = rows[0].len();
    let bootstrap = family == ClassifierFamily::Rfc;

    let mut trees = Vec::with_capacity(params.trees);
    let mut importances = vec![0.0; p];
    for tree_idx in 0..params.trees {
        let mut rng = derive_rng(seed, &[0x7265_65, tree_idx as u64]);
        let samples: Vec<usize> = if bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut builder = TreeBuilder {
            rows,
            labels,
            params,
            random_thresholds: family == ClassifierFamily::Etc,
            nodes: Vec::new(),
            importance: vec![0.0; p],
            total: samples.len(),
        };
        let root = builder.build(samples, 0, &mut rng);
        debug_assert_eq!(root, 0);
        trees.push(Tree { nodes: builder.nodes });
        for (acc, imp) in importances.iter_mut().zip(&builder.importance) {
            *acc += imp;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for imp in &mut importances {
            *imp /= total;
        }
    }
    FittedClassifier::Forest { family, trees, importances, n_features: p }
}

fn fit_svm(params: &SvmParams, rows: &[&[f64]], labels: &[u8]) -> FittedClassifier {
    let n = rows.len() as f64;
    let p = rows[0].len();
    let lambda = 1.0 / (params.c * n);
    let mut weights = vec![0.0; p];
    let mut bias = 0.0;

    for t in 1..=params.epochs {
        let step = 1.0 / (lambda * t as f64);
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        for (row, &label) in rows.iter().zip(labels) {
            let y = if label == 1 { 1.0 } else { -1.0 };
            if y * (dot(&weights, row) + bias) < 1.0 {
                for (g, &x) in gw.iter_mut().zip(*row) {
                    *g -= y * x;
                }
                gb -= y;
            }
        }
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w = (1.0 - step * lambda) * *w - step * g / n;
        }
        bias -= step * gb / n;
    }
    FittedClassifier::Svm { weights, bias }
}

/// Train a classifier. Deterministic given `(spec, data, seed)`.
pub fn fit(spec: &ClassifierSpec, rows: &[&[f64]], labels: &[u8], seed: u64) -> Result<FittedClassifier> {
    spec.validate()?;
    let p = check_training_input(rows, labels)?;
    let _ = p;
    Ok(match spec {
        ClassifierSpec::Lr(params) => fit_lr(params, rows, labels),
        ClassifierSpec::Knn(params) => FittedClassifier::Knn {
            k: params.k,
            train_rows: rows.iter().map(|r| r.to_vec()).collect(),
            train_labels: labels.to_vec(),
        },
        ClassifierSpec::Rfc(params) => fit_forest(ClassifierFamily::Rfc, params, rows, labels, seed),
        ClassifierSpec::Etc(params) => fit_forest(ClassifierFamily::Etc, params, rows, labels, seed),
        ClassifierSpec::Svm(params) => fit_svm(params, rows, labels),
    })
}

impl FittedClassifier {
    pub fn n_features(&self) -> usize {
        match self {
            FittedClassifier::Lr { weights, .. } | FittedClassifier::Svm { weights, .. } => {
                weights.len()
            }
            FittedClassifier::Knn { train_rows, .. } => train_rows[0].len(),
            FittedClassifier::Forest { n_features, .. } => *n_features,
        }
    }

    fn check_width(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(Error::InvalidData(format!(
                "row width {} does not match training feature count {}",
                row.len(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Positive-class tendency in [0, 1]: probability for lr, vote fraction
    /// for knn and forests, margin through a logistic link for svm.
    pub fn decision_score(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row)?;
        Ok(match self {
            FittedClassifier::Lr { weights, bias } => sigmoid(dot(weights, row) + bias),
            FittedClassifier::Svm { weights, bias } => sigmoid(dot(weights, row) + bias),
            FittedClassifier::Knn { k, train_rows, train_labels } => {
                let mut distances: Vec<(f64, usize)> = train_rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let d2: f64 = r.iter().zip(row).map(|(&a, &b)| (a - b) * (a - b)).sum();
                        (d2, i)
                    })
                    .collect();
                distances.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let k = (*k).min(distances.len());
                let votes = distances[..k]
                    .iter()
                    .filter(|&&(_, i)| train_labels[i] == 1)
                    .count();
                votes as f64 / k as f64
            }
            FittedClassifier::Forest { trees, .. } => {
                let votes = trees.iter().filter(|t| t.predict(row) == 1).count();
                votes as f64 / trees.len() as f64
            }
        })
    }

    /// Label from the decision score: `score >= 0.5`, except that exact KNN
    /// vote ties break toward label 0.
    pub fn predict(&self, row: &[f64]) -> Result<u8> {
        let score = self.decision_score(row)?;
        Ok(match self {
            FittedClassifier::Knn { .. } => u8::from(score > 0.5),
            _ => u8::from(score >= 0.5),
        })
    }

    pub fn predict_rows(&self, rows: &[&[f64]]) -> Result<Vec<u8>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    pub fn score_rows(&self, rows: &[&[f64]]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.decision_score(r)).collect()
    }

    /// `|weights|` for linear models, normalized mean impurity decrease for
    /// forests, `None` for knn.
    pub fn feature_importance(&self) -> Option<Vec<f64>> {
        match self {
            FittedClassifier::Lr { weights, .. } | FittedClassifier::Svm { weights, .. } => {
                Some(weights.iter().map(|w| w.abs()).collect())
            }
            FittedClassifier::Forest { importances, .. } => Some(importances.clone()),
            FittedClassifier::Knn { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn as_refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(|r| r.as_slice()).collect()
    }

    fn separable_1d() -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            rows.push(vec![-1.0 - 0.01 * i as f64]);
            labels.push(0);
            rows.push(vec![1.0 + 0.01 * i as f64]);
            labels.push(1);
        }
        (rows, labels)
    }

    #[test]
    fn lr_separable_training_accuracy_is_one() {
        let (rows, labels) = separable_1d();
        let model = fit(&ClassifierSpec::Lr(LrParams::default()), &as_refs(&rows), &labels, 1).unwrap();
        let preds = model.predict_rows(&as_refs(&rows)).unwrap();
        assert_eq!(preds, labels);
    }

    #[test]
    fn lr_zero_model_scores_half() {
        let model = FittedClassifier::Lr { weights: vec![0.0, 0.0], bias: 0.0 };
        assert_eq!(model.decision_score(&[3.0, -5.0]).unwrap(), 0.5);
    }

    #[test]
    fn lr_gradient_matches_finite_differences() {
        let mut rng = derive_rng(99, &[1]);
        for trial in 0..10 {
            let n = 6 + trial % 4;
            let p = 3;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let weights: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let bias: f64 = StandardNormal.sample(&mut rng);
            let refs = as_refs(&rows);

            let (gw, gb) = lr_gradient(&weights, bias, &refs, &labels, 0.7);
            let h = 1e-6;
            for j in 0..p {
                let mut wp = weights.clone();
                let mut wm = weights.clone();
                wp[j] += h;
                wm[j] -= h;
                let fd = (lr_loss(&wp, bias, &refs, &labels, 0.7)
                    - lr_loss(&wm, bias, &refs, &labels, 0.7))
                    / (2.0 * h);
                let denom = fd.abs().max(1e-8);
                assert!((gw[j] - fd).abs() / denom < 1e-5, "dw[{j}]: {} vs {fd}", gw[j]);
            }
            let fd = (lr_loss(&weights, bias + h, &refs, &labels, 0.7)
                - lr_loss(&weights, bias - h, &refs, &labels, 0.7))
                / (2.0 * h);
            assert!((gb - fd).abs() / fd.abs().max(1e-8) < 1e-5);
        }
    }

    #[test]
    fn lr_label_flip_symmetry() {
        let (rows, labels) = separable_1d();
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let refs = as_refs(&rows);
        let spec = ClassifierSpec::Lr(LrParams::default());
        let a = fit(&spec, &refs, &labels, 1).unwrap();
        let b = fit(&spec, &refs, &flipped, 1).unwrap();
        for row in &refs {
            let sa = a.decision_score(row).unwrap();
            let sb = b.decision_score(row).unwrap();
            assert_abs_diff_eq!(sa, 1.0 - sb, epsilon = 1e-9);
        }
    }

    #[test]
    fn knn_one_reproduces_training_labels() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.5], vec![3.0, 3.0]];
        let labels = vec![0, 1, 0, 1];
        let model = fit(&ClassifierSpec::Knn(KnnParams { k: 1 }), &as_refs(&rows), &labels, 0).unwrap();
        assert_eq!(model.predict_rows(&as_refs(&rows)).unwrap(), labels);
    }

    #[test]
    fn knn_vote_fraction_score() {
        let rows = vec![vec![0.0], vec![0.1], vec![0.2], vec![10.0]];
        let labels = vec![1, 1, 0, 0];
        let model = fit(&ClassifierSpec::Knn(KnnParams { k: 3 }), &as_refs(&rows), &labels, 0).unwrap();
        let s = model.decision_score(&[0.05]).unwrap();
        assert_abs_diff_eq!(s, 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(model.predict(&[0.05]).unwrap(), 1);
    }

    #[test]
    fn knn_even_tie_breaks_to_zero() {
        let rows = vec![vec![-1.0], vec![-2.0], vec![1.0], vec![2.0]];
        let labels = vec![0, 0, 1, 1];
        let model = fit(&ClassifierSpec::Knn(KnnParams { k: 4 }), &as_refs(&rows), &labels, 0).unwrap();
        assert_eq!(model.decision_score(&[0.0]).unwrap(), 0.5);
        assert_eq!(model.predict(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn knn_invariant_under_orthogonal_transform() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.5], vec![0.5, -1.0], vec![2.0, 2.0]];
        let labels = vec![1, 0, 1, 0, 1];
        // rotation by 35 degrees
        let (c, s) = (35f64.to_radians().cos(), 35f64.to_radians().sin());
        let rotate = |r: &[f64]| vec![c * r[0] - s * r[1], s * r[0] + c * r[1]];
        let rotated: Vec<Vec<f64>> = rows.iter().map(|r| rotate(r)).collect();

        let spec = ClassifierSpec::Knn(KnnParams { k: 3 });
        let a = fit(&spec, &as_refs(&rows), &labels, 0).unwrap();
        let b = fit(&spec, &as_refs(&rotated), &labels, 0).unwrap();
        for test in [[0.3, 0.4], [-1.0, -1.0], [1.5, 0.2]] {
            let pa = a.predict(&test).unwrap();
            let pb = b.predict(&rotate(&test)).unwrap();
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn forest_importances_sum_to_one() {
        let mut rng = derive_rng(5, &[2]);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let signal = if i % 2 == 0 { 2.0 } else { -2.0 };
                vec![
                    signal + 0.1 * rng.sample::<f64, _>(StandardNormal),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ]
            })
            .collect();
        let labels: Vec<u8> = (0..30).map(|i| (i % 2 == 0) as u8).collect();
        for spec in [
            ClassifierSpec::Rfc(ForestParams { trees: 25, ..Default::default() }),
            ClassifierSpec::Etc(ForestParams { trees: 25, ..Default::default() }),
        ] {
            let model = fit(&spec, &as_refs(&rows), &labels, 11).unwrap();
            let imp = model.feature_importance().unwrap();
            assert_abs_diff_eq!(imp.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            assert!(imp[0] > imp[1] && imp[0] > imp[2], "signal feature should dominate: {imp:?}");
        }
    }

    #[test]
    fn forest_vote_fraction_score() {
        let rows = vec![vec![0.0], vec![1.0]];
        let labels = vec![0, 1];
        let model = fit(
            &ClassifierSpec::Etc(ForestParams { trees: 4, ..Default::default() }),
            &as_refs(&rows),
            &labels,
            3,
        )
        .unwrap();
        let score = model.decision_score(&[1.0]).unwrap();
        assert_eq!(score, 1.0);
        let score0 = model.decision_score(&[0.0]).unwrap();
        assert_eq!(score0, 0.0);
    }

    #[test]
    fn etc_full_sample_training_accuracy_is_one() {
        let mut rng = derive_rng(17, &[4]);
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let labels: Vec<u8> = (0..25).map(|i| (i % 3 == 0) as u8).collect();
        let model = fit(
            &ClassifierSpec::Etc(ForestParams {
                trees: 5,
                features_per_split: Some(4),
                ..Default::default()
            }),
            &as_refs(&rows),
            &labels,
            9,
        )
        .unwrap();
        assert_eq!(model.predict_rows(&as_refs(&rows)).unwrap(), labels);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = derive_rng(123, &[7]);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..5).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let refs = as_refs(&rows);
        for family in ClassifierFamily::ALL {
            let spec = ClassifierSpec::default_for(family);
            let a = fit(&spec, &refs, &labels, 42).unwrap();
            let b = fit(&spec, &refs, &labels, 42).unwrap();
            assert_eq!(a, b, "{family:?} must be deterministic");
        }
    }

    #[test]
    fn single_class_training_rejected() {
        let rows = vec![vec![1.0], vec![2.0]];
        let labels = vec![1, 1];
        assert!(fit(&ClassifierSpec::default_for(ClassifierFamily::Lr), &as_refs(&rows), &labels, 0).is_err());
    }

    #[test]
    fn nan_training_input_rejected() {
        let rows = vec![vec![f64::NAN], vec![1.0]];
        assert!(fit(&ClassifierSpec::default_for(ClassifierFamily::Lr), &as_refs(&rows), &[0, 1], 0).is_err());
    }

    #[test]
    fn width_mismatch_rejected() {
        let (rows, labels) = separable_1d();
        let model = fit(&ClassifierSpec::Lr(LrParams::default()), &as_refs(&rows), &labels, 1).unwrap();
        assert!(model.decision_score(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn svm_separates_wide_margin_data() {
        let (rows, labels) = separable_1d();
        let model = fit(&ClassifierSpec::Svm(SvmParams::default()), &as_refs(&rows), &labels, 0).unwrap();
        let preds = model.predict_rows(&as_refs(&rows)).unwrap();
        assert_eq!(preds, labels);
    }
}
