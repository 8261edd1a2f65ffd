//! Whitening and dimensionality reduction: PCA and locally linear embedding.
//!
//! Every model here has a strict fit/apply split: `fit` sees training rows
//! only and `transform` never mutates the model, which is what the leakage
//! audit relies on.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Std floor guarding constant columns against division blow-up.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature affine standardization learned on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Whitener {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidData("whitening needs at least 2 training rows".into()));
        }
        let n = rows.len() as f64;
        let p = rows[0].len();
        let mut mean = vec![0.0; p];
        for row in rows {
            for (m, &v) in mean.iter_mut().zip(*row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; p];
        for row in rows {
            for j in 0..p {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt()).collect();
        Ok(Whitener { mean, std })
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| (v - m) / s.max(STD_FLOOR))
            .collect()
    }

    pub fn apply(&self, rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `n_components x p`, orthonormal rows.
    pub components: DMatrix<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }
}

fn to_matrix(rows: &[&[f64]]) -> DMatrix<f64> {
    let n = rows.len();
    let p = if n > 0 { rows[0].len() } else { 0 };
    DMatrix::from_fn(n, p, |i, j| rows[i][j])
}

/// Make each component's largest-magnitude entry positive so output is
/// reproducible across eigensolver sign choices.
fn fix_signs(components: &mut DMatrix<f64>) {
    for mut row in components.row_iter_mut() {
        let mut best = 0usize;
        for j in 0..row.ncols() {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        if row[best] < 0.0 {
            row.neg_mut();
        }
    }
}

/// Principal components of the training covariance, top-eigenvector side
/// chosen by `min(n, p)` (covariance for wide-enough samples, Gram otherwise).
pub fn pca_fit(rows: &[&[f64]], n_components: usize) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InvalidData("PCA needs at least 2 training rows".into()));
    }
    let p = rows[0].len();
    let max_components = (n - 1).min(p);
    if n_components == 0 || n_components > max_components {
        return Err(Error::InvalidConfig(format!(
            "n_components {n_components} outside 1..={max_components} for {n} rows x {p} features"
        )));
    }

    let x = to_matrix(rows);
    let mean_vec: DVector<f64> = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean_vec.transpose();
    }
    let denom = (n - 1) as f64;
    let total_variance: f64 = centered.iter().map(|v| v * v).sum::<f64>() / denom;

    let (eigenvalues, components) = if p <= n {
        let cov = centered.transpose() * &centered / denom;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let values: Vec<f64> = order[..n_components]
            .iter()
            .map(|&i| eig.eigenvalues[i].max(0.0))
            .collect();
        let comps = DMatrix::from_fn(n_components, p, |c, j| eig.eigenvectors[(j, order[c])]);
        (values, comps)
    } else {
        let gram = &centered * centered.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let mut comps = DMatrix::zeros(n_components, p);
        let mut values = Vec::with_capacity(n_components);
        for (c, &i) in order[..n_components].iter().enumerate() {
            let lambda = eig.eigenvalues[i].max(0.0);
            values.push(lambda);
            let u = eig.eigenvectors.column(i);
            let v = centered.transpose() * u;
            let norm = v.norm();
            if norm > 0.0 {
                comps.row_mut(c).copy_from(&(v / norm).transpose());
            }
        }
        (values, comps)
    };

    let mut components = components;
    fix_signs(&mut components);
    let explained_variance_ratio = eigenvalues
        .iter()
        .map(|&l| if total_variance > 0.0 { l / total_variance } else { 0.0 })
        .collect();

    Ok(PcaModel {
        mean: mean_vec.iter().copied().collect(),
        components,
        explained_variance_ratio,
    })
}

pub fn pca_transform(model: &PcaModel, rows: &[&[f64]]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let centered: Vec<f64> = row.iter().zip(&model.mean).map(|(&v, &m)| v - m).collect();
            (0..model.n_components())
                .map(|c| {
                    model
                        .components
                        .row(c)
                        .iter()
                        .zip(&centered)
                        .map(|(&w, &v)| w * v)
                        .sum()
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LleModel {
    pub neighbors: usize,
    pub dimension: usize,
    pub regularizer: f64,
    pub training_rows: Vec<Vec<f64>>,
    /// `n x m` training embedding.
    pub embedding: Vec<Vec<f64>>,
}

fn k_nearest(point: &[f64], rows: &[Vec<f64>], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut distances: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, row)| {
            let d2: f64 = row.iter().zip(point).map(|(&a, &b)| (a - b) * (a - b)).sum();
            (i, d2)
        })
        .collect();
    distances.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    distances.truncate(k);
    distances.into_iter().map(|(i, _)| i).collect()
}

/// Tikhonov-regularized barycentric reconstruction weights of `point` from
/// its listed neighbors.
fn reconstruction_weights(
    point: &[f64],
    rows: &[Vec<f64>],
    neighbor_idx: &[usize],
    regularizer: f64,
) -> Vec<f64> {
    let k = neighbor_idx.len();
    let p = point.len();
    let z = DMatrix::from_fn(k, p, |a, j| rows[neighbor_idx[a]][j] - point[j]);
    let mut c = &z * z.transpose();
    let trace: f64 = c.diagonal().iter().sum();
    let ridge = if trace > 0.0 { regularizer * trace / k as f64 } else { regularizer };
    for a in 0..k {
        c[(a, a)] += ridge;
    }
    let ones = DVector::from_element(k, 1.0);
    let w = c
        .lu()
        .solve(&ones)
        .unwrap_or_else(|| DVector::from_element(k, 1.0 / k as f64));
    let sum: f64 = w.iter().sum();
    if sum.abs() > 0.0 {
        w.iter().map(|&v| v / sum).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

pub const LLE_DEFAULT_REGULARIZER: f64 = 1e-3;

/// Standard LLE: reconstruction weights from k nearest neighbors, embedding
/// from the bottom eigenvectors of `(I - W)^T (I - W)` with the constant
/// eigenvector discarded.
pub fn lle_embed(rows: &[&[f64]], k: usize, m: usize, regularizer: f64) -> Result<LleModel> {
    let n = rows.len();
    if k >= n {
        return Err(Error::InvalidConfig(format!("LLE needs k < rows, got k={k}, rows={n}")));
    }
    if m >= k {
        return Err(Error::InvalidConfig(format!("LLE needs m < k, got m={m}, k={k}")));
    }
    if m + 1 >= n {
        return Err(Error::InvalidConfig(format!("LLE needs m + 1 < rows, got m={m}, rows={n}")));
    }
    let training: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();

    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let neighbors = k_nearest(&training[i], &training, k, Some(i));
        let weights = reconstruction_weights(&training[i], &training, &neighbors, regularizer);
        for (&j, &wj) in neighbors.iter().zip(&weights) {
            w[(i, j)] = wj;
        }
    }

    let identity = DMatrix::identity(n, n);
    let residual = &identity - &w;
    let cost = residual.transpose() * residual;
    let eig = SymmetricEigen::new(cost);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    // order[0] is the constant eigenvector (eigenvalue ~0); discard it.
    let mut embedding_cols = DMatrix::zeros(m, n);
    for c in 0..m {
        let col = eig.eigenvectors.column(order[c + 1]);
        for i in 0..n {
            embedding_cols[(c, i)] = col[i];
        }
    }
    fix_signs(&mut embedding_cols);

    let embedding: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..m).map(|c| embedding_cols[(c, i)]).collect())
        .collect();

    Ok(LleModel {
        neighbors: k,
        dimension: m,
        regularizer,
        training_rows: training,
        embedding,
    })
}

/// Out-of-sample mapping: reconstruct the new row from its training
/// neighbors and apply the same weights to the training embedding.
pub fn lle_transform(model: &LleModel, rows: &[&[f64]]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let neighbors = k_nearest(row, &model.training_rows, model.neighbors, None);
            let weights =
                reconstruction_weights(row, &model.training_rows, &neighbors, model.regularizer);
            let mut out = vec![0.0; model.dimension];
            for (&j, &wj) in neighbors.iter().zip(&weights) {
                for (o, &e) in out.iter_mut().zip(&model.embedding[j]) {
                    *o += wj * e;
                }
            }
            out
        })
        .collect()
}
