//! Feature scoring, top-k selection, and dimensionality reduction (PCA and
//! locally linear embedding) on a noisy two-class dataset.
//!
//! Run with: `cargo run --release --example feature_reduction`

use neuropipe::dimred::{lle_embed, lle_transform, pca_fit, pca_transform, Whitener};
use neuropipe::rng::derive_rng;
use neuropipe::select::{anova_f, project, select_k_best};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> neuropipe::Result<()> {
    let mut rng = derive_rng(77, &[0]);
    let (n_per_class, p, informative) = (40, 30, 4);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * n_per_class {
        let label = (i % 2) as u8;
        let row: Vec<f64> = (0..p)
            .map(|j| {
                let shift = if j < informative && label == 1 { 2.0 } else { 0.0 };
                rng.sample::<f64, _>(StandardNormal) + shift
            })
            .collect();
        rows.push(row);
        labels.push(label);
    }
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();

    // Univariate scores pick out the shifted features.
    let scores = anova_f(&refs, &labels)?;
    let top = select_k_best(&scores.scores, 6)?;
    println!("top-6 ANOVA features (planted are 0..{informative}): {top:?}");

    // Whiten, then reduce the selected columns with PCA.
    let whitened = Whitener::fit(&refs)?.apply(&refs);
    let whitened_refs: Vec<&[f64]> = whitened.iter().map(|r| r.as_slice()).collect();
    let selected = project(&whitened_refs, &top);
    let selected_refs: Vec<&[f64]> = selected.iter().map(|r| r.as_slice()).collect();

    let pca = pca_fit(&selected_refs, 2)?;
    let embedded = pca_transform(&pca, &selected_refs);
    let separation = axis_separation(&embedded, &labels, 0);
    println!("PCA first-axis class separation: {separation:.2} pooled standard deviations");

    let lle = lle_embed(&selected_refs, 8, 2, 1e-3)?;
    let lle_coords = lle_transform(&lle, &selected_refs);
    let separation = axis_separation(&lle_coords, &labels, 0)
        .max(axis_separation(&lle_coords, &labels, 1));
    println!("LLE best-axis class separation:  {separation:.2} pooled standard deviations");
    Ok(())
}

/// |mean difference| / pooled standard deviation along one embedding axis.
fn axis_separation(coords: &[Vec<f64>], labels: &[u8], axis: usize) -> f64 {
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    let mut n = [0.0; 2];
    for (row, &label) in coords.iter().zip(labels) {
        let v = row[axis];
        sum[label as usize] += v;
        sq[label as usize] += v * v;
        n[label as usize] += 1.0;
    }
    let mean = [sum[0] / n[0], sum[1] / n[1]];
    let var = [(sq[0] / n[0] - mean[0] * mean[0]), (sq[1] / n[1] - mean[1] * mean[1])];
    (mean[1] - mean[0]).abs() / ((var[0] + var[1]) / 2.0).sqrt()
}
