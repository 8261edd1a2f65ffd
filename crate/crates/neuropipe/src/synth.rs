//! Synthetic cohorts with analytically known separability: planted-signal
//! gaussian feature tables and two-block weighted community connectivity,
//! used as the ground-truth oracle for the acceptance suite (the clinical
//! dataset behind the pipeline is private).
//!
//! Everything derives per-subject RNG streams from `(seed, subject index)`,
//! so generation is deterministic and order-independent.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{BlockKind, Cohort, ConnectivityMatrix, Covariate, FeatureMatrix, SubjectRecord};
use crate::error::{Error, Result};
use crate::rng::derive_rng;

pub const POSITIVE_STATUS: &str = "P";
pub const NEGATIVE_STATUS: &str = "H";

const TAG_TABULAR: u64 = 0x5A01;
const TAG_CONNECTIVITY: u64 = 0x5A02;
const TAG_COVARIATE: u64 = 0x5A03;

/// Two-block weighted community model parameters for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommunityWeights {
    /// Mean weight of within-block pairs.
    pub intra_mean: f64,
    /// Mean weight of cross-block pairs.
    pub inter_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConnectivitySpec {
    /// Node count; nodes `0..n/2` form block A, the rest block B.
    pub rois: usize,
    pub positive: CommunityWeights,
    pub negative: CommunityWeights,
    /// Gaussian weight noise around the block means.
    pub noise: f64,
    /// Directed variant: per ordered pair, keep the edge with probability
    /// `forward_rate` (positive class) / `forward_rate_negative`; higher
    /// forward rates on an acyclic node order produce more transitive
    /// triangles, so flag-topology features carry class signal.
    pub directed: bool,
    pub forward_rate_positive: f64,
    pub forward_rate_negative: f64,
}

impl Default for ConnectivitySpec {
    fn default() -> Self {
        ConnectivitySpec {
            rois: 20,
            positive: CommunityWeights { intra_mean: 0.7, inter_mean: 0.2 },
            negative: CommunityWeights { intra_mean: 0.3, inter_mean: 0.2 },
            noise: 0.05,
            directed: false,
            forward_rate_positive: 0.7,
            forward_rate_negative: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Subjects per class.
    pub n_per_class: usize,
    /// Tabular feature count.
    pub features: usize,
    /// Number of planted informative features (the first `informative`
    /// column indices carry the class shift).
    pub informative: usize,
    /// Class-mean shift on informative features, in units of the unit noise
    /// standard deviation.
    pub delta: f64,
    pub seed: u64,
    pub connectivity: Option<ConnectivitySpec>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 || self.features == 0 {
            return Err(Error::InvalidConfig("n_per_class and features must be positive".into()));
        }
        if self.informative > self.features {
            return Err(Error::InvalidConfig(format!(
                "informative {} exceeds feature count {}",
                self.informative, self.features
            )));
        }
        if self.delta < 0.0 {
            return Err(Error::InvalidConfig("delta must be >= 0".into()));
        }
        if let Some(conn) = &self.connectivity {
            if conn.rois < 2 {
                return Err(Error::InvalidConfig("connectivity needs >= 2 ROIs".into()));
            }
            for rate in [conn.forward_rate_positive, conn.forward_rate_negative] {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(Error::InvalidConfig(format!("forward rate {rate} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

fn subject_id(i: usize) -> String {
    format!("s{i:04}")
}

fn subject_label(i: usize) -> u8 {
    // Interleaved classes: even indices negative, odd positive.
    (i % 2) as u8
}

/// Class-conditional unit gaussians, shifted by `delta` on the planted
/// features for the positive class. Returns the cohort (block "tabular")
/// and the planted feature indices.
pub fn generate_tabular(spec: &SynthSpec) -> Result<(Cohort, Vec<usize>)> {
    spec.validate()?;
    let n = 2 * spec.n_per_class;
    let mut subjects = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * spec.features);
    let mut ids = Vec::with_capacity(n);

    for i in 0..n {
        let label = subject_label(i);
        let mut rng = derive_rng(spec.seed, &[TAG_TABULAR, i as u64]);
        for j in 0..spec.features {
            let mut v: f64 = StandardNormal.sample(&mut rng);
            if label == 1 && j < spec.informative {
                v += spec.delta;
            }
            values.push(v);
        }
        let mut covariates = BTreeMap::new();
        let mut cov_rng = derive_rng(spec.seed, &[TAG_COVARIATE, i as u64]);
        covariates.insert(
            "age".to_string(),
            Covariate::Number((30.0 + 30.0 * cov_rng.random::<f64>()).round()),
        );
        covariates.insert(
            "sex".to_string(),
            Covariate::Category(if cov_rng.random::<bool>() { "f" } else { "m" }.to_string()),
        );
        subjects.push(SubjectRecord {
            id: subject_id(i),
            status: if label == 1 { POSITIVE_STATUS } else { NEGATIVE_STATUS }.to_string(),
            covariates,
        });
        ids.push(subject_id(i));
    }

    let matrix = FeatureMatrix::new(
        ids,
        (0..spec.features).map(|j| format!("x{j:04}")).collect(),
        values,
        BlockKind::Morphometry,
    )?;
    let mut blocks = BTreeMap::new();
    blocks.insert("tabular".to_string(), matrix);
    Ok((
        Cohort { subjects, blocks, connectivity: BTreeMap::new() },
        (0..spec.informative).collect(),
    ))
}

fn roi_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("roi{i:03}")).collect()
}

/// Per-subject connectivity with class-dependent two-block structure
/// (undirected), or a directed variant whose forward-edge rate differs by
/// class. Adds matrices to the cohort under each subject's id.
pub fn generate_connectivity(spec: &SynthSpec, cohort: &mut Cohort) -> Result<()> {
    spec.validate()?;
    let conn = spec
        .connectivity
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("spec has no [connectivity] section".into()))?;
    let n = conn.rois;
    let half = n / 2;

    for (i, subject) in cohort.subjects.iter().enumerate() {
        let positive = subject.status == POSITIVE_STATUS;
        let mut rng = derive_rng(spec.seed, &[TAG_CONNECTIVITY, i as u64]);
        let mut weights = vec![0.0; n * n];
        if conn.directed {
            let rate = if positive { conn.forward_rate_positive } else { conn.forward_rate_negative };
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    // Forward edges (a < b) appear at the class rate; backward
                    // edges are rare, keeping the order mostly acyclic.
                    let p = if a < b { rate } else { 0.05 };
                    if rng.random::<f64>() < p {
                        weights[a * n + b] = 0.5 + 0.5 * rng.random::<f64>();
                    }
                }
            }
        } else {
            let params = if positive { conn.positive } else { conn.negative };
            for a in 0..n {
                for b in (a + 1)..n {
                    let intra = (a < half) == (b < half);
                    let mean = if intra { params.intra_mean } else { params.inter_mean };
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let w = (mean + conn.noise * noise).clamp(0.0, 1.0);
                    weights[a * n + b] = w;
                    weights[b * n + a] = w;
                }
            }
        }
        cohort.connectivity.insert(
            subject.id.clone(),
            ConnectivityMatrix { roi_names: roi_names(n), weights, directed: conn.directed },
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthFile {
    n_per_class: usize,
    features: usize,
    #[serde(default)]
    informative: usize,
    #[serde(default)]
    delta: f64,
    seed: Option<u64>,
    connectivity: Option<ConnectivitySpec>,
}

/// Load a generator spec from TOML; `fallback_seed` fills in when the file
/// omits `seed`.
pub fn load_synth_spec(path: &std::path::Path, fallback_seed: u64) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SynthFile =
        toml::from_str(&text).map_err(|e| Error::parse(path, 0, format!("synth spec: {e}")))?;
    let spec = SynthSpec {
        n_per_class: file.n_per_class,
        features: file.features,
        informative: file.informative,
        delta: file.delta,
        seed: file.seed.unwrap_or(fallback_seed),
        connectivity: file.connectivity,
    };
    spec.validate()?;
    Ok(spec)
}

/// Convenience: tabular cohort plus connectivity when configured.
pub fn generate(spec: &SynthSpec) -> Result<(Cohort, Vec<usize>)> {
    let (mut cohort, planted) = generate_tabular(spec)?;
    if spec.connectivity.is_some() {
        generate_connectivity(spec, &mut cohort)?;
    }
    Ok((cohort, planted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::TaskDefinition;
    use crate::graph::{binarize, global_metrics, BinarizeRule};

    fn base_spec() -> SynthSpec {
        SynthSpec {
            n_per_class: 20,
            features: 10,
            informative: 3,
            delta: 2.0,
            seed: 5,
            connectivity: None,
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = base_spec();
        let (a, planted_a) = generate_tabular(&spec).unwrap();
        let (b, planted_b) = generate_tabular(&spec).unwrap();
        assert_eq!(a.blocks["tabular"], b.blocks["tabular"]);
        assert_eq!(a.subjects, b.subjects);
        assert_eq!(planted_a, planted_b);
        assert_eq!(planted_a, vec![0, 1, 2]);
    }

    #[test]
    fn classes_are_balanced_and_task_selectable() {
        let (cohort, _) = generate_tabular(&base_spec()).unwrap();
        let positives = cohort.subjects.iter().filter(|s| s.status == POSITIVE_STATUS).count();
        assert_eq!(positives, 20);
        assert_eq!(cohort.subjects.len(), 40);
        let task = TaskDefinition::new("t", [POSITIVE_STATUS], [NEGATIVE_STATUS]).unwrap();
        let subset = cohort.select_task_subset(&task, "tabular").unwrap();
        assert_eq!(subset.labels.iter().filter(|&&l| l == 1).count(), 20);
    }

    #[test]
    fn planted_shift_appears_in_class_means() {
        let mut spec = base_spec();
        spec.n_per_class = 500;
        let (cohort, planted) = generate_tabular(&spec).unwrap();
        let task = TaskDefinition::new("t", [POSITIVE_STATUS], [NEGATIVE_STATUS]).unwrap();
        let subset = cohort.select_task_subset(&task, "tabular").unwrap();
        for &j in &planted {
            let mut sums = [0.0f64; 2];
            let mut counts = [0usize; 2];
            for (i, &l) in subset.labels.iter().enumerate() {
                sums[l as usize] += subset.matrix.get(i, j);
                counts[l as usize] += 1;
            }
            let gap = sums[1] / counts[1] as f64 - sums[0] / counts[0] as f64;
            // standard error of the mean difference ~ sqrt(2/500) ~ 0.063
            assert!((gap - spec.delta).abs() < 0.2, "feature {j}: gap {gap}");
        }
        // a non-planted feature carries no shift
        let j = spec.features - 1;
        let mut sums = [0.0f64; 2];
        for (i, &l) in subset.labels.iter().enumerate() {
            sums[l as usize] += subset.matrix.get(i, j);
        }
        let gap = (sums[1] - sums[0]) / 500.0;
        assert!(gap.abs() < 0.2, "null feature gap {gap}");
    }

    #[test]
    fn null_spec_has_no_class_signal() {
        let mut spec = base_spec();
        spec.delta = 0.0;
        spec.n_per_class = 500;
        let (cohort, _) = generate_tabular(&spec).unwrap();
        let task = TaskDefinition::new("t", [POSITIVE_STATUS], [NEGATIVE_STATUS]).unwrap();
        let subset = cohort.select_task_subset(&task, "tabular").unwrap();
        for j in 0..spec.features {
            let mut sums = [0.0f64; 2];
            for (i, &l) in subset.labels.iter().enumerate() {
                sums[l as usize] += subset.matrix.get(i, j);
            }
            // mean-difference standard error sqrt(2/500) ~ 0.063; 0.3 ~ 4.7 sigma
            assert!(((sums[1] - sums[0]) / 500.0).abs() < 0.3, "feature {j}");
        }
    }

    #[test]
    fn connectivity_gap_separates_global_efficiency() {
        let mut spec = base_spec();
        spec.n_per_class = 15;
        spec.connectivity = Some(ConnectivitySpec::default());
        let (cohort, _) = generate(&spec).unwrap();
        let mut eff = [Vec::new(), Vec::new()];
        for subject in &cohort.subjects {
            let matrix = &cohort.connectivity[&subject.id];
            let graph = binarize(matrix, BinarizeRule::Absolute(0.5)).unwrap();
            let label = usize::from(subject.status == POSITIVE_STATUS);
            eff[label].push(global_metrics(&graph).unwrap().global_efficiency);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&eff[1]) > mean(&eff[0]) + 0.05,
            "positive {} vs negative {}",
            mean(&eff[1]),
            mean(&eff[0])
        );
    }

    #[test]
    fn directed_variant_separates_triangle_counts() {
        let mut spec = base_spec();
        spec.n_per_class = 10;
        spec.connectivity = Some(ConnectivitySpec {
            rois: 12,
            directed: true,
            ..ConnectivitySpec::default()
        });
        let (cohort, _) = generate(&spec).unwrap();
        let mut counts = [Vec::new(), Vec::new()];
        for subject in &cohort.subjects {
            let matrix = &cohort.connectivity[&subject.id];
            assert!(matrix.directed);
            let g = crate::topology::DirectedGraph::from_connectivity(matrix, 0.1);
            let complex = crate::topology::build_flag_complex(&g, 2).unwrap();
            let label = usize::from(subject.status == POSITIVE_STATUS);
            counts[label].push(*complex.counts().get(2).unwrap_or(&0) as f64);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&counts[1]) > mean(&counts[0]) + 1.0,
            "2-simplices: positive {} vs negative {}",
            mean(&counts[1]),
            mean(&counts[0])
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = base_spec();
        spec.informative = 99;
        assert!(generate_tabular(&spec).is_err());
        let mut spec = base_spec();
        spec.delta = -1.0;
        assert!(generate_tabular(&spec).is_err());
        let spec = base_spec();
        let (mut cohort, _) = generate_tabular(&spec).unwrap();
        assert!(generate_connectivity(&spec, &mut cohort).is_err(), "no connectivity section");
    }

    #[test]
    fn distributional_sanity_on_large_draw() {
        let spec = SynthSpec {
            n_per_class: 5000,
            features: 2,
            informative: 0,
            delta: 0.0,
            seed: 123,
            connectivity: None,
        };
        let (cohort, _) = generate_tabular(&spec).unwrap();
        let matrix = &cohort.blocks["tabular"];
        let n = matrix.n_subjects() as f64;
        for j in 0..2 {
            let mean: f64 = (0..matrix.n_subjects()).map(|i| matrix.get(i, j)).sum::<f64>() / n;
            let var: f64 =
                (0..matrix.n_subjects()).map(|i| (matrix.get(i, j) - mean).powi(2)).sum::<f64>() / n;
            // 3 standard errors: sem = 1/sqrt(n) ~ 0.01, var sem ~ sqrt(2/n)
            assert!(mean.abs() < 0.03, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }
}
