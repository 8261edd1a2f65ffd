//! Personal Classification Quality: per-subject cross-validation decision
//! counts across experiments, pooled true/false positive rates and
//! per-subject decision frequencies, subject homogeneity testing, 1-D
//! clustering of per-subject quality, covariate association, and majority
//! ensembles of decision logs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::cohort::{Cohort, Covariate};
use crate::cv::{DecisionLog, DecisionRow};
use crate::error::{Error, Result};

/// One subject's counts within one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PcqCell {
    /// Participation flag; false means all counts are zero.
    pub participated: bool,
    /// Number of CV decisions about this subject.
    pub n_cv: usize,
    /// Decisions assigning the subject to CS1 (positive class).
    pub n_cs1: usize,
    /// Decisions assigning the subject to CS2 (negative class).
    pub n_cs2: usize,
    /// The subject's class in the experiment's task (1 = CS1, 0 = CS2).
    pub class: u8,
}

/// The PCQ table: a zero group of subject columns (id, status) followed by
/// one column group of counts per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcqTable {
    /// Sorted subject ids with their status labels.
    pub subjects: Vec<(String, String)>,
    /// Experiment ids in first-seen order per sorted log input.
    pub experiments: Vec<String>,
    /// `(subject id, experiment id)` -> counts.
    pub cells: BTreeMap<(String, String), PcqCell>,
}

impl PcqTable {
    pub fn cell(&self, subject: &str, experiment: &str) -> PcqCell {
        self.cells
            .get(&(subject.to_string(), experiment.to_string()))
            .copied()
            .unwrap_or_default()
    }
}

/// Per-subject CS1-decision frequencies over the participating CS1 subjects
/// of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFrequencySet {
    pub experiment: String,
    /// `(subject id, frequency, n_cv, n_cs1)` sorted by subject id.
    pub entries: Vec<(String, f64, usize, usize)>,
}

impl SubjectFrequencySet {
    /// N_{MLE,CS1}: number of participating CS1 subjects.
    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }
}

/// Tally decision logs into the PCQ table. Every log subject must exist in
/// the cohort.
pub fn build_pcq(logs: &[DecisionLog], cohort: &Cohort) -> Result<PcqTable> {
    let mut experiments = Vec::new();
    let mut cells: BTreeMap<(String, String), PcqCell> = BTreeMap::new();
    let mut seen_subjects = BTreeSet::new();

    for log in logs {
        for row in &log.rows {
            if cohort.subject(&row.subject).is_none() {
                return Err(Error::InvalidData(format!(
                    "decision log references unknown subject {:?}",
                    row.subject
                )));
            }
            if !experiments.contains(&row.experiment) {
                experiments.push(row.experiment.clone());
            }
            seen_subjects.insert(row.subject.clone());
            let cell = cells
                .entry((row.subject.clone(), row.experiment.clone()))
                .or_default();
            cell.participated = true;
            cell.n_cv += 1;
            cell.class = row.true_label;
            if row.predicted == 1 {
                cell.n_cs1 += 1;
            } else {
                cell.n_cs2 += 1;
            }
        }
    }

    let mut subjects: Vec<(String, String)> = cohort
        .subjects
        .iter()
        .filter(|s| seen_subjects.contains(&s.id))
        .map(|s| (s.id.clone(), s.status.clone()))
        .collect();
    subjects.sort();
    Ok(PcqTable { subjects, experiments, cells })
}

/// Pooled decision rate: the fraction of CV decisions assigning class
/// `decided` among all decisions about participating subjects whose task
/// class is `cs`. `rate(_, 1, 1)` is the TP rate, `rate(_, 0, 1)` the FP
/// rate.
pub fn rate(table: &PcqTable, experiment: &str, cs: u8, decided: u8) -> Result<f64> {
    let mut numerator = 0usize;
    let mut denominator = 0usize;
    for (id, _) in &table.subjects {
        let cell = table.cell(id, experiment);
        if cell.participated && cell.class == cs {
            numerator += if decided == 1 { cell.n_cs1 } else { cell.n_cs2 };
            denominator += cell.n_cv;
        }
    }
    if denominator == 0 {
        return Err(Error::InvalidData(format!(
            "experiment {experiment:?}: no participating subject with class {cs}"
        )));
    }
    Ok(numerator as f64 / denominator as f64)
}

/// Per-subject CS1-decision frequencies for participating CS1 subjects.
pub fn subject_frequencies(table: &PcqTable, experiment: &str) -> Result<SubjectFrequencySet> {
    let mut entries = Vec::new();
    for (id, _) in &table.subjects {
        let cell = table.cell(id, experiment);
        if cell.participated && cell.class == 1 {
            entries.push((id.clone(), cell.n_cs1 as f64 / cell.n_cv as f64, cell.n_cv, cell.n_cs1));
        }
    }
    if entries.is_empty() {
        return Err(Error::InvalidData(format!(
            "experiment {experiment:?}: no participating CS1 subject"
        )));
    }
    Ok(SubjectFrequencySet { experiment: experiment.to_string(), entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HomogeneityVerdict {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityResult {
    pub verdict: HomogeneityVerdict,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
}

/// Chi-squared homogeneity test of per-subject CS1-decision counts against
/// the pooled rate. Counts (not frequencies) are the sufficient statistics
/// at small N_CV.
pub fn homogeneity_test(freqs: &SubjectFrequencySet, alpha: f64) -> Result<HomogeneityResult> {
    let usable: Vec<&(String, f64, usize, usize)> =
        freqs.entries.iter().filter(|e| e.2 >= 2).collect();
    if usable.len() < 2 {
        return Err(Error::InvalidData(
            "insufficient data: homogeneity test needs >= 2 subjects with N_CV >= 2".into(),
        ));
    }
    let total_n: usize = usable.iter().map(|e| e.2).sum();
    let total_hits: usize = usable.iter().map(|e| e.3).sum();
    let pooled = total_hits as f64 / total_n as f64;

    let mut statistic = 0.0;
    if pooled > 0.0 && pooled < 1.0 {
        for e in &usable {
            // integer products first, so a subject matching the pooled rate
            // exactly contributes an exact zero
            let expected_hit = (e.2 * total_hits) as f64 / total_n as f64;
            let expected_miss = (e.2 * (total_n - total_hits)) as f64 / total_n as f64;
            let miss = (e.2 - e.3) as f64;
            statistic += (e.3 as f64 - expected_hit).powi(2) / expected_hit
                + (miss - expected_miss).powi(2) / expected_miss;
        }
    }
    let df = (usable.len() - 1) as f64;
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        1.0 - ChiSquared::new(df).unwrap().cdf(statistic)
    };
    Ok(HomogeneityResult {
        verdict: if p_value < alpha {
            HomogeneityVerdict::Heterogeneous
        } else {
            HomogeneityVerdict::Homogeneous
        },
        statistic,
        p_value,
        alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster index per entry, aligned with the frequency set's order.
    pub assignment: Vec<usize>,
    pub centers: Vec<f64>,
    /// Clusters that ended up empty (possible when frequencies coincide).
    pub empty_clusters: Vec<usize>,
}

/// Deterministic 1-D k-means on frequencies, initialized at quantile seeds.
pub fn cluster_subjects(freqs: &SubjectFrequencySet, n_clusters: usize) -> Result<Clustering> {
    let values = freqs.frequencies();
    if n_clusters == 0 || n_clusters > values.len() {
        return Err(Error::InvalidConfig(format!(
            "n_clusters {n_clusters} must be in 1..={}",
            values.len()
        )));
    }
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut centers: Vec<f64> = (0..n_clusters)
        .map(|c| {
            let q = (c as f64 + 0.5) / n_clusters as f64;
            sorted[((q * sorted.len() as f64) as usize).min(sorted.len() - 1)]
        })
        .collect();

    let mut assignment = vec![0usize; values.len()];
    for _ in 0..200 {
        let mut changed = false;
        for (i, &v) in values.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &center) in centers.iter().enumerate() {
                let d = (v - center).abs();
                // strict `<` keeps the lower cluster on exact ties: deterministic
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        for c in 0..n_clusters {
            let members: Vec<f64> = values
                .iter()
                .zip(&assignment)
                .filter(|&(_, &a)| a == c)
                .map(|(&v, _)| v)
                .collect();
            if !members.is_empty() {
                centers[c] = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let empty_clusters = (0..n_clusters)
        .filter(|&c| !assignment.contains(&c))
        .collect();
    Ok(Clustering { assignment, centers, empty_clusters })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateAssociation {
    pub covariate: String,
    /// "kruskal-wallis" for numeric covariates, "chi2-contingency" for
    /// categorical ones, "skipped" with a reason in `note`.
    pub test: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub note: Option<String>,
}

fn kruskal_wallis(groups: &[Vec<f64>]) -> Option<(f64, f64)> {
    let k = groups.iter().filter(|g| !g.is_empty()).count();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if k < 2 || n < 3 {
        return None;
    }
    // Mid-ranks over the pooled sample, with tie correction.
    let mut pooled: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (g, group) in groups.iter().enumerate() {
        for &v in group {
            pooled.push((v, g));
        }
    }
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0;
        for r in ranks.iter_mut().take(j).skip(i) {
            *r = avg_rank;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let mut rank_sums = vec![0.0; groups.len()];
    for (idx, &(_, g)) in pooled.iter().enumerate() {
        rank_sums[g] += ranks[idx];
    }
    let nf = n as f64;
    let mut h = 0.0;
    for (g, group) in groups.iter().enumerate() {
        if !group.is_empty() {
            h += rank_sums[g] * rank_sums[g] / group.len() as f64;
        }
    }
    h = 12.0 / (nf * (nf + 1.0)) * h - 3.0 * (nf + 1.0);
    let correction = 1.0 - tie_term / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return None; // all values tied
    }
    h /= correction;
    let df = (k - 1) as f64;
    let p = 1.0 - ChiSquared::new(df).unwrap().cdf(h.max(0.0));
    Some((h, p))
}

fn contingency_chi2(table: &[Vec<usize>]) -> Option<(f64, f64)> {
    let rows = table.len();
    let cols = table.first()?.len();
    if rows < 2 || cols < 2 {
        return None;
    }
    let row_totals: Vec<f64> = table.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let col_totals: Vec<f64> =
        (0..cols).map(|c| table.iter().map(|r| r[c]).sum::<usize>() as f64).collect();
    let grand: f64 = row_totals.iter().sum();
    if grand == 0.0 {
        return None;
    }
    let mut statistic = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let expected = row_totals[r] * col_totals[c] / grand;
            if expected > 0.0 {
                statistic += (table[r][c] as f64 - expected).powi(2) / expected;
            }
        }
    }
    let df = ((rows - 1) * (cols - 1)) as f64;
    let p = 1.0 - ChiSquared::new(df).unwrap().cdf(statistic);
    Some((statistic, p))
}

/// Test each cohort covariate for association with the cluster assignment:
/// Kruskal-Wallis for numeric covariates, contingency chi-squared for
/// categorical ones. Constant or missing covariates are skipped with a
/// reason rather than erroring.
pub fn covariate_association(
    freqs: &SubjectFrequencySet,
    clustering: &Clustering,
    cohort: &Cohort,
) -> Vec<CovariateAssociation> {
    let mut names = BTreeSet::new();
    for subject in &cohort.subjects {
        names.extend(subject.covariates.keys().cloned());
    }
    let n_clusters = clustering.centers.len();

    let mut out = Vec::new();
    for name in names {
        let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); n_clusters];
        let mut categorical: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut missing = 0usize;
        let mut any_number = false;
        let mut any_category = false;
        for (entry, &cluster) in freqs.entries.iter().zip(&clustering.assignment) {
            match cohort.subject(&entry.0).and_then(|s| s.covariates.get(&name)) {
                Some(Covariate::Number(v)) => {
                    numeric[cluster].push(*v);
                    any_number = true;
                }
                Some(Covariate::Category(c)) => {
                    categorical
                        .entry(c.clone())
                        .or_insert_with(|| vec![0; n_clusters])[cluster] += 1;
                    any_category = true;
                }
                None => missing += 1,
            }
        }
        let skipped = |note: &str| CovariateAssociation {
            covariate: name.clone(),
            test: "skipped".into(),
            statistic: None,
            p_value: None,
            note: Some(note.into()),
        };
        if any_number && any_category {
            out.push(skipped("mixed numeric/categorical values"));
            continue;
        }
        if missing == freqs.entries.len() {
            out.push(skipped("covariate missing for all clustered subjects"));
            continue;
        }
        if any_number {
            match kruskal_wallis(&numeric) {
                Some((statistic, p)) => out.push(CovariateAssociation {
                    covariate: name.clone(),
                    test: "kruskal-wallis".into(),
                    statistic: Some(statistic),
                    p_value: Some(p),
                    note: None,
                }),
                None => out.push(skipped("constant across subjects or degenerate clusters")),
            }
        } else {
            let table: Vec<Vec<usize>> = categorical.values().cloned().collect();
            match contingency_chi2(&table) {
                Some((statistic, p)) => out.push(CovariateAssociation {
                    covariate: name.clone(),
                    test: "chi2-contingency".into(),
                    statistic: Some(statistic),
                    p_value: Some(p),
                    note: None,
                }),
                None => out.push(skipped("constant across subjects or degenerate clusters")),
            }
        }
    }
    out
}

/// Weighted majority vote over member logs covering a common subject set.
/// Per `(subject, repeat)` key: predicted = 1 when the weighted vote for CS1
/// strictly exceeds half the total weight (exact ties fall to 0), score =
/// weighted mean of member scores.
pub fn majority_ensemble(logs: &[DecisionLog], weights: &[f64]) -> Result<DecisionLog> {
    if logs.len() < 2 {
        return Err(Error::InvalidConfig("ensemble needs >= 2 member logs".into()));
    }
    if logs.len() != weights.len() {
        return Err(Error::InvalidConfig("one weight per member log required".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidConfig("ensemble weights must be positive".into()));
    }
    // (subject, repeat) keys present in every member log.
    let mut keys: Option<BTreeSet<(String, usize)>> = None;
    for log in logs {
        let set: BTreeSet<(String, usize)> =
            log.rows.iter().map(|r| (r.subject.clone(), r.repeat)).collect();
        keys = Some(match keys {
            None => set,
            Some(prev) => prev.intersection(&set).cloned().collect(),
        });
    }
    let keys = keys.unwrap();
    if keys.is_empty() {
        return Err(Error::InvalidData("member logs share no (subject, repeat) pair".into()));
    }

    let total_weight: f64 = weights.iter().sum();
    let mut rows = Vec::with_capacity(keys.len());
    for (subject, repeat) in keys {
        let mut vote = 0.0;
        let mut score = 0.0;
        let mut true_label = 0;
        let mut fold = 0;
        for (log, &w) in logs.iter().zip(weights) {
            let row = log
                .rows
                .iter()
                .find(|r| r.subject == subject && r.repeat == repeat)
                .expect("key intersection guarantees presence");
            if row.predicted == 1 {
                vote += w;
            }
            score += w * row.score;
            true_label = row.true_label;
            fold = row.fold;
        }
        rows.push(DecisionRow {
            experiment: "ensemble".into(),
            subject,
            repeat,
            fold,
            true_label,
            predicted: u8::from(vote > total_weight / 2.0),
            score: score / total_weight,
            cell: "majority-ensemble".into(),
        });
    }
    Ok(DecisionLog { rows })
}

/// Export mirroring the described column layout: the zero group (id,
/// status), then per-experiment groups (I, N_CV, N_CS1, N_CS2). A footnote
/// records the pooled-rate denominator convention.
pub fn write_pcq(path: &Path, table: &PcqTable) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "# neuropipe-pcq v1").unwrap();
    writeln!(
        out,
        "# note: pooled rates divide by total participations (sum of N_CV), the reading under which they equal TP/FP rates"
    )
    .unwrap();
    let mut header = vec!["id".to_string(), "status".to_string()];
    for e in &table.experiments {
        for col in ["I", "N_CV", "N_CS1", "N_CS2"] {
            header.push(format!("{e}:{col}"));
        }
    }
    writeln!(out, "{}", header.join(",")).unwrap();
    for (id, status) in &table.subjects {
        let mut fields = vec![id.clone(), status.clone()];
        for e in &table.experiments {
            let cell = table.cell(id, e);
            fields.push(usize::from(cell.participated).to_string());
            fields.push(cell.n_cv.to_string());
            fields.push(cell.n_cs1.to_string());
            fields.push(cell.n_cs2.to_string());
        }
        writeln!(out, "{}", fields.join(",")).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
