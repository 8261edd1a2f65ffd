//! Core data model: subjects, feature blocks, connectivity and binary task
//! definitions.
//!
//! Everything downstream (selection, cross-validation, PCQ bookkeeping)
//! consumes these types. Subjects are always joined by id string, never by row
//! position, because the feature blocks are collected by independent
//! preprocessing chains. Ordering is deterministic (sorted by id) so a fold
//! plan is reproducible from a seed alone.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A covariate cell: numeric where it parses as a number, categorical
/// otherwise. Missing covariates are simply absent from the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Covariate {
    Number(f64),
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    /// Clinical status label, e.g. `E`, `D`, `H`, `DE`, `TLE-P`.
    pub status: String,
    pub covariates: BTreeMap<String, Covariate>,
}

/// Provenance of a feature block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Morphometry,
    Graph,
    Topology,
    Combined,
}

/// Dense subjects x features block with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub subject_ids: Vec<String>,
    pub feature_names: Vec<String>,
    /// Row-major, `subject_ids.len() * feature_names.len()` values.
    pub values: Vec<f64>,
    pub block_kind: BlockKind,
}

impl FeatureMatrix {
    pub fn new(
        subject_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Vec<f64>,
        block_kind: BlockKind,
    ) -> Result<Self> {
        if values.len() != subject_ids.len() * feature_names.len() {
            return Err(Error::InvalidData(format!(
                "feature matrix shape mismatch: {} rows x {} cols != {} values",
                subject_ids.len(),
                feature_names.len(),
                values.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name) {
                return Err(Error::InvalidData(format!("duplicate feature name {name:?}")));
            }
        }
        Ok(FeatureMatrix {
            subject_ids,
            feature_names,
            values,
            block_kind,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_features() + j]
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.subject_ids.iter().position(|s| s == id)
    }
}

/// Square weighted adjacency over named ROIs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    pub roi_names: Vec<String>,
    /// Row-major n x n weights; the diagonal is forced to zero on load.
    pub weights: Vec<f64>,
    pub directed: bool,
}

impl ConnectivityMatrix {
    pub fn n(&self) -> usize {
        self.roi_names.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n() + j]
    }
}

/// A binary classification task: which statuses map to the positive class
/// (CS1) and which to the negative class (CS2, conventionally `H`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub name: String,
    pub positive_statuses: BTreeSet<String>,
    pub negative_statuses: BTreeSet<String>,
}

impl TaskDefinition {
    pub fn new(
        name: impl Into<String>,
        positive: impl IntoIterator<Item = impl Into<String>>,
        negative: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self> {
        let task = TaskDefinition {
            name: name.into(),
            positive_statuses: positive.into_iter().map(Into::into).collect(),
            negative_statuses: negative.into_iter().map(Into::into).collect(),
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positive_statuses.is_empty() || self.negative_statuses.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "task {:?}: positive and negative status sets must be non-empty",
                self.name
            )));
        }
        if let Some(s) = self.positive_statuses.intersection(&self.negative_statuses).next() {
            return Err(Error::InvalidConfig(format!(
                "task {:?}: status {s:?} appears in both classes",
                self.name
            )));
        }
        Ok(())
    }

    /// `Some(1)` for CS1, `Some(0)` for CS2, `None` for statuses outside the task.
    pub fn label_of(&self, status: &str) -> Option<u8> {
        if self.positive_statuses.contains(status) {
            Some(1)
        } else if self.negative_statuses.contains(status) {
            Some(0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Cohort {
    pub subjects: Vec<SubjectRecord>,
    pub blocks: BTreeMap<String, FeatureMatrix>,
    pub connectivity: BTreeMap<String, ConnectivityMatrix>,
}

/// Result of a task selection: aligned rows, binary labels and subject ids,
/// sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSubset {
    pub matrix: FeatureMatrix,
    pub labels: Vec<u8>,
    pub ids: Vec<String>,
}

impl Cohort {
    pub fn subject(&self, id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|s| s.id == id)
    }

    /// Select the rows of `block` belonging to subjects whose status falls in
    /// the task's status sets. Rows come out sorted by subject id with label 1
    /// for CS1, 0 for CS2.
    pub fn select_task_subset(&self, task: &TaskDefinition, block: &str) -> Result<TaskSubset> {
        task.validate()?;
        let matrix = self.blocks.get(block).ok_or_else(|| {
            Error::InvalidData(format!(
                "unknown block {block:?}; available: {:?}",
                self.blocks.keys().collect::<Vec<_>>()
            ))
        })?;

        let mut chosen: Vec<(&str, u8)> = Vec::new();
        for subject in &self.subjects {
            if let Some(label) = task.label_of(&subject.status) {
                chosen.push((&subject.id, label));
            }
        }
        chosen.sort_by(|a, b| a.0.cmp(b.0));

        if !chosen.iter().any(|&(_, l)| l == 1) {
            return Err(Error::InvalidData(format!(
                "task {:?}: empty class (no subject matches the positive statuses)",
                task.name
            )));
        }
        if !chosen.iter().any(|&(_, l)| l == 0) {
            return Err(Error::InvalidData(format!(
                "task {:?}: empty class (no subject matches the negative statuses)",
                task.name
            )));
        }

        let p = matrix.n_features();
        let mut values = Vec::with_capacity(chosen.len() * p);
        let mut ids = Vec::with_capacity(chosen.len());
        let mut labels = Vec::with_capacity(chosen.len());
        for (id, label) in chosen {
            let row = matrix.row_index(id).ok_or_else(|| {
                Error::InvalidData(format!("subject {id:?} has no row in block {block:?}"))
            })?;
            values.extend_from_slice(matrix.row(row));
            ids.push(id.to_string());
            labels.push(label);
        }

        Ok(TaskSubset {
            matrix: FeatureMatrix::new(
                ids.clone(),
                matrix.feature_names.clone(),
                values,
                matrix.block_kind,
            )?,
            labels,
            ids,
        })
    }

    /// Report-only structural validation: duplicate ids, non-finite cells,
    /// rows in a block without a subject record. An empty report means the
    /// cohort is accepted.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();

        let mut first_seen: HashMap<&str, usize> = HashMap::new();
        for (i, subject) in self.subjects.iter().enumerate() {
            if let Some(&j) = first_seen.get(subject.id.as_str()) {
                report.issues.push(ValidationIssue::DuplicateSubject {
                    id: subject.id.clone(),
                    rows: (j, i),
                });
            } else {
                first_seen.insert(&subject.id, i);
            }
        }

        let known: HashSet<&str> = self.subjects.iter().map(|s| s.id.as_str()).collect();
        for (block_name, block) in &self.blocks {
            for (i, id) in block.subject_ids.iter().enumerate() {
                if !known.contains(id.as_str()) {
                    report.issues.push(ValidationIssue::UnknownSubject {
                        block: block_name.clone(),
                        id: id.clone(),
                    });
                }
                for (j, name) in block.feature_names.iter().enumerate() {
                    let v = block.get(i, j);
                    if !v.is_finite() {
                        report.issues.push(ValidationIssue::NonFiniteCell {
                            block: block_name.clone(),
                            subject: id.clone(),
                            feature: name.clone(),
                            value: v,
                        });
                    }
                }
            }
        }
        report
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    DuplicateSubject { id: String, rows: (usize, usize) },
    UnknownSubject { block: String, id: String },
    NonFiniteCell { block: String, subject: String, feature: String, value: f64 },
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationIssue::DuplicateSubject { id, rows } => {
                write!(f, "duplicate subject id {id:?} at rows {} and {}", rows.0, rows.1)
            }
            ValidationIssue::UnknownSubject { block, id } => {
                write!(f, "block {block:?} has a row for unknown subject {id:?}")
            }
            ValidationIssue::NonFiniteCell { block, subject, feature, value } => {
                write!(f, "non-finite value {value} in block {block:?} at ({subject:?}, {feature:?})")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn status_cohort(counts: &[(&str, usize)], p: usize) -> Cohort {
        let mut subjects = Vec::new();
        let mut idx = 0usize;
        for &(status, n) in counts {
            for _ in 0..n {
                subjects.push(SubjectRecord {
                    id: format!("s{idx:03}"),
                    status: status.to_string(),
                    covariates: BTreeMap::new(),
                });
                idx += 1;
            }
        }
        let ids: Vec<String> = subjects.iter().map(|s| s.id.clone()).collect();
        let names: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
        let values: Vec<f64> = (0..ids.len() * p).map(|v| v as f64).collect();
        let block = FeatureMatrix::new(ids, names, values, BlockKind::Morphometry).unwrap();
        let mut blocks = BTreeMap::new();
        blocks.insert("morphometry".to_string(), block);
        Cohort { subjects, blocks, connectivity: BTreeMap::new() }
    }

    #[test]
    fn evsh_subset_has_balanced_labels() {
        let cohort = status_cohort(&[("E", 25), ("H", 25)], 4);
        let task = TaskDefinition::new("EvsH", ["E"], ["H"]).unwrap();
        let subset = cohort.select_task_subset(&task, "morphometry").unwrap();
        assert_eq!(subset.matrix.n_subjects(), 50);
        assert_eq!(subset.labels.iter().filter(|&&l| l == 1).count(), 25);
        assert_eq!(subset.labels.iter().filter(|&&l| l == 0).count(), 25);
        assert_eq!(subset.ids.len(), subset.labels.len());
    }

    #[test]
    fn empty_class_is_an_error() {
        let cohort = status_cohort(&[("H", 10)], 2);
        let task = TaskDefinition::new("EvsH", ["E"], ["H"]).unwrap();
        let err = cohort.select_task_subset(&task, "morphometry").unwrap_err();
        assert!(err.to_string().contains("empty class"), "{err}");
    }

    #[test]
    fn multi_status_positive_class() {
        let cohort = status_cohort(&[("E", 5), ("DE", 5), ("H", 5)], 2);
        let task = TaskDefinition::new("EvsNE", ["E", "DE"], ["H"]).unwrap();
        let subset = cohort.select_task_subset(&task, "morphometry").unwrap();
        assert_eq!(subset.labels.iter().filter(|&&l| l == 1).count(), 10);
        assert_eq!(subset.labels.iter().filter(|&&l| l == 0).count(), 5);
    }

    #[test]
    fn unknown_block_is_an_error() {
        let cohort = status_cohort(&[("E", 2), ("H", 2)], 2);
        let task = TaskDefinition::new("EvsH", ["E"], ["H"]).unwrap();
        assert!(cohort.select_task_subset(&task, "graph").is_err());
    }

    #[test]
    fn overlapping_task_sets_rejected() {
        assert!(TaskDefinition::new("bad", ["E", "H"], ["H"]).is_err());
    }

    #[test]
    fn subset_is_deterministic() {
        let cohort = status_cohort(&[("E", 7), ("H", 6)], 3);
        let task = TaskDefinition::new("EvsH", ["E"], ["H"]).unwrap();
        let a = cohort.select_task_subset(&task, "morphometry").unwrap();
        let b = cohort.select_task_subset(&task, "morphometry").unwrap();
        assert_eq!(a, b);
        let mut sorted = a.ids.clone();
        sorted.sort();
        assert_eq!(a.ids, sorted);
    }

    #[test]
    fn validate_flags_duplicates_and_nan() {
        let mut cohort = status_cohort(&[("E", 3), ("H", 3)], 2);
        assert!(cohort.validate().is_clean());

        cohort.subjects.push(SubjectRecord {
            id: "s000".into(),
            status: "E".into(),
            covariates: BTreeMap::new(),
        });
        let block = cohort.blocks.get_mut("morphometry").unwrap();
        block.values[3] = f64::NAN;
        let report = cohort.validate();
        assert_eq!(report.issues.len(), 2);
        let text: Vec<String> = report.issues.iter().map(|i| i.to_string()).collect();
        assert!(text.iter().any(|t| t.contains("s000") && t.contains("duplicate")));
        assert!(text.iter().any(|t| t.contains("s001") && t.contains("f1")));
    }
}
