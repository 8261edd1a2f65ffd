//! Experiment specification: the (task, dataset, algorithm grids) triplet as
//! a human-editable TOML file with a versioned schema, validated against the
//! method registries and filled with documented defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierFamily, ClassifierSpec, ForestParams, KnnParams, LrParams, SvmParams};
use crate::cohort::TaskDefinition;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_INNER_FOLDS: usize = 5;
pub const DEFAULT_FPR_TARGETS: [f64; 4] = [0.10, 0.15, 0.20, 0.30];

/// A scalar that may also be written as a list in TOML (`k = 10` or
/// `k = [10, 20, 50, 100]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvScheme {
    Stratified,
    Loocv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSection {
    name: String,
    positive: Vec<String>,
    negative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    block: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CvSection {
    #[serde(default = "default_scheme")]
    scheme: String,
    #[serde(default = "default_folds")]
    folds: usize,
    #[serde(default = "default_repeats")]
    repeats: usize,
    #[serde(default = "default_inner_folds")]
    inner_folds: usize,
    seed: Option<u64>,
}

fn default_scheme() -> String {
    "stratified".into()
}
fn default_folds() -> usize {
    DEFAULT_FOLDS
}
fn default_repeats() -> usize {
    DEFAULT_REPEATS
}
fn default_inner_folds() -> usize {
    DEFAULT_INNER_FOLDS
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection {
            scheme: default_scheme(),
            folds: DEFAULT_FOLDS,
            repeats: DEFAULT_REPEATS,
            inner_folds: DEFAULT_INNER_FOLDS,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ReductionSection {
    method: Option<String>,
    components: Option<OneOrMany<usize>>,
    lle_neighbors: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SelectionSection {
    method: Option<String>,
    k: Option<OneOrMany<usize>>,
    model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierSection {
    family: OneOrMany<String>,
    lr_l2: Option<OneOrMany<f64>>,
    knn_k: Option<OneOrMany<usize>>,
    trees: Option<usize>,
    svm_c: Option<OneOrMany<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(default)]
    reduction: ReductionSection,
    #[serde(default)]
    selection: SelectionSection,
    classifier: Option<ClassifierSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ReportSection {
    fpr_targets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DebugSection {
    #[serde(default)]
    double_dip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    schema_version: u32,
    id: Option<String>,
    task: TaskSection,
    data: DataSection,
    #[serde(default)]
    cv: CvSection,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    report: ReportSection,
    #[serde(default)]
    debug: DebugSection,
}

/// One reduction choice in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReductionChoice {
    None,
    Pca { components: usize },
    Lle { components: usize, neighbors: usize },
}

impl ReductionChoice {
    /// Components for tie-breaking; `None` sorts first.
    pub fn components(&self) -> usize {
        match self {
            ReductionChoice::None => 0,
            ReductionChoice::Pca { components } => *components,
            ReductionChoice::Lle { components, .. } => *components,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ReductionChoice::None => "none".into(),
            ReductionChoice::Pca { components } => format!("pca(m={components})"),
            ReductionChoice::Lle { components, neighbors } => {
                format!("lle(m={components},k={neighbors})")
            }
        }
    }
}

/// One selection choice in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SelectionChoice {
    None,
    Anova { k: usize },
    Chi2 { k: usize },
    Model { family: ClassifierFamily, k: usize },
}

impl SelectionChoice {
    /// k for tie-breaking; `None` sorts first.
    pub fn k(&self) -> usize {
        match self {
            SelectionChoice::None => 0,
            SelectionChoice::Anova { k } | SelectionChoice::Chi2 { k } | SelectionChoice::Model { k, .. } => *k,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SelectionChoice::None => "none".into(),
            SelectionChoice::Anova { k } => format!("anova(k={k})"),
            SelectionChoice::Chi2 { k } => format!("chi2(k={k})"),
            SelectionChoice::Model { family, k } => format!("model({},k={k})", family.name()),
        }
    }
}

/// Fully validated experiment specification with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub task: TaskDefinition,
    pub block: String,
    pub scheme: CvScheme,
    pub folds: usize,
    pub repeats: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub reductions: Vec<ReductionChoice>,
    pub selections: Vec<SelectionChoice>,
    pub classifiers: Vec<ClassifierSpec>,
    pub fpr_targets: Vec<f64>,
    /// Debug-only negative control: fit the whitener and selector on the
    /// full dataset before cross-validation. Flagged by the leakage audit.
    pub double_dip: bool,
}

impl ExperimentSpec {
    /// A minimal single-cell spec, convenient for library callers and tests.
    pub fn minimal(task: TaskDefinition, block: impl Into<String>, classifier: ClassifierSpec, seed: u64) -> Self {
        ExperimentSpec {
            id: task.name.clone(),
            task,
            block: block.into(),
            scheme: CvScheme::Stratified,
            folds: DEFAULT_FOLDS,
            repeats: DEFAULT_REPEATS,
            inner_folds: DEFAULT_INNER_FOLDS,
            seed,
            reductions: vec![ReductionChoice::None],
            selections: vec![SelectionChoice::None],
            classifiers: vec![classifier],
            fpr_targets: DEFAULT_FPR_TARGETS.to_vec(),
            double_dip: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        if self.reductions.is_empty() || self.selections.is_empty() || self.classifiers.is_empty() {
            return Err(Error::InvalidConfig("grid axes must be non-empty".into()));
        }
        match self.scheme {
            CvScheme::Stratified => {
                if self.folds < 2 || self.repeats == 0 {
                    return Err(Error::InvalidConfig("stratified cv needs folds >= 2 and repeats >= 1".into()));
                }
            }
            CvScheme::Loocv => {}
        }
        if self.inner_folds < 2 {
            return Err(Error::InvalidConfig("inner_folds must be >= 2".into()));
        }
        for spec in &self.classifiers {
            spec.validate()?;
        }
        for &t in &self.fpr_targets {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidConfig(format!("fpr target {t} outside [0, 1]")));
            }
        }
        for r in &self.reductions {
            match r {
                ReductionChoice::Pca { components } if *components == 0 => {
                    return Err(Error::InvalidConfig("pca components must be positive".into()));
                }
                ReductionChoice::Lle { components, neighbors } if *components == 0 || *neighbors == 0 => {
                    return Err(Error::InvalidConfig("lle components and neighbors must be positive".into()));
                }
                _ => {}
            }
        }
        for s in &self.selections {
            if matches!(s, SelectionChoice::Anova { k: 0 } | SelectionChoice::Chi2 { k: 0 } | SelectionChoice::Model { k: 0, .. }) {
                return Err(Error::InvalidConfig("selection k must be positive".into()));
            }
        }
        Ok(())
    }
}

const REDUCTION_REGISTRY: [&str; 3] = ["none", "pca", "lle"];
const SELECTION_REGISTRY: [&str; 4] = ["none", "anova", "chi2", "model"];

fn parse_reductions(section: &ReductionSection) -> Result<Vec<ReductionChoice>> {
    let method = section.method.as_deref().unwrap_or("none");
    match method {
        "none" => Ok(vec![ReductionChoice::None]),
        "pca" | "lle" => {
            let components = section
                .components
                .as_ref()
                .map(OneOrMany::values)
                .ok_or_else(|| Error::InvalidConfig(format!("reduction {method:?} needs `components`")))?;
            if components.is_empty() {
                return Err(Error::InvalidConfig("reduction components grid is empty".into()));
            }
            if method == "pca" {
                Ok(components.into_iter().map(|m| ReductionChoice::Pca { components: m }).collect())
            } else {
                let neighbors = section.lle_neighbors.unwrap_or(10);
                Ok(components
                    .into_iter()
                    .map(|m| ReductionChoice::Lle { components: m, neighbors })
                    .collect())
            }
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown reduction method {other:?}; registered: {}",
            REDUCTION_REGISTRY.join(", ")
        ))),
    }
}

fn parse_selections(section: &SelectionSection) -> Result<Vec<SelectionChoice>> {
    let method = section.method.as_deref().unwrap_or("none");
    if method == "none" {
        return Ok(vec![SelectionChoice::None]);
    }
    if !SELECTION_REGISTRY.contains(&method) {
        return Err(Error::InvalidConfig(format!(
            "unknown selection method {method:?}; registered: {}",
            SELECTION_REGISTRY.join(", ")
        )));
    }
    let ks = section
        .k
        .as_ref()
        .map(OneOrMany::values)
        .ok_or_else(|| Error::InvalidConfig(format!("selection {method:?} needs `k`")))?;
    if ks.is_empty() {
        return Err(Error::InvalidConfig("selection k grid is empty".into()));
    }
    match method {
        "anova" => Ok(ks.into_iter().map(|k| SelectionChoice::Anova { k }).collect()),
        "chi2" => Ok(ks.into_iter().map(|k| SelectionChoice::Chi2 { k }).collect()),
        "model" => {
            let family = ClassifierFamily::parse(
                section
                    .model
                    .as_deref()
                    .ok_or_else(|| Error::InvalidConfig("selection `model` method needs a `model` family".into()))?,
            )?;
            Ok(ks.into_iter().map(|k| SelectionChoice::Model { family, k }).collect())
        }
        _ => unreachable!(),
    }
}

fn parse_classifiers(section: Option<&ClassifierSection>) -> Result<Vec<ClassifierSpec>> {
    let Some(section) = section else {
        return Err(Error::InvalidConfig("spec needs a [grid.classifier] section with `family`".into()));
    };
    let mut specs = Vec::new();
    for name in section.family.values() {
        let family = ClassifierFamily::parse(&name)?;
        match family {
            ClassifierFamily::Lr => {
                for l2 in section.lr_l2.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![LrParams::default().l2]) {
                    specs.push(ClassifierSpec::Lr(LrParams { l2, ..LrParams::default() }));
                }
            }
            ClassifierFamily::Knn => {
                for k in section.knn_k.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![KnnParams::default().k]) {
                    specs.push(ClassifierSpec::Knn(KnnParams { k }));
                }
            }
            ClassifierFamily::Rfc | ClassifierFamily::Etc => {
                let params = ForestParams {
                    trees: section.trees.unwrap_or(ForestParams::default().trees),
                    ..ForestParams::default()
                };
                specs.push(if family == ClassifierFamily::Rfc {
                    ClassifierSpec::Rfc(params)
                } else {
                    ClassifierSpec::Etc(params)
                });
            }
            ClassifierFamily::Svm => {
                for c in section.svm_c.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![SvmParams::default().c]) {
                    specs.push(ClassifierSpec::Svm(SvmParams { c, ..SvmParams::default() }));
                }
            }
        }
    }
    if specs.is_empty() {
        return Err(Error::InvalidConfig("classifier grid is empty".into()));
    }
    Ok(specs)
}

/// Parse and validate an experiment spec from TOML text. `fallback_seed` is
/// used when the file omits `cv.seed` (the CLI passes `--seed` or the
/// `NEUROPIPE_SEED` environment variable here).
pub fn parse_experiment_spec(text: &str, source: &Path, fallback_seed: u64) -> Result<ExperimentSpec> {
    let file: SpecFile = toml::from_str(text)
        .map_err(|e| Error::parse(source, 0, format!("spec: {e}")))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported spec schema_version {} (this build reads {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let task = TaskDefinition::new(file.task.name.clone(), file.task.positive.clone(), file.task.negative.clone())?;
    let scheme = match file.cv.scheme.as_str() {
        "stratified" => CvScheme::Stratified,
        "loocv" => CvScheme::Loocv,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown cv scheme {other:?}; registered: stratified, loocv"
            )))
        }
    };
    let spec = ExperimentSpec {
        id: file.id.unwrap_or_else(|| format!("{}-{}", file.task.name, file.data.block)),
        task,
        block: file.data.block,
        scheme,
        folds: file.cv.folds,
        repeats: file.cv.repeats,
        inner_folds: file.cv.inner_folds,
        seed: file.cv.seed.unwrap_or(fallback_seed),
        reductions: parse_reductions(&file.grid.reduction)?,
        selections: parse_selections(&file.grid.selection)?,
        classifiers: parse_classifiers(file.grid.classifier.as_ref())?,
        fpr_targets: file.report.fpr_targets.unwrap_or_else(|| DEFAULT_FPR_TARGETS.to_vec()),
        double_dip: file.debug.double_dip,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_experiment_spec(path: &Path, fallback_seed: u64) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiment_spec(&text, path, fallback_seed)
}
