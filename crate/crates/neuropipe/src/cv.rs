//! The experiment loop: outer evaluation with stratified repeated CV or
//! leave-one-out, an inner grid search over (reduction, selection,
//! classifier) cells, a structural leakage guard recording every fit's
//! subject scope, and full per-decision logging.
//!
//! Outer `(repeat, fold)` units evaluate in parallel; every random choice is
//! drawn from a stream derived from `(seed, repeat, fold, cell, ...)`
//! coordinates, and log rows are sorted by coordinates before emission, so
//! results are independent of thread schedule and `--jobs`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{fit, ClassifierSpec, FittedClassifier};
use crate::cohort::{Cohort, TaskSubset};
use crate::dimred::{lle_embed, lle_transform, pca_fit, pca_transform, LleModel, PcaModel, Whitener, LLE_DEFAULT_REGULARIZER};
use crate::error::{Error, Result};
use crate::expspec::{CvScheme, ExperimentSpec, ReductionChoice, SelectionChoice};
use crate::rng::{derive_rng, derive_seed};
use crate::select::{anova_f, chi2_scores, model_based_select, project, select_k_best};

const TAG_OUTER_FOLDS: u64 = 0x0F;
const TAG_INNER_FOLDS: u64 = 0x1F;
const TAG_CELL_SEED: u64 = 0x2F;

/// Reproducible subject-to-fold assignment, one partition per repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    /// `assignments[repeat][subject_index] = fold`.
    pub assignments: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn repeats(&self) -> usize {
        self.assignments.len()
    }

    pub fn test_indices(&self, repeat: usize, fold: usize) -> Vec<usize> {
        self.assignments[repeat]
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, repeat: usize, fold: usize) -> Vec<usize> {
        self.assignments[repeat]
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Build the fold plan: stratified round-robin after a seeded per-class
/// shuffle, or LOOCV as `n` singleton folds (single repeat).
pub fn make_folds(labels: &[u8], scheme: CvScheme, folds: usize, repeats: usize, seed: u64) -> Result<FoldPlan> {
    match scheme {
        CvScheme::Loocv => Ok(FoldPlan {
            n_folds: labels.len(),
            seed,
            assignments: vec![(0..labels.len()).collect()],
        }),
        CvScheme::Stratified => {
            for class in [0u8, 1u8] {
                let count = labels.iter().filter(|&&l| l == class).count();
                if count < folds {
                    return Err(Error::InvalidData(format!(
                        "class {class} has {count} members, fewer than {folds} folds"
                    )));
                }
            }
            let mut assignments = Vec::with_capacity(repeats);
            for repeat in 0..repeats {
                let mut rng = derive_rng(seed, &[TAG_OUTER_FOLDS, repeat as u64]);
                let mut assignment = vec![0usize; labels.len()];
                for class in [0u8, 1u8] {
                    let mut members: Vec<usize> =
                        (0..labels.len()).filter(|&i| labels[i] == class).collect();
                    members.shuffle(&mut rng);
                    for (pos, &i) in members.iter().enumerate() {
                        assignment[i] = pos % folds;
                    }
                }
                assignments.push(assignment);
            }
            Ok(FoldPlan { n_folds: folds, seed, assignments })
        }
    }
}

/// One concrete grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineCell {
    pub reduction: ReductionChoice,
    pub selection: SelectionChoice,
    pub classifier: ClassifierSpec,
}

impl PipelineCell {
    pub fn describe(&self) -> String {
        format!(
            "sel={};red={};clf={}",
            self.selection.describe(),
            self.reduction.describe(),
            self.classifier.describe()
        )
    }

    /// Tie-break key for equal inner scores: smaller selection k, then
    /// smaller reduction dimension, then family order lr<knn<rfc<etc<svm.
    fn tie_key(&self) -> (usize, usize, usize) {
        let family_rank = crate::classify::ClassifierFamily::ALL
            .iter()
            .position(|&f| f == self.classifier.family())
            .unwrap();
        (self.selection.k(), self.reduction.components(), family_rank)
    }
}

pub fn grid_cells(spec: &ExperimentSpec) -> Vec<PipelineCell> {
    let mut cells = Vec::new();
    for selection in &spec.selections {
        for reduction in &spec.reductions {
            for classifier in &spec.classifiers {
                cells.push(PipelineCell {
                    reduction: *reduction,
                    selection: *selection,
                    classifier: classifier.clone(),
                });
            }
        }
    }
    cells
}

/// One classifier decision about one subject in one test fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub experiment: String,
    pub subject: String,
    pub repeat: usize,
    pub fold: usize,
    pub true_label: u8,
    pub predicted: u8,
    pub score: f64,
    pub cell: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionLog {
    pub rows: Vec<DecisionRow>,
}

impl DecisionLog {
    fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.repeat, a.fold, &a.subject).cmp(&(b.repeat, b.fold, &b.subject))
        });
    }
}

const LOG_HEADER: &str = "# neuropipe-decision-log v1";
const LOG_COLUMNS: &str = "experiment,subject,repeat,fold,true_label,predicted,score,cell";

pub fn write_decision_log(path: &Path, log: &DecisionLog) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{LOG_HEADER}").unwrap();
    writeln!(out, "{LOG_COLUMNS}").unwrap();
    for row in &log.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.experiment, row.subject, row.repeat, row.fold, row.true_label, row.predicted, row.score, row.cell
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_decision_log(path: &Path) -> Result<DecisionLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = std::io::BufReader::new(file).lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty decision log"))?
        .1
        .map_err(|e| Error::io(path, e))?;
    if header.trim() != LOG_HEADER {
        return Err(Error::parse(path, 1, format!("expected {LOG_HEADER:?}, found {header:?}")));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if idx == 1 {
            if line.trim() != LOG_COLUMNS {
                return Err(Error::parse(path, lineno, "unexpected column header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        // `cell` may contain commas in principle; split only the first 7.
        let fields: Vec<&str> = line.splitn(8, ',').collect();
        if fields.len() != 8 {
            return Err(Error::parse(path, lineno, format!("expected 8 columns, found {}", fields.len())));
        }
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::parse(path, lineno, format!("bad {what}: {s:?}")))
        };
        let parse_u8 = |s: &str, what: &str| -> Result<u8> {
            match s {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(Error::parse(path, lineno, format!("bad {what}: {s:?}"))),
            }
        };
        rows.push(DecisionRow {
            experiment: fields[0].to_string(),
            subject: fields[1].to_string(),
            repeat: parse_usize(fields[2], "repeat")?,
            fold: parse_usize(fields[3], "fold")?,
            true_label: parse_u8(fields[4], "true_label")?,
            predicted: parse_u8(fields[5], "predicted")?,
            score: fields[6]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad score: {:?}", fields[6])))?,
            cell: fields[7].to_string(),
        });
    }
    Ok(DecisionLog { rows })
}

/// One fit call's subject scope, for the leakage audit. `repeat`/`fold`
/// absent means the fit happened outside any fold (only the deliberate
/// double-dipping debug mode does this).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub stage: String,
    pub repeat: Option<usize>,
    pub fold: Option<usize>,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub repeat: usize,
    pub fold: usize,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeakageTrace {
    pub fits: Vec<FitRecord>,
    pub tests: Vec<TestRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub stage: String,
    pub repeat: usize,
    pub fold: usize,
    pub subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub fits_checked: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verify that every fit saw only train-fold subjects: any test subject of a
/// `(repeat, fold)` appearing in a fit scoped to that fold — or in a global
/// (out-of-fold) fit — is a named violation.
pub fn leakage_audit(trace: &LeakageTrace) -> AuditReport {
    let mut test_sets: BTreeMap<(usize, usize), &TestRecord> = BTreeMap::new();
    for t in &trace.tests {
        test_sets.insert((t.repeat, t.fold), t);
    }
    let mut report = AuditReport { fits_checked: trace.fits.len(), violations: Vec::new() };
    for fit in &trace.fits {
        match (fit.repeat, fit.fold) {
            (Some(repeat), Some(fold)) => {
                if let Some(test) = test_sets.get(&(repeat, fold)) {
                    let leaked: Vec<String> = fit
                        .ids
                        .iter()
                        .filter(|id| test.ids.contains(id))
                        .cloned()
                        .collect();
                    if !leaked.is_empty() {
                        report.violations.push(Violation {
                            stage: fit.stage.clone(),
                            repeat,
                            fold,
                            subjects: leaked,
                        });
                    }
                }
            }
            _ => {
                // A fit outside fold scope leaks into every fold whose test
                // set it intersects.
                for (&(repeat, fold), test) in &test_sets {
                    let leaked: Vec<String> = fit
                        .ids
                        .iter()
                        .filter(|id| test.ids.contains(id))
                        .cloned()
                        .collect();
                    if !leaked.is_empty() {
                        report.violations.push(Violation {
                            stage: fit.stage.clone(),
                            repeat,
                            fold,
                            subjects: leaked,
                        });
                    }
                }
            }
        }
    }
    report
}

/// Winning cell and artifacts of one outer `(repeat, fold)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub repeat: usize,
    pub fold: usize,
    pub cell: String,
    /// Inner-CV balanced accuracy of the winning cell.
    pub inner_score: f64,
    /// Names of features the winning cell selected (empty when selection is
    /// `none`).
    pub selected_features: Vec<String>,
    /// Classifier importances aligned with `selected_features` when both are
    /// available.
    pub importances: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub experiment: String,
    pub outcomes: Vec<FoldOutcome>,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub log: DecisionLog,
    pub report: ModelReport,
    pub trace: LeakageTrace,
}

enum Reducer {
    None,
    Pca(PcaModel),
    Lle(LleModel),
}

struct FittedPipeline {
    whitener: Whitener,
    selected: Option<Vec<usize>>,
    reducer: Reducer,
    classifier: FittedClassifier,
}

impl FittedPipeline {
    fn transform(&self, rows: &[&[f64]]) -> Vec<Vec<f64>> {
        let whitened = self.whitener.apply(rows);
        let refs: Vec<&[f64]> = whitened.iter().map(|r| r.as_slice()).collect();
        let selected = match &self.selected {
            Some(indices) => project(&refs, indices),
            None => whitened,
        };
        let refs: Vec<&[f64]> = selected.iter().map(|r| r.as_slice()).collect();
        match &self.reducer {
            Reducer::None => selected,
            Reducer::Pca(model) => pca_transform(model, &refs),
            Reducer::Lle(model) => lle_transform(model, &refs),
        }
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        let transformed = self.transform(&[row]);
        self.classifier.decision_score(&transformed[0])
    }
}

/// Whitener and per-selection-cell indices fitted on the full dataset before
/// cross-validation. Debug-only negative control for the leakage audit.
struct GlobalPrefit {
    whitener: Whitener,
    /// Keyed by the `describe()` of the selection choice.
    selected: BTreeMap<String, Option<Vec<usize>>>,
}

struct FitContext<'a> {
    subset: &'a TaskSubset,
    trace: &'a Mutex<LeakageTrace>,
    seed: u64,
    prefit: Option<&'a GlobalPrefit>,
}

impl FitContext<'_> {
    fn record(&self, stage: &str, repeat: Option<usize>, fold: Option<usize>, indices: &[usize]) {
        let ids = indices.iter().map(|&i| self.subset.ids[i].clone()).collect();
        self.trace.lock().unwrap().fits.push(FitRecord {
            stage: stage.into(),
            repeat,
            fold,
            ids,
        });
    }
}

fn fit_selection(
    choice: SelectionChoice,
    rows: &[&[f64]],
    labels: &[u8],
    seed: u64,
) -> Result<Option<Vec<usize>>> {
    let p = rows[0].len();
    Ok(match choice {
        SelectionChoice::None => None,
        SelectionChoice::Anova { k } => Some(select_k_best(&anova_f(rows, labels)?.scores, k.min(p))?),
        SelectionChoice::Chi2 { k } => {
            Some(select_k_best(&chi2_scores(rows, labels, true)?.scores, k.min(p))?)
        }
        SelectionChoice::Model { family, k } => {
            Some(model_based_select(rows, labels, family, k.min(p), seed)?)
        }
    })
}

/// Fit the whole stage chain (whiten -> select -> reduce -> classify) on the
/// given training indices. Reduction dimensions are clamped to what the
/// training set admits.
fn fit_pipeline(
    cell: &PipelineCell,
    ctx: &FitContext,
    train: &[usize],
    repeat: Option<usize>,
    fold: Option<usize>,
    cell_seed: u64,
) -> Result<FittedPipeline> {
    let matrix = &ctx.subset.matrix;
    let rows: Vec<&[f64]> = train.iter().map(|&i| matrix.row(i)).collect();
    let labels: Vec<u8> = train.iter().map(|&i| ctx.subset.labels[i]).collect();

    let whitener = match ctx.prefit {
        Some(prefit) => prefit.whitener.clone(),
        None => {
            ctx.record("whiten", repeat, fold, train);
            Whitener::fit(&rows)?
        }
    };
    let whitened = whitener.apply(&rows);
    let refs: Vec<&[f64]> = whitened.iter().map(|r| r.as_slice()).collect();

    let selected = match ctx.prefit {
        Some(prefit) => prefit
            .selected
            .get(&cell.selection.describe())
            .cloned()
            .expect("prefit covers every selection choice"),
        None => {
            if cell.selection != SelectionChoice::None {
                ctx.record("select", repeat, fold, train);
            }
            fit_selection(cell.selection, &refs, &labels, derive_seed(cell_seed, &[1]))?
        }
    };
    let reduced_input = match &selected {
        Some(indices) => project(&refs, indices),
        None => whitened.clone(),
    };
    let refs: Vec<&[f64]> = reduced_input.iter().map(|r| r.as_slice()).collect();

    let n = refs.len();
    let p = refs[0].len();
    let reducer = match cell.reduction {
        ReductionChoice::None => Reducer::None,
        ReductionChoice::Pca { components } => {
            ctx.record("reduce", repeat, fold, train);
            Reducer::Pca(pca_fit(&refs, components.min(n.min(p)))?)
        }
        ReductionChoice::Lle { components, neighbors } => {
            ctx.record("reduce", repeat, fold, train);
            let k = neighbors.min(n.saturating_sub(2)).max(1);
            let m = components.min(k.saturating_sub(1)).max(1);
            Reducer::Lle(lle_embed(&refs, k, m, LLE_DEFAULT_REGULARIZER)?)
        }
    };
    let classifier_input = match &reducer {
        Reducer::None => reduced_input,
        Reducer::Pca(model) => pca_transform(model, &refs),
        Reducer::Lle(model) => lle_transform(model, &refs),
    };
    let refs: Vec<&[f64]> = classifier_input.iter().map(|r| r.as_slice()).collect();

    ctx.record("classify", repeat, fold, train);
    let classifier = fit(&cell.classifier, &refs, &labels, derive_seed(cell_seed, &[2]))?;

    Ok(FittedPipeline { whitener, selected, reducer, classifier })
}

fn balanced_accuracy(truths: &[u8], predictions: &[u8]) -> f64 {
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for (&t, &p) in truths.iter().zip(predictions) {
        total[t as usize] += 1;
        if t == p {
            correct[t as usize] += 1;
        }
    }
    let mut sum = 0.0;
    let mut classes = 0.0;
    for c in 0..2 {
        if total[c] > 0 {
            sum += correct[c] as f64 / total[c] as f64;
            classes += 1.0;
        }
    }
    if classes > 0.0 {
        sum / classes
    } else {
        0.0
    }
}

/// Inner-CV balanced accuracy of one cell on the outer-train split; `None`
/// when the cell is infeasible on this data (e.g. LLE on too few samples).
fn inner_score(
    cell: &PipelineCell,
    ctx: &FitContext,
    outer_train: &[usize],
    repeat: usize,
    fold: usize,
    cell_idx: usize,
    inner_folds: usize,
) -> Option<f64> {
    let labels: Vec<u8> = outer_train.iter().map(|&i| ctx.subset.labels[i]).collect();
    let folds = inner_folds
        .min(labels.iter().filter(|&&l| l == 0).count())
        .min(labels.iter().filter(|&&l| l == 1).count());
    if folds < 2 {
        return None;
    }
    let inner_seed = derive_seed(ctx.seed, &[TAG_INNER_FOLDS, repeat as u64, fold as u64]);
    let plan = make_folds(&labels, CvScheme::Stratified, folds, 1, inner_seed).ok()?;

    let mut truths = Vec::new();
    let mut predictions = Vec::new();
    for inner_fold in 0..folds {
        let train: Vec<usize> = plan.train_indices(0, inner_fold).iter().map(|&i| outer_train[i]).collect();
        let test: Vec<usize> = plan.test_indices(0, inner_fold).iter().map(|&i| outer_train[i]).collect();
        let cell_seed = derive_seed(ctx.seed, &[
            TAG_CELL_SEED,
            repeat as u64,
            fold as u64,
            cell_idx as u64,
            inner_fold as u64,
        ]);
        let pipeline = fit_pipeline(cell, ctx, &train, Some(repeat), Some(fold), cell_seed).ok()?;
        for &i in &test {
            let score = pipeline.score(ctx.subset.matrix.row(i)).ok()?;
            truths.push(ctx.subset.labels[i]);
            predictions.push(u8::from(score >= 0.5));
        }
    }
    Some(balanced_accuracy(&truths, &predictions))
}

fn run_unit(
    spec: &ExperimentSpec,
    cells: &[PipelineCell],
    ctx: &FitContext,
    plan: &FoldPlan,
    repeat: usize,
    fold: usize,
) -> Result<(Vec<DecisionRow>, FoldOutcome)> {
    let outer_train = plan.train_indices(repeat, fold);
    let outer_test = plan.test_indices(repeat, fold);

    // Inner grid search; tie on score -> smaller selection k, then smaller
    // reduction dimension, then family order, then cell index.
    let mut best: Option<(f64, usize)> = None;
    for (cell_idx, cell) in cells.iter().enumerate() {
        let score = if cells.len() == 1 {
            // A single-cell grid needs no inner search.
            1.0
        } else {
            match inner_score(cell, ctx, &outer_train, repeat, fold, cell_idx, spec.inner_folds) {
                Some(s) => s,
                None => continue,
            }
        };
        let better = match best {
            None => true,
            Some((s, prev_idx)) => {
                score > s + 1e-12
                    || ((score - s).abs() <= 1e-12
                        && cell.tie_key() < cells[prev_idx].tie_key())
            }
        };
        if better {
            best = Some((score, cell_idx));
        }
    }
    let (inner, winner_idx) = best.ok_or_else(|| {
        Error::InvalidData("no grid cell is feasible on this training split".into())
    })?;
    let winner = &cells[winner_idx];

    let cell_seed = derive_seed(ctx.seed, &[TAG_CELL_SEED, repeat as u64, fold as u64, winner_idx as u64, u64::MAX]);
    let pipeline = fit_pipeline(winner, ctx, &outer_train, Some(repeat), Some(fold), cell_seed)?;

    let mut rows = Vec::with_capacity(outer_test.len());
    for &i in &outer_test {
        let score = pipeline.score(ctx.subset.matrix.row(i))?;
        let transformed = pipeline.transform(&[ctx.subset.matrix.row(i)]);
        let predicted = pipeline.classifier.predict(&transformed[0])?;
        rows.push(DecisionRow {
            experiment: spec.id.clone(),
            subject: ctx.subset.ids[i].clone(),
            repeat,
            fold,
            true_label: ctx.subset.labels[i],
            predicted,
            score,
            cell: winner.describe(),
        });
    }

    let selected_features: Vec<String> = pipeline
        .selected
        .as_ref()
        .map(|indices| {
            indices
                .iter()
                .map(|&j| ctx.subset.matrix.feature_names[j].clone())
                .collect()
        })
        .unwrap_or_default();
    let importances = if pipeline.selected.is_some() && matches!(pipeline.reducer, Reducer::None) {
        pipeline.classifier.feature_importance()
    } else {
        None
    };

    Ok((
        rows,
        FoldOutcome {
            repeat,
            fold,
            cell: winner.describe(),
            inner_score: inner,
            selected_features,
            importances,
        },
    ))
}

/// Execute the full experiment: outer folds, inner grid search, decision
/// logging and leakage tracing.
pub fn run_experiment(spec: &ExperimentSpec, cohort: &Cohort) -> Result<RunOutcome> {
    spec.validate()?;
    let subset = cohort.select_task_subset(&spec.task, &spec.block)?;
    run_experiment_on_subset(spec, &subset)
}

/// Like [`run_experiment`] but on an already-materialized task subset.
pub fn run_experiment_on_subset(spec: &ExperimentSpec, subset: &TaskSubset) -> Result<RunOutcome> {
    let cells = grid_cells(spec);
    if cells.is_empty() {
        return Err(Error::InvalidConfig("empty pipeline grid".into()));
    }
    let plan = make_folds(&subset.labels, spec.scheme, spec.folds, spec.repeats, spec.seed)?;

    let trace = Mutex::new(LeakageTrace::default());
    let mut ctx = FitContext { subset, trace: &trace, seed: spec.seed, prefit: None };

    // Deliberate negative control: fit whitener and selectors on everything,
    // outside any fold. The leakage audit flags every stage fitted this way.
    let prefit;
    if spec.double_dip {
        let all: Vec<usize> = (0..subset.ids.len()).collect();
        let rows: Vec<&[f64]> = all.iter().map(|&i| subset.matrix.row(i)).collect();
        ctx.record("whiten", None, None, &all);
        let whitener = Whitener::fit(&rows)?;
        let whitened = whitener.apply(&rows);
        let refs: Vec<&[f64]> = whitened.iter().map(|r| r.as_slice()).collect();
        let mut selected = BTreeMap::new();
        for choice in &spec.selections {
            if *choice != SelectionChoice::None {
                ctx.record("select", None, None, &all);
            }
            selected.insert(
                choice.describe(),
                fit_selection(*choice, &refs, &subset.labels, derive_seed(spec.seed, &[3]))?,
            );
        }
        prefit = GlobalPrefit { whitener, selected };
        ctx.prefit = Some(&prefit);
    }

    let units: Vec<(usize, usize)> = (0..plan.repeats())
        .flat_map(|r| (0..plan.n_folds).map(move |f| (r, f)))
        .collect();

    for &(repeat, fold) in &units {
        let ids = plan
            .test_indices(repeat, fold)
            .iter()
            .map(|&i| subset.ids[i].clone())
            .collect();
        trace.lock().unwrap().tests.push(TestRecord { repeat, fold, ids });
    }

    let ctx_ref = &ctx;
    let results: Result<Vec<(Vec<DecisionRow>, FoldOutcome)>> = units
        .par_iter()
        .map(|&(repeat, fold)| run_unit(spec, &cells, ctx_ref, &plan, repeat, fold))
        .collect();
    let results = results?;

    let mut log = DecisionLog::default();
    let mut outcomes = Vec::with_capacity(results.len());
    for (rows, outcome) in results {
        log.rows.extend(rows);
        outcomes.push(outcome);
    }
    log.sort();

    let mut tally = [[0usize; 2]; 2]; // [true][predicted]
    for row in &log.rows {
        tally[row.true_label as usize][row.predicted as usize] += 1;
    }
    let positives = (tally[1][0] + tally[1][1]) as f64;
    let negatives = (tally[0][0] + tally[0][1]) as f64;
    let report = ModelReport {
        experiment: spec.id.clone(),
        outcomes,
        accuracy: (tally[0][0] + tally[1][1]) as f64 / log.rows.len() as f64,
        sensitivity: tally[1][1] as f64 / positives,
        specificity: tally[0][0] as f64 / negatives,
    };

    let mut trace = trace.into_inner().unwrap();
    trace.fits.sort_by(|a, b| (&a.repeat, &a.fold, &a.stage).cmp(&(&b.repeat, &b.fold, &b.stage)));
    trace.tests.sort_by_key(|t| (t.repeat, t.fold));

    Ok(RunOutcome { log, report, trace })
}

pub fn write_trace(path: &Path, trace: &LeakageTrace) -> Result<()> {
    let json = serde_json::to_string_pretty(trace)
        .map_err(|e| Error::Invariant(format!("trace serialization: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_trace(path: &Path) -> Result<LeakageTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, 0, format!("trace: {e}")))
}
