//! Command-line entry point wiring the pipeline stages: `synth`,
//! `features graph`, `features topology`, `run`, `pcq`, `report`,
//! `conformal`, `audit`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
//! failure. The seed resolution order is `--seed`, then the spec file's own
//! seed, then the `NEUROPIPE_SEED` environment variable, then 0.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::classify::fit;
use crate::cohort::{BlockKind, Cohort, FeatureMatrix};
use crate::conformal::{calibrate, p_value, prediction_set};
use crate::cv::{leakage_audit, load_decision_log, load_trace, run_experiment, write_decision_log, write_trace};
use crate::dimred::Whitener;
use crate::error::{Error, Result};
use crate::expspec::load_experiment_spec;
use crate::graph::{binarize, graph_feature_names, graph_feature_vector, BinarizeRule};
use crate::ingest::{load_cohort_dir, save_cohort_dir, write_feature_table};
use crate::manifest::{hash_dir, hash_file, RunManifest};
use crate::pcq::{build_pcq, write_pcq};
use crate::report::render;
use crate::rng::derive_rng;
use crate::synth::{generate, load_synth_spec};
use crate::topology::{summarize, DirectedGraph, DEFAULT_MAX_DIM};

pub const SEED_ENV: &str = "NEUROPIPE_SEED";

#[derive(Debug, Parser)]
#[command(name = "neuropipe", version, about = "Subject-level diagnostic classification pipeline")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SeedArg {
    /// Root random seed; falls back to the spec file, then NEUROPIPE_SEED,
    /// then 0.
    #[arg(long)]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> u64 {
        self.seed
            .or_else(|| std::env::var(SEED_ENV).ok().and_then(|v| v.parse().ok()))
            .unwrap_or(0)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort directory from a generator spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Derive feature blocks from per-subject connectivity matrices.
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Run a full experiment: outer CV, inner grid search, decision log.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        /// Worker thread cap; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Build the Personal Classification Quality table from decision logs.
    Pcq {
        /// Directory containing *.csv decision logs.
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render operating tables, ROC plot and summaries from a decision log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Target FPR grid in percent.
        #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 15.0, 20.0, 30.0])]
        fpr: Vec<f64>,
    },
    /// Split conformal prediction: per-subject p-values and prediction sets
    /// from a deterministic train/calibration/test split.
    Conformal {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        significance: f64,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Check a leakage trace for test subjects seen during fits.
    Audit {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum FeaturesCommand {
    /// Six node metrics per ROI plus two global metrics per subject.
    Graph {
        #[arg(long)]
        cohort: PathBuf,
        /// Binarization rule: `abs:<threshold>` or `prop:<density>`.
        #[arg(long)]
        rule: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Directed flag complex summaries (simplex counts, Euler
    /// characteristic, Betti numbers) per subject.
    Topology {
        #[arg(long)]
        cohort: PathBuf,
        /// Absolute weight threshold for keeping directed edges.
        #[arg(long)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_DIM)]
        max_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_rule(text: &str) -> Result<BinarizeRule> {
    let (kind, value) = text
        .split_once(':')
        .ok_or_else(|| Error::InvalidConfig(format!("rule {text:?} is not `abs:<t>` or `prop:<d>`")))?;
    let value: f64 = value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("rule value {value:?} is not a number")))?;
    match kind {
        "abs" => Ok(BinarizeRule::Absolute(value)),
        "prop" => Ok(BinarizeRule::Proportional(value)),
        _ => Err(Error::InvalidConfig(format!("unknown rule kind {kind:?}; use abs or prop"))),
    }
}

fn cmd_synth(spec_path: &Path, out: &Path, seed: u64) -> Result<()> {
    let spec = load_synth_spec(spec_path, seed)?;
    let (cohort, planted) = generate(&spec)?;
    save_cohort_dir(out, &cohort)?;
    let mut outputs: Vec<String> = list_outputs(out)?;
    let planted_path = out.join("planted_features.txt");
    let mut text = String::new();
    for j in &planted {
        text.push_str(&format!("x{j:04}\n"));
    }
    std::fs::write(&planted_path, text).map_err(|e| Error::io(&planted_path, e))?;
    outputs.push("planted_features.txt".into());
    RunManifest::new(spec.seed, hash_file(spec_path)?, hash_dir(out)?, outputs).write(out)?;
    Ok(())
}

fn list_outputs(dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
        Ok(())
    }
    walk(dir, dir, &mut out)?;
    Ok(out)
}

fn cmd_features_graph(cohort_dir: &Path, rule: BinarizeRule, out: &Path) -> Result<()> {
    let cohort = load_cohort_dir(cohort_dir)?;
    if cohort.connectivity.is_empty() {
        return Err(Error::InvalidData(format!("no connectivity matrices in {cohort_dir:?}")));
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut names: Option<Vec<String>> = None;
    for (id, matrix) in &cohort.connectivity {
        if matrix.directed {
            return Err(Error::InvalidData(format!(
                "subject {id:?}: graph metrics need undirected connectivity"
            )));
        }
        let graph = binarize(matrix, rule)?;
        let vector = graph_feature_vector(&graph)?;
        let expected = graph_feature_names(&matrix.roi_names);
        match &names {
            None => names = Some(expected),
            Some(prev) if *prev != expected => {
                return Err(Error::InvalidData(format!("subject {id:?}: ROI set differs")));
            }
            _ => {}
        }
        ids.push(id.clone());
        values.extend(vector);
    }
    let matrix = FeatureMatrix::new(ids, names.unwrap(), values, BlockKind::Graph)?;
    write_feature_table(out, &matrix)
}

fn cmd_features_topology(cohort_dir: &Path, threshold: f64, max_dim: usize, out: &Path) -> Result<()> {
    let cohort = load_cohort_dir(cohort_dir)?;
    if cohort.connectivity.is_empty() {
        return Err(Error::InvalidData(format!("no connectivity matrices in {cohort_dir:?}")));
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut names = Vec::new();
    for k in 0..=max_dim {
        names.push(format!("simplex_count_{k}"));
    }
    names.push("euler_characteristic".to_string());
    for k in 0..=max_dim {
        names.push(format!("betti_{k}"));
    }
    for (id, matrix) in &cohort.connectivity {
        let graph = DirectedGraph::from_connectivity(matrix, threshold);
        let summary = summarize(&graph, max_dim)?;
        // The complex may stop below max_dim when no higher simplex exists;
        // pad with zeros for a fixed-width vector.
        for k in 0..=max_dim {
            values.push(*summary.counts.get(k).unwrap_or(&0) as f64);
        }
        values.push(summary.euler_characteristic as f64);
        for k in 0..=max_dim {
            values.push(*summary.betti.get(k).unwrap_or(&0) as f64);
        }
        ids.push(id.clone());
    }
    let matrix = FeatureMatrix::new(ids, names, values, BlockKind::Topology)?;
    write_feature_table(out, &matrix)
}

fn cmd_run(spec_path: &Path, cohort_dir: &Path, out: &Path, seed: u64) -> Result<()> {
    let spec = load_experiment_spec(spec_path, seed)?;
    let cohort = load_cohort_dir(cohort_dir)?;
    let outcome = run_experiment(&spec, &cohort)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_decision_log(&out.join("decisions.csv"), &outcome.log)?;
    write_trace(&out.join("trace.json"), &outcome.trace)?;
    let report_json = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| Error::Invariant(format!("report serialization: {e}")))?;
    let report_path = out.join("model_report.json");
    std::fs::write(&report_path, report_json).map_err(|e| Error::io(&report_path, e))?;
    render(out, &outcome.log, &outcome.report, &spec.fpr_targets)?;

    let audit = leakage_audit(&outcome.trace);
    if !audit.is_clean() {
        log::warn!("leakage audit found {} violation(s); see trace.json", audit.violations.len());
    }

    let outputs = list_outputs(out)?;
    RunManifest::new(spec.seed, hash_file(spec_path)?, hash_dir(cohort_dir)?, outputs).write(out)?;
    Ok(())
}

fn cmd_pcq(logs_dir: &Path, cohort_dir: &Path, out: &Path) -> Result<()> {
    let cohort = load_cohort_dir(cohort_dir)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(logs_dir)
        .map_err(|e| Error::io(logs_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidData(format!("no .csv decision logs in {logs_dir:?}")));
    }
    let logs = paths
        .iter()
        .map(|p| load_decision_log(p))
        .collect::<Result<Vec<_>>>()?;
    let table = build_pcq(&logs, &cohort)?;
    write_pcq(out, &table)
}

fn cmd_report(log_path: &Path, out: &Path, fpr_percent: &[f64]) -> Result<()> {
    let log = load_decision_log(log_path)?;
    let grid: Vec<f64> = fpr_percent.iter().map(|p| p / 100.0).collect();
    // No per-fold model data is available from a bare log; render with an
    // empty outcome list (the importance table will just be empty).
    let mut tally = [[0usize; 2]; 2];
    for row in &log.rows {
        tally[row.true_label as usize][row.predicted as usize] += 1;
    }
    let positives = (tally[1][0] + tally[1][1]).max(1) as f64;
    let negatives = (tally[0][0] + tally[0][1]).max(1) as f64;
    let report = crate::cv::ModelReport {
        experiment: log.rows.first().map(|r| r.experiment.clone()).unwrap_or_default(),
        outcomes: Vec::new(),
        accuracy: (tally[0][0] + tally[1][1]) as f64 / log.rows.len().max(1) as f64,
        sensitivity: tally[1][1] as f64 / positives,
        specificity: tally[0][0] as f64 / negatives,
    };
    render(out, &log, &report, &grid)?;
    Ok(())
}

/// Deterministic 50/25/25 train/calibration/test split by seeded shuffle of
/// the task subset, then conformal p-values for both labels per test
/// subject.
fn cmd_conformal(spec_path: &Path, cohort_dir: &Path, out: &Path, significance: f64, seed: u64) -> Result<()> {
    use rand::seq::SliceRandom;

    let spec = load_experiment_spec(spec_path, seed)?;
    let cohort = load_cohort_dir(cohort_dir)?;
    let subset = cohort.select_task_subset(&spec.task, &spec.block)?;
    let n = subset.ids.len();
    if n < 8 {
        return Err(Error::InvalidData(format!("conformal split needs >= 8 subjects, found {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derive_rng(spec.seed, &[0xC0]));
    let n_train = n / 2;
    let n_cal = n / 4;
    let (train, rest) = order.split_at(n_train);
    let (cal, test) = rest.split_at(n_cal);

    let train_rows: Vec<&[f64]> = train.iter().map(|&i| subset.matrix.row(i)).collect();
    let train_labels: Vec<u8> = train.iter().map(|&i| subset.labels[i]).collect();
    let whitener = Whitener::fit(&train_rows)?;
    let whitened = whitener.apply(&train_rows);
    let refs: Vec<&[f64]> = whitened.iter().map(|r| r.as_slice()).collect();
    let classifier = fit(&spec.classifiers[0], &refs, &train_labels, spec.seed)?;

    let cal_rows: Vec<Vec<f64>> = cal.iter().map(|&i| whitener.apply_row(subset.matrix.row(i))).collect();
    let cal_refs: Vec<&[f64]> = cal_rows.iter().map(|r| r.as_slice()).collect();
    let cal_labels: Vec<u8> = cal.iter().map(|&i| subset.labels[i]).collect();
    let calibration = calibrate(&classifier, &cal_refs, &cal_labels)?;

    let mut text = String::from("subject,true_label,p0,p1,prediction_set\n");
    let mut sorted_test: Vec<usize> = test.to_vec();
    sorted_test.sort_by(|&a, &b| subset.ids[a].cmp(&subset.ids[b]));
    for &i in &sorted_test {
        let row = whitener.apply_row(subset.matrix.row(i));
        let p0 = p_value(&calibration, &classifier, &row, 0)?;
        let p1 = p_value(&calibration, &classifier, &row, 1)?;
        let set = prediction_set(&calibration, &classifier, &row, significance)?;
        let set_text: Vec<String> = set.iter().map(|l| l.to_string()).collect();
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            subset.ids[i],
            subset.labels[i],
            p0,
            p1,
            set_text.join("|")
        ));
    }
    std::fs::write(out, text).map_err(|e| Error::io(out, e))
}

fn cmd_audit(trace_path: &Path) -> Result<()> {
    let trace = load_trace(trace_path)?;
    let report = leakage_audit(&trace);
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "fits checked: {}", report.fits_checked).ok();
    if report.is_clean() {
        writeln!(stdout, "leakage audit: clean").ok();
        Ok(())
    } else {
        for v in &report.violations {
            writeln!(
                stdout,
                "violation: stage {} (repeat {}, fold {}) saw test subject(s) {}",
                v.stage,
                v.repeat,
                v.fold,
                v.subjects.join(", ")
            )
            .ok();
        }
        Err(Error::InvalidData(format!(
            "leakage audit found {} violation(s)",
            report.violations.len()
        )))
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed.resolve()),
        Command::Features(FeaturesCommand::Graph { cohort, rule, out }) => {
            cmd_features_graph(&cohort, parse_rule(&rule)?, &out)
        }
        Command::Features(FeaturesCommand::Topology { cohort, threshold, max_dim, out }) => {
            cmd_features_topology(&cohort, threshold, max_dim, &out)
        }
        Command::Run { spec, cohort, out, seed, jobs } => {
            if let Some(jobs) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build_global()
                    .map_err(|e| Error::InvalidConfig(format!("--jobs: {e}")))?;
            }
            cmd_run(&spec, &cohort, &out, seed.resolve())
        }
        Command::Pcq { logs, cohort, out } => cmd_pcq(&logs, &cohort, &out),
        Command::Report { log, out, fpr } => cmd_report(&log, &out, &fpr),
        Command::Conformal { spec, cohort, out, significance, seed } => {
            cmd_conformal(&spec, &cohort, &out, significance, seed.resolve())
        }
        Command::Audit { trace } => cmd_audit(&trace),
    }
}

/// Parse `argv` and run; returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Cohort loading exposed for integration tests that drive the CLI paths
/// directly.
pub fn load_cohort(dir: &Path) -> Result<Cohort> {
    load_cohort_dir(dir)
}

/// Decision logs in a directory, sorted by path, as `(stem, log)` pairs.
pub fn load_logs_dir(dir: &Path) -> Result<BTreeMap<String, crate::cv::DecisionLog>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|ext| ext == "csv") {
            let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
            out.insert(stem, load_decision_log(&path)?);
        }
    }
    Ok(out)
}
