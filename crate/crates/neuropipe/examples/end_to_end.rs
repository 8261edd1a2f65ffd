//! The whole pipeline in one pass: synthesize a cohort with connectivity,
//! derive graph features, run nested CV on both blocks, build the
//! per-subject quality table across the two experiments, and render report
//! artifacts into a directory.
//!
//! Run with: `cargo run --release --example end_to_end -- [out_dir]`

use std::path::Path;

use neuropipe::classify::{ClassifierFamily, ClassifierSpec};
use neuropipe::cohort::{BlockKind, FeatureMatrix, TaskDefinition};
use neuropipe::cv::run_experiment;
use neuropipe::expspec::{ExperimentSpec, SelectionChoice};
use neuropipe::graph::{binarize, graph_feature_names, graph_feature_vector, BinarizeRule};
use neuropipe::pcq::{build_pcq, majority_ensemble, rate};
use neuropipe::report::render;
use neuropipe::synth::{generate, ConnectivitySpec, SynthSpec};

fn main() -> neuropipe::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example-run".into());
    let out = Path::new(&out);

    let (mut cohort, _) = generate(&SynthSpec {
        n_per_class: 25,
        features: 150,
        informative: 10,
        delta: 1.5,
        seed: 5,
        connectivity: Some(ConnectivitySpec::default()),
    })?;

    // Graph feature block from the connectivity matrices.
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut names = Vec::new();
    for (id, matrix) in &cohort.connectivity {
        let graph = binarize(matrix, BinarizeRule::Proportional(0.3))?;
        names = graph_feature_names(&matrix.roi_names);
        values.extend(graph_feature_vector(&graph)?);
        ids.push(id.clone());
    }
    let graph_block = FeatureMatrix::new(ids, names, values, BlockKind::Graph)?;
    cohort.blocks.insert("graph".into(), graph_block);

    let task = TaskDefinition::new("PvsH", ["P"], ["H"])?;
    let mut logs = Vec::new();
    let mut last = None;
    for block in ["tabular", "graph"] {
        let mut spec = ExperimentSpec::minimal(
            task.clone(),
            block,
            ClassifierSpec::default_for(ClassifierFamily::Rfc),
            29,
        );
        spec.id = format!("PvsH-{block}");
        spec.repeats = 5;
        spec.selections = vec![SelectionChoice::Anova { k: 30 }];
        let outcome = run_experiment(&spec, &cohort)?;
        println!(
            "{:<12} accuracy {:.3}, sensitivity {:.3}, specificity {:.3}",
            spec.id, outcome.report.accuracy, outcome.report.sensitivity, outcome.report.specificity
        );
        logs.push(outcome.log.clone());
        last = Some((spec, outcome));
    }

    // Pool both log sets into the per-subject quality table.
    let table = build_pcq(&logs, &cohort)?;
    for experiment in &table.experiments {
        println!(
            "{experiment:<12} pooled TP rate {:.3}, pooled FP rate {:.3}",
            rate(&table, experiment, 1, 1)?,
            rate(&table, experiment, 0, 1)?
        );
    }

    // Unweighted majority vote over the two experiments.
    let ensemble = majority_ensemble(&logs, &[1.0, 1.0])?;
    let correct = ensemble.rows.iter().filter(|r| r.predicted == r.true_label).count();
    println!("ensemble      accuracy {:.3}", correct as f64 / ensemble.rows.len() as f64);

    // Report artifacts (operating table, ROC curve, importances) for the
    // last experiment.
    let (spec, outcome) = last.unwrap();
    render(out, &outcome.log, &outcome.report, &spec.fpr_targets)?;
    println!("report artifacts written to {}", out.display());
    Ok(())
}
