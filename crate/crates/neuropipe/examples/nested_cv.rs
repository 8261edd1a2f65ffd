//! Nested cross-validation with an inner grid search over feature selection
//! and classifier family, plus the leakage audit over the recorded trace.
//!
//! Run with: `cargo run --release --example nested_cv`

use neuropipe::classify::{ClassifierFamily, ClassifierSpec};
use neuropipe::cohort::TaskDefinition;
use neuropipe::cv::{leakage_audit, run_experiment};
use neuropipe::expspec::{ExperimentSpec, SelectionChoice};
use neuropipe::synth::{generate_tabular, SynthSpec};

fn main() -> neuropipe::Result<()> {
    let (cohort, _) = generate_tabular(&SynthSpec {
        n_per_class: 25,
        features: 200,
        informative: 8,
        delta: 2.0,
        seed: 3,
        connectivity: None,
    })?;

    let task = TaskDefinition::new("PvsH", ["P"], ["H"])?;
    let mut spec = ExperimentSpec::minimal(task, "tabular", ClassifierSpec::default_for(ClassifierFamily::Lr), 3);
    spec.repeats = 5;
    spec.selections = vec![
        SelectionChoice::Anova { k: 8 },
        SelectionChoice::Anova { k: 32 },
    ];
    spec.classifiers = vec![
        ClassifierSpec::default_for(ClassifierFamily::Lr),
        ClassifierSpec::default_for(ClassifierFamily::Knn),
    ];

    let outcome = run_experiment(&spec, &cohort)?;

    println!("decisions logged: {}", outcome.log.rows.len());
    println!("accuracy:    {:.3}", outcome.report.accuracy);
    println!("sensitivity: {:.3}", outcome.report.sensitivity);
    println!("specificity: {:.3}", outcome.report.specificity);

    // Which grid cell did each outer fold pick?
    let mut wins = std::collections::BTreeMap::<&str, usize>::new();
    for fold in &outcome.report.outcomes {
        *wins.entry(fold.cell.as_str()).or_default() += 1;
    }
    println!("\nwinning cells across {} outer fits:", outcome.report.outcomes.len());
    for (cell, n) in wins {
        println!("  {n:>2}x {cell}");
    }

    let audit = leakage_audit(&outcome.trace);
    println!("\nleakage audit: {} fits checked, {} violations", audit.fits_checked, audit.violations.len());
    Ok(())
}
