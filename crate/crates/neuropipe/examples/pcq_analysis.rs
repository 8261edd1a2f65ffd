//! Per-subject classification quality: build the count table from decision
//! logs of two experiments, pool rates, test frequency homogeneity, and
//! cluster subjects by how often the models call them positive.
//!
//! Run with: `cargo run --release --example pcq_analysis`

use neuropipe::classify::{ClassifierFamily, ClassifierSpec};
use neuropipe::cohort::TaskDefinition;
use neuropipe::cv::run_experiment;
use neuropipe::expspec::ExperimentSpec;
use neuropipe::pcq::{build_pcq, cluster_subjects, homogeneity_test, rate, subject_frequencies, HomogeneityVerdict};
use neuropipe::synth::{generate_tabular, SynthSpec};

fn main() -> neuropipe::Result<()> {
    let (cohort, _) = generate_tabular(&SynthSpec {
        n_per_class: 20,
        features: 60,
        informative: 6,
        delta: 1.2,
        seed: 9,
        connectivity: None,
    })?;
    let task = TaskDefinition::new("PvsH", ["P"], ["H"])?;

    // Two experiments on the same cohort, differing in classifier family.
    let mut logs = Vec::new();
    for family in [ClassifierFamily::Lr, ClassifierFamily::Knn] {
        let mut spec = ExperimentSpec::minimal(
            task.clone(),
            "tabular",
            ClassifierSpec::default_for(family),
            17,
        );
        spec.id = format!("PvsH-{}", family.name());
        spec.repeats = 10;
        logs.push(run_experiment(&spec, &cohort)?.log);
    }

    let table = build_pcq(&logs, &cohort)?;
    for experiment in &table.experiments {
        println!("{experiment}:");
        println!("  TP rate (positives called positive): {:.3}", rate(&table, experiment, 1, 1)?);
        println!("  FP rate (negatives called positive): {:.3}", rate(&table, experiment, 0, 1)?);

        let freqs = subject_frequencies(&table, experiment)?;
        let test = homogeneity_test(&freqs, 0.05)?;
        let verdict = match test.verdict {
            HomogeneityVerdict::Homogeneous => "homogeneous",
            HomogeneityVerdict::Heterogeneous => "heterogeneous",
        };
        println!(
            "  positive-subject frequencies: {verdict} (chi2 = {:.2}, p = {:.4})",
            test.statistic, test.p_value
        );

        let clustering = cluster_subjects(&freqs, 2)?;
        println!("  2-cluster centers: {:?}", clustering.centers.iter().map(|c| (c * 100.0).round() / 100.0).collect::<Vec<_>>());
        for cluster in 0..2 {
            let members: Vec<&str> = freqs
                .entries
                .iter()
                .zip(&clustering.assignment)
                .filter(|(_, &a)| a == cluster)
                .map(|(e, _)| e.0.as_str())
                .collect();
            println!("    cluster {cluster}: {} subjects", members.len());
        }
    }
    Ok(())
}
