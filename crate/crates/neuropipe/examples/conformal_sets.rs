//! Split conformal prediction: calibrate a classifier on held-out scores and
//! report per-subject p-values and prediction sets with finite-sample
//! coverage.
//!
//! Run with: `cargo run --release --example conformal_sets`

use neuropipe::classify::{fit, ClassifierFamily, ClassifierSpec};
use neuropipe::conformal::{calibrate, p_value, prediction_set};
use neuropipe::rng::derive_rng;
use rand::Rng;
use rand_distr::StandardNormal;

fn sample_row(rng: &mut impl Rng, label: u8) -> Vec<f64> {
    let shift = if label == 1 { 1.2 } else { 0.0 };
    (0..4).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect()
}

fn main() -> neuropipe::Result<()> {
    let mut rng = derive_rng(2024, &[1]);
    let make = |rng: &mut _, n: usize| -> (Vec<Vec<f64>>, Vec<u8>) {
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let rows = labels.iter().map(|&l| sample_row(rng, l)).collect();
        (rows, labels)
    };

    let (train_rows, train_labels) = make(&mut rng, 100);
    let (cal_rows, cal_labels) = make(&mut rng, 40);

    let refs: Vec<&[f64]> = train_rows.iter().map(|r| r.as_slice()).collect();
    let classifier = fit(&ClassifierSpec::default_for(ClassifierFamily::Lr), &refs, &train_labels, 0)?;
    let cal_refs: Vec<&[f64]> = cal_rows.iter().map(|r| r.as_slice()).collect();
    let calibration = calibrate(&classifier, &cal_refs, &cal_labels)?;
    println!("calibration size: {}", calibration.n_cal());

    let significance = 0.2;
    println!("significance:     {significance}\n");
    println!("{:<8} {:>6} {:>8} {:>8}  set", "subject", "truth", "p(y=0)", "p(y=1)");
    let mut covered = 0;
    let n_test = 12;
    for i in 0..n_test {
        let label = (i % 2) as u8;
        let row = sample_row(&mut rng, label);
        let p0 = p_value(&calibration, &classifier, &row, 0)?;
        let p1 = p_value(&calibration, &classifier, &row, 1)?;
        let set = prediction_set(&calibration, &classifier, &row, significance)?;
        if set.contains(&label) {
            covered += 1;
        }
        println!("t{i:<7} {label:>6} {p0:>8.3} {p1:>8.3}  {set:?}");
    }
    println!("\ncovered {covered}/{n_test} (expected >= {:.0}% in the long run)", (1.0 - significance) * 100.0);
    Ok(())
}
