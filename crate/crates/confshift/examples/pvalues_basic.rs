//! Turn raw anomaly scores into conformal p-values, no shift involved.
//!
//!     cargo run --example pvalues_basic

use confshift::conformal::{discrete_pvalues, pvalue_floor, randomized_pvalues};

fn main() -> confshift::Result<()> {
    // Calibration scores from some detector; higher means more anomalous.
    let calib = vec![0.3, 0.9, 1.4, 0.2, 0.7, 1.1, 0.5, 0.8, 1.9, 0.4];
    let unit = vec![1.0; calib.len()];

    let test = [0.6, 1.5, 3.2];
    let test_w = vec![1.0; test.len()];

    let det = discrete_pvalues(&calib, &unit, &test, &test_w)?;
    let rnd = randomized_pvalues(&calib, &unit, &test, &test_w, 7)?;

    let floor = pvalue_floor(&unit, 1.0)?;
    println!("floor for a unit-weight test point: {floor:.4}");
    println!("{:>8} {:>10} {:>12}", "score", "discrete", "randomized");
    for i in 0..test.len() {
        println!(
            "{:>8.2} {:>10.4} {:>12.4}",
            test[i], det.values[i], rnd.values[i]
        );
    }

    // The discrete value never drops below the floor, however extreme the
    // score. The randomized variant can, but only through injected noise.
    assert!(det.values.iter().all(|p| *p >= floor));
    Ok(())
}
