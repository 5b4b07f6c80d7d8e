//! Estimate importance weights between a calibration pool and a shifted
//! test pool, then compare against the analytic density ratio.
//!
//!     cargo run --example shift_weights
//!
//! Calibration points come from N(0,1), test points from N(delta,1), so
//! the true weight of a point z is exp(delta*z - delta^2/2).

use confshift::classify::ClassifierKind;
use confshift::scoring::FeatureMatrix;
use confshift::weights::{bagged_weights, effective_sample_size};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const DELTA: f64 = 1.0;

fn main() -> confshift::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 400;

    let calib: Vec<f64> = (0..n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let test: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e + DELTA
        })
        .collect();

    let calib_m = FeatureMatrix::from_flat(n, 1, calib.clone())?;
    let test_m = FeatureMatrix::from_flat(n, 1, test)?;

    let profile = bagged_weights(&calib_m, &test_m, 8, 0.05, ClassifierKind::Logistic, 3)?;
    let n_eff = effective_sample_size(&profile.calib_weights)?;

    println!("calibration points: {n}");
    println!("effective sample size after weighting: {n_eff:.1}");
    println!("winsorized clip interval: [{:.3}, {:.3}]", profile.clip_lo, profile.clip_hi);

    // Spot-check a few calibration points against the closed form. The
    // estimate is clipped, so agreement is loose in the tails by design.
    println!("{:>8} {:>10} {:>10}", "z", "true w", "estimated");
    for i in (0..n).step_by(n / 8) {
        let z = calib[i];
        let truth = (DELTA * z - DELTA * DELTA / 2.0).exp();
        println!("{:>8.3} {:>10.3} {:>10.3}", z, truth, profile.calib_weights[i]);
    }
    Ok(())
}
