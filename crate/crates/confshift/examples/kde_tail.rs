//! The continuous estimator keeps resolving the tail where the discrete
//! p-value has already hit its floor.
//!
//!     cargo run --example kde_tail

use confshift::conformal::{discrete_pvalue, pvalue_floor};
use confshift::kde::{fit_weighted_kde_auto, kde_pvalue};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> confshift::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scores: Vec<f64> = (0..120)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e.abs()
        })
        .collect();
    let weights = vec![1.0; scores.len()];

    let (kde, sel) = fit_weighted_kde_auto(&scores, &weights, None)?;
    println!(
        "bandwidth {:.4} picked from a {}-point grid",
        sel.chosen,
        sel.grid.len()
    );

    let floor = pvalue_floor(&weights, 1.0)?;
    let max = scores.iter().cloned().fold(f64::MIN, f64::max);
    println!("discrete floor: {floor:.4}, largest calibration score: {max:.3}");
    println!("{:>8} {:>12} {:>12}", "score", "discrete", "kde");

    for step in 0..6 {
        let s = max + step as f64 * 0.8;
        let d = discrete_pvalue(&scores, &weights, s, 1.0)?;
        let k = kde_pvalue(&kde, s);
        println!("{:>8.3} {:>12.5} {:>12.3e}", s, d, k);
    }

    // Past the largest calibration score the discrete value is pinned at
    // the floor while the kde value keeps shrinking with the Gaussian tail.
    let deep = kde_pvalue(&kde, max + 4.0);
    assert!(deep < floor);
    Ok(())
}
