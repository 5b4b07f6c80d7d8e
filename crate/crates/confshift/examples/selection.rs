//! Run the same p-values through BH and through the weighted conformal
//! selection fixed point, with each pruning flavor.
//!
//!     cargo run --example selection

use confshift::conformal::{PValueMethod, PValueVector};
use confshift::multiple_testing::{benjamini_hochberg, wcs_decide, PruneStrategy};

fn main() -> confshift::Result<()> {
    let p = PValueVector {
        values: vec![0.004, 0.19, 0.021, 0.73, 0.009, 0.055, 0.41, 0.032],
        method: PValueMethod::Discrete,
        seed: None,
    };
    let alpha = 0.2;

    let bh = benjamini_hochberg(&p, alpha)?;
    println!(
        "bh:      rejected {:?} at threshold {:.4}",
        bh.rejected, bh.threshold
    );

    for (strategy, seed) in [
        (PruneStrategy::Deterministic, None),
        (PruneStrategy::Homogeneous, Some(5)),
        (PruneStrategy::Heterogeneous, Some(5)),
    ] {
        let report = wcs_decide(&p, alpha, strategy, seed)?;
        println!(
            "wcs/{}: rejected {:?} at threshold {:.4} (approx fdr control: {})",
            strategy, report.rejected, report.threshold, report.wcs_approx
        );
    }

    // With exchangeable-style p-values the fixed point lands on the same
    // set BH picks; they diverge once weights make the floor bite.
    Ok(())
}
