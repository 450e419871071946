//! Counter-based stable increments: reproducible draws and a Kolmogorov-Smirnov check of their law.

use stablelab::stable_kernel::StableParams;
use stablelab::stable_sampler::{law_test, SamplerSpec};

fn main() -> stablelab::Result<()> {
    let spec = SamplerSpec::new(StableParams::new(1.5, 1)?, 42)?;
    let first = spec.sample_increments(0.1, 5, 0)?;
    let again = spec.sample_increments(0.1, 5, 0)?;
    assert_eq!(first, again);
    println!("five increments over dt = 0.1 (seed 42, step 0): {first:.5?}");

    for alpha in [1.2, 1.5, 1.8] {
        let t = law_test(alpha, 100_000, 7, 1.0)?;
        println!(
            "alpha = {alpha}: KS {:.4} (threshold {:.4}), additivity KS {:.4} (threshold {:.4}), pass {}",
            t.ks, t.threshold, t.additivity_ks, t.additivity_threshold, t.pass
        );
    }
    Ok(())
}
