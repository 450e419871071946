//! Euler-Maruyama paths for a singular radial drift, in both cutoff variants.

use stablelab::drift::{DriftSpec, Exponent, Variant};
use stablelab::euler::{simulate_marginal, simulate_paths, SchemeConfig};
use stablelab::stable_kernel::StableParams;
use stablelab::stable_sampler::SamplerSpec;

fn main() -> stablelab::Result<()> {
    let drift = DriftSpec::radial(1, 1.0, 0.2, 0.0, 1.0, Exponent::Finite(4.0), Exponent::Infinite)?;
    println!("gap gamma = {}", drift.gap(1.5)?.gamma);
    let sampler = SamplerSpec::new(StableParams::for_sde(1.5, 1)?, 3)?;
    let out = std::env::temp_dir().join("stablelab_paths");
    for variant in [Variant::Standard, Variant::Bar] {
        let config = SchemeConfig::new(1.0, 16, variant, vec![0.0], sampler)?;
        let paths = simulate_paths(&config, &drift, 4)?;
        println!("{variant}: path 0 = {:.4?}", paths.column(16).first());
        paths.write_csv(&out.join(format!("{variant}.csv")))?;
        let marginal = simulate_marginal(&config, &drift, 1.0, 50_000)?;
        let xs = marginal.column(0);
        let inside = xs.iter().filter(|x| x.abs() <= 1.0).count() as f64 / xs.len() as f64;
        println!("{variant}: P(|X_1| <= 1) ~ {inside:.4} from {} paths", xs.len());
    }
    println!("paths in {}", out.display());
    Ok(())
}
