//! Monte Carlo density of the scheme by KDE, against its deterministic transition-kernel density.

use stablelab::density_mc::{heat_kernel_ratio, kde_estimate, smooth_like_kde, Bandwidth, Lattice};
use stablelab::drift::{DriftSpec, Exponent, Variant};
use stablelab::duhamel::solve_scheme_density;
use stablelab::euler::{simulate_marginal, SchemeConfig};
use stablelab::stable_kernel::StableParams;
use stablelab::stable_sampler::SamplerSpec;

fn main() -> stablelab::Result<()> {
    let drift = DriftSpec::radial(1, 1.0, 0.2, 0.0, 1.0, Exponent::Finite(4.0), Exponent::Infinite)?;
    let sampler = SamplerSpec::new(StableParams::for_sde(1.5, 1)?, 11)?;
    let config = SchemeConfig::new(1.0, 32, Variant::Standard, vec![0.0], sampler)?;
    let lattice = Lattice::symmetric(0.0, 16.0, 0.05)?;

    let sample = simulate_marginal(&config, &drift, 1.0, 100_000)?;
    let kde = kde_estimate(&sample, &lattice, Bandwidth::Rule { step: config.h(), alpha: 1.5 })?;
    let exact = solve_scheme_density(&config, &drift, &lattice)?;
    let smoothed = smooth_like_kde(exact.last(), kde.bandwidth.unwrap_or(0.0))?;
    let gap = kde.values.iter().zip(&smoothed.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    println!("KDE mass {:.5}, bandwidth {:.4}", kde.mass, kde.bandwidth.unwrap_or(f64::NAN));
    println!("deterministic mass {:.6} + tail {:.2e}", exact.last().mass, exact.last().tail_mass.unwrap_or(0.0));
    println!("sup |KDE - smoothed deterministic| = {gap:.2e}");
    let ratio = heat_kernel_ratio(exact.last(), 1.5, &[0.0])?;
    println!("sup density / p_alpha(1, y) = {:.4} at y = {:.2}", ratio.value, ratio.at[0]);
    Ok(())
}
