//! Picard iteration for the density of the limit SDE, written per time slice.

use stablelab::density_mc::heat_kernel_ratio;
use stablelab::drift::{DriftSpec, Exponent};
use stablelab::duhamel::{solve_diffusion_duhamel, SpaceTimeGrid};

fn main() -> stablelab::Result<()> {
    let grid = SpaceTimeGrid::new(0.0, 16.0, 0.05, 1.0, 64)?;
    let drift = DriftSpec::radial(1, 1.0, 0.3, 0.0, 1.0, Exponent::Finite(3.0), Exponent::Infinite)?;
    let solution = solve_diffusion_duhamel(1.5, &drift, &grid, 60, 1e-9)?;
    println!("{} Picard iterations, last residual {:.2e}", solution.iterations, solution.residual);
    for slice in solution.slices.iter().step_by(16) {
        println!("t = {:.4}: mass {:.6} + tail {:.2e}", slice.time, slice.mass, slice.tail_mass.unwrap_or(0.0));
    }
    let ratio = heat_kernel_ratio(solution.last(), 1.5, &[0.0])?;
    println!("sup Gamma(1, y) / p_alpha(1, y) = {:.4}", ratio.value);

    match DriftSpec::radial(1, 1.0, 0.3, 0.0, 1.0, Exponent::Finite(1.0), Exponent::Infinite)
        .and_then(|b| solve_diffusion_duhamel(1.5, &b, &grid, 60, 1e-9))
    {
        Err(e) => println!("p = 1 is rejected: {e}"),
        Ok(_) => println!("p = 1 unexpectedly accepted"),
    }

    let out = std::env::temp_dir().join("stablelab_duhamel");
    solution.write(&out)?;
    println!("slices in {}", out.display());
    Ok(())
}
