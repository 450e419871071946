//! Densities of the symmetric alpha-stable semigroup: closed forms, two-sided bounds and the
//! semigroup identity, evaluated with the oscillatory quadrature and the cached table.

use stablelab::kernel_table::KernelTable;
use stablelab::stable_kernel::{KernelQuery, StableKernel, StableParams};

fn main() -> stablelab::Result<()> {
    let cauchy = StableKernel::new(StableParams::new(1.0, 1)?);
    let p = cauchy.density(&KernelQuery::scalar(1.0, 2.0))?;
    println!("alpha = 1: p(1, 2) = {p:.15} (closed form {:.15})", 1.0 / (5.0 * std::f64::consts::PI));

    for alpha in [1.2, 1.5, 1.8] {
        let ker = StableKernel::new(StableParams::new(alpha, 1)?);
        let table = KernelTable::get(alpha)?;
        let grid: Vec<KernelQuery> = [0.1, 1.0, 10.0]
            .iter()
            .flat_map(|&t| (0..=40).map(move |j| KernelQuery::scalar(t, 0.5 * j as f64)))
            .collect();
        let bounds = ker.aronson_ratio(&grid)?;
        let residual = ker.semigroup_residual(0.4, 0.6, 0.0, &[0.0, 1.0, 5.0])?;
        println!(
            "alpha = {alpha}: p(1, 0) = {:.12}, cdf(1, 1) = {:.12}, density / proxy in [{:.4}, {:.4}], semigroup residual {residual:.1e}",
            table.pdf(1.0, 0.0),
            table.cdf(1.0, 1.0),
            bounds.min,
            bounds.max
        );
    }

    let plane = StableKernel::new(StableParams::new(1.5, 2)?);
    let q = KernelQuery::new(1.0, vec![0.5, -0.25]);
    println!("d = 2, alpha = 1.5: p(1, (0.5, -0.25)) = {:.12}", plane.density(&q)?);
    Ok(())
}
