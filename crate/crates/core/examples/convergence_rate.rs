//! Weak rate of the cutoff Euler scheme on the singular radial drift b(x) = |x|^{-0.2} sgn(x) 1{|x| <= 1}.
//! With alpha = 1.5, p = 4, q = inf the gap is 0.25 and the predicted rate h^{1/6}.

use std::time::Instant;

use stablelab::convergence::{emit_report, rate_experiment, RateSettings, ReferenceMode};
use stablelab::drift::{DriftSpec, Exponent, Variant};

fn main() -> stablelab::Result<()> {
    let drift = DriftSpec::radial(1, 1.0, 0.2, 0.0, 1.0, Exponent::Finite(4.0), Exponent::Infinite)?;
    let out = std::env::temp_dir().join("stablelab_rate");
    for reference in [ReferenceMode::Duhamel, ReferenceMode::Richardson] {
        for variant in [Variant::Standard, Variant::Bar] {
            let start = Instant::now();
            let settings = RateSettings::new(1.5, drift.clone(), vec![8, 16, 32, 64], variant, reference);
            let report = rate_experiment(&settings)?;
            println!("{reference} / {variant}: rate {:.4}, floor {:.2e}", report.rate, report.noise_floor);
            for p in &report.ladder {
                println!("  n = {:3}  error = {:.4e}  at y = {:.2}", p.n, p.error.unwrap_or(f64::NAN), p.at.unwrap_or(f64::NAN));
            }
            println!(
                "  slope {:.4} (accept >= {:.4}), pass {}, {:.1?}",
                report.slope.unwrap_or(f64::NAN),
                report.lower,
                report.pass,
                start.elapsed()
            );
            emit_report(&report, &out.join(format!("{reference}_{variant}")))?;
        }
    }
    println!("reports in {}", out.display());
    Ok(())
}
