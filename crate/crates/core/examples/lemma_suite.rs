//! Empirical constants of the heat-kernel estimates: `cargo run --release --example lemma_suite -- 1.5 holder-space cutoff`.

use stablelab::lemma_checks::{run_suite, write_reports, Suite};

fn main() -> stablelab::Result<()> {
    let mut args = std::env::args().skip(1);
    let alpha: f64 = args.next().map(|a| a.parse().expect("alpha")).unwrap_or(1.5);
    let mut suites: Vec<Suite> = args.map(|s| s.parse()).collect::<stablelab::Result<_>>()?;
    if suites.is_empty() {
        suites = vec![Suite::Derivatives, Suite::HolderSpace, Suite::HolderTime, Suite::Moments, Suite::Cutoff];
    }
    let out = std::env::temp_dir().join("stablelab_lemmas");
    for suite in suites {
        let reports = run_suite(alpha, suite)?;
        for r in &reports {
            println!("{}", r.summary());
        }
        write_reports(&reports, &out)?;
    }
    println!("reports in {}", out.display());
    Ok(())
}
