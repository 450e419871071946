//! Acceptance criteria, run sequentially so that each runtime is measured alone.
//!
//! Prints one line per criterion and exits nonzero when any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use stablelab::cli::{self, Command, MANIFEST};
use stablelab::config::ExperimentConfig;
use stablelab::convergence::{rate_experiment, RateSettings, ReferenceMode};
use stablelab::density_mc::{kde_estimate, smooth_like_kde, Bandwidth, DensityGrid, Lattice};
use stablelab::drift::{DriftSpec, Exponent, Variant};
use stablelab::duhamel::{solve_diffusion_duhamel, solve_scheme_density, SpaceTimeGrid};
use stablelab::error::Error;
use stablelab::euler::{simulate_marginal, SchemeConfig};
use stablelab::kernel_table::KernelTable;
use stablelab::lemma_checks::{
    check_convo_bulk, check_cutoff_negligible, check_spatial_moments, run_suite, suite_drift, BulkCase, Suite, Sweep,
};
use stablelab::stable_kernel::{KernelQuery, StableKernel, StableParams};
use stablelab::stable_sampler::{law_test, SamplerSpec};

type Outcome = Result<(bool, String), Error>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const ALPHAS: [f64; 3] = [1.2, 1.5, 1.8];

fn kernel_oracles() -> Outcome {
    let mut worst: f64 = 0.0;
    let cauchy = StableKernel::new(StableParams::new(1.0, 1)?);
    let gauss = StableKernel::new(StableParams::new(2.0, 1)?);
    for t in [0.1, 1.0, 10.0] {
        for i in -80..=80 {
            let z = i as f64 * 0.25;
            let c = cauchy.density(&KernelQuery::scalar(t, z))?;
            worst = worst.max((c - t / (PI * (t * t + z * z))).abs());
            let g = gauss.density(&KernelQuery::scalar(t, z))?;
            worst = worst.max((g - (-z * z / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()).abs());
        }
    }
    Ok((worst < 1e-8, format!("max abs deviation {worst:.2e} (limit 1e-8)")))
}

fn sampler_law() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for alpha in ALPHAS {
        let start = Instant::now();
        let t = law_test(alpha, 100_000, 20_240_601, 1.0)?;
        let secs = start.elapsed().as_secs_f64();
        pass &= t.ks < 0.01 && secs < 30.0;
        parts.push(format!("alpha {alpha}: KS {:.4} in {secs:.1}s", t.ks));
    }
    Ok((pass, parts.join("; ")))
}

fn aronson_grid(level: u32) -> Vec<KernelQuery> {
    let k = 1usize << level;
    let nt = 8 * k;
    let nz = 80 * k;
    let mut q = Vec::new();
    for i in 0..=nt {
        let t = 10f64.powf(-1.0 + 2.0 * i as f64 / nt as f64);
        for j in 0..=nz {
            q.push(KernelQuery::scalar(t, 20.0 * j as f64 / nz as f64));
        }
    }
    q
}

fn aronson_bounds() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for alpha in ALPHAS {
        let ker = StableKernel::new(StableParams::new(alpha, 1)?);
        let a = ker.aronson_ratio(&aronson_grid(0))?;
        let b = ker.aronson_ratio(&aronson_grid(1))?;
        let change = (b.min / a.min - 1.0).abs().max((b.max / a.max - 1.0).abs());
        pass &= a.min > 0.0 && a.max.is_finite() && change < 0.10;
        parts.push(format!("alpha {alpha}: [{:.4}, {:.4}] change {:.2}%", a.min, a.max, 100.0 * change));
    }
    Ok((pass, parts.join("; ")))
}

fn duhamel_oracles() -> Outcome {
    let grid = SpaceTimeGrid::new(0.0, 8.0, 0.08, 1.0, 64)?;
    let table = KernelTable::get(1.5)?;
    let free = solve_diffusion_duhamel(1.5, &DriftSpec::zero(1), &grid, 60, 1e-9)?;
    let mut residual: f64 = 0.0;
    for s in &free.slices {
        for (y, v) in s.lattice.points_1d().iter().zip(&s.values) {
            residual = residual.max((v - table.pdf(s.time, *y)).abs());
        }
    }
    let shifted = solve_diffusion_duhamel(1.5, &DriftSpec::constant(vec![1.0]), &grid, 60, 1e-9)?;
    let last = shifted.last();
    let shift_err = last
        .lattice
        .points_1d()
        .iter()
        .zip(&last.values)
        .map(|(y, v)| (v - table.pdf(1.0, y - 1.0)).abs())
        .fold(0.0, f64::max);
    let points = grid.lattice().len();
    Ok((
        residual < 1e-3 && shift_err < 1e-2,
        format!("{points}-point lattice: b = 0 residual {residual:.2e} (< 1e-3), constant drift {shift_err:.2e} (< 1e-2)"),
    ))
}

fn sup_difference(a: &DensityGrid, b: &DensityGrid) -> f64 {
    a.values.iter().zip(&b.values).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// (literal, smoothed) sup distances between the deterministic density and the KDE.
fn scheme_vs_kde(drift: &DriftSpec) -> Result<(f64, f64), Error> {
    let sampler = SamplerSpec::new(StableParams::for_sde(1.5, 1)?, 7)?;
    let config = SchemeConfig::new(1.0, 32, Variant::Standard, vec![0.0], sampler)?;
    let lattice = Lattice::symmetric(0.0, 16.0, 0.05)?;
    let det = solve_scheme_density(&config, drift, &lattice)?;
    let sample = simulate_marginal(&config, drift, 1.0, 100_000)?;
    let kde = kde_estimate(&sample, &lattice, Bandwidth::Rule { step: config.h(), alpha: 1.5 })?;
    let smoothed = smooth_like_kde(det.last(), kde.bandwidth.unwrap_or(0.0))?;
    Ok((sup_difference(det.last(), &kde), sup_difference(&smoothed, &kde)))
}

fn scheme_density_consistency() -> Outcome {
    let radial = DriftSpec::radial(1, 1.0, 0.2, 0.0, 1.0, Exponent::Finite(4.0), Exponent::Infinite)?;
    let (cal_literal, cal) = scheme_vs_kde(&DriftSpec::zero(1))?;
    let (literal, smoothed) = scheme_vs_kde(&radial)?;
    Ok((
        smoothed < 3.0 * cal,
        format!(
            "smoothed sup error {smoothed:.2e} vs 3 x calibration {:.2e}; unsmoothed {literal:.2e} vs 3 x {cal_literal:.2e}",
            3.0 * cal
        ),
    ))
}

fn convergence_rate() -> Outcome {
    let drift = DriftSpec::radial(1, 1.0, 0.2, 0.0, 1.0, Exponent::Finite(4.0), Exponent::Infinite)?;
    let gamma = drift.gap(1.5)?.gamma;
    let mut parts = vec![format!("gamma {gamma}")];
    let mut pass = true;
    for variant in [Variant::Standard, Variant::Bar] {
        let settings = RateSettings::new(1.5, drift.clone(), vec![8, 16, 32, 64], variant, ReferenceMode::Duhamel);
        let report = rate_experiment(&settings)?;
        let slope = report.slope.unwrap_or(f64::NAN);
        let lower = gamma / 1.5 - 0.15;
        pass &= report.complete && slope >= lower;
        parts.push(format!("{variant}: slope {slope:.3} (>= {lower:.3})"));
    }
    Ok((pass, parts.join("; ")))
}

fn rejected(r: Result<impl Sized, Error>, kind: &str) -> bool {
    matches!(r, Err(e) if e.kind() == kind)
}

fn lemma_suite() -> Outcome {
    let mut failed = Vec::new();
    let mut count = 0;
    for alpha in ALPHAS {
        for rep in run_suite(alpha, Suite::All)? {
            count += 1;
            if !rep.pass {
                failed.push(rep.summary());
            }
        }
    }
    let drift = suite_drift(1.5)?;
    let gamma = drift.gap(1.5)?.gamma;
    let sweep = Sweep::standard();
    let supercritical = DriftSpec::radial(1, 1.0, 0.2, 0.0, 1.0, Exponent::Finite(2.0), Exponent::Finite(2.0))?;
    let divergent = [
        ("moment beyond the tail", rejected(check_spatial_moments(1.5, Exponent::Finite(1.0), 2.5, &sweep), "precondition")),
        ("bulk regime mismatch", rejected(check_convo_bulk(1.5, &drift, 1.0, gamma / 1.5, BulkCase::Integrable, &sweep), "precondition")),
        ("bulk supercritical drift", rejected(check_convo_bulk(1.5, &supercritical, 0.5, 0.0, BulkCase::Integrable, &sweep), "supercritical")),
        ("cutoff step >= 1", rejected(check_cutoff_negligible(1.5, &drift, Variant::Standard, 1.0, &[1.0], &sweep), "precondition")),
    ];
    let not_rejected: Vec<&str> = divergent.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    let pass = failed.is_empty() && not_rejected.is_empty();
    let mut msg = format!("{} of {count} checks pass over alpha {ALPHAS:?}; {} divergent regimes rejected", count - failed.len(), divergent.len() - not_rejected.len());
    if !pass {
        msg.push_str(&format!("; failing {failed:?}; accepted {not_rejected:?}"));
    }
    Ok((pass, msg))
}

fn run_with_workers(workers: usize, command: Command, text: &str, out: &Path) -> Result<(), Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Argument(e.to_string()))?;
    let config = ExperimentConfig::from_text(&format!("{text}\nout = {}\n", out.display()), &[])?;
    pool.install(|| cli::run(command, &config)).map(|_| ())
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != MANIFEST) {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap_or_default()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let base = "alpha = 1.5\nseed = 99\ndrift = radial:beta=0.2,c=1,R=1\np = 4\nsteps = 16\npaths = 20000\n\
                lattice.half_width = 24\nlattice.spacing = 0.1\nduhamel.panels = 16\nladder = 4,8,16\nrefinement = 2\nsuite = holder-space";
    let runs = [
        Command::Simulate,
        Command::Density,
        Command::Duhamel,
        Command::Converge,
        Command::VerifyLemmas,
        Command::SamplerTest,
    ];
    let root = std::env::temp_dir().join(format!("stablelab-acceptance-{}", std::process::id()));
    let mut identical = 0;
    let mut files = 0;
    for command in runs {
        let one = root.join(format!("{command}-1"));
        let four = root.join(format!("{command}-4"));
        run_with_workers(1, command, base, &one)?;
        run_with_workers(4, command, base, &four)?;
        // a second single-worker run checks plain reruns as well
        let again = root.join(format!("{command}-1b"));
        run_with_workers(1, command, base, &again)?;
        let (a, b, c) = (artifacts(&one), artifacts(&four), artifacts(&again));
        files += a.len();
        if !a.is_empty() && a == b && a == c {
            identical += 1;
        }
    }
    let _ = std::fs::remove_dir_all(&root);
    Ok((identical == runs.len(), format!("{identical} of {} subcommands byte-identical across reruns and 1/4 workers ({files} files)", runs.len())))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "kernel oracles", budget: Duration::from_secs(10), run: kernel_oracles },
        Criterion { id: 2, name: "sampler law", budget: Duration::from_secs(90), run: sampler_law },
        Criterion { id: 3, name: "Aronson-type bounds", budget: Duration::from_secs(60), run: aronson_bounds },
        Criterion { id: 4, name: "Duhamel solver oracles", budget: Duration::from_secs(120), run: duhamel_oracles },
        Criterion { id: 5, name: "scheme density vs Monte Carlo", budget: Duration::from_secs(300), run: scheme_density_consistency },
        Criterion { id: 6, name: "convergence rate", budget: Duration::from_secs(900), run: convergence_rate },
        Criterion { id: 7, name: "lemma suite", budget: Duration::from_secs(600), run: lemma_suite },
        Criterion { id: 8, name: "determinism", budget: Duration::MAX, run: determinism },
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failures = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok((ok, d)) => (ok && elapsed < c.budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let budget = if c.budget == Duration::MAX { String::new() } else { format!(" / {}s", c.budget.as_secs()) };
        println!(
            "acceptance {} {:<30} {}  [{:.1}s{budget}]  {detail}",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        if !pass {
            failures += 1;
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
