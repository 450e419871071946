//! h-ladders: weighted sup errors of the scheme density against a reference and the fitted rate.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density_mc::{DensityGrid, Lattice, UNDERFLOW};
use crate::drift::{DriftSpec, Variant};
use crate::duhamel::{solve_diffusion_duhamel, solve_scheme_density, SpaceTimeGrid};
use crate::error::{argument, Error, Result};
use crate::euler::SchemeConfig;
use crate::io::{self, num};
use crate::kernel_table::KernelTable;
use crate::stable_kernel::StableParams;
use crate::stable_sampler::SamplerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedError {
    pub value: f64,
    pub at: f64,
    pub excluded: usize,
}

/// sup |a − b| / p_α(t, y − x₀) over lattice points with |y − x₀| ≤ window (all points when None).
pub fn weighted_error(a: &DensityGrid, b: &DensityGrid, alpha: f64, x0: f64, window: Option<f64>) -> Result<WeightedError> {
    if a.lattice.dim() != 1 || !a.lattice.same_as(&b.lattice) {
        return Err(argument("weighted error needs identical 1-d lattices"));
    }
    if (a.time - b.time).abs() > 1e-12 * a.time.max(1.0) {
        return Err(argument(format!("grid times differ: {} vs {}", a.time, b.time)));
    }
    let table = KernelTable::get(alpha)?;
    let s = table.at(a.time);
    let mut out = WeightedError { value: 0.0, at: x0, excluded: 0 };
    for (y, (u, v)) in a.lattice.points_1d().into_iter().zip(a.values.iter().zip(&b.values)) {
        if window.is_some_and(|w| (y - x0).abs() > w) {
            continue;
        }
        let p = s.pdf(y - x0);
        if p < UNDERFLOW {
            out.excluded += 1;
            continue;
        }
        let e = (u - v).abs() / p;
        if e > out.value {
            out.value = e;
            out.at = y;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceMode {
    /// Picard solution of the limit equation on the same lattice.
    Duhamel,
    /// The finest member, extrapolated with the rate seen on the three finest members.
    Richardson,
}

impl FromStr for ReferenceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "duhamel" => Ok(ReferenceMode::Duhamel),
            "richardson" => Ok(ReferenceMode::Richardson),
            _ => Err(argument(format!("unknown reference mode {s:?}; expected duhamel or richardson"))),
        }
    }
}

impl fmt::Display for ReferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceMode::Duhamel => "duhamel",
            ReferenceMode::Richardson => "richardson",
        })
    }
}

/// Everything a ladder run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSettings {
    pub alpha: f64,
    pub drift: DriftSpec,
    pub x0: f64,
    pub horizon: f64,
    /// Evaluation time; must be a node of every ladder member.
    pub time: f64,
    pub ladder: Vec<usize>,
    pub variant: Variant,
    pub reference: ReferenceMode,
    pub half_width: f64,
    pub spacing: f64,
    /// Time panels of the Duhamel reference.
    pub panels: usize,
    /// The Duhamel reference is solved with spacing Δ / refinement and read at the shared points.
    pub refinement: usize,
    /// Half width of the window where errors are measured.
    pub window: f64,
    pub picard_iterations: usize,
    pub picard_tolerance: f64,
    /// Accepted slopes are ≥ rate − below; slopes ≤ rate + above are flagged as in band.
    pub below: f64,
    pub above: f64,
}

impl RateSettings {
    /// Desk-scale defaults: T = t = 1, lattice ±16 with Δ = 0.01, 64 Duhamel panels, window ±6.
    pub fn new(alpha: f64, drift: DriftSpec, ladder: Vec<usize>, variant: Variant, reference: ReferenceMode) -> RateSettings {
        RateSettings {
            alpha,
            drift,
            x0: 0.0,
            horizon: 1.0,
            time: 1.0,
            ladder,
            variant,
            reference,
            half_width: 16.0,
            spacing: 0.01,
            panels: 64,
            refinement: 4,
            window: 6.0,
            picard_iterations: 60,
            picard_tolerance: 1e-9,
            below: 0.15,
            above: 0.5,
        }
    }

    fn lattice(&self) -> Result<Lattice> {
        Lattice::symmetric(self.x0, self.half_width, self.spacing)
    }

    fn scheme(&self, n: usize) -> Result<SchemeConfig> {
        // the deterministic solvers draw no randomness; the seed is inert
        let sampler = SamplerSpec::new(StableParams::for_sde(self.alpha, 1)?, 0)?;
        SchemeConfig::new(self.horizon, n, self.variant, vec![self.x0], sampler)
    }

    fn scheme_density(&self, n: usize, drift: &DriftSpec) -> Result<DensityGrid> {
        let sol = solve_scheme_density(&self.scheme(n)?, drift, &self.lattice()?)?;
        sol.at_time(self.time)
            .cloned()
            .ok_or_else(|| argument(format!("t = {} is not a node of the n = {n} grid", self.time)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderPoint {
    pub n: usize,
    pub h: f64,
    /// None when this member failed.
    pub error: Option<f64>,
    pub at: Option<f64>,
    pub above_floor: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub alpha: f64,
    pub gamma: f64,
    /// Theoretical rate γ/α.
    pub rate: f64,
    pub variant: String,
    pub reference: String,
    /// Sorted by decreasing h.
    pub ladder: Vec<LadderPoint>,
    pub slope: Option<f64>,
    /// Root mean square residual of the log-log fit.
    pub fit_residual: Option<f64>,
    pub noise_floor: f64,
    pub lower: f64,
    pub upper: f64,
    /// slope ≥ lower.
    pub pass: bool,
    /// lower ≤ slope ≤ upper.
    pub in_band: bool,
    pub complete: bool,
    /// Fewer than two errors above the noise floor.
    pub degenerate: bool,
}

/// Least-squares slope and RMS residual of y on x.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / n as f64).sqrt();
    Some((slope, icpt, rms))
}

/// Three times the weighted error of the b = 0 scheme density at the finest n against p_α.
pub fn noise_floor(settings: &RateSettings) -> Result<f64> {
    let n = *settings.ladder.iter().max().ok_or_else(|| argument("empty ladder"))?;
    let zero = DriftSpec::zero(1);
    let g = settings.scheme_density(n, &zero)?;
    let l = settings.lattice()?;
    let table = KernelTable::get(settings.alpha)?;
    let s = table.at(settings.time);
    let exact = DensityGrid::new(l.clone(), l.points_1d().iter().map(|y| s.pdf(y - settings.x0)).collect(), settings.time)?;
    Ok(3.0 * weighted_error(&g, &exact, settings.alpha, settings.x0, Some(settings.window))?.value)
}

pub fn rate_experiment(settings: &RateSettings) -> Result<RateReport> {
    let s = settings;
    if s.drift.dim != 1 {
        return Err(Error::UnsupportedDimension(s.drift.dim));
    }
    let gap = s.drift.gap(s.alpha)?;
    if !(gap.gamma > 0.0) {
        return Err(Error::Supercritical { gamma: gap.gamma });
    }
    if s.ladder.len() < 3 {
        return Err(argument("a ladder needs at least 3 members"));
    }
    if s.ladder.contains(&0) {
        return Err(argument("ladder members must be positive"));
    }
    if !(s.time > 0.0 && s.time <= s.horizon) {
        return Err(argument("evaluation time must lie in (0, T]"));
    }
    let mut ns = s.ladder.clone();
    ns.sort_unstable();
    ns.dedup();
    let rate = gap.gamma / s.alpha;
    // NaN when the calibration itself cannot run; nothing then counts as above the floor
    let floor = noise_floor(s).unwrap_or(f64::NAN);

    let members: Vec<Result<DensityGrid>> = ns.par_iter().map(|&n| s.scheme_density(n, &s.drift)).collect();
    let reference: Result<DensityGrid> = match s.reference {
        ReferenceMode::Duhamel => {
            duhamel_reference(s)
        }
        ReferenceMode::Richardson => richardson_reference(s, &members),
    };
    let mut ladder = Vec::new();
    let scored = match s.reference {
        ReferenceMode::Duhamel => ns.len(),
        ReferenceMode::Richardson => ns.len() - 1,
    };
    for (&n, m) in ns.iter().zip(&members).take(scored) {
        let h = s.horizon / n as f64;
        let mut pt = LadderPoint { n, h, error: None, at: None, above_floor: false, failure: None };
        match (m, &reference) {
            (Ok(g), Ok(r)) => {
                let e = weighted_error(g, r, s.alpha, s.x0, Some(s.window))?;
                pt.error = Some(e.value);
                pt.at = Some(e.at);
                pt.above_floor = e.value > floor;
            }
            (Err(e), _) => pt.failure = Some(e.to_string()),
            (_, Err(e)) => pt.failure = Some(format!("reference: {e}")),
        }
            ladder.push(pt);
    }
    let complete = !floor.is_nan() && ladder.iter().all(|p| p.failure.is_none());
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        ladder.iter().filter(|p| p.above_floor).filter_map(|p| p.error.map(|e| (p.h.ln(), e.ln()))).unzip();
    let fit = fit_line(&xs, &ys);
    let degenerate = xs.len() < 2;
    let lower = rate - s.below;
    let upper = rate + s.above;
    let slope = fit.map(|f| f.0);
    Ok(RateReport {
        alpha: s.alpha,
        gamma: gap.gamma,
        rate,
        variant: s.variant.to_string(),
        reference: match s.reference {
            ReferenceMode::Duhamel => format!("duhamel: {} panels, lattice ±{} step {}", s.panels, s.half_width, s.spacing / s.refinement.max(1) as f64),
            ReferenceMode::Richardson => format!("richardson: n = {} extrapolated", ns[ns.len() - 1]),
        },
        ladder,
        slope,
        fit_residual: fit.map(|f| f.2),
        noise_floor: floor,
        lower,
        upper,
        pass: complete && !degenerate && slope.is_some_and(|v| v >= lower),
        in_band: slope.is_some_and(|v| v >= lower && v <= upper),
        complete,
        degenerate,
    })
}

/// Picard solution on the refined lattice, restricted to the ladder lattice.
pub fn duhamel_reference(s: &RateSettings) -> Result<DensityGrid> {
    let r = s.refinement.max(1);
    let grid = SpaceTimeGrid::new(s.x0, s.half_width, s.spacing / r as f64, s.time, s.panels)?;
    let sol = solve_diffusion_duhamel(s.alpha, &s.drift, &grid, s.picard_iterations, s.picard_tolerance)?;
    let fine = sol.last();
    let lattice = s.lattice()?;
    if fine.values.len() != r * (lattice.len() - 1) + 1 {
        return Err(argument("refined lattice does not nest the ladder lattice; use a half width that is a multiple of the spacing"));
    }
    let values = (0..lattice.len()).map(|i| fine.values[i * r]).collect();
    DensityGrid::new(lattice, values, fine.time)
}

/// Γ_f + (Γ_f − Γ_{f/2}) / (2^r − 1), with r from the successive differences of the three finest members.
fn richardson_reference(s: &RateSettings, members: &[Result<DensityGrid>]) -> Result<DensityGrid> {
    let k = members.len();
    let get = |i: usize| members[i].as_ref().map_err(|e| Error::Numeric(format!("ladder member failed: {e}")));
    let (a, b, c) = (get(k - 3)?, get(k - 2)?, get(k - 1)?);
    let d1 = weighted_error(a, b, s.alpha, s.x0, Some(s.window))?.value;
    let d2 = weighted_error(b, c, s.alpha, s.x0, Some(s.window))?.value;
    if !(d1 > 0.0 && d2 > 0.0) {
        return Ok(c.clone());
    }
    let mut ns: Vec<usize> = s.ladder.clone();
    ns.sort_unstable();
    ns.dedup();
    let ratio = ns[k - 1] as f64 / ns[k - 2] as f64;
    let r = (d1 / d2).ln() / (ns[k - 2] as f64 / ns[k - 3] as f64).ln();
    if !(r > 0.0) {
        return Err(Error::Numeric(format!("successive differences do not decay (estimated rate {r})")));
    }
    let f = 1.0 / (ratio.powf(r) - 1.0);
    let v = c.values.iter().zip(&b.values).map(|(x, y)| x + (x - y) * f).collect();
    DensityGrid::new(c.lattice.clone(), v, c.time)
}

/// ladder.csv, fit.json and plot.gp in `dir`.
pub fn emit_report(report: &RateReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = io::create(&dir.join("ladder.csv"))?;
    writeln!(w, "n,h,error,above_floor")?;
    for p in &report.ladder {
        let e = p.error.map(num).unwrap_or_else(|| "nan".into());
        writeln!(w, "{},{},{},{}", p.n, num(p.h), e, p.above_floor)?;
    }
    w.flush()?;
    io::write_json(&dir.join("fit.json"), report)?;
    let mut g = io::create(&dir.join("plot.gp"))?;
    let anchor = report
        .ladder
        .iter()
        .find_map(|p| p.error.map(|e| (p.h, e)))
        .unwrap_or((1.0, 1.0));
    writeln!(g, "set datafile separator ','")?;
    writeln!(g, "set logscale xy")?;
    writeln!(g, "set xlabel 'h'")?;
    writeln!(g, "set ylabel 'weighted sup error'")?;
    let tag = if report.complete { "" } else { " (incomplete)" };
    writeln!(g, "set title 'variant {}, reference {}{}'", report.variant, report.reference, tag)?;
    writeln!(g, "rate = {}", num(report.rate))?;
    writeln!(g, "c = {} / {}**rate", num(anchor.1), num(anchor.0))?;
    writeln!(g, "plot 'ladder.csv' every ::1 using 2:3 with linespoints title 'error', c*x**rate title 'h^rate'")?;
    g.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::Exponent;

    fn grid(vals: Vec<f64>) -> DensityGrid {
        let l = Lattice::symmetric(0.0, 5.0, 0.5).unwrap();
        DensityGrid::new(l, vals, 1.0).unwrap()
    }

    #[test]
    fn weighted_error_cases() {
        let table = KernelTable::get(1.5).unwrap();
    let s = table.at(1.0);
        let base: Vec<f64> = (0..21).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let a = grid(base.clone());
        assert_eq!(weighted_error(&a, &a, 1.5, 0.0, None).unwrap().value, 0.0);
        let eps = 0.125;
        let b = grid(base.iter().enumerate().map(|(i, v)| v + eps * s.pdf(-5.0 + 0.5 * i as f64)).collect());
        assert!((weighted_error(&a, &b, 1.5, 0.0, None).unwrap().value - eps).abs() < 1e-14);
        let other = DensityGrid::new(Lattice::symmetric(0.0, 5.0, 0.25).unwrap(), vec![0.0; 41], 1.0).unwrap();
        assert!(matches!(weighted_error(&a, &other, 1.5, 0.0, None), Err(Error::Argument(_))));
    }

    #[test]
    fn fit_recovers_power_law() {
        let h = [0.125f64, 0.0625, 0.03125];
        let (x, y): (Vec<f64>, Vec<f64>) = h.iter().map(|v| (v.ln(), (3.0 * v.powf(0.4)).ln())).unzip();
        let (s, _, r) = fit_line(&x, &y).unwrap();
        assert!((s - 0.4).abs() < 1e-12 && r < 1e-12);
    }

    fn quick(drift: DriftSpec, reference: ReferenceMode) -> RateSettings {
        let mut s = RateSettings::new(1.5, drift, vec![4, 8, 16], Variant::Standard, reference);
        s.spacing = 0.04;
        s.panels = 16;
        s
    }

    #[test]
    fn zero_drift_is_degenerate() {
        let r = rate_experiment(&quick(DriftSpec::zero(1), ReferenceMode::Duhamel)).unwrap();
        assert!(r.degenerate && !r.pass && r.complete);
        assert!(r.ladder.iter().all(|p| !p.above_floor));
    }

    #[test]
    fn constant_drift_scheme_is_exact() {
        let s = quick(DriftSpec::constant(vec![1.0]), ReferenceMode::Richardson);
        let g = s.scheme_density(8, &s.drift).unwrap();
        let table = KernelTable::get(1.5).unwrap();
        let p = table.at(1.0);
        let err = g.lattice.points_1d().iter().zip(&g.values).map(|(y, v)| (v - p.pdf(y - 1.0)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
        let r = rate_experiment(&s).unwrap();
        assert!(r.degenerate && !r.pass, "{r:?}");
    }

    #[test]
    fn smooth_drift_decays_fast_enough() {
        let b = DriftSpec::smooth(1, 1.0, 1.0, Exponent::Infinite, Exponent::Infinite).unwrap();
        let mut s = quick(b, ReferenceMode::Duhamel);
        s.panels = 32;
        let r = rate_experiment(&s).unwrap();
        assert!(r.complete && !r.degenerate, "{r:?}");
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn bad_ladders_rejected() {
        let mut s = quick(DriftSpec::zero(1), ReferenceMode::Duhamel);
        s.ladder = vec![8, 16];
        assert!(rate_experiment(&s).is_err());
        let b = DriftSpec::radial(1, 1.0, 0.2, 0.0, 1.0, Exponent::Finite(4.0), Exponent::Infinite).unwrap();
        let mut t = quick(b, ReferenceMode::Duhamel);
        t.time = 0.3;
        let r = rate_experiment(&t).unwrap();
        assert!(!r.complete && !r.pass);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let b = DriftSpec::radial(1, 1.0, 0.2, 0.0, 1.0, Exponent::Finite(4.0), Exponent::Infinite).unwrap();
        let mut s = quick(b, ReferenceMode::Duhamel);
        s.ladder = vec![2, 4, 8, 16];
        let r = rate_experiment(&s).unwrap();
        emit_report(&r, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("ladder.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        let gp = std::fs::read_to_string(dir.path().join("plot.gp")).unwrap();
        assert!(gp.contains(&format!("rate = {}", num(r.rate))));
        let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
        assert_eq!(fit["complete"], serde_json::Value::Bool(true));
    }
}
