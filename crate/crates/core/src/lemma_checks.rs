//! Numerical certificates for the stable-kernel estimates behind the error analysis.
//!
//! Each check evaluates a left-hand side and the shape of its bound on a fixed, versioned
//! sweep and reports the largest ratio. The check is repeated on the sweep refined ×2. A
//! bound is accepted when the ratio is finite and moves by less than 10% under refinement.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::convergence::fit_line;
use crate::drift::{cutoff, DriftKind, DriftSpec, Exponent, Variant};
use crate::error::{argument, Error, Result};
use crate::kernel_table::{KernelTable, Slice};
use crate::quad;
use crate::stable_kernel::{KernelQuery, StableKernel, StableParams};

pub const SWEEP_VERSION: &str = "v1";

/// Largest relative change of a constant under refinement that still counts as stable.
pub const STABILITY_TOLERANCE: f64 = 0.10;

/// Largest Richardson error estimate, in units of the bound, before a derivative is rejected.
pub const RICHARDSON_TOLERANCE: f64 = 1e-4;

/// Largest gap between fitted and predicted moment exponents.
pub const EXPONENT_TOLERANCE: f64 = 0.02;

fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

/// A fixed point set in self-similar variables: times u and scaled positions ξ = x/u^{1/α}.
///
/// Level k halves every spacing of level k−1. `scale` multiplies all times, which leaves ξ
/// unchanged, so a rescaled sweep probes the image of the original one under
/// (u, x) ↦ (λu, λ^{1/α}x).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub version: String,
    pub level: u32,
    pub scale: f64,
    pub max_scaled: f64,
    times: Option<Vec<f64>>,
    offsets: Option<Vec<f64>>,
    thetas: Option<Vec<f64>>,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep::standard()
    }
}

impl Sweep {
    pub fn standard() -> Sweep {
        Sweep::at_level(0)
    }

    pub fn at_level(level: u32) -> Sweep {
        Sweep {
            version: SWEEP_VERSION.into(),
            level,
            scale: 1.0,
            max_scaled: 64.0,
            times: None,
            offsets: None,
            thetas: None,
        }
    }

    /// The same sweep at the next level; explicit overrides are kept.
    pub fn refined(&self) -> Sweep {
        Sweep { level: self.level + 1, ..self.clone() }
    }

    pub fn rescaled(&self, lambda: f64) -> Sweep {
        Sweep { scale: self.scale * lambda, ..self.clone() }
    }

    /// Fixed times (before scaling) instead of the logarithmic ladder.
    pub fn with_times(mut self, times: Vec<f64>) -> Sweep {
        self.times = Some(times);
        self
    }

    /// Fixed pair offsets instead of the dyadic set.
    pub fn with_offsets(mut self, offsets: Vec<f64>) -> Sweep {
        self.offsets = Some(offsets);
        self
    }

    pub fn with_thetas(mut self, thetas: Vec<f64>) -> Sweep {
        self.thetas = Some(thetas);
        self
    }

    pub fn with_max_scaled(mut self, max_scaled: f64) -> Sweep {
        self.max_scaled = max_scaled;
        self
    }

    fn density(&self) -> usize {
        1usize << self.level
    }

    /// Times in [0.1, 10], 4·2^level log-spaced intervals, multiplied by `scale`.
    pub fn times(&self) -> Vec<f64> {
        let base = self.times.clone().unwrap_or_else(|| {
            let n = 4 * self.density();
            (0..=n).map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / n as f64)).collect()
        });
        base.into_iter().map(|u| u * self.scale).collect()
    }

    /// ξ ≥ 0: linear on [0, 8] with step 0.25/2^level, then geometric with ratio 2^{1/(4·2^level)}
    /// up to `max_scaled`.
    pub fn scaled_points(&self) -> Vec<f64> {
        let k = self.density();
        let mut xi: Vec<f64> = (0..=32 * k).map(|i| i as f64 * 0.25 / k as f64).collect();
        for j in 1.. {
            let v = 8.0 * 2f64.powf(j as f64 / (4 * k) as f64);
            if v > self.max_scaled * (1.0 + 1e-12) {
                break;
            }
            xi.push(v);
        }
        xi.retain(|&x| x <= self.max_scaled * (1.0 + 1e-12));
        xi
    }

    /// Positive pair offsets in scaled units: 2^{−j/2^level} down to 2^{−12}, up to 64.
    pub fn offsets(&self) -> Vec<f64> {
        self.offsets.clone().unwrap_or_else(|| {
            let k = self.density();
            let mut v: Vec<f64> = (0..=12 * k).map(|j| 2f64.powf(-(j as f64) / k as f64)).collect();
            v.extend((1..=6 * k).map(|m| 2f64.powf(m as f64 / k as f64)));
            v.sort_by(f64::total_cmp);
            v
        })
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.thetas.clone().unwrap_or_else(|| vec![0.25, 0.5, 0.75, 1.0])
    }

    pub fn describe(&self) -> String {
        let t = self.times();
        format!(
            "{} level {}: {} times in [{}, {}], {} scaled points in [0, {}], {} offsets, theta {:?}",
            self.version,
            self.level,
            t.len(),
            t.first().copied().unwrap_or(f64::NAN),
            t.last().copied().unwrap_or(f64::NAN),
            self.scaled_points().len(),
            self.max_scaled,
            self.offsets().len(),
            self.thetas()
        )
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub lemma: String,
    /// File stem; distinguishes parameter choices of the same lemma.
    pub label: String,
    pub alpha: f64,
    pub sweep: String,
    pub refined_sweep: String,
    pub points: usize,
    pub refined_points: usize,
    /// Sup of LHS / RHS-shape over the sweep.
    pub constant: f64,
    pub attained_at: BTreeMap<String, f64>,
    pub refined_constant: f64,
    pub relative_change: f64,
    pub finite: bool,
    pub stable: bool,
    pub pass: bool,
    /// Per-order or per-parameter sups on the base sweep, plus check-specific diagnostics.
    pub components: BTreeMap<String, f64>,
}

impl CheckReport {
    pub fn summary(&self) -> String {
        format!(
            "{} alpha={} constant={:.6} refined={:.6} change={:.2}% {}",
            self.label,
            self.alpha,
            self.constant,
            self.refined_constant,
            100.0 * self.relative_change,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone)]
struct Probe {
    value: f64,
    component: String,
    at: Vec<(&'static str, f64)>,
}

impl Probe {
    fn new(value: f64, component: String, at: Vec<(&'static str, f64)>) -> Probe {
        Probe { value, component, at }
    }
}

#[derive(Debug, Clone, Default)]
struct Sup {
    value: f64,
    at: BTreeMap<String, f64>,
    components: BTreeMap<String, f64>,
    points: usize,
}

/// Sequential reduction in input order; the first maximiser wins ties. Non-finite ratios count as +∞.
fn reduce(probes: &[Probe]) -> Sup {
    let mut sup = Sup { points: probes.len(), ..Sup::default() };
    let mut best: Option<&Probe> = None;
    for p in probes {
        let v = if p.value.is_finite() { p.value } else { f64::INFINITY };
        let c = sup.components.entry(p.component.clone()).or_insert(0.0);
        if v > *c {
            *c = v;
        }
        if best.is_none() || v > sup.value {
            sup.value = v;
            best = Some(p);
        }
    }
    if let Some(p) = best {
        sup.at = p.at.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        sup.at.insert(format!("component:{}", p.component), 1.0);
    }
    sup
}

fn assemble(lemma: &str, label: &str, alpha: f64, sweeps: (String, String), base: Sup, refined: Sup) -> CheckReport {
    let finite = base.value.is_finite() && refined.value.is_finite();
    let relative_change = if base.value == refined.value {
        0.0
    } else {
        (refined.value - base.value).abs() / base.value.abs().max(refined.value.abs())
    };
    let stable = relative_change < STABILITY_TOLERANCE;
    CheckReport {
        lemma: lemma.into(),
        label: label.into(),
        alpha,
        sweep: sweeps.0,
        refined_sweep: sweeps.1,
        points: base.points,
        refined_points: refined.points,
        constant: base.value,
        attained_at: base.at,
        refined_constant: refined.value,
        relative_change,
        finite,
        stable,
        pass: finite && stable,
        components: base.components,
    }
}

fn flatten(parts: Result<Vec<Vec<Probe>>>) -> Result<Vec<Probe>> {
    Ok(parts?.into_iter().flatten().collect())
}

fn kernel_1d(alpha: f64) -> Result<StableKernel> {
    Ok(StableKernel::new(StableParams::new(alpha, 1)?))
}

fn check_thetas(thetas: &[f64]) -> Result<()> {
    if thetas.is_empty() || thetas.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(argument(format!("Hölder exponents must lie in (0, 1], got {thetas:?}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------------------
// Derivative bounds by finite differences of the quadrature density

/// Two Richardson levels on central differences at steps d, d/2, d/4: (value, error estimate).
fn richardson(d: [f64; 3]) -> (f64, f64) {
    let r0 = (4.0 * d[1] - d[0]) / 3.0;
    let r1 = (4.0 * d[2] - d[1]) / 3.0;
    let v = (16.0 * r1 - r0) / 15.0;
    (v, (v - r1).abs())
}

fn fd_failure(what: &str, u: f64, x: f64, err: f64, bound: f64) -> Error {
    Error::Numeric(format!(
        "finite-difference {what} did not converge at u={u}, x={x}: Richardson error {err:e} exceeds {bound:e}"
    ))
}

/// p, ∂ₓp, ∂ₓ²p at (u, x) from the quadrature density.
fn spatial_derivatives(k: &StableKernel, u: f64, x: f64) -> Result<[f64; 3]> {
    let dens = |z: f64| k.density(&KernelQuery::scalar(u, z));
    let s = u.powf(1.0 / k.alpha());
    let step = 0.1 * (s + x.abs());
    let f0 = dens(x)?;
    let mut d1 = [0.0; 3];
    let mut d2 = [0.0; 3];
    for (j, h) in [step, 0.5 * step, 0.25 * step].into_iter().enumerate() {
        let (fp, fm) = (dens(x + h)?, dens(x - h)?);
        d1[j] = (fp - fm) / (2.0 * h);
        d2[j] = (fp - 2.0 * f0 + fm) / (h * h);
    }
    let (g1, e1) = richardson(d1);
    let (g2, e2) = richardson(d2);
    let b1 = RICHARDSON_TOLERANCE * f0 / s;
    let b2 = RICHARDSON_TOLERANCE * f0 / (s * s);
    if !(e1 <= b1) {
        return Err(fd_failure("first derivative", u, x, e1, b1));
    }
    if !(e2 <= b2) {
        return Err(fd_failure("second derivative", u, x, e2, b2));
    }
    Ok([f0, g1, g2])
}

/// |∂ᵤ^β ∂ₓ^ζ p| u^{β+ζ/α} / p for β ∈ {0, 1}, ζ ∈ {0, 1, 2}, indexed [β][ζ].
fn derivative_ratios(k: &StableKernel, u: f64, x: f64) -> Result<[[f64; 3]; 2]> {
    let a = k.alpha();
    let s = u.powf(1.0 / a);
    let here = spatial_derivatives(k, u, x)?;
    let p = here[0];
    let eps = 0.1 * u;
    let mut dt = [[0.0; 3]; 3];
    for (j, e) in [eps, 0.5 * eps, 0.25 * eps].into_iter().enumerate() {
        let plus = spatial_derivatives(k, u + e, x)?;
        let minus = spatial_derivatives(k, u - e, x)?;
        for z in 0..3 {
            dt[z][j] = (plus[z] - minus[z]) / (2.0 * e);
        }
    }
    let mut out = [[0.0; 3]; 2];
    for z in 0..3 {
        let w = s.powi(z as i32);
        out[0][z] = here[z].abs() * w / p;
        let (v, err) = richardson(dt[z]);
        let bound = RICHARDSON_TOLERANCE * p / (u * w);
        if !(err <= bound) {
            return Err(fd_failure("time derivative", u, x, err, bound));
        }
        out[1][z] = v.abs() * u * w / p;
    }
    Ok(out)
}

fn derivative_sup(k: &StableKernel, sweep: &Sweep) -> Result<Sup> {
    let a = k.alpha();
    let pts: Vec<(f64, f64)> = sweep
        .times()
        .into_iter()
        .flat_map(|u| sweep.scaled_points().into_iter().map(move |xi| (u, xi)))
        .collect();
    let probes = flatten(
        pts.par_iter()
            .map(|&(u, xi)| {
                let x = xi * u.powf(1.0 / a);
                let r = derivative_ratios(k, u, x)?;
                let mut v = Vec::with_capacity(6);
                for (beta, row) in r.iter().enumerate() {
                    for (zeta, &val) in row.iter().enumerate() {
                        v.push(Probe::new(val, format!("beta{beta}_zeta{zeta}"), vec![("u", u), ("x", x), ("xi", xi)]));
                    }
                }
                Ok(v)
            })
            .collect(),
    )?;
    Ok(reduce(&probes))
}

/// Sup of |∂ᵤ^β ∂ₓ^ζ p(u,x)| u^{β+ζ/α} / p(u,x) over β ≤ 1, ζ ≤ 2.
///
/// Derivatives are Richardson-extrapolated central differences of the quadrature density.
pub fn check_derivative_bounds(alpha: f64, sweep: &Sweep) -> Result<CheckReport> {
    let k = kernel_1d(alpha)?;
    let refined = sweep.refined();
    let base = derivative_sup(&k, sweep)?;
    let fine = derivative_sup(&k, &refined)?;
    Ok(assemble("derivatives", "derivatives", alpha, (sweep.describe(), refined.describe()), base, fine))
}

// ---------------------------------------------------------------------------------------
// Hölder regularity in space and time

fn zeta_value(sl: &Slice<'_>, zeta: usize, x: f64) -> f64 {
    match zeta {
        0 => sl.pdf(x),
        1 => sl.grad(x),
        _ => sl.second(x),
    }
}

fn holder_space_sup(table: &KernelTable, sweep: &Sweep) -> Result<Sup> {
    let a = table.alpha();
    let thetas = sweep.thetas();
    check_thetas(&thetas)?;
    let offsets = sweep.offsets();
    let pts: Vec<(f64, f64)> = sweep
        .times()
        .into_iter()
        .flat_map(|u| sweep.scaled_points().into_iter().map(move |xi| (u, xi)))
        .collect();
    let probes: Vec<Probe> = pts
        .par_iter()
        .map(|&(u, xi)| {
            let sl = table.at(u);
            let s = u.powf(1.0 / a);
            let x = xi * s;
            let mut v = Vec::new();
            for &eta in &offsets {
                for sign in [1.0, -1.0] {
                    let x2 = x + sign * eta * s;
                    let mass = sl.pdf(x) + sl.pdf(x2);
                    for zeta in 0..3 {
                        let lhs = (zeta_value(&sl, zeta, x) - zeta_value(&sl, zeta, x2)).abs();
                        for &theta in &thetas {
                            let rhs = eta.powf(theta).min(1.0) * mass / s.powi(zeta as i32);
                            v.push(Probe::new(
                                lhs / rhs,
                                format!("theta{theta}_zeta{zeta}"),
                                vec![("u", u), ("x", x), ("x_prime", x2), ("theta", theta), ("zeta", zeta as f64)],
                            ));
                        }
                    }
                }
            }
            v
        })
        .flatten()
        .collect();
    Ok(reduce(&probes))
}

/// Sup of |∇^ζp(u,x) − ∇^ζp(u,x′)| over (|x−x′|^θ/u^{θ/α} ∧ 1) u^{−ζ/α} (p(u,x) + p(u,x′)).
pub fn check_holder_space(alpha: f64, sweep: &Sweep) -> Result<CheckReport> {
    let table = KernelTable::get(alpha)?;
    let refined = sweep.refined();
    let base = holder_space_sup(&table, sweep)?;
    let fine = holder_space_sup(&table, &refined)?;
    Ok(assemble("holder-space", "holder-space", alpha, (sweep.describe(), refined.describe()), base, fine))
}

fn holder_time_sup(table: &KernelTable, sweep: &Sweep) -> Result<Sup> {
    let a = table.alpha();
    let thetas = sweep.thetas();
    check_thetas(&thetas)?;
    let offsets = sweep.offsets();
    let pts: Vec<(f64, f64)> = sweep
        .times()
        .into_iter()
        .flat_map(|u| sweep.scaled_points().into_iter().map(move |xi| (u, xi)))
        .collect();
    let probes: Vec<Probe> = pts
        .par_iter()
        .map(|&(u, xi)| {
            let sl = table.at(u);
            let s = u.powf(1.0 / a);
            let x = xi * s;
            let mut v = Vec::new();
            for &eta in &offsets {
                let u2 = u * (1.0 + eta);
                let sl2 = table.at(u2);
                let mass = sl.pdf(x) + sl2.pdf(x);
                for zeta in 0..3 {
                    let lhs = (zeta_value(&sl, zeta, x) - zeta_value(&sl2, zeta, x)).abs();
                    for &theta in &thetas {
                        let rhs = eta.powf(theta) * mass / s.powi(zeta as i32);
                        v.push(Probe::new(
                            lhs / rhs,
                            format!("theta{theta}_zeta{zeta}"),
                            vec![("u", u), ("u_prime", u2), ("x", x), ("theta", theta), ("zeta", zeta as f64)],
                        ));
                    }
                }
            }
            v
        })
        .flatten()
        .collect();
    Ok(reduce(&probes))
}

/// Sup of |∇^ζp(u,x) − ∇^ζp(u′,x)| over |u−u′|^θ u^{−θ−ζ/α} (p(u,x) + p(u′,x)), u ≤ u′.
pub fn check_holder_time(alpha: f64, sweep: &Sweep) -> Result<CheckReport> {
    let table = KernelTable::get(alpha)?;
    let refined = sweep.refined();
    let base = holder_time_sup(&table, sweep)?;
    let fine = holder_time_sup(&table, &refined)?;
    Ok(assemble("holder-time", "holder-time", alpha, (sweep.describe(), refined.describe()), base, fine))
}

// ---------------------------------------------------------------------------------------
// Line integrals

/// ∫_ℝ f or ∫_support f, with breakpoints around each (centre, width) and at `kinks`.
///
/// Finite pieces share one globally adaptive budget. The tails map x = L ± W(1/v − 1) onto
/// (0, 1] with `tail_levels` dyadic panels graded toward v = 0.
fn line_integral<F: Fn(f64) -> f64>(
    f: F,
    centres: &[(f64, f64)],
    kinks: &[f64],
    support: Option<(f64, f64)>,
    rel_tol: f64,
    tail_levels: usize,
) -> Result<f64> {
    let mut bp: Vec<f64> = kinks.to_vec();
    let mut wmax: f64 = 0.0;
    for &(c, w) in centres {
        wmax = wmax.max(w);
        bp.push(c);
        for m in [1.0, 8.0, 64.0] {
            bp.push(c - m * w);
            bp.push(c + m * w);
        }
    }
    if let Some((lo, hi)) = support {
        bp.retain(|&x| x > lo && x < hi);
        bp.push(lo);
        bp.push(hi);
    }
    bp.retain(|x| x.is_finite());
    bp.sort_by(f64::total_cmp);
    bp.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * a.abs().max(b.abs()));
    if bp.len() < 2 {
        return Err(argument("line integral needs at least one finite segment"));
    }
    let mut tails = 0.0;
    if support.is_none() {
        let (lo, hi) = (bp[0], bp[bp.len() - 1]);
        let width = wmax.max(hi - lo).max(1e-300);
        let (vs, ws) = quad::graded_toward_left(0.0, 1.0, tail_levels, &quad::rule(16));
        for (v, w) in vs.iter().zip(&ws) {
            let d = width * (1.0 / v - 1.0);
            tails += w * width / (v * v) * (f(lo - d) + f(hi + d));
        }
    }
    let body = quad::adaptive_pieces(&f, &bp, rel_tol * tails.abs(), rel_tol, 50_000)?;
    Ok(body + tails)
}

/// Max of f over ℝ near the given centres: dense sampling then golden-section polishing.
fn line_sup<F: Fn(f64) -> f64>(f: F, centres: &[(f64, f64)]) -> f64 {
    let mut xs = Vec::new();
    for &(c, w) in centres {
        for j in -400..=400 {
            let t = j as f64 / 100.0;
            xs.push(c + w * t.signum() * (t.abs().exp2() - 1.0) * 4.0);
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let (i, mut best) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let (mut lo, mut hi) = (xs[i.saturating_sub(1)], xs[(i + 1).min(xs.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) > f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best = best.max(f(0.5 * (lo + hi)));
    best
}

// ---------------------------------------------------------------------------------------
// Spatial moments

/// ‖p(u,·)|·|^δ‖ in L^{ℓ′}(ℝ) by quadrature.
pub fn moment_norm(alpha: f64, u: f64, ell_prime: Exponent, delta: f64) -> Result<f64> {
    let table = KernelTable::get(alpha)?;
    let sl = table.at(u);
    let s = u.powf(1.0 / alpha);
    match ell_prime {
        Exponent::Infinite => Ok(line_sup(|x| sl.pdf(x) * x.abs().powf(delta), &[(0.0, s)])),
        Exponent::Finite(lp) => {
            let f = |x: f64| sl.pdf(x).powf(lp) * x.abs().powf(delta * lp);
            let i = line_integral(f, &[(0.0, s)], &[], None, 1e-11, 60)?;
            Ok(i.powf(1.0 / lp))
        }
    }
}

/// Moment norms on the sweep times: fitted exponent against −1/(αℓ) + δ/α, and the constant
/// sup_u N(u)/u^{−1/(αℓ)+δ/α}.
///
/// Requires 0 ≤ δ < 1/ℓ + α, with 1/ℓ = 1 − 1/ℓ′; otherwise the integral diverges.
pub fn check_spatial_moments(alpha: f64, ell_prime: Exponent, delta: f64, sweep: &Sweep) -> Result<CheckReport> {
    let inv_ell = 1.0 - ell_prime.recip();
    if !(delta >= 0.0 && delta < inv_ell + alpha) {
        return Err(precondition(format!(
            "moment order delta = {delta} must lie in [0, 1/l + alpha) = [0, {}) for l' = {ell_prime}",
            inv_ell + alpha
        )));
    }
    KernelTable::get(alpha)?;
    let predicted = -inv_ell / alpha + delta / alpha;
    let run = |sw: &Sweep| -> Result<(Sup, f64)> {
        let times = sw.times();
        let norms: Vec<f64> =
            times.par_iter().map(|&u| moment_norm(alpha, u, ell_prime, delta)).collect::<Result<_>>()?;
        let lx: Vec<f64> = times.iter().map(|u| u.ln()).collect();
        let ly: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
        let fitted = fit_line(&lx, &ly).map(|f| f.0).unwrap_or(f64::NAN);
        let probes: Vec<Probe> = times
            .iter()
            .zip(&norms)
            .map(|(&u, &n)| Probe::new(n / u.powf(predicted), "normalized".into(), vec![("u", u), ("norm", n)]))
            .collect();
        Ok((reduce(&probes), fitted))
    };
    let refined = sweep.refined();
    let (base, fit0) = run(sweep)?;
    let (fine, fit1) = run(&refined)?;
    let label = format!("spatial-moments-lp{ell_prime}-delta{delta}");
    let mut rep = assemble("spatial-moments", &label, alpha, (sweep.describe(), refined.describe()), base, fine);
    let gap = (fit0 - predicted).abs().max((fit1 - predicted).abs());
    rep.components.insert("fitted_exponent".into(), fit0);
    rep.components.insert("fitted_exponent_refined".into(), fit1);
    rep.components.insert("predicted_exponent".into(), predicted);
    rep.components.insert("exponent_gap".into(), gap);
    rep.pass = rep.pass && gap < EXPONENT_TOLERANCE;
    Ok(rep)
}

// ---------------------------------------------------------------------------------------
// Convolutions

/// Test functions φ for the weighted convolution bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestFunction {
    /// φ ≡ 1, only in L^∞.
    One,
    /// 1 on [−1, 1].
    Indicator,
    /// |z|^{−1/5} on [−1, 1], in L^ℓ for ℓ < 5.
    Power,
    /// exp(−z²).
    Gaussian,
}

impl TestFunction {
    pub const ALL: [TestFunction; 4] = [TestFunction::One, TestFunction::Indicator, TestFunction::Power, TestFunction::Gaussian];

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::One => "one",
            TestFunction::Indicator => "indicator",
            TestFunction::Power => "power",
            TestFunction::Gaussian => "gaussian",
        }
    }

    pub fn eval(self, z: f64) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::Indicator => f64::from(z.abs() <= 1.0),
            TestFunction::Power => {
                if z != 0.0 && z.abs() <= 1.0 {
                    z.abs().powf(-0.2)
                } else {
                    0.0
                }
            }
            TestFunction::Gaussian => (-z * z).exp(),
        }
    }

    fn support(self) -> Option<(f64, f64)> {
        match self {
            TestFunction::Indicator | TestFunction::Power => Some((-1.0, 1.0)),
            _ => None,
        }
    }

    fn kinks(self) -> Vec<f64> {
        match self {
            TestFunction::Power => vec![0.0],
            _ => Vec::new(),
        }
    }

    /// ‖φ‖_{L^ℓ}, or None when φ ∉ L^ℓ.
    pub fn norm(self, ell: Exponent) -> Option<f64> {
        match (self, ell) {
            (TestFunction::One, Exponent::Infinite) => Some(1.0),
            (TestFunction::One, _) => None,
            (TestFunction::Indicator, Exponent::Infinite) => Some(1.0),
            (TestFunction::Indicator, Exponent::Finite(l)) => Some(2f64.powf(1.0 / l)),
            (TestFunction::Power, Exponent::Infinite) => None,
            (TestFunction::Power, Exponent::Finite(l)) => {
                (0.2 * l < 1.0).then(|| (2.0 / (1.0 - 0.2 * l)).powf(1.0 / l))
            }
            (TestFunction::Gaussian, Exponent::Infinite) => Some(1.0),
            (TestFunction::Gaussian, Exponent::Finite(l)) => Some((std::f64::consts::PI / l).sqrt().powf(1.0 / l)),
        }
    }
}

/// ‖p(t−u, ·−y) p(u−s, x−·)‖ in L^{ℓ′} by quadrature.
pub fn product_norm(alpha: f64, s: f64, u: f64, t: f64, x: f64, y: f64, ell_prime: Exponent) -> Result<f64> {
    if !(s < u && u < t) {
        return Err(argument(format!("need s < u < t, got {s}, {u}, {t}")));
    }
    let table = KernelTable::get(alpha)?;
    let (a, b) = (table.at(t - u), table.at(u - s));
    let centres = [(y, (t - u).powf(1.0 / alpha)), (x, (u - s).powf(1.0 / alpha))];
    match ell_prime {
        Exponent::Infinite => Ok(line_sup(|z| a.pdf(z - y) * b.pdf(x - z), &centres)),
        Exponent::Finite(lp) => {
            let i = line_integral(|z| (a.pdf(z - y) * b.pdf(x - z)).powf(lp), &centres, &[], None, 1e-11, 12)?;
            Ok(i.powf(1.0 / lp))
        }
    }
}

/// ∫ p(t−u, z−x) |φ(z)| p(u−s, y−z) dz by quadrature.
pub fn weighted_convolution(alpha: f64, phi: TestFunction, s: f64, u: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(s <= u && u < t && s < u) {
        return Err(argument(format!("need s < u < t, got {s}, {u}, {t}")));
    }
    let table = KernelTable::get(alpha)?;
    let (a, b) = (table.at(t - u), table.at(u - s));
    let centres = [(x, (t - u).powf(1.0 / alpha)), (y, (u - s).powf(1.0 / alpha))];
    line_integral(|z| a.pdf(z - x) * phi.eval(z).abs() * b.pdf(y - z), &centres, &phi.kinks(), phi.support(), 1e-11, 12)
}

const CONVOLUTION_EXPONENTS: [Exponent; 4] =
    [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Finite(4.0), Exponent::Infinite];

/// Conjugate exponent: 1/ℓ = 1 − 1/ℓ′.
fn conjugate(e: Exponent) -> Exponent {
    match e {
        Exponent::Infinite => Exponent::Finite(1.0),
        Exponent::Finite(1.0) => Exponent::Infinite,
        Exponent::Finite(v) => Exponent::Finite(v / (v - 1.0)),
    }
}

fn convolution_configs(sweep: &Sweep) -> Vec<(f64, f64, f64, f64)> {
    let k = sweep.density();
    let fracs: Vec<f64> = (0..=10 * k)
        .map(|j| 2f64.powf(-1.0 - j as f64 / (2 * k) as f64))
        .flat_map(|f| if f == 0.5 { vec![f] } else { vec![f, 1.0 - f] })
        .collect();
    let mut pos: Vec<f64> = vec![-4.0, -1.0, -0.25, 0.0, 0.5, 2.0, 8.0];
    if k > 1 {
        pos.extend([-2.0, -0.5, 0.25, 1.0, 4.0]);
    }
    let mut out = Vec::new();
    for total in [0.25 * sweep.scale, sweep.scale] {
        for &f in &fracs {
            for &x in &pos {
                for &y in &pos {
                    out.push((total, f * total, x, y));
                }
            }
        }
    }
    out
}

fn convolution_sup(alpha: f64, sweep: &Sweep) -> Result<(Sup, f64)> {
    let table = KernelTable::get(alpha)?;
    let configs = convolution_configs(sweep);
    let parts: Result<Vec<(Vec<Probe>, f64)>> = configs
        .par_iter()
        .map(|&(t, u, xs, ys)| {
            let scale = t.powf(1.0 / alpha);
            let (x, y) = (xs * scale, ys * scale);
            let heat = table.pdf(t, x - y);
            let at = vec![("s", 0.0), ("u", u), ("t", t), ("x", x), ("y", y)];
            let mut v = Vec::new();
            let mut semigroup: f64 = 0.0;
            for lp in CONVOLUTION_EXPONENTS {
                let inv_ell = 1.0 - lp.recip();
                let bracket = (t - u).powf(-inv_ell / alpha) + u.powf(-inv_ell / alpha);
                let lhs = product_norm(alpha, 0.0, u, t, x, y, lp)?;
                if lp == Exponent::Finite(1.0) {
                    semigroup = semigroup.max((lhs / heat - 1.0).abs());
                }
                let mut at = at.clone();
                at.push(("l_prime", 1.0 / lp.recip().max(1e-300)));
                v.push(Probe::new(lhs / (bracket * heat), format!("product_lp{lp}"), at));
            }
            for phi in TestFunction::ALL {
                let lhs = weighted_convolution(alpha, phi, 0.0, u, t, x, y)?;
                for lp in CONVOLUTION_EXPONENTS {
                    let ell = conjugate(lp);
                    let Some(norm) = phi.norm(ell) else { continue };
                    let inv_ell = ell.recip();
                    let bracket = (t - u).powf(-inv_ell / alpha) + u.powf(-inv_ell / alpha);
                    let mut at = at.clone();
                    at.push(("l", 1.0 / inv_ell.max(1e-300)));
                    v.push(Probe::new(lhs / (bracket * heat * norm), format!("{}_l{ell}", phi.name()), at));
                }
            }
            Ok((v, semigroup))
        })
        .collect();
    let parts = parts?;
    let semigroup = parts.iter().map(|p| p.1).fold(0.0, f64::max);
    let probes: Vec<Probe> = parts.into_iter().flat_map(|p| p.0).collect();
    Ok((reduce(&probes), semigroup))
}

/// Sup over (s = 0, u, t, x, y, ℓ) of the product-norm and weighted-convolution ratios against
/// [(t−u)^{−1/(αℓ)} + (u−s)^{−1/(αℓ)}] p(t−s, x−y), the latter also divided by ‖φ‖_ℓ.
///
/// The component `semigroup_defect` is the largest |∫p p / p(t−s) − 1| with ℓ′ = 1.
pub fn check_convolutions(alpha: f64, sweep: &Sweep) -> Result<CheckReport> {
    let refined = sweep.refined();
    let (base, defect) = convolution_sup(alpha, sweep)?;
    let (fine, _) = convolution_sup(alpha, &refined)?;
    let mut rep = assemble("convolution", "convolution", alpha, (sweep.describe(), refined.describe()), base, fine);
    rep.components.insert("semigroup_defect".into(), defect);
    Ok(rep)
}

// ---------------------------------------------------------------------------------------
// Drift integrated against a space-time convolution

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BulkCase {
    /// v < t, q′(d/(αp) + β₁) > 1 and q′(d/(αp) + β₂) < 1.
    Singular,
    /// q′(d/(αp) + β₁) < 1 and q′(d/(αp) + β₂) < 1.
    Integrable,
}

impl fmt::Display for BulkCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BulkCase::Singular => "singular",
            BulkCase::Integrable => "integrable",
        })
    }
}

/// (q′(d/(αp) + β₁), q′(d/(αp) + β₂)).
pub fn bulk_regime(alpha: f64, drift: &DriftSpec, beta1: f64, beta2: f64) -> (f64, f64) {
    let a = drift.dim as f64 / alpha * drift.p.recip();
    let q_conj = 1.0 / (1.0 - drift.q.recip());
    (q_conj * (a + beta1), q_conj * (a + beta2))
}

fn check_bulk_regime(alpha: f64, drift: &DriftSpec, beta1: f64, beta2: f64, case: BulkCase) -> Result<()> {
    let (k1, k2) = bulk_regime(alpha, drift, beta1, beta2);
    let ok = match case {
        BulkCase::Singular => k1 > 1.0 && k2 < 1.0,
        BulkCase::Integrable => k1 < 1.0 && k2 < 1.0,
    };
    if !ok {
        return Err(precondition(format!(
            "exponents give q'(d/(alpha p)+beta1) = {k1:.4}, q'(d/(alpha p)+beta2) = {k2:.4}, which is not the {case} case"
        )));
    }
    Ok(())
}

fn drift_support(drift: &DriftSpec) -> Option<(f64, f64)> {
    match &drift.kind {
        DriftKind::Radial { radius, .. } => Some((-radius, *radius)),
        DriftKind::Tabulated { origin, spacing, values } => {
            Some((*origin, origin + spacing * (values.len().max(1) - 1) as f64))
        }
        _ => None,
    }
}

/// Distances from one end of a segment of length `len` and their weights.
///
/// A singular end uses d = len·s⁸ with mildly graded s, which absorbs (d)^{-e} for e up to
/// about 0.9; a smooth end gets six dyadic levels.
fn end_nodes(len: f64, singular: bool) -> Vec<(f64, f64)> {
    let r = quad::rule(8);
    if singular {
        let (ss, ws) = quad::graded_toward_left(0.0, 1.0, 20, &r);
        ss.iter().zip(&ws).map(|(&s, &w)| (len * s.powi(8), w * len * 8.0 * s.powi(7))).collect()
    } else {
        let (mut ds, mut ws) = quad::graded_toward_left(0.0, len, 6, &r);
        r.push_panel(0.0, len / 64.0, &mut ds, &mut ws);
        ds.into_iter().zip(ws).collect()
    }
}

/// Nodes (r, t − r, weight) on (u, v), with distances to each end computed without cancellation.
fn bulk_time_nodes(u: f64, v: f64, t: f64) -> Vec<(f64, f64, f64)> {
    let half = 0.5 * (v - u);
    let mut out: Vec<(f64, f64, f64)> =
        end_nodes(half, u == 0.0).into_iter().map(|(d, w)| (u + d, t - u - d, w)).collect();
    out.extend(end_nodes(half, v == t).into_iter().map(|(d, w)| (v - d, (t - v) + d, w)));
    out
}

/// ∫_u^v ∫ p(r, z−x) |b(r,z)| p(t−r, y−z) (t−r)^{−β₁} r^{−β₂} dz dr by quadrature (d = 1).
#[allow(clippy::too_many_arguments)]
pub fn bulk_lhs(alpha: f64, drift: &DriftSpec, beta1: f64, beta2: f64, u: f64, v: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    if drift.dim != 1 {
        return Err(Error::UnsupportedDimension(drift.dim));
    }
    if !(0.0 <= u && u < v && v <= t) {
        return Err(argument(format!("need 0 <= u < v <= t, got {u}, {v}, {t}")));
    }
    let table = KernelTable::get(alpha)?;
    let support = drift_support(drift);
    let kinks = drift.singular_points();
    let mut total = 0.0;
    for (r, rest, w) in bulk_time_nodes(u, v, t) {
        let (a, b) = (table.at(r), table.at(rest));
        let (wx, wy) = (r.powf(1.0 / alpha), rest.powf(1.0 / alpha));
        // z = c + d with c the centre of the narrower kernel, so that its scale stays resolvable
        let c = if wx <= wy { x } else { y };
        let centres = [(x - c, wx), (y - c, wy)];
        let shifted: Vec<f64> = kinks.iter().map(|k| k - c).collect();
        let f = |d: f64| a.pdf(d + (c - x)) * drift.eval1(r, c + d).map(f64::abs).unwrap_or(0.0) * b.pdf((y - c) - d);
        let inner = line_integral(f, &centres, &shifted, support.map(|(lo, hi)| (lo - c, hi - c)), 1e-7, 12)?;
        total += w * inner * rest.powf(-beta1) * r.powf(-beta2);
    }
    Ok(total)
}

/// Bound shape without the factor p(t, y−x).
#[allow(clippy::too_many_arguments)]
pub fn bulk_shape(alpha: f64, gamma: f64, case: BulkCase, beta1: f64, beta2: f64, u: f64, v: f64, t: f64) -> f64 {
    let e = (gamma + 1.0) / alpha;
    let main = (v - u).powf(e - (beta1 + beta2));
    match case {
        BulkCase::Integrable => main,
        BulkCase::Singular => main + (v - u).powf(-beta2) * (t - v).powf(e - beta1),
    }
}

fn bulk_configs(case: BulkCase, level: u32, scale: f64) -> Vec<(f64, f64, f64, f64, f64)> {
    let mut xs = vec![-1.5, 0.0, 0.5, 1.0];
    let mut ys = vec![-2.0, -0.5, 0.0, 0.5, 1.0, 3.0];
    if level > 0 {
        xs.extend([0.25, 2.0]);
        ys.extend([-1.0, 0.75]);
    }
    let ends: Vec<(f64, f64)> = match case {
        BulkCase::Integrable => vec![(0.0, 0.5), (0.0, 1.0), (0.25, 0.75), (0.25, 1.0)],
        BulkCase::Singular => vec![(0.0, 0.5), (0.0, 0.875), (0.25, 0.75), (0.25, 0.9375)],
    };
    let mut out = Vec::new();
    for t in [0.5 * scale, scale] {
        for &(fu, fv) in &ends {
            for &x in &xs {
                for &y in &ys {
                    out.push((fu * t, fv * t, t, x, y));
                }
            }
        }
    }
    out
}

/// Sup of the drift-weighted convolution over its bound shape p(t, y−x)·[…].
///
/// The exponent regime must match `case`; a mismatch is a precondition error rather than a
/// silently divergent integral.
pub fn check_convo_bulk(alpha: f64, drift: &DriftSpec, beta1: f64, beta2: f64, case: BulkCase, sweep: &Sweep) -> Result<CheckReport> {
    let gamma = drift.gap(alpha)?.gamma;
    check_bulk_regime(alpha, drift, beta1, beta2, case)?;
    let table = KernelTable::get(alpha)?;
    let probe = |&(u, v, t, x, y): &(f64, f64, f64, f64, f64)| -> Result<Probe> {
        let lhs = bulk_lhs(alpha, drift, beta1, beta2, u, v, t, x, y)?;
        let rhs = table.pdf(t, y - x) * bulk_shape(alpha, gamma, case, beta1, beta2, u, v, t);
        Ok(Probe::new(lhs / rhs, case.to_string(), vec![("u", u), ("v", v), ("t", t), ("x", x), ("y", y)]))
    };
    // the refined configurations contain the base ones, which are not recomputed
    let coarse = bulk_configs(case, sweep.level, sweep.scale);
    let mut probes: Vec<Probe> = coarse.par_iter().map(probe).collect::<Result<_>>()?;
    let base = reduce(&probes);
    let extra: Vec<_> = bulk_configs(case, sweep.level + 1, sweep.scale)
        .into_iter()
        .filter(|c| !coarse.contains(c))
        .collect();
    probes.extend(extra.par_iter().map(probe).collect::<Result<Vec<_>>>()?);
    let fine = reduce(&probes);
    let describe = |level: u32| {
        format!("{SWEEP_VERSION} level {level}: {} (u, v, t, x, y) points, {case} case", bulk_configs(case, level, sweep.scale).len())
    };
    let label = format!("convo-bulk-{case}");
    let mut rep = assemble("convo-bulk", &label, alpha, (describe(sweep.level), describe(sweep.level + 1)), base, fine);
    let (k1, k2) = bulk_regime(alpha, drift, beta1, beta2);
    rep.components.insert("regime_beta1".into(), k1);
    rep.components.insert("regime_beta2".into(), k2);
    rep.components.insert("gamma".into(), gamma);
    Ok(rep)
}

// ---------------------------------------------------------------------------------------
// The cutoff drift over one step

/// |∇^ζ p(u, y − shift)| u^{ζ/α} / p(u, y), for ζ ∈ {0, 1}.
pub fn cutoff_ratio(alpha: f64, u: f64, y: f64, shift: f64, zeta: usize) -> Result<f64> {
    let table = KernelTable::get(alpha)?;
    let sl = table.at(u);
    Ok(cutoff_ratio_at(&sl, alpha, u, y, shift, zeta))
}

fn cutoff_ratio_at(sl: &Slice<'_>, alpha: f64, u: f64, y: f64, shift: f64, zeta: usize) -> f64 {
    let p = sl.pdf(y);
    match zeta {
        0 => sl.pdf(y - shift) / p,
        _ => sl.grad(y - shift).abs() * u.powf(1.0 / alpha) / p,
    }
}

fn cutoff_steps(level: u32) -> Vec<f64> {
    let k = 1usize << level;
    (0..=4 * k).map(|j| 2f64.powf(-3.0 - j as f64 / k as f64)).collect()
}

/// Sup of |∇^ζ p(u, y − s·b_h(r,x))| u^{ζ/α} / p(u,y) over h < 1, s ≤ min(u,h), r, x, y.
///
/// `steps` are the step sizes h of the base sweep; the refined sweep inserts geometric midpoints.
pub fn check_cutoff_negligible(alpha: f64, drift: &DriftSpec, variant: Variant, big_b: f64, steps: &[f64], sweep: &Sweep) -> Result<CheckReport> {
    if drift.dim != 1 {
        return Err(Error::UnsupportedDimension(drift.dim));
    }
    if steps.is_empty() || steps.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
        return Err(precondition(format!("step sizes must lie in (0, 1), got {steps:?}")));
    }
    drift.gap(alpha)?;
    let table = KernelTable::get(alpha)?;
    let run = |hs: &[f64], sw: &Sweep| -> Result<Sup> {
        let mut xs: Vec<f64> = vec![1e-6, 1e-3, 0.05, 0.3, 0.9, 2.0];
        if sw.level > 0 {
            xs.extend([1e-4, 0.01, 0.15, 0.6, 0.99]);
        }
        let xs: Vec<f64> = xs.iter().flat_map(|&x| [x, -x]).collect();
        let mut configs = Vec::new();
        for &h in hs {
            let cut = cutoff(drift, variant, alpha, h, big_b)?;
            let mut us = vec![h / 4.0, h, 4.0 * h, 0.25, 1.0];
            if sw.level > 0 {
                us.extend([h / 2.0, 2.0 * h, 0.5]);
            }
            for &u in &us {
                let u = u * sw.scale;
                let smax = u.min(h);
                for s in [smax, 0.25 * smax] {
                    for r in [0.5 * h, h, 0.5, 1.0] {
                        for &x in &xs {
                            configs.push((h, u, s, r, x, cut.eval1(r, x)));
                        }
                    }
                }
            }
        }
        let xis = sw.scaled_points();
        let probes: Vec<Probe> = configs
            .par_iter()
            .map(|&(h, u, s, r, x, b)| {
                let sl = table.at(u);
                let scale = u.powf(1.0 / alpha);
                let mut v = Vec::with_capacity(4 * xis.len());
                for &xi in &xis {
                    for y in [xi * scale, -xi * scale] {
                        for zeta in 0..2 {
                            let val = cutoff_ratio_at(&sl, alpha, u, y, s * b, zeta);
                            v.push(Probe::new(
                                val,
                                format!("zeta{zeta}"),
                                vec![("h", h), ("u", u), ("s", s), ("r", r), ("x", x), ("y", y), ("drift", b)],
                            ));
                        }
                    }
                }
                v
            })
            .flatten()
            .collect();
        Ok(reduce(&probes))
    };
    let mut fine_steps: Vec<f64> = steps.to_vec();
    for w in steps.windows(2) {
        fine_steps.push((w[0] * w[1]).sqrt());
    }
    fine_steps.sort_by(f64::total_cmp);
    let refined = sweep.refined();
    let base = run(steps, sweep)?;
    let fine = run(&fine_steps, &refined)?;
    let label = format!("cutoff-{variant}");
    Ok(assemble(
        "cutoff",
        &label,
        alpha,
        (format!("h in {steps:?}; {}", sweep.describe()), format!("h in {fine_steps:?}; {}", refined.describe())),
        base,
        fine,
    ))
}

// ---------------------------------------------------------------------------------------
// Suites

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Suite {
    All,
    Derivatives,
    HolderSpace,
    HolderTime,
    Moments,
    Convolutions,
    ConvoBulk,
    Cutoff,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "all" => Suite::All,
            "derivatives" => Suite::Derivatives,
            "holder-space" => Suite::HolderSpace,
            "holder-time" => Suite::HolderTime,
            "moments" | "spatial-moments" => Suite::Moments,
            "convolutions" | "convolution" => Suite::Convolutions,
            "convo-bulk" => Suite::ConvoBulk,
            "cutoff" => Suite::Cutoff,
            other => {
                return Err(argument(format!(
                    "unknown suite '{other}'; expected all, derivatives, holder-space, holder-time, moments, convolutions, convo-bulk or cutoff"
                )))
            }
        })
    }
}

impl Suite {
    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

/// Radial drift used by the suite: p = 2/(α−1), q = ∞, β = 0.8/p, radius 1, so γ = (α−1)/2.
pub fn suite_drift(alpha: f64) -> Result<DriftSpec> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(crate::error::domain(format!("alpha = {alpha} outside (1, 2)")));
    }
    let p = 2.0 / (alpha - 1.0);
    DriftSpec::radial(1, 1.0, 0.8 / p, 0.0, 1.0, Exponent::finite(p)?, Exponent::Infinite)
}

/// (ℓ′, δ) pairs checked by the moments suite.
pub const SUITE_MOMENTS: [(Exponent, f64); 4] =
    [(Exponent::Finite(1.0), 0.0), (Exponent::Finite(1.0), 0.5), (Exponent::Finite(2.0), 0.5), (Exponent::Infinite, 1.0)];

/// Step sizes of the cutoff sweep.
pub fn suite_steps() -> Vec<f64> {
    cutoff_steps(0).into_iter().step_by(2).collect()
}

/// Runs the selected checks at the standard sweep.
pub fn run_suite(alpha: f64, suite: Suite) -> Result<Vec<CheckReport>> {
    let sweep = Sweep::standard();
    let mut out = Vec::new();
    if suite.includes(Suite::Derivatives) {
        out.push(check_derivative_bounds(alpha, &sweep)?);
    }
    if suite.includes(Suite::HolderSpace) {
        out.push(check_holder_space(alpha, &sweep)?);
    }
    if suite.includes(Suite::HolderTime) {
        out.push(check_holder_time(alpha, &sweep)?);
    }
    if suite.includes(Suite::Moments) {
        for (lp, delta) in SUITE_MOMENTS {
            out.push(check_spatial_moments(alpha, lp, delta, &sweep)?);
        }
    }
    if suite.includes(Suite::Convolutions) {
        out.push(check_convolutions(alpha, &sweep)?);
    }
    let drift = suite_drift(alpha)?;
    if suite.includes(Suite::ConvoBulk) {
        let gamma = drift.gap(alpha)?.gamma;
        out.push(check_convo_bulk(alpha, &drift, 1.0 / alpha, 0.0, BulkCase::Integrable, &sweep)?);
        out.push(check_convo_bulk(alpha, &drift, 1.0, gamma / alpha, BulkCase::Singular, &sweep)?);
    }
    if suite.includes(Suite::Cutoff) {
        for variant in [Variant::Standard, Variant::Bar] {
            out.push(check_cutoff_negligible(alpha, &drift, variant, 1.0, &suite_steps(), &sweep)?);
        }
    }
    Ok(out)
}

/// One `<label>.json` per report.
pub fn write_reports(reports: &[CheckReport], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in reports {
        crate::io::write_json(&dir.join(format!("{}.json", r.label)), r)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cauchy(u: f64, x: f64) -> f64 {
        u / (PI * (u * u + x * x))
    }

    #[test]
    fn sweep_levels_nest() {
        let a = Sweep::standard();
        let b = a.refined();
        for xi in a.scaled_points() {
            assert!(b.scaled_points().iter().any(|&y| (y - xi).abs() < 1e-9), "{xi}");
        }
        for u in a.times() {
            assert!(b.times().iter().any(|&v| (v / u - 1.0).abs() < 1e-12));
        }
        assert_eq!(a.scaled_points().last().copied(), Some(64.0));
        assert_eq!(a.rescaled(4.0).times()[0], 0.4);
    }

    #[test]
    fn cauchy_first_derivative_ratio_peaks_at_one() {
        let k = kernel_1d(1.0).unwrap();
        let sweep = Sweep::standard().with_times(vec![0.1, 1.0]).with_max_scaled(16.0);
        let sup = derivative_sup(&k, &sweep).unwrap();
        // |∂ₓp| u / p = 2|ξ|/(1+ξ²), maximal at ξ = 1
        assert!((sup.components["beta0_zeta1"] - 1.0).abs() < 1e-3, "{:?}", sup.components);
        // |∂ᵤp| u / p = |ξ²−1|/(1+ξ²) ≤ 1, attained at ξ = 0
        assert!((sup.components["beta1_zeta0"] - 1.0).abs() < 1e-3);
        assert!((sup.components["beta0_zeta0"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_vanishes_at_origin() {
        let k = kernel_1d(1.5).unwrap();
        let r = derivative_ratios(&k, 1.0, 0.0).unwrap();
        assert_eq!(r[0][1], 0.0);
        assert_eq!(r[1][1], 0.0);
    }

    #[test]
    fn derivative_bounds_finite_for_alpha_three_halves() {
        let sweep = Sweep::standard().with_times(vec![0.1, 1.0]).with_max_scaled(32.0);
        let rep = check_derivative_bounds(1.5, &sweep).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.constant > 1.0 && rep.constant < 10.0);
    }

    #[test]
    fn holder_space_diagonal_pairs_match_taylor_bound_for_cauchy() {
        let sweep = Sweep::standard().with_offsets(vec![1e-6]).with_thetas(vec![1.0]).with_times(vec![1.0]);
        let table = KernelTable::get(1.0).unwrap();
        let sup = holder_space_sup(&table, &sweep).unwrap();
        // |∂ₓp| u / (2p) = |ξ|/(1+ξ²) ≤ 1/2
        assert!((sup.components["theta1_zeta0"] - 0.5).abs() < 1e-3, "{:?}", sup.components);
    }

    #[test]
    fn coincident_points_give_zero_difference() {
        let table = KernelTable::get(1.5).unwrap();
        let sl = table.at(0.7);
        for zeta in 0..3 {
            for x in [0.0, 0.3, 5.0] {
                assert_eq!(zeta_value(&sl, zeta, x) - zeta_value(&table.at(0.7), zeta, x), 0.0);
            }
        }
    }

    #[test]
    fn holder_time_diagonal_pairs_match_closed_form_for_cauchy() {
        let sweep = Sweep::standard().with_offsets(vec![1e-6]).with_thetas(vec![1.0]).with_times(vec![0.5]);
        let table = KernelTable::get(1.0).unwrap();
        let sup = holder_time_sup(&table, &sweep).unwrap();
        // |∂ᵤp| u / (2p) = |ξ²−1| / (2(1+ξ²)) ≤ 1/2
        assert!((sup.components["theta1_zeta0"] - 0.5).abs() < 1e-3, "{:?}", sup.components);
        let p = cauchy(0.5, 0.3);
        assert!((table.pdf(0.5, 0.3) - p).abs() < 1e-15);
    }

    #[test]
    fn holder_checks_pass_for_alpha_one_point_eight() {
        let sweep = Sweep::standard();
        let rep = check_holder_space(1.8, &sweep).unwrap();
        assert!(rep.pass, "{}", rep.summary());
        let rep = check_holder_time(1.5, &sweep).unwrap();
        assert!(rep.pass, "{}", rep.summary());
    }

    fn small_sweep() -> Sweep {
        Sweep::standard().with_times(vec![0.3, 1.0, 3.0]).with_max_scaled(16.0).with_thetas(vec![0.5, 1.0])
    }

    fn scale_covariant_constants(alpha: f64, sweep: &Sweep) -> [f64; 4] {
        [
            check_derivative_bounds(alpha, sweep).unwrap().constant,
            check_holder_space(alpha, sweep).unwrap().constant,
            check_holder_time(alpha, sweep).unwrap().constant,
            check_spatial_moments(alpha, Exponent::Finite(2.0), 0.5, sweep).unwrap().constant,
        ]
    }

    #[test]
    fn constants_are_invariant_under_self_similar_rescaling() {
        for alpha in [1.2, 1.5, 1.8] {
            let base = scale_covariant_constants(alpha, &small_sweep());
            let scaled = scale_covariant_constants(alpha, &small_sweep().rescaled(4.0));
            for (a, b) in base.iter().zip(&scaled) {
                assert!((a / b - 1.0).abs() < 0.01, "alpha {alpha}: {base:?} vs {scaled:?}");
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(6))]
        #[test]
        fn rescaling_invariance_holds_for_any_factor(alpha in 1.1f64..1.9, log_lambda in -2.0f64..2.0) {
            let sweep = Sweep::standard().with_times(vec![1.0]).with_max_scaled(8.0).with_thetas(vec![0.5]);
            let base = scale_covariant_constants(alpha, &sweep);
            let scaled = scale_covariant_constants(alpha, &sweep.rescaled(log_lambda.exp()));
            for (a, b) in base.iter().zip(&scaled) {
                proptest::prop_assert!((a / b - 1.0).abs() < 0.01, "{:?} vs {:?}", base, scaled);
            }
        }
    }

    #[test]
    fn normalised_moment_is_one_for_cauchy() {
        for u in [0.1, 1.0, 10.0] {
            let n = moment_norm(1.0, u, Exponent::Finite(1.0), 0.0).unwrap();
            assert!((n - 1.0).abs() < 1e-9, "{u}: {n}");
        }
        let rep = check_spatial_moments(1.0, Exponent::Finite(1.0), 0.0, &Sweep::standard()).unwrap();
        assert!(rep.components["fitted_exponent"].abs() < 1e-9);
        assert!(rep.pass);
    }

    #[test]
    fn divergent_moment_is_rejected() {
        let e = check_spatial_moments(1.0, Exponent::Finite(1.0), 1.0, &Sweep::standard()).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)), "{e}");
    }

    #[test]
    fn moment_exponent_fit() {
        let rep = check_spatial_moments(1.5, Exponent::Finite(2.0), 0.5, &Sweep::standard()).unwrap();
        assert!(rep.components["fitted_exponent"].abs() < EXPONENT_TOLERANCE, "{:?}", rep.components);
        assert!(rep.pass);
    }

    #[test]
    fn cauchy_moment_sup_is_closed_form() {
        // sup_x |x| u/(π(u²+x²)) = 1/(2π) at |x| = u
        let n = moment_norm(1.0, 1.0, Exponent::Infinite, 1.0).unwrap();
        assert!((n - 0.5 / PI).abs() < 1e-12, "{n}");
    }

    #[test]
    fn semigroup_identity_through_product_norm() {
        // Cauchy, x = y, midpoint: ∫ p(1/2, z) p(1/2, −z) dz = p(1, 0) = 1/π
        let n = product_norm(1.0, 0.0, 0.5, 1.0, 0.0, 0.0, Exponent::Finite(1.0)).unwrap();
        assert!((n - 1.0 / PI).abs() < 1e-10, "{n}");
        let w = weighted_convolution(1.0, TestFunction::One, 0.0, 0.5, 1.0, 0.3, -0.7).unwrap();
        assert!((w - cauchy(1.0, 1.0)).abs() < 1e-10, "{w}");
        let n2 = product_norm(1.5, 0.0, 0.25, 1.0, 0.4, -1.0, Exponent::Finite(1.0)).unwrap();
        let t = KernelTable::get(1.5).unwrap();
        assert!((n2 / t.pdf(1.0, 1.4) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn test_function_norms() {
        assert_eq!(TestFunction::One.norm(Exponent::Finite(2.0)), None);
        assert_eq!(TestFunction::Power.norm(Exponent::Finite(5.0)), None);
        let (zs, ws) = quad::composite(0.0, 6.0, 12, &quad::rule(16));
        let direct: f64 = 2.0 * zs.iter().zip(&ws).map(|(z, w)| w * (-2.0 * z * z).exp()).sum::<f64>();
        assert!((TestFunction::Gaussian.norm(Exponent::Finite(2.0)).unwrap() - direct.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn constant_drift_bulk_is_time_length_times_heat_kernel() {
        let b = DriftSpec::constant(vec![1.0]);
        let t = KernelTable::get(1.5).unwrap();
        let lhs = bulk_lhs(1.5, &b, 0.0, 0.0, 0.2, 0.7, 1.0, 0.3, -0.4).unwrap();
        let want = 0.5 * t.pdf(1.0, 0.7);
        assert!((lhs / want - 1.0).abs() < 1e-8, "{lhs} {want}");
        let lhs0 = bulk_lhs(1.5, &b, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!((lhs0 / t.pdf(1.0, 0.0) - 1.0).abs() < 1e-6, "{lhs0}");
        let gamma = b.gap(1.5).unwrap().gamma;
        let shape = bulk_shape(1.5, gamma, BulkCase::Integrable, 0.0, 0.0, 0.2, 0.7, 1.0);
        assert!((shape - 0.5).abs() < 1e-12);
    }

    #[test]
    fn regime_mismatch_is_rejected() {
        let drift = suite_drift(1.5).unwrap();
        let e = check_convo_bulk(1.5, &drift, 1.0, 0.0, BulkCase::Integrable, &Sweep::standard()).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)), "{e}");
        let e = check_convo_bulk(1.5, &drift, 0.0, 0.0, BulkCase::Singular, &Sweep::standard()).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)), "{e}");
    }

    #[test]
    fn cutoff_ratio_is_one_without_displacement() {
        for y in [-3.0, 0.0, 0.4, 12.0] {
            assert_eq!(cutoff_ratio(1.5, 0.3, y, 0.0, 0).unwrap(), 1.0);
        }
        let r = cutoff_ratio(1.5, 0.3, 0.4, 1e-9, 0).unwrap();
        assert!((r - 1.0).abs() < 1e-7);
    }

    #[test]
    fn cutoff_requires_small_steps() {
        let drift = suite_drift(1.5).unwrap();
        let e = check_cutoff_negligible(1.5, &drift, Variant::Standard, 1.0, &[0.5, 1.0], &Sweep::standard()).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)));
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("holder-space".parse::<Suite>().unwrap(), Suite::HolderSpace);
        assert!("holder".parse::<Suite>().is_err());
        assert!((suite_drift(1.5).unwrap().gap(1.5).unwrap().gamma - 0.25).abs() < 1e-12);
    }
}
