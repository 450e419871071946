//! Deterministic densities in d = 1: the limit density by Picard iteration on the
//! Duhamel identity Γ = p_α − ∫∫ Γ b ∂p_α, and the scheme density by exact chaining
//! of one-step transitions.
//!
//! Discretization of the Duhamel integral. Γ(r, ·) b(r, ·) is expanded in lattice hat
//! functions, so the space integral against ∂_y p_α(u, y − z) reduces to second
//! differences of the CDF. In time Γ is piecewise linear between the nodes s_l = lτ;
//! each tent is integrated exactly against the kernel on graded Gauss panels, which
//! absorbs the (t − r)^{−1/α} singularity. On the first panel, where Γ(r) is close to
//! the free kernel and is not piecewise linear, the free part is integrated directly
//! with hat moments of p_α(r, · − x₀) b(r, ·) at each quadrature time.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::density_mc::{DensityGrid, Lattice, UNDERFLOW};
use crate::drift::{CutoffDrift, DriftSpec};
use crate::error::{argument, Error, Result};
use crate::euler::{simulate_paths, Scheme, SchemeConfig};
use crate::io;
use crate::kernel_table::{KernelTable, Slice};
use crate::quad;

type C64 = Complex<f64>;

/// Time panels and space lattice for the Duhamel solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceTimeGrid {
    pub x0: f64,
    /// Lattice x₀ + jΔ for |j| ≤ J, J = round(half_width / Δ).
    pub half_width: f64,
    pub spacing: f64,
    pub horizon: f64,
    /// Number M of uniform time panels; outputs at s_i = iT/M.
    pub panels: usize,
    /// Dyadic levels toward r = 0 on the first half panel.
    pub early_levels: usize,
    /// Dyadic levels toward the output time on panels next to it.
    pub tent_levels: usize,
}

impl SpaceTimeGrid {
    pub fn new(x0: f64, half_width: f64, spacing: f64, horizon: f64, panels: usize) -> Result<SpaceTimeGrid> {
        let g = SpaceTimeGrid { x0, half_width, spacing, horizon, panels, early_levels: 30, tent_levels: 25 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(argument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.panels == 0 {
            return Err(argument("at least one time panel"));
        }
        if !(self.spacing > 0.0) || !(self.half_width >= self.spacing) {
            return Err(argument("need 0 < spacing <= half width"));
        }
        if !self.x0.is_finite() {
            return Err(argument("x0 must be finite"));
        }
        Ok(())
    }

    pub fn half_count(&self) -> usize {
        (self.half_width / self.spacing).round() as usize
    }

    pub fn lattice(&self) -> Lattice {
        let j = self.half_count();
        Lattice::new(vec![self.x0 - j as f64 * self.spacing], vec![self.spacing], vec![2 * j + 1])
            .expect("validated grid")
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.panels as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.panels).map(|i| i as f64 * self.step()).collect()
    }
}

/// Densities at a sequence of times with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuhamelSolution {
    pub x0: f64,
    pub slices: Vec<DensityGrid>,
    pub iterations: usize,
    /// Last weighted sup difference of successive iterates (0 for exact chaining).
    pub residual: f64,
    pub history: Vec<f64>,
    pub clamped: usize,
}

impl DuhamelSolution {
    pub fn times(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &DensityGrid {
        self.slices.last().expect("at least one slice")
    }

    /// Slice whose time is within 1e-9 of t.
    pub fn at_time(&self, t: f64) -> Option<&DensityGrid> {
        self.slices.iter().find(|s| (s.time - t).abs() <= 1e-9 * t.max(1.0))
    }

    /// One CSV per time slice plus manifest.json.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (i, s) in self.slices.iter().enumerate() {
            let name = format!("slice_{:04}.csv", i + 1);
            s.write_csv(&dir.join(&name))?;
            files.push(serde_json::json!({
                "file": name,
                "time": s.time,
                "mass": s.mass,
                "tail_mass": s.tail_mass,
                "clamped": s.clamped,
            }));
        }
        let manifest = serde_json::json!({
            "x0": self.x0,
            "iterations": self.iterations,
            "residual": self.residual,
            "history": self.history,
            "clamped": self.clamped,
            "lattice": self.slices.first().map(|s| &s.lattice),
            "slices": files,
        });
        io::write_json(&dir.join("manifest.json"), &manifest)
    }
}

/// Centred CDF F(u, x) − 1/2 on x = iΔ, i = 0..=count.
fn centred_cdf(s: &Slice, dx: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| 0.5 - s.sf(i as f64 * dx)).collect()
}

/// ∫ hat_k(z) ∂_y p(u, y − z) dz on offsets y − y_k = mΔ, m = −2J..2J.
fn hat_gradient_kernel(table: &KernelTable, u: f64, dx: f64, j: usize) -> Vec<f64> {
    let s = table.at(u);
    let fc = centred_cdf(&s, dx, 2 * j + 1);
    let at = |m: isize| if m >= 0 { fc[m as usize] } else { -fc[(-m) as usize] };
    let mut k = vec![0.0; 4 * j + 1];
    for m in 0..=(2 * j) as isize {
        let v = (at(m + 1) - 2.0 * at(m) + at(m - 1)) / dx;
        k[(m + 2 * j as isize) as usize] = v;
        k[(2 * j as isize - m) as usize] = -v;
    }
    k
}

/// Valid-mode convolution of length-(2J+1) signals with length-(4J+1) kernels by FFT.
struct Convolver {
    j: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Convolver {
    fn new(j: usize) -> Convolver {
        let len = (4 * j + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Convolver { j, len, fwd: planner.plan_fft_forward(len), inv: planner.plan_fft_inverse(len) }
    }

    fn spectrum(&self, v: &[f64]) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.len];
        for (b, x) in buf.iter_mut().zip(v) {
            b.re = *x;
        }
        self.fwd.process(&mut buf);
        buf
    }

    /// Σ_k g_k K(y_i − y_k) from the product spectrum.
    fn valid(&self, mut spec: Vec<C64>) -> Vec<f64> {
        self.inv.process(&mut spec);
        let scale = 1.0 / self.len as f64;
        (0..=2 * self.j).map(|i| spec[i + 2 * self.j].re * scale).collect()
    }
}

fn add_product(acc: &mut [C64], a: &[C64], b: &[C64], w: f64) {
    for ((o, x), y) in acc.iter_mut().zip(a).zip(b) {
        *o += x * y * w;
    }
}

/// Quadrature nodes on the lattice range with each node's cell and position inside it.
struct HatQuadrature {
    nodes: Vec<(f64, f64, usize, f64)>,
    n: usize,
}

impl HatQuadrature {
    /// Panels between lattice points, refined dyadically around each special point.
    fn new(lattice: &Lattice, special: &[f64]) -> HatQuadrature {
        let dx = lattice.spacing[0];
        let n = lattice.counts[0];
        let lo = lattice.coord(0, 0);
        let hi = lattice.coord(0, n - 1);
        let mut brk: Vec<f64> = lattice.points_1d();
        for &c in special {
            for e in 0..=60 {
                let off = 2.0 * dx * 0.5f64.powi(e);
                brk.extend([c - off, c + off]);
            }
            brk.push(c);
        }
        brk.retain(|v| *v >= lo && *v <= hi);
        brk.sort_by(f64::total_cmp);
        brk.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
        let rule = quad::rule(6);
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for w in brk.windows(2) {
            rule.push_panel(w[0], w[1], &mut xs, &mut ws);
        }
        let nodes = xs
            .into_iter()
            .zip(ws)
            .map(|(z, w)| {
                let s = (z - lo) / dx;
                let k = (s.floor().max(0.0) as usize).min(n - 2);
                (z, w, k, s - k as f64)
            })
            .collect();
        HatQuadrature { nodes, n }
    }

    /// ∫ hat_k f for every lattice index k.
    fn moments<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut mu = vec![0.0; self.n];
        for &(z, w, k, t) in &self.nodes {
            let v = f(z) * w;
            mu[k] += v * (1.0 - t);
            mu[k + 1] += v * t;
        }
        mu
    }
}

fn drift_value(b: &DriftSpec, t: f64, z: f64) -> f64 {
    b.eval1(t, z).unwrap_or(0.0)
}

/// Picard solver for Γ(0, x₀, s_i, ·) on the grid.
pub fn solve_diffusion_duhamel(
    alpha: f64,
    drift: &DriftSpec,
    grid: &SpaceTimeGrid,
    max_iterations: usize,
    tolerance: f64,
) -> Result<DuhamelSolution> {
    grid.validate()?;
    if drift.dim != 1 {
        return Err(Error::UnsupportedDimension(drift.dim));
    }
    drift.validate()?;
    let gap = drift.gap(alpha)?;
    if !(gap.gamma > 0.0) {
        return Err(Error::Supercritical { gamma: gap.gamma });
    }
    if max_iterations == 0 || !(tolerance > 0.0) {
        return Err(argument("need max_iterations >= 1 and tolerance > 0"));
    }
    let table = KernelTable::get(alpha)?;
    let lattice = grid.lattice();
    let ys = lattice.points_1d();
    let (x0, dx, j) = (grid.x0, grid.spacing, grid.half_count());
    let n = ys.len();
    let m = grid.panels;
    let tau = grid.step();
    let times = grid.times();

    let free: Vec<Vec<f64>> = times
        .iter()
        .map(|&s| {
            let sl = table.at(s);
            ys.iter().map(|y| sl.pdf(y - x0)).collect()
        })
        .collect();

    let finish = |values: Vec<Vec<f64>>, iterations: usize, history: Vec<f64>| -> Result<DuhamelSolution> {
        let mut clamped = 0;
        let mut slices = Vec::with_capacity(m);
        for (vals, &s) in values.into_iter().zip(&times) {
            let mut g = DensityGrid::new(lattice.clone(), vals, s)?;
            crate::density_mc::clamp_negative(&mut g);
            clamped += g.clamped;
            let sl = table.at(s);
            g.tail_mass = Some(sl.cdf(ys[0] - x0) + sl.sf(ys[n - 1] - x0));
            slices.push(g);
        }
        let residual = history.last().copied().unwrap_or(0.0);
        Ok(DuhamelSolution { x0, slices, iterations, residual, history, clamped })
    };

    if drift.is_zero() {
        return finish(free, 1, vec![0.0]);
    }

    let conv = Convolver::new(j);
    let mut special = drift.singular_points();
    special.push(x0);
    let hats = HatQuadrature::new(&lattice, &special);
    let projected = |t: f64| -> Vec<f64> { hats.moments(|z| drift_value(drift, t, z)).iter().map(|v| v / dx).collect() };
    let bbar: Vec<Vec<f64>> = if drift.is_time_dependent() {
        times.par_iter().map(|&s| projected(s)).collect()
    } else {
        vec![projected(times[0]); m]
    };

    let r8 = quad::rule(8);
    // tent(u − mτ) against the kernel, u ≥ 0
    let tent_nodes = |mm: usize| -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut push = |a: f64, b: f64, graded: bool, rising: bool| {
            let (us, ws) = if graded { quad::graded_toward_left(a, b, grid.tent_levels, &r8) } else { quad::composite(a, b, 1, &r8) };
            for (u, w) in us.into_iter().zip(ws) {
                let wt = if rising { (u - a) / tau } else { (b - u) / tau };
                out.push((u, w * wt));
            }
        };
        if mm >= 1 {
            push((mm - 1) as f64 * tau, mm as f64 * tau, mm == 1, true);
        }
        push(mm as f64 * tau, (mm + 1) as f64 * tau, mm == 0, false);
        out
    };
    // falling half of the first tent seen from output i: u ∈ [(i−1)τ, iτ], weight (iτ − u)/τ
    let right_nodes = |i: usize| -> Vec<(f64, f64)> {
        let (a, b) = ((i - 1) as f64 * tau, i as f64 * tau);
        let (us, ws) = if i == 1 { quad::graded_toward_left(a, b, grid.tent_levels, &r8) } else { quad::composite(a, b, 1, &r8) };
        us.into_iter().zip(ws).map(|(u, w)| (u, w * (b - u) / tau)).collect()
    };
    let kernel_spectrum = |nodes: Vec<(f64, f64)>| -> Vec<C64> {
        let mut k = vec![0.0; 4 * j + 1];
        for (u, w) in nodes {
            for (o, v) in k.iter_mut().zip(hat_gradient_kernel(&table, u, dx, j)) {
                *o += w * v;
            }
        }
        conv.spectrum(&k)
    };
    let tents: Vec<Vec<C64>> = (0..m).into_par_iter().map(|mm| kernel_spectrum(tent_nodes(mm))).collect();
    let rights: Vec<Vec<C64>> = (1..=m).into_par_iter().map(|i| kernel_spectrum(right_nodes(i))).collect();
    // tent of node 1 minus its first-panel half
    let left_rest: Vec<Vec<C64>> = (1..=m)
        .map(|i| {
            if i < 2 {
                Vec::new()
            } else {
                tents[i - 1].iter().zip(&rights[i - 1]).map(|(a, b)| a - b).collect()
            }
        })
        .collect();

    // free part on the first panel: r ∈ [0, τ/2] graded toward 0, r ∈ [τ/2, τ] graded toward τ
    // for the first output and plain Gauss for later ones
    let (early_r, early_w) = quad::graded_toward_left(0.0, 0.5 * tau, grid.early_levels, &r8);
    let (late_r, late_w) = quad::graded_toward_right(0.5 * tau, tau, grid.tent_levels, &r8);
    let (plain_r, plain_w) = quad::composite(0.5 * tau, tau, 1, &r8);
    let mut first_panel: Vec<(f64, f64, bool, bool)> = Vec::new();
    first_panel.extend(early_r.iter().zip(&early_w).map(|(r, w)| (*r, *w, true, true)));
    first_panel.extend(late_r.iter().zip(&late_w).map(|(r, w)| (*r, *w, true, false)));
    first_panel.extend(plain_r.iter().zip(&plain_w).map(|(r, w)| (*r, *w, false, true)));
    let mut forcing: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); conv.len]; m];
    for &(r, w, for_first, for_rest) in &first_panel {
        let sl = table.at(r);
        let mu = hats.moments(|z| sl.pdf(z - x0) * drift_value(drift, r, z));
        let c: Vec<f64> = mu.iter().map(|v| v / dx).collect();
        let cs = conv.spectrum(&c);
        forcing.par_iter_mut().enumerate().for_each(|(idx, acc)| {
            let i = idx + 1;
            if (i == 1 && for_first) || (i >= 2 && for_rest) {
                let ks = conv.spectrum(&hat_gradient_kernel(&table, times[idx] - r, dx, j));
                add_product(acc, &cs, &ks, w);
            }
        });
    }

    let mut current = free.clone();
    let mut history = Vec::new();
    for it in 0..max_iterations {
        let g_spec: Vec<Vec<C64>> = (0..m)
            .into_par_iter()
            .map(|l| conv.spectrum(&current[l].iter().zip(&bbar[l]).map(|(g, b)| g * b).collect::<Vec<_>>()))
            .collect();
        let corr: Vec<f64> = current[0].iter().zip(&free[0]).zip(&bbar[0]).map(|((g, p), b)| (g - p) * b).collect();
        let corr_spec = conv.spectrum(&corr);
        let next: Vec<Vec<f64>> = (1..=m)
            .into_par_iter()
            .map(|i| {
                let mut acc = forcing[i - 1].clone();
                add_product(&mut acc, &corr_spec, &rights[i - 1], 1.0);
                for l in 2..=i {
                    add_product(&mut acc, &g_spec[l - 1], &tents[i - l], 1.0);
                }
                if i >= 2 {
                    add_product(&mut acc, &g_spec[0], &left_rest[i - 1], 1.0);
                }
                let integral = conv.valid(acc);
                free[i - 1].iter().zip(integral).map(|(p, v)| p - v).collect()
            })
            .collect();
        let mut res: f64 = 0.0;
        for ((a, b), p) in next.iter().zip(&current).zip(&free) {
            for ((x, y), q) in a.iter().zip(b).zip(p) {
                if *q >= UNDERFLOW {
                    res = res.max((x - y).abs() / q);
                }
            }
        }
        history.push(res);
        current = next;
        if !res.is_finite() {
            return Err(Error::Divergence { history });
        }
        if res < tolerance {
            return finish(current, it + 1, history);
        }
    }
    Err(Error::Divergence { history })
}

/// Midpoints of m_r equal subintervals of [τ, τ + h].
fn time_nodes(step_start: f64, h: f64, m_r: usize) -> impl Iterator<Item = f64> {
    (0..m_r).map(move |r| step_start + (r as f64 + 0.5) * h / m_r as f64)
}

fn check_mr(h: f64, m_r: usize) -> Result<()> {
    if !(h > 0.0) {
        return Err(argument(format!("h must be positive, got {h}")));
    }
    if m_r == 0 {
        return Err(argument("need at least one time node"));
    }
    Ok(())
}

/// One-step density (1/h) ∫_τ^{τ+h} p_α(h, y − z − h b_h(r, z)) dr by the midpoint rule.
pub fn scheme_transition_kernel(
    z: f64,
    y: f64,
    step_start: f64,
    h: f64,
    drift_h: &CutoffDrift,
    alpha: f64,
    m_r: usize,
) -> Result<f64> {
    check_mr(h, m_r)?;
    let table = KernelTable::get(alpha)?;
    let s = table.at(h);
    Ok(time_nodes(step_start, h, m_r).map(|r| s.pdf(y - z - h * drift_h.eval1(r, z))).sum::<f64>() / m_r as f64)
}

/// The same kernel averaged over the cell [y − Δ/2, y + Δ/2].
#[allow(clippy::too_many_arguments)]
pub fn scheme_transition_cell(
    z: f64,
    y: f64,
    spacing: f64,
    step_start: f64,
    h: f64,
    drift_h: &CutoffDrift,
    alpha: f64,
    m_r: usize,
) -> Result<f64> {
    check_mr(h, m_r)?;
    let table = KernelTable::get(alpha)?;
    let s = table.at(h);
    let a = y - 0.5 * spacing;
    Ok(time_nodes(step_start, h, m_r)
        .map(|r| {
            let c = z + h * drift_h.eval1(r, z);
            s.mass(a - c, a + spacing - c)
        })
        .sum::<f64>()
        / (m_r as f64 * spacing))
}

/// Mass allowed to leave the lattice before the chaining gives up.
pub const LEAK_LIMIT: f64 = 0.01;

/// Time nodes per step used for time-dependent drifts.
pub const DEFAULT_TIME_NODES: usize = 16;

/// Γ^h(0, x₀, t_k, ·) for k = 1..n by chaining cell-averaged transitions.
pub fn solve_scheme_density(config: &SchemeConfig, drift: &DriftSpec, lattice: &Lattice) -> Result<DuhamelSolution> {
    let m_r = if drift.is_time_dependent() { DEFAULT_TIME_NODES } else { 1 };
    solve_scheme_density_with(config, drift, lattice, m_r)
}

pub fn solve_scheme_density_with(
    config: &SchemeConfig,
    drift: &DriftSpec,
    lattice: &Lattice,
    m_r: usize,
) -> Result<DuhamelSolution> {
    if config.dim() != 1 {
        return Err(Error::UnsupportedDimension(config.dim()));
    }
    if lattice.dim() != 1 {
        return Err(argument("scheme densities use a 1-d lattice"));
    }
    let scheme = Scheme::new(config, drift)?;
    let h = config.h();
    check_mr(h, m_r)?;
    let table = KernelTable::get(config.alpha())?;
    let sl = table.at(h);
    let dx = lattice.spacing[0];
    let ys = lattice.points_1d();
    let n = ys.len();
    let x0 = config.x0[0];
    let cut = &scheme.drift;
    let moving = drift.is_time_dependent();

    // cell masses of the transition from each lattice point at step k, row-major [target][source]
    let build = |k: usize| -> Vec<f64> {
        let start = k as f64 * h;
        let shifts: Vec<Vec<f64>> =
            ys.iter().map(|&z| time_nodes(start, h, m_r).map(|r| z + h * cut.eval1(r, z)).collect()).collect();
        let mut mat = vec![0.0; n * n];
        mat.par_chunks_mut(n).enumerate().for_each(|(t, row)| {
            let a = ys[t] - 0.5 * dx;
            for (o, cs) in row.iter_mut().zip(&shifts) {
                *o = cs.iter().map(|c| sl.mass(a - c, a + dx - c)).sum::<f64>() / m_r as f64;
            }
        });
        mat
    };

    let mut current: Vec<f64> = ys
        .iter()
        .map(|&y| {
            let a = y - 0.5 * dx;
            time_nodes(0.0, h, m_r)
                .map(|r| {
                    let c = x0 + h * cut.eval1(r, x0);
                    sl.mass(a - c, a + dx - c)
                })
                .sum::<f64>()
                / (m_r as f64 * dx)
        })
        .collect();
    let mut slices = Vec::with_capacity(config.steps);
    let mut push = |vals: &Vec<f64>, k: usize| -> Result<f64> {
        let mut g = DensityGrid::new(lattice.clone(), vals.clone(), k as f64 * h)?;
        g.tail_mass = Some(1.0 - g.mass);
        let leaked = 1.0 - g.mass;
        slices.push(g);
        Ok(leaked)
    };
    let leak_check = |leaked: f64| -> Result<()> {
        if leaked > LEAK_LIMIT {
            Err(Error::LatticeExtent { leaked, limit: LEAK_LIMIT })
        } else {
            Ok(())
        }
    };
    leak_check(push(&current, 1)?)?;
    let mut mat = if config.steps > 1 && !moving { build(1) } else { Vec::new() };
    for k in 1..config.steps {
        if moving {
            mat = build(k);
        }
        let next: Vec<f64> = mat.par_chunks(n).map(|row| row.iter().zip(&current).map(|(k, g)| k * g).sum::<f64>()).collect();
        current = next;
        leak_check(push(&current, k + 1)?)?;
    }
    Ok(DuhamelSolution { x0, slices, iterations: config.steps, residual: 0.0, history: Vec::new(), clamped: 0 })
}

/// Sup residual of the scheme's Duhamel identity with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeResidual {
    pub residual: f64,
    pub standard_error: f64,
    pub at: f64,
    pub paths: usize,
}

/// Compare Γ^h(t_k, ·) with p_α(t_k, · − x₀) − Σ_j E[p_α(t_k − t_j, y − X_j) − p_α(t_k − t_j, y − X_j − h b_j)],
/// the time integral over each step done exactly after conditioning on X_j and U_j.
pub fn duhamel_residual_scheme(grid: &DensityGrid, config: &SchemeConfig, drift: &DriftSpec, paths: usize) -> Result<SchemeResidual> {
    if config.dim() != 1 || grid.lattice.dim() != 1 {
        return Err(Error::UnsupportedDimension(config.dim().max(grid.lattice.dim())));
    }
    if paths < 2 {
        return Err(argument("need at least 2 paths"));
    }
    let h = config.h();
    let k = (grid.time / h).round() as usize;
    if k == 0 || k > config.steps || (k as f64 * h - grid.time).abs() > 1e-9 * grid.time.max(1.0) {
        return Err(argument(format!("grid time {} is not a scheme node", grid.time)));
    }
    let scheme = Scheme::new(config, drift)?;
    let table = KernelTable::get(config.alpha())?;
    let ys = grid.lattice.points_1d();
    let n = ys.len();
    let x0 = config.x0[0];
    let traj = simulate_paths(config, drift, paths)?;
    let slices: Vec<Slice> = (0..k).map(|jj| table.at((k - jj) as f64 * h)).collect();
    const CHUNK: usize = 256;
    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s1 = vec![0.0; n];
            let mut s2 = vec![0.0; n];
            let mut v = vec![0.0; n];
            for p in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                v.iter_mut().for_each(|x| *x = 0.0);
                for (jj, sl) in slices.iter().enumerate() {
                    let x = traj.at(p, jj)[0];
                    let u = config.sampler.sample_uniform_on_step(p as u64, jj as u64, h).unwrap_or(0.0);
                    let b = scheme.drift.eval1(u, x);
                    if b == 0.0 {
                        continue;
                    }
                    for (o, y) in v.iter_mut().zip(&ys) {
                        *o += sl.pdf(y - x) - sl.pdf(y - x - h * b);
                    }
                }
                for ((a, b), x) in s1.iter_mut().zip(s2.iter_mut()).zip(&v) {
                    *a += x;
                    *b += x * x;
                }
            }
            (s1, s2)
        })
        .collect();
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    for (a, b) in parts {
        for i in 0..n {
            s1[i] += a[i];
            s2[i] += b[i];
        }
    }
    let pf = paths as f64;
    let free = table.at(grid.time);
    let mut out = SchemeResidual { residual: 0.0, standard_error: 0.0, at: ys[0], paths };
    for i in 0..n {
        let mean = s1[i] / pf;
        let var = ((s2[i] / pf - mean * mean) * pf / (pf - 1.0)).max(0.0);
        let r = (grid.values[i] - (free.pdf(ys[i] - x0) - mean)).abs();
        if r > out.residual {
            out.residual = r;
            out.at = ys[i];
            out.standard_error = (var / pf).sqrt();
        }
    }
    Ok(out)
}
