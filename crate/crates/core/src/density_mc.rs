//! Densities on lattices: Monte Carlo KDE, heat-kernel ratios and the spatial Hölder statistic.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{argument, Error, Result};
use crate::euler::MarginalSample;
use crate::io::{self, num};
use crate::kernel_table::KernelTable;
use crate::stable_kernel::{KernelQuery, StableKernel, StableParams};

/// Regular lattice in d = 1 or 2, points origin + i·spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Lattice {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, counts: Vec<usize>) -> Result<Lattice> {
        let d = origin.len();
        if !(d == 1 || d == 2) || spacing.len() != d || counts.len() != d {
            return Err(argument("lattices are 1- or 2-dimensional with matching origin/spacing/counts"));
        }
        if spacing.iter().any(|s| !(*s > 0.0)) {
            return Err(argument("lattice spacing must be positive"));
        }
        if counts.contains(&0) {
            return Err(argument("lattice counts must be positive"));
        }
        Ok(Lattice { origin, spacing, counts })
    }

    /// 2J+1 points center + jΔ, J = round(half_width/Δ).
    pub fn symmetric(center: f64, half_width: f64, spacing: f64) -> Result<Lattice> {
        if !(spacing > 0.0 && half_width > 0.0) {
            return Err(argument("half width and spacing must be positive"));
        }
        let j = (half_width / spacing).round() as usize;
        Lattice::new(vec![center - j as f64 * spacing], vec![spacing], vec![2 * j + 1])
    }

    /// Default extent ±8 t^{1/α} around x₀.
    pub fn default_for(x0: f64, t: f64, alpha: f64, spacing: f64) -> Result<Lattice> {
        Lattice::symmetric(x0, 8.0 * t.powf(1.0 / alpha), spacing)
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    /// Flat index → point; axis 0 varies slowest.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        if self.dim() == 1 {
            vec![self.coord(0, idx)]
        } else {
            let n1 = self.counts[1];
            vec![self.coord(0, idx / n1), self.coord(1, idx % n1)]
        }
    }

    pub fn points_1d(&self) -> Vec<f64> {
        (0..self.counts[0]).map(|i| self.coord(0, i)).collect()
    }

    /// Smallest full width over axes.
    pub fn extent(&self) -> f64 {
        (0..self.dim())
            .map(|a| (self.counts[a] - 1) as f64 * self.spacing[a])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn same_as(&self, other: &Lattice) -> bool {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        self.counts == other.counts && close(&self.origin, &other.origin) && close(&self.spacing, &other.spacing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub time: f64,
    pub mass: f64,
    /// Mass outside the lattice, when known.
    pub tail_mass: Option<f64>,
    pub bandwidth: Option<f64>,
    /// Negative quadrature artefacts set to zero.
    pub clamped: usize,
}

impl DensityGrid {
    pub fn new(lattice: Lattice, values: Vec<f64>, time: f64) -> Result<DensityGrid> {
        if values.len() != lattice.len() {
            return Err(argument(format!("{} values for a lattice of {}", values.len(), lattice.len())));
        }
        let mass = values.iter().sum::<f64>() * lattice.cell_volume();
        Ok(DensityGrid { lattice, values, time, mass, tail_mass: None, bandwidth: None, clamped: 0 })
    }

    /// p_α(t, · − x₀) sampled on a 1-d lattice.
    pub fn from_kernel(table: &KernelTable, lattice: Lattice, t: f64, x0: f64) -> Result<DensityGrid> {
        let s = table.at(t);
        let values = lattice.points_1d().iter().map(|y| s.pdf(y - x0)).collect();
        let mut g = DensityGrid::new(lattice, values, t)?;
        let lo = g.lattice.coord(0, 0) - x0;
        let hi = g.lattice.coord(0, g.lattice.counts[0] - 1) - x0;
        g.tail_mass = Some(s.cdf(lo) + s.sf(hi));
        Ok(g)
    }

    fn recompute_mass(&mut self) {
        self.mass = self.values.iter().sum::<f64>() * self.lattice.cell_volume();
    }

    /// CSV of lattice coordinates and values.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = io::create(path)?;
        if self.lattice.dim() == 1 {
            writeln!(w, "y,value")?;
        } else {
            writeln!(w, "y_1,y_2,value")?;
        }
        for (i, v) in self.values.iter().enumerate() {
            for c in self.lattice.point(i) {
                write!(w, "{},", num(c))?;
            }
            writeln!(w, "{}", num(*v))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "time": self.time,
            "mass": self.mass,
            "tail_mass": self.tail_mass,
            "bandwidth": self.bandwidth,
            "clamped": self.clamped,
            "lattice": self.lattice,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.metadata())
    }
}

/// How the KDE bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Fixed(f64),
    /// 1.06 σ̂ N^{−1/5} clipped to [h^{1/α}/4, extent/8], σ̂ = IQR/1.349.
    Rule { step: f64, alpha: f64 },
}

pub const RULE_CONSTANT: f64 = 1.06;

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let x = p * (v.len() - 1) as f64;
    let i = x.floor() as usize;
    let f = x - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - f) + v[i + 1] * f
    } else {
        v[i]
    }
}

/// Interquartile scale of a sample (IQR / 1.349).
pub fn robust_scale(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)) / 1.349
}

pub fn rule_bandwidth(sample: &MarginalSample, lattice: &Lattice, step: f64, alpha: f64) -> f64 {
    let n = sample.count() as f64;
    let sigma = (0..sample.dim).map(|j| robust_scale(&sample.column(j))).sum::<f64>() / sample.dim as f64;
    let raw = RULE_CONSTANT * sigma * n.powf(-0.2);
    let lo = step.powf(1.0 / alpha) / 4.0;
    let hi = lattice.extent() / 8.0;
    raw.max(lo).min(hi.max(lo))
}

const KDE_CHUNK: usize = 4096;

/// Gaussian KDE integrated over lattice cells, so mass + tail mass = 1 up to rounding.
pub fn kde_estimate(sample: &MarginalSample, lattice: &Lattice, bandwidth: Bandwidth) -> Result<DensityGrid> {
    if sample.count() == 0 {
        return Err(argument("empty sample"));
    }
    if sample.count() < 100 {
        return Err(Error::Precondition(format!("KDE needs at least 100 samples, got {}", sample.count())));
    }
    if sample.dim != lattice.dim() {
        return Err(argument("sample and lattice dimensions differ"));
    }
    let bw = match bandwidth {
        Bandwidth::Fixed(b) => b,
        Bandwidth::Rule { step, alpha } => rule_bandwidth(sample, lattice, step, alpha),
    };
    if !(bw > 0.0) {
        return Err(argument(format!("bandwidth must be positive, got {bw}")));
    }
    let n = sample.count();
    let d = sample.dim;
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(KDE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; lattice.len()];
            let mut w0 = Vec::new();
            let mut w1 = Vec::new();
            for i in c * KDE_CHUNK..((c + 1) * KDE_CHUNK).min(n) {
                let x = sample.row(i);
                let r0 = cell_weights(lattice, 0, x[0], bw, &mut w0);
                if d == 1 {
                    for (k, w) in w0.iter().enumerate() {
                        acc[r0 + k] += w;
                    }
                } else {
                    let r1 = cell_weights(lattice, 1, x[1], bw, &mut w1);
                    let n1 = lattice.counts[1];
                    for (a, wa) in w0.iter().enumerate() {
                        for (b, wb) in w1.iter().enumerate() {
                            acc[(r0 + a) * n1 + r1 + b] += wa * wb;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let total = pairwise_sum(chunks);
    let scale = 1.0 / (n as f64 * lattice.cell_volume());
    let values: Vec<f64> = total.iter().map(|v| v * scale).collect();
    let mut g = DensityGrid::new(lattice.clone(), values, sample.time)?;
    g.tail_mass = Some(1.0 - g.mass);
    g.bandwidth = Some(bw);
    Ok(g)
}

/// Fixed-order tree reduction of equally sized vectors.
fn pairwise_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Gaussian mass of each lattice cell on one axis within 9 bandwidths of x; returns the first index.
fn cell_weights(l: &Lattice, axis: usize, x: f64, bw: f64, out: &mut Vec<f64>) -> usize {
    out.clear();
    let (o, dx, m) = (l.origin[axis], l.spacing[axis], l.counts[axis]);
    let lo = (((x - 9.0 * bw - o) / dx).floor().max(0.0) as usize).min(m);
    let hi = (((x + 9.0 * bw - o) / dx).ceil().max(0.0) as usize).min(m.saturating_sub(1));
    if lo > hi || lo >= m {
        return 0;
    }
    let mut prev = phi((o + (lo as f64 - 0.5) * dx - x) / bw);
    for k in lo..=hi {
        let next = phi((o + (k as f64 + 0.5) * dx - x) / bw);
        out.push(next - prev);
        prev = next;
    }
    lo
}

/// Convolve a 1-d grid with the same cell-integrated Gaussian kernel the KDE uses.
pub fn smooth_like_kde(grid: &DensityGrid, bw: f64) -> Result<DensityGrid> {
    if grid.lattice.dim() != 1 {
        return Err(Error::UnsupportedDimension(grid.lattice.dim()));
    }
    let l = &grid.lattice;
    let dx = l.spacing[0];
    let m = l.counts[0];
    let reach = (9.0 * bw / dx).ceil() as isize + 1;
    // weight of a point mass at offset kΔ landing in the cell centred at 0
    let w: Vec<f64> = (-reach..=reach)
        .map(|k| {
            let c = -(k as f64) * dx;
            phi((c + 0.5 * dx) / bw) - phi((c - 0.5 * dx) / bw)
        })
        .collect();
    let values: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut s = 0.0;
            for (i, wk) in w.iter().enumerate() {
                let src = j as isize + i as isize - reach;
                if src >= 0 && (src as usize) < m {
                    s += grid.values[src as usize] * wk;
                }
            }
            s
        })
        .collect();
    let mut g = DensityGrid::new(l.clone(), values, grid.time)?;
    g.bandwidth = Some(bw);
    Ok(g)
}

/// Supremum with the lattice point attaining it and the count of excluded points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupStat {
    pub value: f64,
    pub at: Vec<f64>,
    pub excluded: usize,
}

/// Points where the reference density falls below this are skipped.
pub const UNDERFLOW: f64 = 1e-12;

fn reference_values(grid: &DensityGrid, alpha: f64, x0: &[f64]) -> Result<Vec<f64>> {
    if !(grid.time > 0.0) {
        return Err(argument("grid time must be positive"));
    }
    let l = &grid.lattice;
    if x0.len() != l.dim() {
        return Err(argument("x0 and lattice dimensions differ"));
    }
    if l.dim() == 1 {
        let tab = KernelTable::get(alpha)?;
        let s = tab.at(grid.time);
        Ok(l.points_1d().iter().map(|y| s.pdf(y - x0[0])).collect())
    } else {
        let ker = StableKernel::new(StableParams::new(alpha, 2)?);
        (0..l.len())
            .into_par_iter()
            .map(|i| {
                let y = l.point(i);
                ker.density(&KernelQuery::new(grid.time, vec![y[0] - x0[0], y[1] - x0[1]]))
            })
            .collect()
    }
}

/// sup over the lattice of grid / p_α(t, y − x₀).
pub fn heat_kernel_ratio(grid: &DensityGrid, alpha: f64, x0: &[f64]) -> Result<SupStat> {
    let p = reference_values(grid, alpha, x0)?;
    let mut best = SupStat { value: 0.0, at: grid.lattice.point(0), excluded: 0 };
    for (i, (g, r)) in grid.values.iter().zip(&p).enumerate() {
        if *r < UNDERFLOW {
            best.excluded += 1;
            continue;
        }
        let v = g / r;
        if v > best.value {
            best.value = v;
            best.at = grid.lattice.point(i);
        }
    }
    Ok(best)
}

/// Hölder statistic and the attaining pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderStat {
    pub value: f64,
    pub pair: (Vec<f64>, Vec<f64>),
    pub excluded: usize,
}

/// sup over lattice pairs of |Γ(y) − Γ(y')| t^{γ/α} / [(|y−y'|^γ ∧ t^{γ/α}) (p(t,y−x₀) + p(t,y'−x₀))].
pub fn holder_space_statistic(grid: &DensityGrid, alpha: f64, x0: &[f64], gamma: f64) -> Result<HolderStat> {
    if !(gamma > 0.0) {
        return Err(argument(format!("gamma must be positive, got {gamma}")));
    }
    let p = reference_values(grid, alpha, x0)?;
    let l = &grid.lattice;
    let n = l.len();
    let tg = grid.time.powf(gamma / alpha);
    let pts: Vec<Vec<f64>> = (0..n).map(|i| l.point(i)).collect();
    let excluded = p.iter().filter(|v| **v < UNDERFLOW).count();
    let rows: Vec<(f64, usize, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0, i, i);
            if p[i] < UNDERFLOW {
                return best;
            }
            for j in (i + 1)..n {
                if p[j] < UNDERFLOW {
                    continue;
                }
                let dist = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let shape = dist.powf(gamma).min(tg) / tg * (p[i] + p[j]);
                let v = (grid.values[i] - grid.values[j]).abs() / shape;
                if v > best.0 {
                    best = (v, i, j);
                }
            }
            best
        })
        .collect();
    let best = rows.into_iter().fold((0.0, 0, 0), |a, b| if b.0 > a.0 { b } else { a });
    Ok(HolderStat { value: best.0, pair: (pts[best.1].clone(), pts[best.2].clone()), excluded })
}

/// Zero out negative values, counting them.
pub fn clamp_negative(grid: &mut DensityGrid) {
    let mut c = 0;
    for v in grid.values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            c += 1;
        }
    }
    grid.clamped += c;
    grid.recompute_mass();
}
