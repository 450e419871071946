//! Fast one-dimensional kernel evaluation by self-similar table lookup.
//!
//! p(t, x) = t^{−1/α} p₁(x t^{−1/α}). The unit-time profile p₁ and its first three
//! derivatives are computed by quadrature on a uniform grid over [0, 40] and interpolated
//! with quintic Hermite polynomials, and so is the distribution function. Past the grid the large-x expansion
//!
//! p₁(x) ~ (1/π) Σ_{k≥1} (−1)^{k+1} Γ(αk+1)/k! sin(παk/2) x^{−αk−1}
//!
//! takes over. α = 1 and α = 2 use closed forms.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

use crate::error::{domain, Result};
use crate::quad;

const XMAX: f64 = 40.0;
const CELLS_PER_UNIT: usize = 32;
const SERIES_TERMS: usize = 16;

#[derive(Debug)]
enum Backend {
    Cauchy,
    Gauss,
    Table(Table),
}

#[derive(Debug)]
struct Table {
    dx: f64,
    p: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
    // F(x) − 1/2 at the nodes
    half_cdf: Vec<f64>,
    // coefficients of x^{−αk−1} in p₁
    coef: Vec<f64>,
    alpha: f64,
}

/// Cached unit-time profile for one α.
#[derive(Debug)]
pub struct KernelTable {
    alpha: f64,
    backend: Backend,
}

impl KernelTable {
    /// Shared table for `alpha` ∈ [1, 2]; built on first use.
    pub fn get(alpha: f64) -> Result<Arc<KernelTable>> {
        if !(1.0..=2.0).contains(&alpha) {
            return Err(domain(format!("alpha = {alpha} outside [1, 2]")));
        }
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<KernelTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().unwrap().get(&alpha.to_bits()) {
            return Ok(t.clone());
        }
        let built = Arc::new(Self::build(alpha));
        let mut g = cache.lock().unwrap();
        Ok(g.entry(alpha.to_bits()).or_insert(built).clone())
    }

    fn build(alpha: f64) -> KernelTable {
        let backend = if alpha == 1.0 {
            Backend::Cauchy
        } else if alpha == 2.0 {
            Backend::Gauss
        } else {
            Backend::Table(Table::build(alpha))
        };
        KernelTable { alpha, backend }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Unit-time profile and derivatives (p₁, p₁', p₁'').
    pub fn unit(&self, x: f64) -> (f64, f64, f64) {
        match &self.backend {
            Backend::Cauchy => {
                let q = 1.0 + x * x;
                (1.0 / (PI * q), -2.0 * x / (PI * q * q), (6.0 * x * x - 2.0) / (PI * q * q * q))
            }
            Backend::Gauss => {
                let p = (-0.25 * x * x).exp() / (4.0 * PI).sqrt();
                (p, -0.5 * x * p, (0.25 * x * x - 0.5) * p)
            }
            Backend::Table(t) => t.eval(x),
        }
    }

    pub fn unit_pdf(&self, x: f64) -> f64 {
        match &self.backend {
            Backend::Table(t) => t.pdf(x),
            _ => self.unit(x).0,
        }
    }

    pub fn unit_grad(&self, x: f64) -> f64 {
        match &self.backend {
            Backend::Table(t) => t.grad(x),
            _ => self.unit(x).1,
        }
    }

    pub fn unit_cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.unit_sf(-x);
        }
        match &self.backend {
            Backend::Cauchy => 0.5 + x.atan() / PI,
            Backend::Gauss => 1.0 - 0.5 * erfc(0.5 * x),
            Backend::Table(t) => 0.5 + t.half_cdf(x),
        }
    }

    /// 1 − F₁(x), accurate in the far tail.
    pub fn unit_sf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.unit_cdf(-x);
        }
        match &self.backend {
            Backend::Cauchy => (1.0 / x).atan() / PI,
            Backend::Gauss => 0.5 * erfc(0.5 * x),
            Backend::Table(t) => {
                if x >= XMAX {
                    t.series_sf(x)
                } else {
                    0.5 - t.half_cdf(x)
                }
            }
        }
    }

    /// Evaluator at a fixed time.
    pub fn at(&self, t: f64) -> Slice<'_> {
        let s = t.powf(1.0 / self.alpha);
        Slice { table: self, t, inv: 1.0 / s }
    }

    pub fn pdf(&self, t: f64, x: f64) -> f64 {
        self.at(t).pdf(x)
    }

    pub fn grad(&self, t: f64, x: f64) -> f64 {
        self.at(t).grad(x)
    }

    pub fn cdf(&self, t: f64, x: f64) -> f64 {
        self.at(t).cdf(x)
    }
}

/// The kernel at one time t, x ↦ p(t, x) and friends.
#[derive(Debug, Clone, Copy)]
pub struct Slice<'a> {
    table: &'a KernelTable,
    pub t: f64,
    inv: f64,
}

impl Slice<'_> {
    pub fn pdf(&self, x: f64) -> f64 {
        self.inv * self.table.unit_pdf(x * self.inv)
    }

    pub fn grad(&self, x: f64) -> f64 {
        self.inv * self.inv * self.table.unit_grad(x * self.inv)
    }

    pub fn second(&self, x: f64) -> f64 {
        self.inv.powi(3) * self.table.unit(x * self.inv).2
    }

    /// ∂_t p(t, x) = −(1/(αt)) (p + x ∂_x p).
    pub fn time_derivative(&self, x: f64) -> f64 {
        let xi = x * self.inv;
        let (p, d, _) = self.table.unit(xi);
        -self.inv * (p + xi * d) / (self.table.alpha * self.t)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.table.unit_cdf(x * self.inv)
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.table.unit_sf(x * self.inv)
    }

    /// Mass in [a, b].
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if a >= 0.0 {
            self.sf(a) - self.sf(b)
        } else if b <= 0.0 {
            self.cdf(b) - self.cdf(a)
        } else {
            1.0 - self.cdf(a) - self.sf(b)
        }
    }
}

impl Table {
    fn build(alpha: f64) -> Table {
        let n = (XMAX as usize) * CELLS_PER_UNIT;
        let dx = 1.0 / CELLS_PER_UNIT as f64;
        let vals: Vec<[f64; 5]> =
            (0..=n).into_par_iter().map(|j| unit_derivs(alpha, j as f64 * dx)).collect();
        let p: Vec<f64> = vals.iter().map(|v| v[0]).collect();
        let d1: Vec<f64> = vals.iter().map(|v| v[1]).collect();
        let d2: Vec<f64> = vals.iter().map(|v| v[2]).collect();
        let d3: Vec<f64> = vals.iter().map(|v| v[3]).collect();
        let half_cdf: Vec<f64> = vals.iter().map(|v| v[4]).collect();
        let coef = (1..=SERIES_TERMS)
            .map(|k| {
                let k = k as f64;
                let sign = if (k as usize) % 2 == 1 { 1.0 } else { -1.0 };
                sign * gamma(alpha * k + 1.0) / gamma(k + 1.0) * (PI * alpha * k / 2.0).sin() / PI
            })
            .collect();
        Table { dx, p, d1, d2, d3, half_cdf, coef, alpha }
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let s = x / self.dx;
        let j = (s as usize).min(self.p.len() - 2);
        (j, s - j as f64)
    }

    fn pdf(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax >= XMAX {
            return self.series(ax, 0);
        }
        let (j, u) = self.locate(ax);
        quintic(self.dx, u, [self.p[j], self.d1[j], self.d2[j]], [
            self.p[j + 1],
            self.d1[j + 1],
            self.d2[j + 1],
        ])
    }

    fn grad(&self, x: f64) -> f64 {
        let ax = x.abs();
        let g = if ax >= XMAX {
            self.series(ax, 1)
        } else {
            let (j, u) = self.locate(ax);
            quintic(self.dx, u, [self.d1[j], self.d2[j], self.d3[j]], [
                self.d1[j + 1],
                self.d2[j + 1],
                self.d3[j + 1],
            ])
        };
        if x < 0.0 {
            -g
        } else {
            g
        }
    }

    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let ax = x.abs();
        let (p, g, s) = if ax >= XMAX {
            (self.series(ax, 0), self.series(ax, 1), self.series(ax, 2))
        } else {
            let (j, u) = self.locate(ax);
            let p = quintic(self.dx, u, [self.p[j], self.d1[j], self.d2[j]], [
                self.p[j + 1],
                self.d1[j + 1],
                self.d2[j + 1],
            ]);
            let g = quintic(self.dx, u, [self.d1[j], self.d2[j], self.d3[j]], [
                self.d1[j + 1],
                self.d2[j + 1],
                self.d3[j + 1],
            ]);
            let s = cubic(self.dx, u, [self.d2[j], self.d3[j]], [self.d2[j + 1], self.d3[j + 1]]);
            (p, g, s)
        };
        (p, if x < 0.0 { -g } else { g }, s)
    }

    fn half_cdf(&self, x: f64) -> f64 {
        if x >= XMAX {
            return 0.5 - self.series_sf(x);
        }
        let (j, u) = self.locate(x);
        quintic(self.dx, u, [self.half_cdf[j], self.p[j], self.d1[j]], [
            self.half_cdf[j + 1],
            self.p[j + 1],
            self.d1[j + 1],
        ])
    }

    // order-th derivative of the tail expansion
    fn series(&self, x: f64, order: u32) -> f64 {
        let a = self.alpha;
        let lx = x.ln();
        let mut s = 0.0;
        for (k, c) in self.coef.iter().enumerate() {
            let e = -(a * (k + 1) as f64) - 1.0;
            let mut fac = 1.0;
            for m in 0..order {
                fac *= e - m as f64;
            }
            s += c * fac * ((e - order as f64) * lx).exp();
        }
        s
    }

    fn series_sf(&self, x: f64) -> f64 {
        let a = self.alpha;
        let lx = x.ln();
        self.coef
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let e = a * (k + 1) as f64;
                c / e * (-e * lx).exp()
            })
            .sum()
    }
}

fn quintic(h: f64, t: f64, l: [f64; 3], r: [f64; 3]) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
    l[0] * h00 + h * l[1] * h10 + h * h * l[2] * h20 + r[0] * h01 + h * r[1] * h11 + h * h * r[2] * h21
}

fn cubic(h: f64, t: f64, l: [f64; 2], r: [f64; 2]) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    l[0] * (2.0 * t3 - 3.0 * t2 + 1.0)
        + h * l[1] * (t3 - 2.0 * t2 + t)
        + r[0] * (-2.0 * t3 + 3.0 * t2)
        + h * r[1] * (t3 - t2)
}

/// (p₁, p₁', p₁'', p₁''', F₁ − 1/2) at x by the inversion integrals.
fn unit_derivs(alpha: f64, x: f64) -> [f64; 5] {
    let umax = 50f64.powf(1.0 / alpha) * 1.5;
    let mut width = 0.5f64;
    if x > 0.0 {
        width = width.min(PI / (2.0 * x));
    }
    let panels = (umax / width).ceil() as usize;
    let width = umax / panels as f64;
    let rule = quad::rule(16);
    let (mut xs, mut ws) = quad::graded_toward_left(0.0, width, 50, &quad::rule(8));
    for k in 1..panels {
        rule.push_panel(k as f64 * width, (k + 1) as f64 * width, &mut xs, &mut ws);
    }
    let mut acc = [0.0; 5];
    for (u, w) in xs.iter().zip(&ws) {
        let e = (-u.powf(alpha)).exp() * w;
        let (s, c) = (u * x).sin_cos();
        acc[0] += e * c;
        acc[1] -= e * u * s;
        acc[2] -= e * u * u * c;
        acc[3] += e * u * u * u * s;
        acc[4] += e * s / u;
    }
    acc.map(|v| v / PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable_kernel::{KernelQuery, StableKernel, StableParams};

    #[test]
    fn matches_quadrature_density() {
        for a in [1.2, 1.5, 1.8] {
            let tab = KernelTable::get(a).unwrap();
            let ker = StableKernel::new(StableParams::new(a, 1).unwrap());
            for &t in &[0.05, 1.0, 3.0] {
                for i in 0..60 {
                    let x = -7.3 + 0.37 * i as f64;
                    let want = ker.density(&KernelQuery::scalar(t, x)).unwrap();
                    let got = tab.pdf(t, x);
                    assert!((got - want).abs() < 1e-11 * (1.0 + want), "a={a} t={t} x={x}");
                    let gw = ker.grad_density(&KernelQuery::scalar(t, x)).unwrap()[0];
                    let gg = tab.grad(t, x);
                    assert!((gg - gw).abs() < 1e-9 * (1.0 + gw.abs()), "grad a={a} t={t} x={x}");
                }
            }
        }
    }

    #[test]
    fn cdf_matches_quadrature_and_series_joins() {
        for a in [1.2, 1.5, 1.8] {
            let tab = KernelTable::get(a).unwrap();
            let ker = StableKernel::new(StableParams::new(a, 1).unwrap());
            for x in [-30.0, -3.0, -0.4, 0.0, 0.7, 5.5, 39.0] {
                let want = ker.cdf(1.0, x).unwrap();
                assert!((tab.unit_cdf(x) - want).abs() < 1e-11, "a={a} x={x}");
            }
            let lo = tab.unit_sf(XMAX - 1e-9);
            let hi = tab.unit_sf(XMAX + 1e-9);
            assert!((lo - hi).abs() < 1e-12, "a={a} {lo} {hi}");
            let plo = tab.unit_pdf(XMAX - 1e-9);
            let phi = tab.unit_pdf(XMAX + 1e-9);
            assert!((plo - phi).abs() < 1e-13, "a={a} {plo} {phi}");
        }
    }

    #[test]
    fn closed_form_backends() {
        let c = KernelTable::get(1.0).unwrap();
        assert!((c.pdf(2.0, 1.0) - 2.0 / (PI * 5.0)).abs() < 1e-15);
        assert!((c.cdf(1.0, 1.0) - 0.75).abs() < 1e-15);
        let g = KernelTable::get(2.0).unwrap();
        assert!((g.pdf(1.0, 0.0) - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        assert!((g.cdf(0.5, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn self_similarity_and_time_derivative() {
        let tab = KernelTable::get(1.5).unwrap();
        let t: f64 = 0.37;
        let s = t.powf(1.0 / 1.5);
        for x in [-2.0, 0.0, 0.3, 4.0] {
            assert!((tab.pdf(t, x) - tab.pdf(1.0, x / s) / s).abs() < 1e-13);
            let e = 1e-5;
            let fd = (tab.pdf(t + e, x) - tab.pdf(t - e, x)) / (2.0 * e);
            assert!((tab.at(t).time_derivative(x) - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn mass_by_cells() {
        let tab = KernelTable::get(1.5).unwrap();
        let s = tab.at(0.8);
        let tot = s.mass(-1e15, -3.0) + s.mass(-3.0, 2.0) + s.mass(2.0, 1e15);
        assert!((tot - 1.0).abs() < 1e-10);
    }
}
