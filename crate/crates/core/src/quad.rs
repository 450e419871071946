//! Gauss–Legendre rules, graded panels and adaptive integrators.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Nodes by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Rule {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Rule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + r * x);
        }
        s * r
    }

    /// Push mapped nodes and weights for [a, b].
    pub fn push_panel(&self, a: f64, b: f64, xs: &mut Vec<f64>, ws: &mut Vec<f64>) {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            xs.push(c + r * x);
            ws.push(r * w);
        }
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached rule of order `n`.
pub fn rule(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = cache.lock().unwrap();
    g.entry(n).or_insert_with(|| Arc::new(Rule::new(n))).clone()
}

/// Nodes on [a, b] with dyadic panels shrinking toward `a`, down to width (b-a)·2^-levels.
/// The leftover sliver [a, a + (b-a)2^-levels] is skipped.
pub fn graded_toward_left(a: f64, b: f64, levels: usize, r: &Rule) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(levels * r.len());
    let mut ws = Vec::with_capacity(levels * r.len());
    let w = b - a;
    let mut hi = b;
    for m in 0..levels {
        let lo = a + w * 0.5f64.powi(m as i32 + 1);
        r.push_panel(lo, hi, &mut xs, &mut ws);
        hi = lo;
    }
    (xs, ws)
}

/// Same as [`graded_toward_left`] but grading toward `b`.
pub fn graded_toward_right(a: f64, b: f64, levels: usize, r: &Rule) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = graded_toward_left(0.0, b - a, levels, r);
    (xs.into_iter().map(|x| b - x).collect(), ws)
}

/// Uniform panels of a rule on [a, b].
pub fn composite(a: f64, b: f64, panels: usize, r: &Rule) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(panels * r.len());
    let mut ws = Vec::with_capacity(panels * r.len());
    let h = (b - a) / panels as f64;
    for k in 0..panels {
        r.push_panel(a + k as f64 * h, a + (k + 1) as f64 * h, &mut xs, &mut ws);
    }
    (xs, ws)
}

/// Globally adaptive bisection with a 15-point rule, comparing each panel against its halves.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<f64> {
    let r = rule(15);
    let mut stack = vec![(a, b, r.integrate(a, b, &mut f), 0usize)];
    let mut total = 0.0;
    let mut panels = 0usize;
    let min_width = (b - a).abs() * 1e-14;
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = r.integrate(lo, mid, &mut f);
        let right = r.integrate(mid, hi, &mut f);
        let err = (left + right - whole).abs();
        let share = abs_tol * (hi - lo).abs() / (b - a).abs();
        panels += 1;
        if err <= share.max(1e-300) || (hi - lo).abs() < min_width || depth > 60 {
            total += left + right;
        } else {
            if panels > max_panels {
                return Err(Error::Numeric(format!(
                    "adaptive quadrature exceeded {max_panels} panels on [{a}, {b}]"
                )));
            }
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(total)
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive bisection: the panel with the largest error estimate is split first,
/// until the summed estimate is below max(abs_tol, rel_tol·|I|).
///
/// Panels too narrow to split, or whose estimate is at rounding level, are frozen and their
/// estimate no longer counts against the budget.
pub fn adaptive_global<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<f64> {
    adaptive_pieces(f, &[a, b], abs_tol, rel_tol, max_panels)
}

/// [`adaptive_global`] over consecutive segments of sorted `breakpoints`, sharing one budget.
pub fn adaptive_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<f64> {
    let r = rule(15);
    let eval = |lo: f64, hi: f64, f: &mut F| -> Panel {
        let mid = 0.5 * (lo + hi);
        let whole = r.integrate(lo, hi, &mut *f);
        let value = r.integrate(lo, mid, &mut *f) + r.integrate(mid, hi, &mut *f);
        Panel { lo, hi, value, err: (value - whole).abs() }
    };
    let mut heap = std::collections::BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    for w in breakpoints.windows(2) {
        let p = eval(w[0], w[1], &mut f);
        total += p.value;
        err += p.err;
        heap.push(p);
    }
    let mut frozen = 0.0;
    let mut panels = heap.len();
    while err - frozen > abs_tol.max(rel_tol * total.abs()) {
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.lo + p.hi);
        let unsplittable = mid <= p.lo || mid >= p.hi || (p.hi - p.lo) <= 1e-15 * p.lo.abs().max(p.hi.abs());
        if unsplittable || p.err <= 64.0 * f64::EPSILON * p.value.abs() {
            frozen += p.err;
            continue;
        }
        if panels >= max_panels {
            return Err(Error::Numeric(format!(
                "adaptive quadrature on [{}, {}] reached {max_panels} panels with error estimate {err:e}",
                breakpoints[0],
                breakpoints[breakpoints.len() - 1]
            )));
        }
        let (left, right) = (eval(p.lo, mid, &mut f), eval(mid, p.hi, &mut f));
        total += left.value + right.value - p.value;
        err += left.err + right.err - p.err;
        heap.push(left);
        heap.push(right);
        panels += 1;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        for n in [1, 2, 5, 8, 16, 32] {
            let r = Rule::new(n);
            for k in 0..(2 * n) {
                let got = r.integrate(0.0, 1.0, |x| x.powi(k as i32));
                assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k} got={got}");
            }
        }
    }

    #[test]
    fn weights_sum_to_two() {
        let r = rule(16);
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn graded_handles_endpoint_singularity() {
        let r = rule(8);
        let (xs, ws) = graded_toward_left(0.0, 1.0, 60, &r);
        let s: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powf(-0.5)).sum();
        assert!((s - 2.0).abs() < 1e-8, "{s}");
        let (xs, ws) = graded_toward_right(0.0, 1.0, 40, &r);
        let s: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (1.0 - x).powf(-0.5)).sum();
        assert!((s - 2.0).abs() < 1e-5, "{s}");
    }

    #[test]
    fn adaptive_matches_closed_form() {
        let v = adaptive(|x| (x * 30.0).cos() * (-x).exp(), 0.0, 5.0, 1e-12, 10_000).unwrap();
        let exact = {
            // integral of e^{-x} cos(30x) on [0,5]
            let k = 30.0f64;
            let e = (-5.0f64).exp();
            (1.0 - e * ((k * 5.0).cos() - k * (k * 5.0).sin())) / (1.0 + k * k)
        };
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
    }
    #[test]
    fn global_adaptive_handles_a_near_singular_tail() {
        // ∫₀¹ (1 + 10⁸(1 − x))^{−5/2} dx, steep at x = 1
        let c: f64 = 1e8;
        let exact = (1.0 - (1.0 + c).powf(-1.5)) / (1.5 * c);
        let got = adaptive_global(|x| (1.0 + c * (1.0 - x)).powf(-2.5), 0.0, 1.0, 0.0, 1e-12, 10_000).unwrap();
        assert!((got / exact - 1.0).abs() < 1e-11, "{got} {exact}");
        let sing = adaptive_global(|x: f64| x.powf(-0.2), 0.0, 1.0, 0.0, 1e-10, 10_000).unwrap();
        assert!((sing - 1.25).abs() < 1e-9, "{sing}");
    }
}
