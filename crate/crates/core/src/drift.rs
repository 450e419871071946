//! Drifts in L^q([0,T], L^p(ℝ^d)), the gap γ and the two step-size cutoffs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Error, Result};

/// A Lebesgue exponent in [1, ∞].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn finite(v: f64) -> Result<Self> {
        if v.is_infinite() && v > 0.0 {
            return Ok(Exponent::Infinite);
        }
        if !(v >= 1.0) {
            return Err(domain(format!("exponent {v} outside [1, inf]")));
        }
        Ok(Exponent::Finite(v))
    }

    /// 1/p with 1/∞ = 0.
    pub fn recip(self) -> f64 {
        match self {
            Exponent::Finite(v) => 1.0 / v,
            Exponent::Infinite => 0.0,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinite)
    }
}

impl FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinite),
            v => Exponent::finite(v.parse::<f64>().map_err(|_| argument(format!("bad exponent '{s}'")))?),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(v) => write!(f, "{v}"),
            Exponent::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    pub alpha: f64,
    pub dim: usize,
    pub p: Exponent,
    pub q: Exponent,
    pub gamma: f64,
}

/// γ = α − 1 − (d/p + α/q); an error unless γ > 0.
pub fn serrin_gap(alpha: f64, dim: usize, p: Exponent, q: Exponent) -> Result<GapParams> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(domain(format!("alpha = {alpha} outside (1, 2)")));
    }
    let gamma = alpha - 1.0 - (dim as f64 * p.recip() + alpha * q.recip());
    if gamma <= 0.0 {
        return Err(Error::Supercritical { gamma });
    }
    Ok(GapParams { alpha, dim, p, q, gamma })
}

/// Built-in drift fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriftKind {
    Zero,
    /// b ≡ c.
    Constant { c: Vec<f64> },
    /// b(t, x) = c · x · exp(−|x|²/(2 R²)) / R, bounded and smooth.
    Smooth { c: f64, radius: f64 },
    /// b(t, x) = c t^{−δ} x/|x|^{β+1} on 0 < |x| ≤ R, zero elsewhere.
    Radial { c: f64, beta: f64, delta: f64, radius: f64 },
    /// One-dimensional field given at equispaced nodes, linear in between, zero outside.
    Tabulated { origin: f64, spacing: f64, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    pub dim: usize,
    pub p: Exponent,
    pub q: Exponent,
    pub norm_bound: Option<f64>,
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        DriftSpec { kind: DriftKind::Zero, dim, p: Exponent::Infinite, q: Exponent::Infinite, norm_bound: None }
    }

    pub fn constant(c: Vec<f64>) -> Self {
        let dim = c.len();
        DriftSpec { kind: DriftKind::Constant { c }, dim, p: Exponent::Infinite, q: Exponent::Infinite, norm_bound: None }
    }

    /// Built-in singular field, validated against the declared exponents:
    /// L^p in space needs βp < d, L^q in time needs δq < 1.
    pub fn radial(dim: usize, c: f64, beta: f64, delta: f64, radius: f64, p: Exponent, q: Exponent) -> Result<Self> {
        let spec = DriftSpec { kind: DriftKind::Radial { c, beta, delta, radius }, dim, p, q, norm_bound: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn smooth(dim: usize, c: f64, radius: f64, p: Exponent, q: Exponent) -> Result<Self> {
        let spec = DriftSpec { kind: DriftKind::Smooth { c, radius }, dim, p, q, norm_bound: None };
        spec.validate()?;
        Ok(spec)
    }

    /// Tabulated 1-d field from a two-column CSV `x,b` with equispaced x.
    pub fn tabulated_csv(path: &Path, p: Exponent, q: Exponent) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut xs = Vec::new();
        let mut bs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split(',');
            let (Some(a), Some(b)) = (it.next(), it.next()) else {
                return Err(argument(format!("{}:{}: expected two columns", path.display(), i + 1)));
            };
            let (Ok(a), Ok(b)) = (a.trim().parse::<f64>(), b.trim().parse::<f64>()) else {
                if xs.is_empty() {
                    continue; // header
                }
                return Err(argument(format!("{}:{}: not a number", path.display(), i + 1)));
            };
            xs.push(a);
            bs.push(b);
        }
        if xs.len() < 2 {
            return Err(argument("tabulated drift needs at least two rows"));
        }
        let spacing = xs[1] - xs[0];
        for w in xs.windows(2) {
            if ((w[1] - w[0]) - spacing).abs() > 1e-9 * spacing.abs().max(1.0) {
                return Err(argument("tabulated drift nodes must be equispaced"));
            }
        }
        if !(spacing > 0.0) {
            return Err(argument("tabulated drift nodes must increase"));
        }
        let spec = DriftSpec {
            kind: DriftKind::Tabulated { origin: xs[0], spacing, values: bs },
            dim: 1,
            p,
            q,
            norm_bound: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_norm_bound(mut self, bound: f64) -> Self {
        self.norm_bound = Some(bound);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim as f64;
        match &self.kind {
            DriftKind::Zero => {}
            DriftKind::Constant { c } => {
                if c.len() != self.dim {
                    return Err(Error::Validation(format!("constant has length {}, dimension {}", c.len(), self.dim)));
                }
                if c.iter().any(|v| *v != 0.0) && !self.p.is_infinite() {
                    return Err(Error::Validation("a nonzero constant field is only in L^p for p = inf".into()));
                }
            }
            DriftKind::Smooth { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::Validation("radius must be positive".into()));
                }
            }
            DriftKind::Radial { beta, delta, radius, .. } => {
                if !(*beta >= 0.0) {
                    return Err(Error::Validation(format!("beta = {beta} must be >= 0")));
                }
                if !(*delta >= 0.0 && *delta < 1.0) {
                    return Err(Error::Validation(format!("delta = {delta} outside [0, 1)")));
                }
                if !(*radius > 0.0) {
                    return Err(Error::Validation("radius must be positive".into()));
                }
                let ok_p = match self.p {
                    Exponent::Infinite => *beta == 0.0,
                    Exponent::Finite(p) => beta * p < d,
                };
                if !ok_p {
                    return Err(Error::Validation(format!(
                        "beta = {beta} with p = {} is not locally L^p (needs beta * p < d = {})",
                        self.p, self.dim
                    )));
                }
                let ok_q = match self.q {
                    Exponent::Infinite => *delta == 0.0,
                    Exponent::Finite(q) => delta * q < 1.0,
                };
                if !ok_q {
                    return Err(Error::Validation(format!(
                        "delta = {delta} with q = {} is not L^q in time (needs delta * q < 1)",
                        self.q
                    )));
                }
            }
            DriftKind::Tabulated { values, .. } => {
                if self.dim != 1 {
                    return Err(Error::Validation("tabulated drifts are one-dimensional".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation("tabulated drift has non-finite values".into()));
                }
            }
        }
        Ok(())
    }

    pub fn gap(&self, alpha: f64) -> Result<GapParams> {
        serrin_gap(alpha, self.dim, self.p, self.q)
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            DriftKind::Zero => true,
            DriftKind::Constant { c } => c.iter().all(|v| *v == 0.0),
            DriftKind::Smooth { c, .. } | DriftKind::Radial { c, .. } => *c == 0.0,
            DriftKind::Tabulated { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self.kind, DriftKind::Radial { delta, .. } if delta > 0.0)
    }

    /// Points of ℝ (d = 1) where the field is singular or jumps.
    pub fn singular_points(&self) -> Vec<f64> {
        match &self.kind {
            DriftKind::Radial { radius, .. } if self.dim == 1 => vec![-radius, 0.0, *radius],
            DriftKind::Tabulated { origin, spacing, values } => {
                vec![*origin, origin + spacing * (values.len() - 1) as f64]
            }
            _ => Vec::new(),
        }
    }

    /// Raw field at (t, x) into `out`; an error on a declared singularity.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            DriftKind::Zero => out.fill(0.0),
            DriftKind::Constant { c } => out.copy_from_slice(c),
            DriftKind::Smooth { c, radius } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let f = c * (-0.5 * r2 / (radius * radius)).exp() / radius;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = f * xi;
                }
            }
            DriftKind::Radial { c, beta, delta, radius } => {
                let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r == 0.0 {
                    return Err(domain("radial drift evaluated at its singular point x = 0"));
                }
                if r > *radius {
                    out.fill(0.0);
                } else {
                    if *delta > 0.0 && t <= 0.0 {
                        return Err(domain("time-singular drift evaluated at t = 0"));
                    }
                    let tf = if *delta > 0.0 { t.powf(-delta) } else { 1.0 };
                    let f = c * tf * r.powf(-beta - 1.0);
                    for (o, xi) in out.iter_mut().zip(x) {
                        *o = f * xi;
                    }
                }
            }
            DriftKind::Tabulated { origin, spacing, values } => {
                let s = (x[0] - origin) / spacing;
                let n = values.len();
                out[0] = if s < 0.0 || s > (n - 1) as f64 {
                    0.0
                } else {
                    let j = (s.floor() as usize).min(n - 2);
                    let u = s - j as f64;
                    values[j] * (1.0 - u) + values[j + 1] * u
                };
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, x, &mut out)?;
        Ok(out)
    }

    /// Scalar field for d = 1.
    pub fn eval1(&self, t: f64, x: f64) -> Result<f64> {
        let mut o = [0.0];
        self.eval_into(t, &[x], &mut o)?;
        Ok(o[0])
    }
}

/// Which of the two cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum Variant {
    /// Magnitude clipped at B h^{−d/(αp)−1/q}.
    Standard,
    /// Magnitude clipped at B h^{1/α−1} and switched off for t < h.
    Bar,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" | "std" => Ok(Variant::Standard),
            "bar" => Ok(Variant::Bar),
            _ => Err(argument(format!("unknown variant '{s}' (standard | bar)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Standard => "standard",
            Variant::Bar => "bar",
        })
    }
}

/// A drift after one of the cutoffs; total on [0, T] × ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffDrift {
    pub base: DriftSpec,
    pub variant: Variant,
    pub h: f64,
    /// None when the cutoff is the identity.
    pub threshold: Option<f64>,
}

pub fn threshold_b_h(alpha: f64, dim: usize, p: Exponent, q: Exponent, h: f64, big_b: f64) -> f64 {
    big_b * h.powf(-(dim as f64) / alpha * p.recip() - q.recip())
}

pub fn threshold_bbar_h(alpha: f64, h: f64, big_b: f64) -> f64 {
    big_b * h.powf(1.0 / alpha - 1.0)
}

fn check_hb(h: f64, big_b: f64) -> Result<()> {
    if !(h > 0.0) {
        return Err(domain(format!("h must be positive, got {h}")));
    }
    if !(big_b > 0.0) {
        return Err(domain(format!("B must be positive, got {big_b}")));
    }
    Ok(())
}

/// min{|b|, B h^{−d/(αp)−1/q}} b/|b|; the identity when p = q = ∞.
pub fn cutoff_b_h(b: &DriftSpec, alpha: f64, h: f64, big_b: f64) -> Result<CutoffDrift> {
    check_hb(h, big_b)?;
    let threshold = if b.p.is_infinite() && b.q.is_infinite() {
        None
    } else {
        Some(threshold_b_h(alpha, b.dim, b.p, b.q, h, big_b))
    };
    Ok(CutoffDrift { base: b.clone(), variant: Variant::Standard, h, threshold })
}

/// min{|b|, B h^{1/α−1}} b/|b| · 1{t ≥ h}.
pub fn cutoff_bbar_h(b: &DriftSpec, alpha: f64, h: f64, big_b: f64) -> Result<CutoffDrift> {
    check_hb(h, big_b)?;
    Ok(CutoffDrift { base: b.clone(), variant: Variant::Bar, h, threshold: Some(threshold_bbar_h(alpha, h, big_b)) })
}

pub fn cutoff(b: &DriftSpec, variant: Variant, alpha: f64, h: f64, big_b: f64) -> Result<CutoffDrift> {
    match variant {
        Variant::Standard => cutoff_b_h(b, alpha, h, big_b),
        Variant::Bar => cutoff_bbar_h(b, alpha, h, big_b),
    }
}

impl CutoffDrift {
    pub fn dim(&self) -> usize {
        self.base.dim
    }

    /// Clipped field. At a singular point of the raw field the direction is undefined and
    /// the value is the zero vector.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        if self.variant == Variant::Bar && t < self.h {
            out.fill(0.0);
            return;
        }
        if self.base.eval_into(t, x, out).is_err() {
            out.fill(0.0);
            return;
        }
        if let Some(th) = self.threshold {
            let m: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            if m > th {
                let f = th / m;
                for o in out.iter_mut() {
                    *o *= f;
                }
            }
        }
    }

    pub fn evaluate(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, x, &mut out);
        out
    }

    pub fn eval1(&self, t: f64, x: f64) -> f64 {
        let mut o = [0.0];
        self.eval_into(t, &[x], &mut o);
        o[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fin(v: f64) -> Exponent {
        Exponent::Finite(v)
    }

    #[test]
    fn gap_values() {
        let g = serrin_gap(1.5, 1, Exponent::Infinite, Exponent::Infinite).unwrap();
        assert!((g.gamma - 0.5).abs() < 1e-15);
        let g = serrin_gap(1.5, 1, fin(4.0), fin(8.0)).unwrap();
        assert!((g.gamma - 0.0625).abs() < 1e-15);
        match serrin_gap(1.2, 2, fin(20.0), fin(10.0)) {
            Err(Error::Supercritical { gamma }) => assert!((gamma + 0.02).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn thresholds() {
        // h^{−7/24} and h^{−1/3} at h = 0.01
        let t1 = threshold_b_h(1.5, 1, fin(4.0), fin(8.0), 0.01, 1.0);
        assert!((t1 - 3.831_186_849_557_288_6).abs() < 1e-12, "{t1}");
        let t2 = threshold_bbar_h(1.5, 0.01, 1.0);
        assert!((t2 - 4.641_588_833_612_779).abs() < 1e-12, "{t2}");
    }

    #[test]
    fn cutoff_examples() {
        let b = DriftSpec { kind: DriftKind::Constant { c: vec![-5.0] }, dim: 1, p: fin(4.0), q: fin(8.0), norm_bound: None };
        let c = cutoff_b_h(&b, 1.5, 0.01, 1.0).unwrap();
        let v = c.eval1(0.5, 0.3);
        assert!((v + 3.831_186_849_557_288_6).abs() < 1e-12);
        let cb = cutoff_bbar_h(&b, 1.5, 0.01, 1.0).unwrap();
        assert!((cb.eval1(0.5, 0.3) + 4.641_588_833_612_779).abs() < 1e-12);
        assert_eq!(cb.eval1(0.005, 0.3), 0.0);
        let small = DriftSpec::constant(vec![0.7]);
        let cb = cutoff_bbar_h(&small, 1.5, 0.01, 1.0).unwrap();
        assert_eq!(cb.eval1(0.5, 0.0), 0.7);
        let id = cutoff_b_h(&DriftSpec::constant(vec![1e9]), 1.5, 0.01, 1.0).unwrap();
        assert!(id.threshold.is_none());
        assert_eq!(id.eval1(0.2, 3.0), 1e9);
        let z = cutoff_b_h(&DriftSpec::zero(2), 1.5, 0.01, 1.0).unwrap();
        assert_eq!(z.evaluate(0.2, &[1.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn radial_values_and_singularity() {
        let b = DriftSpec::radial(1, 1.0, 0.5, 0.0, 1.0, fin(1.5), Exponent::Infinite).unwrap();
        assert!((b.eval1(0.3, 0.25).unwrap() - 2.0).abs() < 1e-15);
        assert!((b.eval1(0.3, -0.25).unwrap() + 2.0).abs() < 1e-15);
        assert_eq!(b.eval1(0.3, 1.5).unwrap(), 0.0);
        assert!(b.eval1(0.3, 0.0).is_err());
        let c = cutoff_b_h(&b, 1.5, 0.01, 1.0).unwrap();
        assert_eq!(c.eval1(0.3, 0.0), 0.0);
        // β p ≥ d rejected
        assert!(DriftSpec::radial(1, 1.0, 0.5, 0.0, 1.0, fin(2.0), Exponent::Infinite).is_err());
        assert!(DriftSpec::radial(1, 1.0, 0.0, 0.5, 1.0, Exponent::Infinite, fin(2.0)).is_err());
        assert!(DriftSpec::radial(1, 1.0, 0.0, 0.4, 1.0, Exponent::Infinite, fin(2.0)).is_ok());
    }

    #[test]
    fn lp_membership_by_quadrature() {
        // ∫_{|x|≤R} |x|^{−βp} dx = 2 R^{1−βp}/(1−βp) when βp < 1 in d = 1
        let (beta, p, r) = (0.3, 2.0, 1.0);
        let e = beta * p;
        let num = 2.0 * crate::quad::adaptive(|x: f64| x.powf(-e), 0.0, r, 1e-10, 100_000).unwrap();
        let exact = 2.0 * r.powf(1.0 - e) / (1.0 - e);
        assert!((num - exact).abs() < 1e-6, "{num} {exact}");
        // βp ≥ 1: partial integrals grow without bound as the cut shrinks
        let e = 1.2;
        let part = |eps: f64| crate::quad::adaptive(|x: f64| x.powf(-e), eps, r, 1e-10, 100_000).unwrap();
        assert!(part(1e-8) > 10.0 * part(1e-2));
    }

    #[test]
    fn tabulated_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        std::fs::write(&path, "x,b\n-1,0\n0,2\n1,0\n").unwrap();
        let b = DriftSpec::tabulated_csv(&path, Exponent::Infinite, Exponent::Infinite).unwrap();
        assert_eq!(b.eval1(0.0, 0.5).unwrap(), 1.0);
        assert_eq!(b.eval1(0.0, 3.0).unwrap(), 0.0);
        std::fs::write(&path, "x,b\n0,0\n1,2\n3,0\n").unwrap();
        assert!(DriftSpec::tabulated_csv(&path, Exponent::Infinite, Exponent::Infinite).is_err());
    }

    proptest! {
        #[test]
        fn clipping_shrinks_and_keeps_direction(
            x in prop::collection::vec(-3.0f64..3.0, 2),
            h in 1e-4f64..0.5,
            bb in 0.1f64..5.0,
            variant in prop_oneof![Just(Variant::Standard), Just(Variant::Bar)],
        ) {
            let b = DriftSpec::radial(2, 2.0, 0.4, 0.0, 2.0, fin(4.0), Exponent::Infinite).unwrap();
            let c = cutoff(&b, variant, 1.5, h, bb).unwrap();
            let raw = b.evaluate(0.7, &x);
            let cut = c.evaluate(0.7, &x);
            if let Ok(raw) = raw {
                let nr = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nc = cut.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(nc <= nr * (1.0 + 1e-12));
                prop_assert!(nc <= c.threshold.unwrap() * (1.0 + 1e-12));
                // nonnegative multiple of b
                let dot: f64 = raw.iter().zip(&cut).map(|(a, b)| a * b).sum();
                prop_assert!(dot >= -1e-12);
                prop_assert!((dot - nr * nc).abs() <= 1e-9 * (1.0 + nr * nc));
            }
        }

        #[test]
        fn threshold_monotone_in_h(h1 in 1e-5f64..1.0, f in 1.01f64..10.0, a in 1.05f64..1.95) {
            let h2 = (h1 * f).min(1.0);
            let t1 = threshold_b_h(a, 1, fin(4.0), fin(8.0), h1, 1.0);
            let t2 = threshold_b_h(a, 1, fin(4.0), fin(8.0), h2, 1.0);
            prop_assert!(t2 <= t1);
            prop_assert!(threshold_bbar_h(a, h2, 1.0) <= threshold_bbar_h(a, h1, 1.0));
        }

        #[test]
        fn gap_decreasing(a in 1.3f64..1.99, p1 in 10.0f64..100.0, dp in 0.5f64..5.0, q in 20.0f64..200.0) {
            let g1 = serrin_gap(a, 1, fin(p1), fin(q));
            let g2 = serrin_gap(a, 1, fin(p1 / (1.0 + dp)), fin(q));
            if let (Ok(g1), Ok(g2)) = (g1, g2) {
                prop_assert!(g2.gamma < g1.gamma);
            }
            let g3 = serrin_gap(a, 1, fin(p1), fin(q / (1.0 + dp)));
            if let (Ok(g1), Ok(g3)) = (serrin_gap(a, 1, fin(p1), fin(q)), g3) {
                prop_assert!(g3.gamma < g1.gamma);
            }
        }
    }
}
