//! Experiment configuration: a flat `key = value` text format validated in one pass.
//!
//! Lines are `key = value`; `#` starts a comment. Keys are listed in [`KEYS`]. Every problem
//! found (unknown keys, unparsable values, domain violations, a non-positive gap) is collected
//! and reported together. When exactly one problem is found, its own error kind is returned
//! rather than the combined list.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::convergence::{RateSettings, ReferenceMode};
use crate::density_mc::Lattice;
use crate::drift::{DriftSpec, Exponent, Variant};
use crate::duhamel::SpaceTimeGrid;
use crate::error::{Error, Result};
use crate::euler::SchemeConfig;
use crate::io;
use crate::lemma_checks::Suite;
use crate::stable_kernel::{QuadratureSettings, StableParams};
use crate::stable_sampler::SamplerSpec;

/// Every accepted key with its default and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("alpha", "1.5", "stability index, 1 < alpha < 2"),
    ("dim", "1", "state dimension"),
    ("seed", "0", "root seed of the counter-based streams"),
    ("drift", "zero", "zero | constant | smooth | radial | tabulated, optionally with inline parameters, e.g. radial:beta=0.2,c=1,R=1"),
    ("drift.c", "1", "amplitude; for constant drift a ';'-separated vector"),
    ("drift.beta", "0.2", "radial singularity order"),
    ("drift.delta", "0", "radial time singularity order"),
    ("drift.radius", "1", "radial cutoff radius R, smooth length scale"),
    ("drift.file", "", "CSV file (x,b) of a tabulated drift"),
    ("p", "inf", "spatial Lebesgue exponent of the drift"),
    ("q", "inf", "temporal Lebesgue exponent of the drift"),
    ("horizon", "1", "final time T"),
    ("steps", "16", "number n of Euler steps"),
    ("variant", "standard", "standard | bar cutoff"),
    ("cutoff_b", "1", "cutoff constant B"),
    ("x0", "0", "initial point; ';'-separated in d > 1"),
    ("time", "", "evaluation time for densities; defaults to the horizon"),
    ("paths", "100000", "Monte Carlo sample size"),
    ("bandwidth", "rule", "KDE bandwidth: rule or a positive number"),
    ("lattice.half_width", "16", "half width of the evaluation lattice"),
    ("lattice.spacing", "0.01", "lattice spacing"),
    ("duhamel.panels", "64", "time panels of the Duhamel solver"),
    ("duhamel.max_iter", "60", "Picard iteration cap"),
    ("duhamel.tol", "1e-9", "Picard tolerance on the weighted sup residual"),
    ("ladder", "8,16,32,64", "step counts of the rate ladder"),
    ("reference", "duhamel", "duhamel | richardson"),
    ("refinement", "4", "lattice refinement of the Duhamel reference"),
    ("window", "6", "half width of the error window"),
    ("suite", "all", "lemma suite"),
    ("quad.tail_tol", "1e-16", "Fourier tail truncation level"),
    ("quad.scale_width", "0.5", "panel width cap in units of t^(-1/alpha)"),
    ("quad.oscillation_width", "1", "panel width cap in quarter periods"),
    ("quad.order", "16", "Gauss-Legendre order per panel"),
    ("quad.grading_levels", "50", "dyadic levels of the first panel"),
    ("out", "stablelab-out", "output directory"),
    ("workers", "", "worker threads; defaults to available parallelism"),
];

/// KDE bandwidth selection as configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BandwidthChoice {
    Rule,
    Fixed(f64),
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub params: StableParams,
    pub seed: u64,
    pub drift: DriftSpec,
    pub horizon: f64,
    pub steps: usize,
    pub variant: Variant,
    pub cutoff_b: f64,
    pub x0: Vec<f64>,
    pub time: f64,
    pub paths: usize,
    pub bandwidth: BandwidthChoice,
    pub half_width: f64,
    pub spacing: f64,
    pub panels: usize,
    pub max_iter: usize,
    pub tolerance: f64,
    pub ladder: Vec<usize>,
    pub reference: ReferenceMode,
    pub refinement: usize,
    pub window: f64,
    pub suite: Suite,
    pub quadrature: QuadratureSettings,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub workers: Option<usize>,
    /// The raw pairs after defaults, for the manifest.
    pub entries: BTreeMap<String, String>,
}

/// Key-value pairs from text; malformed lines are reported, not skipped.
pub fn parse_pairs(text: &str) -> std::result::Result<Vec<(String, String)>, Vec<String>> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => out.push((k.trim().to_string(), v.trim().to_string())),
            _ => errors.push(format!("line {}: expected 'key = value', got '{raw}'", n + 1)),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

/// The known key closest to `key`, by Jaro-Winkler similarity.
pub fn nearest_key(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .map(|(k, _, _)| (*k, strsim::jaro_winkler(key, k)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|(_, s)| *s > 0.7)
        .map(|(k, _)| k)
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Argument(format!("cannot read config {}: {e}", path.display())))?;
    ExperimentConfig::from_text(&text, &[])
}

struct Collector {
    errors: Vec<Error>,
}

impl Collector {
    fn push(&mut self, e: Error) {
        self.errors.push(e);
    }

    fn get<T: std::str::FromStr>(&mut self, map: &BTreeMap<String, String>, key: &str) -> Option<T> {
        let v = map.get(key)?;
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.push(Error::Argument(format!("{key}: cannot parse '{v}'")));
                None
            }
        }
    }

    fn ok<T>(&mut self, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(e);
                None
            }
        }
    }
}

fn split_list(v: &str, sep: char) -> Vec<&str> {
    v.split(sep).map(str::trim).filter(|s| !s.is_empty()).collect()
}

impl ExperimentConfig {
    /// Parses `text`, applies `overrides` on top, and validates everything at once.
    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
        let mut pairs = parse_pairs(text).map_err(Error::Config)?;
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<ExperimentConfig> {
        let mut c = Collector { errors: Vec::new() };
        let mut map: BTreeMap<String, String> = KEYS
            .iter()
            .filter(|(_, d, _)| !d.is_empty())
            .map(|(k, d, _)| (k.to_string(), d.to_string()))
            .collect();
        let mut inline_drift = Vec::new();
        for (k, v) in pairs {
            if !KEYS.iter().any(|(name, _, _)| name == k) {
                let hint = nearest_key(k).map(|n| format!("; did you mean '{n}'?")).unwrap_or_default();
                c.push(Error::Argument(format!("unknown key '{k}'{hint}")));
                continue;
            }
            if k == "drift" {
                if let Some((kind, params)) = v.split_once(':') {
                    map.insert(k.clone(), kind.trim().to_string());
                    for item in split_list(params, ',') {
                        match item.split_once('=') {
                            Some((pk, pv)) => inline_drift.push((pk.trim().to_string(), pv.trim().to_string())),
                            None => c.push(Error::Argument(format!("drift parameter '{item}' is not name=value"))),
                        }
                    }
                    continue;
                }
            }
            map.insert(k.clone(), v.clone());
        }
        for (pk, pv) in inline_drift {
            let key = match pk.as_str() {
                "R" | "r" | "radius" => "drift.radius".to_string(),
                other => format!("drift.{other}"),
            };
            if KEYS.iter().any(|(name, _, _)| *name == key) {
                map.insert(key, pv);
            } else {
                c.push(Error::Argument(format!("unknown drift parameter '{pk}'")));
            }
        }

        let alpha: Option<f64> = c.get(&map, "alpha");
        let dim: Option<usize> = c.get(&map, "dim");
        let seed: Option<u64> = c.get(&map, "seed");
        let params = match (alpha, dim) {
            (Some(a), Some(d)) => c.ok(StableParams::for_sde(a, d)),
            _ => None,
        };
        let p: Option<Exponent> = c.get(&map, "p");
        let q: Option<Exponent> = c.get(&map, "q");
        let horizon: Option<f64> = c.get(&map, "horizon");
        let steps: Option<usize> = c.get(&map, "steps");
        let variant: Option<Variant> = c.get(&map, "variant");
        let cutoff_b: Option<f64> = c.get(&map, "cutoff_b");
        let paths: Option<usize> = c.get(&map, "paths");
        let half_width: Option<f64> = c.get(&map, "lattice.half_width");
        let spacing: Option<f64> = c.get(&map, "lattice.spacing");
        let panels: Option<usize> = c.get(&map, "duhamel.panels");
        let max_iter: Option<usize> = c.get(&map, "duhamel.max_iter");
        let tolerance: Option<f64> = c.get(&map, "duhamel.tol");
        let reference: Option<ReferenceMode> = c.get(&map, "reference");
        let refinement: Option<usize> = c.get(&map, "refinement");
        let window: Option<f64> = c.get(&map, "window");
        let suite: Option<Suite> = c.get(&map, "suite");
        let quadrature = QuadratureSettings {
            tail_tol: c.get(&map, "quad.tail_tol").unwrap_or(f64::NAN),
            scale_width: c.get(&map, "quad.scale_width").unwrap_or(f64::NAN),
            oscillation_width: c.get(&map, "quad.oscillation_width").unwrap_or(f64::NAN),
            order: c.get(&map, "quad.order").unwrap_or(0),
            grading_levels: c.get(&map, "quad.grading_levels").unwrap_or(0),
        };
        if !(quadrature.tail_tol > 0.0 && quadrature.tail_tol < 1.0) {
            c.push(Error::Domain("quad.tail_tol must lie in (0, 1)".into()));
        }
        if !(quadrature.scale_width > 0.0 && quadrature.oscillation_width > 0.0) {
            c.push(Error::Domain("quadrature panel widths must be positive".into()));
        }
        if quadrature.order == 0 || quadrature.grading_levels == 0 {
            c.push(Error::Domain("quad.order and quad.grading_levels must be positive".into()));
        }

        let x0: Vec<f64> = split_list(&map["x0"], ';')
            .iter()
            .filter_map(|s| match s.parse::<f64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    c.push(Error::Argument(format!("x0: cannot parse '{s}'")));
                    None
                }
            })
            .collect();
        let ladder: Vec<usize> = split_list(&map["ladder"], ',')
            .iter()
            .filter_map(|s| match s.parse::<usize>() {
                Ok(v) if v > 0 => Some(v),
                _ => {
                    c.push(Error::Argument(format!("ladder: '{s}' is not a positive step count")));
                    None
                }
            })
            .collect();
        let bandwidth = match map["bandwidth"].as_str() {
            "rule" => Some(BandwidthChoice::Rule),
            v => match v.parse::<f64>() {
                Ok(b) if b > 0.0 => Some(BandwidthChoice::Fixed(b)),
                _ => {
                    c.push(Error::Argument(format!("bandwidth: expected 'rule' or a positive number, got '{v}'")));
                    None
                }
            },
        };
        let workers = match map.get("workers") {
            Some(v) => match v.parse::<usize>() {
                Ok(w) if w > 0 => Some(w),
                _ => {
                    c.push(Error::Argument(format!("workers: expected a positive integer, got '{v}'")));
                    None
                }
            },
            None => None,
        };

        let drift = match (dim, p, q) {
            (Some(d), Some(p), Some(q)) => build_drift(&mut c, &map, d, p, q),
            _ => None,
        };
        if let (Some(a), Some(drift)) = (alpha, drift.as_ref()) {
            if params.is_some() {
                c.ok(drift.gap(a));
            }
        }
        let time = match map.get("time") {
            Some(v) => c.ok(v.parse::<f64>().map_err(|_| Error::Argument(format!("time: cannot parse '{v}'")))),
            None => horizon,
        };
        if let (Some(t), Some(h)) = (time, horizon) {
            if !(t > 0.0 && t <= h) {
                c.push(Error::Argument(format!("time {t} must lie in (0, horizon = {h}]")));
            }
        }
        if let Some(d) = dim {
            if !x0.is_empty() && x0.len() != d {
                c.push(Error::Argument(format!("x0 has {} coordinates, dim is {d}", x0.len())));
            }
        }
        if let (Some(hw), Some(sp)) = (half_width, spacing) {
            if !(sp > 0.0 && hw >= sp) {
                c.push(Error::Argument(format!("lattice needs 0 < spacing <= half_width, got {sp} and {hw}")));
            }
        }
        if let Some(0) = paths {
            c.push(Error::Argument("paths must be at least 1".into()));
        }
        if ladder.is_empty() {
            c.push(Error::Argument("ladder must list at least one step count".into()));
        }
        if let Some(0) = refinement {
            c.push(Error::Argument("refinement must be at least 1".into()));
        }

        let sampler = match (params, seed) {
            (Some(pa), Some(s)) => c.ok(SamplerSpec::new(pa, s)),
            _ => None,
        };
        if let (Some(s), Some(h), Some(n), Some(v), Some(b)) = (sampler, horizon, steps, variant, cutoff_b) {
            if x0.len() == s.params.dim {
                if let Some(mut cfg) = c.ok(SchemeConfig::new(h, n, v, x0.clone(), s)) {
                    cfg.cutoff_b = b;
                    c.ok(cfg.validate());
                }
            }
        }
        if let (Some(hw), Some(sp), Some(h), Some(m)) = (half_width, spacing, horizon, panels) {
            c.ok(SpaceTimeGrid::new(x0.first().copied().unwrap_or(0.0), hw, sp, h, m));
        }

        if !c.errors.is_empty() {
            if c.errors.len() == 1 {
                return Err(c.errors.pop().unwrap());
            }
            return Err(Error::Config(c.errors.iter().map(|e| e.to_string()).collect()));
        }
        Ok(ExperimentConfig {
            params: params.unwrap(),
            seed: seed.unwrap(),
            drift: drift.unwrap(),
            horizon: horizon.unwrap(),
            steps: steps.unwrap(),
            variant: variant.unwrap(),
            cutoff_b: cutoff_b.unwrap(),
            x0,
            time: time.unwrap(),
            paths: paths.unwrap(),
            bandwidth: bandwidth.unwrap(),
            half_width: half_width.unwrap(),
            spacing: spacing.unwrap(),
            panels: panels.unwrap(),
            max_iter: max_iter.unwrap(),
            tolerance: tolerance.unwrap(),
            ladder,
            reference: reference.unwrap(),
            refinement: refinement.unwrap(),
            window: window.unwrap(),
            suite: suite.unwrap(),
            quadrature,
            out: PathBuf::from(&map["out"]),
            workers,
            entries: map,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    /// Hash of every setting that affects numeric output (output directory and workers excluded).
    pub fn hash(&self) -> String {
        let mut e = self.entries.clone();
        e.remove("out");
        e.remove("workers");
        io::json_hash(&e)
    }

    pub fn scheme(&self) -> Result<SchemeConfig> {
        let mut cfg = SchemeConfig::new(self.horizon, self.steps, self.variant, self.x0.clone(), SamplerSpec::new(self.params, self.seed)?)?;
        cfg.cutoff_b = self.cutoff_b;
        Ok(cfg)
    }

    /// Symmetric 1-d lattice around x₀.
    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::symmetric(self.x0[0], self.half_width, self.spacing)
    }

    pub fn space_time_grid(&self) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.x0[0], self.half_width, self.spacing, self.horizon, self.panels)
    }

    pub fn rate_settings(&self) -> RateSettings {
        let mut s = RateSettings::new(self.alpha(), self.drift.clone(), self.ladder.clone(), self.variant, self.reference);
        s.x0 = self.x0[0];
        s.horizon = self.horizon;
        s.time = self.time;
        s.half_width = self.half_width;
        s.spacing = self.spacing;
        s.panels = self.panels;
        s.refinement = self.refinement;
        s.window = self.window;
        s.picard_iterations = self.max_iter;
        s.picard_tolerance = self.tolerance;
        s
    }
}

fn build_drift(c: &mut Collector, map: &BTreeMap<String, String>, dim: usize, p: Exponent, q: Exponent) -> Option<DriftSpec> {
    let cval: Option<f64> = if map["drift"] == "constant" { None } else { c.get(map, "drift.c") };
    let spec = match map["drift"].as_str() {
        "zero" => Ok(DriftSpec::zero(dim)),
        "constant" => {
            let vals: std::result::Result<Vec<f64>, _> = split_list(&map["drift.c"], ';').iter().map(|s| s.parse::<f64>()).collect();
            match vals {
                Ok(v) if v.len() == dim => Ok(DriftSpec::constant(v)),
                Ok(v) if v.len() == 1 => Ok(DriftSpec::constant(vec![v[0]; dim])),
                _ => Err(Error::Argument(format!("drift.c: expected {dim} ';'-separated numbers, got '{}'", map["drift.c"]))),
            }
        }
        "smooth" => {
            let r: f64 = c.get(map, "drift.radius")?;
            DriftSpec::smooth(dim, cval?, r, p, q)
        }
        "radial" => {
            let beta: f64 = c.get(map, "drift.beta")?;
            let delta: f64 = c.get(map, "drift.delta")?;
            let r: f64 = c.get(map, "drift.radius")?;
            DriftSpec::radial(dim, cval?, beta, delta, r, p, q)
        }
        "tabulated" => match map.get("drift.file") {
            Some(f) if dim == 1 => DriftSpec::tabulated_csv(Path::new(f), p, q),
            Some(_) => Err(Error::UnsupportedDimension(dim)),
            None => Err(Error::Argument("tabulated drift needs drift.file".into())),
        },
        other => Err(Error::Argument(format!(
            "drift: unknown kind '{other}'; expected zero, constant, smooth, radial or tabulated"
        ))),
    };
    let spec = c.ok(spec)?;
    // the field's own exponents are the declared ones; a bound-only field keeps them
    Some(DriftSpec { p, q, ..spec })
}

/// Documentation of the format, one line per key.
pub fn schema() -> String {
    let mut s = String::from("# key = default  # meaning\n");
    for (k, d, m) in KEYS {
        s.push_str(&format!("{k} = {d}  # {m}\n"));
    }
    s
}
