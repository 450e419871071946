//! Exact-in-law isotropic α-stable increments with counter-based streams.
//!
//! An increment over dt is dt^{1/α} √(2A) G with A one-sided (α/2)-stable,
//! E exp(−λA) = exp(−λ^{α/2}), and G standard Gaussian in ℝ^d. Its characteristic function
//! is exp(−dt |ξ|^α).
//!
//! Every draw comes from a ChaCha8 keystream (rand_chacha) addressed without state:
//!
//! * key: the 64-bit seed as 8 little-endian bytes followed by 24 zero bytes;
//! * stream id: the path index;
//! * word position: (step · LANES + lane) · STRIDE, counted in 32-bit words.
//!
//! Lane 0 carries the noise increment, lane 1 the uniform time U_k of the step, lane 2 the
//! partial-step increment used for off-grid marginals. Each (path, step, lane) block owns
//! STRIDE words, so a block never reads into its neighbour. A uniform in (0, 1) takes one
//! 64-bit word pair: ((w >> 11) + 1/2) · 2^{−53}.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::stable_kernel::StableParams;

pub const LANES: u128 = 3;
pub const STRIDE: u128 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Noise = 0,
    Time = 1,
    Partial = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub params: StableParams,
    pub seed: u64,
}

/// Uniform source positioned at one (seed, path, step, lane) block.
pub struct Stream {
    rng: ChaCha8Rng,
    used: u32,
}

impl Stream {
    pub fn new(seed: u64, path: u64, step: u64, lane: Lane) -> Stream {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(path);
        rng.set_word_pos((step as u128 * LANES + lane as u128) * STRIDE);
        Stream { rng, used: 0 }
    }

    /// Uniform in the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.used += 2;
        debug_assert!(self.used as u128 <= STRIDE);
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    pub fn exponential(&mut self) -> f64 {
        -self.uniform().ln()
    }

    /// Box–Muller pair.
    pub fn gaussian_pair(&mut self) -> (f64, f64) {
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * self.uniform()).sin_cos();
        (r * c, r * s)
    }

    pub fn gaussians(&mut self, out: &mut [f64]) {
        let mut i = 0;
        while i < out.len() {
            let (a, b) = self.gaussian_pair();
            out[i] = a;
            if i + 1 < out.len() {
                out[i + 1] = b;
            }
            i += 2;
        }
    }

    /// One-sided stable variate by Kanter's representation, 0 < a < 1:
    /// A = sin(aU)/sin(U)^{1/a} · (sin((1−a)U)/E)^{(1−a)/a}, U ~ Unif(0, π), E ~ Exp(1).
    pub fn one_sided(&mut self, a: f64) -> f64 {
        let u = std::f64::consts::PI * self.uniform();
        let e = self.exponential();
        let lead = (a * u).sin() / u.sin().powf(1.0 / a);
        let tail = ((1.0 - a) * u).sin() / e;
        lead * tail.powf((1.0 - a) / a)
    }
}

/// Largest dimension a noise block can serve.
pub fn max_dim() -> usize {
    // one-sided draw takes 4 words, each Gaussian pair 4 words
    (((STRIDE - 4) / 4) * 2) as usize
}

/// i.i.d. one-sided (alpha_half)-stable draws, index i from path i of the given block.
pub fn sample_one_sided(alpha_half: f64, count: usize, seed: u64, step: u64) -> Result<Vec<f64>> {
    if !(alpha_half > 0.0 && alpha_half < 1.0) {
        return Err(domain(format!("alpha_half = {alpha_half} outside (0, 1)")));
    }
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| Stream::new(seed, i, step, Lane::Noise).one_sided(alpha_half))
        .collect())
}

impl SamplerSpec {
    pub fn new(params: StableParams, seed: u64) -> Result<Self> {
        if params.dim > max_dim() {
            return Err(Error::Capacity(format!(
                "dimension {} exceeds the per-block limit {}",
                params.dim,
                max_dim()
            )));
        }
        Ok(SamplerSpec { params, seed })
    }

    /// Increment over dt for (path, step) on the given lane, written into `out`.
    pub fn increment_into(&self, dt: f64, path: u64, step: u64, lane: Lane, out: &mut [f64]) -> Result<()> {
        if !(dt > 0.0) {
            return Err(domain(format!("dt must be positive, got {dt}")));
        }
        let a = self.params.alpha;
        let mut s = Stream::new(self.seed, path, step, lane);
        let scale = if a == 2.0 {
            // A ≡ 1 in the Gaussian limit
            dt.sqrt() * std::f64::consts::SQRT_2
        } else {
            dt.powf(1.0 / a) * (2.0 * s.one_sided(0.5 * a)).sqrt()
        };
        s.gaussians(out);
        for v in out.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }

    pub fn sample_increment(&self, dt: f64, path: u64, step: u64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.params.dim];
        self.increment_into(dt, path, step, Lane::Noise, &mut out)?;
        Ok(out)
    }

    /// Increments for paths 0..count at one step, row-major count × d.
    pub fn sample_increments(&self, dt: f64, count: usize, step: u64) -> Result<Vec<f64>> {
        let d = self.params.dim;
        let mut out = vec![0.0; count * d];
        out.par_chunks_mut(d)
            .enumerate()
            .try_for_each(|(i, row)| self.increment_into(dt, i as u64, step, Lane::Noise, row))?;
        Ok(out)
    }

    /// U_k uniform on [kh, (k+1)h].
    pub fn sample_uniform_on_step(&self, path: u64, k: u64, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(domain(format!("h must be positive, got {h}")));
        }
        let u = Stream::new(self.seed, path, k, Lane::Time).uniform();
        Ok((k as f64 + u) * h)
    }
}

/// Kolmogorov-Smirnov distance between a sample and a continuous distribution function.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic 5% critical value 1.36/√n of the one-sample KS distance.
pub fn ks_critical(n: usize) -> f64 {
    1.36 / (n as f64).sqrt()
}

/// Law checks of the one-dimensional sampler against the tabulated stable CDF.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawTest {
    pub alpha: f64,
    pub count: usize,
    pub seed: u64,
    pub dt: f64,
    /// sup |F_N − F| for increments over dt.
    pub ks: f64,
    /// Two-sample distance between increments over [0, dt/3] + [dt/3, dt] and single increments over dt.
    pub additivity_ks: f64,
    /// Acceptance threshold 3 · 1.36/√N for `ks`, and 3 · 1.36 √(2/N) for `additivity_ks`.
    pub threshold: f64,
    pub additivity_threshold: f64,
    pub pass: bool,
}

/// Draws `count` one-dimensional increments and compares them with the numeric CDF.
pub fn law_test(alpha: f64, count: usize, seed: u64, dt: f64) -> Result<LawTest> {
    if count < 2 {
        return Err(domain(format!("law test needs at least 2 draws, got {count}")));
    }
    let spec = SamplerSpec::new(StableParams::new(alpha, 1)?, seed)?;
    let table = crate::kernel_table::KernelTable::get(alpha)?;
    let sl = table.at(dt);
    let single = spec.sample_increments(dt, count, 0)?;
    let ks = ks_statistic(&single, |x| sl.cdf(x));
    let first = spec.sample_increments(dt / 3.0, count, 1)?;
    let second = spec.sample_increments(dt - dt / 3.0, count, 2)?;
    let sum: Vec<f64> = first.iter().zip(&second).map(|(a, b)| a + b).collect();
    let additivity_ks = ks_two_sample(&sum, &single);
    let threshold = 3.0 * ks_critical(count);
    let additivity_threshold = threshold * 2f64.sqrt();
    Ok(LawTest {
        alpha,
        count,
        seed,
        dt,
        ks,
        additivity_ks,
        threshold,
        additivity_threshold,
        pass: ks < threshold && additivity_ks < additivity_threshold,
    })
}
