//! Coefficient measures on C^{d_n} and Monte Carlo log-moment constants.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_TRIALS: usize = 10_000;
pub const MIN_DIRECTIONS: usize = 32;
pub const SAFETY_FACTOR: f64 = 1.5;

/// Number of independent substreams a Monte Carlo run is split into. Fixed so
/// results do not depend on the worker count.
const CHUNKS: usize = 16;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent generator for `(seed, path...)`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let stream = path.iter().fold(0x5851_f42d_4c95_7f2d, |acc, &p| splitmix(acc ^ p));
    rng.set_stream(stream);
    rng
}

/// A u64 seed for `(seed, path...)`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    substream(seed, path).next_u64()
}

/// Per-coordinate standard deviations for the anisotropic Gaussian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// σ_j geometric from `lo` (j = 1) to `hi` (j = d).
    Geometric { lo: f64, hi: f64 },
    Constant { value: f64 },
    Explicit { values: Vec<f64> },
}

impl Schedule {
    pub fn sigmas(&self, d: usize) -> Result<Vec<f64>> {
        let s: Vec<f64> = match self {
            Schedule::Geometric { lo, hi } => {
                if d == 1 {
                    vec![*lo]
                } else {
                    (0..d)
                        .map(|j| lo * (hi / lo).powf(j as f64 / (d - 1) as f64))
                        .collect()
                }
            }
            Schedule::Constant { value } => vec![*value; d],
            Schedule::Explicit { values } => {
                if values.len() < d {
                    return Err(Error::InvalidInput(format!(
                        "explicit schedule has {} entries, need {d}",
                        values.len()
                    )));
                }
                values[..d].to_vec()
            }
        };
        if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("all σ_j must be positive and finite".into()));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    /// Independent standard complex Gaussians, E|a_j|² = 1.
    IsotropicGaussian,
    AnisotropicGaussian { schedule: Schedule },
    /// Uniform direction on the sphere, radius with density ∝ (1+r)^{-(p+1)}.
    HeavyTail { p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMeasure {
    #[serde(flatten)]
    pub kind: MeasureKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    2.0
}

impl CoefficientMeasure {
    pub fn new(kind: MeasureKind, alpha: f64) -> Result<Self> {
        let m = CoefficientMeasure { kind, alpha };
        m.validate()?;
        Ok(m)
    }

    pub fn isotropic() -> Self {
        CoefficientMeasure {
            kind: MeasureKind::IsotropicGaussian,
            alpha: 2.0,
        }
    }

    pub fn anisotropic(schedule: Schedule) -> Result<Self> {
        Self::new(MeasureKind::AnisotropicGaussian { schedule }, 2.0)
    }

    pub fn heavy_tail(p: f64) -> Result<Self> {
        Self::new(MeasureKind::HeavyTail { p }, 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 2.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidInput(format!("moment exponent α = {} must be >= 2", self.alpha)));
        }
        match &self.kind {
            MeasureKind::IsotropicGaussian => Ok(()),
            MeasureKind::AnisotropicGaussian { schedule } => match schedule {
                Schedule::Geometric { lo, hi } if !(*lo > 0.0 && *hi > 0.0) => {
                    Err(Error::InvalidInput("geometric schedule needs positive endpoints".into()))
                }
                Schedule::Constant { value } if !(*value > 0.0) => {
                    Err(Error::InvalidInput("constant schedule needs σ > 0".into()))
                }
                Schedule::Explicit { values } if values.iter().any(|v| !(*v > 0.0)) => {
                    Err(Error::InvalidInput("explicit schedule needs all σ_j > 0".into()))
                }
                _ => Ok(()),
            },
            MeasureKind::HeavyTail { p } => {
                if *p > 2.0 && p.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("heavy-tail exponent p = {p} must exceed 2")))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            MeasureKind::IsotropicGaussian => "gaussian".into(),
            MeasureKind::AnisotropicGaussian { .. } => "anisotropic".into(),
            MeasureKind::HeavyTail { p } => format!("heavy_tail_p{p}"),
        }
    }

    /// A sampler for vectors of length `d`.
    pub fn sampler(&self, d: usize) -> Result<Sampler> {
        self.validate()?;
        if d == 0 {
            return Err(Error::InvalidInput("coefficient dimension must be >= 1".into()));
        }
        let sigmas = match &self.kind {
            MeasureKind::AnisotropicGaussian { schedule } => Some(schedule.sigmas(d)?),
            _ => None,
        };
        Ok(Sampler {
            kind: self.kind.clone(),
            d,
            sigmas,
        })
    }

    /// One coefficient vector, deterministic in `seed`.
    pub fn sample(&self, d: usize, seed: u64) -> Result<Vec<Complex64>> {
        let sampler = self.sampler(d)?;
        let mut rng = substream(seed, &[]);
        Ok(sampler.draw(&mut rng))
    }
}

/// Precomputed per-dimension sampling data.
#[derive(Clone, Debug)]
pub struct Sampler {
    kind: MeasureKind,
    d: usize,
    sigmas: Option<Vec<f64>>,
}

fn complex_normal<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

impl Sampler {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.d);
        self.draw_into(rng, &mut out);
        out
    }

    pub fn draw_into<R: Rng>(&self, rng: &mut R, out: &mut Vec<Complex64>) {
        out.clear();
        match &self.kind {
            MeasureKind::IsotropicGaussian => out.extend((0..self.d).map(|_| complex_normal(rng))),
            MeasureKind::AnisotropicGaussian { .. } => {
                let s = self.sigmas.as_ref().expect("sigmas set for anisotropic measure");
                out.extend(s.iter().map(|&sig| complex_normal(rng) * sig));
            }
            MeasureKind::HeavyTail { p } => {
                out.extend((0..self.d).map(|_| complex_normal(rng)));
                let norm = out.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                let u: f64 = 1.0 - rng.random::<f64>();
                let r = u.powf(-1.0 / p) - 1.0;
                for a in out.iter_mut() {
                    *a *= r / norm;
                }
            }
        }
    }
}

/// The pairing ⟨a, v⟩ = Σ a_l v_l used to form F = ⟨a, u⟩.
pub fn pairing(a: &[Complex64], v: &[Complex64]) -> Complex64 {
    a.iter().zip(v).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub direction: Vec<Complex64>,
    pub alpha: f64,
    pub trials: usize,
    pub estimate: f64,
    pub std_error: f64,
    /// Trials discarded because ⟨a, v⟩ vanished exactly.
    pub zero_tally: usize,
}

/// Monte Carlo estimate of ∫ |log|⟨a, v⟩||^α dμ(a).
pub fn moment_estimate(measure: &CoefficientMeasure, v: &[Complex64], trials: usize, seed: u64) -> Result<MomentEstimate> {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("direction has norm {norm}, expected 1")));
    }
    if trials < MIN_TRIALS {
        return Err(Error::InvalidInput(format!("{trials} trials, need at least {MIN_TRIALS}")));
    }
    let sampler = measure.sampler(v.len())?;
    let alpha = measure.alpha;
    let partial: Vec<(usize, f64, f64, usize)> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let count = trials / CHUNKS + usize::from(c < trials % CHUNKS);
            let mut rng = substream(seed, &[c as u64]);
            let mut a = Vec::with_capacity(v.len());
            let (mut used, mut sum, mut sq, mut zeros) = (0usize, 0.0, 0.0, 0usize);
            for _ in 0..count {
                sampler.draw_into(&mut rng, &mut a);
                let p = pairing(&a, v).norm();
                if p == 0.0 {
                    zeros += 1;
                    continue;
                }
                let x = p.ln().abs().powf(alpha);
                used += 1;
                sum += x;
                sq += x * x;
            }
            (used, sum, sq, zeros)
        })
        .collect();
    let used: usize = partial.iter().map(|p| p.0).sum();
    let sum: f64 = partial.iter().map(|p| p.1).sum();
    let sq: f64 = partial.iter().map(|p| p.2).sum();
    let zero_tally = partial.iter().map(|p| p.3).sum();
    if used < 2 {
        return Err(Error::InsufficientData("every pairing vanished".into()));
    }
    let mean = sum / used as f64;
    let var = ((sq - used as f64 * mean * mean) / (used - 1) as f64).max(0.0);
    Ok(MomentEstimate {
        direction: v.to_vec(),
        alpha,
        trials,
        estimate: mean,
        std_error: (var / used as f64).sqrt(),
        zero_tally,
    })
}

/// Uniform random unit vector in C^d.
pub fn random_direction<R: Rng>(rng: &mut R, d: usize) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..d).map(|_| complex_normal(rng)).collect();
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConstant {
    pub measure: String,
    pub alpha: f64,
    pub d: usize,
    pub trials: usize,
    /// Estimates for the random directions followed by the d coordinate directions.
    pub per_direction: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub max_estimate: f64,
    /// max_estimate times the safety factor. A heuristic, not a certified bound.
    pub constant: f64,
    pub zero_tally: usize,
}

impl MomentConstant {
    /// (max − min)/max over directions.
    pub fn spread(&self) -> f64 {
        let lo = self.per_direction.iter().cloned().fold(f64::INFINITY, f64::min);
        (self.max_estimate - lo) / self.max_estimate
    }
}

/// Ĉ_n: safety factor × the largest moment estimate over random and coordinate directions.
pub fn moment_constant(
    measure: &CoefficientMeasure,
    d: usize,
    direction_count: usize,
    trials: usize,
    seed: u64,
) -> Result<MomentConstant> {
    if direction_count < MIN_DIRECTIONS {
        return Err(Error::InvalidInput(format!(
            "{direction_count} directions, need at least {MIN_DIRECTIONS}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidInput("coefficient dimension must be >= 1".into()));
    }
    let mut rng = substream(seed, &[u64::MAX]);
    let mut directions: Vec<Vec<Complex64>> = (0..direction_count).map(|_| random_direction(&mut rng, d)).collect();
    for j in 0..d {
        let mut e = vec![Complex64::new(0.0, 0.0); d];
        e[j] = Complex64::new(1.0, 0.0);
        directions.push(e);
    }
    let estimates: Result<Vec<MomentEstimate>> = directions
        .iter()
        .enumerate()
        .map(|(i, v)| moment_estimate(measure, v, trials, derive_seed(seed, &[i as u64])))
        .collect();
    let estimates = estimates?;
    let per_direction: Vec<f64> = estimates.iter().map(|e| e.estimate).collect();
    let max_estimate = per_direction.iter().cloned().fold(0.0, f64::max);
    Ok(MomentConstant {
        measure: measure.label(),
        alpha: measure.alpha,
        d,
        trials,
        std_errors: estimates.iter().map(|e| e.std_error).collect(),
        zero_tally: estimates.iter().map(|e| e.zero_tally).sum(),
        per_direction,
        max_estimate,
        constant: SAFETY_FACTOR * max_estimate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub n: usize,
    pub constant: f64,
    /// C_n / n^α
    pub growth_ratio: f64,
    /// Σ_{n' ≤ n} C_{n'}^{1/α} / n'
    pub partial_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub alpha: f64,
    pub rows: Vec<HypothesisRow>,
    /// Fitted exponent of C_n^{1/α}/n against n.
    pub term_exponent: f64,
    /// C_n/n^α trends to zero over the supplied degrees.
    pub little_o_pass: bool,
    /// C_n^{1/α}/n decays faster than 1/n over the supplied degrees.
    pub summable_pass: bool,
}

/// Trend diagnostics for already measured constants (n, C_n).
pub fn hypothesis_check_series(alpha: f64, constants: &[(usize, f64)]) -> Result<HypothesisReport> {
    if constants.len() < 2 {
        return Err(Error::InsufficientData("need constants for at least two degrees".into()));
    }
    if constants.windows(2).any(|w| w[1].0 <= w[0].0) || constants[0].0 == 0 {
        return Err(Error::InvalidInput("degrees must be positive and strictly increasing".into()));
    }
    let mut partial = 0.0;
    let rows: Vec<HypothesisRow> = constants
        .iter()
        .map(|&(n, c)| {
            let nf = n as f64;
            partial += c.powf(1.0 / alpha) / nf;
            HypothesisRow {
                n,
                constant: c,
                growth_ratio: c / nf.powf(alpha),
                partial_sum: partial,
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), (r.constant.powf(1.0 / alpha) / r.n as f64).ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let term_exponent = sxy / sxx;
    let ratios: Vec<f64> = rows.iter().map(|r| r.growth_ratio).collect();
    let tail = &ratios[ratios.len() / 2..];
    let little_o_pass = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)) && ratios[ratios.len() - 1] < 0.5 * ratios[0];
    Ok(HypothesisReport {
        alpha,
        rows,
        term_exponent,
        little_o_pass,
        summable_pass: term_exponent < -1.1,
    })
}

/// Measures Ĉ_n for each degree (with d_n from `dims`) and runs the trend diagnostics.
pub fn hypothesis_check(
    measure: &CoefficientMeasure,
    degrees: &[(usize, usize)],
    direction_count: usize,
    trials: usize,
    seed: u64,
) -> Result<HypothesisReport> {
    let constants: Result<Vec<(usize, f64)>> = degrees
        .iter()
        .map(|&(n, d)| moment_constant(measure, d, direction_count, trials, derive_seed(seed, &[n as u64])).map(|c| (n, c.constant)))
        .collect();
    hypothesis_check_series(measure.alpha, &constants?)
}
