//! Pairings of zero currents and of dd^c V_K with radial test functions.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compactset::ModelSet;
use crate::error::{Error, Result};
use crate::zeros::{RandomPolynomial, RootSet};

/// Radial profile f(s) of s = |z - c|².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    /// (1 - s/R²)⁴ on the ball of radius R.
    Bump,
    /// 1 on the ball of radius `inner`, then a C³ polynomial ramp down to 0 at R.
    Plateau { inner: f64 },
}

/// χ(z) = amplitude · f(|z - center|²), supported in the ball of radius
/// `radius`, plus the terms in `plus`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Vec<Complex64>,
    pub radius: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(flatten)]
    pub profile: Profile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plus: Vec<TestFunction>,
}

fn one() -> f64 {
    1.0
}

// ramp S(t) = 35t⁴ - 84t⁵ + 70t⁶ - 20t⁷ and its first two derivatives
fn ramp(t: f64) -> (f64, f64, f64) {
    let t2 = t * t;
    let u = 1.0 - t;
    let s = t2 * t2 * (35.0 - 84.0 * t + 70.0 * t2 - 20.0 * t2 * t);
    let d1 = 140.0 * t2 * t * u * u * u;
    let d2 = 420.0 * t2 * u * u * (1.0 - 2.0 * t);
    (s, d1, d2)
}

impl TestFunction {
    pub fn bump(center: Vec<Complex64>, radius: f64) -> Result<Self> {
        let f = TestFunction {
            center,
            radius,
            amplitude: 1.0,
            profile: Profile::Bump,
            plus: Vec::new(),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn plateau(center: Vec<Complex64>, inner: f64, radius: f64) -> Result<Self> {
        let f = TestFunction {
            center,
            radius,
            amplitude: 1.0,
            profile: Profile::Plateau { inner },
            plus: Vec::new(),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn scaled(&self, c: f64) -> Self {
        TestFunction {
            center: self.center.clone(),
            radius: self.radius,
            amplitude: self.amplitude * c,
            profile: self.profile,
            plus: self.plus.iter().map(|t| t.scaled(c)).collect(),
        }
    }

    /// χ + other.
    pub fn sum(&self, other: &TestFunction) -> Result<Self> {
        let mut out = self.clone();
        out.plus.push(TestFunction {
            plus: Vec::new(),
            ..other.clone()
        });
        out.plus.extend(other.plus.iter().cloned());
        out.validate()?;
        Ok(out)
    }

    /// The single-ball terms of χ.
    fn terms(&self) -> impl Iterator<Item = &TestFunction> {
        std::iter::once(self).chain(self.plus.iter())
    }

    pub fn validate(&self) -> Result<()> {
        if self.center.is_empty() || self.center.len() > 2 {
            return Err(Error::InvalidInput("test function center must lie in C or C^2".into()));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidInput("test function radius must be positive".into()));
        }
        if !(self.amplitude != 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidInput("test function amplitude must be nonzero".into()));
        }
        if let Profile::Plateau { inner } = self.profile {
            if !(inner > 0.0 && inner < self.radius) {
                return Err(Error::InvalidInput("plateau needs 0 < inner < radius".into()));
            }
        }
        for t in &self.plus {
            if t.dim() != self.dim() || !t.plus.is_empty() {
                return Err(Error::InvalidInput("summed test functions must be single terms of one dimension".into()));
            }
            t.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn s_of(&self, z: &[Complex64]) -> f64 {
        z.iter().zip(&self.center).map(|(a, c)| (a - c).norm_sqr()).sum()
    }

    /// (f, f', f'') at s.
    fn profile_at(&self, s: f64) -> (f64, f64, f64) {
        let r2 = self.radius * self.radius;
        if s >= r2 {
            return (0.0, 0.0, 0.0);
        }
        let a = self.amplitude;
        match self.profile {
            Profile::Bump => {
                let u = 1.0 - s / r2;
                (a * u.powi(4), -4.0 * a * u.powi(3) / r2, 12.0 * a * u * u / (r2 * r2))
            }
            Profile::Plateau { inner } => {
                let i2 = inner * inner;
                if s <= i2 {
                    return (a, 0.0, 0.0);
                }
                let w = r2 - i2;
                let (v, d1, d2) = ramp((s - i2) / w);
                (a * (1.0 - v), -a * d1 / w, -a * d2 / (w * w))
            }
        }
    }

    pub fn value(&self, z: &[Complex64]) -> f64 {
        self.terms().map(|t| t.profile_at(t.s_of(z)).0).sum()
    }

    fn laplacian_at_s(&self, s: f64) -> f64 {
        let (_, d1, d2) = self.profile_at(s);
        let real_dim = (2 * self.dim()) as f64;
        2.0 * real_dim * d1 + 4.0 * s * d2
    }

    /// Euclidean Laplacian of χ.
    pub fn laplacian(&self, z: &[Complex64]) -> f64 {
        self.terms().map(|t| t.laplacian_at_s(t.s_of(z))).sum()
    }

    /// L[χ]: the density of dd^c(·) ∧ χ β^{m-1}, so that ∫ log|z - r| L[χ] = χ(r) in C.
    pub fn operator(&self, z: &[Complex64]) -> f64 {
        self.laplacian(z) * dd_c_factor(self.dim())
    }

    /// Smallest closed box containing every support ball [c - R, c + R].
    pub fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; 2 * self.dim()];
        let mut hi = vec![f64::NEG_INFINITY; 2 * self.dim()];
        for t in self.terms() {
            for (i, c) in t.center.iter().enumerate() {
                lo[2 * i] = lo[2 * i].min(c.re - t.radius);
                lo[2 * i + 1] = lo[2 * i + 1].min(c.im - t.radius);
                hi[2 * i] = hi[2 * i].max(c.re + t.radius);
                hi[2 * i + 1] = hi[2 * i + 1].max(c.im + t.radius);
            }
        }
        (lo, hi)
    }

    /// Lebesgue measure of the support ball; summed over terms.
    pub fn support_volume(&self) -> f64 {
        let m = self.dim() as i32;
        self.terms()
            .map(|t| PI.powi(m) * t.radius.powi(2 * m) / (1..=m).product::<i32>() as f64)
            .sum()
    }

    /// sup |L[χ]| from a dense sample of the radial profile; for sums, the
    /// sum of the per-term values.
    pub fn operator_sup(&self) -> f64 {
        let count = 20_000;
        self.terms()
            .map(|t| {
                let r2 = t.radius * t.radius;
                (0..=count)
                    .map(|i| (t.laplacian_at_s(r2 * i as f64 / count as f64)).abs())
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            * dd_c_factor(self.dim())
    }
}

/// (2/π)^m (m-1)!/4: converts the Euclidean Laplacian to dd^c ∧ β^{m-1}.
pub fn dd_c_factor(m: usize) -> f64 {
    (2.0 / PI).powi(m as i32) * (1..m).product::<usize>() as f64 / 4.0
}

/// Uniform cell grid over a box in R^{2m}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Cells per real axis.
    pub points: usize,
}

pub fn min_points(m: usize) -> usize {
    if m == 1 {
        128
    } else {
        24
    }
}

impl GridSpec {
    /// The support box of χ with `points` cells per axis.
    pub fn covering(chi: &TestFunction, points: usize) -> Self {
        let (lo, hi) = chi.support_box();
        GridSpec { lo, hi, points }
    }

    /// Default resolution for the dimension of χ.
    pub fn default_for(chi: &TestFunction) -> Self {
        Self::covering(chi, min_points(chi.dim()))
    }

    pub fn refined(&self, factor: usize) -> Self {
        GridSpec {
            points: self.points * factor,
            ..self.clone()
        }
    }

    fn check(&self, chi: &TestFunction) -> Result<()> {
        if self.lo.len() != 2 * chi.dim() || self.hi.len() != self.lo.len() {
            return Err(Error::InvalidInput("grid and test function dimensions differ".into()));
        }
        if self.points < min_points(chi.dim()) {
            return Err(Error::InvalidInput(format!(
                "{} points per axis, need at least {}",
                self.points,
                min_points(chi.dim())
            )));
        }
        if !self.points.is_multiple_of(2) {
            return Err(Error::InvalidInput("points per axis must be even".into()));
        }
        let (lo, hi) = chi.support_box();
        let tol = 1e-12 * (1.0 + chi.radius);
        if lo.iter().zip(&self.lo).any(|(s, g)| *g > s + tol) || hi.iter().zip(&self.hi).any(|(s, g)| *g < s - tol) {
            return Err(Error::InvalidInput("grid does not cover the support of χ".into()));
        }
        Ok(())
    }

    fn steps(&self, points: usize) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) / points as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Atomic,
    Potential,
    Equilibrium,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub value: f64,
    pub method: Method,
    pub error: f64,
    pub grid: Option<GridSpec>,
    /// Cells that were subdivided around near-zeros.
    #[serde(default)]
    pub refined_cells: usize,
    /// max over grid nodes of |g| for the integrated potential g.
    #[serde(default)]
    pub potential_sup: f64,
}

impl PairingResult {
    pub fn write_json_line<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", serde_json::to_string(self).map_err(std::io::Error::other)?)
    }
}

/// (1/n) Σ χ(root) over roots with multiplicity.
pub fn pair_atomic(roots: &RootSet, n: usize, chi: &TestFunction) -> Result<PairingResult> {
    if chi.dim() != 1 {
        return Err(Error::Unsupported("atomic pairing in several variables".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("normalizing degree must be >= 1".into()));
    }
    let sum: f64 = roots.roots.iter().map(|r| r.multiplicity as f64 * chi.value(&[r.z])).sum();
    Ok(PairingResult {
        value: sum / n as f64,
        method: Method::Atomic,
        error: 0.0,
        grid: None,
        refined_cells: 0,
        potential_sup: 0.0,
    })
}

struct Quadrature {
    value: f64,
    refined: usize,
    sup: f64,
}

/// Midpoint rule for ∫ g L[χ] over `points`^{2m} cells. With `singular`, g is
/// a log-modulus and cells where it dips against the neighbouring nodes are
/// split in two per axis.
fn midpoint<G>(grid: &GridSpec, points: usize, chi: &TestFunction, g: &G, singular: bool) -> Result<Quadrature>
where
    G: Fn(&[Complex64]) -> f64 + Sync,
{
    let dims = grid.lo.len();
    let h = grid.steps(points);
    let cell_vol: f64 = h.iter().product();
    let balls: Vec<(Vec<f64>, f64)> = chi
        .terms()
        .map(|t| (t.center.iter().flat_map(|c| [c.re, c.im]).collect(), t.radius))
        .collect();
    let node = |idx: &[i64]| -> Vec<f64> { (0..dims).map(|a| grid.lo[a] + (idx[a] as f64 + 0.5) * h[a]).collect() };
    let to_z = |x: &[f64]| -> Vec<Complex64> { x.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect() };
    // the cell misses every support ball
    let outside = |idx: &[i64]| -> bool {
        balls.iter().all(|(center, r)| {
            let d2: f64 = (0..dims)
                .map(|a| {
                    let lo = grid.lo[a] + idx[a] as f64 * h[a];
                    let hi = lo + h[a];
                    let c = center[a];
                    let gap = if c < lo { lo - c } else if c > hi { c - hi } else { 0.0 };
                    gap * gap
                })
                .sum();
            d2 >= r * r
        })
    };
    let total = points.pow(dims as u32);
    let decode = |mut lin: usize| -> Vec<i64> {
        let mut idx = vec![0i64; dims];
        for a in (0..dims).rev() {
            idx[a] = (lin % points) as i64;
            lin /= points;
        }
        idx
    };
    // slabs along the first axis, summed in order afterwards
    let per_slab = total / points;
    let slabs: Result<Vec<(f64, usize, f64)>> = (0..points)
        .into_par_iter()
        .map(|slab| {
            let mut acc = 0.0;
            let mut refined = 0usize;
            let mut sup: f64 = 0.0;
            for lin in slab * per_slab..(slab + 1) * per_slab {
                let idx = decode(lin);
                if outside(&idx) {
                    continue;
                }
                let x = node(&idx);
                let gx = g(&to_z(&x));
                if gx.is_finite() {
                    sup = sup.max(gx.abs());
                }
                let dip = singular && {
                    let mut neighbours = 0.0;
                    for a in 0..dims {
                        for step in [-1i64, 1] {
                            let mut j = idx.clone();
                            j[a] += step;
                            neighbours += g(&to_z(&node(&j)));
                        }
                    }
                    // log of 0.75 × geometric mean of the neighbours
                    !(gx >= neighbours / (2 * dims) as f64 + 0.75f64.ln())
                };
                if !dip {
                    acc += gx * chi.operator(&to_z(&x)) * cell_vol;
                    continue;
                }
                refined += 1;
                let sub = 1usize << dims;
                let mut part = 0.0;
                for corner in 0..sub {
                    let mut y: Vec<f64> = (0..dims)
                        .map(|a| x[a] + if corner >> a & 1 == 1 { 0.25 } else { -0.25 } * h[a])
                        .collect();
                    let mut gy = g(&to_z(&y));
                    if gy == f64::NEG_INFINITY {
                        y[0] += 0.25 * h[0];
                        gy = g(&to_z(&y));
                        if gy == f64::NEG_INFINITY {
                            return Err(Error::SingularCell(y));
                        }
                    }
                    part += gy * chi.operator(&to_z(&y));
                }
                acc += part * cell_vol / sub as f64;
            }
            Ok((acc, refined, sup))
        })
        .collect();
    let slabs = slabs?;
    Ok(Quadrature {
        value: slabs.iter().map(|s| s.0).sum(),
        refined: slabs.iter().map(|s| s.1).sum(),
        sup: slabs.iter().map(|s| s.2).fold(0.0, f64::max),
    })
}

/// ∫ g L[χ] with the error estimated against the half-resolution grid.
fn grid_pairing<G>(grid: &GridSpec, chi: &TestFunction, g: G, singular: bool, method: Method) -> Result<PairingResult>
where
    G: Fn(&[Complex64]) -> f64 + Sync,
{
    grid.check(chi)?;
    let fine = midpoint(grid, grid.points, chi, &g, singular)?;
    let coarse = midpoint(grid, grid.points / 2, chi, &g, singular)?;
    Ok(PairingResult {
        value: fine.value,
        method,
        error: (fine.value - coarse.value).abs() / 3.0,
        grid: Some(grid.clone()),
        refined_cells: fine.refined,
        potential_sup: fine.sup,
    })
}

/// (1/n) ∫ log|F| L[χ] dV.
pub fn pair_potential(f: &RandomPolynomial, n: usize, chi: &TestFunction, grid: &GridSpec) -> Result<PairingResult> {
    if n == 0 {
        return Err(Error::InvalidInput("normalizing degree must be >= 1".into()));
    }
    if f.dim() != chi.dim() {
        return Err(Error::InvalidInput("polynomial and test function dimensions differ".into()));
    }
    let inv = 1.0 / n as f64;
    grid_pairing(grid, chi, |z| f.log_abs(z) * inv, true, Method::Potential)
}

/// ∫ g L[χ] dV for a continuous potential g, e.g. V_K or (1/2n) log Γ_n.
pub fn pair_continuous<G>(g: G, chi: &TestFunction, grid: &GridSpec) -> Result<PairingResult>
where
    G: Fn(&[Complex64]) -> f64 + Sync,
{
    grid_pairing(grid, chi, g, false, Method::Potential)
}

/// ⟨dd^c V_K, χ⟩ by the grid rule, for any m.
pub fn pair_green(set: &ModelSet, chi: &TestFunction, grid: &GridSpec) -> Result<PairingResult> {
    if set.dim() != chi.dim() {
        return Err(Error::InvalidInput("set and test function dimensions differ".into()));
    }
    let mut r = pair_continuous(|z| set.green_value(z).unwrap_or(f64::NAN), chi, grid)?;
    if !r.value.is_finite() {
        return Err(Error::InvalidInput("green function undefined on the grid".into()));
    }
    r.method = Method::Equilibrium;
    Ok(r)
}

const DENSITY_NODES: usize = 8192;

/// ⟨dd^c V_K, χ⟩: closed-form density in one variable, the grid rule otherwise.
pub fn pair_equilibrium(set: &ModelSet, chi: &TestFunction, grid: &GridSpec) -> Result<PairingResult> {
    if set.dim() != chi.dim() {
        return Err(Error::InvalidInput("set and test function dimensions differ".into()));
    }
    if set.dim() != 1 {
        return pair_green(set, chi, grid);
    }
    grid.check(chi)?;
    let density = set.equilibrium_density()?;
    let fine = density.integrate(DENSITY_NODES, |z| chi.value(&[z]));
    let coarse = density.integrate(DENSITY_NODES / 2, |z| chi.value(&[z]));
    Ok(PairingResult {
        value: fine,
        method: Method::Equilibrium,
        error: (fine - coarse).abs(),
        grid: None,
        refined_cells: 0,
        potential_sup: 0.0,
    })
}

/// The three candidate constants; D_φ is their maximum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DPhi {
    pub l1_norm: f64,
    pub green_pairing: f64,
    pub sup_times_volume: f64,
    pub value: f64,
}

/// max(∫|L[χ]|, |∫ V_K L[χ]|, sup|L[χ]| · vol supp χ).
pub fn dphi_constant(chi: &TestFunction, set: &ModelSet, grid: &GridSpec) -> Result<DPhi> {
    grid.check(chi)?;
    let abs = midpoint_abs(grid, chi);
    let green = pair_green(set, chi, grid)?.value.abs();
    let sv = chi.operator_sup() * chi.support_volume();
    Ok(DPhi {
        l1_norm: abs,
        green_pairing: green,
        sup_times_volume: sv,
        value: abs.max(green).max(sv),
    })
}

fn midpoint_abs(grid: &GridSpec, chi: &TestFunction) -> f64 {
    let dims = grid.lo.len();
    let h = grid.steps(grid.points);
    let cell_vol: f64 = h.iter().product();
    let points = grid.points;
    let per_slab = points.pow(dims as u32 - 1);
    let slabs: Vec<f64> = (0..points)
        .into_par_iter()
        .map(|slab| {
            let mut acc = 0.0;
            for lin in slab * per_slab..(slab + 1) * per_slab {
                let mut rest = lin;
                let mut x = vec![0.0; dims];
                for a in (0..dims).rev() {
                    x[a] = grid.lo[a] + ((rest % points) as f64 + 0.5) * h[a];
                    rest /= points;
                }
                let z: Vec<Complex64> = x.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
                acc += chi.operator(&z).abs();
            }
            acc * cell_vol
        })
        .collect();
    slabs.iter().sum()
}
