//! Random polynomials F = ⟨a, u⟩ and their zeros in one variable.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::chebyshev::{Basis, Series};
use crate::compactset::ModelSet;
use crate::error::{Error, Result};
use crate::multiindex::dimension;

pub const CLUSTER_TOL: f64 = 1e-8;
pub const EFFECTIVE_DEGREE_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-6;
pub const NEWTON_STEPS: usize = 5;
/// Ellipse parameter for interval sets; 1 samples at Chebyshev–Lobatto points of the interval.
pub const ELLIPSE_RHO: f64 = 1.0;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// F = Σ a_l u_l over the first d_n basis elements.
#[derive(Clone, Debug)]
pub struct RandomPolynomial<'a> {
    basis: &'a Basis,
    degree: usize,
    coeffs: Vec<Complex64>,
    series: Series,
}

impl<'a> RandomPolynomial<'a> {
    pub fn new(basis: &'a Basis, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.iter().all(|c| *c == ZERO) {
            return Err(Error::InvalidInput("polynomial is identically zero".into()));
        }
        let series = basis.series(&coeffs)?;
        let degree = series.degree();
        debug_assert_eq!(dimension(basis.dim(), degree)?, coeffs.len());
        Ok(RandomPolynomial {
            basis,
            degree,
            coeffs,
            series,
        })
    }

    pub fn basis(&self) -> &Basis {
        self.basis
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn series(&self) -> &Series {
        &self.series
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn evaluate(&self, z: &[Complex64]) -> Complex64 {
        self.series.eval(z)
    }

    /// log|F(z)|; −∞ at exact zeros.
    pub fn log_abs(&self, z: &[Complex64]) -> f64 {
        let (v, s) = self.series.eval_scaled(z);
        v.norm().ln() + s
    }

    /// (log|⟨a, λ(z)⟩|, ½ log Γ_n(z)); their sum is log|F(z)|.
    pub fn log_abs_decomposed(&self, z: &[Complex64]) -> (f64, f64) {
        let u = self.basis.eval_u_scaled(z);
        let vals = &u.values[..self.coeffs.len()];
        let top = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let norm = top * vals.iter().map(|v| (v.norm() / top).powi(2)).sum::<f64>().sqrt();
        let pair: Complex64 = vals.iter().zip(&self.coeffs).map(|(v, a)| v * a).sum();
        ((pair / norm).norm().ln(), norm.ln() + u.log_scale)
    }

    /// |F(z)| relative to the size of the terms summed to form it.
    pub fn relative_residual(&self, z: Complex64) -> f64 {
        self.series.relative_residual(&[z])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub z: Complex64,
    pub multiplicity: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    /// Nominal degree n.
    pub degree: usize,
    /// Roots counted with multiplicity.
    pub n_actual: usize,
    pub roots: Vec<Root>,
    pub max_residual: f64,
}

impl RootSet {
    pub fn collapsed(&self) -> bool {
        self.n_actual < self.degree
    }

    /// Roots repeated by multiplicity.
    pub fn flattened(&self) -> Vec<Complex64> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.z, r.multiplicity))
            .collect()
    }
}

/// Where F is sampled for re-expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Enclosure {
    /// z = r w, coefficients in powers of w.
    Circle { radius: f64 },
    /// z = c + h x, coefficients in T_k(x), sampled on the ellipse of parameter ρ.
    Ellipse { center: f64, half_width: f64, rho: f64 },
}

/// Coefficients of F in the frame of the enclosure, from 2(n+1) samples.
fn reexpand(series: &Series, n: usize, enc: Enclosure) -> Vec<Complex64> {
    let count = 2 * (n + 1);
    let mut buf: Vec<Complex64> = (0..count)
        .map(|j| {
            let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / count as f64);
            let z = match enc {
                Enclosure::Circle { radius } => w * radius,
                Enclosure::Ellipse { center, half_width, rho } => {
                    let w = w * rho;
                    center + half_width * (w + 1.0 / w) * 0.5
                }
            };
            series.eval(&[z])
        })
        .collect();
    FftPlanner::new().plan_fft_forward(count).process(&mut buf);
    let inv = 1.0 / count as f64;
    let f: Vec<Complex64> = buf.iter().map(|x| x * inv).collect();
    // anything at the roundoff floor of the transform is indistinguishable from zero
    let floor = 4.0 * count as f64 * f64::EPSILON * f.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let f: Vec<Complex64> = f.into_iter().map(|x| if x.norm() <= floor { ZERO } else { x }).collect();
    match enc {
        Enclosure::Circle { .. } => f[..=n].to_vec(),
        Enclosure::Ellipse { rho, .. } => {
            let mut c = vec![f[0]];
            for k in 1..=n {
                let (p, q) = (rho.powi(k as i32), rho.powi(-(k as i32)));
                // least squares from f_k = c p/2 and f_{-k} = c q/2
                c.push((f[k] * p + f[count - k] * q) * 2.0 / (p * p + q * q));
            }
            c
        }
    }
}

/// Eigenvalue matrix of Σ c_k φ_k with φ either powers or T_k; c[n] ≠ 0.
/// Lower Hessenberg (dense last row).
fn frame_matrix(c: &[Complex64], chebyshev: bool) -> DMatrix<Complex64> {
    let n = c.len() - 1;
    let mut a = DMatrix::<Complex64>::zeros(n, n);
    // x φ_k = Σ_l A[k][l] φ_l + top[k] φ_n
    let mut top = vec![ZERO; n];
    for k in 0..n {
        let (down, up) = if !chebyshev || k == 0 {
            (0.0, 1.0)
        } else {
            (0.5, 0.5)
        };
        if k > 0 {
            a[(k, k - 1)] += Complex64::new(down, 0.0);
        }
        if k + 1 < n {
            a[(k, k + 1)] += Complex64::new(up, 0.0);
        } else {
            top[k] = Complex64::new(up, 0.0);
        }
    }
    let lead = c[n];
    for (k, t) in top.iter().enumerate() {
        if *t != ZERO {
            for l in 0..n {
                a[(k, l)] -= t * c[l] / lead;
            }
        }
    }
    a
}

/// Eigenvalues of an upper Hessenberg matrix by single-shift QR with
/// Wilkinson shifts and deflation; the Schur vectors are never formed.
pub fn hessenberg_eigenvalues(mut h: DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = h.nrows();
    let mut eig = vec![ZERO; n];
    if n == 0 {
        return Ok(eig);
    }
    let mut hi = n - 1;
    let mut its = 0usize;
    let mut rot: Vec<(Complex64, Complex64)> = Vec::with_capacity(n);
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        let mut lo = 0;
        for k in (1..=hi).rev() {
            let scale = h[(k, k)].norm() + h[(k - 1, k - 1)].norm();
            if h[(k, k - 1)].norm() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
                h[(k, k - 1)] = ZERO;
                lo = k;
                break;
            }
        }
        if lo == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            its = 0;
            continue;
        }
        its += 1;
        if its > 60 {
            return Err(Error::EigenFailure(n));
        }
        let (a, b, c, d) = (h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)]);
        let mu = if its.is_multiple_of(11) {
            // exceptional shift
            d + Complex64::new(h[(hi, hi - 1)].norm(), 0.0) * 0.75
        } else {
            let half = (a - d) * 0.5;
            let disc = (half * half + b * c).sqrt();
            let (m1, m2) = ((a + d) * 0.5 + disc, (a + d) * 0.5 - disc);
            if (m1 - d).norm() < (m2 - d).norm() {
                m1
            } else {
                m2
            }
        };
        for k in lo..=hi {
            h[(k, k)] -= mu;
        }
        rot.clear();
        for k in lo..hi {
            let (x, y) = (h[(k, k)], h[(k + 1, k)]);
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (cs, sn) = if r == 0.0 {
                (Complex64::new(1.0, 0.0), ZERO)
            } else {
                (x / r, y / r)
            };
            for j in k..=hi {
                let (t1, t2) = (h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = cs.conj() * t1 + sn.conj() * t2;
                h[(k + 1, j)] = cs * t2 - sn * t1;
            }
            rot.push((cs, sn));
        }
        for (off, &(cs, sn)) in rot.iter().enumerate() {
            let k = lo + off;
            for i in lo..=(k + 1) {
                let (t1, t2) = (h[(i, k)], h[(i, k + 1)]);
                h[(i, k)] = t1 * cs + t2 * sn;
                h[(i, k + 1)] = t2 * cs.conj() - t1 * sn.conj();
            }
        }
        for k in lo..=hi {
            h[(k, k)] += mu;
        }
    }
    Ok(eig)
}

fn enclosure(set: &ModelSet, rho: f64) -> Result<Enclosure> {
    match set {
        ModelSet::Interval { a, b } => Ok(Enclosure::Ellipse {
            center: (a + b) / 2.0,
            half_width: (b - a) / 2.0,
            rho,
        }),
        ModelSet::Circle { radius } | ModelSet::Disk { radius } => Ok(Enclosure::Circle { radius: *radius }),
        ModelSet::Product { .. } => Err(Error::Unsupported("root extraction in several variables".into())),
    }
}

/// Up to `steps` Newton steps, each kept only if it lowers |F|.
fn polish(series: &Series, mut z: Complex64, steps: usize) -> Complex64 {
    let (mut f, mut df) = series.eval_with_derivative(z);
    for _ in 0..steps {
        if f == ZERO || df == ZERO || !df.is_finite() || !f.is_finite() {
            break;
        }
        let next = z - f / df;
        let (nf, ndf) = series.eval_with_derivative(next);
        if !(nf.norm() < f.norm()) {
            break;
        }
        z = next;
        f = nf;
        df = ndf;
    }
    z
}

fn cluster(points: Vec<Complex64>, tol: f64) -> Vec<(Complex64, usize)> {
    let mut groups: Vec<(Complex64, Complex64, usize)> = Vec::new();
    for p in points {
        match groups.iter_mut().find(|g| (g.0 - p).norm() <= tol) {
            Some(g) => {
                g.1 += p;
                g.2 += 1;
            }
            None => groups.push((p, p, 1)),
        }
    }
    groups.into_iter().map(|(_, sum, k)| (sum / k as f64, k)).collect()
}

/// Zeros of F with multiplicity, via re-expansion and a colleague/companion matrix.
pub fn roots(f: &RandomPolynomial) -> Result<RootSet> {
    roots_with(f, ELLIPSE_RHO)
}

/// As [`roots`] with a chosen ellipse parameter for interval sets.
pub fn roots_with(f: &RandomPolynomial, rho: f64) -> Result<RootSet> {
    if f.dim() != 1 {
        return Err(Error::Unsupported("root extraction in several variables".into()));
    }
    let n = f.degree();
    let enc = enclosure(f.basis().set(), rho)?;
    let c = reexpand(f.series(), n, enc);
    let cmax = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let n_actual = (0..=n)
        .rev()
        .find(|&k| c[k].norm() >= EFFECTIVE_DEGREE_TOL * cmax)
        .unwrap_or(0);
    let raw = if n_actual == 0 {
        Vec::new()
    } else {
        let chebyshev = matches!(enc, Enclosure::Ellipse { .. });
        hessenberg_eigenvalues(frame_matrix(&c[..=n_actual], chebyshev).transpose())?
    };
    let mapped: Vec<Complex64> = raw
        .into_iter()
        .map(|x| match enc {
            Enclosure::Circle { radius } => x * radius,
            Enclosure::Ellipse { center, half_width, .. } => center + half_width * x,
        })
        .map(|z| polish(f.series(), z, NEWTON_STEPS))
        .collect();
    let mut roots = Vec::new();
    let mut max_residual: f64 = 0.0;
    for (z, multiplicity) in cluster(mapped, CLUSTER_TOL) {
        let residual = f.relative_residual(z);
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::RootResidual { root: z, residual });
        }
        max_residual = max_residual.max(residual);
        roots.push(Root {
            z,
            multiplicity,
            residual,
        });
    }
    Ok(RootSet {
        degree: n,
        n_actual,
        roots,
        max_residual,
    })
}

/// Atoms of (1/n)[Z_F].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<(Complex64, f64)>,
    pub total_mass: f64,
    /// Set when the effective degree fell below n.
    pub collapsed: bool,
}

pub fn empirical_measure(roots: &RootSet, n: usize) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::InvalidInput("normalizing degree must be >= 1".into()));
    }
    let w = 1.0 / n as f64;
    let atoms: Vec<(Complex64, f64)> = roots.roots.iter().map(|r| (r.z, r.multiplicity as f64 * w)).collect();
    Ok(EmpiricalMeasure {
        total_mass: roots.n_actual as f64 * w,
        collapsed: roots.n_actual < n,
        atoms,
    })
}

/// Winding number of F around the circle |z - center| = radius.
pub fn winding_number(f: &RandomPolynomial, center: Complex64, radius: f64, points: usize) -> i64 {
    let mut total = 0.0;
    let at = |j: usize| {
        let z = center + Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * j as f64 / points as f64);
        f.series().eval_scaled(&[z]).0
    };
    let mut prev = at(0);
    for j in 1..=points {
        let cur = at(j % points);
        total += (cur / prev).arg();
        prev = cur;
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}

/// Root dump with columns sample, re, im, multiplicity, residual.
pub fn write_roots_csv<W: Write>(mut out: W, sets: &[(usize, &RootSet)]) -> std::io::Result<()> {
    writeln!(out, "sample,re,im,multiplicity,residual")?;
    for (id, set) in sets {
        for r in &set.roots {
            writeln!(out, "{id},{},{},{},{}", r.z.re, r.z.im, r.multiplicity, r.residual)?;
        }
    }
    Ok(())
}
