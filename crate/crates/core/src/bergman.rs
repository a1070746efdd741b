//! Chebyshev–Bergman functions Γ_n = Σ |u_j|² and their normalized logarithm.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chebyshev::Basis;
use crate::compactset::ModelSet;
use crate::error::{Error, Result};

/// Γ_n(z) in linear and log form. `value` is infinite when it overflows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaValue {
    pub value: f64,
    pub log: f64,
}

/// Running-maximum log-sum-exp of 2 log|u_j(z)|.
pub fn gamma(basis: &Basis, z: &[Complex64]) -> GammaValue {
    let mut top = f64::NEG_INFINITY;
    let mut acc = 0.0f64;
    for l in basis.log_abs_u(z) {
        let t = 2.0 * l;
        if t == f64::NEG_INFINITY {
            continue;
        }
        if t > top {
            acc = acc * (top - t).exp() + 1.0;
            top = t;
        } else {
            acc += (t - top).exp();
        }
    }
    let log = top + acc.ln();
    GammaValue { value: log.exp(), log }
}

/// λ(z) = u(z)/√Γ_n(z), a unit vector in C^{d_n}.
pub fn lambda_vector(basis: &Basis, z: &[Complex64]) -> Vec<Complex64> {
    let u = basis.eval_u_scaled(z);
    let top = u.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let norm = top * u.values.iter().map(|v| (v.norm() / top).powi(2)).sum::<f64>().sqrt();
    u.values.iter().map(|v| v / norm).collect()
}

/// (1/2n) log Γ_n(z) with n the basis degree.
pub fn log_gamma_normalized(basis: &Basis, z: &[Complex64]) -> Result<f64> {
    let n = basis.degree();
    if n == 0 {
        return Err(Error::InvalidInput("degree 0 basis has no normalized Γ".into()));
    }
    Ok(gamma(basis, z).log / (2 * n) as f64)
}

/// Axis-aligned box in R^{2m}, coordinates ordered (Re z_1, Im z_1, Re z_2, Im z_2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    /// [-h, h]^{2m}.
    pub fn centered(m: usize, half: f64) -> Self {
        BoundingBox {
            lo: vec![-half; 2 * m],
            hi: vec![half; 2 * m],
        }
    }

    pub fn real_dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || !self.lo.len().is_multiple_of(2) || self.lo.is_empty() {
            return Err(Error::InvalidInput("box needs 2m lower and upper bounds".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidInput("box bounds must satisfy lo < hi".into()));
        }
        Ok(())
    }

    /// Whether K lies in the open box.
    pub fn contains_set(&self, set: &ModelSet) -> bool {
        if self.real_dim() != 2 * set.dim() {
            return false;
        }
        set.factors().iter().enumerate().all(|(i, f)| {
            let (x0, x1, y0, y1) = match f {
                ModelSet::Interval { a, b } => (*a, *b, 0.0, 0.0),
                ModelSet::Circle { radius } | ModelSet::Disk { radius } => (-radius, *radius, -radius, *radius),
                ModelSet::Product { .. } => return false,
            };
            self.lo[2 * i] < x0 && x1 < self.hi[2 * i] && self.lo[2 * i + 1] < y0 && y1 < self.hi[2 * i + 1]
        })
    }

    /// Tensor grid with `resolution` nodes per real axis (endpoints
    /// included) and the matching trapezoidal weights.
    pub fn trapezoid_grid(&self, resolution: usize) -> (Vec<Vec<Complex64>>, Vec<f64>) {
        let dims = self.real_dim();
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..dims)
            .map(|a| {
                let h = (self.hi[a] - self.lo[a]) / (resolution - 1) as f64;
                let nodes = (0..resolution).map(|i| self.lo[a] + h * i as f64).collect();
                let weights = (0..resolution)
                    .map(|i| if i == 0 || i == resolution - 1 { 0.5 * h } else { h })
                    .collect();
                (nodes, weights)
            })
            .collect();
        let total = resolution.pow(dims as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims];
        for _ in 0..total {
            let z = (0..dims / 2)
                .map(|c| Complex64::new(axes[2 * c].0[idx[2 * c]], axes[2 * c + 1].0[idx[2 * c + 1]]))
                .collect();
            points.push(z);
            weights.push(idx.iter().enumerate().map(|(a, &i)| axes[a].1[i]).product());
            for a in (0..dims).rev() {
                idx[a] += 1;
                if idx[a] < resolution {
                    break;
                }
                idx[a] = 0;
            }
        }
        (points, weights)
    }
}

/// Smallest resolution accepted per real axis.
pub fn min_resolution(m: usize) -> usize {
    if m == 1 {
        64
    } else {
        20
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub z: Vec<Complex64>,
    pub log_gamma: f64,
    pub normalized: f64,
    pub green: f64,
}

impl FieldPoint {
    pub fn abs_diff(&self) -> f64 {
        (self.normalized - self.green).abs()
    }
}

/// (1/2n) log Γ_n and V_K sampled on a box grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BergmanField {
    pub degree: usize,
    pub bounds: BoundingBox,
    pub resolution: usize,
    pub points: Vec<FieldPoint>,
    #[serde(skip)]
    weights: Vec<f64>,
}

impl BergmanField {
    pub fn build(basis: &Basis, set: &ModelSet, bounds: &BoundingBox, resolution: usize) -> Result<Self> {
        let m = set.dim();
        if basis.dim() != m {
            return Err(Error::InvalidInput("basis and set live in different dimensions".into()));
        }
        if basis.degree() == 0 {
            return Err(Error::InvalidInput("Γ_n needs a basis of degree n >= 1".into()));
        }
        bounds.validate()?;
        if !bounds.contains_set(set) {
            return Err(Error::InvalidInput("box must contain K in its interior".into()));
        }
        if resolution < min_resolution(m) {
            return Err(Error::InvalidInput(format!(
                "resolution {resolution} below the minimum {} per axis",
                min_resolution(m)
            )));
        }
        let (grid, weights) = bounds.trapezoid_grid(resolution);
        let n2 = (2 * basis.degree()) as f64;
        let points: Result<Vec<FieldPoint>> = grid
            .into_par_iter()
            .map(|z| {
                let g = gamma(basis, &z);
                let green = set.green_value(&z)?;
                Ok(FieldPoint {
                    z,
                    log_gamma: g.log,
                    normalized: g.log / n2,
                    green,
                })
            })
            .collect();
        Ok(BergmanField {
            degree: basis.degree(),
            bounds: bounds.clone(),
            resolution,
            points: points?,
            weights,
        })
    }

    /// Trapezoidal ∫ |(1/2n) log Γ_n − V_K| over the box.
    pub fn l1_raw(&self) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * p.abs_diff()).sum()
    }

    /// Maximum over the grid of (1/2n) log Γ_n − V_K.
    pub fn max_excess(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.normalized - p.green)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let m = self.bounds.real_dim() / 2;
        for i in 1..=m {
            write!(out, "re_z{i},im_z{i},")?;
        }
        writeln!(out, "log_gamma,normalized_log_gamma,green,abs_diff")?;
        for p in &self.points {
            for z in &p.z {
                write!(out, "{},{},", z.re, z.im)?;
            }
            writeln!(out, "{},{},{},{}", p.log_gamma, p.normalized, p.green, p.abs_diff())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Report {
    pub degree: usize,
    pub resolution: usize,
    /// Box average of |(1/2n) log Γ_n − V_K| (integral divided by box volume).
    pub error: f64,
    /// The integral itself.
    pub raw: f64,
    pub max_excess: f64,
}

/// L¹ distance between (1/2n) log Γ_n and V_K on a box, reported as a box
/// average; the raw integral is returned alongside.
pub fn l1loc_error(basis: &Basis, set: &ModelSet, bounds: &BoundingBox, resolution: usize) -> Result<L1Report> {
    let field = BergmanField::build(basis, set, bounds, resolution)?;
    let raw = field.l1_raw();
    Ok(L1Report {
        degree: field.degree,
        resolution,
        error: raw / bounds.volume(),
        raw,
        max_excess: field.max_excess(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chebyshev::{BasisOptions, Family};

    fn circle_basis(n: usize) -> Basis {
        Basis::build(&ModelSet::unit_circle(), Family::Minimax, n, &BasisOptions::default()).unwrap()
    }

    #[test]
    fn gamma_on_circle_basis() {
        let b = circle_basis(8);
        let on = gamma(&b, &[Complex64::from_polar(1.0, 0.7)]);
        assert!((on.value - 9.0).abs() < 1e-10);
        assert!((gamma(&b, &[Complex64::new(0.0, 0.0)]).value - 1.0).abs() < 1e-14);
        let two = gamma(&b, &[Complex64::new(2.0, 0.0)]);
        assert!((two.value - 87381.0).abs() < 1e-6);
    }

    #[test]
    fn lambda_is_unit() {
        let b = circle_basis(1);
        let l = lambda_vector(&b, &[Complex64::new(1.0, 0.0)]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((l[0].re - r).abs() < 1e-15 && (l[1].re - r).abs() < 1e-15);
    }

    #[test]
    fn degree_zero_rejected() {
        let b = circle_basis(0);
        assert!(log_gamma_normalized(&b, &[Complex64::new(0.5, 0.0)]).is_err());
        let bx = BoundingBox::centered(1, 2.0);
        assert!(l1loc_error(&b, &ModelSet::unit_circle(), &bx, 64).is_err());
    }

    #[test]
    fn coarse_grid_rejected() {
        let b = circle_basis(4);
        let bx = BoundingBox::centered(1, 2.0);
        assert!(l1loc_error(&b, &ModelSet::unit_circle(), &bx, 8).is_err());
    }

    #[test]
    fn trapezoid_weights_sum_to_volume() {
        let bx = BoundingBox {
            lo: vec![-1.0, 0.0],
            hi: vec![2.0, 0.5],
        };
        let (pts, w) = bx.trapezoid_grid(11);
        assert_eq!(pts.len(), 121);
        assert!((w.iter().sum::<f64>() - 1.5).abs() < 1e-14);
    }
}
