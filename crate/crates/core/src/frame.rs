//! Monic coordinate frames for polynomial spaces on model sets.
//!
//! Each variable carries a one-variable family φ_0 = 1, φ_1, φ_2, ... of
//! monic polynomials: plain powers z^k on circles and disks, and monic
//! Chebyshev polynomials (b-a)^k/2^{2k-1} T_k on intervals. The frame
//! element for a multi-index k is the product of the per-variable factors,
//! so it equals z^k plus terms of lower total degree. Values are returned
//! with a shared logarithmic scale so high degrees never overflow.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compactset::ModelSet;
use crate::multiindex::MultiIndexTable;

const RESCALE_HIGH: f64 = 1e150;
const RESCALE_LOW: f64 = 1e-150;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisFrame {
    /// z^k
    Power,
    /// Monic Chebyshev polynomials of (z - center) / half_width.
    Chebyshev { center: f64, half_width: f64 },
}

impl AxisFrame {
    pub fn for_set(set: &ModelSet) -> AxisFrame {
        match set {
            ModelSet::Interval { a, b } => AxisFrame::Chebyshev {
                center: (a + b) / 2.0,
                half_width: (b - a) / 2.0,
            },
            _ => AxisFrame::Power,
        }
    }

    /// φ_0(z), ..., φ_degree(z) times e^{-scale}; returns the scale.
    pub fn values_into(&self, z: Complex64, degree: usize, out: &mut Vec<Complex64>) -> f64 {
        out.clear();
        out.push(Complex64::new(1.0, 0.0));
        if degree == 0 {
            return 0.0;
        }
        let (shift, first_gap, gap) = match *self {
            AxisFrame::Power => (z, 0.0, 0.0),
            AxisFrame::Chebyshev { center, half_width } => {
                let q = half_width * half_width / 4.0;
                (z - center, 2.0 * q, q)
            }
        };
        let mut scale = 0.0;
        out.push(shift);
        for k in 1..degree {
            let g = if k == 1 { first_gap } else { gap };
            let next = shift * out[k] - out[k - 1] * g;
            out.push(next);
            let mag = linf(next).max(linf(out[k]));
            if mag > RESCALE_HIGH || (mag < RESCALE_LOW && mag > 0.0) {
                let inv = 1.0 / mag;
                for v in out.iter_mut() {
                    *v *= inv;
                }
                scale += mag.ln();
            }
        }
        scale
    }

    /// Values and first derivatives of φ_0..φ_degree (unscaled).
    pub fn values_with_derivative(&self, z: Complex64, degree: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut vals = vec![Complex64::new(1.0, 0.0)];
        let mut ders = vec![Complex64::new(0.0, 0.0)];
        if degree == 0 {
            return (vals, ders);
        }
        let (shift, first_gap, gap) = match *self {
            AxisFrame::Power => (z, 0.0, 0.0),
            AxisFrame::Chebyshev { center, half_width } => {
                let q = half_width * half_width / 4.0;
                (z - center, 2.0 * q, q)
            }
        };
        vals.push(shift);
        ders.push(Complex64::new(1.0, 0.0));
        for k in 1..degree {
            let g = if k == 1 { first_gap } else { gap };
            vals.push(shift * vals[k] - vals[k - 1] * g);
            ders.push(vals[k] + shift * ders[k] - ders[k - 1] * g);
        }
        (vals, ders)
    }
}

/// A tensor frame: one [`AxisFrame`] per variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub axes: Vec<AxisFrame>,
}

/// Values v_0..v_{d-1} standing for v_i · e^{log_scale}.
#[derive(Clone, Debug, Default)]
pub struct ScaledValues {
    pub values: Vec<Complex64>,
    pub log_scale: f64,
}

impl Frame {
    pub fn for_set(set: &ModelSet) -> Frame {
        Frame {
            axes: set.factors().into_iter().map(AxisFrame::for_set).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Frame values for every entry of `table`, sharing one scale.
    pub fn values(&self, z: &[Complex64], table: &MultiIndexTable) -> ScaledValues {
        let n = table.max_degree();
        let mut buf = Vec::with_capacity(n + 1);
        if self.axes.len() == 1 {
            let log_scale = self.axes[0].values_into(z[0], n, &mut buf);
            return ScaledValues {
                values: buf,
                log_scale,
            };
        }
        let mut per_axis = Vec::with_capacity(self.axes.len());
        let mut log_scale = 0.0;
        for (axis, &w) in self.axes.iter().zip(z) {
            log_scale += axis.values_into(w, n, &mut buf);
            per_axis.push(buf.clone());
        }
        let values = table
            .entries()
            .iter()
            .map(|k| {
                k.entries()
                    .iter()
                    .zip(&per_axis)
                    .map(|(&e, vals)| vals[e as usize])
                    .product()
            })
            .collect();
        ScaledValues { values, log_scale }
    }
}

#[inline]
fn linf(z: Complex64) -> f64 {
    z.re.abs().max(z.im.abs())
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::multiindex::enumerate;

    fn chebyshev_t(k: usize, x: f64) -> f64 {
        if x.abs() <= 1.0 {
            (k as f64 * x.acos()).cos()
        } else {
            (k as f64 * x.abs().acosh()).cosh() * if x < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 }
        }
    }

    #[test]
    fn chebyshev_frame_is_monic_scaled_t() {
        let frame = AxisFrame::Chebyshev {
            center: 0.0,
            half_width: 1.0,
        };
        let mut out = Vec::new();
        for &x in &[-0.9, -0.3, 0.0, 0.41, 1.0, 1.7] {
            let s = frame.values_into(Complex64::new(x, 0.0), 12, &mut out);
            assert_eq!(s, 0.0);
            for k in 1..=12 {
                let expect = chebyshev_t(k, x) / 2f64.powi(k as i32 - 1);
                assert!((out[k].re - expect).abs() < 1e-13 * expect.abs().max(1.0), "k={k} x={x}");
            }
        }
    }

    #[test]
    fn shifted_interval_frame() {
        // [0, 4]: w = (z - 2)/2, monic element is 2^k/2^{k-1} T_k(w) = 2 T_k(w)
        let frame = AxisFrame::for_set(&ModelSet::interval(0.0, 4.0).unwrap());
        let mut out = Vec::new();
        frame.values_into(Complex64::new(3.0, 0.0), 5, &mut out);
        for k in 1..=5 {
            assert!((out[k].re - 2.0 * chebyshev_t(k, 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_prevents_overflow() {
        let mut out = Vec::new();
        let z = Complex64::new(1e6, 0.0);
        let s = AxisFrame::Power.values_into(z, 200, &mut out);
        let log_top = out[200].norm().ln() + s;
        assert!((log_top - 200.0 * 1e6f64.ln()).abs() < 1e-9);
        assert!(out.iter().all(|v| v.re.is_finite()));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let frame = AxisFrame::Chebyshev {
            center: 0.5,
            half_width: 1.5,
        };
        let z = Complex64::new(0.3, 0.2);
        let h = 1e-6;
        let (v, d) = frame.values_with_derivative(z, 9);
        let (vp, _) = frame.values_with_derivative(z + h, 9);
        let (vm, _) = frame.values_with_derivative(z - h, 9);
        for k in 0..=9 {
            let fd = (vp[k] - vm[k]) / (2.0 * h);
            assert!((fd - d[k]).norm() < 1e-6 * (1.0 + d[k].norm()));
            assert!(v[k].is_finite());
        }
    }

    #[test]
    fn tensor_frame_values() {
        let set = ModelSet::product(ModelSet::unit_interval(), ModelSet::unit_circle()).unwrap();
        let frame = Frame::for_set(&set);
        let table = enumerate(2, 3);
        let z = [Complex64::new(0.5, 0.0), Complex64::new(0.0, 2.0)];
        let vals = frame.values(&z, &table);
        for (pos, k) in table.entries().iter().enumerate() {
            let a = k.entries()[0] as usize;
            let b = k.entries()[1] as i32;
            let t = if a == 0 { 1.0 } else { chebyshev_t(a, 0.5) / 2f64.powi(a as i32 - 1) };
            let expect = z[1].powi(b) * t;
            let got = vals.values[pos] * vals.log_scale.exp();
            assert!((got - expect).norm() < 1e-13);
        }
    }
}
