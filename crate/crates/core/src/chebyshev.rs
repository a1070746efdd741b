//! Asymptotically Chebyshev bases on model sets.
//!
//! Three monic families are supported: discrete minimax polynomials
//! (Lawson iteration on the Shilov boundary), Leja products, and
//! L²(μ)-minimal polynomials (Gram–Schmidt against a reference measure).
//! Every element is monic in the sense of P(k(j)): the coefficient of
//! z^{k(j)} is one and only frame elements earlier in the graded order
//! appear otherwise.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compactset::{axis_sample, ModelSet};
use crate::error::{Error, Result};
use crate::frame::{AxisFrame, Frame, ScaledValues};
use crate::multiindex::{dimension, direction, enumerate, MultiIndex, MultiIndexTable, SimplexDirection};

/// Highest total degree for two-variable minimax solves.
pub const MAX_MINIMAX_DEGREE_2D: usize = 12;

/// Relative Lawson duality gap (grid max vs. weighted L² lower bound) at
/// which an unconverged two-variable iterate is still used in a basis.
pub const MINIMAX_2D_GAP: f64 = 1e-2;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Minimax,
    Leja,
    L2mu,
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::Minimax => "minimax",
            Family::Leja => "leja",
            Family::L2mu => "l2mu",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum MonicForm {
    /// φ_j + Σ_{l<j} lower[l] φ_l in a tensor frame.
    Frame { frame: Frame, lower: Vec<Complex64> },
    /// Π (z - root), one variable.
    Product { roots: Vec<Complex64> },
}

/// An element of P(k(j)) = { z^{k(j)} + Σ_{l<j} c_l z^{k(l)} }.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonicPolynomial {
    pub leading: MultiIndex,
    #[serde(flatten)]
    pub form: MonicForm,
}

impl MonicPolynomial {
    pub fn constant(m: usize, frame: Frame) -> Self {
        MonicPolynomial {
            leading: MultiIndex::zero(m),
            form: MonicForm::Frame {
                frame,
                lower: Vec::new(),
            },
        }
    }

    pub fn from_roots(roots: Vec<Complex64>) -> Self {
        MonicPolynomial {
            leading: MultiIndex::new(vec![roots.len() as u32]),
            form: MonicForm::Product { roots },
        }
    }

    pub fn degree(&self) -> usize {
        self.leading.degree()
    }

    /// Value as (mantissa, log scale): p(z) = mantissa · e^{scale}.
    pub fn eval_scaled(&self, z: &[Complex64]) -> (Complex64, f64) {
        match &self.form {
            MonicForm::Frame { frame, lower } if frame.dim() == 1 => {
                let mut vals = Vec::with_capacity(lower.len() + 1);
                let scale = frame.axes[0].values_into(z[0], self.degree(), &mut vals);
                let j = lower.len();
                let mut acc = vals[j];
                for (c, v) in lower.iter().zip(&vals) {
                    acc += c * v;
                }
                (acc, scale)
            }
            MonicForm::Frame { frame, lower } => {
                let table = enumerate(frame.dim(), self.degree());
                let vals = frame.values(z, &table);
                let j = lower.len();
                let mut acc = vals.values[j];
                for (c, v) in lower.iter().zip(&vals.values) {
                    acc += c * v;
                }
                (acc, vals.log_scale)
            }
            MonicForm::Product { roots } => {
                let mut acc = ONE;
                let mut scale = 0.0;
                for r in roots {
                    acc *= z[0] - r;
                    let mag = acc.norm();
                    if mag > 1e150 || (mag < 1e-150 && mag > 0.0) {
                        acc /= mag;
                        scale += mag.ln();
                    }
                }
                (acc, scale)
            }
        }
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let (v, s) = self.eval_scaled(z);
        v * s.exp()
    }

    pub fn log_abs(&self, z: &[Complex64]) -> f64 {
        let (v, s) = self.eval_scaled(z);
        v.norm().ln() + s
    }

    /// The coefficient of z^{k(j)}; one by construction.
    pub fn leading_coefficient(&self) -> Complex64 {
        ONE
    }
}

// ---------------------------------------------------------------------------
// Lawson minimax

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxOptions {
    /// Boundary points (per factor for product sets). Defaults to
    /// max(1024, 32 s) for one variable and 64 per factor for two.
    pub grid_size: Option<usize>,
    /// Total least squares solves allowed.
    pub max_iters: usize,
    pub damping: f64,
    /// Relative change of the maximum that stops the iteration.
    pub tolerance: f64,
    /// Lawson steps on the fixed grid before the point set follows the
    /// local maxima of the residual.
    pub warmup: usize,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        MinimaxOptions {
            grid_size: None,
            max_iters: 500,
            damping: 1.0,
            tolerance: 1e-10,
            warmup: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinimaxSolution {
    pub poly: MonicPolynomial,
    /// M̂_j: the maximum of |p| over the boundary sample, refined at its peaks.
    pub grid_max: f64,
    /// Least squares solves performed.
    pub iterations: usize,
    /// Weighted L² objective Σ w_i |p(x_i)|² (weights summing to one) over the
    /// fixed-grid Lawson steps.
    pub objective_history: Vec<f64>,
    /// Maximum of |p| after each solve.
    pub grid_max_history: Vec<f64>,
}

pub(crate) fn default_grid_size(m: usize, degree: usize) -> usize {
    if m == 1 {
        (32 * degree).max(1024)
    } else {
        64
    }
}

/// Parametrized Shilov boundary: x on intervals, angle on circles.
struct BoundaryAxis {
    params: Vec<f64>,
    periodic: bool,
    lo: f64,
    hi: f64,
    radius: Option<f64>,
}

impl BoundaryAxis {
    fn new(set: &ModelSet, count: usize) -> Self {
        match set {
            ModelSet::Interval { a, b } => BoundaryAxis {
                params: axis_sample(set, count).iter().map(|z| z.re).collect(),
                periodic: false,
                lo: *a,
                hi: *b,
                radius: None,
            },
            ModelSet::Circle { radius } | ModelSet::Disk { radius } => BoundaryAxis {
                params: (0..count).map(|k| 2.0 * PI * k as f64 / count as f64).collect(),
                periodic: true,
                lo: 0.0,
                hi: 2.0 * PI,
                radius: Some(*radius),
            },
            ModelSet::Product { .. } => unreachable!("factors are one-dimensional"),
        }
    }

    fn point(&self, t: f64) -> Complex64 {
        match self.radius {
            Some(r) => Complex64::from_polar(r, t),
            None => Complex64::new(t.clamp(self.lo, self.hi), 0.0),
        }
    }

    fn neighbors(&self, i: usize) -> [Option<usize>; 2] {
        let n = self.params.len();
        if self.periodic {
            [Some((i + n - 1) % n), Some((i + 1) % n)]
        } else {
            [i.checked_sub(1), (i + 1 < n).then_some(i + 1)]
        }
    }

    /// Bracket of one grid cell on each side of index i.
    fn bracket(&self, i: usize) -> (f64, f64) {
        let n = self.params.len();
        if self.periodic {
            let step = 2.0 * PI / n as f64;
            (self.params[i] - step, self.params[i] + step)
        } else {
            (self.params[i.saturating_sub(1)], self.params[(i + 1).min(n - 1)])
        }
    }

    fn distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        if self.periodic {
            d.min(2.0 * PI - d)
        } else {
            d
        }
    }
}

fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Column-scaled frame values φ_0..φ_j at a boundary point.
struct ScaledColumns<'a> {
    frame: &'a Frame,
    table: &'a MultiIndexTable,
    col_scale: &'a [f64],
}

impl ScaledColumns<'_> {
    fn row(&self, z: &[Complex64], out: &mut Vec<Complex64>) {
        let cols = self.col_scale.len();
        if self.frame.dim() == 1 {
            let factor = self.frame.axes[0]
                .values_into(z[0], self.table.max_degree(), out)
                .exp();
            out.truncate(cols);
            for (v, sc) in out.iter_mut().zip(self.col_scale) {
                *v *= factor / sc;
            }
            return;
        }
        let vals = self.frame.values(z, self.table);
        let factor = vals.log_scale.exp();
        out.clear();
        out.extend(
            vals.values[..cols]
                .iter()
                .zip(self.col_scale)
                .map(|(v, sc)| v * (factor / sc)),
        );
    }

    fn residual(&self, z: &[Complex64], y: &[Complex64], buf: &mut Vec<Complex64>) -> f64 {
        self.row(z, buf);
        let j = y.len();
        let mut r = buf[j];
        for (c, v) in y.iter().zip(buf.iter()) {
            r += c * v;
        }
        r.norm_sqr().sqrt()
    }
}

/// Least uniform deviation monic polynomial with leading index `k`, by
/// Lawson's iteratively reweighted least squares on the boundary.
///
/// The first `warmup` steps are classical Lawson on the fixed grid. After
/// that the point set is replaced by the local maxima of the residual
/// (located on the grid, refined by golden-section search), carrying over
/// the Lawson weight of each basin, and Lawson steps continue on that set.
/// The reported maximum is therefore independent of the grid resolution.
/// Zeroes coefficients (in scaled columns) too small to move the residual
/// `level` by more than roundoff.
fn chop_noise(y: &[Complex64], level: f64) -> Vec<Complex64> {
    let floor = 64.0 * f64::EPSILON * level;
    y.iter().map(|c| if c.norm() <= floor { ZERO } else { *c }).collect()
}

pub fn minimax_monic(set: &ModelSet, k: &MultiIndex, opts: &MinimaxOptions) -> Result<MinimaxSolution> {
    set.validate()?;
    let m = set.dim();
    let s = k.degree();
    if k.dim() != m {
        return Err(Error::InvalidInput(format!("multi-index {k} does not live in C^{m}")));
    }
    if s == 0 {
        return Err(Error::InvalidInput("minimax solve needs s(j) >= 1".into()));
    }
    if m == 2 && s > MAX_MINIMAX_DEGREE_2D {
        return Err(Error::Unsupported(format!(
            "two-variable minimax beyond total degree {MAX_MINIMAX_DEGREE_2D}"
        )));
    }
    if !(opts.damping > 0.0 && opts.damping.is_finite()) {
        return Err(Error::InvalidInput(format!("damping must be positive, got {}", opts.damping)));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be positive".into()));
    }
    let per_factor = opts.grid_size.unwrap_or_else(|| default_grid_size(m, s));
    let total_points = per_factor.checked_pow(m as u32).unwrap_or(usize::MAX);
    if total_points < 4 * (s + 1) {
        return Err(Error::InvalidInput(format!(
            "grid of {total_points} points is too coarse for degree {s}"
        )));
    }

    let table = enumerate(m, s);
    let j = table.position(k).expect("leading index belongs to its own table");
    let frame = Frame::for_set(set);
    let axes: Vec<BoundaryAxis> = set.factors().iter().map(|f| BoundaryAxis::new(f, per_factor)).collect();
    let grid_params: Vec<Vec<f64>> = if m == 1 {
        axes[0].params.iter().map(|&t| vec![t]).collect()
    } else {
        axes[0]
            .params
            .iter()
            .flat_map(|&p| axes[1].params.iter().map(move |&q| vec![p, q]))
            .collect()
    };
    let to_point = |t: &[f64]| -> Vec<Complex64> { t.iter().zip(&axes).map(|(&ti, ax)| ax.point(ti)).collect() };
    let cols = j + 1;

    // row-major grid matrix; columns scaled to unit maximum
    let mut grid_rows = Vec::with_capacity(grid_params.len() * cols);
    for t in &grid_params {
        let vals = frame.values(&to_point(t), &table);
        let factor = vals.log_scale.exp();
        grid_rows.extend(vals.values[..cols].iter().map(|v| v * factor));
    }
    let mut col_scale = vec![0.0f64; cols];
    for row in grid_rows.chunks(cols) {
        for (sc, v) in col_scale.iter_mut().zip(row) {
            *sc = sc.max(v.norm_sqr().sqrt());
        }
    }
    for sc in col_scale.iter_mut() {
        if *sc == 0.0 {
            *sc = 1.0;
        }
    }
    for row in grid_rows.chunks_mut(cols) {
        for (v, sc) in row.iter_mut().zip(&col_scale) {
            *v /= *sc;
        }
    }
    let real = grid_rows.iter().all(|v| v.im == 0.0);
    let columns = ScaledColumns {
        frame: &frame,
        table: &table,
        col_scale: &col_scale,
    };

    let residuals = |rows: &[Complex64], y: &[Complex64]| -> Vec<f64> {
        rows.chunks(cols)
            .map(|row| {
                let mut r = row[j];
                for (c, v) in y.iter().zip(row) {
                    r += c * v;
                }
                r.norm_sqr().sqrt()
            })
            .collect()
    };
    let lawson_update = |weights: &mut [f64], r: &[f64]| -> Result<()> {
        let mut total = 0.0;
        for (w, ri) in weights.iter_mut().zip(r) {
            *w *= ri.powf(opts.damping);
            total += *w;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::RankDeficient("lawson weights collapsed".into()));
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(())
    };
    let solve = |rows: &[Complex64], weights: &[f64]| -> Result<Vec<Complex64>> {
        let w_max = weights.iter().cloned().fold(0.0, f64::max);
        weighted_least_squares(rows, cols, weights, w_max * 1e-30, real)
    };

    // one-variable warm-up runs on a strided subgrid; the full grid is
    // still used to locate peaks
    // (the stride divides the grid so circle subgrids stay equispaced)
    let stride = if m == 1 {
        let n_grid = grid_params.len();
        let mut d = (n_grid / (8 * (s + 1)).max(256)).max(1);
        while !n_grid.is_multiple_of(d) {
            d -= 1;
        }
        d
    } else {
        1
    };
    let warm_idx: Vec<usize> = (0..grid_params.len()).step_by(stride).collect();
    let warm_params: Vec<Vec<f64>> = warm_idx.iter().map(|&i| grid_params[i].clone()).collect();
    let warm_rows: Vec<Complex64> = if stride == 1 {
        grid_rows.clone()
    } else {
        warm_idx.iter().flat_map(|&i| grid_rows[i * cols..(i + 1) * cols].iter().copied()).collect()
    };
    let mut weights = vec![1.0 / warm_params.len() as f64; warm_params.len()];
    let mut objective_history = Vec::new();
    let mut grid_max_history = Vec::new();
    let mut iterations = 0;
    let mut y = Vec::new();
    let mut prev_max = f64::NAN;
    let mut settled = false;

    // classical Lawson on the grid; two-variable solves stay here
    let grid_steps = if m == 1 { opts.warmup.min(opts.max_iters) } else { opts.max_iters };
    for _ in 0..grid_steps {
        y = solve(&warm_rows, &weights)?;
        iterations += 1;
        let r = residuals(&warm_rows, &y);
        objective_history.push(weights.iter().zip(&r).map(|(w, ri)| w * ri * ri).sum::<f64>() * col_scale[j] * col_scale[j]);
        let e = r.iter().cloned().fold(0.0, f64::max);
        grid_max_history.push(e * col_scale[j]);
        settled = (e - prev_max).abs() <= opts.tolerance * e;
        prev_max = e;
        if settled {
            break;
        }
        lawson_update(&mut weights, &r)?;
    }
    if y.is_empty() && unknowns_of(cols) > 0 {
        y = solve(&warm_rows, &weights)?;
        iterations += 1;
    }
    if m == 2 {
        let poly = MonicPolynomial {
            leading: k.clone(),
            form: MonicForm::Frame {
                frame: frame.clone(),
                lower: chop_noise(&y, prev_max)
                    .iter()
                    .enumerate()
                    .map(|(l, c)| c * (col_scale[j] / col_scale[l]))
                    .collect(),
            },
        };
        let grid_max = prev_max * col_scale[j];
        if !settled {
            let lower_bound = objective_history.last().copied().unwrap_or(0.0).sqrt();
            return Err(Error::NonConvergence {
                iterations,
                residual: grid_max,
                lower_bound,
                last: Box::new(poly),
            });
        }
        return Ok(MinimaxSolution {
            poly,
            grid_max,
            iterations,
            objective_history,
            grid_max_history,
        });
    }

    // Lawson on the moving set of residual peaks: all grid mass moves onto
    // the nearest peak and the grid is only used to locate peaks.
    let mut grid_w = weights;
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut peak_w: Vec<f64> = Vec::new();
    let mut buf = Vec::with_capacity(cols);
    let mut prev_peak_max = f64::NAN;
    let mut last_bound = objective_history.last().copied().unwrap_or(0.0).sqrt() / col_scale[j];
    let finish = |y: &[Complex64], e: f64| -> MonicPolynomial {
        let lower: Vec<Complex64> = chop_noise(y, e)
            .iter()
            .enumerate()
            .map(|(l, c)| c * (col_scale[j] / col_scale[l]))
            .collect();
        MonicPolynomial {
            leading: k.clone(),
            form: MonicForm::Frame {
                frame: frame.clone(),
                lower,
            },
        }
    };
    loop {
        let grid_r = residuals(&grid_rows, &y);
        let peaks = locate_peaks(&axes, &grid_r, per_factor, 2 * cols + 8, |t| columns.residual(&to_point(t), &y, &mut buf));
        let e = peaks.iter().map(|p| p.value).fold(0.0, f64::max);
        grid_max_history.push(e * col_scale[j]);
        // a settled grid phase means the extremal set is already resolved
        // (this includes continua of extremal points, e.g. z^n on a circle)
        if settled || (e - prev_peak_max).abs() <= opts.tolerance * e {
            return Ok(MinimaxSolution {
                poly: finish(&y, e),
                grid_max: e * col_scale[j],
                iterations,
                objective_history,
                grid_max_history,
            });
        }
        prev_peak_max = e;
        if iterations + 3 > opts.max_iters {
            return Err(Error::NonConvergence {
                iterations,
                residual: e * col_scale[j],
                lower_bound: last_bound * col_scale[j],
                last: Box::new(finish(&y, e)),
            });
        }

        let nearest = |t: &[f64]| -> usize {
            (0..peaks.len())
                .min_by(|&a, &b| {
                    let da = param_distance(&axes, t, &peaks[a].at);
                    let db = param_distance(&axes, t, &peaks[b].at);
                    da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("at least one peak")
        };
        let mut carried = vec![0.0f64; peaks.len()];
        for (t, w) in points.iter().zip(&peak_w) {
            carried[nearest(t)] += w;
        }
        for (t, w) in warm_params.iter().zip(grid_w.iter_mut()) {
            carried[nearest(t)] += *w;
            *w = 0.0;
        }
        let c_max = carried.iter().cloned().fold(0.0, f64::max);
        for c in carried.iter_mut() {
            *c = c.max(1e-3 * c_max);
        }
        let values: Vec<f64> = peaks.iter().map(|p| p.value).collect();
        points = peaks.into_iter().map(|p| p.at).collect();
        let mut rows = Vec::with_capacity(points.len() * cols);
        for t in &points {
            columns.row(&to_point(t), &mut buf);
            rows.extend_from_slice(&buf);
        }
        let mut all = carried;
        let total: f64 = all.iter().sum();
        for w in all.iter_mut() {
            *w /= total;
        }
        lawson_update(&mut all, &values)?;
        for step in 0..3 {
            y = solve(&rows, &all)?;
            iterations += 1;
            let r = residuals(&rows, &y);
            if step < 2 {
                lawson_update(&mut all, &r)?;
            } else {
                last_bound = all.iter().zip(&r).map(|(w, ri)| w * ri * ri).sum::<f64>().sqrt();
            }
        }
        peak_w = all;
    }
}

struct Peak {
    at: Vec<f64>,
    value: f64,
}

fn unknowns_of(cols: usize) -> usize {
    cols - 1
}

fn param_distance(axes: &[BoundaryAxis], a: &[f64], b: &[f64]) -> f64 {
    axes.iter()
        .zip(a.iter().zip(b))
        .map(|(ax, (x, y))| ax.distance(*x, *y))
        .fold(0.0, f64::max)
}

/// Local maxima of a residual sampled on the tensor grid, refined by
/// golden-section search (coordinate ascent for two factors). Keeps the
/// `limit` largest peaks.
fn locate_peaks<F: FnMut(&[f64]) -> f64>(
    axes: &[BoundaryAxis],
    grid_r: &[f64],
    per_factor: usize,
    limit: usize,
    mut residual: F,
) -> Vec<Peak> {
    let m = axes.len();
    let n = per_factor;
    let idx = |i: usize, l: usize| if m == 1 { i } else { i * n + l };
    let mut found: Vec<(Vec<usize>, f64)> = Vec::new();
    if m == 1 {
        for i in 0..n {
            let v = grid_r[i];
            if axes[0].neighbors(i).iter().flatten().all(|&nb| grid_r[nb] <= v) {
                found.push((vec![i], v));
            }
        }
    } else {
        for i in 0..n {
            for l in 0..n {
                let v = grid_r[idx(i, l)];
                let ni = axes[0].neighbors(i);
                let nl = axes[1].neighbors(l);
                let mut is_peak = true;
                'scan: for a in ni.iter().copied().chain([Some(i)]) {
                    for b in nl.iter().copied().chain([Some(l)]) {
                        if let (Some(a), Some(b)) = (a, b) {
                            if (a, b) != (i, l) && grid_r[idx(a, b)] > v {
                                is_peak = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_peak {
                    found.push((vec![i, l], v));
                }
            }
        }
    }
    let top = found.iter().map(|f| f.1).fold(0.0, f64::max);
    found.retain(|f| f.1 >= 1e-6 * top);
    found.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    found.truncate(limit);

    let cycles = if m == 1 { 1 } else { 3 };
    let mut peaks: Vec<Peak> = Vec::with_capacity(found.len());
    for (index, v0) in found {
        let mut t: Vec<f64> = index.iter().zip(axes).map(|(&i, ax)| ax.params[i]).collect();
        let mut best = v0;
        for _ in 0..cycles {
            for a in 0..m {
                let (lo, hi) = axes[a].bracket(index[a]);
                let mut probe = t.clone();
                let (ta, va) = golden_max(
                    |x| {
                        probe[a] = x;
                        residual(&probe)
                    },
                    lo,
                    hi,
                    32,
                );
                if va > best {
                    best = va;
                    t[a] = ta;
                }
            }
        }
        if axes.iter().zip(&t).any(|(ax, &x)| ax.periodic && !(0.0..2.0 * PI).contains(&x)) {
            for (ax, x) in axes.iter().zip(t.iter_mut()) {
                if ax.periodic {
                    *x = x.rem_euclid(2.0 * PI);
                }
            }
        }
        if peaks.iter().any(|p| param_distance(axes, &p.at, &t) < 1e-9) {
            continue;
        }
        peaks.push(Peak {
            at: t,
            value: best,
        });
    }
    peaks
}

/// Minimizes Σ w_i |a_{i,j} + Σ_l y_l a_{i,l}|² over y, where j = cols - 1.
fn weighted_least_squares(a: &[Complex64], cols: usize, weights: &[f64], cutoff: f64, real: bool) -> Result<Vec<Complex64>> {
    let unknowns = cols - 1;
    if unknowns == 0 {
        return Ok(Vec::new());
    }
    let j = unknowns;
    if real {
        let mut gram = vec![0.0f64; unknowns * unknowns];
        let mut rhs = vec![0.0f64; unknowns];
        let mut row_re = vec![0.0f64; cols];
        for (row, &w) in a.chunks(cols).zip(weights) {
            if w <= cutoff {
                continue;
            }
            for (dst, v) in row_re.iter_mut().zip(row) {
                *dst = v.re;
            }
            for p in 0..unknowns {
                let wp = w * row_re[p];
                rhs[p] -= wp * row_re[j];
                let g = &mut gram[p * unknowns..p * unknowns + p + 1];
                for (q, gq) in g.iter_mut().enumerate() {
                    *gq += wp * row_re[q];
                }
            }
        }
        let g = DMatrix::from_fn(unknowns, unknowns, |p, q| {
            if q <= p {
                gram[p * unknowns + q]
            } else {
                gram[q * unknowns + p]
            }
        });
        let sol = solve_spd(g, DVector::from_vec(rhs))?;
        Ok(sol.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    } else {
        let mut gram = vec![ZERO; unknowns * unknowns];
        let mut rhs = vec![ZERO; unknowns];
        for (row, &w) in a.chunks(cols).zip(weights) {
            if w <= cutoff {
                continue;
            }
            for p in 0..unknowns {
                let wp = row[p].conj() * w;
                rhs[p] -= wp * row[j];
                let g = &mut gram[p * unknowns..p * unknowns + p + 1];
                for (q, gq) in g.iter_mut().enumerate() {
                    *gq += wp * row[q];
                }
            }
        }
        let g = DMatrix::from_fn(unknowns, unknowns, |p, q| {
            if q <= p {
                gram[p * unknowns + q]
            } else {
                gram[q * unknowns + p].conj()
            }
        });
        let sol = solve_spd(g, DVector::from_vec(rhs))?;
        Ok(sol.iter().copied().collect())
    }
}

/// Cholesky solve with a relative ridge of 1e-13 on the diagonal. The
/// ridge keeps solves well posed when the Lawson weights concentrate on
/// fewer points than unknowns (non-unique minimax in two variables).
fn solve_spd<T: nalgebra::ComplexField<RealField = f64> + Copy>(mut g: DMatrix<T>, rhs: DVector<T>) -> Result<DVector<T>> {
    let n = g.nrows();
    let diag_max = (0..n).map(|i| g[(i, i)].real()).fold(0.0, f64::max);
    if !(diag_max > 0.0 && diag_max.is_finite()) {
        return Err(Error::RankDeficient("weighted normal matrix has no positive diagonal".into()));
    }
    let ridge = diag_max * 1e-13;
    for i in 0..n {
        g[(i, i)] += T::from_real(ridge);
    }
    let chol = Cholesky::new(g).ok_or_else(|| Error::RankDeficient("weighted normal matrix is not positive definite".into()))?;
    let sol = chol.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient("non-finite least squares solution".into()));
    }
    Ok(sol)
}

// ---------------------------------------------------------------------------
// Leja points

/// Greedy Leja sequence on the boundary grid of a one-variable set.
///
/// ζ_0 is the rightmost point; ties go to the smallest angle (circles) or
/// the leftmost point (intervals).
pub fn leja_points(set: &ModelSet, count: usize) -> Result<Vec<Complex64>> {
    set.validate()?;
    if set.dim() != 1 {
        return Err(Error::Unsupported("Leja points in C^2".into()));
    }
    if count == 0 {
        return Err(Error::InvalidInput("need at least one Leja point".into()));
    }
    let grid = axis_sample(set, default_grid_size(1, count));
    let first = set.rightmost()?;
    let start = grid
        .iter()
        .position(|z| (*z - first).norm() < 1e-14)
        .expect("rightmost point is on the grid");
    let mut points = vec![grid[start]];
    let mut log_prod = vec![0.0f64; grid.len()];
    let mut used = vec![false; grid.len()];
    used[start] = true;
    while points.len() < count {
        let last = *points.last().unwrap();
        let mut best: Option<(usize, f64)> = None;
        for (i, z) in grid.iter().enumerate() {
            if used[i] {
                continue;
            }
            log_prod[i] += (*z - last).norm().ln();
            let v = log_prod[i];
            match best {
                Some((_, b)) if v <= b + 1e-12 * (1.0 + b.abs()) => {}
                _ => best = Some((i, v)),
            }
        }
        let (i, _) = best.ok_or_else(|| Error::InsufficientData("Leja grid exhausted".into()))?;
        used[i] = true;
        points.push(grid[i]);
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// L²(μ)-minimal polynomials

/// Discrete reference measure: Gauss–Chebyshev nodes for the arcsine law
/// on intervals, equispaced nodes for arclength on circles (and on the
/// boundary circle of disks), tensor products for product sets.
#[derive(Clone, Debug)]
pub struct ReferenceMeasure {
    pub nodes: Vec<Vec<Complex64>>,
    pub weights: Vec<f64>,
}

impl ReferenceMeasure {
    pub fn for_set(set: &ModelSet, count: usize) -> Result<Self> {
        set.validate()?;
        if count == 0 {
            return Err(Error::InvalidInput("reference measure needs nodes".into()));
        }
        let axis = |f: &ModelSet| -> Vec<Complex64> {
            match f {
                ModelSet::Interval { a, b } => {
                    let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
                    (1..=count)
                        .map(|k| Complex64::new(c + h * (PI * (2 * k - 1) as f64 / (2 * count) as f64).cos(), 0.0))
                        .collect()
                }
                ModelSet::Circle { radius } | ModelSet::Disk { radius } => (0..count)
                    .map(|k| Complex64::from_polar(*radius, 2.0 * PI * (k as f64 + 0.5) / count as f64))
                    .collect(),
                ModelSet::Product { .. } => unreachable!(),
            }
        };
        let factors = set.factors();
        let nodes: Vec<Vec<Complex64>> = if factors.len() == 1 {
            axis(factors[0]).into_iter().map(|z| vec![z]).collect()
        } else {
            let first = axis(factors[0]);
            let second = axis(factors[1]);
            first
                .iter()
                .flat_map(|&p| second.iter().map(move |&q| vec![p, q]))
                .collect()
        };
        let w = 1.0 / nodes.len() as f64;
        let weights = vec![w; nodes.len()];
        Ok(ReferenceMeasure { nodes, weights })
    }
}

/// Monic L²(μ) minimizers for every entry of `enumerate(m, degree)`, by
/// Gram–Schmidt (two passes) on the frame elements in table order.
pub fn l2_family(set: &ModelSet, degree: usize, measure: &ReferenceMeasure) -> Result<Vec<MonicPolynomial>> {
    set.validate()?;
    let m = set.dim();
    let table = enumerate(m, degree);
    let frame = Frame::for_set(set);
    let d = table.len();
    if measure.nodes.len() < d {
        return Err(Error::RankDeficient(format!(
            "{} quadrature nodes cannot separate {d} basis elements",
            measure.nodes.len()
        )));
    }
    // column-major samples of each frame element
    let mut columns = vec![Vec::with_capacity(measure.nodes.len()); d];
    for z in &measure.nodes {
        let vals = frame.values(z, &table);
        let factor = vals.log_scale.exp();
        for (col, v) in columns.iter_mut().zip(&vals.values) {
            col.push(v * factor);
        }
    }
    let w = &measure.weights;
    let inner = |f: &[Complex64], g: &[Complex64]| -> Complex64 {
        f.iter().zip(g).zip(w).map(|((a, b), &wi)| a * b.conj() * wi).sum()
    };

    let mut ortho: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    let mut norms: Vec<f64> = Vec::with_capacity(d);
    let mut coeffs: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    let mut out = Vec::with_capacity(d);
    for (jpos, column) in columns.into_iter().enumerate() {
        let start_norm = inner(&column, &column).re;
        let mut q = column;
        let mut c = vec![ZERO; jpos];
        for _pass in 0..2 {
            for l in 0..jpos {
                let p = inner(&q, &ortho[l]) / norms[l];
                for (qi, oi) in q.iter_mut().zip(&ortho[l]) {
                    *qi -= p * oi;
                }
                c[l] -= p;
                for (cl, ol) in c.iter_mut().zip(&coeffs[l]) {
                    *cl -= p * ol;
                }
            }
        }
        let norm = inner(&q, &q).re;
        if !(norm > 1e-20 * start_norm) || norm == 0.0 {
            return Err(Error::RankDeficient(format!(
                "Gram matrix is singular at element {}",
                jpos + 1
            )));
        }
        out.push(MonicPolynomial {
            leading: table.entries()[jpos].clone(),
            form: MonicForm::Frame {
                frame: frame.clone(),
                lower: c.clone(),
            },
        });
        ortho.push(q);
        norms.push(norm);
        coeffs.push(c);
    }
    Ok(out)
}

/// The L²(μ)-minimal monic polynomial with leading index `k`.
pub fn l2_minimal(set: &ModelSet, measure: &ReferenceMeasure, k: &MultiIndex) -> Result<MonicPolynomial> {
    if k.dim() != set.dim() {
        return Err(Error::InvalidInput(format!("multi-index {k} does not match the set")));
    }
    let family = l2_family(set, k.degree(), measure)?;
    let table = enumerate(set.dim(), k.degree());
    let pos = table.position(k).expect("index in its own table");
    Ok(family[pos].clone())
}

// ---------------------------------------------------------------------------
// Sup norms

/// ‖p‖_K for a one-variable set: grid maximum of log|p| followed by a
/// golden-section refinement around the largest local maxima. Returns the
/// logarithm of the norm.
pub(crate) fn log_sup_norm_1d<F: Fn(Complex64) -> f64>(set: &ModelSet, grid_count: usize, log_abs: F) -> f64 {
    let (param, point): (Vec<f64>, Box<dyn Fn(f64) -> Complex64>) = match set {
        ModelSet::Interval { a, b } => {
            let pts = axis_sample(set, grid_count);
            let (a, b) = (*a, *b);
            (
                pts.iter().map(|z| z.re).collect(),
                Box::new(move |x: f64| Complex64::new(x.clamp(a, b), 0.0)),
            )
        }
        ModelSet::Circle { radius } | ModelSet::Disk { radius } => {
            let r = *radius;
            (
                (0..grid_count).map(|k| 2.0 * PI * k as f64 / grid_count as f64).collect(),
                Box::new(move |t: f64| Complex64::from_polar(r, t)),
            )
        }
        ModelSet::Product { .. } => unreachable!("one-variable sets only"),
    };
    let periodic = !matches!(set, ModelSet::Interval { .. });
    let n = param.len();
    let values: Vec<f64> = param.iter().map(|&t| log_abs(point(t))).collect();
    let mut best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // local maxima of the sampled curve, largest first
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let (l, r) = if periodic {
                ((i + n - 1) % n, (i + 1) % n)
            } else {
                (i.saturating_sub(1), (i + 1).min(n - 1))
            };
            values[i] >= values[l] && values[i] >= values[r]
        })
        .collect();
    peaks.sort_by(|&x, &y| values[y].partial_cmp(&values[x]).unwrap_or(std::cmp::Ordering::Equal));
    let step = if periodic { 2.0 * PI / n as f64 } else { 0.0 };
    for &i in peaks.iter().take(8) {
        if values[i] < best - 1e-3 {
            break;
        }
        let (mut lo, mut hi) = if periodic {
            (param[i] - step, param[i] + step)
        } else {
            (param[i.saturating_sub(1)], param[(i + 1).min(n - 1)])
        };
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let f = |t: f64| log_abs(point(t));
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..80 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            }
        }
        best = best.max(f1).max(f2);
    }
    best
}

// ---------------------------------------------------------------------------
// Bases

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BasisOptions {
    #[serde(default)]
    pub minimax: MinimaxOptions,
    /// Reference measure nodes (per factor) for the L²(μ) family.
    #[serde(default)]
    pub measure_nodes: Option<usize>,
}

/// Serialized form of a [`Basis`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisFile {
    pub family: Family,
    pub set: ModelSet,
    pub degree: usize,
    pub elements: Vec<MonicPolynomial>,
    pub sup_norms: Vec<f64>,
}

/// Ordered family t_1 = 1, t_2, ..., t_{d_n} with u_j = t_j / ‖t_j‖_K.
#[derive(Clone, Debug)]
pub struct Basis {
    set: ModelSet,
    family: Family,
    degree: usize,
    table: MultiIndexTable,
    frame: Frame,
    elements: Vec<MonicPolynomial>,
    sup_norms: Vec<f64>,
    log_sup_norms: Vec<f64>,
    kind: Compiled,
}

#[derive(Clone, Debug)]
enum Compiled {
    /// Sparse lower coefficients of each element in the frame.
    Frame(Vec<Vec<(usize, Complex64)>>),
    /// Leja nodes: element e is Π_{i<e} (z - nodes[i]).
    Newton(Vec<Complex64>),
}

impl Basis {
    pub fn build(set: &ModelSet, family: Family, degree: usize, opts: &BasisOptions) -> Result<Basis> {
        set.validate()?;
        let m = set.dim();
        let table = enumerate(m, degree);
        let frame = Frame::for_set(set);
        let elements = match family {
            Family::Minimax => {
                if m == 2 && degree > MAX_MINIMAX_DEGREE_2D {
                    return Err(Error::Unsupported(format!(
                        "two-variable minimax beyond total degree {MAX_MINIMAX_DEGREE_2D}"
                    )));
                }
                let solved: Result<Vec<MonicPolynomial>> = table.entries()[1..]
                    .par_iter()
                    .map(|k| match minimax_monic(set, k, &opts.minimax) {
                        Ok(sol) => Ok(sol.poly),
                        // two-variable grid Lawson: accept a certified near-minimax iterate
                        Err(Error::NonConvergence {
                            residual,
                            lower_bound,
                            last,
                            ..
                        }) if m == 2 && residual - lower_bound <= MINIMAX_2D_GAP * residual => Ok(*last),
                        Err(e) => Err(e),
                    })
                    .collect();
                let mut out = vec![MonicPolynomial::constant(m, frame.clone())];
                out.extend(solved?);
                out
            }
            Family::Leja => {
                if m != 1 {
                    return Err(Error::Unsupported("Leja bases in C^2".into()));
                }
                let pts = if degree == 0 { Vec::new() } else { leja_points(set, degree)? };
                (0..=degree).map(|e| MonicPolynomial::from_roots(pts[..e].to_vec())).collect()
            }
            Family::L2mu => {
                let nodes = opts
                    .measure_nodes
                    .unwrap_or_else(|| default_grid_size(m, degree));
                let measure = ReferenceMeasure::for_set(set, nodes)?;
                l2_family(set, degree, &measure)?
            }
        };
        Basis::assemble(set.clone(), family, degree, table, frame, elements, None)
    }

    /// Leja basis through degree n.
    pub fn leja(set: &ModelSet, n: usize) -> Result<Basis> {
        Basis::build(set, Family::Leja, n, &BasisOptions::default())
    }

    fn assemble(
        set: ModelSet,
        family: Family,
        degree: usize,
        table: MultiIndexTable,
        frame: Frame,
        elements: Vec<MonicPolynomial>,
        sup_norms: Option<Vec<f64>>,
    ) -> Result<Basis> {
        if elements.len() != table.len() {
            return Err(Error::InvalidInput(format!(
                "basis has {} elements, expected d_n = {}",
                elements.len(),
                table.len()
            )));
        }
        for (e, k) in elements.iter().zip(table.entries()) {
            if &e.leading != k {
                return Err(Error::InvalidInput(format!(
                    "element with leading index {} sits at slot of {k}",
                    e.leading
                )));
            }
        }
        let kind = match family {
            Family::Leja => {
                let nodes = match elements.last().map(|e| &e.form) {
                    Some(MonicForm::Product { roots }) => roots.clone(),
                    _ => return Err(Error::InvalidInput("Leja basis needs product-form elements".into())),
                };
                for (e, el) in elements.iter().enumerate() {
                    match &el.form {
                        MonicForm::Product { roots } if roots[..] == nodes[..e] => {}
                        _ => return Err(Error::InvalidInput("Leja elements must share nested roots".into())),
                    }
                }
                Compiled::Newton(nodes)
            }
            _ => {
                let mut lists = Vec::with_capacity(elements.len());
                for (pos, el) in elements.iter().enumerate() {
                    match &el.form {
                        MonicForm::Frame { frame: f, lower } if f == &frame && lower.len() == pos => {
                            lists.push(
                                lower
                                    .iter()
                                    .enumerate()
                                    .filter(|(_, c)| **c != ZERO)
                                    .map(|(l, c)| (l, *c))
                                    .collect(),
                            );
                        }
                        _ => return Err(Error::InvalidInput(format!("element {} is not in the set frame", pos + 1))),
                    }
                }
                Compiled::Frame(lists)
            }
        };
        let mut basis = Basis {
            set,
            family,
            degree,
            table,
            frame,
            elements,
            sup_norms: Vec::new(),
            log_sup_norms: Vec::new(),
            kind,
        };
        let log_norms = match sup_norms {
            Some(norms) => {
                if norms.len() != basis.elements.len() || norms.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::InvalidInput("sup norms must be positive, one per element".into()));
                }
                norms.iter().map(|v| v.ln()).collect()
            }
            None => basis.compute_log_sup_norms(),
        };
        basis.sup_norms = log_norms.iter().map(|v: &f64| v.exp()).collect();
        basis.log_sup_norms = log_norms;
        Ok(basis)
    }

    fn compute_log_sup_norms(&self) -> Vec<f64> {
        let m = self.set.dim();
        if m == 1 {
            (0..self.elements.len())
                .map(|pos| {
                    if pos == 0 {
                        return 0.0;
                    }
                    let count = default_grid_size(1, self.table.degree_at(pos));
                    log_sup_norm_1d(&self.set, count, |z| self.log_abs_t_single(pos, z))
                })
                .collect()
        } else {
            let grid = self
                .set
                .boundary_sample(default_grid_size(m, self.degree))
                .expect("valid set");
            let mut best = vec![f64::NEG_INFINITY; self.elements.len()];
            for z in &grid {
                let t = self.eval_t_scaled(z);
                for (b, v) in best.iter_mut().zip(&t.values) {
                    *b = b.max(v.norm().ln() + t.log_scale);
                }
            }
            best
        }
    }

    fn log_abs_t_single(&self, pos: usize, z: Complex64) -> f64 {
        match &self.kind {
            Compiled::Newton(nodes) => nodes[..pos].iter().map(|r| (z - r).norm().ln()).sum(),
            Compiled::Frame(lists) => {
                let mut vals = Vec::with_capacity(pos + 1);
                let scale = self.frame.axes[0].values_into(z, self.table.degree_at(pos), &mut vals);
                let mut acc = vals[pos];
                for &(l, c) in &lists[pos] {
                    acc += c * vals[l];
                }
                acc.norm().ln() + scale
            }
        }
    }

    pub fn to_file(&self) -> BasisFile {
        BasisFile {
            family: self.family,
            set: self.set.clone(),
            degree: self.degree,
            elements: self.elements.clone(),
            sup_norms: self.sup_norms.clone(),
        }
    }

    pub fn from_file(file: BasisFile) -> Result<Basis> {
        file.set.validate()?;
        let table = enumerate(file.set.dim(), file.degree);
        let frame = Frame::for_set(&file.set);
        Basis::assemble(file.set, file.family, file.degree, table, frame, file.elements, Some(file.sup_norms))
    }

    pub fn set(&self) -> &ModelSet {
        &self.set
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn table(&self) -> &MultiIndexTable {
        &self.table
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn elements(&self) -> &[MonicPolynomial] {
        &self.elements
    }

    /// M̂_j = ‖t_j‖_K.
    pub fn sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    pub fn log_sup_norms(&self) -> &[f64] {
        &self.log_sup_norms
    }

    /// The first d_n elements as a basis of degree n.
    pub fn truncate(&self, n: usize) -> Result<Basis> {
        if n > self.degree {
            return Err(Error::InvalidInput(format!(
                "cannot extend a degree {} basis to degree {n}",
                self.degree
            )));
        }
        let d = dimension(self.dim(), n)?;
        let mut out = self.clone();
        out.degree = n;
        out.table = enumerate(self.dim(), n);
        out.elements.truncate(d);
        out.sup_norms.truncate(d);
        out.log_sup_norms.truncate(d);
        out.kind = match &self.kind {
            Compiled::Frame(lists) => Compiled::Frame(lists[..d].to_vec()),
            Compiled::Newton(nodes) => Compiled::Newton(nodes[..d - 1].to_vec()),
        };
        Ok(out)
    }

    /// t_1(z), ..., t_d(z) sharing one log scale.
    pub fn eval_t_scaled(&self, z: &[Complex64]) -> ScaledValues {
        match &self.kind {
            Compiled::Frame(lists) => {
                let vals = self.frame.values(z, &self.table);
                let values = lists
                    .iter()
                    .enumerate()
                    .map(|(j, lower)| {
                        let mut acc = vals.values[j];
                        for &(l, c) in lower {
                            acc += c * vals.values[l];
                        }
                        acc
                    })
                    .collect();
                ScaledValues {
                    values,
                    log_scale: vals.log_scale,
                }
            }
            Compiled::Newton(nodes) => {
                let mut values = Vec::with_capacity(nodes.len() + 1);
                values.push(ONE);
                let mut scale = 0.0;
                for r in nodes {
                    let next = *values.last().unwrap() * (z[0] - r);
                    values.push(next);
                    let mag = next.norm();
                    if mag > 1e150 || (mag < 1e-150 && mag > 0.0) {
                        for v in values.iter_mut() {
                            *v /= mag;
                        }
                        scale += mag.ln();
                    }
                }
                ScaledValues {
                    values,
                    log_scale: scale,
                }
            }
        }
    }

    /// u_1(z), ..., u_d(z) sharing one log scale.
    pub fn eval_u_scaled(&self, z: &[Complex64]) -> ScaledValues {
        let mut t = self.eval_t_scaled(z);
        // fold the norms in relative to the smallest so the mantissas stay finite
        let shift = self.log_sup_norms.iter().cloned().fold(f64::INFINITY, f64::min);
        for (v, ln) in t.values.iter_mut().zip(&self.log_sup_norms) {
            *v *= (shift - ln).exp();
        }
        t.log_scale -= shift;
        t
    }

    /// u_j(z) in plain floating point (may overflow far from K).
    pub fn eval_u(&self, z: &[Complex64]) -> Vec<Complex64> {
        let u = self.eval_u_scaled(z);
        let f = u.log_scale.exp();
        u.values.into_iter().map(|v| v * f).collect()
    }

    /// log|u_j(z)| for every j.
    pub fn log_abs_u(&self, z: &[Complex64]) -> Vec<f64> {
        let t = self.eval_t_scaled(z);
        t.values
            .iter()
            .zip(&self.log_sup_norms)
            .map(|(v, ln)| v.norm().ln() + t.log_scale - ln)
            .collect()
    }

    /// Compiles Σ a_l u_l into a form that evaluates in O(d) per point.
    pub fn series(&self, coeffs: &[Complex64]) -> Result<Series> {
        let d = coeffs.len();
        if d == 0 || d > self.len() {
            return Err(Error::InvalidInput(format!(
                "{d} coefficients for a basis of {} elements",
                self.len()
            )));
        }
        let top = self.table.degree_at(d - 1);
        if dimension(self.dim(), top)? != d {
            return Err(Error::InvalidInput(format!("{d} is not a dimension d_n")));
        }
        let weighted: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.log_sup_norms)
            .map(|(a, ln)| a * (-ln).exp())
            .collect();
        match &self.kind {
            Compiled::Frame(lists) => {
                let mut b = weighted.clone();
                for (j, lower) in lists[..d].iter().enumerate() {
                    for &(l, c) in lower {
                        b[l] += weighted[j] * c;
                    }
                }
                Ok(Series::Frame {
                    frame: self.frame.clone(),
                    table: enumerate(self.dim(), top),
                    coeffs: b,
                })
            }
            Compiled::Newton(nodes) => Ok(Series::Newton {
                nodes: nodes[..d - 1].to_vec(),
                coeffs: weighted,
            }),
        }
    }
}

impl Serialize for Basis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

/// A polynomial Σ b_k φ_k in the set frame, or in Newton form on Leja nodes.
#[derive(Clone, Debug)]
pub enum Series {
    Frame {
        frame: Frame,
        table: MultiIndexTable,
        coeffs: Vec<Complex64>,
    },
    Newton {
        nodes: Vec<Complex64>,
        coeffs: Vec<Complex64>,
    },
}

impl Series {
    pub fn degree(&self) -> usize {
        match self {
            Series::Frame { table, .. } => table.max_degree(),
            Series::Newton { nodes, .. } => nodes.len(),
        }
    }

    pub fn eval_scaled(&self, z: &[Complex64]) -> (Complex64, f64) {
        match self {
            Series::Frame { frame, table, coeffs } => {
                if frame.dim() == 1 {
                    let mut buf = Vec::with_capacity(coeffs.len());
                    let scale = frame.axes[0].values_into(z[0], table.max_degree(), &mut buf);
                    let acc = buf.iter().zip(coeffs).map(|(v, c)| v * c).sum();
                    (acc, scale)
                } else {
                    let vals = frame.values(z, table);
                    let acc = vals.values.iter().zip(coeffs).map(|(v, c)| v * c).sum();
                    (acc, vals.log_scale)
                }
            }
            Series::Newton { nodes, coeffs } => {
                let mut prod = ONE;
                let mut scale = 0.0f64;
                let mut acc = coeffs[0];
                for (r, c) in nodes.iter().zip(&coeffs[1..]) {
                    prod *= z[0] - r;
                    acc += c * prod;
                    let mag = prod.norm().max(acc.norm());
                    if mag > 1e150 {
                        prod /= mag;
                        acc /= mag;
                        scale += mag.ln();
                    }
                }
                (acc, scale)
            }
        }
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        match self {
            Series::Newton { nodes, coeffs } => {
                let last = coeffs.len() - 1;
                let mut acc = coeffs[last];
                for e in (0..last).rev() {
                    acc = coeffs[e] + (z[0] - nodes[e]) * acc;
                }
                acc
            }
            _ => {
                let (v, s) = self.eval_scaled(z);
                if s == 0.0 {
                    v
                } else {
                    v * s.exp()
                }
            }
        }
    }

    /// |F(z)| / Σ |b_k φ_k(z)|, computed without overflow.
    pub fn relative_residual(&self, z: &[Complex64]) -> f64 {
        match self {
            Series::Frame { frame, table, coeffs } => {
                let vals = if frame.dim() == 1 {
                    let mut buf = Vec::with_capacity(coeffs.len());
                    frame.axes[0].values_into(z[0], table.max_degree(), &mut buf);
                    buf
                } else {
                    frame.values(z, table).values
                };
                let (acc, size) = vals
                    .iter()
                    .zip(coeffs)
                    .fold((ZERO, 0.0), |(a, s), (v, c)| (a + v * c, s + (v * c).norm()));
                if size == 0.0 {
                    0.0
                } else {
                    acc.norm() / size
                }
            }
            Series::Newton { nodes, coeffs } => {
                let mut prod = ONE;
                let mut acc = coeffs[0];
                let mut size = coeffs[0].norm();
                for (r, c) in nodes.iter().zip(&coeffs[1..]) {
                    prod *= z[0] - r;
                    acc += c * prod;
                    size += (c * prod).norm();
                    if size > 1e150 {
                        prod /= size;
                        acc /= size;
                        size = 1.0;
                    }
                }
                if size == 0.0 {
                    0.0
                } else {
                    acc.norm() / size
                }
            }
        }
    }

    /// F(z) and F'(z) for one variable, unscaled.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        match self {
            Series::Frame { frame, table, coeffs } => {
                let (v, d) = frame.axes[0].values_with_derivative(z, table.max_degree());
                let f = v.iter().zip(coeffs).map(|(x, c)| x * c).sum();
                let df = d.iter().zip(coeffs).map(|(x, c)| x * c).sum();
                (f, df)
            }
            Series::Newton { nodes, coeffs } => {
                let last = coeffs.len() - 1;
                let mut f = coeffs[last];
                let mut df = ZERO;
                for e in (0..last).rev() {
                    df = f + (z - nodes[e]) * df;
                    f = coeffs[e] + (z - nodes[e]) * f;
                }
                (f, df)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Diagnostics

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevRecord {
    /// 1-based position.
    pub j: usize,
    pub k: MultiIndex,
    pub s: usize,
    pub sup_norm: f64,
    /// M̂_j^{1/s(j)}; absent for the constant element.
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevReport {
    pub family: Family,
    pub records: Vec<ChebyshevRecord>,
    /// One variable only: mean of τ̂ over the last quarter of degrees.
    pub limit_estimate: Option<f64>,
}

impl ChebyshevReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let m = self.records.first().map(|r| r.k.dim()).unwrap_or(1);
        write!(out, "j")?;
        for i in 1..=m {
            write!(out, ",k_{i}")?;
        }
        writeln!(out, ",s,sup_norm,tau")?;
        for r in &self.records {
            write!(out, "{}", r.j)?;
            for e in r.k.entries() {
                write!(out, ",{e}")?;
            }
            match r.tau {
                Some(t) => writeln!(out, ",{},{},{}", r.s, r.sup_norm, t)?,
                None => writeln!(out, ",{},{},", r.s, r.sup_norm)?,
            }
        }
        Ok(())
    }
}

pub fn chebyshev_constants(basis: &Basis) -> ChebyshevReport {
    let records: Vec<ChebyshevRecord> = basis
        .table()
        .entries()
        .iter()
        .zip(basis.log_sup_norms())
        .enumerate()
        .map(|(pos, (k, ln))| {
            let s = k.degree();
            ChebyshevRecord {
                j: pos + 1,
                k: k.clone(),
                s,
                sup_norm: ln.exp(),
                tau: (s > 0).then(|| (ln / s as f64).exp()),
            }
        })
        .collect();
    let limit_estimate = if basis.dim() == 1 && basis.degree() >= 1 {
        let taus: Vec<f64> = records.iter().filter_map(|r| r.tau).collect();
        let tail = &taus[taus.len() - (taus.len() / 4).max(1)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    } else {
        None
    };
    ChebyshevReport {
        family: basis.family(),
        records,
        limit_estimate,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionDiagnostic {
    pub theta: Vec<f64>,
    /// (j, s(j), τ̂_j) of the members, in table order.
    pub members: Vec<(usize, usize, f64)>,
    pub limit_estimate: f64,
    pub last_quartile_spread: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZReport {
    pub tolerance: f64,
    pub directions: Vec<DirectionDiagnostic>,
}

impl ZReport {
    pub fn all_pass(&self) -> bool {
        self.directions.iter().all(|d| d.pass)
    }
}

/// Convergence diagnostic for ‖t_j‖^{1/s(j)} along multi-index directions.
///
/// Members are the j with s(j) ≥ 1 whose direction k(j)/s(j) lies within
/// `tolerance` (max-norm) of θ. The direction passes when the spread of τ̂
/// over the last quarter of members is below `tolerance`. This samples
/// subsequences only and cannot certify the Z-condition.
pub fn verify_z_asymptotic(basis: &Basis, directions: &[SimplexDirection], tolerance: f64) -> Result<ZReport> {
    let m = basis.dim();
    if m > 2 {
        return Err(Error::Unsupported("more than two variables".into()));
    }
    let needed = dimension(m, 8)?;
    if basis.len() < needed {
        return Err(Error::InsufficientData(format!(
            "basis has {} elements, diagnostic needs at least {needed}",
            basis.len()
        )));
    }
    let report = chebyshev_constants(basis);
    let mut out = Vec::with_capacity(directions.len());
    for theta in directions {
        if theta.theta().len() != m {
            return Err(Error::InvalidInput(format!("direction {:?} is not in the {m}-simplex", theta.theta())));
        }
        let members: Vec<(usize, usize, f64)> = report
            .records
            .iter()
            .filter(|r| r.s >= 1)
            .filter(|r| direction(&r.k).map(|d| d.distance(theta) <= tolerance).unwrap_or(false))
            .map(|r| (r.j, r.s, r.tau.unwrap()))
            .collect();
        if members.len() < 4 {
            return Err(Error::InsufficientData(format!(
                "direction {:?} has {} members, need 4",
                theta.theta(),
                members.len()
            )));
        }
        let quarter = (members.len() / 4).max(2);
        let tail = &members[members.len() - quarter..];
        let lo = tail.iter().map(|m| m.2).fold(f64::INFINITY, f64::min);
        let hi = tail.iter().map(|m| m.2).fold(f64::NEG_INFINITY, f64::max);
        let limit = tail.iter().map(|m| m.2).sum::<f64>() / tail.len() as f64;
        out.push(DirectionDiagnostic {
            theta: theta.theta().to_vec(),
            members,
            limit_estimate: limit,
            last_quartile_spread: hi - lo,
            pass: hi - lo < tolerance,
        });
    }
    Ok(ZReport {
        tolerance,
        directions: out,
    })
}

/// Coordinate directions and the barycenter of the simplex.
pub fn default_directions(m: usize) -> Vec<SimplexDirection> {
    let mut out: Vec<SimplexDirection> = (0..m)
        .map(|i| {
            let mut t = vec![0.0; m];
            t[i] = 1.0;
            SimplexDirection::new(t).unwrap()
        })
        .collect();
    if m > 1 {
        out.push(SimplexDirection::new(vec![1.0 / m as f64; m]).unwrap());
    }
    out
}

impl AxisFrame {
    pub fn is_power(&self) -> bool {
        matches!(self, AxisFrame::Power)
    }
}
