//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use num_complex::Complex64;

/// Discrete minimax value of monic degree-n polynomials on [a, b], by an
/// LP epigraph in the power basis of w = (x - mid)/half on the nodes
/// cos(πi/N), N the first multiple of n above 10⁴. Those nodes contain
/// every alternation point of the continuous minimizer.
pub fn lp_minimax_interval(a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 1 && b > a);
    let big_n = n * 10_000usize.div_ceil(n);
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    let c: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    for i in 0..=big_n {
        let w = (PI * i as f64 / big_n as f64).cos();
        let mut powers = Vec::with_capacity(n + 1);
        let mut p = 1.0;
        for _ in 0..=n {
            powers.push(p);
            p *= w;
        }
        // ±(w^n + Σ c_l w^l) ≤ t
        for sign in [1.0, -1.0] {
            let mut row: Vec<_> = c.iter().zip(&powers).map(|(&v, &pw)| (v, sign * pw)).collect();
            row.push((t, -1.0));
            lp.add_constraint(row, ComparisonOp::Le, -sign * powers[n]);
        }
    }
    let sol = lp.solve().expect("interval LP solves").into_solution().expect("LP has a solution");
    let half = (b - a) / 2.0;
    sol.objective() * half.powi(n as i32)
}

/// Discrete minimax value of monic degree-n polynomials on the circle
/// |z| = r, by an LP epigraph with 64 tangent half-planes per node on the
/// 64n-th roots of unity.
pub fn lp_minimax_circle(r: f64, n: usize) -> f64 {
    assert!(n >= 1 && r > 0.0);
    let nodes = 64 * n;
    let dirs = 64;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let re: Vec<_> = (0..n).map(|_| lp.add_var(0.0, free)).collect();
    let im: Vec<_> = (0..n).map(|_| lp.add_var(0.0, free)).collect();
    for i in 0..nodes {
        let z = Complex64::from_polar(1.0, 2.0 * PI * i as f64 / nodes as f64);
        let powers: Vec<Complex64> = (0..=n).map(|l| z.powi(l as i32)).collect();
        for k in 0..dirs {
            let rot = Complex64::from_polar(1.0, -2.0 * PI * k as f64 / dirs as f64);
            // Re(rot·(z^n + Σ c_l z^l)) ≤ t
            let mut row = Vec::with_capacity(2 * n + 1);
            for l in 0..n {
                let q = rot * powers[l];
                row.push((re[l], q.re));
                row.push((im[l], -q.im));
            }
            row.push((t, -1.0));
            lp.add_constraint(row, ComparisonOp::Le, -(rot * powers[n]).re);
        }
    }
    let sol = lp.solve().expect("circle LP solves").into_solution().expect("LP has a solution");
    sol.objective() * r.powi(n as i32)
}
