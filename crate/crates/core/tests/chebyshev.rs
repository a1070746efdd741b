mod common;

use common::{lp_minimax_circle, lp_minimax_interval};
use equizero::chebyshev::*;
use equizero::compactset::ModelSet;
use equizero::multiindex::MultiIndex;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one(s: usize) -> MultiIndex {
    MultiIndex::new(vec![s as u32])
}

fn lower(p: &MonicPolynomial) -> Vec<Complex64> {
    match &p.form {
        MonicForm::Frame { lower, .. } => lower.clone(),
        MonicForm::Product { .. } => panic!("frame form expected"),
    }
}

#[test]
fn interval_norms_are_two_to_one_minus_n() {
    for n in 1..=12 {
        let sol = minimax_monic(&ModelSet::unit_interval(), &one(n), &MinimaxOptions::default()).unwrap();
        let expect = 2f64.powi(1 - n as i32);
        assert!((sol.grid_max / expect - 1.0).abs() < 1e-6, "n={n} {}", sol.grid_max);
    }
}

#[test]
fn lp_oracle_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..20 {
        let n = rng.random_range(1..=12usize);
        let (set, oracle) = match case % 3 {
            0 => {
                let a = rng.random_range(-2.0..1.0);
                let b = a + rng.random_range(0.5..3.0);
                (ModelSet::interval(a, b).unwrap(), lp_minimax_interval(a, b, n))
            }
            1 => {
                let r = rng.random_range(0.5..2.0);
                (ModelSet::Circle { radius: r }, lp_minimax_circle(r, n))
            }
            _ => {
                let r = rng.random_range(0.5..2.0);
                (ModelSet::Disk { radius: r }, lp_minimax_circle(r, n))
            }
        };
        let sol = minimax_monic(&set, &one(n), &MinimaxOptions::default()).unwrap();
        let rel = (sol.grid_max / oracle - 1.0).abs();
        assert!(rel < 1e-6, "case {case}: {} n={n} lawson {} lp {oracle}", set.label(), sol.grid_max);
    }
}

#[test]
fn lawson_objective_is_monotone() {
    for set in [ModelSet::unit_interval(), ModelSet::interval(0.5, 3.0).unwrap(), ModelSet::unit_circle()] {
        for n in [3, 10, 40] {
            let sol = minimax_monic(&set, &one(n), &MinimaxOptions::default()).unwrap();
            let h = &sol.objective_history;
            assert!(!h.is_empty());
            for w in h.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * w[0].abs(), "{} n={n}: {} -> {}", set.label(), w[0], w[1]);
            }
            // weighted L² objective never exceeds the achieved maximum squared
            assert!(h.last().unwrap() <= &(sol.grid_max * sol.grid_max * (1.0 + 1e-9)));
        }
    }
}

#[test]
fn grid_refinement_does_not_move_the_norm() {
    let set = ModelSet::interval(-1.0, 2.0).unwrap();
    for n in [5usize, 20, 60] {
        let base = minimax_monic(&set, &one(n), &MinimaxOptions::default()).unwrap();
        let fine = MinimaxOptions {
            grid_size: Some(2 * (32 * n).max(1024)),
            ..MinimaxOptions::default()
        };
        let refined = minimax_monic(&set, &one(n), &fine).unwrap();
        assert!((refined.grid_max / base.grid_max - 1.0).abs() < 1e-6, "n={n}");
    }
}

/// Length of the longest alternating run of near-extremal values.
fn alternation_count(p: &MonicPolynomial, a: f64, b: f64, level: f64) -> usize {
    let mut count = 0;
    let mut last_sign = 0.0;
    for i in 0..=20_000 {
        let x = a + (b - a) * i as f64 / 20_000.0;
        let v = p.eval(&[Complex64::new(x, 0.0)]).re;
        if v.abs() >= level && v.signum() != last_sign {
            count += 1;
            last_sign = v.signum();
        }
    }
    count
}

#[test]
fn minimax_equioscillates() {
    for (a, b) in [(-1.0, 1.0), (0.0, 5.0)] {
        let set = ModelSet::interval(a, b).unwrap();
        for n in [2usize, 7, 15, 30] {
            let sol = minimax_monic(&set, &one(n), &MinimaxOptions::default()).unwrap();
            let count = alternation_count(&sol.poly, a, b, sol.grid_max / 1.02);
            assert!(count > n, "[{a},{b}] n={n}: {count} alternations");
        }
    }
}

#[test]
fn circle_families_have_unit_constants() {
    let circle = ModelSet::unit_circle();
    for family in [Family::Minimax, Family::L2mu] {
        let b = Basis::build(&circle, family, 60, &BasisOptions::default()).unwrap();
        let r = chebyshev_constants(&b);
        for rec in r.records.iter().filter(|r| r.s >= 20) {
            let tau = rec.tau.unwrap();
            assert!((0.99..=1.01).contains(&tau), "{family:?} s={} tau={tau}", rec.s);
        }
    }
    // Leja norms are 2^{popcount(s)}; powers of two reach the band
    let b = Basis::leja(&circle, 128).unwrap();
    let r = chebyshev_constants(&b);
    for s in [64usize, 128] {
        let tau = r.records[s].tau.unwrap();
        assert!((tau - 2f64.powf(1.0 / s as f64)).abs() < 1e-12);
        assert!(tau <= 1.011);
    }
}

#[test]
fn interval_constants_approach_capacity() {
    for family in [Family::Minimax, Family::Leja, Family::L2mu] {
        let b = Basis::build(&ModelSet::interval(0.0, 4.0).unwrap(), family, 120, &BasisOptions::default()).unwrap();
        let r = chebyshev_constants(&b);
        // capacity of [0, 4] is 1
        assert!((r.limit_estimate.unwrap() - 1.0).abs() < 0.05, "{family:?} {:?}", r.limit_estimate);
    }
}

#[test]
fn square_minimax_elements() {
    let square = ModelSet::product(ModelSet::unit_interval(), ModelSet::unit_interval()).unwrap();
    let opts = MinimaxOptions::default();
    // tensor minimizers: T-monic in z1 times the monic minimizer in z2
    for (k, expect) in [(vec![3, 0], 0.25), (vec![1, 1], 1.0), (vec![2, 1], 0.5)] {
        let sol = minimax_monic(&square, &MultiIndex::new(k.clone()), &opts);
        let grid_max = match sol {
            Ok(s) => s.grid_max,
            Err(equizero::Error::NonConvergence { residual, lower_bound, .. }) => {
                assert!(1.0 - lower_bound / residual <= MINIMAX_2D_GAP);
                residual
            }
            Err(e) => panic!("{e}"),
        };
        assert!((grid_max / expect - 1.0).abs() < MINIMAX_2D_GAP, "{k:?}: {grid_max}");
    }
}

#[test]
fn two_variable_basis_is_normalized() {
    let set = ModelSet::product(ModelSet::unit_interval(), ModelSet::unit_circle()).unwrap();
    let b = Basis::build(&set, Family::L2mu, 6, &BasisOptions::default()).unwrap();
    assert_eq!(b.len(), 28);
    let mut peak = vec![0.0f64; b.len()];
    for i in 0..=128 {
        let x = -1.0 + 2.0 * i as f64 / 128.0;
        for k in 0..128 {
            let w = Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / 128.0);
            for (p, u) in peak.iter_mut().zip(b.eval_u(&[Complex64::new(x, 0.0), w])) {
                *p = p.max(u.norm());
            }
        }
    }
    for (j, p) in peak.iter().enumerate() {
        assert!(*p <= 1.0 + 1e-8 && *p > 0.9, "j={j} {p}");
    }
}

#[test]
fn leja_is_deterministic_and_on_the_set() {
    for set in [ModelSet::unit_circle(), ModelSet::interval(-3.0, 1.0).unwrap(), ModelSet::Disk { radius: 2.0 }] {
        let p = leja_points(&set, 50).unwrap();
        assert_eq!(p, leja_points(&set, 50).unwrap());
        for (i, z) in p.iter().enumerate() {
            assert!(set.contains(&[*z], 1e-12), "{z}");
            for w in &p[..i] {
                assert!((z - w).norm() > 1e-6);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn minimax_elements_are_monic(a in -3.0f64..2.0, width in 0.2f64..4.0, n in 1usize..25) {
        let set = ModelSet::interval(a, a + width).unwrap();
        let sol = minimax_monic(&set, &one(n), &MinimaxOptions::default()).unwrap();
        prop_assert_eq!(lower(&sol.poly).len(), n);
        prop_assert_eq!(sol.poly.leading_coefficient(), Complex64::new(1.0, 0.0));
        // p(R)/R^n → 1
        let big = Complex64::new(1e5 * (1.0 + a.abs() + width), 0.0);
        let ratio = sol.poly.eval(&[big]) / big.powi(n as i32);
        prop_assert!((ratio - 1.0).norm() < 1e-3, "ratio {}", ratio);
        prop_assert!(sol.grid_max > 0.0);
    }

    #[test]
    fn l2_minimizer_beats_perturbations(n in 1usize..12, seed in 0u64..1000, scale in 1e-3f64..1e-1) {
        let set = ModelSet::interval(-1.0, 2.0).unwrap();
        let mu = ReferenceMeasure::for_set(&set, 200).unwrap();
        let best = l2_minimal(&set, &mu, &one(n)).unwrap();
        let norm = |p: &MonicPolynomial| -> f64 {
            mu.nodes.iter().zip(&mu.weights).map(|(z, w)| w * p.eval(z).norm_sqr()).sum()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut other = best.clone();
        if let MonicForm::Frame { lower, .. } = &mut other.form {
            for c in lower.iter_mut() {
                *c += Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
            }
        }
        prop_assert!(norm(&other) > norm(&best));
    }

    #[test]
    fn sup_norms_are_positive(r in 0.3f64..3.0, n in 1usize..30) {
        let b = Basis::build(&ModelSet::Circle { radius: r }, Family::Leja, n, &BasisOptions::default()).unwrap();
        let report = chebyshev_constants(&b);
        prop_assert!(report.records.iter().skip(1).all(|rec| rec.tau.unwrap() > 0.0));
        prop_assert_eq!(b.sup_norms()[0], 1.0);
    }
}
