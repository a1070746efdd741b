use equizero::bergman::*;
use equizero::chebyshev::{Basis, BasisOptions, Family};
use equizero::compactset::ModelSet;
use equizero::ensemble::CoefficientMeasure;
use equizero::multiindex::dimension;
use equizero::zeros::RandomPolynomial;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn circle_basis(n: usize) -> Basis {
    Basis::build(&ModelSet::unit_circle(), Family::Minimax, n, &BasisOptions::default()).unwrap()
}

/// log Σ_{j=0}^{n} |z|^{2j}
fn geometric_log_gamma(z: Complex64, n: usize) -> f64 {
    let r2 = z.norm_sqr();
    if (r2 - 1.0).abs() < 1e-9 {
        return ((n + 1) as f64).ln();
    }
    if r2 > 1.0 {
        // factor out the top term to stay finite
        let q = 1.0 / r2;
        n as f64 * r2.ln() + ((1.0 - q.powi(n as i32 + 1)) / (1.0 - q)).ln()
    } else {
        ((1.0 - r2.powi(n as i32 + 1)) / (1.0 - r2)).ln()
    }
}

#[test]
fn circle_sweep_decreases_and_matches_geometric_sum() {
    let full = circle_basis(128);
    let set = ModelSet::unit_circle();
    let bounds = BoundingBox::centered(1, 2.0);
    let mut errors = Vec::new();
    for n in [8usize, 16, 32, 64, 128] {
        let basis = full.truncate(n).unwrap();
        let field = BergmanField::build(&basis, &set, &bounds, 129).unwrap();
        for p in &field.points {
            let exact = geometric_log_gamma(p.z[0], n);
            assert!((p.log_gamma - exact).abs() <= 1e-10 * exact.abs().max(1.0), "n={n} z={}", p.z[0]);
        }
        errors.push(l1loc_error(&basis, &set, &bounds, 129).unwrap());
    }
    for w in errors.windows(2) {
        assert!(w[1].error < w[0].error, "{} then {}", w[0].error, w[1].error);
        // upper envelope ε_n is non-increasing
        assert!(w[1].max_excess <= w[0].max_excess + 1e-12);
    }
    assert!(errors[3].error < 0.02 && errors[4].error < 0.02);
}

#[test]
fn gamma_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for set in [ModelSet::unit_interval(), ModelSet::unit_circle(), ModelSet::interval(0.0, 3.0).unwrap()] {
        for family in [Family::Minimax, Family::Leja, Family::L2mu] {
            let b = Basis::build(&set, family, 30, &BasisOptions::default()).unwrap();
            for _ in 0..50 {
                let z = [Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))];
                let direct: f64 = b.eval_u(&z).iter().map(|u| u.norm_sqr()).sum();
                let g = gamma(&b, &z);
                assert!((g.value - direct).abs() <= 1e-12 * direct, "{} {family:?}", set.label());
                assert!(g.value >= 1.0);
            }
        }
    }
}

#[test]
fn gamma_stays_finite_in_log_form() {
    let b = Basis::build(&ModelSet::unit_circle(), Family::L2mu, 200, &BasisOptions::default()).unwrap();
    let z = Complex64::new(1e3, 0.0);
    let g = gamma(&b, &[z]);
    assert!(g.value.is_infinite());
    let exact = geometric_log_gamma(z, 200);
    assert!((g.log - exact).abs() < 1e-12 * exact);
}

#[test]
fn gamma_bounded_by_dimension_on_the_set() {
    let square = ModelSet::product(ModelSet::unit_interval(), ModelSet::unit_circle()).unwrap();
    let b = Basis::build(&square, Family::L2mu, 5, &BasisOptions::default()).unwrap();
    let d = dimension(2, 5).unwrap() as f64;
    for s in square.boundary_sample(40).unwrap() {
        let g = gamma(&b, &s);
        assert!(g.value >= 1.0 && g.value <= d * (1.0 + 1e-9));
        assert!(log_gamma_normalized(&b, &s).unwrap() <= d.ln() / 10.0 + 1e-12);
    }
    let i = Basis::build(&ModelSet::unit_interval(), Family::Minimax, 40, &BasisOptions::default()).unwrap();
    for s in ModelSet::unit_interval().boundary_sample(500).unwrap() {
        assert!(log_gamma_normalized(&i, &s).unwrap() <= 41f64.ln() / 80.0 + 1e-12);
    }
}

#[test]
fn normalized_log_gamma_limits() {
    for n in [4usize, 16, 64] {
        let b = circle_basis(n);
        let on = log_gamma_normalized(&b, &[Complex64::from_polar(1.0, 0.3)]).unwrap();
        assert!((on - ((n + 1) as f64).ln() / (2 * n) as f64).abs() < 1e-12);
    }
    let b = Basis::build(&ModelSet::unit_circle(), Family::L2mu, 200, &BasisOptions::default()).unwrap();
    let far = log_gamma_normalized(&b, &[Complex64::new(2.0, 0.0)]).unwrap();
    // (1/2n) log Σ 4^j = log 2 + O(1/n)
    assert!(far > 2f64.ln() && far - 2f64.ln() < 1e-3);
}

#[test]
fn decomposition_identity_at_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let bases = [
        circle_basis(40),
        Basis::build(&ModelSet::unit_interval(), Family::Minimax, 40, &BasisOptions::default()).unwrap(),
        Basis::leja(&ModelSet::unit_interval(), 40).unwrap(),
        Basis::build(
            &ModelSet::product(ModelSet::unit_disk(), ModelSet::unit_disk()).unwrap(),
            Family::L2mu,
            6,
            &BasisOptions::default(),
        )
        .unwrap(),
    ];
    let mut checked = 0;
    for pair in 0..1000u64 {
        let b = &bases[pair as usize % bases.len()];
        let n = b.degree();
        let a = CoefficientMeasure::isotropic().sample(b.len(), pair).unwrap();
        let f = RandomPolynomial::new(b, a).unwrap();
        let z: Vec<Complex64> = (0..b.dim())
            .map(|_| Complex64::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)))
            .collect();
        let direct = f.log_abs(&z);
        if !direct.is_finite() {
            continue;
        }
        let (pair_part, half_log_gamma) = f.log_abs_decomposed(&z);
        let gap = direct / n as f64 - (pair_part / n as f64 + gamma(b, &z).log / (2 * n) as f64);
        assert!(gap.abs() < 1e-9, "pair {pair}: {gap}");
        assert!((half_log_gamma - gamma(b, &z).log / 2.0).abs() < 1e-9 * half_log_gamma.abs().max(1.0));
        checked += 1;
    }
    assert!(checked >= 990);
}

#[test]
fn preconditions() {
    let b = circle_basis(8);
    let set = ModelSet::unit_circle();
    assert!(BergmanField::build(&b, &set, &BoundingBox::centered(1, 2.0), 8).is_err());
    assert!(BergmanField::build(&b, &set, &BoundingBox::centered(1, 0.5), 64).is_err());
    assert!(l1loc_error(&circle_basis(0), &set, &BoundingBox::centered(1, 2.0), 64).is_err());
}

proptest! {
    #[test]
    fn lambda_is_a_unit_vector(x in -4.0f64..4.0, y in -4.0f64..4.0, n in 1usize..60) {
        let b = Basis::leja(&ModelSet::interval(-1.0, 2.0).unwrap(), n).unwrap();
        let l = lambda_vector(&b, &[Complex64::new(x, y)]);
        let norm: f64 = l.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-10);
    }
}
