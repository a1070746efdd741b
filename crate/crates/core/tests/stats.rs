use equizero::chebyshev::{Basis, BasisOptions, Family};
use equizero::compactset::ModelSet;
use equizero::currents::{pair_atomic, TestFunction};
use equizero::ensemble::{substream, CoefficientMeasure};
use equizero::stats::*;
use equizero::zeros::{roots, RandomPolynomial};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn named(name: &str, function: TestFunction, convergence_checks: bool) -> NamedTestFunction {
    NamedTestFunction {
        name: name.into(),
        function,
        sequence_tolerance: 0.05,
        convergence_checks,
    }
}

fn small_plan(degrees: Vec<usize>, samples: usize) -> ExperimentPlan {
    ExperimentPlan {
        sets: vec![ModelSet::unit_circle()],
        families: vec![Family::Minimax],
        measures: vec![CoefficientMeasure::isotropic()],
        degrees,
        samples,
        test_functions: vec![named(
            "total_mass",
            TestFunction::plateau(vec![c(0.0, 0.0)], 1.5, 2.5).unwrap(),
            true,
        )],
        seed: 17,
        grid_points: None,
        moment: MomentPlan::default(),
        sequence: SequencePlan { start: 10, end: 40, step: 10 },
        expectation_tolerance: 0.03,
        basis: BasisOptions::default(),
    }
}

fn csv(series: &MomentSeries) -> Vec<u8> {
    let mut out = Vec::new();
    series.write_csv(&mut out).unwrap();
    out
}

#[test]
fn expectation_is_linear_in_the_test_function() {
    let chi1 = TestFunction::bump(vec![c(0.9, 0.2)], 0.6).unwrap();
    let chi2 = TestFunction::plateau(vec![c(-0.5, -0.5)], 0.3, 0.9).unwrap().scaled(-1.5);
    let mut plan = small_plan(vec![10, 20], 40);
    plan.test_functions = vec![
        named("one", chi1.clone(), false),
        named("two", chi2.clone(), false),
        named("sum", chi1.sum(&chi2).unwrap(), false),
    ];
    let (series, _) = expectation_experiment(&plan).unwrap();
    for n in [10, 20] {
        let mean = |name: &str| series.records.iter().find(|r| r.n == n && r.test_function == name).unwrap().mean;
        assert!((mean("sum") - mean("one") - mean("two")).abs() < 1e-9, "n = {n}");
    }
}

#[test]
fn standard_error_scales_with_sample_count() {
    let (a, _) = expectation_experiment(&small_plan(vec![20], 100)).unwrap();
    let (b, _) = expectation_experiment(&small_plan(vec![20], 400)).unwrap();
    let ratio = b.records[0].std_error / a.records[0].std_error;
    assert!((ratio / 0.5 - 1.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn expectation_checks_pass_on_a_small_plan() {
    let plan = small_plan(vec![10, 20, 40], 60);
    let (series, checks) = expectation_experiment(&plan).unwrap();
    assert_eq!(series.records.len(), 3);
    for name in ["residual_bound", "boundedness", "expectation_trend"] {
        let ch = checks.iter().find(|ch| ch.name == name).unwrap();
        assert!(ch.pass, "{ch:?}");
    }
    for r in &series.records {
        assert!((r.residual - (r.mean - r.bergman_term)).abs() < 1e-15);
        assert!(r.variance >= 0.0 && r.variance_rhs >= 0.0 && r.residual_bound >= 0.0);
        assert!((r.target - 1.0).abs() < 1e-12);
    }
    let (_, vchecks) = variance_experiment(&plan).unwrap();
    assert!(vchecks.iter().filter(|c| c.name == "variance_bound").all(|c| c.pass));
}

#[test]
fn interval_leja_plan_runs() {
    let mut plan = small_plan(vec![10, 20], 30);
    plan.sets = vec![ModelSet::unit_interval()];
    plan.families = vec![Family::Leja];
    plan.test_functions = vec![named("centre", TestFunction::bump(vec![c(0.0, 0.0)], 0.8).unwrap(), false)];
    let (series, checks) = expectation_experiment(&plan).unwrap();
    assert!(series.records.iter().all(|r| r.mean.is_finite() && r.mean > 0.0));
    assert!(checks.iter().find(|c| c.name == "residual_bound").unwrap().pass);
}

#[test]
fn two_variable_plan_uses_the_potential_pairing() {
    let mut plan = small_plan(vec![3, 4], 4);
    plan.sets = vec![ModelSet::product(ModelSet::unit_circle(), ModelSet::unit_circle()).unwrap()];
    plan.test_functions = vec![named(
        "bump",
        TestFunction::bump(vec![c(0.0, 0.0), c(0.0, 0.0)], 1.8).unwrap(),
        false,
    )];
    let (series, _) = expectation_experiment(&plan).unwrap();
    assert_eq!(series.records.len(), 2);
    assert!(series.records.iter().all(|r| r.mean.is_finite() && r.bergman_term.is_finite()));
}

#[test]
fn single_degree_trace_is_the_pairing() {
    let mut plan = small_plan(vec![1], 1);
    plan.sequence = SequencePlan { start: 1, end: 1, step: 1 };
    let (trace, checks) = sequence_experiment(&plan).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert_eq!(checks.len(), 1);
    let r = &trace.records[0];
    assert_eq!(r.partial_sum, (r.value - r.bergman_term).powi(2));

    // the sequence stream for (n = 1, draw 0, first attempt)
    let basis = Basis::build(&plan.sets[0], Family::Minimax, 1, &plan.basis).unwrap();
    let a = plan.measures[0].sampler(2).unwrap().draw(&mut substream(plan.seed, &[1, 1, 0, 0]));
    let f = RandomPolynomial::new(&basis, a).unwrap();
    let direct = pair_atomic(&roots(&f).unwrap(), 1, &plan.test_functions[0].function).unwrap();
    assert_eq!(r.value, direct.value);
}

#[test]
fn sequence_partial_sums_accumulate() {
    let plan = small_plan(vec![10], 1);
    let (trace, _) = sequence_experiment(&plan).unwrap();
    assert_eq!(trace.records.iter().map(|r| r.n).collect::<Vec<_>>(), vec![10, 20, 30, 40]);
    let mut acc = 0.0;
    for r in &trace.records {
        acc += (r.value - r.bergman_term).powi(2);
        assert!((r.partial_sum - acc).abs() < 1e-15);
        assert!((r.deviation - (r.value - r.target).abs()).abs() < 1e-15);
    }
}

#[test]
fn runs_are_reproducible() {
    let plan = small_plan(vec![10, 20], 20);
    let (a, _) = expectation_experiment(&plan).unwrap();
    let (b, _) = expectation_experiment(&plan).unwrap();
    assert_eq!(csv(&a), csv(&b));
    let mut other = plan.clone();
    other.seed += 1;
    let (c, _) = expectation_experiment(&other).unwrap();
    assert_ne!(csv(&a), csv(&c));

    let (ta, _) = sequence_experiment(&plan).unwrap();
    let (tb, _) = sequence_experiment(&plan).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn plan_validation() {
    let ok = small_plan(vec![10, 20], 10);
    assert!(ok.validate().is_ok());
    let mut p = ok.clone();
    p.degrees = vec![20, 10];
    assert!(p.validate().is_err());
    let mut p = ok.clone();
    p.samples = 0;
    assert!(p.validate().is_err());
    let mut p = ok.clone();
    p.test_functions.push(p.test_functions[0].clone());
    assert!(p.validate().is_err());
    let mut p = ok.clone();
    p.grid_points = Some(64);
    assert!(p.validate().is_err());
    let mut p = ok.clone();
    p.moment.directions = 8;
    assert!(p.validate().is_err());
    assert!(variance_experiment(&ok).is_err());
    assert!(ExperimentPlan::default_plan().validate().is_ok());
}

#[test]
fn plan_json_round_trip() {
    let plan = ExperimentPlan::default_plan();
    let text = serde_json::to_string_pretty(&plan).unwrap();
    let back: ExperimentPlan = serde_json::from_str(&text).unwrap();
    assert_eq!(back, plan);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn variance_identity(x in prop::collection::vec(-1e3f64..1e3, 2..300)) {
        let (mean, var) = mean_variance(&x);
        let n = x.len() as f64;
        let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
        let one_pass = (sq - mean * mean) * n / (n - 1.0);
        prop_assert!(var >= 0.0);
        prop_assert!((one_pass - var).abs() <= 1e-10 * sq.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn inversions_of_monotone_sequences(mut x in prop::collection::vec(0.0f64..1.0, 1..50)) {
        x.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(inversions(&x), 0);
        prop_assert!(last_quartile_deviation(&x) <= x[0]);
    }
}
