//! Expectation, variance and sequence experiments over an experiment plan.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bergman::gamma;
use crate::chebyshev::{Basis, BasisOptions, Family};
use crate::compactset::ModelSet;
use crate::currents::{
    dphi_constant, min_points, pair_atomic, pair_continuous, pair_equilibrium, pair_potential, DPhi, GridSpec,
    TestFunction,
};
use crate::ensemble::{derive_seed, moment_constant, substream, CoefficientMeasure, MomentConstant, Schedule};
use crate::error::{Error, Result};
use crate::multiindex::dimension;
use crate::zeros::{roots, RandomPolynomial};

/// Pairing values per test function, with the retry count.
type Pairings = (Vec<f64>, usize);

/// Redraws allowed for a sample whose root extraction or quadrature fails.
pub const MAX_RETRIES: usize = 3;

const STREAM_MOMENTS: u64 = 0;
const STREAM_SEQUENCE: u64 = 1;
const STREAM_CONSTANTS: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTestFunction {
    pub name: String,
    #[serde(flatten)]
    pub function: TestFunction,
    /// Tolerance on the last-quartile deviation of the sequence trace.
    #[serde(default = "default_sequence_tolerance")]
    pub sequence_tolerance: f64,
    /// Whether the convergence checks (Ê_n → target, variance decay) apply.
    #[serde(default)]
    pub convergence_checks: bool,
}

fn default_sequence_tolerance() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPlan {
    pub directions: usize,
    pub trials: usize,
}

impl Default for MomentPlan {
    fn default() -> Self {
        MomentPlan {
            directions: 32,
            trials: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl Default for SequencePlan {
    fn default() -> Self {
        SequencePlan {
            start: 10,
            end: 200,
            step: 10,
        }
    }
}

impl SequencePlan {
    pub fn degrees(&self) -> Vec<usize> {
        (self.start..=self.end).step_by(self.step.max(1)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub sets: Vec<ModelSet>,
    pub families: Vec<Family>,
    pub measures: Vec<CoefficientMeasure>,
    pub degrees: Vec<usize>,
    /// Samples per degree (M).
    pub samples: usize,
    pub test_functions: Vec<NamedTestFunction>,
    pub seed: u64,
    /// Cells per real axis for every grid quadrature.
    #[serde(default)]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub moment: MomentPlan,
    #[serde(default)]
    pub sequence: SequencePlan,
    /// Bound on |Ê_n − target| at the largest degree.
    #[serde(default = "default_expectation_tolerance")]
    pub expectation_tolerance: f64,
    #[serde(default)]
    pub basis: BasisOptions,
}

fn default_expectation_tolerance() -> f64 {
    0.03
}

impl ExperimentPlan {
    /// Circle and interval; minimax and Leja; isotropic and anisotropic
    /// Gaussians; n ∈ {10, 20, 40, 80, 160}; M = 200; three test functions.
    pub fn default_plan() -> Self {
        let o = vec![Complex64::new(0.0, 0.0)];
        ExperimentPlan {
            sets: vec![ModelSet::unit_circle(), ModelSet::unit_interval()],
            families: vec![Family::Minimax, Family::Leja],
            measures: vec![
                CoefficientMeasure::isotropic(),
                CoefficientMeasure::anisotropic(Schedule::Geometric { lo: 1.0, hi: 2.0 }).expect("valid schedule"),
            ],
            degrees: vec![10, 20, 40, 80, 160],
            samples: 200,
            test_functions: vec![
                NamedTestFunction {
                    name: "total_mass".into(),
                    function: TestFunction::plateau(o, 1.5, 2.5).expect("valid plateau"),
                    sequence_tolerance: 0.05,
                    convergence_checks: true,
                },
                NamedTestFunction {
                    name: "half_support".into(),
                    function: TestFunction::bump(vec![Complex64::new(1.0, 0.0)], std::f64::consts::SQRT_2)
                        .expect("valid bump"),
                    sequence_tolerance: 0.05,
                    convergence_checks: false,
                },
                NamedTestFunction {
                    name: "off_support".into(),
                    function: TestFunction::bump(vec![Complex64::new(3.0, 0.0)], 1.0).expect("valid bump"),
                    sequence_tolerance: 0.02,
                    convergence_checks: false,
                },
            ],
            seed: 20_240_601,
            grid_points: None,
            moment: MomentPlan::default(),
            sequence: SequencePlan::default(),
            expectation_tolerance: 0.03,
            basis: BasisOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.into()));
        if self.sets.is_empty() || self.families.is_empty() || self.measures.is_empty() || self.test_functions.is_empty() {
            return bad("plan needs at least one set, family, measure and test function");
        }
        if self.degrees.is_empty() || self.degrees[0] == 0 || self.degrees.windows(2).any(|w| w[1] <= w[0]) {
            return bad("degrees must be positive and strictly increasing");
        }
        if self.samples == 0 {
            return bad("samples per degree must be >= 1");
        }
        let seq = &self.sequence;
        if seq.start == 0 || seq.step == 0 || seq.end < seq.start {
            return bad("sequence needs 1 <= start <= end and step >= 1");
        }
        for s in &self.sets {
            s.validate()?;
            for t in &self.test_functions {
                if t.function.dim() != s.dim() {
                    return bad("test function dimension differs from a set dimension");
                }
            }
        }
        for m in &self.measures {
            m.validate()?;
        }
        for t in &self.test_functions {
            t.function.validate()?;
            if !(t.sequence_tolerance > 0.0) {
                return bad("sequence tolerance must be positive");
            }
        }
        let mut names: Vec<&str> = self.test_functions.iter().map(|t| t.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.test_functions.len() {
            return bad("test function names must be unique");
        }
        if self.moment.directions < crate::ensemble::MIN_DIRECTIONS || self.moment.trials < crate::ensemble::MIN_TRIALS {
            return bad("moment plan needs >= 32 directions and >= 10^4 trials");
        }
        if let Some(p) = self.grid_points {
            let m = self.sets.iter().map(|s| s.dim()).max().unwrap_or(1);
            if p < min_points(m) || p % 2 != 0 {
                return bad("grid points must be even and at least the minimum per axis");
            }
        }
        Ok(())
    }

    fn grid_for(&self, chi: &TestFunction) -> GridSpec {
        GridSpec::covering(chi, self.grid_points.unwrap_or(min_points(chi.dim())))
    }
}

/// Bases, constants and targets shared across experiments of one plan.
pub struct Context<'p> {
    plan: &'p ExperimentPlan,
    bases: HashMap<(usize, Family), Basis>,
    constants: HashMap<(usize, usize), MomentConstant>,
    dphi: HashMap<(usize, usize), DPhi>,
    targets: HashMap<(usize, usize), f64>,
}

impl<'p> Context<'p> {
    pub fn new(plan: &'p ExperimentPlan) -> Result<Self> {
        plan.validate()?;
        Ok(Context {
            plan,
            bases: HashMap::new(),
            constants: HashMap::new(),
            dphi: HashMap::new(),
            targets: HashMap::new(),
        })
    }

    /// Supplies a prebuilt basis (e.g. loaded from disk) for a set of the plan.
    pub fn insert_basis(&mut self, set_idx: usize, basis: Basis) {
        self.bases.insert((set_idx, basis.family()), basis);
    }

    fn basis(&mut self, set_idx: usize, family: Family, degree: usize) -> Result<&Basis> {
        let key = (set_idx, family);
        let stale = self.bases.get(&key).is_none_or(|b| b.degree() < degree);
        if stale {
            let b = Basis::build(&self.plan.sets[set_idx], family, degree, &self.plan.basis)?;
            self.bases.insert(key, b);
        }
        Ok(&self.bases[&key])
    }

    fn constant(&mut self, measure_idx: usize, d: usize) -> Result<MomentConstant> {
        if let Some(c) = self.constants.get(&(measure_idx, d)) {
            return Ok(c.clone());
        }
        let p = &self.plan.moment;
        let seed = derive_seed(self.plan.seed, &[STREAM_CONSTANTS, measure_idx as u64, d as u64]);
        let c = moment_constant(&self.plan.measures[measure_idx], d, p.directions, p.trials, seed)?;
        self.constants.insert((measure_idx, d), c.clone());
        Ok(c)
    }

    fn dphi(&mut self, set_idx: usize, chi_idx: usize) -> Result<DPhi> {
        if let Some(d) = self.dphi.get(&(set_idx, chi_idx)) {
            return Ok(d.clone());
        }
        let chi = &self.plan.test_functions[chi_idx].function;
        let d = dphi_constant(chi, &self.plan.sets[set_idx], &self.plan.grid_for(chi))?;
        self.dphi.insert((set_idx, chi_idx), d.clone());
        Ok(d)
    }

    fn target(&mut self, set_idx: usize, chi_idx: usize) -> Result<f64> {
        if let Some(t) = self.targets.get(&(set_idx, chi_idx)) {
            return Ok(*t);
        }
        let chi = &self.plan.test_functions[chi_idx].function;
        let t = pair_equilibrium(&self.plan.sets[set_idx], chi, &self.plan.grid_for(chi))?.value;
        self.targets.insert((set_idx, chi_idx), t);
        Ok(t)
    }
}

/// Quadrature of (1/2n) log Γ_n against L[χ]; returns the value and the
/// maximum of (1/2n) log Γ_n over the grid.
pub fn bergman_term(basis: &Basis, n: usize, chi: &TestFunction, grid: &GridSpec) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidInput("degree must be >= 1".into()));
    }
    let b = basis.truncate(n)?;
    let inv = 1.0 / (2 * n) as f64;
    let r = pair_continuous(|z| gamma(&b, z).log * inv, chi, grid)?;
    Ok((r.value, r.potential_sup))
}

/// Pairings of one sample with every test function of the plan.
fn pair_sample(basis: &Basis, a: Vec<Complex64>, n: usize, plan: &ExperimentPlan) -> Result<Vec<f64>> {
    let f = RandomPolynomial::new(basis, a)?;
    if f.dim() == 1 {
        let rs = roots(&f)?;
        plan.test_functions
            .iter()
            .map(|t| pair_atomic(&rs, n, &t.function).map(|p| p.value))
            .collect()
    } else {
        plan.test_functions
            .iter()
            .map(|t| pair_potential(&f, n, &t.function, &plan.grid_for(&t.function)).map(|p| p.value))
            .collect()
    }
}

/// Draws with retries; returns the pairings and the number of redraws.
fn draw_and_pair(
    basis: &Basis,
    measure: &CoefficientMeasure,
    n: usize,
    plan: &ExperimentPlan,
    path: [u64; 3],
) -> Result<Pairings> {
    let d = dimension(basis.dim(), n)?;
    let sampler = measure.sampler(d)?;
    let mut last = None;
    for retry in 0..=MAX_RETRIES {
        let mut rng = substream(plan.seed, &[path[0], path[1], path[2], retry as u64]);
        let a = sampler.draw(&mut rng);
        match pair_sample(basis, a, n, plan) {
            Ok(v) => return Ok((v, retry)),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::SampleFailed {
        retries: MAX_RETRIES,
        source: Box::new(last.expect("at least one attempt")),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub set: String,
    pub family: String,
    pub measure: String,
    pub test_function: String,
    pub n: usize,
    pub samples: usize,
    /// Ê_n
    pub mean: f64,
    pub std_error: f64,
    /// Unbiased sample variance of the pairings.
    pub variance: f64,
    pub variance_se: f64,
    /// ⟨dd^c V_K, χ⟩
    pub target: f64,
    pub bergman_term: f64,
    /// Ê_n − bergman_term
    pub residual: f64,
    pub c_hat: f64,
    pub dphi: f64,
    /// Ĉ_n^{1/α} D_φ / n
    pub residual_bound: f64,
    /// D_φ² + 2 D_φ Ĉ_n^{1/α}/n + D_φ² Ĉ_n^{2/α}/n²
    pub variance_rhs: f64,
    /// max over the grid of (1/2n) log Γ_n
    pub gamma_upper: f64,
    pub retries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub scope: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub records: Vec<MomentRecord>,
    pub constants: Vec<MomentConstant>,
    pub dphi: Vec<(String, String, DPhi)>,
    pub retries: usize,
}

/// Mean and unbiased variance, both accumulated in sample order.
pub fn mean_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Standard error of the unbiased sample variance.
fn variance_se(x: &[f64], mean: f64, var: f64) -> f64 {
    let n = x.len() as f64;
    if x.len() < 4 {
        return f64::INFINITY;
    }
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

fn scope(plan: &ExperimentPlan, s: usize, f: Family, m: usize) -> (String, String, String) {
    (plan.sets[s].label(), f.label().to_string(), plan.measures[m].label())
}

/// Runs M samples per degree for every (set, family, measure) and pairs them
/// with every test function.
pub fn run_moments(ctx: &mut Context) -> Result<MomentSeries> {
    let plan = ctx.plan;
    let top = *plan.degrees.last().expect("validated");
    let mut records = Vec::new();
    let mut total_retries = 0;
    for s in 0..plan.sets.len() {
        for &family in &plan.families {
            ctx.basis(s, family, top)?;
            for mi in 0..plan.measures.len() {
                let (set_l, fam_l, meas_l) = scope(plan, s, family, mi);
                for &n in &plan.degrees {
                    let basis = ctx.bases[&(s, family)].truncate(n)?;
                    let measure = &plan.measures[mi];
                    let draws: Result<Vec<(Vec<f64>, usize)>> = (0..plan.samples)
                        .into_par_iter()
                        .map(|k| draw_and_pair(&basis, measure, n, plan, [STREAM_MOMENTS, n as u64, k as u64]))
                        .collect();
                    let draws = draws?;
                    let retries: usize = draws.iter().map(|d| d.1).sum();
                    total_retries += retries;
                    let c = ctx.constant(mi, basis.len())?;
                    let croot = c.constant.powf(1.0 / measure.alpha);
                    for (ci, t) in plan.test_functions.iter().enumerate() {
                        let values: Vec<f64> = draws.iter().map(|d| d.0[ci]).collect();
                        let (mean, variance) = mean_variance(&values);
                        let dphi = ctx.dphi(s, ci)?.value;
                        let target = ctx.target(s, ci)?;
                        let (bt, gamma_upper) = bergman_term(&basis, n, &t.function, &plan.grid_for(&t.function))?;
                        let nf = n as f64;
                        records.push(MomentRecord {
                            set: set_l.clone(),
                            family: fam_l.clone(),
                            measure: meas_l.clone(),
                            test_function: t.name.clone(),
                            n,
                            samples: plan.samples,
                            mean,
                            std_error: (variance / plan.samples as f64).sqrt(),
                            variance,
                            variance_se: variance_se(&values, mean, variance),
                            target,
                            bergman_term: bt,
                            residual: mean - bt,
                            c_hat: c.constant,
                            dphi,
                            residual_bound: croot * dphi / nf,
                            variance_rhs: dphi * dphi + 2.0 * dphi * croot / nf + dphi * dphi * croot * croot / (nf * nf),
                            gamma_upper,
                            retries,
                        });
                    }
                }
            }
        }
    }
    let mut constants: Vec<((usize, usize), MomentConstant)> = ctx.constants.iter().map(|(k, v)| (*k, v.clone())).collect();
    constants.sort_by_key(|(k, _)| *k);
    let mut dphi: Vec<((usize, usize), DPhi)> = ctx.dphi.iter().map(|(k, v)| (*k, v.clone())).collect();
    dphi.sort_by_key(|(k, _)| *k);
    Ok(MomentSeries {
        records,
        constants: constants.into_iter().map(|(_, c)| c).collect(),
        dphi: dphi
            .into_iter()
            .map(|((s, c), d)| (plan.sets[s].label(), plan.test_functions[c].name.clone(), d))
            .collect(),
        retries: total_retries,
    })
}

fn groups(records: &[MomentRecord]) -> Vec<Vec<&MomentRecord>> {
    let mut out: Vec<Vec<&MomentRecord>> = Vec::new();
    for r in records {
        match out.iter_mut().find(|g| {
            let h = g[0];
            h.set == r.set && h.family == r.family && h.measure == r.measure && h.test_function == r.test_function
        }) {
            Some(g) => g.push(r),
            None => out.push(vec![r]),
        }
    }
    out
}

fn scope_of(r: &MomentRecord) -> String {
    format!("{}/{}/{}/{}", r.set, r.family, r.measure, r.test_function)
}

fn flagged(plan: &ExperimentPlan, name: &str) -> bool {
    plan.test_functions.iter().any(|t| t.name == name && t.convergence_checks)
}

/// Number of i with d_{i+1} > d_i.
pub fn inversions(d: &[f64]) -> usize {
    d.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Checks on Ê_n: convergence to the target (flagged test functions), the
/// residual bound, and boundedness.
pub fn expectation_checks(plan: &ExperimentPlan, series: &MomentSeries) -> Vec<Check> {
    let mut checks = Vec::new();
    for g in groups(&series.records) {
        let sc = scope_of(g[0]);
        if flagged(plan, &g[0].test_function) {
            let dev: Vec<f64> = g.iter().map(|r| (r.mean - r.target).abs()).collect();
            let last = *dev.last().expect("non-empty group");
            checks.push(Check {
                name: "expectation_final".into(),
                scope: sc.clone(),
                pass: last < plan.expectation_tolerance,
                detail: format!("|E_n - target| = {last:.6e} at n = {}", g[g.len() - 1].n),
            });
            let inv = inversions(&dev);
            checks.push(Check {
                name: "expectation_trend".into(),
                scope: sc.clone(),
                pass: inv <= 1,
                detail: format!("{inv} inversions in {dev:?}"),
            });
        }
        let worst = g
            .iter()
            .map(|r| r.residual.abs() / r.residual_bound)
            .fold(0.0, f64::max);
        checks.push(Check {
            name: "residual_bound".into(),
            scope: sc.clone(),
            pass: worst <= 1.0,
            detail: format!("max |residual| / bound = {worst:.4}"),
        });
        let bounded = g
            .iter()
            .map(|r| r.mean.abs() / (r.dphi * (r.gamma_upper + r.c_hat.powf(1.0 / alpha_of(plan, &r.measure)) / r.n as f64)))
            .fold(0.0, f64::max);
        checks.push(Check {
            name: "boundedness".into(),
            scope: sc,
            pass: bounded <= 1.0,
            detail: format!("max |E_n| / bound = {bounded:.4}"),
        });
    }
    checks
}

fn alpha_of(plan: &ExperimentPlan, label: &str) -> f64 {
    plan.measures.iter().find(|m| m.label() == label).map_or(2.0, |m| m.alpha)
}

/// Checks on V̂ar_n: the bound with 3-standard-error slack, and (flagged test
/// functions) decay from the first to the last degree.
pub fn variance_checks(plan: &ExperimentPlan, series: &MomentSeries) -> Vec<Check> {
    let mut checks = Vec::new();
    for g in groups(&series.records) {
        let sc = scope_of(g[0]);
        let worst = g
            .iter()
            .map(|r| (r.variance - 3.0 * r.variance_se) / r.variance_rhs)
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check {
            name: "variance_bound".into(),
            scope: sc.clone(),
            pass: worst <= 1.0,
            detail: format!("max (Var_n - 3 se) / rhs = {worst:.4e}"),
        });
        if flagged(plan, &g[0].test_function) && g.len() >= 2 {
            let (first, last) = (g[0], g[g.len() - 1]);
            checks.push(Check {
                name: "variance_decay".into(),
                scope: sc,
                pass: last.variance < first.variance,
                detail: format!(
                    "Var_{} = {:.4e}, Var_{} = {:.4e}",
                    first.n, first.variance, last.n, last.variance
                ),
            });
        }
    }
    checks
}

/// Expectation experiment: runs the samples and evaluates the expectation checks.
pub fn expectation_experiment(plan: &ExperimentPlan) -> Result<(MomentSeries, Vec<Check>)> {
    let mut ctx = Context::new(plan)?;
    let series = run_moments(&mut ctx)?;
    let checks = expectation_checks(plan, &series);
    Ok((series, checks))
}

/// Variance experiment; needs M >= 50.
pub fn variance_experiment(plan: &ExperimentPlan) -> Result<(MomentSeries, Vec<Check>)> {
    if plan.samples < 50 {
        return Err(Error::InvalidInput("variance experiment needs at least 50 samples per degree".into()));
    }
    let mut ctx = Context::new(plan)?;
    let series = run_moments(&mut ctx)?;
    let checks = variance_checks(plan, &series);
    Ok((series, checks))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub set: String,
    pub family: String,
    pub measure: String,
    pub test_function: String,
    pub n: usize,
    pub value: f64,
    pub target: f64,
    pub deviation: f64,
    /// Deterministic Bergman term, standing in for Ê_n at this degree.
    pub bergman_term: f64,
    /// Σ_{n' ≤ n} (value − bergman_term)²
    pub partial_sum: f64,
    pub retries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceTrace {
    pub records: Vec<TraceRecord>,
}

/// Max |value − target| over the last quarter of a trace (at least one point).
pub fn last_quartile_deviation(trace: &[f64]) -> f64 {
    let k = trace.len().div_ceil(4).max(1);
    trace[trace.len() - k..].iter().cloned().fold(0.0, f64::max)
}

/// One independent sample per degree of the sequence plan.
pub fn sequence_experiment(plan: &ExperimentPlan) -> Result<(SequenceTrace, Vec<Check>)> {
    let mut ctx = Context::new(plan)?;
    let degrees = plan.sequence.degrees();
    let top = *degrees.last().expect("validated");
    let mut records = Vec::new();
    let mut checks = Vec::new();
    for s in 0..plan.sets.len() {
        for &family in &plan.families {
            ctx.basis(s, family, top)?;
            for mi in 0..plan.measures.len() {
                let (set_l, fam_l, meas_l) = scope(plan, s, family, mi);
                let full = &ctx.bases[&(s, family)];
                let draws: Result<Vec<(usize, Basis, Pairings)>> = degrees
                    .par_iter()
                    .map(|&n| {
                        let basis = full.truncate(n)?;
                        let d = draw_and_pair(&basis, &plan.measures[mi], n, plan, [STREAM_SEQUENCE, n as u64, 0])?;
                        Ok((n, basis, d))
                    })
                    .collect();
                let draws = draws?;
                for (ci, t) in plan.test_functions.iter().enumerate() {
                    let target = ctx.target(s, ci)?;
                    let mut partial = 0.0;
                    let mut devs = Vec::new();
                    for (n, basis, (vals, retries)) in &draws {
                        let (bt, _) = bergman_term(basis, *n, &t.function, &plan.grid_for(&t.function))?;
                        let value = vals[ci];
                        partial += (value - bt).powi(2);
                        devs.push((value - target).abs());
                        records.push(TraceRecord {
                            set: set_l.clone(),
                            family: fam_l.clone(),
                            measure: meas_l.clone(),
                            test_function: t.name.clone(),
                            n: *n,
                            value,
                            target,
                            deviation: (value - target).abs(),
                            bergman_term: bt,
                            partial_sum: partial,
                            retries: *retries,
                        });
                    }
                    let dev = last_quartile_deviation(&devs);
                    checks.push(Check {
                        name: "sequence_last_quartile".into(),
                        scope: format!("{set_l}/{fam_l}/{meas_l}/{}", t.name),
                        pass: dev < t.sequence_tolerance,
                        detail: format!("max deviation {dev:.4e} against tolerance {}", t.sequence_tolerance),
                    });
                }
            }
        }
    }
    Ok((SequenceTrace { records }, checks))
}

fn csv_line<W: Write>(out: &mut W, fields: &[String]) -> std::io::Result<()> {
    writeln!(out, "{}", fields.join(","))
}

impl MomentSeries {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "set,family,measure,test_function,n,samples,mean,std_error,variance,variance_se,target,bergman_term,residual,c_hat,dphi,residual_bound,variance_rhs,gamma_upper,retries"
        )?;
        for r in &self.records {
            csv_line(
                &mut out,
                &[
                    r.set.clone(),
                    r.family.clone(),
                    r.measure.clone(),
                    r.test_function.clone(),
                    r.n.to_string(),
                    r.samples.to_string(),
                    r.mean.to_string(),
                    r.std_error.to_string(),
                    r.variance.to_string(),
                    r.variance_se.to_string(),
                    r.target.to_string(),
                    r.bergman_term.to_string(),
                    r.residual.to_string(),
                    r.c_hat.to_string(),
                    r.dphi.to_string(),
                    r.residual_bound.to_string(),
                    r.variance_rhs.to_string(),
                    r.gamma_upper.to_string(),
                    r.retries.to_string(),
                ],
            )?;
        }
        Ok(())
    }
}

impl SequenceTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "set,family,measure,test_function,n,value,target,deviation,bergman_term,partial_sum,retries")?;
        for r in &self.records {
            csv_line(
                &mut out,
                &[
                    r.set.clone(),
                    r.family.clone(),
                    r.measure.clone(),
                    r.test_function.clone(),
                    r.n.to_string(),
                    r.value.to_string(),
                    r.target.to_string(),
                    r.deviation.to_string(),
                    r.bergman_term.to_string(),
                    r.partial_sum.to_string(),
                    r.retries.to_string(),
                ],
            )?;
        }
        Ok(())
    }
}

/// JSON summary of an experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub all_pass: bool,
    pub checks: Vec<Check>,
    pub retries: usize,
    #[serde(default)]
    pub constants: Vec<MomentConstant>,
    #[serde(default)]
    pub dphi: Vec<(String, String, DPhi)>,
    pub plan: ExperimentPlan,
}

impl Summary {
    pub fn new(experiment: &str, plan: &ExperimentPlan, checks: Vec<Check>) -> Self {
        Summary {
            experiment: experiment.into(),
            all_pass: checks.iter().all(|c| c.pass),
            checks,
            retries: 0,
            constants: Vec::new(),
            dphi: Vec::new(),
            plan: plan.clone(),
        }
    }

    pub fn with_series(mut self, series: &MomentSeries) -> Self {
        self.retries = series.retries;
        self.constants = series.constants.clone();
        self.dphi = series.dphi.clone();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_identity() {
        let x: Vec<f64> = (0..500).map(|i| ((i * 37 % 101) as f64).sin() + 3.0).collect();
        let (m, v) = mean_variance(&x);
        let n = x.len() as f64;
        let sq = x.iter().map(|a| a * a).sum::<f64>() / n;
        let alt = (sq - m * m) * n / (n - 1.0);
        assert!((alt - v).abs() <= 1e-10 * sq);
    }

    #[test]
    fn quartile_and_inversions() {
        assert_eq!(inversions(&[0.5, 0.4, 0.41, 0.2, 0.1]), 1);
        assert_eq!(last_quartile_deviation(&[0.9, 0.1, 0.2, 0.05]), 0.05);
        assert_eq!(last_quartile_deviation(&[0.3]), 0.3);
    }

    #[test]
    fn default_plan_is_valid() {
        let p = ExperimentPlan::default_plan();
        p.validate().unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let back: ExperimentPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let mut bad = p.clone();
        bad.degrees = vec![20, 10];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bergman_term_circle() {
        let b = Basis::build(&ModelSet::unit_circle(), Family::Minimax, 64, &BasisOptions::default()).unwrap();
        let chi = TestFunction::plateau(vec![Complex64::new(0.0, 0.0)], 1.5, 2.5).unwrap();
        let (v, _) = bergman_term(&b, 64, &chi, &GridSpec::default_for(&chi)).unwrap();
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }
}
