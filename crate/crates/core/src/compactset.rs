//! Model compact sets with closed-form pluricomplex Green functions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A regular compact set in ℂ or ℂ².
///
/// Products combine two one-variable sets and live in ℂ².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSet {
    Interval { a: f64, b: f64 },
    Circle { radius: f64 },
    Disk { radius: f64 },
    Product { factors: Vec<ModelSet> },
}

impl ModelSet {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        let s = ModelSet::Interval { a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn unit_interval() -> Self {
        ModelSet::Interval { a: -1.0, b: 1.0 }
    }

    pub fn unit_circle() -> Self {
        ModelSet::Circle { radius: 1.0 }
    }

    pub fn unit_disk() -> Self {
        ModelSet::Disk { radius: 1.0 }
    }

    pub fn product(first: ModelSet, second: ModelSet) -> Result<Self> {
        let s = ModelSet::Product {
            factors: vec![first, second],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSet::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::InvalidInput(format!(
                        "interval needs finite a < b, got [{a}, {b}]"
                    )));
                }
            }
            ModelSet::Circle { radius } | ModelSet::Disk { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "radius must be positive, got {radius}"
                    )));
                }
            }
            ModelSet::Product { factors } => {
                if factors.len() != 2 {
                    return Err(Error::InvalidInput(
                        "product sets take exactly two factors".into(),
                    ));
                }
                for f in factors {
                    if matches!(f, ModelSet::Product { .. }) {
                        return Err(Error::Unsupported("nested product".into()));
                    }
                    f.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Number of complex variables m.
    pub fn dim(&self) -> usize {
        match self {
            ModelSet::Product { factors } => factors.len(),
            _ => 1,
        }
    }

    /// The one-variable factors (the set itself when m = 1).
    pub fn factors(&self) -> Vec<&ModelSet> {
        match self {
            ModelSet::Product { factors } => factors.iter().collect(),
            s => vec![s],
        }
    }

    /// Short name used in output file names.
    pub fn label(&self) -> String {
        match self {
            ModelSet::Interval { .. } => "interval".into(),
            ModelSet::Circle { .. } => "circle".into(),
            ModelSet::Disk { .. } => "disk".into(),
            ModelSet::Product { factors } => factors
                .iter()
                .map(|f| f.label())
                .collect::<Vec<_>>()
                .join("x"),
        }
    }

    /// Whether the set is symmetric under z ↦ -z in every coordinate.
    pub fn is_symmetric(&self) -> bool {
        self.factors().iter().all(|f| match f {
            ModelSet::Interval { a, b } => a == &-b,
            _ => true,
        })
    }

    /// Membership test with absolute tolerance `tol`.
    pub fn contains(&self, z: &[Complex64], tol: f64) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        self.factors()
            .iter()
            .zip(z)
            .all(|(f, &w)| match f {
                ModelSet::Interval { a, b } => {
                    w.im.abs() <= tol && w.re >= a - tol && w.re <= b + tol
                }
                ModelSet::Circle { radius } => (w.norm() - radius).abs() <= tol,
                ModelSet::Disk { radius } => w.norm() <= radius + tol,
                ModelSet::Product { .. } => false,
            })
    }

    /// Rightmost point of a one-variable set.
    pub fn rightmost(&self) -> Result<Complex64> {
        match self {
            ModelSet::Interval { b, .. } => Ok(Complex64::new(*b, 0.0)),
            ModelSet::Circle { radius } | ModelSet::Disk { radius } => {
                Ok(Complex64::new(*radius, 0.0))
            }
            ModelSet::Product { .. } => Err(Error::Unsupported("rightmost point".into())),
        }
    }

    /// Pluricomplex Green function V_K(z).
    pub fn green_value(&self, z: &[Complex64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, set lives in C^{}",
                z.len(),
                self.dim()
            )));
        }
        Ok(self
            .factors()
            .iter()
            .zip(z)
            .map(|(f, &w)| green_1d(f, w))
            .fold(0.0, f64::max))
    }

    /// Points of the Shilov boundary used for sup-norms and minimax solves.
    ///
    /// Intervals use Chebyshev–Gauss–Lobatto points in increasing order,
    /// circles and disks use equispaced angles starting at angle 0, and
    /// products take the tensor grid with `count` points per factor.
    pub fn boundary_sample(&self, count: usize) -> Result<Vec<Vec<Complex64>>> {
        if count < 2 {
            return Err(Error::InvalidInput(format!(
                "boundary sample needs at least 2 points, got {count}"
            )));
        }
        match self {
            ModelSet::Product { factors } => {
                let first = axis_sample(&factors[0], count);
                let second = axis_sample(&factors[1], count);
                Ok(first
                    .iter()
                    .flat_map(|&p| second.iter().map(move |&q| vec![p, q]))
                    .collect())
            }
            s => Ok(axis_sample(s, count).into_iter().map(|p| vec![p]).collect()),
        }
    }

    /// Equilibrium measure dd^c V_K for one-variable sets.
    pub fn equilibrium_density(&self) -> Result<EquilibriumDensity> {
        match self {
            ModelSet::Interval { a, b } => Ok(EquilibriumDensity::Arcsine { a: *a, b: *b }),
            ModelSet::Circle { radius } | ModelSet::Disk { radius } => {
                Ok(EquilibriumDensity::UniformCircle { radius: *radius })
            }
            ModelSet::Product { .. } => Err(Error::Unsupported(
                "closed-form equilibrium density in C^2".into(),
            )),
        }
    }
}

fn green_1d(set: &ModelSet, z: Complex64) -> f64 {
    match set {
        ModelSet::Interval { a, b } => {
            let w = (2.0 * z - Complex64::new(a + b, 0.0)) / (b - a);
            let root = (w * w - 1.0).sqrt();
            let mut big = w + root;
            if big.norm() < 1.0 {
                big = w - root;
            }
            big.norm().ln().max(0.0)
        }
        ModelSet::Circle { radius } | ModelSet::Disk { radius } => {
            (z.norm() / radius).ln().max(0.0)
        }
        ModelSet::Product { .. } => unreachable!("factors are one-variable sets"),
    }
}

/// One-variable boundary sample; see [`ModelSet::boundary_sample`].
pub(crate) fn axis_sample(set: &ModelSet, count: usize) -> Vec<Complex64> {
    match set {
        ModelSet::Interval { a, b } => {
            let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
            let last = (count - 1) as f64;
            (0..count)
                .map(|k| {
                    // endpoints are pinned so the sample never leaves [a, b]
                    let x = match k {
                        0 => *a,
                        k if k == count - 1 => *b,
                        k => c + h * (PI * (k as f64 - last / 2.0) / last).sin(),
                    };
                    Complex64::new(x, 0.0)
                })
                .collect()
        }
        ModelSet::Circle { radius } | ModelSet::Disk { radius } => (0..count)
            .map(|k| Complex64::from_polar(*radius, 2.0 * PI * k as f64 / count as f64))
            .collect(),
        ModelSet::Product { .. } => unreachable!("factors are one-variable sets"),
    }
}

/// The limit measure dd^c V_K of a one-variable model set.
#[derive(Clone, Debug, PartialEq)]
pub enum EquilibriumDensity {
    /// 1 / (π √((x - a)(b - x))) on (a, b).
    Arcsine { a: f64, b: f64 },
    /// Normalized arclength on |z| = radius.
    UniformCircle { radius: f64 },
}

impl EquilibriumDensity {
    /// Density with respect to dx (interval) or dθ (circle).
    pub fn density(&self, x: f64) -> f64 {
        match self {
            EquilibriumDensity::Arcsine { a, b } => {
                if x <= *a || x >= *b {
                    0.0
                } else {
                    1.0 / (PI * ((x - a) * (b - x)).sqrt())
                }
            }
            EquilibriumDensity::UniformCircle { .. } => 1.0 / (2.0 * PI),
        }
    }

    /// ∫ f dμ by a rule exact for the weight: Gauss–Chebyshev nodes for the
    /// arcsine law, equispaced angles for the circle.
    pub fn integrate<F: Fn(Complex64) -> f64>(&self, nodes: usize, f: F) -> f64 {
        let n = nodes.max(1);
        let weight = 1.0 / n as f64;
        match self {
            EquilibriumDensity::Arcsine { a, b } => {
                let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
                (1..=n)
                    .map(|k| {
                        let x = c + h * (PI * (2 * k - 1) as f64 / (2 * n) as f64).cos();
                        f(Complex64::new(x, 0.0))
                    })
                    .sum::<f64>()
                    * weight
            }
            EquilibriumDensity::UniformCircle { radius } => {
                (0..n)
                    .map(|k| f(Complex64::from_polar(*radius, 2.0 * PI * k as f64 / n as f64)))
                    .sum::<f64>()
                    * weight
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.integrate(64, |_| 1.0)
    }

    /// Mass of the real interval [lo, hi] (arcsine) or of the arc of
    /// angles [lo, hi] (circle), in closed form.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        match self {
            EquilibriumDensity::Arcsine { a, b } => {
                let cdf = |x: f64| {
                    let w = ((2.0 * x - a - b) / (b - a)).clamp(-1.0, 1.0);
                    0.5 + w.asin() / PI
                };
                (cdf(hi) - cdf(lo)).max(0.0)
            }
            EquilibriumDensity::UniformCircle { .. } => ((hi - lo) / (2.0 * PI)).clamp(0.0, 1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn disk_green_at_two() {
        let v = ModelSet::unit_disk().green_value(&[c(2.0, 0.0)]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn interval_green_at_two() {
        let v = ModelSet::unit_interval().green_value(&[c(2.0, 0.0)]).unwrap();
        assert!((v - (2.0 + 3f64.sqrt()).ln()).abs() < 1e-14);
        assert!((v - 1.316958).abs() < 1e-6);
    }

    #[test]
    fn interval_green_is_branch_independent_off_axis() {
        // both half planes and the negative axis give the same value as the mirror point
        let k = ModelSet::unit_interval();
        for z in [c(-2.0, 0.0), c(0.3, 1.1), c(0.3, -1.1), c(-0.3, 1.1)] {
            let v = k.green_value(&[z]).unwrap();
            let mirrored = k.green_value(&[-z]).unwrap();
            let conj = k.green_value(&[z.conj()]).unwrap();
            assert!((v - mirrored).abs() < 1e-14 && (v - conj).abs() < 1e-14);
            assert!(v > 0.0);
        }
    }

    #[test]
    fn green_vanishes_on_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sets = [
            ModelSet::unit_interval(),
            ModelSet::interval(-0.5, 2.0).unwrap(),
            ModelSet::unit_circle(),
            ModelSet::Disk { radius: 1.5 },
        ];
        for set in &sets {
            for _ in 0..1000 {
                let t: f64 = rng.random();
                let z = match set {
                    ModelSet::Interval { a, b } => c(a + (b - a) * t, 0.0),
                    ModelSet::Circle { radius } => Complex64::from_polar(*radius, 2.0 * PI * t),
                    ModelSet::Disk { radius } => {
                        Complex64::from_polar(radius * rng.random::<f64>().sqrt(), 2.0 * PI * t)
                    }
                    _ => unreachable!(),
                };
                assert!(set.green_value(&[z]).unwrap().abs() < 1e-10, "{set:?} {z}");
            }
        }
    }

    #[test]
    fn green_has_logarithmic_growth() {
        let sets = [
            ModelSet::unit_interval(),
            ModelSet::unit_circle(),
            ModelSet::Disk { radius: 2.0 },
            ModelSet::product(ModelSet::unit_interval(), ModelSet::unit_disk()).unwrap(),
        ];
        for set in &sets {
            for r in [1e3, 1e6] {
                for angle in [0.0, 0.7, 2.0, 3.1] {
                    let z: Vec<_> = (0..set.dim())
                        .map(|i| Complex64::from_polar(r, angle + i as f64))
                        .collect();
                    let norm = z.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
                    let v = set.green_value(&z).unwrap();
                    assert!(v >= 0.0);
                    assert!((v - norm.ln()).abs() < 2.0, "{set:?} r={r}");
                }
            }
        }
    }

    #[test]
    fn product_green_is_max_of_factors() {
        let k1 = ModelSet::unit_interval();
        let k2 = ModelSet::unit_disk();
        let prod = ModelSet::product(k1.clone(), k2.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let z = [
                c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
            ];
            let v = prod.green_value(&z).unwrap();
            let expect = k1
                .green_value(&z[..1])
                .unwrap()
                .max(k2.green_value(&z[1..]).unwrap());
            assert_eq!(v, expect);
        }
    }

    #[test]
    fn boundary_samples() {
        let pts = ModelSet::unit_interval().boundary_sample(3).unwrap();
        assert_eq!(pts, vec![vec![c(-1.0, 0.0)], vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]]);

        let pts = ModelSet::unit_circle().boundary_sample(4).unwrap();
        let expect = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (p, e) in pts.iter().zip(expect) {
            assert!((p[0] - e).norm() < 1e-15);
        }

        let prod = ModelSet::product(ModelSet::unit_disk(), ModelSet::unit_disk()).unwrap();
        let grid = prod.boundary_sample(4).unwrap();
        assert_eq!(grid.len(), 16);
        assert!(grid.iter().all(|p| prod.contains(p, 1e-12)));
        assert!(ModelSet::unit_circle().boundary_sample(1).is_err());
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(ModelSet::interval(1.0, 1.0).is_err());
        assert!(ModelSet::Circle { radius: -1.0 }.validate().is_err());
        assert!(ModelSet::Product { factors: vec![ModelSet::unit_disk()] }
            .validate()
            .is_err());
    }

    #[test]
    fn equilibrium_masses() {
        let circle = ModelSet::unit_circle().equilibrium_density().unwrap();
        assert!((circle.total_mass() - 1.0).abs() < 1e-12);
        let arcsine = ModelSet::unit_interval().equilibrium_density().unwrap();
        assert!((arcsine.total_mass() - 1.0).abs() < 1e-12);
        assert!((arcsine.mass_between(-1.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((arcsine.mass_between(-1.0, 1.0) - 1.0).abs() < 1e-15);

        // Gauss–Chebyshev is exact for polynomials against the arcsine law:
        // the second moment of arcsine on [-1,1] is 1/2
        let m2 = arcsine.integrate(8, |z| z.re * z.re);
        assert!((m2 - 0.5).abs() < 1e-14);

        // density integrates to 1 under an independent rule (substitution x = cos t)
        let n = 20000;
        let h = PI / n as f64;
        let mass: f64 = (0..n)
            .map(|k| {
                let t = (k as f64 + 0.5) * h;
                arcsine.density(t.cos()) * t.sin() * h
            })
            .sum();
        assert!((mass - 1.0).abs() < 1e-8);

        assert!(ModelSet::product(ModelSet::unit_disk(), ModelSet::unit_disk())
            .unwrap()
            .equilibrium_density()
            .is_err());
    }
}
