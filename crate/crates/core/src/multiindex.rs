//! Graded lexicographic enumeration of multi-indices in ℕ^m.
//!
//! Entries are ordered by total degree; within one degree the exponent
//! vectors are read left to right with the first coordinate most
//! significant, larger exponents first. For m = 2 and degree 1 this gives
//! `(1,0)` before `(0,1)`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vector of a monomial z^k.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(m: usize) -> Self {
        MultiIndex(vec![0; m])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&k| k as usize).sum()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// A point θ of the standard simplex Δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexDirection {
    theta: Vec<f64>,
}

impl SimplexDirection {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidInput(format!(
                "simplex direction needs non-negative components, got {theta:?}"
            )));
        }
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "simplex direction components sum to {sum}, expected 1"
            )));
        }
        Ok(SimplexDirection { theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// True when every component is strictly positive (θ ∈ Δ°).
    pub fn is_interior(&self) -> bool {
        self.theta.iter().all(|&t| t > 0.0)
    }

    pub fn distance(&self, other: &SimplexDirection) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The multi-indices k(1), ..., k(d_n) of degree at most `max_degree`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiIndexTable {
    dim: usize,
    max_degree: usize,
    entries: Vec<MultiIndex>,
    #[serde(skip)]
    positions: HashMap<MultiIndex, usize>,
}

impl MultiIndexTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MultiIndex] {
        &self.entries
    }

    /// Zero-based position. The 1-based index j of the text is `get(j - 1)`.
    pub fn get(&self, pos: usize) -> Option<&MultiIndex> {
        self.entries.get(pos)
    }

    pub fn position(&self, k: &MultiIndex) -> Option<usize> {
        if self.positions.is_empty() && !self.entries.is_empty() {
            return self.entries.iter().position(|e| e == k);
        }
        self.positions.get(k).copied()
    }

    /// Degree s(j) of the zero-based entry `pos`.
    pub fn degree_at(&self, pos: usize) -> usize {
        self.entries[pos].degree()
    }

    /// Writes columns `j,k_1..k_m,s` with 1-based j.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "j")?;
        for i in 1..=self.dim {
            write!(out, ",k_{i}")?;
        }
        writeln!(out, ",s")?;
        for (pos, k) in self.entries.iter().enumerate() {
            write!(out, "{}", pos + 1)?;
            for e in k.entries() {
                write!(out, ",{e}")?;
            }
            writeln!(out, ",{}", k.degree())?;
        }
        Ok(())
    }
}

fn push_compositions(total: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if parts == 1 {
        prefix.push(total);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// All multi-indices of ℕ^m with degree ≤ n in graded lexicographic order.
pub fn enumerate(m: usize, n: usize) -> MultiIndexTable {
    assert!(m >= 1, "number of variables must be positive");
    let mut entries = Vec::new();
    let mut prefix = Vec::with_capacity(m);
    for degree in 0..=n {
        push_compositions(degree as u32, m, &mut prefix, &mut entries);
    }
    let positions = entries
        .iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), i))
        .collect();
    MultiIndexTable {
        dim: m,
        max_degree: n,
        entries,
        positions,
    }
}

/// d_n = C(m + n, n), the dimension of polynomials of degree ≤ n in m variables.
pub fn dimension(m: usize, n: usize) -> Result<usize> {
    let top = m + n;
    let bottom = n.min(m);
    let mut acc: u64 = 1;
    for i in 1..=bottom as u64 {
        // acc * (top - bottom + i) / i stays integral at every step
        let factor = (top - bottom) as u64 + i;
        acc = acc
            .checked_mul(factor)
            .ok_or(Error::Overflow { top, bottom: n })?
            / i;
    }
    usize::try_from(acc).map_err(|_| Error::Overflow { top, bottom: n })
}

/// k / |k| as a point of the simplex.
pub fn direction(k: &MultiIndex) -> Result<SimplexDirection> {
    let s = k.degree();
    if s == 0 {
        return Err(Error::DegenerateDirection);
    }
    let theta = k.entries().iter().map(|&e| e as f64 / s as f64).collect();
    Ok(SimplexDirection { theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn idx(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn univariate_table_is_degree_order() {
        let t = enumerate(1, 3);
        let got: Vec<_> = t.entries().to_vec();
        assert_eq!(got, vec![idx(&[0]), idx(&[1]), idx(&[2]), idx(&[3])]);
    }

    #[test]
    fn bivariate_degree_one() {
        // brute force: all pairs with sum <= 1, sorted by (degree, first coordinate descending)
        let mut brute: Vec<MultiIndex> = (0..=1u32)
            .flat_map(|a| (0..=1u32).map(move |b| idx(&[a, b])))
            .filter(|k| k.degree() <= 1)
            .collect();
        brute.sort_by(|x, y| x.degree().cmp(&y.degree()).then(y.0.cmp(&x.0)));
        assert_eq!(enumerate(2, 1).entries(), brute.as_slice());
        assert_eq!(brute, vec![idx(&[0, 0]), idx(&[1, 0]), idx(&[0, 1])]);
    }

    #[test]
    fn bivariate_degree_two_has_six_entries() {
        assert_eq!(enumerate(2, 2).len(), 6);
    }

    #[test]
    fn dimension_values() {
        for n in 0..20 {
            assert_eq!(dimension(1, n).unwrap(), n + 1);
        }
        assert_eq!(dimension(2, 2).unwrap(), 6);
        assert_eq!(dimension(2, 10).unwrap(), 66);
        assert_eq!(dimension(2, 512).unwrap(), 514 * 513 / 2);
    }

    #[test]
    fn dimension_overflow_is_reported() {
        assert!(matches!(dimension(40, 200), Err(Error::Overflow { .. })));
    }

    #[test]
    fn directions() {
        assert_eq!(direction(&idx(&[2, 2])).unwrap().theta(), &[0.5, 0.5]);
        assert_eq!(direction(&idx(&[3, 0])).unwrap().theta(), &[1.0, 0.0]);
        let d = direction(&idx(&[1, 4])).unwrap();
        assert!((d.theta()[0] - 0.2).abs() < 1e-15 && (d.theta()[1] - 0.8).abs() < 1e-15);
        assert!(matches!(direction(&idx(&[0, 0])), Err(Error::DegenerateDirection)));
    }

    #[test]
    fn first_entry_is_zero_index() {
        for m in 1..=3 {
            assert_eq!(enumerate(m, 4).get(0), Some(&MultiIndex::zero(m)));
        }
    }

    #[test]
    fn csv_dump() {
        let mut buf = Vec::new();
        enumerate(2, 1).write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "j,k_1,k_2,s\n1,0,0,0\n2,1,0,1\n3,0,1,1\n"
        );
    }

    proptest! {
        #[test]
        fn table_invariants(m in 1usize..=2, n in 0usize..=64) {
            let t = enumerate(m, n);
            let next = enumerate(m, n + 1);
            prop_assert_eq!(t.len(), dimension(m, n).unwrap());
            prop_assert_eq!(&next.entries()[..t.len()], t.entries());
            let mut seen = std::collections::HashSet::new();
            for w in t.entries().windows(2) {
                prop_assert!(w[0].degree() <= w[1].degree());
                if w[0].degree() == w[1].degree() {
                    prop_assert!(w[0].0 > w[1].0);
                }
            }
            for (i, k) in t.entries().iter().enumerate() {
                prop_assert!(seen.insert(k.clone()));
                prop_assert_eq!(t.position(k), Some(i));
                if k.degree() > 0 {
                    let d = direction(k).unwrap();
                    prop_assert!(SimplexDirection::new(d.theta().to_vec()).is_ok());
                }
            }
        }
    }
}
