//! Candidate classifiers as masks on the grid, and the pseudo-distances between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set `G ⊂ K`, one flag per grid node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionSet {
    pub mask: Vec<bool>,
}

impl DecisionSet {
    pub fn new(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn empty(len: usize) -> Self {
        Self::new(vec![false; len])
    }

    pub fn full(len: usize) -> Self {
        Self::new(vec![true; len])
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn complement(&self) -> Self {
        Self::new(self.mask.iter().map(|b| !b).collect())
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn symmetric_difference(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a != b)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &Self, op: impl Fn(bool, bool) -> bool) -> Result<Self> {
        check_shared(self, other)?;
        Ok(Self::new(
            self.mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        ))
    }
}

fn check_shared(a: &DecisionSet, b: &DecisionSet) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::precondition(format!(
            "masks of length {} and {} do not share a grid",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `{x : ν(x) >= 0}`; ties go to the set.
pub fn decision_set_of(nu: &[f64]) -> DecisionSet {
    DecisionSet::new(nu.iter().map(|&v| v >= 0.0).collect())
}

/// `∫_{G1 Δ G2} dQ`, with `q_weights` the per-node `Q`-mass.
pub fn dist_delta(g1: &DecisionSet, g2: &DecisionSet, q_weights: &[f64]) -> Result<f64> {
    weighted_difference(g1, g2, q_weights, |_| 1.0)
}

/// `∫_{G1 Δ G2} |f - g| dQ`.
pub fn dist_fg(
    g1: &DecisionSet,
    g2: &DecisionSet,
    f: &[f64],
    g: &[f64],
    q_weights: &[f64],
) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::precondition("f and g are tabulated on different grids"));
    }
    weighted_difference(g1, g2, q_weights, |i| (f[i] - g[i]).abs())
}

fn weighted_difference(
    g1: &DecisionSet,
    g2: &DecisionSet,
    q_weights: &[f64],
    density: impl Fn(usize) -> f64,
) -> Result<f64> {
    check_shared(g1, g2)?;
    if q_weights.len() != g1.len() {
        return Err(Error::precondition("measure weights do not match the mask"));
    }
    Ok(g1
        .mask
        .iter()
        .zip(&g2.mask)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| density(i) * q_weights[i])
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    #[test]
    fn constant_functions() {
        assert_eq!(decision_set_of(&[1.0; 5]).count(), 5);
        assert_eq!(decision_set_of(&[-1.0; 5]).count(), 0);
        assert_eq!(decision_set_of(&[0.0, -0.0]).count(), 2);
    }

    #[test]
    fn half_line_count() {
        let grid = Grid::new(1, 1024).unwrap();
        let nu = grid.tabulate(|x| x[0] - 0.5);
        let set = decision_set_of(&nu);
        assert!((set.count() as i64 - 512).abs() <= 1);
        assert!(set.mask[1023] && !set.mask[0]);
    }

    #[test]
    fn interval_distance() {
        let grid = Grid::new(1, 1000).unwrap();
        let q = vec![grid.cell_volume(); grid.len()];
        let a = decision_set_of(&grid.tabulate(|x| 0.5 - x[0]));
        let b = decision_set_of(&grid.tabulate(|x| 0.7 - x[0]));
        let d = dist_delta(&a, &b, &q).unwrap();
        assert!((d - 0.2).abs() <= grid.step() + 1e-12);
        assert_eq!(d, dist_delta(&b, &a, &q).unwrap());
        assert_eq!(dist_delta(&a, &a, &q).unwrap(), 0.0);

        let f = vec![1.3; grid.len()];
        let g = vec![1.0; grid.len()];
        let fg = dist_fg(&a, &b, &f, &g, &q).unwrap();
        assert!((fg - 0.3 * d).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths() {
        let a = DecisionSet::empty(3);
        let b = DecisionSet::empty(4);
        assert!(a.union(&b).is_err());
        assert!(dist_delta(&a, &b, &[1.0; 3]).is_err());
    }

    fn masks(len: usize) -> impl Strategy<Value = DecisionSet> {
        proptest::collection::vec(any::<bool>(), len).prop_map(DecisionSet::new)
    }

    proptest! {
        #[test]
        fn pseudo_metric(
            a in masks(64),
            b in masks(64),
            c in masks(64),
            q in proptest::collection::vec(0.0f64..1.0, 64),
            f in proptest::collection::vec(0.0f64..2.0, 64),
        ) {
            let g = vec![1.0; 64];
            let dab = dist_delta(&a, &b, &q).unwrap();
            let dba = dist_delta(&b, &a, &q).unwrap();
            prop_assert_eq!(dab, dba);
            let dbc = dist_delta(&b, &c, &q).unwrap();
            let dac = dist_delta(&a, &c, &q).unwrap();
            prop_assert!(dac <= dab + dbc + 1e-12);

            let fab = dist_fg(&a, &b, &f, &g, &q).unwrap();
            prop_assert_eq!(fab, dist_fg(&b, &a, &f, &g, &q).unwrap());
            let fbc = dist_fg(&b, &c, &f, &g, &q).unwrap();
            let fac = dist_fg(&a, &c, &f, &g, &q).unwrap();
            prop_assert!(fac <= fab + fbc + 1e-12);
        }

        #[test]
        fn set_algebra(a in masks(40), b in masks(40)) {
            let sd = a.symmetric_difference(&b).unwrap();
            let union = a.union(&b).unwrap();
            let inter = a.intersection(&b).unwrap();
            prop_assert_eq!(sd.count() + inter.count(), union.count());
            prop_assert_eq!(a.complement().complement(), a.clone());
            prop_assert!(inter.is_subset(&union));
        }
    }
}
