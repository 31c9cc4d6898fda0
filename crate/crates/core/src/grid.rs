//! Uniform midpoint grid over `K = [0, 1]^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `nodes` cells per dimension; node `i` sits at `(i + 0.5) / nodes`.
///
/// Flat indices run with dimension 0 fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub nodes: usize,
}

impl Grid {
    pub fn new(d: usize, nodes: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::config(format!("dimension {d} is not supported")));
        }
        if nodes < 2 {
            return Err(Error::config("a grid needs at least 2 nodes per dimension"));
        }
        let total = (nodes as u128).pow(d as u32);
        if total > 1 << 26 {
            return Err(Error::Resource(format!("grid with {total} nodes")));
        }
        Ok(Self { d, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        1.0 / self.nodes as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.step().powi(self.d as i32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.nodes as f64
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            out.push(flat % self.nodes);
            flat /= self.nodes;
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .rev()
            .fold(0, |acc, &i| acc * self.nodes + i)
    }

    /// Coordinates of the node with flat index `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| self.coord(i))
            .collect()
    }

    /// All node coordinates, row-major `len × d`.
    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|i| self.point(i)).collect()
    }

    /// Flat index of the cell containing `x`, or `None` when `x` lies outside `K`.
    ///
    /// The upper face `x_j = 1` belongs to the last cell.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for &xj in x.iter().rev() {
            if !(0.0..=1.0).contains(&xj) {
                return None;
            }
            let i = ((xj * self.nodes as f64) as usize).min(self.nodes - 1);
            flat = flat * self.nodes + i;
        }
        Some(flat)
    }

    /// Flat indices of the axis neighbours of `flat` (up to `2d`).
    pub fn neighbours(&self, flat: usize) -> Vec<usize> {
        let idx = self.multi_index(flat);
        let mut out = Vec::with_capacity(2 * self.d);
        let mut stride = 1;
        for &i in &idx {
            if i > 0 {
                out.push(flat - stride);
            }
            if i + 1 < self.nodes {
                out.push(flat + stride);
            }
            stride *= self.nodes;
        }
        out
    }

    pub fn tabulate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let grid = Grid::new(2, 8).unwrap();
        for flat in 0..grid.len() {
            assert_eq!(grid.flat_index(&grid.multi_index(flat)), flat);
        }
        assert_eq!(grid.multi_index(9), vec![1, 1]);
        assert_eq!(grid.point(1), vec![1.5 / 8.0, 0.5 / 8.0]);
    }

    #[test]
    fn cell_lookup() {
        let grid = Grid::new(2, 4).unwrap();
        assert_eq!(grid.cell_of(&[0.3, 0.9]), Some(1 + 3 * 4));
        assert_eq!(grid.cell_of(&[1.0, 1.0]), Some(15));
        assert_eq!(grid.cell_of(&[-0.01, 0.5]), None);
        assert_eq!(grid.cell_of(&[0.5, 1.2]), None);
        for flat in 0..grid.len() {
            assert_eq!(grid.cell_of(&grid.point(flat)), Some(flat));
        }
    }

    #[test]
    fn neighbour_counts() {
        let grid = Grid::new(2, 5).unwrap();
        assert_eq!(grid.neighbours(0).len(), 2);
        assert_eq!(grid.neighbours(grid.flat_index(&[2, 2])).len(), 4);
        assert_eq!(grid.neighbours(grid.flat_index(&[4, 2])).len(), 3);
    }

    #[test]
    fn resource_limit() {
        assert!(matches!(Grid::new(3, 1024), Err(Error::Resource(_))));
        assert!(Grid::new(0, 10).is_err());
    }
}
