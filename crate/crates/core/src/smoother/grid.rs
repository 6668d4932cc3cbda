use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of grid points.
pub const DEFAULT_GRID: usize = 256;

/// Equispaced grid on `[0, 1]` with trapezoid weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(g: usize) -> Result<Self> {
        if g < 2 {
            return Err(invalid("grid", format!("need at least 2 points, got {g}")));
        }
        let dx = 1.0 / (g - 1) as f64;
        let points = (0..g).map(|i| i as f64 * dx).collect();
        let weights = (0..g)
            .map(|i| if i == 0 || i == g - 1 { 0.5 * dx } else { dx })
            .collect();
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Samples `f` at the grid points.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|&t| f(t)).collect()
    }

    pub(crate) fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::GridMismatch {
                expected: self.len(),
                actual: f.len(),
            });
        }
        Ok(())
    }

    /// Weighted inner product `⟨f, g⟩_w`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// `‖f‖²_w`.
    pub fn norm2(&self, f: &[f64]) -> f64 {
        self.inner(f, f)
    }

    /// `‖f − g‖²_w`.
    pub fn dist2(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum()
    }

    /// Indices of grid points inside `[lo, hi]`.
    pub fn indices_within(&self, lo: f64, hi: f64) -> Vec<usize> {
        let eps = 1e-12;
        (0..self.len())
            .filter(|&i| self.points[i] >= lo - eps && self.points[i] <= hi + eps)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_points_increase() {
        for g in [2, 3, 17, 256, 1025] {
            let grid = Grid::new(g).unwrap();
            assert!((grid.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-14);
            assert!(grid.points().windows(2).all(|w| w[0] < w[1]));
            assert_eq!(grid.points()[0], 0.0);
            assert_eq!(*grid.points().last().unwrap(), 1.0);
        }
        assert!(Grid::new(1).is_err());
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let grid = Grid::new(5).unwrap();
        assert!(matches!(
            grid.check(&[0.0; 4]),
            Err(Error::GridMismatch { expected: 5, actual: 4 })
        ));
    }
}
