//! Uniform computation grid shared by the time and age axes.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// Relative slack when checking that an extent is an integer multiple of the step.
const DIVISIBILITY_TOL: f64 = 1e-9;

/// Uniform grid with a single step shared by the time axis `[0, t_max]` and
/// the age axis `[0, y_max]`.
///
/// The recursion kernel couples time and age with unit slope (a spouse of age
/// `y` at time `t` had age `y + v - t` at time `v`), so a shared step makes
/// every shifted lookup land exactly on a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    step: f64,
    t_max: f64,
    y_max: f64,
}

impl GridSpec {
    pub fn new(step: f64, t_max: f64, y_max: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(EngineError::Validation(format!(
                "grid step must be positive and finite, got {step}"
            )));
        }
        for (name, extent) in [("t_max", t_max), ("y_max", y_max)] {
            if !(extent > 0.0) || !extent.is_finite() {
                return Err(EngineError::Validation(format!(
                    "grid {name} must be positive and finite, got {extent}"
                )));
            }
            let n = (extent / step).round();
            if (extent - n * step).abs() > DIVISIBILITY_TOL * extent.max(1.0) {
                return Err(EngineError::Validation(format!(
                    "grid {name} = {extent} is not an integer multiple of step = {step}"
                )));
            }
        }
        Ok(Self { step, t_max, y_max })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    /// Number of time nodes, endpoints included.
    pub fn n_t(&self) -> usize {
        (self.t_max / self.step).round() as usize + 1
    }

    /// Number of age nodes, endpoints included.
    pub fn n_y(&self) -> usize {
        (self.y_max / self.step).round() as usize + 1
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    pub fn t_nodes(&self) -> Vec<f64> {
        (0..self.n_t()).map(|i| self.t(i)).collect()
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        (0..self.n_y()).map(|j| self.y(j)).collect()
    }

    /// Index of a value known to sit on the lattice, or an error if it does not.
    pub fn lattice_index(&self, x: f64, axis_max: f64) -> Result<usize> {
        if x < 0.0 || x > axis_max + DIVISIBILITY_TOL {
            return Err(EngineError::Domain(format!(
                "{x} is outside the grid range [0, {axis_max}]"
            )));
        }
        let k = (x / self.step).round();
        if (x - k * self.step).abs() > 1e-9 * x.max(1.0) {
            return Err(EngineError::InvalidArgument(format!(
                "{x} does not lie on the grid lattice with step {}",
                self.step
            )));
        }
        Ok(k as usize)
    }

    /// Floor index and fractional offset for interpolation along `[0, axis_max]`.
    pub(crate) fn locate(&self, x: f64, axis_max: f64, n: usize) -> Result<(usize, f64)> {
        if !x.is_finite() || x < 0.0 || x > axis_max * (1.0 + DIVISIBILITY_TOL) {
            return Err(EngineError::Domain(format!(
                "{x} is outside the grid range [0, {axis_max}]"
            )));
        }
        let pos = (x / self.step).min((n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        Ok((i, pos - i as f64))
    }
}

/// Dense matrix over the (t, y) grid, row-major with one row per time node.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    n_t: usize,
    n_y: usize,
    data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(n_t: usize, n_y: usize) -> Self {
        Self {
            n_t,
            n_y,
            data: vec![0.0; n_t * n_y],
        }
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_y + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n_y + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_y..(i + 1) * self.n_y]
    }

    pub fn add_assign(&mut self, other: &Grid2) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_node_counts() {
        let g = GridSpec::new(0.1, 50.0, 125.0).unwrap();
        assert_eq!(g.n_t(), 501);
        assert_eq!(g.n_y(), 1251);
        assert!((g.t(500) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_non_divisible_extent() {
        assert!(GridSpec::new(0.3, 50.0, 125.0).is_err());
        assert!(GridSpec::new(0.0, 50.0, 125.0).is_err());
        assert!(GridSpec::new(0.1, -1.0, 125.0).is_err());
    }

    #[test]
    fn lattice_index_roundtrip() {
        let g = GridSpec::new(0.05, 60.0, 80.0).unwrap();
        assert_eq!(g.lattice_index(20.0, 80.0).unwrap(), 400);
        assert!(g.lattice_index(20.025, 80.0).is_err());
        assert!(g.lattice_index(90.0, 80.0).is_err());
    }

    #[test]
    fn grid2_indexing() {
        let mut m = Grid2::zeros(3, 4);
        m.set(2, 3, 7.5);
        assert_eq!(m.get(2, 3), 7.5);
        assert_eq!(m.row(2), &[0.0, 0.0, 0.0, 7.5]);
    }
}
