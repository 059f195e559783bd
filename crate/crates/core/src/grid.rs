//! Rectangular space-time grids.
//!
//! Cells are stored time-major: index `k * spatial_cells + m`, where `m` is
//! the row-major spatial index with the last axis varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, cells: usize) -> Self {
        Self { min, max, cells }
    }

    pub fn length(&self) -> f64 {
        self.max - self.min
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.spacing()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    space: Vec<Axis>,
    horizon: f64,
    steps: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    space: Vec<Axis>,
    horizon: f64,
    steps: usize,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        Self::new(raw.space, raw.horizon, raw.steps)
    }
}

impl GridSpec {
    pub fn new(space: Vec<Axis>, horizon: f64, steps: usize) -> Result<Self> {
        if space.is_empty() {
            return Err(param("space", "spatial dimension must be at least 1"));
        }
        for (i, ax) in space.iter().enumerate() {
            if !(ax.min.is_finite() && ax.max.is_finite() && ax.max > ax.min) {
                return Err(param("space", format!("axis {i}: extent [{}, {}] is empty", ax.min, ax.max)));
            }
            if ax.cells == 0 {
                return Err(param("space", format!("axis {i}: cell count must be at least 1")));
            }
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(param("horizon", format!("time horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(param("steps", "time step count must be at least 1"));
        }
        Ok(Self { space, horizon, steps })
    }

    /// A `d`-dimensional cube `[min, max]^d` with `cells` cells per axis.
    pub fn cube(dim: usize, min: f64, max: f64, cells: usize, horizon: f64, steps: usize) -> Result<Self> {
        Self::new(vec![Axis::new(min, max, cells); dim], horizon, steps)
    }

    pub fn dim(&self) -> usize {
        self.space.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.space
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn spatial_shape(&self) -> Vec<usize> {
        self.space.iter().map(|a| a.cells).collect()
    }

    pub fn spatial_cells(&self) -> usize {
        self.space.iter().map(|a| a.cells).product()
    }

    pub fn cells(&self) -> usize {
        self.spatial_cells() * self.steps
    }

    pub fn spatial_cell_volume(&self) -> f64 {
        self.space.iter().map(Axis::spacing).product()
    }

    /// `Δ = Δt · Π Δx_i`
    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.spatial_cell_volume()
    }

    pub fn spatial_volume(&self) -> f64 {
        self.space.iter().map(Axis::length).product()
    }

    pub fn volume(&self) -> f64 {
        self.horizon * self.spatial_volume()
    }

    /// Multi-index of spatial cell `m`.
    pub fn spatial_index(&self, mut m: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (slot, ax) in idx.iter_mut().zip(&self.space).rev() {
            *slot = m % ax.cells;
            m /= ax.cells;
        }
        idx
    }

    pub fn spatial_linear(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.space)
            .fold(0, |acc, (i, ax)| acc * ax.cells + i)
    }

    pub fn spatial_center(&self, m: usize) -> Vec<f64> {
        self.spatial_index(m)
            .into_iter()
            .zip(&self.space)
            .map(|(i, ax)| ax.center(i))
            .collect()
    }

    /// Left edge `t_k = k Δt` of time slice `k`.
    pub fn time_edge(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn time_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }

    /// Number of whole time slices in `[0, t]`; `t` must sit on a slice
    /// boundary up to round-off.
    pub fn slices_until(&self, t: f64) -> Result<usize> {
        let k = t / self.dt();
        let kr = k.round();
        if !(t >= 0.0) || (k - kr).abs() > 1e-9 * k.max(1.0) || kr as usize > self.steps {
            return Err(param(
                "t",
                format!("time {t} is not a slice boundary of the grid (dt = {}, horizon {})", self.dt(), self.horizon),
            ));
        }
        Ok(kr as usize)
    }

    /// Evaluates `f(t, x)` at every cell center, in storage order.
    pub fn sample<F: Fn(f64, &[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let centers: Vec<Vec<f64>> = (0..self.spatial_cells()).map(|m| self.spatial_center(m)).collect();
        let mut out = Vec::with_capacity(self.cells());
        for k in 0..self.steps {
            let t = self.time_center(k);
            for x in &centers {
                out.push(f(t, x));
            }
        }
        out
    }

    /// Evaluates `f(x)` at every spatial cell center.
    pub fn sample_space<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.spatial_cells()).map(|m| f(&self.spatial_center(m))).collect()
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.cells() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.cells(),
                actual: len,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volumes_and_indexing() {
        let g = GridSpec::new(vec![Axis::new(0.0, 2.0, 4), Axis::new(-1.0, 1.0, 5)], 1.0, 10).unwrap();
        assert_eq!(g.cells(), 200);
        assert!((g.cell_volume() - 0.1 * 0.5 * 0.4).abs() < 1e-15);
        assert!((g.volume() - 4.0).abs() < 1e-15);
        for m in 0..g.spatial_cells() {
            assert_eq!(g.spatial_linear(&g.spatial_index(m)), m);
        }
        assert_eq!(g.spatial_index(7), vec![1, 2]);
        assert_eq!(g.slices_until(0.3).unwrap(), 3);
        assert!(g.slices_until(0.35).is_err());
        assert!(g.slices_until(1.1).is_err());
    }

    #[test]
    fn validation() {
        assert!(GridSpec::new(vec![], 1.0, 1).is_err());
        assert!(GridSpec::new(vec![Axis::new(1.0, 1.0, 3)], 1.0, 1).is_err());
        assert!(GridSpec::new(vec![Axis::new(0.0, 1.0, 0)], 1.0, 1).is_err());
        assert!(GridSpec::new(vec![Axis::new(0.0, 1.0, 2)], 0.0, 1).is_err());
        assert!(GridSpec::new(vec![Axis::new(0.0, 1.0, 2)], 1.0, 0).is_err());
    }
}
