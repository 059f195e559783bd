//! Grid approximation of the continuous Fourier transform
//! `𝓕φ(ξ) = ∫ e^{-iξ·x} φ(x) dx`, inverse carrying `(2π)^{-d}`.
//!
//! On a grid with spacings `Δx_i`, first cell center `x₀` and `n_i` cells per
//! axis, the frequencies are `ξ_k = 2πk / (n_i Δx_i)` in FFT order and
//!
//! ```text
//! 𝓕φ(ξ_k) ≈ Π Δx_i · e^{-iξ_k·x₀} · FFT(φ)_k
//! ```
//!
//! The inverse undoes this exactly, so round trips are exact up to FFT
//! round-off and Parseval holds in the form `Σ|φ|²Δx = (2π)^{-d} Σ|𝓕φ|²Δξ`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Axis;

pub struct DftPlan {
    axes: Vec<Axis>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for DftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DftPlan").field("axes", &self.axes).finish()
    }
}

impl Clone for DftPlan {
    fn clone(&self) -> Self {
        Self {
            axes: self.axes.clone(),
            forward: self.forward.clone(),
            inverse: self.inverse.clone(),
        }
    }
}

impl DftPlan {
    pub fn new(axes: &[Axis]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = axes.iter().map(|a| planner.plan_fft_forward(a.cells)).collect();
        let inverse = axes.iter().map(|a| planner.plan_fft_inverse(a.cells)).collect();
        Self {
            axes: axes.to_vec(),
            forward,
            inverse,
        }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frequency spacing `Δξ_i = 2π / L_i` on axis `i`.
    pub fn dxi(&self, i: usize) -> f64 {
        2.0 * PI / self.axes[i].length()
    }

    /// `Π Δξ_i`
    pub fn frequency_cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.dxi(i)).product()
    }

    /// Largest resolved frequency `π / Δx_i` on axis `i`.
    pub fn nyquist(&self, i: usize) -> f64 {
        PI / self.axes[i].spacing()
    }

    /// Signed integer frequency index of FFT bin `k` on axis `i`.
    pub fn wavenumber(&self, i: usize, k: usize) -> i64 {
        let n = self.axes[i].cells;
        if k < n.div_ceil(2) {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// Frequencies of axis `i` in FFT order.
    pub fn axis_frequencies(&self, i: usize) -> Vec<f64> {
        let dxi = self.dxi(i);
        (0..self.axes[i].cells)
            .map(|k| self.wavenumber(i, k) as f64 * dxi)
            .collect()
    }

    /// All frequency vectors in storage (row-major) order.
    pub fn frequencies(&self) -> Vec<Vec<f64>> {
        let per_axis: Vec<Vec<f64>> = (0..self.dim()).map(|i| self.axis_frequencies(i)).collect();
        (0..self.len())
            .map(|lin| {
                self.unravel(lin)
                    .into_iter()
                    .enumerate()
                    .map(|(i, k)| per_axis[i][k])
                    .collect()
            })
            .collect()
    }

    /// Linear index of the bin holding `-ξ` for the bin at `lin`.
    pub fn negated(&self, lin: usize) -> usize {
        let idx: Vec<usize> = self
            .unravel(lin)
            .into_iter()
            .zip(&self.axes)
            .map(|(k, a)| (a.cells - k) % a.cells)
            .collect();
        self.ravel(&idx)
    }

    pub fn unravel(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (slot, ax) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = lin % ax.cells;
            lin /= ax.cells;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.cells + i)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len == self.len() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.len(),
                actual: len,
            })
        }
    }

    /// Phase `e^{-iξ·x₀}` times `Π Δx_i`, per bin.
    fn forward_factors(&self) -> Vec<Complex64> {
        let x0: Vec<f64> = self.axes.iter().map(|a| a.center(0)).collect();
        let scale: f64 = self.axes.iter().map(Axis::spacing).product();
        self.frequencies()
            .into_iter()
            .map(|xi| {
                let phase: f64 = xi.iter().zip(&x0).map(|(a, b)| a * b).sum();
                Complex64::from_polar(scale, -phase)
            })
            .collect()
    }

    fn transform_axes(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let shape: Vec<usize> = self.axes.iter().map(|a| a.cells).collect();
        for (ax, plan) in plans.iter().enumerate() {
            let n = shape[ax];
            if n == 1 {
                continue;
            }
            let stride: usize = shape[ax + 1..].iter().product();
            let outer: usize = shape[..ax].iter().product();
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// `𝓕φ` on the frequency grid.
    pub fn forward(&self, phi: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check(phi.len())?;
        let mut out = phi.to_vec();
        self.transform_axes(&mut out, &self.forward);
        for (o, f) in out.iter_mut().zip(self.forward_factors()) {
            *o *= f;
        }
        Ok(out)
    }

    pub fn forward_real(&self, phi: &[f64]) -> Result<Vec<Complex64>> {
        let c: Vec<Complex64> = phi.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&c)
    }

    /// `𝓕^{-1}Φ` on the spatial grid.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check(spectrum.len())?;
        let n = self.len() as f64;
        let mut out: Vec<Complex64> = spectrum
            .iter()
            .zip(self.forward_factors())
            .map(|(s, f)| s / f / n)
            .collect();
        self.transform_axes(&mut out, &self.inverse);
        Ok(out)
    }
}
