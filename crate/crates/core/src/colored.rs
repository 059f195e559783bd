//! Colored Lévy noise `X_t(φ) = L_t(𝓕^{-1}(𝓕φ · h))`, realized from a
//! simulated white-noise field through the spatial kernel `ψ`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dft::DftPlan;
use crate::error::{param, Error, Result};
use crate::grid::{Axis, GridSpec};
use crate::rng::StreamSeed;
use crate::spectral::{is_tempered, mu_integral, Cutoff, Integrand, SpectralDensity, TemperedMeasureMu};
use crate::white_noise::NoiseGrid;

/// Largest tolerated `max |Im ψ| / max |ψ|` after inversion.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

/// A concrete smooth test function on ℝ^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `A exp(-|x - c|² / (2w²))`
    GaussianBump { center: Vec<f64>, width: f64, amplitude: f64 },
    /// Indicator of `Π [lo_i, hi_i]` convolved with a centered Gaussian of
    /// standard deviation `mollifier`.
    SmoothedIndicator { lo: Vec<f64>, hi: Vec<f64>, mollifier: f64 },
    /// Values at the cell centers of a spatial grid, row-major.
    GridSampled { axes: Vec<Axis>, values: Vec<f64> },
}

impl TestFunction {
    pub fn gaussian_bump(center: Vec<f64>, width: f64, amplitude: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(param("center", "need at least one coordinate"));
        }
        if !(width > 0.0 && width.is_finite()) || !amplitude.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(param("width", "bump needs a finite center and amplitude and a positive width"));
        }
        Ok(TestFunction::GaussianBump {
            center,
            width,
            amplitude,
        })
    }

    pub fn smoothed_indicator(lo: Vec<f64>, hi: Vec<f64>, mollifier: f64) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(param("box", "lower and upper corners must have the same positive length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(b > a)) || !(mollifier > 0.0 && mollifier.is_finite()) {
            return Err(param("box", "box must be non-empty and the mollifier width positive"));
        }
        Ok(TestFunction::SmoothedIndicator { lo, hi, mollifier })
    }

    pub fn grid_sampled(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.cells).product();
        if axes.is_empty() || values.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(param("values", "test function samples must be finite"));
        }
        Ok(TestFunction::GridSampled { axes, values })
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::GaussianBump { center, .. } => center.len(),
            TestFunction::SmoothedIndicator { lo, .. } => lo.len(),
            TestFunction::GridSampled { axes, .. } => axes.len(),
        }
    }

    /// `φ(x)`; grid-sampled functions are only defined through [`sample`](Self::sample).
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        match self {
            TestFunction::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                Some(amplitude * (-0.5 * r2 / (width * width)).exp())
            }
            TestFunction::SmoothedIndicator { lo, hi, mollifier } => {
                let s = mollifier * std::f64::consts::SQRT_2;
                // Φ((x-lo)/σ) - Φ((x-hi)/σ), written with erfc for accuracy in the tails
                Some(
                    x.iter()
                        .zip(lo.iter().zip(hi))
                        .map(|(&xi, (&a, &b))| 0.5 * (erfc((a - xi) / s) - erfc((b - xi) / s)))
                        .product(),
                )
            }
            TestFunction::GridSampled { .. } => None,
        }
    }

    /// Samples at the cell centers of `axes`.
    pub fn sample(&self, axes: &[Axis]) -> Result<Vec<f64>> {
        if axes.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: axes.len(),
            });
        }
        match self {
            TestFunction::GridSampled { axes: own, values } => {
                if own.as_slice() != axes {
                    return Err(param("axes", "grid-sampled test function lives on a different grid"));
                }
                Ok(values.clone())
            }
            _ => {
                let g = GridSpec::new(axes.to_vec(), 1.0, 1)?;
                Ok(g.sample_space(|x| self.eval(x).unwrap_or(0.0)))
            }
        }
    }

    /// `𝓕φ(ξ)` in closed form where available.
    pub fn fourier(&self, xi: &[f64]) -> Option<Complex64> {
        match self {
            TestFunction::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                let d = center.len() as i32;
                let r2: f64 = xi.iter().map(|x| x * x).sum();
                let phase: f64 = xi.iter().zip(center).map(|(a, b)| a * b).sum();
                let m = amplitude * (2.0 * PI).powf(0.5 * d as f64) * width.powi(d) * (-0.5 * width * width * r2).exp();
                Some(Complex64::from_polar(m, -phase))
            }
            TestFunction::SmoothedIndicator { lo, hi, mollifier } => {
                let mut acc = Complex64::new(1.0, 0.0);
                for (&x, (&a, &b)) in xi.iter().zip(lo.iter().zip(hi)) {
                    let f = if x.abs() < 1e-8 {
                        // (e^{-iξa} - e^{-iξb}) / (iξ) → (b - a) - iξ(b² - a²)/2
                        Complex64::new(b - a, -0.5 * x * (b * b - a * a))
                    } else {
                        (Complex64::from_polar(1.0, -x * a) - Complex64::from_polar(1.0, -x * b)) / Complex64::new(0.0, x)
                    };
                    acc *= f * (-0.5 * mollifier * mollifier * x * x).exp();
                }
                Some(acc)
            }
            TestFunction::GridSampled { .. } => None,
        }
    }

    /// Radius beyond which `|𝓕φ|²` is below `e^{-50}` of its peak.
    fn spectral_radius(&self) -> Option<f64> {
        match self {
            TestFunction::GaussianBump { width, .. } => Some(50f64.sqrt() / width),
            TestFunction::SmoothedIndicator { mollifier, .. } => Some(50f64.sqrt() / mollifier),
            TestFunction::GridSampled { .. } => None,
        }
    }

    /// Same function translated by `h`: `τ_h φ(x) = φ(x + h)`.
    pub fn translated(&self, h: &[f64]) -> Result<Self> {
        if h.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: h.len(),
            });
        }
        Ok(match self {
            TestFunction::GaussianBump {
                center,
                width,
                amplitude,
            } => TestFunction::GaussianBump {
                center: center.iter().zip(h).map(|(c, s)| c - s).collect(),
                width: *width,
                amplitude: *amplitude,
            },
            TestFunction::SmoothedIndicator { lo, hi, mollifier } => TestFunction::SmoothedIndicator {
                lo: lo.iter().zip(h).map(|(c, s)| c - s).collect(),
                hi: hi.iter().zip(h).map(|(c, s)| c - s).collect(),
                mollifier: *mollifier,
            },
            TestFunction::GridSampled { .. } => {
                return Err(param("test_function", "grid-sampled functions cannot be translated off-grid"))
            }
        })
    }
}

/// The spatial kernel `ψ = 𝓕^{-1}(𝓕φ · h)` on a periodic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColoredKernel {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
    /// `max |Im ψ| / max |ψ|` before the imaginary part was dropped.
    pub imag_residue: f64,
    /// `Σ ψ² Δx`
    pub grid_norm_sq: f64,
    /// `(2π)^{-d} ∫ |𝓕φ|² |h|² dξ` when `𝓕φ` is known in closed form.
    pub continuous_norm_sq: Option<f64>,
}

impl ColoredKernel {
    /// Continuous minus grid `‖ψ‖²`: mass lost to the finite box and
    /// frequency grid.
    pub fn neglected_mass(&self) -> Option<f64> {
        self.continuous_norm_sq.map(|c| c - self.grid_norm_sq)
    }

    fn check_noise(&self, noise: &NoiseGrid) -> Result<()> {
        if noise.grid().axes() != self.axes.as_slice() {
            return Err(param("grid", "kernel and noise live on different spatial grids"));
        }
        Ok(())
    }

    /// Per-slice integrals `Σ_x ψ(x) L(slice k, x)`.
    pub fn slice_integrals(&self, noise: &NoiseGrid) -> Result<Vec<f64>> {
        self.check_noise(noise)?;
        Ok((0..noise.grid().steps())
            .map(|k| noise.slice(k).iter().zip(&self.values).map(|(l, p)| l * p).sum())
            .collect())
    }

    /// `X_t(φ)` for `t` on the noise time grid.
    pub fn functional(&self, noise: &NoiseGrid, t: f64) -> Result<f64> {
        self.check_noise(noise)?;
        let k = noise.grid().slices_until(t)?;
        Ok((0..k)
            .map(|j| noise.slice(j).iter().zip(&self.values).map(|(l, p)| l * p).sum::<f64>())
            .sum())
    }

    pub fn path(&self, noise: &NoiseGrid) -> Result<ColoredPath> {
        let inc = self.slice_integrals(noise)?;
        let grid = noise.grid();
        let mut values = Vec::with_capacity(inc.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for x in inc {
            acc += x;
            values.push(acc);
        }
        Ok(ColoredPath {
            times: (0..=grid.steps()).map(|k| grid.time_edge(k)).collect(),
            values,
            provenance: None,
        })
    }

    /// Variance of `X_t(φ)` implied by the grid kernel, `t v Σψ²Δx`.
    pub fn grid_variance(&self, v: f64, t: f64) -> f64 {
        t * v * self.grid_norm_sq
    }
}

/// Builds `ψ = 𝓕^{-1}(𝓕φ · h)` on the plan's grid, transforming the grid
/// samples of `φ`.
pub fn convolve_kernel(phi: &TestFunction, h: &SpectralDensity, plan: &DftPlan) -> Result<ColoredKernel> {
    if !is_tempered(h) {
        return Err(param("density", "spectral density is not tempered"));
    }
    if phi.dim() != plan.dim() || h.dim() != plan.dim() {
        return Err(Error::Dimension {
            expected: plan.dim(),
            actual: if phi.dim() != plan.dim() { phi.dim() } else { h.dim() },
        });
    }
    if !h.is_hermitian_on(plan, 1e-10)? {
        return Err(Error::Contract(
            "spectral density violates h(-ξ) = conj h(ξ); the kernel would not be real".into(),
        ));
    }
    let samples = phi.sample(plan.axes())?;
    let mut spec = plan.forward_real(&samples)?;
    for (s, hv) in spec.iter_mut().zip(h.sample_on(plan)?) {
        *s *= hv;
    }
    let psi = plan.inverse(&spec)?;
    let max_re = psi.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let max_im = psi.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let imag_residue = if max_re > 0.0 { max_im / max_re } else { max_im };
    if imag_residue > IMAG_RESIDUE_TOL {
        return Err(Error::Contract(format!(
            "kernel has imaginary residue {imag_residue:.3e}; check that h is Hermitian"
        )));
    }
    let values: Vec<f64> = psi.iter().map(|z| z.re).collect();
    let dx: f64 = plan.axes().iter().map(Axis::spacing).product();
    let grid_norm_sq = values.iter().map(|p| p * p).sum::<f64>() * dx;
    let continuous_norm_sq = if phi.fourier(&vec![0.0; phi.dim()]).is_some() && (h.is_radial() || phi.dim() <= 3) {
        Some(cross_integral(phi, phi, h, 1.0)?.re)
    } else {
        None
    };
    Ok(ColoredKernel {
        axes: plan.axes().to_vec(),
        values,
        imag_residue,
        grid_norm_sq,
        continuous_norm_sq,
    })
}

/// `X_t(φ)` straight from the noise.
pub fn colored_functional(noise: &NoiseGrid, phi: &TestFunction, h: &SpectralDensity, t: f64) -> Result<f64> {
    let plan = DftPlan::new(noise.grid().axes());
    convolve_kernel(phi, h, &plan)?.functional(noise, t)
}

/// `∫ 𝓕φ conj(𝓕ψ) dμ` with `μ = v (2π)^{-d} |h|² dξ`.
fn cross_integral(phi: &TestFunction, psi: &TestFunction, h: &SpectralDensity, v: f64) -> Result<Complex64> {
    let d = phi.dim();
    if psi.dim() != d || h.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: if psi.dim() != d { psi.dim() } else { h.dim() },
        });
    }
    let zero = vec![0.0; d];
    if phi.fourier(&zero).is_none() || psi.fourier(&zero).is_none() {
        return Err(param(
            "test_function",
            "closed-form transform needed; use ColoredKernel::grid_variance for grid-sampled functions",
        ));
    }
    let mu = TemperedMeasureMu::new(h.clone(), v)?;
    let radius = phi.spectral_radius().unwrap().max(psi.spectral_radius().unwrap());
    // |𝓕φ|² of a Gaussian bump is radial, whatever its center.
    if phi == psi {
        if let TestFunction::GaussianBump { width, amplitude, .. } = phi {
            let c = (amplitude * (2.0 * PI).powf(0.5 * d as f64) * width.powi(d as i32)).powi(2);
            let w2 = width * width;
            let f = move |r: f64| c * (-w2 * r * r).exp();
            let re = mu_integral(&mu, Integrand::Radial(&f), Cutoff::Infinite, None)?.value;
            return Ok(Complex64::new(re, 0.0));
        }
    }
    let re_f = |xi: &[f64]| (phi.fourier(xi).unwrap() * psi.fourier(xi).unwrap().conj()).re;
    let im_f = |xi: &[f64]| (phi.fourier(xi).unwrap() * psi.fourier(xi).unwrap().conj()).im;
    let re = mu_integral(&mu, Integrand::Full(&re_f), Cutoff::Radius(radius), None)?.value;
    let im = mu_integral(&mu, Integrand::Full(&im_f), Cutoff::Radius(radius), None)?.value;
    Ok(Complex64::new(re, im))
}

/// `E X_t(φ) X_s(ψ) = (t∧s) ∫ 𝓕φ conj(𝓕ψ) dμ`.
pub fn covariance_colored(phi: &TestFunction, psi: &TestFunction, h: &SpectralDensity, v: f64, t: f64, s: f64) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(param("t", "times must be non-negative"));
    }
    let m = t.min(s);
    if m == 0.0 {
        return Ok(0.0);
    }
    let z = cross_integral(phi, psi, h, v)?;
    if z.im.abs() > IMAG_RESIDUE_TOL * z.re.abs().max(1e-300) && z.im.abs() > 1e-12 {
        return Err(Error::Numerical {
            context: "covariance_colored",
            detail: format!("imaginary residue {:.3e} for real test functions", z.im),
        });
    }
    Ok(m * z.re)
}

/// `E X_t(φ) X_s(φ) = (t∧s) ∫ |𝓕φ|² dμ`.
pub fn variance_colored(phi: &TestFunction, h: &SpectralDensity, v: f64, t: f64, s: f64) -> Result<f64> {
    covariance_colored(phi, phi, h, v, t, s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColoredProvenance {
    pub test_function: TestFunction,
    pub density: SpectralDensity,
    pub seed: Option<StreamSeed>,
}

/// `t_k ↦ X_{t_k}(φ)` on the noise time grid, starting at `X_0 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColoredPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub provenance: Option<ColoredProvenance>,
}

impl ColoredPath {
    pub fn with_provenance(mut self, p: ColoredProvenance) -> Self {
        self.provenance = Some(p);
        self
    }

    /// CSV with a `# header: {json}` provenance line and columns `t,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_string(&self.provenance).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "# header: {header}")?;
        writeln!(w, "t,value")?;
        for (t, x) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{x}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}
