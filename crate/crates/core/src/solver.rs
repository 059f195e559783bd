//! Linear SPDEs `L u = Ẋ` with zero initial data for the heat operator
//! `∂_t − ½Δ` and the wave operator `∂²_t − Δ`, driven by colored Lévy noise.
//!
//! Paths are built by spectral time stepping on a padded periodic box. Each
//! white-noise slice `(s_j, s_{j+1}]` contributes through a slice kernel
//!
//! ```text
//! K_l(ξ) = sgn 𝓕G(t_mid, ξ) · ( Δt⁻¹ ∫_{(l-1)Δt}^{lΔt} 𝓕G(r, ξ)² dr )^{1/2}
//! ```
//!
//! so the second moment of the discrete solution equals the frequency-grid
//! Riemann sum of `I_t` exactly, for every `Δt`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dft::DftPlan;
use crate::error::{param, Error, Result};
use crate::grid::{Axis, GridSpec};
use crate::levy::{JumpMeasure, LayerScheme};
use crate::quadrature::{gauss_legendre, integrate_to_infinity, Tolerance};
use crate::rng::StreamSeed;
use crate::spectral::{
    existence_condition, mu_integral_with_tol, radial_integral, sphere_area, Condition, Cutoff, Integrand,
    SpectralDensity, TemperedMeasureMu,
};
use crate::white_noise::{simulate_field, NoiseGrid};

/// Relative accuracy targeted by [`variance_it`].
pub const IT_REL_TOL: f64 = 1e-4;

/// Default bound on `|discrete target − I_t| / I_t` accepted by a solver plan.
pub const DEFAULT_BIAS_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `∂_t u − ½Δu`
    Heat,
    /// `∂²_t u − Δu`
    Wave,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreenFunction {
    pub kind: OperatorKind,
    pub dim: usize,
}

impl GreenFunction {
    pub fn new(kind: OperatorKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(param("dim", "dimension must be at least 1"));
        }
        Ok(Self { kind, dim })
    }

    pub fn heat(dim: usize) -> Result<Self> {
        Self::new(OperatorKind::Heat, dim)
    }

    pub fn wave(dim: usize) -> Result<Self> {
        Self::new(OperatorKind::Wave, dim)
    }

    /// `𝓕G(t, ·)(ξ)` at `|ξ| = r`.
    pub fn fourier(&self, t: f64, r: f64) -> f64 {
        green_fourier(self.kind, t, r)
    }
}

/// `e^{-t|ξ|²/2}` for heat, `sin(t|ξ|)/|ξ|` for wave.
pub fn green_fourier(kind: OperatorKind, t: f64, r: f64) -> f64 {
    match kind {
        OperatorKind::Heat => (-0.5 * t * r * r).exp(),
        OperatorKind::Wave => {
            let x = t * r;
            if x.abs() < 1e-4 {
                t * (1.0 - x * x / 6.0)
            } else {
                (x).sin() / r
            }
        }
    }
}

/// `∫_a^b 𝓕G(r, ξ)² dr` at `|ξ| = k`.
fn green_energy_in_time(kind: OperatorKind, a: f64, b: f64, k: f64) -> f64 {
    let k2 = k * k;
    match kind {
        OperatorKind::Heat => {
            if k2 * (b - a) < 1e-12 {
                (b - a) * (-a * k2).exp()
            } else {
                (-a * k2).exp() * -(-(b - a) * k2).exp_m1() / k2
            }
        }
        OperatorKind::Wave => {
            if k * b < 1e-2 {
                (b.powi(3) - a.powi(3)) / 3.0 - k2 * (b.powi(5) - a.powi(5)) / 15.0
                    + 2.0 * k2 * k2 * (b.powi(7) - a.powi(7)) / 315.0
            } else {
                let f = |r: f64| 0.5 * r - (2.0 * r * k).sin() / (4.0 * k);
                (f(b) - f(a)) / k2
            }
        }
    }
}

/// Random-field solutions exist iff `∫ (1+|ξ|²)^{-1} μ(dξ) < ∞`, for both
/// operators.
pub fn solvability(g: &GreenFunction, mu: &TemperedMeasureMu) -> Result<Condition> {
    if g.dim != mu.dim() {
        return Err(Error::Dimension {
            expected: g.dim,
            actual: mu.dim(),
        });
    }
    Ok(existence_condition(mu))
}

/// `∫ |𝓕G(s, ξ)|² μ(dξ)`.
pub fn green_energy(g: &GreenFunction, mu: &TemperedMeasureMu, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(param("s", format!("time must be positive, got {s}")));
    }
    let h = mu.density();
    let c = mu.prefactor();
    if c == 0.0 {
        return Ok(0.0);
    }
    let d = g.dim;
    let rel = 1e-9;
    if let SpectralDensity::Tabulated(_) = h {
        let f = |xi: &[f64]| g.fourier(s, xi.iter().map(|x| x * x).sum::<f64>().sqrt()).powi(2);
        return Ok(mu_integral_with_tol(mu, Integrand::Full(&f), Cutoff::Infinite, None, rel)?.value);
    }
    let area = sphere_area(d);
    match g.kind {
        OperatorKind::Heat => {
            // ρ = √s |ξ|
            let q = s.sqrt();
            let shell = |rho: f64| h.abs2_radial(rho / q) * (-rho * rho).exp();
            let (v, _) = radial_integral(&shell, d, 9.0, rel)?;
            Ok(c * area * q.powi(-(d as i32)) * v)
        }
        OperatorKind::Wave => {
            // ρ = s |ξ|; beyond P the oscillation sin²ρ is replaced by its mean.
            let p = 64.0 * PI;
            let shell = |rho: f64| {
                let sinc = if rho < 1e-4 { 1.0 - rho * rho / 6.0 } else { rho.sin() / rho };
                h.abs2_radial(rho / s) * sinc * sinc
            };
            let (head, _) = radial_integral(&shell, d, p, rel)?;
            let tail = integrate_to_infinity(
                |rho: f64| 0.5 * rho.powi(d as i32 - 3) * h.abs2_radial(rho / s),
                p,
                Tolerance::relative(rel).with_abs(1e-300),
            )?
            .value;
            Ok(c * area * s.powi(2 - d as i32) * (head + tail))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceIt {
    /// `I_t`, infinite when no solution exists.
    pub value: f64,
    /// Relative change at the last panel doubling.
    pub rel_change: f64,
    pub panels: usize,
    pub converged: bool,
    pub condition: Condition,
}

/// `I_t = ∫₀ᵗ ∫ |𝓕G(s, ξ)|² μ(dξ) ds` to [`IT_REL_TOL`].
pub fn variance_it(g: &GreenFunction, mu: &TemperedMeasureMu, t: f64) -> Result<VarianceIt> {
    variance_it_with(g, mu, t, 4, IT_REL_TOL)
}

/// Composite Gauss–Legendre in `s = t w^m`, doubling panels from
/// `initial_panels` until the relative change falls below `rel_tol / 10`.
/// The power `m` absorbs the `s^γ` behaviour of the inner integral at zero.
pub fn variance_it_with(
    g: &GreenFunction,
    mu: &TemperedMeasureMu,
    t: f64,
    initial_panels: usize,
    rel_tol: f64,
) -> Result<VarianceIt> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(param("t", format!("time must be finite and non-negative, got {t}")));
    }
    let condition = solvability(g, mu)?;
    if t == 0.0 {
        return Ok(VarianceIt {
            value: 0.0,
            rel_change: 0.0,
            panels: 0,
            converged: true,
            condition,
        });
    }
    if condition == Condition::Fails {
        return Ok(VarianceIt {
            value: f64::INFINITY,
            rel_change: f64::INFINITY,
            panels: 0,
            converged: false,
            condition,
        });
    }
    let d = g.dim as f64;
    let gamma = match (mu.density(), g.kind) {
        (SpectralDensity::Tabulated(_), _) => 0.0,
        (h, OperatorKind::Heat) => -(d - h.origin_exponent()) / 2.0,
        (h, OperatorKind::Wave) => 2.0 + h.origin_exponent() - d,
    };
    let m = (2.0 / (1.0 + gamma)).ceil().max(1.0);
    let (nodes, weights) = gauss_legendre(10);
    let integrand = |w: f64| -> Result<f64> {
        let s = t * w.powf(m);
        Ok(t * m * w.powf(m - 1.0) * green_energy(g, mu, s)?)
    };
    let eval = |panels: usize| -> Result<f64> {
        let h = 1.0 / panels as f64;
        let mut sum = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(&weights) {
                sum += 0.5 * h * w * integrand(mid + 0.5 * h * x)?;
            }
        }
        Ok(sum)
    };
    let mut panels = initial_panels.max(1);
    let mut prev = eval(panels)?;
    let mut history = vec![prev];
    let mut rel_change = f64::INFINITY;
    while panels < 4096 {
        panels *= 2;
        let next = eval(panels)?;
        rel_change = ((next - prev) / next).abs();
        history.push(next);
        prev = next;
        if rel_change <= rel_tol / 10.0 || next == 0.0 {
            return Ok(VarianceIt {
                value: next,
                rel_change: if next == 0.0 { 0.0 } else { rel_change },
                panels,
                converged: true,
                condition,
            });
        }
    }
    // Panel sums that keep growing by a steady factor signal divergence.
    let growing = history.windows(2).rev().take(4).all(|w| w[1] > w[0] * (1.0 + rel_tol));
    Ok(VarianceIt {
        value: if growing { f64::INFINITY } else { prev },
        rel_change,
        panels,
        converged: false,
        condition,
    })
}

/// Options controlling path simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Computational box relative to the reported one, at least 2.
    pub padding: f64,
    /// Largest accepted `|discrete target − I_t| / I_t` at the horizon.
    pub bias_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            padding: 2.0,
            bias_tol: DEFAULT_BIAS_TOL,
        }
    }
}

/// Everything about a solve that does not depend on the noise realization.
#[derive(Clone, Debug)]
pub struct SolverPlan {
    green: GreenFunction,
    mu: TemperedMeasureMu,
    report: GridSpec,
    padded: GridSpec,
    /// Offset of the reported region inside the padded box, per axis.
    offset: Vec<usize>,
    plan: DftPlan,
    /// `h` on the frequency grid.
    h: Vec<Complex64>,
    /// `K_l(ξ) h(ξ)` for lags `l = 1..=steps`, lag-major.
    kernels: Vec<Complex64>,
    /// Grid second moment `E u(t_k, x)²` for `k = 0..=steps`.
    targets: Vec<f64>,
    it: VarianceIt,
}

impl SolverPlan {
    /// Precomputes slice kernels and checks solvability and resolution.
    pub fn new(green: GreenFunction, density: &SpectralDensity, v: f64, report: &GridSpec, opts: SolverOptions) -> Result<Self> {
        if report.dim() != green.dim || density.dim() != green.dim {
            return Err(Error::Dimension {
                expected: green.dim,
                actual: if report.dim() != green.dim { report.dim() } else { density.dim() },
            });
        }
        if !(opts.padding >= 2.0) {
            return Err(param("padding", format!("padding factor must be at least 2, got {}", opts.padding)));
        }
        let mu = TemperedMeasureMu::new(density.clone(), v)?;
        match solvability(&green, &mu)? {
            Condition::Fails => {
                return Err(param(
                    "density",
                    "no random-field solution: ∫(1+|ξ|²)⁻¹ μ(dξ) diverges for this density and dimension",
                ))
            }
            Condition::Indeterminate | Condition::Holds => {}
        }
        let mut axes = Vec::with_capacity(report.dim());
        let mut offset = Vec::with_capacity(report.dim());
        for ax in report.axes() {
            let dx = ax.spacing();
            let off = (((opts.padding - 1.0) * ax.cells as f64) / 2.0).ceil() as usize;
            axes.push(Axis::new(ax.min - off as f64 * dx, ax.max + off as f64 * dx, ax.cells + 2 * off));
            offset.push(off);
        }
        let padded = GridSpec::new(axes, report.horizon(), report.steps())?;
        let plan = DftPlan::new(padded.axes());
        let h = density.sample_on(&plan)?;
        let radii: Vec<f64> = plan
            .frequencies()
            .iter()
            .map(|xi| xi.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let dt = padded.dt();
        let steps = padded.steps();
        let n = plan.len();
        let mut kernels = Vec::with_capacity(steps * n);
        let mut lag_energy = vec![0.0; steps + 1];
        let prefactor = mu.prefactor() * plan.frequency_cell_volume();
        for (lag, slot) in lag_energy.iter_mut().enumerate().skip(1) {
            let (a, b) = ((lag - 1) as f64 * dt, lag as f64 * dt);
            let mid = 0.5 * (a + b);
            let mut e = 0.0;
            for (r, hv) in radii.iter().zip(&h) {
                let energy = green_energy_in_time(green.kind, a, b, *r);
                let k = (energy / dt).max(0.0).sqrt() * green.fourier(mid, *r).signum();
                kernels.push(hv * k);
                e += hv.norm_sqr() * energy;
            }
            *slot = prefactor * e;
        }
        let mut targets = vec![0.0; steps + 1];
        for k in 1..=steps {
            targets[k] = targets[k - 1] + lag_energy[k];
        }
        let it = variance_it(&green, &mu, report.horizon())?;
        let me = Self {
            green,
            mu,
            report: report.clone(),
            padded,
            offset,
            plan,
            h,
            kernels,
            targets,
            it,
        };
        if it.value.is_finite() && it.value > 0.0 {
            let bias = me.relative_bias();
            if bias.abs() > opts.bias_tol {
                let spacing: Vec<f64> = me.report.axes().iter().map(Axis::spacing).collect();
                let nyq: Vec<f64> = (0..me.plan.dim()).map(|i| me.plan.nyquist(i)).collect();
                return Err(Error::Config(format!(
                    "grid under-resolves the kernel: spacing {spacing:?} resolves |ξ| ≤ {nyq:?}, box length {:?} \
                     gives Δξ = {:?}; discretization bias {:.2}% exceeds {:.2}%",
                    me.padded.axes().iter().map(Axis::length).collect::<Vec<_>>(),
                    (0..me.plan.dim()).map(|i| me.plan.dxi(i)).collect::<Vec<_>>(),
                    100.0 * bias,
                    100.0 * opts.bias_tol
                )));
            }
        }
        Ok(me)
    }

    pub fn green(&self) -> GreenFunction {
        self.green
    }

    pub fn measure(&self) -> &TemperedMeasureMu {
        &self.mu
    }

    /// Reported grid.
    pub fn grid(&self) -> &GridSpec {
        &self.report
    }

    /// Computational grid the noise lives on.
    pub fn padded_grid(&self) -> &GridSpec {
        &self.padded
    }

    /// `I_T` at the horizon by quadrature.
    pub fn variance_it(&self) -> VarianceIt {
        self.it
    }

    /// `E u(t_k, x)²` of the discrete scheme, `k = 0..=steps`.
    pub fn grid_targets(&self) -> &[f64] {
        &self.targets
    }

    /// `(discrete − I_T) / I_T` at the horizon.
    pub fn relative_bias(&self) -> f64 {
        (self.targets[self.report.steps()] - self.it.value) / self.it.value
    }

    /// Padded linear index of reported spatial cell `m`.
    pub fn padded_index(&self, m: usize) -> usize {
        let idx: Vec<usize> = self
            .report
            .spatial_index(m)
            .iter()
            .zip(&self.offset)
            .map(|(i, o)| i + o)
            .collect();
        self.padded.spatial_linear(&idx)
    }

    /// Reported cell at the center of the box.
    pub fn mid_cell(&self) -> usize {
        let idx: Vec<usize> = self.report.axes().iter().map(|a| a.cells / 2).collect();
        self.report.spatial_linear(&idx)
    }

    pub fn simulate_noise(&self, nu: &JumpMeasure, scheme: &LayerScheme, seed: impl Into<StreamSeed>) -> Result<NoiseGrid> {
        simulate_field(nu, scheme, &self.padded, seed)
    }

    fn check_noise(&self, noise: &NoiseGrid) -> Result<()> {
        if noise.grid() != &self.padded {
            return Err(param("noise", "noise must live on the plan's padded grid"));
        }
        Ok(())
    }

    /// `u(t_k, ·)` for every `k`, restricted to the reported region.
    pub fn solve(&self, noise: &NoiseGrid) -> Result<SolutionField> {
        self.check_noise(noise)?;
        let steps = self.padded.steps();
        let n = self.plan.len();
        let cell = self.padded.spatial_cell_volume();
        let spectra: Vec<Vec<Complex64>> = (0..steps)
            .map(|j| {
                let mut s = self.plan.forward_real(noise.slice(j))?;
                for z in s.iter_mut() {
                    *z /= cell;
                }
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let m_report = self.report.spatial_cells();
        let map: Vec<usize> = (0..m_report).map(|m| self.padded_index(m)).collect();
        let mut values = vec![0.0; (steps + 1) * m_report];
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for k in 1..=steps {
            acc.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for (j, spec) in spectra.iter().enumerate().take(k) {
                let lag = k - j;
                let ker = &self.kernels[(lag - 1) * n..lag * n];
                for ((a, kv), w) in acc.iter_mut().zip(ker).zip(spec) {
                    *a += kv * w;
                }
            }
            let u = self.plan.inverse(&acc)?;
            for (m, &p) in map.iter().enumerate() {
                values[k * m_report + m] = u[p].re;
            }
        }
        let provenance = noise.provenance().map(|p| SolutionProvenance {
            green: self.green,
            density: self.mu.density().clone(),
            measure: p.measure,
            scheme: p.scheme.clone(),
            seed: p.seed,
        });
        Ok(SolutionField {
            axes: self.report.axes().to_vec(),
            times: (0..=steps).map(|k| self.report.time_edge(k)).collect(),
            values,
            provenance,
        })
    }

    /// Linear functionals `u(t_k, x_m)` for the requested `(k, m)` pairs
    /// (reported cell indices), evaluated without building the whole field.
    pub fn probe(&self, points: &[(usize, usize)]) -> Result<Probe> {
        let steps = self.padded.steps();
        let n = self.plan.len();
        for &(k, m) in points {
            if k > steps || m >= self.report.spatial_cells() {
                return Err(param("points", format!("probe ({k}, {m}) is outside the grid")));
            }
        }
        // The inverse transform samples at x₀ + jΔx; the phase e^{-iξ·x₀}
        // moves that to the displacements jΔx.
        let x0: Vec<f64> = self.padded.axes().iter().map(|a| a.center(0)).collect();
        let shift: Vec<Complex64> = self
            .plan
            .frequencies()
            .iter()
            .map(|xi| Complex64::from_polar(1.0, -xi.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>()))
            .collect();
        // Spatial kernels A_l(z) with u(t_k, x) = Σ_j Σ_y A_{k-j}(x − y) W_j(y).
        let spatial: Vec<Vec<f64>> = (1..=steps)
            .map(|lag| {
                let ker = &self.kernels[(lag - 1) * n..lag * n];
                let scaled: Vec<Complex64> = ker.iter().zip(&shift).map(|(k, s)| k * s).collect();
                Ok(self.plan.inverse(&scaled)?.iter().map(|z| z.re).collect())
            })
            .collect::<Result<_>>()?;
        let shape = self.padded.spatial_shape();
        let mut weights = Vec::with_capacity(points.len());
        for &(k, m) in points {
            let target = self.padded.spatial_index(self.padded_index(m));
            let mut w = vec![0.0; k * n];
            for j in 0..k {
                let a = &spatial[k - j - 1];
                for y in 0..n {
                    let src = self.padded.spatial_index(y);
                    let rel: Vec<usize> = target
                        .iter()
                        .zip(&src)
                        .zip(&shape)
                        .map(|((t, s), n)| (t + n - s) % n)
                        .collect();
                    w[j * n + y] = a[self.padded.spatial_linear(&rel)];
                }
            }
            weights.push(w);
        }
        Ok(Probe {
            points: points.to_vec(),
            weights,
        })
    }

    /// Frequency-grid `|h|²` (for diagnostics).
    pub fn density_on_grid(&self) -> Vec<f64> {
        self.h.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Precomputed weights of `u(t_k, x_m)` against the padded noise cells.
#[derive(Clone, Debug)]
pub struct Probe {
    points: Vec<(usize, usize)>,
    weights: Vec<Vec<f64>>,
}

impl Probe {
    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn eval(&self, noise: &NoiseGrid) -> Vec<f64> {
        let vals = noise.values();
        self.weights
            .iter()
            .map(|w| w.iter().zip(vals).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionProvenance {
    pub green: GreenFunction,
    pub density: SpectralDensity,
    pub measure: JumpMeasure,
    pub scheme: LayerScheme,
    pub seed: StreamSeed,
}

/// `u(t_k, x_m)` on the reported grid, time levels `k = 0..=steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionField {
    pub axes: Vec<Axis>,
    pub times: Vec<f64>,
    /// Time-major, spatial row-major.
    pub values: Vec<f64>,
    pub provenance: Option<SolutionProvenance>,
}

impl SolutionField {
    pub fn spatial_cells(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn at(&self, k: usize, m: usize) -> f64 {
        self.values[k * self.spatial_cells() + m]
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.spatial_cells();
        &self.values[k * n..(k + 1) * n]
    }

    /// CSV with a `# header: {json}` provenance line and columns
    /// `t,x1..xd,u`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_string(&self.provenance).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "# header: {header}")?;
        let cols: Vec<String> = (1..=self.axes.len()).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{},u", cols.join(","))?;
        let grid = GridSpec::new(self.axes.clone(), 1.0, 1)?;
        let centers: Vec<Vec<f64>> = (0..grid.spatial_cells()).map(|m| grid.spatial_center(m)).collect();
        for (k, t) in self.times.iter().enumerate() {
            for (m, x) in centers.iter().enumerate() {
                let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{t},{},{}", xs.join(","), self.at(k, m))?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// One path of the solution on `grid`.
pub fn solve_path(
    green: GreenFunction,
    nu: &JumpMeasure,
    scheme: &LayerScheme,
    density: &SpectralDensity,
    grid: &GridSpec,
    seed: impl Into<StreamSeed>,
) -> Result<SolutionField> {
    let plan = SolverPlan::new(green, density, nu.second_moment(), grid, SolverOptions::default())?;
    let noise = plan.simulate_noise(nu, scheme, seed)?;
    plan.solve(&noise)
}
