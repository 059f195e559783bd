//! Ready-made Monte Carlo check suites for the white noise, the colored
//! noise and the SPDE solver.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::colored::{convolve_kernel, variance_colored, TestFunction};
use crate::dft::DftPlan;
use crate::error::Result;
use crate::grid::{Axis, GridSpec};
use crate::levy::{JumpMeasure, LayerScheme, SmallJumpPolicy};
use crate::rng::StreamSeed;
use crate::solver::{variance_it, GreenFunction, OperatorKind, SolverOptions, SolverPlan};
use crate::spectral::{riesz_is_tempered, SpectralDensity, TemperedMeasureMu};
use crate::verify::{
    covariance_report, ecf_compare, ecf_two_sample, mean_report, replicate_vec, variance_regression, variance_report,
    EcfReport, McReport, Z_MAX,
};
use crate::white_noise::{box_indicator, char_functional, simulate_field};

/// One line of a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Check {
    Mc(McReport),
    Ecf(EcfReport),
    Exact { name: String, pass: bool, detail: String },
}

impl Check {
    pub fn pass(&self) -> bool {
        match self {
            Check::Mc(r) => r.pass,
            Check::Ecf(r) => r.pass,
            Check::Exact { pass, .. } => *pass,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Check::Mc(r) => &r.name,
            Check::Ecf(r) => &r.name,
            Check::Exact { name, .. } => name,
        }
    }

    fn exact(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check::Exact {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Check::Mc(r) => r.fmt(f),
            Check::Ecf(r) => r.fmt(f),
            Check::Exact { name, pass, detail } => {
                write!(f, "{:<44} {} {}", name, if *pass { "PASS" } else { "FAIL" }, detail)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub replicas: usize,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(Check::pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {} (seed {}, {} replicas)", self.suite, self.seed, self.replicas)?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        write!(f, "  => {}", if self.pass() { "PASS" } else { "FAIL" })
    }
}

/// Independent seeds for the parts of a suite.
fn part_seed(seed: u64, part: u64) -> u64 {
    seed ^ part.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// `u ∈ {−3, −2.5, …, 3} ∪ {π}`
pub fn default_u_grid() -> Vec<f64> {
    let mut u: Vec<f64> = (-6..=6).map(|k| 0.5 * k as f64).collect();
    u.push(PI);
    u
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhiteSuiteConfig {
    pub measure: JumpMeasure,
    pub scheme: LayerScheme,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for WhiteSuiteConfig {
    fn default() -> Self {
        Self {
            measure: JumpMeasure::two_point(2.0, 1.0).expect("valid measure"),
            scheme: LayerScheme::dyadic(8, SmallJumpPolicy::Drop),
            replicas: 10_000,
            seed: 1,
        }
    }
}

/// Second moment per unit volume actually carried by the simulated noise.
pub fn simulated_second_moment(nu: &JumpMeasure, scheme: &LayerScheme) -> Result<(f64, f64)> {
    let dropped = nu.small_jump_variance(scheme.terminal())?;
    Ok(match scheme.small_jumps() {
        SmallJumpPolicy::Drop => (nu.second_moment() - dropped, dropped),
        SmallJumpPolicy::GaussianSubstitute => (nu.second_moment(), 0.0),
    })
}

/// `L(1_B)` and `L(1_A)` on `B = [0,1]²`, `A = [0,1] × [1/2, 3/2]` (time ×
/// space): mean, variance, covariance and characteristic function.
pub fn white_suite(cfg: &WhiteSuiteConfig) -> Result<SuiteReport> {
    let grid = GridSpec::new(vec![Axis::new(0.0, 2.0, 4)], 1.0, 2)?;
    let ind_b = box_indicator(&grid, 0.0, 1.0, &[0.0], &[1.0])?;
    let ind_a = box_indicator(&grid, 0.0, 1.0, &[0.5], &[1.5])?;
    let (v_eff, dropped) = simulated_second_moment(&cfg.measure, &cfg.scheme)?;
    let rows = replicate_vec(cfg.replicas, |i| {
        let noise = simulate_field(&cfg.measure, &cfg.scheme, &grid, StreamSeed::new(cfg.seed, i))?;
        let vals = noise.values();
        let lb = ind_b.iter().zip(vals).map(|(a, b)| a * b).sum();
        let la = ind_a.iter().zip(vals).map(|(a, b)| a * b).sum();
        Ok(vec![lb, la])
    })?;
    let lb: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let la: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let mut checks = vec![
        Check::Mc(mean_report("white: mean L(B)", &lb, 0.0)?),
        Check::Mc(variance_report("white: var L(B) = v|B|", &lb, v_eff)?),
        Check::Mc(covariance_report("white: cov L(A),L(B) = v|A∩B|", &la, &lb, 0.5 * v_eff)?),
    ];
    if dropped == 0.0 {
        let nu = cfg.measure;
        checks.push(Check::Ecf(ecf_compare(
            "white: ecf L(B) = exp(|B|Ψ(u))",
            &lb,
            |u| char_functional(&nu, &grid, &ind_b, u),
            &default_u_grid(),
        )?));
    } else {
        checks.push(Check::exact(
            "white: truncation bias reported",
            true,
            format!("dropped second moment σ²(ε_J)|B| = {dropped:.6e}; characteristic function check skipped"),
        ));
    }
    Ok(SuiteReport {
        suite: "white".into(),
        seed: cfg.seed,
        replicas: cfg.replicas,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallJumpSuiteConfig {
    /// Stability index of the power-law measure.
    pub beta: f64,
    pub coarse_levels: usize,
    pub fine_levels: usize,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for SmallJumpSuiteConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            coarse_levels: 4,
            fine_levels: 8,
            replicas: 10_000,
            seed: 3,
        }
    }
}

/// `L(1_B)`, `|B| = 1`, under a power-law measure with two truncation levels.
/// The same seed drives both levels, so the finer field adds independent
/// layers to the coarser one and the variance gap is measured directly.
pub fn small_jump_suite(cfg: &SmallJumpSuiteConfig) -> Result<SuiteReport> {
    let nu = JumpMeasure::power_law(cfg.beta)?;
    let grid = GridSpec::new(vec![Axis::new(0.0, 1.0, 1)], 1.0, 1)?;
    let coarse = LayerScheme::dyadic(cfg.coarse_levels, SmallJumpPolicy::Drop);
    let fine = LayerScheme::dyadic(cfg.fine_levels, SmallJumpPolicy::Drop);
    let subst = LayerScheme::dyadic(cfg.fine_levels, SmallJumpPolicy::GaussianSubstitute);
    let v = nu.second_moment();
    let bias_c = nu.small_jump_variance(coarse.terminal())?;
    let bias_f = nu.small_jump_variance(fine.terminal())?;
    let gs = part_seed(cfg.seed, 1);
    let rows = replicate_vec(cfg.replicas, |i| {
        let seed = StreamSeed::new(cfg.seed, i);
        let a = simulate_field(&nu, &coarse, &grid, seed)?.values()[0];
        let b = simulate_field(&nu, &fine, &grid, seed)?.values()[0];
        let c = simulate_field(&nu, &subst, &grid, StreamSeed::new(gs, i))?.values()[0];
        Ok(vec![a, b, c])
    })?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let (a, b, c) = (col(0), col(1), col(2));
    let ra = variance_report(&format!("small jumps: var, ε=2^-{}", cfg.coarse_levels), &a, v - bias_c)?;
    let rb = variance_report(&format!("small jumps: var, ε=2^-{}", cfg.fine_levels), &b, v - bias_f)?;
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let gap: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| n / (n - 1.0) * ((y - mb).powi(2) - (x - ma).powi(2)))
        .collect();
    let rgap = mean_report("small jumps: variance gain coarse→fine", &gap, bias_c - bias_f)?;
    let monotone = bias_c > bias_f && rb.estimate > ra.estimate && (v - rb.estimate).abs() < (v - ra.estimate).abs();
    let checks = vec![
        Check::Mc(ra.clone()),
        Check::Mc(rb.clone()),
        Check::Mc(rgap),
        Check::exact(
            "small jumps: monotone approach to v|B|",
            monotone,
            format!(
                "reported bias {bias_c:.4e} → {bias_f:.4e}; estimates {:.4} → {:.4} (v|B| = {v})",
                ra.estimate, rb.estimate
            ),
        ),
        Check::Mc(variance_report(
            &format!("small jumps: gaussian substitute, ε=2^-{}", cfg.fine_levels),
            &c,
            v,
        )?),
    ];
    Ok(SuiteReport {
        suite: "small_jumps".into(),
        seed: cfg.seed,
        replicas: cfg.replicas,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColoredSuiteConfig {
    pub measure: JumpMeasure,
    pub scheme: LayerScheme,
    pub density: SpectralDensity,
    pub test_function: TestFunction,
    /// Spatial box `[-half_width, half_width]`.
    pub half_width: f64,
    pub cells: usize,
    pub horizon: f64,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
}

impl Default for ColoredSuiteConfig {
    fn default() -> Self {
        Self {
            measure: JumpMeasure::two_point(2.0, 1.0).expect("valid measure"),
            scheme: LayerScheme::dyadic(4, SmallJumpPolicy::Drop),
            density: SpectralDensity::riesz(0.5, 1).expect("valid density"),
            test_function: TestFunction::gaussian_bump(vec![0.0], 1.0, 1.0).expect("valid bump"),
            half_width: 20.0,
            cells: 1024,
            horizon: 1.0,
            steps: 20,
            replicas: 10_000,
            seed: 5,
        }
    }
}

/// Variance growth, uncorrelated increments and stationarity of `X_t(φ)`.
pub fn colored_suite(cfg: &ColoredSuiteConfig) -> Result<SuiteReport> {
    let dim = cfg.density.dim();
    let grid = GridSpec::cube(dim, -cfg.half_width, cfg.half_width, cfg.cells, cfg.horizon, cfg.steps)?;
    let plan = DftPlan::new(grid.axes());
    let kernel = convolve_kernel(&cfg.test_function, &cfg.density, &plan)?;
    let (v, dropped) = simulated_second_moment(&cfg.measure, &cfg.scheme)?;
    let unit = variance_colored(&cfg.test_function, &cfg.density, v, 1.0, 1.0)?;
    let mut checks = Vec::new();
    let neglected = kernel.neglected_mass().unwrap_or(0.0);
    let rel = neglected / kernel.continuous_norm_sq.unwrap_or(kernel.grid_norm_sq);
    checks.push(Check::exact(
        "colored: kernel mass captured by grid",
        rel.abs() <= 1e-3,
        format!(
            "‖ψ‖² grid {:.6}, continuous {:?}, neglected fraction {rel:.2e}, dropped small-jump moment {dropped:.2e}",
            kernel.grid_norm_sq, kernel.continuous_norm_sq
        ),
    ));
    let paths = replicate_vec(cfg.replicas, |i| {
        let noise = simulate_field(&cfg.measure, &cfg.scheme, &grid, StreamSeed::new(cfg.seed, i))?;
        Ok(kernel.path(&noise)?.values)
    })?;
    let at = |t: f64| -> Result<Vec<f64>> {
        let k = grid.slices_until(t)?;
        Ok(paths.iter().map(|p| p[k]).collect())
    };
    let t = cfg.horizon;
    for frac in [0.25, 0.5, 1.0] {
        let x = at(frac * t)?;
        checks.push(Check::Mc(variance_report(
            &format!("colored: var X_t, t={}", frac * t),
            &x,
            frac * t * unit,
        )?));
    }
    let times: Vec<f64> = (1..=5).map(|k| k as f64 * t / 5.0).collect();
    let sub: Vec<Vec<f64>> = {
        let idx: Vec<usize> = times.iter().map(|&s| grid.slices_until(s)).collect::<Result<_>>()?;
        paths.iter().map(|p| idx.iter().map(|&k| p[k]).collect()).collect()
    };
    let reg = variance_regression("colored: var regression", &times, &sub, unit)?;
    checks.push(Check::Mc(reg.slope));
    checks.push(Check::Mc(reg.intercept));
    let xs = at(0.5 * t)?;
    let xt = at(t)?;
    let inc: Vec<f64> = xt.iter().zip(&xs).map(|(a, b)| a - b).collect();
    checks.push(Check::Mc(covariance_report(
        "colored: cov X_s, X_t - X_s",
        &xs,
        &inc,
        0.0,
    )?));
    checks.push(Check::Mc(mean_report("colored: mean X_t", &xt, 0.0)?));
    // Equal-length windows [0, t/2] and [t/2, t] share one law.
    let scale = (0.5 * t * unit).sqrt().max(f64::MIN_POSITIVE);
    let u: Vec<f64> = (1..=8).map(|k| k as f64 * 0.3 / scale).collect();
    checks.push(Check::Ecf(ecf_two_sample("colored: ecf of equal windows", &xs, &inc, &u)?));
    Ok(SuiteReport {
        suite: "colored".into(),
        seed: cfg.seed,
        replicas: cfg.replicas,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSuiteConfig {
    pub measure: JumpMeasure,
    pub scheme: LayerScheme,
    pub density: SpectralDensity,
    pub operators: Vec<OperatorKind>,
    pub half_width: f64,
    pub cells: usize,
    pub horizon: f64,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    pub options: SolverOptions,
}

impl Default for SolverSuiteConfig {
    fn default() -> Self {
        Self {
            measure: JumpMeasure::two_point(1.0, 1.0).expect("valid measure"),
            scheme: LayerScheme::dyadic(4, SmallJumpPolicy::Drop),
            density: SpectralDensity::flat(1).expect("valid density"),
            operators: vec![OperatorKind::Heat, OperatorKind::Wave],
            half_width: 4.0,
            cells: 128,
            horizon: 1.0,
            steps: 50,
            replicas: 10_000,
            seed: 7,
            options: SolverOptions::default(),
        }
    }
}

/// `I_t` in closed form for a flat density in one dimension.
pub fn flat_closed_form(kind: OperatorKind, v: f64, t: f64) -> f64 {
    match kind {
        OperatorKind::Heat => v * (t / PI).sqrt(),
        OperatorKind::Wave => v * t * t / 4.0,
    }
}

fn label(kind: OperatorKind) -> &'static str {
    match kind {
        OperatorKind::Heat => "heat",
        OperatorKind::Wave => "wave",
    }
}

/// Second moments of `u(t, x)` against `I_t` for each operator.
pub fn solver_suite(cfg: &SolverSuiteConfig) -> Result<SuiteReport> {
    let dim = cfg.density.dim();
    let grid = GridSpec::cube(dim, -cfg.half_width, cfg.half_width, cfg.cells, cfg.horizon, cfg.steps)?;
    let (v, _) = simulated_second_moment(&cfg.measure, &cfg.scheme)?;
    let mut checks = Vec::new();
    for (oi, &kind) in cfg.operators.iter().enumerate() {
        let name = label(kind);
        let green = GreenFunction::new(kind, dim)?;
        let plan = SolverPlan::new(green, &cfg.density, v, &grid, cfg.options)?;
        let it = plan.variance_it();
        if matches!(cfg.density, SpectralDensity::Flat { dim: 1 }) {
            let exact = flat_closed_form(kind, v, cfg.horizon);
            let rel = (it.value - exact) / exact;
            checks.push(Check::exact(
                format!("{name}: quadrature I_T vs closed form"),
                rel.abs() <= 1e-3,
                format!("I_T = {:.6}, closed form {exact:.6}, relative error {rel:.2e}", it.value),
            ));
        }
        let bias = plan.relative_bias();
        checks.push(Check::exact(
            format!("{name}: discretization bias"),
            bias.abs() <= cfg.options.bias_tol,
            format!("grid second moment {:.6} vs I_T {:.6}: {:+.2}%", plan.grid_targets()[cfg.steps], it.value, 100.0 * bias),
        ));
        let mid = plan.mid_cell();
        let side = plan.grid().spatial_linear(&vec![cfg.cells / 4; dim]);
        let ks = [cfg.steps / 4, cfg.steps / 2, cfg.steps];
        let mut points: Vec<(usize, usize)> = ks.iter().map(|&k| (k, mid)).collect();
        points.push((cfg.steps, side));
        let probe = plan.probe(&points)?;
        let seed = part_seed(cfg.seed, oi as u64);
        let rows = replicate_vec(cfg.replicas, |i| {
            let noise = plan.simulate_noise(&cfg.measure, &cfg.scheme, StreamSeed::new(seed, i))?;
            Ok(probe.eval(&noise))
        })?;
        let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
        for (j, &k) in ks.iter().enumerate() {
            let t = grid.time_edge(k);
            let it_k = variance_it(&green, plan.measure(), t)?.value;
            let target = plan.grid_targets()[k];
            let mut r = variance_report(&format!("{name}: var u(t, x_mid), t={t}"), &col(j), target)?;
            r.name = format!("{} [I_t {:.5}, bias {:+.2}%]", r.name, it_k, 100.0 * (target - it_k) / it_k);
            checks.push(Check::Mc(r));
        }
        let top = col(ks.len() - 1);
        checks.push(Check::Mc(mean_report(&format!("{name}: mean u(T, x_mid)"), &top, 0.0)?));
        let a = variance_report("a", &top, 0.0)?;
        let b = variance_report("b", &col(ks.len()), 0.0)?;
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        let z = (a.estimate - b.estimate) / se;
        checks.push(Check::exact(
            format!("{name}: homogeneous second moment"),
            z.abs() <= Z_MAX,
            format!("var at x_mid {:.5}, at x_quarter {:.5}, z = {z:+.2}", a.estimate, b.estimate),
        ));
    }
    Ok(SuiteReport {
        suite: "solver".into(),
        seed: cfg.seed,
        replicas: cfg.replicas,
        checks,
    })
}

/// One row of the existence phase table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExistenceRow {
    pub d: usize,
    pub alpha: f64,
    pub tempered: bool,
    pub solvable: bool,
}

/// Temperedness and solvability of the Riesz density `|ξ|^{-α/2}` on a
/// sweep. Solvability requires temperedness.
pub fn existence_sweep(points: &[(usize, f64)]) -> Vec<ExistenceRow> {
    points
        .iter()
        .map(|&(d, alpha)| {
            let tempered = riesz_is_tempered(alpha, d);
            let solvable = tempered
                && SpectralDensity::riesz(alpha, d)
                    .and_then(|h| TemperedMeasureMu::new(h, 1.0))
                    .map(|mu| crate::spectral::existence_condition(&mu).holds())
                    .unwrap_or(false);
            ExistenceRow {
                d,
                alpha,
                tempered,
                solvable,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_suite_passes_at_small_scale() {
        let r = white_suite(&WhiteSuiteConfig {
            replicas: 2000,
            ..Default::default()
        })
        .unwrap();
        assert!(r.pass(), "{r}");
        assert_eq!(r.checks.len(), 4);
    }

    #[test]
    fn existence_rows() {
        let rows = existence_sweep(&[(1, 0.5), (3, 0.5), (2, 2.5)]);
        assert_eq!((rows[0].tempered, rows[0].solvable), (true, true));
        assert_eq!((rows[1].tempered, rows[1].solvable), (true, false));
        assert!(!rows[2].tempered && !rows[2].solvable);
    }
}
