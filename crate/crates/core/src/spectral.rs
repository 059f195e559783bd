//! Spectral densities `h`, the tempered measure `μ(dξ) = v (2π)^{-d} |h(ξ)|² dξ`,
//! quadrature against `μ`, and the temperedness and existence predicates.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::dft::DftPlan;
use crate::error::{param, Error, Result};
use crate::quadrature::{gauss_legendre, integrate_to_infinity, integrate_with_breaks, Tolerance};

/// Relative tolerance of [`mu_integral`] unless overridden.
pub const MU_QUAD_TOL: f64 = 1e-6;

/// Tail bounds below this fraction of the running total stop the automatic
/// radius search.
pub const AUTO_TAIL_FRACTION: f64 = 1e-8;

/// `(1 + |ξ|²)^{-k}` exponent used for the numerical temperedness check.
pub fn tempered_check_exponent(dim: usize) -> u32 {
    dim.div_ceil(2) as u32 + 2
}

/// Surface area of the unit sphere in ℝ^d.
pub fn sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * PI.powf(0.5 * d) / gamma(0.5 * d)
}

/// Volume of the unit ball in ℝ^d.
pub fn ball_volume(dim: usize) -> f64 {
    let d = dim as f64;
    PI.powf(0.5 * d) / gamma(0.5 * d + 1.0)
}

/// `|h|²` for `h = |ξ|^{-α/2}` is tempered iff `α < d`.
pub fn riesz_is_tempered(alpha: f64, dim: usize) -> bool {
    alpha < dim as f64
}

/// `∫ (1+|ξ|²)^{-1} |ξ|^{-α} dξ < ∞` iff `d − 2 < α < d`.
pub fn riesz_existence(alpha: f64, dim: usize) -> bool {
    let d = dim as f64;
    d - 2.0 < alpha && alpha < d
}

/// A density sampled on a regular tensor grid of frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    /// Per axis: first frequency, spacing, number of points.
    pub axes: Vec<(f64, f64, usize)>,
    /// Row-major, last axis fastest.
    pub values: Vec<Complex64>,
    /// Declared decay `|h(ξ)|² ~ |ξ|^{-p}` beyond the table, if known.
    pub tail_exponent: Option<f64>,
}

impl TabulatedDensity {
    pub fn new(axes: Vec<(f64, f64, usize)>, values: Vec<Complex64>, tail_exponent: Option<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(param("table", "need at least one frequency axis"));
        }
        if axes.iter().any(|&(_, h, n)| !(h > 0.0) || n < 2) {
            return Err(param("table", "every axis needs at least two points and a positive spacing"));
        }
        let n: usize = axes.iter().map(|a| a.2).product();
        if values.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: values.len(),
            });
        }
        Ok(Self {
            axes,
            values,
            tail_exponent,
        })
    }

    /// Reads CSV rows `ξ_1, …, ξ_d, Re h, Im h`. Lines starting with `#` and
    /// a non-numeric header line are skipped. Rows may come in any order but
    /// must fill a regular tensor grid.
    pub fn read_csv<R: Read>(r: R, tail_exponent: Option<f64>) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if rows.is_empty() => continue,
                Err(e) => return Err(Error::Data(format!("line {}: {e}", lineno + 1))),
            }
        }
        let width = rows.first().map_or(0, Vec::len);
        if width < 3 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Data("expected rows `xi_1,..,xi_d,re,im` of equal width".into()));
        }
        let dim = width - 2;
        let mut axes = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut c: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            if c.len() < 2 {
                return Err(Error::Data(format!("axis {i} has fewer than two distinct points")));
            }
            let h = (c[c.len() - 1] - c[0]) / (c.len() - 1) as f64;
            if c.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
                return Err(Error::Data(format!("axis {i} is not equally spaced")));
            }
            axes.push((c[0], h, c.len()));
        }
        let n: usize = axes.iter().map(|a| a.2).product();
        if rows.len() != n {
            return Err(Error::Data(format!("{} rows do not fill a {n}-point tensor grid", rows.len())));
        }
        let mut values = vec![Complex64::new(f64::NAN, f64::NAN); n];
        for r in &rows {
            let mut lin = 0;
            for (i, &(x0, h, cnt)) in axes.iter().enumerate() {
                let k = ((r[i] - x0) / h).round() as usize;
                lin = lin * cnt + k.min(cnt - 1);
            }
            values[lin] = Complex64::new(r[dim], r[dim + 1]);
        }
        if values.iter().any(|v| v.re.is_nan()) {
            return Err(Error::Data("duplicate grid points in table".into()));
        }
        Self::new(axes, values, tail_exponent)
    }

    pub fn load(path: &Path, tail_exponent: Option<f64>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, tail_exponent)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn point(&self, lin: usize) -> Vec<f64> {
        let mut idx = vec![0usize; self.dim()];
        let mut rem = lin;
        for (slot, a) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = rem % a.2;
            rem /= a.2;
        }
        idx.iter().zip(&self.axes).map(|(&k, a)| a.0 + k as f64 * a.1).collect()
    }

    /// Multilinear interpolation inside the table, zero outside.
    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for i in 0..d {
            let (x0, h, n) = self.axes[i];
            let s = (xi[i] - x0) / h;
            if !(s >= 0.0 && s <= (n - 1) as f64) {
                return Complex64::new(0.0, 0.0);
            }
            let k = (s.floor() as usize).min(n - 2);
            base[i] = k;
            frac[i] = s - k as f64;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut lin = 0;
            for i in 0..d {
                let up = (corner >> i) & 1;
                w *= if up == 1 { frac[i] } else { 1.0 - frac[i] };
                lin = lin * self.axes[i].2 + base[i] + up;
            }
            if w != 0.0 {
                acc += self.values[lin] * w;
            }
        }
        acc
    }

    /// Trapezoid-rule sum `Σ w F(ξ) |h(ξ)|² Π Δξ` over table points with
    /// `|ξ| ≤ radius`.
    fn tensor_sum<F: Fn(&[f64]) -> f64>(&self, f: F, radius: f64, outside: bool) -> f64 {
        let cell: f64 = self.axes.iter().map(|a| a.1).product();
        let mut total = 0.0;
        for (lin, v) in self.values.iter().enumerate() {
            let xi = self.point(lin);
            let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (r <= radius) == outside {
                continue;
            }
            let mut w = 1.0;
            let mut rem = lin;
            for a in self.axes.iter().rev() {
                let k = rem % a.2;
                rem /= a.2;
                if k == 0 || k == a.2 - 1 {
                    w *= 0.5;
                }
            }
            total += w * f(&xi) * v.norm_sqr();
        }
        total * cell
    }
}

/// The spectral density `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// `h(ξ) = |ξ|^{-α/2}` with `α < d`.
    Riesz { alpha: f64, dim: usize },
    /// `h ≡ 1`
    Flat { dim: usize },
    Tabulated(TabulatedDensity),
}

impl SpectralDensity {
    pub fn riesz(alpha: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(param("dim", "dimension must be at least 1"));
        }
        if !alpha.is_finite() || !riesz_is_tempered(alpha, dim) {
            return Err(param(
                "alpha",
                format!("Riesz density |ξ|^(-α/2) is tempered only for α < d; got α = {alpha}, d = {dim}"),
            ));
        }
        Ok(SpectralDensity::Riesz { alpha, dim })
    }

    pub fn flat(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(param("dim", "dimension must be at least 1"));
        }
        Ok(SpectralDensity::Flat { dim })
    }

    pub fn tabulated(table: TabulatedDensity) -> Self {
        SpectralDensity::Tabulated(table)
    }

    pub fn dim(&self) -> usize {
        match self {
            SpectralDensity::Riesz { dim, .. } | SpectralDensity::Flat { dim } => *dim,
            SpectralDensity::Tabulated(t) => t.dim(),
        }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, SpectralDensity::Tabulated(_))
    }

    /// Exponent `a` of the behaviour `|h(ξ)|² ~ |ξ|^{-a}` at the origin.
    pub fn origin_exponent(&self) -> f64 {
        match self {
            SpectralDensity::Riesz { alpha, .. } => *alpha,
            _ => 0.0,
        }
    }

    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        match self {
            SpectralDensity::Tabulated(t) => t.eval(xi),
            _ => Complex64::new(self.abs2_radial(norm(xi)).sqrt(), 0.0),
        }
    }

    pub fn abs2(&self, xi: &[f64]) -> f64 {
        match self {
            SpectralDensity::Tabulated(t) => t.eval(xi).norm_sqr(),
            _ => self.abs2_radial(norm(xi)),
        }
    }

    /// `|h|²` at radius `r` for the radial variants.
    pub fn abs2_radial(&self, r: f64) -> f64 {
        match self {
            SpectralDensity::Riesz { alpha, .. } => {
                if *alpha == 0.0 {
                    1.0
                } else {
                    r.powf(-alpha)
                }
            }
            SpectralDensity::Flat { .. } => 1.0,
            SpectralDensity::Tabulated(_) => panic!("tabulated densities are not radial"),
        }
    }

    /// `h` sampled at the frequencies of `plan`. The origin bin of a Riesz
    /// density carries a weight chosen so that bin sums of `|h|² f` track
    /// `∫ |h|² f` for smooth `f`: in d = 1 the generalized Euler–Maclaurin
    /// weight `|h₀|² = -2ζ(α) Δξ^{-α}`, otherwise the average of `|h|²` over
    /// the ball with the bin's volume.
    pub fn sample_on(&self, plan: &DftPlan) -> Result<Vec<Complex64>> {
        if plan.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: plan.dim(),
            });
        }
        let freqs = plan.frequencies();
        let d = self.dim() as f64;
        Ok(freqs
            .iter()
            .map(|xi| {
                let r = norm(xi);
                match self {
                    SpectralDensity::Riesz { alpha, dim: 1 } if r == 0.0 && *alpha != 0.0 => {
                        Complex64::new((-2.0 * zeta(*alpha) * plan.dxi(0).powf(-alpha)).sqrt(), 0.0)
                    }
                    SpectralDensity::Riesz { alpha, .. } if r == 0.0 && *alpha > 0.0 => {
                        let rho = (plan.frequency_cell_volume() / ball_volume(self.dim())).powf(1.0 / d);
                        let mean = d / (d - alpha) * rho.powf(-alpha);
                        Complex64::new(mean.sqrt(), 0.0)
                    }
                    SpectralDensity::Riesz { alpha, .. } if r == 0.0 && *alpha < 0.0 => Complex64::new(0.0, 0.0),
                    _ => self.eval(xi),
                }
            })
            .collect())
    }

    /// `h(-ξ) = conj h(ξ)` at the plan's frequencies, to `tol` relative.
    pub fn is_hermitian_on(&self, plan: &DftPlan, tol: f64) -> Result<bool> {
        if self.is_radial() {
            return Ok(true);
        }
        let values = self.sample_on(plan)?;
        let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let freqs = plan.frequencies();
        for (lin, v) in values.iter().enumerate() {
            let neg: Vec<f64> = freqs[lin].iter().map(|x| -x).collect();
            if (self.eval(&neg) - v.conj()).norm() > tol * scale {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Riemann zeta function for real `s ≠ 1` by Euler–Maclaurin summation.
pub fn zeta(s: f64) -> f64 {
    const N: usize = 12;
    // B_{2j} / (2j)!
    const B: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
    ];
    let n = N as f64;
    let mut sum: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    sum += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // rising product s (s+1) … (s+2j-2)
    let mut rising = s;
    for (j, b) in B.iter().enumerate() {
        let p = 2 * j + 1;
        sum += b * rising * n.powf(-s - p as f64);
        rising *= (s + p as f64) * (s + p as f64 + 1.0);
    }
    sum
}

fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `∫ (1+|ξ|²)^{-k} |h(ξ)|² dξ < ∞` for some `k`.
pub fn is_tempered(h: &SpectralDensity) -> bool {
    match h {
        SpectralDensity::Riesz { alpha, dim } => riesz_is_tempered(*alpha, *dim),
        SpectralDensity::Flat { .. } => true,
        SpectralDensity::Tabulated(t) => {
            let k = tempered_check_exponent(t.dim()) as i32;
            let total = t.tensor_sum(|xi| (1.0 + xi.iter().map(|x| x * x).sum::<f64>()).powi(-k), f64::INFINITY, false);
            total.is_finite() && t.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
        }
    }
}

/// `μ(dξ) = v (2π)^{-d} |h(ξ)|² dξ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperedMeasureMu {
    density: SpectralDensity,
    v: f64,
}

impl TemperedMeasureMu {
    pub fn new(density: SpectralDensity, v: f64) -> Result<Self> {
        if !(v.is_finite() && v >= 0.0) {
            return Err(param("v", format!("second moment must be finite and non-negative, got {v}")));
        }
        Ok(Self { density, v })
    }

    pub fn density(&self) -> &SpectralDensity {
        &self.density
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    /// `v (2π)^{-d}`
    pub fn prefactor(&self) -> f64 {
        self.v / (2.0 * PI).powi(self.dim() as i32)
    }

    /// Density of μ with respect to Lebesgue measure.
    pub fn density_at(&self, xi: &[f64]) -> f64 {
        self.prefactor() * self.density.abs2(xi)
    }
}

/// A non-negative function of ξ to integrate against μ.
#[derive(Clone, Copy)]
pub enum Integrand<'a> {
    /// Depends on `|ξ|` only.
    Radial(&'a (dyn Fn(f64) -> f64 + Sync)),
    Full(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

/// Bound `|F(ξ)| ≤ E(|ξ|)` valid beyond the cutoff radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    /// `c |ξ|^{-p}`
    Power { c: f64, p: f64 },
    /// `c exp(-a |ξ|²)`
    Gaussian { c: f64, a: f64 },
}

impl Envelope {
    fn at(&self, r: f64) -> f64 {
        match *self {
            Envelope::Power { c, p } => c * r.powf(-p),
            Envelope::Gaussian { c, a } => c * (-a * r * r).exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cutoff {
    /// Integrate over `|ξ| ≤ R`.
    Radius(f64),
    /// Integrate over ℝ^d through a compactifying map; the integrand must
    /// decay without oscillating.
    Infinite,
    /// Grow `R` until the envelope tail bound drops below
    /// [`AUTO_TAIL_FRACTION`] of the running total. Needs an envelope.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuIntegral {
    pub value: f64,
    pub abs_error: f64,
    /// Radius actually used (infinite for [`Cutoff::Infinite`]).
    pub radius: f64,
    /// Bound on `∫_{|ξ|>R} |F| dμ` when an envelope was supplied.
    pub tail_bound: Option<f64>,
}

/// `∫ F dμ` with the default relative tolerance.
pub fn mu_integral(
    mu: &TemperedMeasureMu,
    f: Integrand<'_>,
    cutoff: Cutoff,
    envelope: Option<Envelope>,
) -> Result<MuIntegral> {
    mu_integral_with_tol(mu, f, cutoff, envelope, MU_QUAD_TOL)
}

pub fn mu_integral_with_tol(
    mu: &TemperedMeasureMu,
    f: Integrand<'_>,
    cutoff: Cutoff,
    envelope: Option<Envelope>,
    rel_tol: f64,
) -> Result<MuIntegral> {
    if let Integrand::Full(_) = f {
        if mu.dim() > 3 && mu.density.is_radial() {
            return Err(param("integrand", "non-radial integrands are supported for d ≤ 3 only"));
        }
    }
    match cutoff {
        Cutoff::Radius(r) => {
            if !(r > 0.0) {
                return Err(param("cutoff", format!("radius must be positive, got {r}")));
            }
            let (value, abs_error) = ball_integral(mu, f, r, rel_tol)?;
            let tail_bound = envelope.map(|e| tail_bound(mu, e, r)).transpose()?;
            Ok(MuIntegral {
                value,
                abs_error,
                radius: r,
                tail_bound,
            })
        }
        Cutoff::Infinite => {
            let (value, abs_error) = ball_integral(mu, f, f64::INFINITY, rel_tol)?;
            Ok(MuIntegral {
                value,
                abs_error,
                radius: f64::INFINITY,
                tail_bound: Some(0.0),
            })
        }
        Cutoff::Auto => {
            let env = envelope.ok_or_else(|| param("cutoff", "automatic cutoff needs a decay envelope"))?;
            let mut r = 8.0;
            for _ in 0..64 {
                let bound = tail_bound(mu, env, r)?;
                let (value, abs_error) = ball_integral(mu, f, r, rel_tol)?;
                if bound <= AUTO_TAIL_FRACTION * value.abs() || (value == 0.0 && bound == 0.0) {
                    return Ok(MuIntegral {
                        value,
                        abs_error,
                        radius: r,
                        tail_bound: Some(bound),
                    });
                }
                r *= 2.0;
            }
            Err(Error::Numerical {
                context: "mu_integral",
                detail: "tail bound did not fall below the target while growing the radius".into(),
            })
        }
    }
}

/// `∫_{|ξ|≤R} F dμ` and its error estimate.
fn ball_integral(mu: &TemperedMeasureMu, f: Integrand<'_>, radius: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let c = mu.prefactor();
    if c == 0.0 {
        return Ok((0.0, 0.0));
    }
    match mu.density() {
        SpectralDensity::Tabulated(t) => {
            let v = match f {
                Integrand::Radial(g) => t.tensor_sum(|xi| g(norm(xi)), radius, false),
                Integrand::Full(g) => t.tensor_sum(g, radius, false),
            };
            Ok((c * v, 0.0))
        }
        h => {
            let d = mu.dim();
            let angular = AngularRule::new(d);
            let shell = |r: f64| -> f64 {
                let a = match f {
                    Integrand::Radial(g) => sphere_area(d) * g(r),
                    Integrand::Full(g) => angular.integrate(r, g),
                };
                a * h.abs2_radial(r)
            };
            let (value, err) = radial_integral(&shell, d, radius, rel_tol)?;
            Ok((c * value, c * err))
        }
    }
}

/// `∫₀^R r^{d-1} A(r) dr` where `A` may carry an integrable power
/// singularity at the origin (from `|h|²`). A substitution `r = s^m` makes the
/// integrand bounded at zero.
pub(crate) fn radial_integral(shell: &dyn Fn(f64) -> f64, dim: usize, radius: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let tol = Tolerance::relative(rel_tol).with_abs(1e-300);
    let d = dim as f64;
    let g = |r: f64| if r == 0.0 { 0.0 } else { r.powf(d - 1.0) * shell(r) };
    // Probe the local exponent of the integrand at the origin.
    let (r1, r2) = (1e-8, 1e-6);
    let (g1, g2) = (g(r1).abs(), g(r2).abs());
    let gamma = if g1 > 0.0 && g2 > 0.0 {
        (g2.ln() - g1.ln()) / (r2.ln() - r1.ln())
    } else {
        0.0
    };
    let m = if gamma < -1e-6 {
        if gamma <= -1.0 {
            return Err(Error::Numerical {
                context: "mu_integral",
                detail: format!("non-integrable singularity at the origin (local exponent {gamma:.3})"),
            });
        }
        (1.0 / (gamma + 1.0)).ceil().max(2.0)
    } else {
        1.0
    };
    let sub = |s: f64| {
        if m == 1.0 {
            g(s)
        } else {
            m * s.powf(m - 1.0) * g(s.powf(m))
        }
    };
    let inner_end = radius.min(1.0);
    let mut breaks = vec![0.0];
    // Geometric breaks towards the origin help the adaptive driver.
    for k in (1..=8).rev() {
        breaks.push((inner_end * 0.25f64.powi(k)).powf(1.0 / m));
    }
    breaks.push(inner_end.powf(1.0 / m));
    let head = integrate_with_breaks(sub, &breaks, tol)?;
    let mut value = head.value;
    let mut err = head.abs_error;
    if radius > 1.0 {
        if radius.is_finite() {
            let mut pts = vec![1.0];
            let mut x = 1.0;
            while x * 2.0 < radius {
                x *= 2.0;
                pts.push(x);
            }
            pts.push(radius);
            // Refine breaks so no panel spans more than a unit of radius;
            // oscillatory integrands (e.g. sin²(t|ξ|)) need this.
            let mut fine = vec![pts[0]];
            for w in pts.windows(2) {
                let pieces = ((w[1] - w[0]).ceil() as usize).clamp(1, 1 << 16);
                for i in 1..=pieces {
                    fine.push(w[0] + (w[1] - w[0]) * i as f64 / pieces as f64);
                }
            }
            let tail = integrate_with_breaks(g, &fine, tol.with_max_intervals(1 << 18))?;
            value += tail.value;
            err += tail.abs_error;
        } else {
            let tail = integrate_to_infinity(g, 1.0, tol)?;
            value += tail.value;
            err += tail.abs_error;
        }
    }
    Ok((value, err))
}

/// `∫_{|ξ|>R} E(|ξ|) μ(dξ)`.
fn tail_bound(mu: &TemperedMeasureMu, env: Envelope, radius: f64) -> Result<f64> {
    let c = mu.prefactor();
    match mu.density() {
        SpectralDensity::Tabulated(t) => Ok(c * t.tensor_sum(|xi| env.at(norm(xi)), radius, true)),
        h => {
            let d = mu.dim() as f64;
            let area = sphere_area(mu.dim());
            let g = |r: f64| area * r.powf(d - 1.0) * h.abs2_radial(r) * env.at(r);
            let est = integrate_to_infinity(g, radius, Tolerance::relative(1e-8).with_abs(1e-300))?;
            Ok(c * est.value)
        }
    }
}

/// Product rules over the unit sphere for non-radial integrands.
struct AngularRule {
    dim: usize,
    /// Unit vectors and weights; the weights sum to the sphere area.
    points: Vec<(Vec<f64>, f64)>,
}

impl AngularRule {
    fn new(dim: usize) -> Self {
        let points = match dim {
            1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
            2 => {
                let n = 128;
                (0..n)
                    .map(|k| {
                        let th = 2.0 * PI * k as f64 / n as f64;
                        (vec![th.cos(), th.sin()], 2.0 * PI / n as f64)
                    })
                    .collect()
            }
            3 => {
                let (ct, wt) = gauss_legendre(48);
                let n = 96;
                let mut pts = Vec::with_capacity(ct.len() * n);
                for (c, w) in ct.iter().zip(&wt) {
                    let s = (1.0 - c * c).sqrt();
                    for k in 0..n {
                        let ph = 2.0 * PI * k as f64 / n as f64;
                        pts.push((vec![s * ph.cos(), s * ph.sin(), *c], w * 2.0 * PI / n as f64));
                    }
                }
                pts
            }
            _ => Vec::new(),
        };
        Self { dim, points }
    }

    fn integrate(&self, r: f64, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> f64 {
        let mut xi = vec![0.0; self.dim];
        self.points
            .iter()
            .map(|(u, w)| {
                for (x, ui) in xi.iter_mut().zip(u) {
                    *x = r * ui;
                }
                w * f(&xi)
            })
            .sum()
    }
}

/// Outcome of a condition that may not be decidable from the data given.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Holds,
    Fails,
    Indeterminate,
}

impl Condition {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Condition::Holds
        } else {
            Condition::Fails
        }
    }

    pub fn holds(self) -> bool {
        self == Condition::Holds
    }
}

/// `∫ (1+|ξ|²)^{-1} μ(dξ) < ∞`.
pub fn existence_condition(mu: &TemperedMeasureMu) -> Condition {
    match mu.density() {
        SpectralDensity::Riesz { alpha, dim } => Condition::from_bool(riesz_existence(*alpha, *dim)),
        SpectralDensity::Flat { dim } => Condition::from_bool(*dim < 2),
        SpectralDensity::Tabulated(t) => {
            let inner = t.tensor_sum(|xi| 1.0 / (1.0 + xi.iter().map(|x| x * x).sum::<f64>()), f64::INFINITY, false);
            if !inner.is_finite() {
                return Condition::Fails;
            }
            match t.tail_exponent {
                Some(p) => Condition::from_bool(p > t.dim() as f64 - 2.0),
                None => Condition::Indeterminate,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::grid::Axis;

    #[test]
    fn riesz_construction_and_temperedness() {
        assert!(is_tempered(&SpectralDensity::riesz(0.5, 1).unwrap()));
        assert!(SpectralDensity::riesz(3.0, 2).is_err());
        assert!(SpectralDensity::riesz(2.0, 2).is_err());
        for d in 1..=4 {
            assert!(is_tempered(&SpectralDensity::flat(d).unwrap()));
        }
    }

    #[test]
    fn existence_examples() {
        let m = |alpha: f64, d: usize| TemperedMeasureMu::new(SpectralDensity::riesz(alpha, d).unwrap(), 1.0).unwrap();
        assert_eq!(existence_condition(&m(0.5, 1)), Condition::Holds);
        assert_eq!(existence_condition(&m(0.5, 3)), Condition::Fails);
        let flat = |d| TemperedMeasureMu::new(SpectralDensity::flat(d).unwrap(), 1.0).unwrap();
        assert_eq!(existence_condition(&flat(1)), Condition::Holds);
        assert_eq!(existence_condition(&flat(2)), Condition::Fails);
        // Oracle for Flat d=1: ∫ (1+ξ²)^{-1} dξ = π by quadrature.
        let q = 2.0
            * integrate_to_infinity(|x| 1.0 / (1.0 + x * x), 0.0, Tolerance::relative(1e-12))
                .unwrap()
                .value;
        assert!((q - PI).abs() < 1e-10);
    }

    #[test]
    fn mu_integral_examples() {
        let flat = TemperedMeasureMu::new(SpectralDensity::flat(1).unwrap(), 1.0).unwrap();
        let zero = |_: f64| 0.0;
        assert_eq!(mu_integral(&flat, Integrand::Radial(&zero), Cutoff::Infinite, None).unwrap().value, 0.0);

        let gauss = |r: f64| (-r * r).exp();
        let got = mu_integral(&flat, Integrand::Radial(&gauss), Cutoff::Infinite, None).unwrap();
        let expect = PI.sqrt() / (2.0 * PI);
        assert!((got.value - expect).abs() < 1e-6 * expect, "{got:?}");

        let riesz = TemperedMeasureMu::new(SpectralDensity::riesz(0.5, 1).unwrap(), 1.0).unwrap();
        let got = mu_integral(&riesz, Integrand::Radial(&gauss), Cutoff::Infinite, None).unwrap();
        let expect = gamma(0.25) / (2.0 * PI);
        // Brute-force oracle on the raw singular integrand, 2∫₀^∞ e^{-ξ²} ξ^{-1/2} dξ,
        // split at 1 with the half-line map beyond.
        let brute = 2.0
            * (integrate(|x: f64| if x == 0.0 { 0.0 } else { (-x * x).exp() * x.powf(-0.5) }, 0.0, 1.0, Tolerance::relative(1e-11))
                .unwrap()
                .value
                + integrate_to_infinity(|x: f64| (-x * x).exp() * x.powf(-0.5), 1.0, Tolerance::relative(1e-11))
                    .unwrap()
                    .value);
        assert!((brute - gamma(0.25)).abs() < 1e-7);
        assert!((got.value - expect).abs() < 1e-6 * expect, "{} vs {expect}", got.value);
        assert!((expect - 0.577_03).abs() < 1e-5);
    }

    #[test]
    fn auto_cutoff_and_envelope() {
        let mu = TemperedMeasureMu::new(SpectralDensity::riesz(0.3, 2).unwrap(), 2.0).unwrap();
        let f = |r: f64| 1.0 / (1.0 + r * r).powi(3);
        let auto = mu_integral(&mu, Integrand::Radial(&f), Cutoff::Auto, Some(Envelope::Power { c: 1.0, p: 6.0 })).unwrap();
        let inf = mu_integral(&mu, Integrand::Radial(&f), Cutoff::Infinite, None).unwrap();
        assert!(auto.tail_bound.unwrap() <= AUTO_TAIL_FRACTION * auto.value);
        assert!((auto.value - inf.value).abs() < 1e-6 * inf.value);
        assert!(mu_integral(&mu, Integrand::Radial(&f), Cutoff::Auto, None).is_err());
    }

    #[test]
    fn full_integrand_matches_radial_in_two_and_three_dimensions() {
        for d in [2usize, 3] {
            let mu = TemperedMeasureMu::new(SpectralDensity::riesz(0.7, d).unwrap(), 1.0).unwrap();
            let radial = |r: f64| (-r * r).exp();
            let full = |xi: &[f64]| (-xi.iter().map(|x| x * x).sum::<f64>()).exp();
            let a = mu_integral(&mu, Integrand::Radial(&radial), Cutoff::Radius(8.0), None).unwrap();
            let b = mu_integral(&mu, Integrand::Full(&full), Cutoff::Radius(8.0), None).unwrap();
            assert!((a.value - b.value).abs() < 1e-8 * a.value, "d={d}");
        }
    }

    #[test]
    fn anisotropic_integrand_in_two_dimensions() {
        // F = exp(-ξ₁² - 4ξ₂²) against Lebesgue measure (Flat, v = (2π)²):
        // ∫ = π / 2.
        let mu = TemperedMeasureMu::new(SpectralDensity::flat(2).unwrap(), (2.0 * PI).powi(2)).unwrap();
        let f = |xi: &[f64]| (-xi[0] * xi[0] - 4.0 * xi[1] * xi[1]).exp();
        let got = mu_integral(&mu, Integrand::Full(&f), Cutoff::Radius(10.0), None).unwrap();
        assert!((got.value - PI / 2.0).abs() < 1e-7, "{}", got.value);
    }

    #[test]
    fn tabulated_density_from_csv() {
        let mut csv = String::from("xi,re,im\n");
        for k in -40..=40 {
            let x = k as f64 * 0.25;
            csv.push_str(&format!("{x},{},0\n", (-0.5 * x * x).exp()));
        }
        let t = TabulatedDensity::read_csv(csv.as_bytes(), Some(10.0)).unwrap();
        assert_eq!(t.dim(), 1);
        let h = SpectralDensity::tabulated(t);
        assert!(is_tempered(&h));
        let mu = TemperedMeasureMu::new(h.clone(), 2.0 * PI).unwrap();
        assert_eq!(existence_condition(&mu), Condition::Holds);
        // ∫ e^{-ξ²} dξ = √π against the trapezoid sum of the table.
        let one = |_: f64| 1.0;
        let got = mu_integral(&mu, Integrand::Radial(&one), Cutoff::Infinite, None).unwrap();
        assert!((got.value - PI.sqrt()).abs() < 1e-6);
        let plan = DftPlan::new(&[Axis::new(-10.0, 10.0, 64)]);
        assert!(h.is_hermitian_on(&plan, 1e-12).unwrap());

        let undeclared = TabulatedDensity::read_csv(csv.as_bytes(), None).unwrap();
        let mu = TemperedMeasureMu::new(SpectralDensity::tabulated(undeclared), 1.0).unwrap();
        assert_eq!(existence_condition(&mu), Condition::Indeterminate);
    }

    #[test]
    fn non_hermitian_table_is_detected() {
        let mut csv = String::new();
        for k in -8..=8 {
            let x = k as f64 * 0.5;
            csv.push_str(&format!("{x},1,{x}\n"));
        }
        let h = SpectralDensity::tabulated(TabulatedDensity::read_csv(csv.as_bytes(), None).unwrap());
        let plan = DftPlan::new(&[Axis::new(-4.0, 4.0, 16)]);
        // h(-ξ) = 1 - iξ = conj h(ξ): Hermitian.
        assert!(h.is_hermitian_on(&plan, 1e-12).unwrap());
        let mut csv = String::new();
        for k in -8..=8 {
            let x = k as f64 * 0.5;
            csv.push_str(&format!("{x},{},0\n", 1.0 + x));
        }
        let h = SpectralDensity::tabulated(TabulatedDensity::read_csv(csv.as_bytes(), None).unwrap());
        assert!(!h.is_hermitian_on(&plan, 1e-12).unwrap());
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(TabulatedDensity::read_csv("0,1,0\n1,1,0\n3,1,0\n".as_bytes(), None).is_err());
        assert!(TabulatedDensity::read_csv("0,1\n".as_bytes(), None).is_err());
        assert!(TabulatedDensity::read_csv("0,0,1,0\n1,0,1,0\n0,1,1,0\n".as_bytes(), None).is_err());
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-13);
        assert!((zeta(0.0) + 0.5).abs() < 1e-13);
        assert!((zeta(-1.0) + 1.0 / 12.0).abs() < 1e-13);
        assert!((zeta(0.5) + 1.460_354_508_809_586_8).abs() < 1e-12);
    }

    #[test]
    fn origin_bin_keeps_grid_sums_consistent() {
        // Σ_k |h_k|² e^{-ξ_k²} Δξ against ∫ |ξ|^{-α} e^{-ξ²} dξ = Γ((1-α)/2)
        for alpha in [-0.5, 0.5, 0.9] {
            let plan = DftPlan::new(&[Axis::new(-200.0, 200.0, 2048)]);
            let h = SpectralDensity::riesz(alpha, 1).unwrap();
            let vals = h.sample_on(&plan).unwrap();
            let sum: f64 = plan
                .axis_frequencies(0)
                .iter()
                .zip(&vals)
                .map(|(x, v)| v.norm_sqr() * (-x * x).exp())
                .sum::<f64>()
                * plan.dxi(0);
            let exact = gamma(0.5 * (1.0 - alpha));
            assert!((sum - exact).abs() < 1e-5 * exact, "α={alpha}: {sum} vs {exact}");
        }
        let plan = DftPlan::new(&[Axis::new(-10.0, 10.0, 16), Axis::new(-10.0, 10.0, 16)]);
        let vals = SpectralDensity::riesz(1.0, 2).unwrap().sample_on(&plan).unwrap();
        let rho = (plan.frequency_cell_volume() / PI).sqrt();
        assert!((vals[0].norm_sqr() - 2.0 / rho).abs() < 1e-12);
    }
}
