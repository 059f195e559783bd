//! Lévy jump-size measures and their truncation layers.
//!
//! A [`JumpMeasure`] is a measure ν on ℝ∖{0} with finite second moment
//! `v = ∫ z² ν(dz)`. Sampling goes through a [`LayerScheme`]: thresholds
//! `1 = ε₀ > ε₁ > … > ε_J` cut the jump sizes into the layers
//! `Γ₀ = {|z| > 1}` and `Γ_j = {ε_j < |z| ≤ ε_{j-1}}`, each of which has
//! finite mass and is sampled as a compound Poisson variable. Jumps with
//! `|z| ≤ ε_J` are either dropped or replaced by a centered Gaussian of the
//! same variance.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{param, Error, Result};
use crate::quadrature::{integrate_to_infinity, integrate_with_breaks, Tolerance};

/// Relative tolerance for ν-integrals that have no closed form.
pub const NU_QUAD_TOL: f64 = 1e-10;

/// Probability law of the jump sizes of a finite-activity measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpLaw {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
}

impl JumpLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            JumpLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(param("law", format!("uniform needs low < high, got [{low}, {high}]")));
                }
            }
            JumpLaw::Normal { mean, std_dev } => {
                if !(mean.is_finite() && std_dev.is_finite() && std_dev > 0.0) {
                    return Err(param("law", format!("normal needs std_dev > 0, got {std_dev}")));
                }
            }
        }
        Ok(())
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match *self {
            JumpLaw::Uniform { low, high } => {
                if z >= low && z <= high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            JumpLaw::Normal { mean, std_dev } => normal(mean, std_dev).pdf(z),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            JumpLaw::Uniform { low, high } => ((z - low) / (high - low)).clamp(0.0, 1.0),
            JumpLaw::Normal { mean, std_dev } => normal(mean, std_dev).cdf(z),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            JumpLaw::Uniform { low, high } => low + p * (high - low),
            JumpLaw::Normal { mean, std_dev } => normal(mean, std_dev).inverse_cdf(p),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            JumpLaw::Uniform { low, high } => 0.5 * (low + high),
            JumpLaw::Normal { mean, .. } => mean,
        }
    }

    /// `E[Z²]`.
    pub fn raw_second_moment(&self) -> f64 {
        match *self {
            JumpLaw::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            JumpLaw::Normal { mean, std_dev } => mean * mean + std_dev * std_dev,
        }
    }

    /// `E[e^{iuZ}]`.
    pub fn char_fn(&self, u: f64) -> Complex64 {
        match *self {
            JumpLaw::Uniform { low, high } => {
                let w = u * (high - low);
                if w.abs() < 1e-8 {
                    return Complex64::from_polar(1.0, u * 0.5 * (low + high));
                }
                (Complex64::new(0.0, u * high).exp() - Complex64::new(0.0, u * low).exp())
                    / Complex64::new(0.0, w)
            }
            JumpLaw::Normal { mean, std_dev } => {
                Complex64::from_polar((-0.5 * u * u * std_dev * std_dev).exp(), u * mean)
            }
        }
    }

    fn is_symmetric(&self) -> bool {
        match *self {
            JumpLaw::Uniform { low, high } => low == -high,
            JumpLaw::Normal { mean, .. } => mean == 0.0,
        }
    }

    /// Support endpoints used to bound quadrature.
    fn support(&self) -> (f64, f64) {
        match *self {
            JumpLaw::Uniform { low, high } => (low, high),
            JumpLaw::Normal { mean, std_dev } => (mean - 40.0 * std_dev, mean + 40.0 * std_dev),
        }
    }
}

fn normal(mean: f64, std_dev: f64) -> Normal {
    Normal::new(mean, std_dev).expect("validated normal parameters")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpMeasureKind {
    /// Mass `rate / 2` at each of `±size`.
    TwoPoint { rate: f64, size: f64 },
    /// `rate` times the law of the jump sizes.
    CompoundPoisson { rate: f64, law: JumpLaw },
    /// Density `|z|^{-1-β}` on `0 < |z| ≤ 1`, `β ∈ (0, 2)`.
    PowerLaw { beta: f64 },
}

/// A Lévy measure ν with finite second moment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "JumpMeasureKind", try_from = "JumpMeasureKind")]
pub struct JumpMeasure {
    kind: JumpMeasureKind,
    second_moment: f64,
}

impl JumpMeasure {
    pub fn new(kind: JumpMeasureKind) -> Result<Self> {
        let second_moment = match kind {
            JumpMeasureKind::TwoPoint { rate, size } => {
                check_rate(rate)?;
                if !(size.is_finite() && size > 0.0) {
                    return Err(param("size", format!("jump size must be positive, got {size}")));
                }
                rate * size * size
            }
            JumpMeasureKind::CompoundPoisson { rate, law } => {
                check_rate(rate)?;
                law.validate()?;
                rate * law.raw_second_moment()
            }
            JumpMeasureKind::PowerLaw { beta } => {
                if !(beta > 0.0 && beta < 2.0) {
                    return Err(param(
                        "beta",
                        format!("power-law exponent must lie in (0, 2) for a finite second moment, got {beta}"),
                    ));
                }
                2.0 / (2.0 - beta)
            }
        };
        Ok(Self { kind, second_moment })
    }

    pub fn two_point(rate: f64, size: f64) -> Result<Self> {
        Self::new(JumpMeasureKind::TwoPoint { rate, size })
    }

    pub fn compound_poisson(rate: f64, law: JumpLaw) -> Result<Self> {
        Self::new(JumpMeasureKind::CompoundPoisson { rate, law })
    }

    pub fn power_law(beta: f64) -> Result<Self> {
        Self::new(JumpMeasureKind::PowerLaw { beta })
    }

    pub fn kind(&self) -> &JumpMeasureKind {
        &self.kind
    }

    /// `v = ∫ z² ν(dz)`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn is_symmetric(&self) -> bool {
        match self.kind {
            JumpMeasureKind::TwoPoint { .. } | JumpMeasureKind::PowerLaw { .. } => true,
            JumpMeasureKind::CompoundPoisson { law, .. } => law.is_symmetric(),
        }
    }

    /// Total mass `ν(ℝ∖{0})`; infinite for the power law.
    pub fn total_mass(&self) -> f64 {
        match self.kind {
            JumpMeasureKind::TwoPoint { rate, .. } | JumpMeasureKind::CompoundPoisson { rate, .. } => rate,
            JumpMeasureKind::PowerLaw { .. } => f64::INFINITY,
        }
    }

    /// `(ν(S), ∫_S z ν(dz), ∫_S z² ν(dz))` for the band `S = {lo < |z| ≤ hi}`.
    /// `hi` may be infinite.
    pub fn band_moments(&self, lo: f64, hi: f64) -> Result<(f64, f64, f64)> {
        debug_assert!(lo >= 0.0 && hi >= lo);
        match self.kind {
            JumpMeasureKind::TwoPoint { rate, size } => {
                if size > lo && size <= hi {
                    Ok((rate, 0.0, rate * size * size))
                } else {
                    Ok((0.0, 0.0, 0.0))
                }
            }
            JumpMeasureKind::PowerLaw { beta } => {
                let hi = hi.min(1.0);
                if hi <= lo {
                    return Ok((0.0, 0.0, 0.0));
                }
                let mass = if lo == 0.0 {
                    f64::INFINITY
                } else {
                    2.0 / beta * (lo.powf(-beta) - hi.powf(-beta))
                };
                let second = 2.0 / (2.0 - beta) * (hi.powf(2.0 - beta) - lo.powf(2.0 - beta));
                Ok((mass, 0.0, second))
            }
            JumpMeasureKind::CompoundPoisson { rate, law } => {
                let m0 = law_band_integral(&law, lo, hi, |_| 1.0)?;
                let m1 = law_band_integral(&law, lo, hi, |z| z)?;
                let m2 = law_band_integral(&law, lo, hi, |z| z * z)?;
                Ok((rate * m0, rate * m1, rate * m2))
            }
        }
    }

    /// `σ²(ε) = ∫_{|z| ≤ ε} z² ν(dz)`.
    pub fn small_jump_variance(&self, eps: f64) -> Result<f64> {
        Ok(self.band_moments(0.0, eps)?.2)
    }

    /// Cumulant `Ψ(u) = ∫ (e^{iuz} − 1 − iuz) ν(dz)`, closed form where one
    /// exists.
    pub fn cumulant(&self, u: f64) -> Result<Complex64> {
        if u == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        match self.kind {
            JumpMeasureKind::TwoPoint { rate, size } => Ok(Complex64::new(rate * ((u * size).cos() - 1.0), 0.0)),
            JumpMeasureKind::CompoundPoisson { rate, law } => {
                Ok(rate * (law.char_fn(u) - 1.0 - Complex64::new(0.0, u * law.mean())))
            }
            JumpMeasureKind::PowerLaw { beta } => {
                // 2 ∫₀¹ (cos(uz) − 1) z^{-1-β} dz, written with −2 sin²(uz/2)
                // to avoid cancellation near z = 0.
                let f = |z: f64| {
                    if z == 0.0 {
                        return 0.0;
                    }
                    let s = (0.5 * u * z).sin();
                    -4.0 * s * s * z.powf(-1.0 - beta)
                };
                let breaks = oscillation_breaks(u, 1.0);
                let est = integrate_with_breaks(f, &breaks, Tolerance::relative(NU_QUAD_TOL))
                    .map_err(|e| annotate(e, "cumulant"))?;
                Ok(Complex64::new(est.value, 0.0))
            }
        }
    }

    /// `Ψ(u)` evaluated purely by quadrature against ν (atoms summed). Used
    /// as an independent route for checking [`JumpMeasure::cumulant`].
    pub fn cumulant_by_quadrature(&self, u: f64) -> Result<Complex64> {
        let kernel = |z: f64| {
            let x = u * z;
            let s = (0.5 * x).sin();
            let im = if x.abs() < 1e-3 {
                -x * x * x / 6.0 + x.powi(5) / 120.0
            } else {
                x.sin() - x
            };
            Complex64::new(-2.0 * s * s, im)
        };
        match self.kind {
            JumpMeasureKind::TwoPoint { rate, size } => Ok(0.5 * rate * (kernel(size) + kernel(-size))),
            JumpMeasureKind::CompoundPoisson { rate, law } => {
                let (a, b) = law.support();
                let mut pts = vec![a];
                pts.extend(
                    oscillation_breaks(u, b - a)
                        .into_iter()
                        .skip(1)
                        .map(|x| a + x),
                );
                let tol = Tolerance::relative(NU_QUAD_TOL).with_abs(1e-14);
                let re = integrate_with_breaks(|z| kernel(z).re * law.pdf(z), &pts, tol)?;
                let im = integrate_with_breaks(|z| kernel(z).im * law.pdf(z), &pts, tol)?;
                Ok(rate * Complex64::new(re.value, im.value))
            }
            JumpMeasureKind::PowerLaw { beta } => {
                let tol = Tolerance::relative(NU_QUAD_TOL).with_abs(1e-14);
                let dens = |z: f64| z.abs().powf(-1.0 - beta);
                let pts = oscillation_breaks(u, 1.0);
                let neg: Vec<f64> = pts.iter().rev().map(|x| -x).collect();
                let mut re = 0.0;
                let mut im = 0.0;
                for p in [&neg, &pts] {
                    re += integrate_with_breaks(
                        |z| if z == 0.0 { 0.0 } else { kernel(z).re * dens(z) },
                        p,
                        tol,
                    )?
                    .value;
                    im += integrate_with_breaks(
                        |z| if z == 0.0 { 0.0 } else { kernel(z).im * dens(z) },
                        p,
                        tol,
                    )?
                    .value;
                }
                Ok(Complex64::new(re, im))
            }
        }
    }

    /// Draw one jump size from ν restricted to `{lo < |z| ≤ hi}` and
    /// normalized. The band must carry positive finite mass.
    pub fn sample_in_band<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        match self.kind {
            JumpMeasureKind::TwoPoint { size, .. } => {
                if rng.random::<bool>() {
                    size
                } else {
                    -size
                }
            }
            JumpMeasureKind::PowerLaw { beta } => {
                let hi = hi.min(1.0);
                let a = lo.powf(-beta);
                let b = hi.powf(-beta);
                let u: f64 = rng.random();
                let mag = (a - u * (a - b)).powf(-1.0 / beta);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
            JumpMeasureKind::CompoundPoisson { law, .. } => {
                // Pieces (lo, hi] and [-hi, -lo) in CDF coordinates.
                let hi_c = if hi.is_finite() { hi } else { f64::INFINITY };
                let pos = (law.cdf(lo), law.cdf(hi_c));
                let neg = (law.cdf(-hi_c), law.cdf(-lo));
                let wp = (pos.1 - pos.0).max(0.0);
                let wn = (neg.1 - neg.0).max(0.0);
                let pick: f64 = rng.random::<f64>() * (wp + wn);
                let (c0, c1) = if pick < wp { pos } else { neg };
                let p = c0 + rng.random::<f64>() * (c1 - c0);
                let z = law.quantile(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
                // Guard against quantile round-off pushing z out of the band.
                let mag = z.abs().clamp(lo.next_up(), hi_c);
                mag.copysign(z)
            }
        }
    }
}

impl From<JumpMeasure> for JumpMeasureKind {
    fn from(m: JumpMeasure) -> Self {
        m.kind
    }
}

impl TryFrom<JumpMeasureKind> for JumpMeasure {
    type Error = Error;

    fn try_from(kind: JumpMeasureKind) -> Result<Self> {
        Self::new(kind)
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(param("rate", format!("rate must be positive, got {rate}")))
    }
}

fn annotate(e: Error, context: &'static str) -> Error {
    match e {
        Error::Numerical { detail, .. } => Error::Numerical { context, detail },
        other => other,
    }
}

/// Breakpoints on `[0, len]` spaced at a quarter period of `e^{iuz}`, so no
/// quadrature panel spans many oscillations.
fn oscillation_breaks(u: f64, len: f64) -> Vec<f64> {
    let period = 2.0 * PI / u.abs().max(1e-300);
    let pieces = ((len / (0.25 * period)).ceil() as usize).clamp(1, 4096);
    (0..=pieces).map(|k| len * k as f64 / pieces as f64).collect()
}

/// `∫_{lo<|z|≤hi} g(z) p(z) dz` for a jump-size law with density `p`.
fn law_band_integral<G: Fn(f64) -> f64>(law: &JumpLaw, lo: f64, hi: f64, g: G) -> Result<f64> {
    let (s0, s1) = law.support();
    let tol = Tolerance::relative(NU_QUAD_TOL).with_abs(1e-300);
    let integrand = |z: f64| g(z) * law.pdf(z);
    let mut total = 0.0;
    for (a, b) in [(lo, hi), (-hi, -lo)] {
        let a = a.max(s0);
        let b = b.min(s1);
        if b <= a {
            continue;
        }
        let mut pts = vec![a];
        for k in [law.mean(), 0.0] {
            if k > a && k < b {
                pts.push(k);
            }
        }
        pts.push(b);
        pts.sort_by(f64::total_cmp);
        if b.is_finite() {
            total += integrate_with_breaks(integrand, &pts, tol)?.value;
        } else {
            total += integrate_to_infinity(integrand, a, tol)?.value;
        }
    }
    Ok(total)
}

/// What happens to jumps below the terminal truncation level `ε_J`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumpPolicy {
    #[default]
    Drop,
    GaussianSubstitute,
}

/// Decreasing truncation thresholds `1 = ε₀ > ε₁ > … > ε_J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLayerScheme")]
pub struct LayerScheme {
    thresholds: Vec<f64>,
    small_jumps: SmallJumpPolicy,
}

#[derive(Deserialize)]
struct RawLayerScheme {
    thresholds: Vec<f64>,
    small_jumps: SmallJumpPolicy,
}

impl TryFrom<RawLayerScheme> for LayerScheme {
    type Error = Error;

    fn try_from(raw: RawLayerScheme) -> Result<Self> {
        Self::new(raw.thresholds, raw.small_jumps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LayerStats {
    /// `λ_j = ν(Γ_j)`
    pub rate: f64,
    /// `m_j = ∫_{Γ_j} z ν(dz)`
    pub mean: f64,
    /// `s_j = ∫_{Γ_j} z² ν(dz)`
    pub second_moment: f64,
}

impl LayerScheme {
    pub fn new(thresholds: Vec<f64>, small_jumps: SmallJumpPolicy) -> Result<Self> {
        if thresholds.first() != Some(&1.0) {
            return Err(param("thresholds", "the first threshold must be exactly 1"));
        }
        if thresholds.windows(2).any(|w| !(w[1] < w[0] && w[1] > 0.0)) {
            return Err(param("thresholds", "thresholds must be strictly decreasing and positive"));
        }
        Ok(Self {
            thresholds,
            small_jumps,
        })
    }

    /// `ε_j = 2^{-j}` for `j = 0..=levels`.
    pub fn dyadic(levels: usize, small_jumps: SmallJumpPolicy) -> Self {
        let thresholds = (0..=levels).map(|j| 0.5f64.powi(j as i32)).collect();
        Self {
            thresholds,
            small_jumps,
        }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn small_jumps(&self) -> SmallJumpPolicy {
        self.small_jumps
    }

    /// Index of the last layer, `J`.
    pub fn last_layer(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn layer_count(&self) -> usize {
        self.thresholds.len()
    }

    /// `ε_J`
    pub fn terminal(&self) -> f64 {
        *self.thresholds.last().expect("non-empty thresholds")
    }

    /// `(lo, hi)` with `Γ_j = {lo < |z| ≤ hi}`.
    pub fn band(&self, j: usize) -> Result<(f64, f64)> {
        if j > self.last_layer() {
            return Err(param(
                "layer",
                format!("layer {j} out of range 0..={}", self.last_layer()),
            ));
        }
        Ok(if j == 0 {
            (1.0, f64::INFINITY)
        } else {
            (self.thresholds[j], self.thresholds[j - 1])
        })
    }
}

/// Rate, mean and second moment of ν on layer `Γ_j`.
pub fn layer_stats(nu: &JumpMeasure, scheme: &LayerScheme, j: usize) -> Result<LayerStats> {
    let (lo, hi) = scheme.band(j)?;
    let (rate, mean, second_moment) = nu.band_moments(lo, hi)?;
    Ok(LayerStats {
        rate,
        mean,
        second_moment,
    })
}

/// Jump sizes of layer `j` falling in a region of the given space-time
/// volume: a Poisson(λ_j · volume) count of draws from ν restricted to Γ_j.
pub fn sample_layer<R: Rng + ?Sized>(
    nu: &JumpMeasure,
    scheme: &LayerScheme,
    j: usize,
    region_volume: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(region_volume > 0.0 && region_volume.is_finite()) {
        return Err(param("region_volume", format!("must be positive, got {region_volume}")));
    }
    let (lo, hi) = scheme.band(j)?;
    let stats = layer_stats(nu, scheme, j)?;
    let count = poisson_count(stats.rate * region_volume, rng)?;
    Ok((0..count).map(|_| nu.sample_in_band(lo, hi, rng)).collect())
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| param("rate", format!("Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn second_moment_examples() {
        assert_eq!(JumpMeasure::two_point(2.0, 1.0).unwrap().second_moment(), 2.0);
        // Oracle: 2∫₀¹ z^{1-β} dz by quadrature.
        let oracle = 2.0
            * crate::quadrature::integrate(|z: f64| z.powf(0.0), 0.0, 1.0, Tolerance::relative(1e-13))
                .unwrap()
                .value;
        assert!(rel(JumpMeasure::power_law(1.0).unwrap().second_moment(), oracle) < 1e-12);
        // Oracle: 3 · ∫_{-1}^{1} z² / 2 dz.
        let oracle = 3.0
            * crate::quadrature::integrate(|z: f64| 0.5 * z * z, -1.0, 1.0, Tolerance::relative(1e-13))
                .unwrap()
                .value;
        let cp = JumpMeasure::compound_poisson(3.0, JumpLaw::Uniform { low: -1.0, high: 1.0 }).unwrap();
        assert!(rel(cp.second_moment(), oracle) < 1e-12);
        assert!(rel(cp.second_moment(), 1.0) < 1e-12);
    }

    #[test]
    fn construction_rejects_divergent_parameters() {
        assert!(JumpMeasure::power_law(2.0).is_err());
        assert!(JumpMeasure::power_law(0.0).is_err());
        assert!(JumpMeasure::two_point(0.0, 1.0).is_err());
        assert!(JumpMeasure::two_point(1.0, -1.0).is_err());
        assert!(JumpMeasure::compound_poisson(1.0, JumpLaw::Uniform { low: 1.0, high: 1.0 }).is_err());
        assert!(JumpMeasure::compound_poisson(1.0, JumpLaw::Normal { mean: 0.0, std_dev: 0.0 }).is_err());
    }

    #[test]
    fn layer_stats_examples() {
        let dyadic = LayerScheme::dyadic(6, SmallJumpPolicy::Drop);
        let tp = JumpMeasure::two_point(2.0, 1.0).unwrap();
        assert_eq!(layer_stats(&tp, &dyadic, 0).unwrap().rate, 0.0);
        assert_eq!(layer_stats(&tp, &dyadic, 1).unwrap().rate, 2.0);

        let pl = JumpMeasure::power_law(1.0).unwrap();
        // Oracle: 2 ∫_{1/2}^{1} z^{-2} dz by quadrature.
        let oracle = 2.0
            * crate::quadrature::integrate(|z: f64| z.powi(-2), 0.5, 1.0, Tolerance::relative(1e-13))
                .unwrap()
                .value;
        let s1 = layer_stats(&pl, &dyadic, 1).unwrap();
        assert!(rel(s1.rate, oracle) < 1e-12);
        assert!(rel(s1.rate, 2.0) < 1e-12);
        for j in 0..=6 {
            assert_eq!(layer_stats(&pl, &dyadic, j).unwrap().mean, 0.0);
        }
        assert!(layer_stats(&pl, &dyadic, 7).is_err());
    }

    #[test]
    fn compound_poisson_layers_use_quadrature() {
        let law = JumpLaw::Normal { mean: 0.3, std_dev: 1.2 };
        let nu = JumpMeasure::compound_poisson(1.5, law).unwrap();
        let scheme = LayerScheme::dyadic(10, SmallJumpPolicy::Drop);
        let mut mass = 0.0;
        let mut first = 0.0;
        let mut second = 0.0;
        for j in 0..=10 {
            let s = layer_stats(&nu, &scheme, j).unwrap();
            mass += s.rate;
            first += s.mean;
            second += s.second_moment;
        }
        let (m0, m1, m2) = nu.band_moments(0.0, scheme.terminal()).unwrap();
        assert!(rel(mass + m0, 1.5) < 1e-9);
        assert!(rel(first + m1, 1.5 * 0.3) < 1e-9);
        assert!(rel(second + m2, nu.second_moment()) < 1e-9);
    }

    #[test]
    fn layer_second_moments_add_up_to_v() {
        let scheme = LayerScheme::dyadic(12, SmallJumpPolicy::Drop);
        for nu in [
            JumpMeasure::two_point(2.0, 0.3).unwrap(),
            JumpMeasure::power_law(0.5).unwrap(),
            JumpMeasure::power_law(1.7).unwrap(),
            JumpMeasure::compound_poisson(3.0, JumpLaw::Uniform { low: -2.0, high: 1.0 }).unwrap(),
        ] {
            let layered: f64 = (0..=scheme.last_layer())
                .map(|j| layer_stats(&nu, &scheme, j).unwrap().second_moment)
                .sum();
            let total = layered + nu.small_jump_variance(scheme.terminal()).unwrap();
            assert!(rel(total, nu.second_moment()) < 1e-8, "{nu:?}: {total}");
        }
    }

    #[test]
    fn cumulant_examples() {
        let tp = JumpMeasure::two_point(2.0, 1.0).unwrap();
        let psi = tp.cumulant(PI).unwrap();
        assert!((psi.re + 4.0).abs() < 1e-14 && psi.im == 0.0);
        let quad = tp.cumulant_by_quadrature(PI).unwrap();
        assert!((quad.re + 4.0).abs() < 1e-12 && quad.im.abs() < 1e-14);
        for nu in [
            tp,
            JumpMeasure::power_law(1.3).unwrap(),
            JumpMeasure::compound_poisson(1.0, JumpLaw::Normal { mean: 0.0, std_dev: 1.0 }).unwrap(),
        ] {
            assert_eq!(nu.cumulant(0.0).unwrap(), Complex64::new(0.0, 0.0));
            assert_eq!(nu.cumulant(2.5).unwrap().im, 0.0);
        }
    }

    #[test]
    fn cumulant_closed_forms_match_quadrature() {
        let measures = [
            JumpMeasure::compound_poisson(3.0, JumpLaw::Uniform { low: -1.0, high: 2.0 }).unwrap(),
            JumpMeasure::compound_poisson(0.7, JumpLaw::Normal { mean: 0.5, std_dev: 0.8 }).unwrap(),
            JumpMeasure::power_law(0.6).unwrap(),
            JumpMeasure::power_law(1.5).unwrap(),
        ];
        for nu in &measures {
            for u in [-7.0, -1.3, 0.4, 3.0, 11.0] {
                let a = nu.cumulant(u).unwrap();
                let b = nu.cumulant_by_quadrature(u).unwrap();
                assert!((a - b).norm() < 1e-8 * (1.0 + a.norm()), "{nu:?} u={u}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn sample_layer_examples() {
        let scheme = LayerScheme::dyadic(4, SmallJumpPolicy::Drop);
        let tp = JumpMeasure::two_point(2.0, 1.0).unwrap();
        let mut rng = StreamSeed::new(1, 0).rng();
        for _ in 0..100 {
            assert!(sample_layer(&tp, &scheme, 0, 3.0, &mut rng).unwrap().is_empty());
            let jumps = sample_layer(&tp, &scheme, 1, 1.0, &mut rng).unwrap();
            assert!(jumps.iter().all(|z| z.abs() == 1.0));
        }
        assert!(sample_layer(&tp, &scheme, 1, 0.0, &mut rng).is_err());

        let pl = JumpMeasure::power_law(1.0).unwrap();
        let volume = 1e4;
        for stream in 0..5 {
            let mut rng = StreamSeed::new(11, stream).rng();
            let count = sample_layer(&pl, &scheme, 1, volume, &mut rng).unwrap().len();
            // λ₁ = 2; the count over volume V has sd √(2V), so count/V has sd √(2/V).
            let rate = count as f64 / volume;
            assert!((rate - 2.0).abs() <= 4.0 * (2.0f64 / volume).sqrt(), "rate {rate}");
        }
    }

    #[test]
    fn layer_counts_pass_poisson_chi_square() {
        use statrs::distribution::{ChiSquared, Discrete, Poisson as PoissonPmf};
        let scheme = LayerScheme::dyadic(4, SmallJumpPolicy::Drop);
        let pl = JumpMeasure::power_law(1.0).unwrap();
        let draws = 10_000;
        let volume = 1.5;
        let mean = layer_stats(&pl, &scheme, 2).unwrap().rate * volume;
        let mut rng = StreamSeed::new(5, 0).rng();
        let mut hist = vec![0usize; 64];
        for _ in 0..draws {
            let k = sample_layer(&pl, &scheme, 2, volume, &mut rng).unwrap().len();
            hist[k.min(63)] += 1;
        }
        let pmf = PoissonPmf::new(mean).unwrap();
        // Pool bins with expected count below 5 into the tails.
        let mut chi2 = 0.0;
        let mut bins = 0;
        let mut acc_obs = 0.0;
        let mut acc_exp = 0.0;
        for (k, obs) in hist.iter().enumerate() {
            acc_obs += *obs as f64;
            acc_exp += if k == 63 {
                draws as f64 * (1.0 - (0..63).map(|i| pmf.pmf(i)).sum::<f64>())
            } else {
                draws as f64 * pmf.pmf(k as u64)
            };
            if acc_exp >= 5.0 {
                chi2 += (acc_obs - acc_exp).powi(2) / acc_exp;
                bins += 1;
                acc_obs = 0.0;
                acc_exp = 0.0;
            }
        }
        chi2 += if acc_exp > 0.0 { (acc_obs - acc_exp).powi(2) / acc_exp } else { 0.0 };
        let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 1e-3, "chi2 {chi2} on {bins} bins, p = {p}");
    }

    #[test]
    fn band_samples_stay_in_band() {
        let scheme = LayerScheme::dyadic(5, SmallJumpPolicy::Drop);
        let mut rng = StreamSeed::new(3, 0).rng();
        let measures = [
            JumpMeasure::power_law(1.2).unwrap(),
            JumpMeasure::compound_poisson(2.0, JumpLaw::Normal { mean: 0.2, std_dev: 1.0 }).unwrap(),
            JumpMeasure::compound_poisson(2.0, JumpLaw::Uniform { low: -0.7, high: 3.0 }).unwrap(),
        ];
        for nu in &measures {
            for j in 0..=5 {
                if layer_stats(nu, &scheme, j).unwrap().rate == 0.0 {
                    continue;
                }
                let (lo, hi) = scheme.band(j).unwrap();
                for _ in 0..2000 {
                    let z = nu.sample_in_band(lo, hi, &mut rng);
                    assert!(z.abs() > lo && z.abs() <= hi, "{nu:?} j={j} z={z}");
                }
            }
        }
    }

    #[test]
    fn scheme_validation() {
        assert!(LayerScheme::new(vec![0.5, 0.25], SmallJumpPolicy::Drop).is_err());
        assert!(LayerScheme::new(vec![1.0, 0.5, 0.5], SmallJumpPolicy::Drop).is_err());
        assert!(LayerScheme::new(vec![1.0, 0.1, 0.01], SmallJumpPolicy::Drop).is_ok());
        let s = LayerScheme::new(vec![1.0], SmallJumpPolicy::Drop).unwrap();
        assert_eq!(s.last_layer(), 0);
        assert_eq!(s.terminal(), 1.0);
    }
}
