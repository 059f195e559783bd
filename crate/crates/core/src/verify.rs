//! Monte Carlo estimates with error bars, compared against theoretical
//! targets.
//!
//! Replicas run in parallel by index and are collected in index order; all
//! reductions use pairwise summation, so reports depend only on the sampler
//! and the replica count, not on the thread count.

use std::fmt;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Default `|z|` threshold for a pass.
pub const Z_MAX: f64 = 4.0;

/// Fewest replicas a report accepts.
pub const MIN_REPLICAS: usize = 100;

/// Pairwise (cascade) sum; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Runs `sampler(i)` for `i in 0..n` in parallel and returns the results in
/// index order. The first non-finite value is reported with its index.
pub fn replicate<F>(n: usize, sampler: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let out = replicate_vec(n, |i| Ok(vec![sampler(i)?]))?;
    Ok(out.into_iter().map(|v| v[0]).collect())
}

/// Like [`replicate`] for samplers returning several values per replica.
pub fn replicate_vec<F>(n: usize, sampler: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let out: Vec<Vec<f64>> = (0..n as u64).into_par_iter().map(&sampler).collect::<Result<_>>()?;
    for (i, row) in out.iter().enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
    }
    Ok(out)
}

/// Outcome of comparing a Monte Carlo estimate with its target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub name: String,
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub z: f64,
    pub z_max: f64,
    pub pass: bool,
    /// Zero standard error: the samples were constant.
    pub degenerate: bool,
    /// Wall time; left out of JSON so reports are reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl McReport {
    fn new(name: &str, n: usize, estimate: f64, std_error: f64, target: f64, z_max: f64) -> Self {
        let degenerate = !(std_error > 0.0);
        let diff = estimate - target;
        let z = if degenerate {
            if diff.abs() <= 1e-12 * target.abs().max(1.0) {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            }
        } else {
            diff / std_error
        };
        Self {
            name: name.to_string(),
            n,
            estimate,
            std_error,
            target,
            z,
            z_max,
            pass: z.abs() <= z_max,
            degenerate,
            runtime_secs: 0.0,
        }
    }

    pub fn with_z_max(mut self, z_max: f64) -> Self {
        self.z_max = z_max;
        self.pass = self.z.abs() <= z_max;
        self
    }

    fn timed(mut self, start: Instant) -> Self {
        self.runtime_secs = start.elapsed().as_secs_f64();
        self
    }
}

impl fmt::Display for McReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<44} {} N={:<6} est={:<12.6} se={:<10.3e} target={:<12.6} z={:+.2}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.n,
            self.estimate,
            self.std_error,
            self.target,
            self.z
        )?;
        if self.degenerate {
            write!(f, " (degenerate)")?;
        }
        Ok(())
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < MIN_REPLICAS {
        return Err(param(
            "replicas",
            format!("need at least {MIN_REPLICAS} replicas for an error bar, got {n}"),
        ));
    }
    Ok(())
}

fn check_finite(xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Sample mean with standard error `s / √n`.
pub fn mean_report(name: &str, xs: &[f64], target: f64) -> Result<McReport> {
    check_n(xs.len())?;
    check_finite(xs)?;
    let n = xs.len() as f64;
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let s2 = pairwise_sum(&dev) / (n - 1.0);
    Ok(McReport::new(name, xs.len(), m, (s2 / n).sqrt(), target, Z_MAX))
}

/// Unbiased sample variance; the standard error comes from the fourth
/// central moment, `Var s² ≈ (m₄ − (n−3)/(n−1) σ⁴) / n`.
pub fn variance_report(name: &str, xs: &[f64], target: f64) -> Result<McReport> {
    check_n(xs.len())?;
    check_finite(xs)?;
    let n = xs.len() as f64;
    let m = mean(xs);
    let d2: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let d4: Vec<f64> = d2.iter().map(|x| x * x).collect();
    let m2 = pairwise_sum(&d2) / n;
    let m4 = pairwise_sum(&d4) / n;
    let s2 = m2 * n / (n - 1.0);
    let var_s2 = ((m4 - (n - 3.0) / (n - 1.0) * s2 * s2) / n).max(0.0);
    Ok(McReport::new(name, xs.len(), s2, var_s2.sqrt(), target, Z_MAX))
}

/// Sample covariance; the standard error is that of the mean of the centered
/// products.
pub fn covariance_report(name: &str, xs: &[f64], ys: &[f64], target: f64) -> Result<McReport> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    check_n(xs.len())?;
    check_finite(xs)?;
    check_finite(ys)?;
    let n = xs.len() as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let p: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let mp = mean(&p);
    let dp: Vec<f64> = p.iter().map(|q| (q - mp).powi(2)).collect();
    let var_p = pairwise_sum(&dp) / (n - 1.0);
    let cov = pairwise_sum(&p) / (n - 1.0);
    Ok(McReport::new(name, xs.len(), cov, (var_p / n).sqrt(), target, Z_MAX))
}

/// `n` replicas of `sampler`, variance compared with `target`.
pub fn mc_variance<F>(name: &str, n: usize, target: f64, sampler: F) -> Result<McReport>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    check_n(n)?;
    let start = Instant::now();
    let xs = replicate(n, sampler)?;
    Ok(variance_report(name, &xs, target)?.timed(start))
}

pub fn mc_mean<F>(name: &str, n: usize, target: f64, sampler: F) -> Result<McReport>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    check_n(n)?;
    let start = Instant::now();
    let xs = replicate(n, sampler)?;
    Ok(mean_report(name, &xs, target)?.timed(start))
}

pub fn mc_covariance<F>(name: &str, n: usize, target: f64, sampler: F) -> Result<McReport>
where
    F: Fn(u64) -> Result<(f64, f64)> + Sync,
{
    check_n(n)?;
    let start = Instant::now();
    let rows = replicate_vec(n, |i| sampler(i).map(|(a, b)| vec![a, b]))?;
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    Ok(covariance_report(name, &xs, &ys, target)?.timed(start))
}

/// Empirical characteristic function against theory on a grid of `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcfReport {
    pub name: String,
    pub n: usize,
    pub u: Vec<f64>,
    pub empirical: Vec<Complex64>,
    pub theory: Vec<Complex64>,
    pub max_deviation: f64,
    pub band: f64,
    pub pass: bool,
}

impl fmt::Display for EcfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<44} {} N={:<6} max|Δφ|={:<10.3e} band={:.3e} ({} points)",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.n,
            self.max_deviation,
            self.band,
            self.u.len()
        )
    }
}

/// `(1/N) Σ e^{iuX_k}` at each `u`.
pub fn empirical_cf(samples: &[f64], u: f64) -> Complex64 {
    let re: Vec<f64> = samples.iter().map(|x| (u * x).cos()).collect();
    let im: Vec<f64> = samples.iter().map(|x| (u * x).sin()).collect();
    let n = samples.len() as f64;
    Complex64::new(pairwise_sum(&re) / n, pairwise_sum(&im) / n)
}

/// Compares the empirical characteristic function of `samples` with
/// `theory(u)` on `u_grid`; passes iff the largest modulus of the difference
/// is within `4/√N`.
pub fn ecf_compare<F>(name: &str, samples: &[f64], theory: F, u_grid: &[f64]) -> Result<EcfReport>
where
    F: Fn(f64) -> Result<Complex64>,
{
    if u_grid.is_empty() {
        return Err(param("u_grid", "need at least one frequency"));
    }
    if u_grid.iter().any(|u| !u.is_finite()) {
        return Err(param("u_grid", "frequencies must be finite"));
    }
    check_n(samples.len())?;
    check_finite(samples)?;
    let empirical: Vec<Complex64> = u_grid.iter().map(|&u| empirical_cf(samples, u)).collect();
    let theory: Vec<Complex64> = u_grid.iter().map(|&u| theory(u)).collect::<Result<_>>()?;
    let max_deviation = empirical
        .iter()
        .zip(&theory)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let band = Z_MAX / (samples.len() as f64).sqrt();
    Ok(EcfReport {
        name: name.to_string(),
        n: samples.len(),
        u: u_grid.to_vec(),
        empirical,
        theory,
        max_deviation,
        band,
        pass: max_deviation <= band,
    })
}

/// Two-sample version: both sides empirical, band `4√2/√N`.
pub fn ecf_two_sample(name: &str, a: &[f64], b: &[f64], u_grid: &[f64]) -> Result<EcfReport> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut r = ecf_compare(name, a, |u| Ok(empirical_cf(b, u)), u_grid)?;
    r.band *= std::f64::consts::SQRT_2;
    r.pass = r.max_deviation <= r.band;
    Ok(r)
}

/// Least-squares fit of `Var X_t = a + b t` from replicas observed at
/// several times, with standard errors that account for the correlation
/// between times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRegression {
    pub slope: McReport,
    pub intercept: McReport,
}

/// `paths[r][k]` is replica `r` at `times[k]`.
pub fn variance_regression(
    name: &str,
    times: &[f64],
    paths: &[Vec<f64>],
    slope_target: f64,
) -> Result<VarianceRegression> {
    let k = times.len();
    if k < 2 {
        return Err(param("times", "need at least two time points"));
    }
    check_n(paths.len())?;
    if let Some(bad) = paths.iter().position(|p| p.len() != k) {
        return Err(Error::Data(format!("replica {bad} has the wrong number of time points")));
    }
    let n = paths.len() as f64;
    let tbar = pairwise_sum(times) / k as f64;
    let sxx: f64 = times.iter().map(|t| (t - tbar).powi(2)).sum();
    let w: Vec<f64> = times.iter().map(|t| (t - tbar) / sxx).collect();
    let c: Vec<f64> = w.iter().map(|wk| 1.0 / k as f64 - tbar * wk).collect();
    let means: Vec<f64> = (0..k)
        .map(|j| mean(&paths.iter().map(|p| p[j]).collect::<Vec<_>>()))
        .collect();
    // Per-replica contributions whose average is the OLS coefficient.
    let per = |coef: &[f64]| -> Vec<f64> {
        paths
            .iter()
            .map(|p| n / (n - 1.0) * p.iter().zip(&means).zip(coef).map(|((x, m), a)| a * (x - m).powi(2)).sum::<f64>())
            .collect()
    };
    let report = |label: &str, q: Vec<f64>, target: f64| -> Result<McReport> {
        let mut r = mean_report(&format!("{name} {label}"), &q, target)?;
        r.n = paths.len();
        Ok(r)
    };
    Ok(VarianceRegression {
        slope: report("slope", per(&w), slope_target)?,
        intercept: report("intercept", per(&c), 0.0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(i: u64) -> Result<f64> {
        let mut rng = StreamSeed::new(17, i).rng();
        Ok(StandardNormal.sample(&mut rng))
    }

    #[test]
    fn constant_sampler_is_degenerate() {
        let r = mc_variance("const", 200, 0.0, |_| Ok(3.0)).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(r.degenerate && r.pass);
        let r = mc_variance("const", 200, 1.0, |_| Ok(3.0)).unwrap();
        assert!(r.degenerate && !r.pass);
    }

    #[test]
    fn standard_normal_variance() {
        let r = mc_variance("normal", 10_000, 1.0, normal).unwrap();
        assert!(r.pass, "{r}");
        // For Gaussian data the fourth-moment error bar is close to √(2/n).
        assert!((r.std_error / (2.0f64 / 10_000.0).sqrt() - 1.0).abs() < 0.1);
        let m = mc_mean("normal mean", 10_000, 0.0, normal).unwrap();
        assert!(m.pass);
        let c = mc_covariance("cov", 10_000, 1.0, |i| {
            let x = normal(i)?;
            Ok((x, x + normal(i + 1_000_000)?))
        })
        .unwrap();
        assert!(c.pass, "{c}");
    }

    #[test]
    fn validation() {
        assert!(mc_variance("small", 10, 1.0, normal).is_err());
        let err = mc_variance("nan", 200, 1.0, |i| Ok(if i == 57 { f64::NAN } else { 1.0 })).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 57 }));
        assert!(ecf_compare("e", &[0.0; 200], |_| Ok(Complex64::new(1.0, 0.0)), &[]).is_err());
    }

    #[test]
    fn ecf_at_zero_is_one() {
        let xs = replicate(500, normal).unwrap();
        let r = ecf_compare("normal", &xs, |u| Ok(Complex64::new((-0.5 * u * u).exp(), 0.0)), &[0.0, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(r.empirical[0], Complex64::new(1.0, 0.0));
        assert!(r.pass);
        assert!(r.empirical.iter().all(|z| z.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn reports_are_independent_of_thread_count() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| mc_variance("n", 1000, 1.0, normal)).unwrap();
        let b = three.install(|| mc_variance("n", 1000, 1.0, normal)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn regression_of_brownian_variance() {
        let times = [0.2, 0.4, 0.6, 0.8, 1.0];
        let paths = replicate_vec(4000, |i| {
            let mut rng = StreamSeed::new(3, i).rng();
            let mut x = 0.0;
            Ok(times
                .iter()
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x += (0.2f64 * 1.5).sqrt() * z;
                    x
                })
                .collect())
        })
        .unwrap();
        let r = variance_regression("bm", &times, &paths, 1.5).unwrap();
        assert!(r.slope.pass, "{}", r.slope);
        assert!(r.intercept.pass, "{}", r.intercept);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), 2475.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
