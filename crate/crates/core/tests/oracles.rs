//! Quadrature results against closed forms derived by hand.

use std::f64::consts::PI;

use levynoise::solver::variance_it;
use levynoise::spectral::{mu_integral, Cutoff, Integrand};
use levynoise::white_noise::{box_indicator, char_functional, cov_white};
use levynoise::{GreenFunction, GridSpec, JumpMeasure, SpectralDensity, TemperedMeasureMu};
use statrs::function::gamma::gamma;

fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// `∫_0^∞ η^{-p} sin²η dη` for `1 < p < 3`.
fn sin2_mellin(p: f64) -> f64 {
    if (p - 2.0).abs() < 1e-12 {
        return PI / 2.0;
    }
    -(2f64.powf(p - 2.0)) * gamma(1.0 - p) * (PI * p / 2.0).sin()
}

/// Heat, `𝓕G = e^{-s|ξ|²/2}`, Riesz `|h|² = |ξ|^{-α}`:
/// `I_t = v (2π)^{-d} |S^{d-1}| Γ((d-α)/2) / 2 · t^{q} / q`, `q = 1 - (d-α)/2`.
fn heat_riesz(alpha: f64, d: usize, v: f64, t: f64) -> f64 {
    let q = 1.0 - (d as f64 - alpha) / 2.0;
    v * (2.0 * PI).powi(-(d as i32)) * sphere_area(d) * 0.5 * gamma((d as f64 - alpha) / 2.0) * t.powf(q) / q
}

/// Wave, `𝓕G = sin(s|ξ|)/|ξ|`:
/// `I_t = v (2π)^{-d} |S^{d-1}| M(p) t^p / p`, `p = α + 3 - d`.
fn wave_riesz(alpha: f64, d: usize, v: f64, t: f64) -> f64 {
    let p = alpha + 3.0 - d as f64;
    v * (2.0 * PI).powi(-(d as i32)) * sphere_area(d) * sin2_mellin(p) * t.powf(p) / p
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn heat_variance_matches_closed_form() {
    for &(d, alpha) in &[(1, 0.0), (1, 0.5), (1, -0.5), (2, 0.5), (2, 1.5), (3, 1.5), (3, 2.5)] {
        let g = GreenFunction::heat(d).unwrap();
        let h = if alpha == 0.0 {
            SpectralDensity::flat(d).unwrap()
        } else {
            SpectralDensity::riesz(alpha, d).unwrap()
        };
        let mu = TemperedMeasureMu::new(h, 1.5).unwrap();
        for &t in &[0.3, 1.0, 2.0] {
            let got = variance_it(&g, &mu, t).unwrap().value;
            let want = heat_riesz(alpha, d, 1.5, t);
            assert!(rel(got, want) < 5e-4, "heat d={d} α={alpha} t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn wave_variance_matches_closed_form() {
    for &(d, alpha) in &[(1, 0.0), (1, 0.5), (1, -0.5), (2, 0.5), (2, 1.2), (3, 1.5), (3, 2.5)] {
        let g = GreenFunction::wave(d).unwrap();
        let h = if alpha == 0.0 {
            SpectralDensity::flat(d).unwrap()
        } else {
            SpectralDensity::riesz(alpha, d).unwrap()
        };
        let mu = TemperedMeasureMu::new(h, 0.7).unwrap();
        for &t in &[0.5, 1.0, 3.0] {
            let got = variance_it(&g, &mu, t).unwrap().value;
            let want = wave_riesz(alpha, d, 0.7, t);
            assert!(rel(got, want) < 5e-4, "wave d={d} α={alpha} t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn flat_one_dimensional_values() {
    let mu = TemperedMeasureMu::new(SpectralDensity::flat(1).unwrap(), 1.0).unwrap();
    let heat = variance_it(&GreenFunction::heat(1).unwrap(), &mu, 1.0).unwrap().value;
    let wave = variance_it(&GreenFunction::wave(1).unwrap(), &mu, 1.0).unwrap().value;
    assert!(rel(heat, 0.564_189_583_547_756_3) < 1e-4, "{heat}");
    assert!(rel(wave, 0.25) < 1e-4, "{wave}");
}

#[test]
fn gaussian_moment_of_riesz_measure() {
    // ∫ e^{-|ξ|²} v (2π)^{-d} |ξ|^{-α} dξ = v (2π)^{-d} |S^{d-1}| Γ((d-α)/2) / 2
    for &(d, alpha) in &[(1, 0.5), (2, -1.0), (2, 1.0), (3, 2.0)] {
        let mu = TemperedMeasureMu::new(SpectralDensity::riesz(alpha, d).unwrap(), 2.0).unwrap();
        let f = |r: f64| (-r * r).exp();
        let got = mu_integral(&mu, Integrand::Radial(&f), Cutoff::Infinite, None).unwrap().value;
        let want = 2.0 * (2.0 * PI).powi(-(d as i32)) * sphere_area(d) * 0.5 * gamma((d as f64 - alpha) / 2.0);
        assert!(rel(got, want) < 1e-5, "d={d} α={alpha}: {got} vs {want}");
    }
}

#[test]
fn white_covariance_is_overlap_volume() {
    let grid = GridSpec::cube(2, 0.0, 2.0, 8, 1.0, 4).unwrap();
    let a = box_indicator(&grid, 0.0, 1.0, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let b = box_indicator(&grid, 0.5, 1.0, &[0.5, 0.25], &[2.0, 0.75]).unwrap();
    // A ∩ B = [0.5,1] × [0.5,1] × [0.25,0.75]
    let got = cov_white(&grid, &a, &b, 3.0).unwrap();
    assert!(rel(got, 3.0 * 0.5 * 0.5 * 0.5) < 1e-12, "{got}");
}

#[test]
fn two_point_characteristic_functional() {
    // Ψ(u) = λ (cos(u a) - 1) for mass λ/2 at ±a.
    let nu = JumpMeasure::two_point(2.0, 1.0).unwrap();
    let grid = GridSpec::cube(1, 0.0, 2.0, 4, 1.0, 2).unwrap();
    let b = box_indicator(&grid, 0.0, 1.0, &[0.0], &[1.0]).unwrap();
    for &u in &[-3.0, -0.5, 0.0, 1.0, PI] {
        let got = char_functional(&nu, &grid, &b, u).unwrap();
        let want = (2.0 * (f64::cos(u) - 1.0)).exp();
        assert!((got.re - want).abs() < 1e-12 && got.im.abs() < 1e-12, "u={u}: {got} vs {want}");
    }
}
