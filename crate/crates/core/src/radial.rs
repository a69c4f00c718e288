//! Continuum oracles for radial coupling profiles: the radial Fourier
//! transform and 1-D quadratures of the lattice sums in `model` and
//! `resolvent`, after the angular integration is done analytically.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{radial_profile, ProfileShape, ProfileSpec};
use crate::quad::{integrate, integrate_pieces};

fn gaussian_width(spec: &ProfileSpec) -> Result<f64> {
    match spec.shape {
        ProfileShape::TruncatedGaussian { width } => Ok(width),
        ProfileShape::BsplineBump => Err(Error::Unsupported(
            "radial oracle needs a continuum profile (truncated-gaussian)".into(),
        )),
    }
}

/// `ρ̂(k) = 4π ∫₀^R r² ρ(r) sin(kr)/(kr) dr`.
pub fn radial_transform(spec: &ProfileSpec, k: f64) -> Result<f64> {
    gaussian_width(spec)?;
    let f = |r: f64| {
        let kr = k * r;
        let sinc = if kr.abs() < 1e-8 { 1.0 - kr * kr / 6.0 } else { kr.sin() / kr };
        r * r * radial_profile(spec, r).unwrap() * sinc
    };
    let scale = spec.amplitude.abs() * spec.support_radius.powi(3);
    let q = integrate(f, 0.0, spec.support_radius, 1e-15 * scale, 1e-13);
    Ok(4.0 * PI * q.value)
}

/// Upper wavenumber beyond which `|ρ̂|²` is negligible.
fn k_max(spec: &ProfileSpec) -> Result<f64> {
    Ok(12.0 / gaussian_width(spec)?)
}

/// Continuum value of the isotropic coupling constant
/// `κ = (2π)⁻³ ∫ (k²/3)|ρ̂|²/(k² + m² − s²) dk`.
pub fn coupling_constant(spec: &ProfileSpec, mass: f64, shift: f64) -> Result<f64> {
    let top = k_max(spec)?;
    let f = |k: f64| {
        let rho = radial_transform(spec, k).unwrap();
        let den = k * k + mass * mass - shift;
        if den == 0.0 {
            return 0.0;
        }
        k.powi(4) * rho * rho / den
    };
    let q = integrate(f, 0.0, top, 1e-14, 1e-11);
    Ok(q.value * 4.0 * PI / 3.0 / (2.0 * PI).powi(3))
}

/// Continuum `h(λ)` with `H(λ) = h(λ)·I` for a single radial component.
/// Breakpoints bracket the resonance `k² = −m² − Re λ²` when it is real.
pub fn h_of_lambda(spec: &ProfileSpec, mass: f64, lambda: Complex64) -> Result<Complex64> {
    let top = k_max(spec)?;
    let l2 = lambda * lambda;
    let mut breaks = vec![0.0, top];
    let res2 = -(mass * mass + l2.re);
    if res2 > 0.0 {
        let kc = res2.sqrt();
        let width = (l2.im.abs() / (2.0 * kc)).max(1e-12);
        for s in [-30.0, -3.0, -0.3, 0.0, 0.3, 3.0, 30.0] {
            let b = kc + s * width;
            if b > 0.0 && b < top {
                breaks.push(b);
            }
        }
        breaks.sort_by(f64::total_cmp);
    }
    let part = |im: bool| {
        let f = |k: f64| {
            let rho = radial_transform(spec, k).unwrap();
            let v = k.powi(4) * rho * rho / (Complex64::new(k * k + mass * mass, 0.0) + l2);
            if im {
                v.im
            } else {
                v.re
            }
        };
        integrate_pieces(f, &breaks, 1e-14, 1e-11).value
    };
    let c = 4.0 * PI / 3.0 / (2.0 * PI).powi(3);
    Ok(Complex64::new(part(false), part(true)) * c)
}

/// `Im h(ix + 0)` by linear extrapolation of `Im h(ix + ε)` in `ε` from the
/// two given offsets.
pub fn im_h_boundary(spec: &ProfileSpec, mass: f64, x: f64, eps: [f64; 2]) -> Result<f64> {
    let a = h_of_lambda(spec, mass, Complex64::new(eps[0], x))?.im;
    let b = h_of_lambda(spec, mass, Complex64::new(eps[1], x))?.im;
    Ok(b - (a - b) * eps[1] / (eps[0] - eps[1]))
}

/// Closed form of `Im h(ix + 0)` for a radial component:
/// `−sign(x)·π·(2π)⁻³·(4π/3)·κ³|ρ̂(κ)|²/2` with `κ² = x² − m²`.
pub fn im_h_plemelj(spec: &ProfileSpec, mass: f64, x: f64) -> Result<f64> {
    if x.abs() <= mass {
        gaussian_width(spec)?;
        return Ok(0.0);
    }
    let kappa = (x * x - mass * mass).sqrt();
    let rho = radial_transform(spec, kappa)?;
    Ok(-x.signum() * PI * (4.0 * PI / 3.0) * kappa.powi(3) * rho * rho / 2.0 / (2.0 * PI).powi(3))
}
