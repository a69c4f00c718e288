//! Physical model: masses, oscillator frequency, coupling profiles, and the
//! computable conditions on them.

use nalgebra::Matrix3;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{lit, wide, Real};
use crate::spectral::{dispersion_table, radius_table, GridSpec, Lattice, SpectralTransform};

/// Inner edge of the cutoff transition, as a fraction of the support radius.
pub const CUTOFF_INNER: f64 = 0.6;

/// Default A3 threshold relative to `max |ρ̂|`.
pub const A3_RELATIVE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileShape {
    /// `a·exp(−r²/2w²)` times a smooth cutoff that reaches zero at `R_ρ`.
    TruncatedGaussian { width: f64 },
    /// Discrete self-convolution of the ball indicator of radius `R_ρ/2`.
    /// Its transform is a square and has radial zeros.
    BsplineBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub amplitude: f64,
    pub support_radius: f64,
    pub shape: ProfileShape,
}

impl ProfileSpec {
    pub fn gaussian(amplitude: f64, width: f64, support_radius: f64) -> Self {
        Self {
            amplitude,
            support_radius,
            shape: ProfileShape::TruncatedGaussian { width },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub masses: Vec<f64>,
    pub omega: f64,
    pub profiles: Vec<ProfileSpec>,
    pub box_length: f64,
    pub grid_n: usize,
    pub dt: f64,
}

impl ModelConfig {
    /// Number of field components.
    pub fn d(&self) -> usize {
        self.masses.len()
    }

    /// `m_*`: zero when every mass vanishes, else the smallest nonzero mass.
    pub fn m_star(&self) -> f64 {
        self.masses
            .iter()
            .copied()
            .filter(|m| *m != 0.0)
            .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))))
            .unwrap_or(0.0)
    }

    /// Largest support radius over all profiles.
    pub fn max_support(&self) -> f64 {
        self.profiles
            .iter()
            .map(|p| p.support_radius)
            .fold(0.0, f64::max)
    }

    /// Every violated invariant, in field order.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.masses.is_empty() {
            errs.push("masses: at least one field component is required".to_string());
        }
        for (n, m) in self.masses.iter().enumerate() {
            if !(m.is_finite() && *m >= 0.0) {
                errs.push(format!("masses[{n}]: must be finite and >= 0, got {m}"));
            }
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            errs.push(format!("omega: must be finite and > 0, got {}", self.omega));
        }
        if self.profiles.len() != self.masses.len() {
            errs.push(format!(
                "profiles: expected one profile per component ({}), got {}",
                self.masses.len(),
                self.profiles.len()
            ));
        }
        if !(self.box_length.is_finite() && self.box_length > 0.0) {
            errs.push(format!("box_length: must be > 0, got {}", self.box_length));
        }
        if self.grid_n < 2 || self.grid_n % 2 != 0 {
            errs.push(format!("grid_n: must be even and >= 2, got {}", self.grid_n));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errs.push(format!("dt: must be > 0, got {}", self.dt));
        }
        for (n, p) in self.profiles.iter().enumerate() {
            if !p.amplitude.is_finite() {
                errs.push(format!("profiles[{n}].amplitude: must be finite"));
            }
            if !(p.support_radius > 0.0) {
                errs.push(format!("profiles[{n}].support_radius: must be > 0"));
            } else if p.support_radius >= self.box_length / 4.0 {
                errs.push(format!(
                    "profiles[{n}].support_radius: {} violates the support guard R_rho < L/4 = {}",
                    p.support_radius,
                    self.box_length / 4.0
                ));
            }
            if let ProfileShape::TruncatedGaussian { width } = p.shape {
                if !(width > 0.0) {
                    errs.push(format!("profiles[{n}].shape.width: must be > 0"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn grid<T: Real>(&self) -> Result<GridSpec<T>> {
        GridSpec::new(lit(self.box_length), self.grid_n)
    }
}

/// `C^∞` step: 1 on `[0, s0]`, 0 on `[1, ∞)`.
fn cutoff(s: f64) -> f64 {
    if s <= CUTOFF_INNER {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let u = (1.0 - s) / (1.0 - CUTOFF_INNER);
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let (a, b) = (f(u), f(1.0 - u));
    a / (a + b)
}

/// Continuum radial profile `ρ(r)` of a truncated Gaussian; `None` for
/// shapes that only exist on the lattice.
pub fn radial_profile(spec: &ProfileSpec, r: f64) -> Option<f64> {
    match spec.shape {
        ProfileShape::TruncatedGaussian { width } => Some(
            spec.amplitude * (-r * r / (2.0 * width * width)).exp() * cutoff(r / spec.support_radius),
        ),
        ProfileShape::BsplineBump => None,
    }
}

/// `a·exp(−|x−c|²/2w²)` times the profile cutoff at distance `radius` from
/// `c` (minimal image), sampled on the grid. Exactly zero beyond `radius`.
pub fn smooth_bump<T: Real>(
    grid: &GridSpec<T>,
    center: [f64; 3],
    amplitude: f64,
    width: f64,
    radius: f64,
) -> Vec<T> {
    let l = wide(grid.box_length());
    let wrap = |v: f64| v - l * (v / l).round();
    (0..grid.real_len())
        .map(|idx| {
            let x = grid.point(idx);
            let r2: f64 = (0..3).map(|a| wrap(wide(x[a]) - center[a]).powi(2)).sum();
            let r = r2.sqrt();
            if r >= radius {
                return T::zero();
            }
            lit(amplitude * (-r2 / (2.0 * width * width)).exp() * cutoff(r / radius))
        })
        .collect()
}

/// A coupling profile sampled on the grid, with its transform.
#[derive(Debug, Clone)]
pub struct Profile<T> {
    pub spec: ProfileSpec,
    /// `ρ(x)` in real space (FFT order).
    pub values: Vec<T>,
    /// `ρ̂(k)` on the half spectrum.
    pub hat: Vec<Complex<T>>,
}

pub fn build_profile<T: Real>(spec: &ProfileSpec, grid: GridSpec<T>) -> Result<Profile<T>> {
    build_profile_with(spec, &SpectralTransform::new(grid))
}

pub fn build_profile_with<T: Real>(
    spec: &ProfileSpec,
    transform: &SpectralTransform<T>,
) -> Result<Profile<T>> {
    let grid = *transform.grid();
    let limit = wide(grid.box_length()) / 4.0;
    if spec.support_radius >= limit {
        return Err(Error::SupportTooLarge {
            radius: spec.support_radius,
            limit,
        });
    }
    if !(spec.support_radius > 0.0) {
        return Err(Error::InvalidParameter {
            name: "support_radius",
            reason: format!("must be > 0, got {}", spec.support_radius),
        });
    }
    let radii = radius_table(&grid);
    let r_cut: T = lit(spec.support_radius);
    let mut values: Vec<T> = match spec.shape {
        ProfileShape::TruncatedGaussian { width } => {
            if !(width > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "width",
                    reason: format!("must be > 0, got {width}"),
                });
            }
            radii
                .iter()
                .map(|r| lit(radial_profile(spec, wide(*r)).unwrap()))
                .collect()
        }
        ProfileShape::BsplineBump => {
            let half: T = r_cut * lit(0.5);
            let ball: Vec<T> = radii
                .iter()
                .map(|r| if *r < half { T::one() } else { T::zero() })
                .collect();
            let mut b = transform.forward(&ball)?;
            for c in b.iter_mut() {
                *c = *c * *c;
            }
            let conv = transform.inverse(&b)?;
            let peak = conv[0];
            let scale = if peak > T::zero() {
                lit::<T>(spec.amplitude) / peak
            } else {
                T::zero()
            };
            conv.iter().map(|v| *v * scale).collect()
        }
    };
    for (v, r) in values.iter_mut().zip(&radii) {
        if *r >= r_cut {
            *v = T::zero();
        }
    }
    // Exact evenness, independent of roundoff in the transforms above.
    let sym: Vec<T> = (0..values.len())
        .map(|i| (values[i] + values[grid.mirror_index(i)]) * lit(0.5))
        .collect();
    values = sym;
    let hat = transform.forward(&values)?;
    Ok(Profile {
        spec: *spec,
        values,
        hat,
    })
}

/// A model discretized on its grid, with the per-mode tables used by the
/// dynamics and the resolvent.
#[derive(Debug, Clone)]
pub struct DiscreteModel<T: Real> {
    pub config: ModelConfig,
    pub grid: GridSpec<T>,
    pub lattice: Lattice<T>,
    pub transform: SpectralTransform<T>,
    pub masses: Vec<T>,
    pub omega: T,
    pub profiles: Vec<Profile<T>>,
    /// `ω_n(k)` per component.
    pub frequencies: Vec<Vec<T>>,
    /// `k'_r ρ̂_n(k)` (real), so that `∇_r ρ̂_n = i·grad[n][r]`.
    pub grad: Vec<[Vec<T>; 3]>,
}

impl<T: Real> DiscreteModel<T> {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        if let Err(errs) = config.validate() {
            return Err(Error::InvalidParameter {
                name: "model",
                reason: errs.join("; "),
            });
        }
        let grid = config.grid::<T>()?;
        let lattice = Lattice::new(grid);
        let transform = SpectralTransform::new(grid);
        let profiles = config
            .profiles
            .iter()
            .map(|p| build_profile_with(p, &transform))
            .collect::<Result<Vec<_>>>()?;
        let masses: Vec<T> = config.masses.iter().map(|m| lit(*m)).collect();
        let frequencies = masses
            .iter()
            .map(|m| dispersion_table(&lattice, *m))
            .collect();
        let grad = profiles
            .iter()
            .map(|p| {
                let g = |axis: usize| -> Vec<T> {
                    p.hat
                        .iter()
                        .zip(lattice.kd(axis))
                        .map(|(c, k)| c.re * *k)
                        .collect()
                };
                [g(0), g(1), g(2)]
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            grid,
            lattice,
            transform,
            masses,
            omega: lit(config.omega),
            profiles,
            frequencies,
            grad,
        })
    }

    pub fn d(&self) -> usize {
        self.masses.len()
    }

    /// Largest `R_ρ` over the components.
    pub fn support(&self) -> f64 {
        self.config.max_support()
    }

    /// Same model with every profile amplitude multiplied by `factor`.
    pub fn scaled_coupling(config: &ModelConfig, factor: f64) -> ModelConfig {
        let mut c = config.clone();
        for p in c.profiles.iter_mut() {
            p.amplitude *= factor;
        }
        c
    }
}

/// `Σ_n (2π)⁻³ ∫ k_i k_j |ρ̂_n|² / (k² + m_n² − s²) dk` as a lattice sum.
/// The `k = 0` mode carries no weight and is skipped.
pub fn coupling_matrix<T: Real>(model: &DiscreteModel<T>, shift: T) -> Result<[[T; 3]; 3]> {
    let lat = &model.lattice;
    let mut k = [[T::zero(); 3]; 3];
    for (n, g) in model.grad.iter().enumerate() {
        let m2 = model.masses[n] * model.masses[n];
        for idx in 0..lat.len() {
            if lat.shell()[idx] == 0 {
                continue;
            }
            let gi = [g[0][idx], g[1][idx], g[2][idx]];
            if gi.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let den = lat.k2()[idx] + m2 - shift;
            if !(den > T::zero()) {
                return Err(Error::SingularDenominator {
                    component: n,
                    mode: model.grid.mode(idx),
                    value: wide(den),
                });
            }
            let w = lat.weight()[idx] / den;
            for i in 0..3 {
                for j in i..3 {
                    k[i][j] = k[i][j] + w * gi[i] * gi[j];
                }
            }
        }
    }
    let vol = model.grid.volume();
    for i in 0..3 {
        for j in i..3 {
            k[i][j] = k[i][j] / vol;
            k[j][i] = k[i][j];
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    #[serde(rename = "K")]
    pub k: [[f64; 3]; 3],
    #[serde(rename = "K0")]
    pub k0: [[f64; 3]; 3],
    pub m_star: f64,
    #[serde(rename = "eig_A1")]
    pub eig_a1: [f64; 3],
    #[serde(rename = "eig_A1p")]
    pub eig_a1p: [f64; 3],
    pub a3_min_abs: f64,
    pub a3_threshold: f64,
    pub a1_holds: bool,
    pub a1p_holds: bool,
    pub a3_holds: bool,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.a1_holds && self.a1p_holds && self.a3_holds
    }
}

/// Ascending eigenvalues of a symmetric 3×3 matrix.
pub fn symmetric_eigenvalues(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let mat = Matrix3::from_fn(|i, j| m[i][j]);
    let mut e: Vec<f64> = mat.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    [e[0], e[1], e[2]]
}

/// Evaluates A1, A1' and A3 with the default A3 threshold.
pub fn check_conditions<T: Real>(model: &DiscreteModel<T>) -> ConditionReport {
    check_conditions_with(model, A3_RELATIVE_THRESHOLD)
}

/// A3 passes when `min |ρ̂_n(k)|` over `k ≠ 0` exceeds `relative·max |ρ̂|`.
///
/// When massless and massive components coexist, the A1 integrand has a
/// zero denominator on the sphere `|k| = m_*`; `K` is then reported as NaN
/// and A1 as failing.
pub fn check_conditions_with<T: Real>(model: &DiscreteModel<T>, relative: f64) -> ConditionReport {
    let to_f64 = |m: [[T; 3]; 3]| m.map(|row| row.map(wide));
    let m_star = model.config.m_star();
    let omega = model.config.omega;
    let k0 = coupling_matrix(model, T::zero())
        .map(to_f64)
        .unwrap_or([[f64::NAN; 3]; 3]);
    let k = if m_star == 0.0 {
        k0
    } else {
        coupling_matrix(model, lit(m_star * m_star))
            .map(to_f64)
            .unwrap_or([[f64::NAN; 3]; 3])
    };
    let shifted = |m: &[[f64; 3]; 3], diag: f64| -> [f64; 3] {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return [f64::NAN; 3];
        }
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = -m[i][j] + if i == j { diag } else { 0.0 };
            }
        }
        symmetric_eigenvalues(&a)
    };
    let eig_a1 = shifted(&k, omega * omega - m_star * m_star);
    let eig_a1p = shifted(&k0, omega * omega);
    let mut max_abs = 0.0f64;
    let mut min_abs = f64::INFINITY;
    for p in &model.profiles {
        for (idx, c) in p.hat.iter().enumerate() {
            let a = wide(c.norm());
            max_abs = max_abs.max(a);
            if model.lattice.shell()[idx] != 0 {
                min_abs = min_abs.min(a);
            }
        }
    }
    let threshold = relative * max_abs;
    ConditionReport {
        k,
        k0,
        m_star,
        eig_a1,
        eig_a1p,
        a3_min_abs: min_abs,
        a3_threshold: threshold,
        a1_holds: eig_a1.iter().all(|e| *e > 0.0),
        a1p_holds: eig_a1p.iter().all(|e| *e > 0.0),
        a3_holds: min_abs > threshold,
    }
}
