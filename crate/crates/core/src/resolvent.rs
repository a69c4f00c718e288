//! Laplace-domain side of the particle dynamics: `H(λ)`, `D(λ)`,
//! `Ñ(λ) = D(λ)⁻¹`, the kernel `N(t)` by a Bromwich line integral, Plemelj
//! boundary values of `Im H(ix + 0)` and decay fits.
//!
//! Everything here runs in `f64`; the lattice tables are widened from the
//! model's working precision once.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DiscreteModel;
use crate::real::{wide, Real};
use crate::spectral::fourier_at;

pub type Mat3c = Matrix3<Complex64>;
pub type Mat3 = Matrix3<f64>;

/// Lattice sums for `H(λ)` grouped by denominator: every `(component,
/// |j|²)` shell carries `L⁻³ Σ w·(k'ρ̂)(k'ρ̂)ᵀ` and its `k² + m_n²`.
#[derive(Debug, Clone)]
pub struct ShellTable {
    pub omega: f64,
    shells: Vec<Shell>,
    /// `|k² + m² + λ²|` below this is reported as singular.
    pub floor: f64,
}

#[derive(Debug, Clone)]
struct Shell {
    component: usize,
    mode: [i64; 3],
    base: f64,
    tensor: Mat3,
}

impl ShellTable {
    pub fn new<T: Real>(model: &DiscreteModel<T>) -> Self {
        let lat = &model.lattice;
        let vol = wide(model.grid.volume());
        let mut shells: Vec<Shell> = Vec::new();
        for (n, g) in model.grad.iter().enumerate() {
            let m2 = wide(model.masses[n]).powi(2);
            let max_shell = lat.shell().iter().copied().max().unwrap_or(0) as usize;
            let mut table: Vec<Option<Shell>> = vec![None; max_shell + 1];
            for idx in 0..lat.len() {
                let s = lat.shell()[idx] as usize;
                if s == 0 {
                    continue;
                }
                let gi = [wide(g[0][idx]), wide(g[1][idx]), wide(g[2][idx])];
                if gi.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let w = wide(lat.weight()[idx]) / vol;
                let entry = table[s].get_or_insert_with(|| Shell {
                    component: n,
                    mode: model.grid.mode(idx),
                    base: wide(lat.k2()[idx]) + m2,
                    tensor: Mat3::zeros(),
                });
                for i in 0..3 {
                    for j in 0..3 {
                        entry.tensor[(i, j)] += w * gi[i] * gi[j];
                    }
                }
            }
            shells.extend(table.into_iter().flatten());
        }
        Self {
            omega: wide(model.omega),
            shells,
            floor: 1e-12,
        }
    }

    /// `lim λ²H(λ) = Σ tensor` over all shells.
    pub fn h_moment(&self) -> Mat3 {
        self.shells.iter().fold(Mat3::zeros(), |acc, s| acc + s.tensor)
    }

    pub fn is_decoupled(&self) -> bool {
        self.shells.is_empty()
    }

    /// `H_ij(λ) = Σ_n (2π)⁻³ ∫ k_i k_j |ρ̂_n|² / (k² + m_n² + λ²) dk` on the lattice.
    pub fn h(&self, lambda: Complex64) -> Result<Mat3c> {
        let l2 = lambda * lambda;
        let mut out = Mat3c::zeros();
        for s in &self.shells {
            let den = l2 + s.base;
            if den.norm() <= self.floor {
                return Err(Error::SingularDenominator {
                    component: s.component,
                    mode: s.mode,
                    value: den.norm(),
                });
            }
            let f = den.inv();
            for i in 0..3 {
                for j in 0..3 {
                    out[(i, j)] += f * s.tensor[(i, j)];
                }
            }
        }
        Ok(out)
    }

    /// `D(λ) = (λ² + ω²)I − H(λ)`.
    pub fn d(&self, lambda: Complex64) -> Result<Mat3c> {
        let diag = lambda * lambda + self.omega * self.omega;
        Ok(Mat3c::identity() * diag - self.h(lambda)?)
    }

    /// `Ñ(λ) = D(λ)⁻¹`; fails when the condition number exceeds 1e12.
    pub fn n_tilde(&self, lambda: Complex64) -> Result<Mat3c> {
        invert(&self.d(lambda)?)
    }
}

fn invert(d: &Mat3c) -> Result<Mat3c> {
    let sv = d.svd(false, false).singular_values;
    let (hi, lo) = (sv.max(), sv.min());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < 1e12) {
        return Err(Error::SingularMatrix { condition });
    }
    d.try_inverse().ok_or(Error::SingularMatrix { condition })
}

/// Sampled `H`, `D`, `Ñ` along a contour.
#[derive(Debug, Clone)]
pub struct ResolventTable {
    pub lambda_samples: Vec<Complex64>,
    pub h_vals: Vec<Mat3c>,
    pub d_vals: Vec<Mat3c>,
    pub ntilde_vals: Vec<Mat3c>,
    pub contour: ContourParams,
}

impl ResolventTable {
    /// Samples the Bromwich line `σ + i·j·Δx`, `|j·Δx| ≤ X_max`.
    pub fn on_contour(table: &ShellTable, contour: ContourParams) -> Result<Self> {
        contour.validate()?;
        let count = contour.samples();
        let lambdas: Vec<Complex64> = (-(count as i64)..=count as i64)
            .map(|j| Complex64::new(contour.sigma, j as f64 * contour.dx))
            .collect();
        let rows: Vec<(Mat3c, Mat3c, Mat3c)> = lambdas
            .par_iter()
            .map(|l| {
                let h = table.h(*l)?;
                let d = Mat3c::identity() * (l * l + table.omega * table.omega) - h;
                Ok((h, d, invert(&d)?))
            })
            .collect::<Result<_>>()?;
        let mut h_vals = Vec::with_capacity(rows.len());
        let mut d_vals = Vec::with_capacity(rows.len());
        let mut ntilde_vals = Vec::with_capacity(rows.len());
        for (h, d, n) in rows {
            h_vals.push(h);
            d_vals.push(d);
            ntilde_vals.push(n);
        }
        Ok(Self {
            lambda_samples: lambdas,
            h_vals,
            d_vals,
            ntilde_vals,
            contour,
        })
    }
}

/// Bromwich line `Re λ = σ`, trapezoidal spacing `Δx`, truncation `X_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourParams {
    pub sigma: f64,
    pub dx: f64,
    pub x_max: f64,
    /// Shift `s` of the subtracted large-`λ` asymptote.
    pub shift: f64,
    /// Bound on the estimated truncation error of `N(t)`.
    pub tail_tolerance: f64,
}

impl Default for ContourParams {
    /// `Δx = 2πσ/36` puts the aliased copies of `N` at relative size `e^{−36}`.
    fn default() -> Self {
        let sigma = 0.05;
        Self {
            sigma,
            dx: 2.0 * PI * sigma / 36.0,
            x_max: 100.0,
            shift: 1.0,
            tail_tolerance: 1e-7,
        }
    }
}

impl ContourParams {
    fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter {
            name,
            reason: reason.into(),
        });
        if !(self.sigma > 0.0) {
            return bad("sigma", "must be positive");
        }
        if !(self.dx > 0.0) || !(self.x_max > self.dx) {
            return bad("dx", "need 0 < dx < x_max");
        }
        if !(self.shift > 0.0) {
            return bad("shift", "must be positive");
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        (self.x_max / self.dx).floor() as usize
    }

    /// Period of the trapezoidal aliasing, `2π/Δx`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.dx
    }
}

/// `N(t)` and `Ṅ(t)` on a time grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelN {
    pub t_samples: Vec<f64>,
    pub n_vals: Vec<[[f64; 3]; 3]>,
    pub ndot_vals: Vec<[[f64; 3]; 3]>,
    /// Largest imaginary part met before it was discarded, relative to the
    /// sum of moduli of the contour terms (floored at one).
    pub imag_residue: f64,
    /// Estimated truncation error from the contour tail.
    pub tail_estimate: f64,
    pub contour: ContourParams,
}

impl KernelN {
    /// Linear interpolation of `N(t)`; `t` must lie within the samples.
    pub fn n_at(&self, t: f64) -> Option<[[f64; 3]; 3]> {
        interp(&self.t_samples, &self.n_vals, t)
    }

    pub fn ndot_at(&self, t: f64) -> Option<[[f64; 3]; 3]> {
        interp(&self.t_samples, &self.ndot_vals, t)
    }
}

fn interp(ts: &[f64], vals: &[[[f64; 3]; 3]], t: f64) -> Option<[[f64; 3]; 3]> {
    let first = *ts.first()?;
    let last = *ts.last()?;
    if t < first || t > last {
        return None;
    }
    let j = ts.partition_point(|s| *s <= t).clamp(1, ts.len() - 1);
    let (a, b) = (ts[j - 1], ts[j]);
    let u = if b > a { (t - a) / (b - a) } else { 0.0 };
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            out[i][k] = (1.0 - u) * vals[j - 1][i][k] + u * vals[j][i][k];
        }
    }
    Some(out)
}

/// The subtracted large-`λ` asymptote
/// `A(λ) = a(λ)I + C/(λ²+s²)³` with `a = 1/(λ²+s²) + (s²−ω²)/(λ²+s²)²` and
/// `C = (ω²−s²)²I + lim λ²H(λ)`, which matches `Ñ` through `λ⁻⁶`.
struct Asymptote {
    omega: f64,
    s: f64,
    cubic: Mat3c,
}

impl Asymptote {
    fn new(table: &ShellTable, s: f64) -> Self {
        let omega = table.omega;
        let c = (omega * omega - s * s).powi(2);
        let cubic = (Mat3::identity() * c + table.h_moment()).map(|v| Complex64::new(v, 0.0));
        Self { omega, s, cubic }
    }

    fn hat(&self, lambda: Complex64) -> Mat3c {
        let s = self.s;
        let a = (lambda * lambda + s * s).inv();
        Mat3c::identity() * (a + a * a * (s * s - self.omega * self.omega)) + self.cubic * (a * a * a)
    }

    /// `(L⁻¹a, L⁻¹[λa], L⁻¹(λ²+s²)⁻³, L⁻¹[λ(λ²+s²)⁻³])` at `t`.
    fn inverse(&self, t: f64) -> [f64; 4] {
        let s = self.s;
        let c = s * s - self.omega * self.omega;
        let (sn, cs) = (s * t).sin_cos();
        let st = s * t;
        [
            sn / s + c * (sn - st * cs) / (2.0 * s.powi(3)),
            cs + c * t * sn / (2.0 * s),
            ((3.0 - st * st) * sn - 3.0 * st * cs) / (8.0 * s.powi(5)),
            t * (sn - st * cs) / (8.0 * s.powi(3)),
        ]
    }
}

/// `N(t) = (2πi)⁻¹ ∫ e^{λt} Ñ(λ) dλ` along `Re λ = σ`.
///
/// The asymptote `A(λ)` is subtracted and inverted in closed form;
/// the remainder is summed by the trapezoidal rule over `[−X_max, X_max]`
/// with both half-lines evaluated independently, so the imaginary part of
/// the sum measures the conjugate-symmetry defect.
pub fn inverse_laplace_n(table: &ShellTable, t_grid: &[f64], contour: ContourParams) -> Result<KernelN> {
    contour.validate()?;
    if let Some(t) = t_grid.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_grid",
            reason: format!("times must be finite and nonnegative, got {t}"),
        });
    }
    let asym = Asymptote::new(table, contour.shift);
    let count = contour.samples() as i64;
    let remainder = |x: f64| -> Result<Mat3c> {
        let l = Complex64::new(contour.sigma, x);
        Ok(table.n_tilde(l)? - asym.hat(l))
    };
    let xs: Vec<f64> = (-count..=count).map(|j| j as f64 * contour.dx).collect();
    let rem: Vec<Mat3c> = xs.par_iter().map(|x| remainder(*x)).collect::<Result<_>>()?;

    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let x_end = count as f64 * contour.dx;
    let tail = tail_estimate(&rem, count as usize, contour.dx) * (contour.sigma * t_max).exp() / PI;
    if tail > contour.tail_tolerance {
        return Err(Error::TailTolerance {
            tail,
            tolerance: contour.tail_tolerance,
            x_max: x_end,
        });
    }

    // Sum of moduli: the scale against which the imaginary residue is roundoff.
    let magnitude: f64 = xs
        .iter()
        .zip(&rem)
        .map(|(x, r)| r.iter().map(|c| c.norm()).fold(0.0, f64::max) * (1.0 + contour.sigma.hypot(*x)))
        .sum();
    let rows: Vec<([[f64; 3]; 3], [[f64; 3]; 3], f64)> = t_grid
        .par_iter()
        .map(|t| {
            let step = Complex64::new(0.0, contour.dx * t).exp();
            let mut phase = Complex64::new(0.0, xs[0] * t).exp();
            let mut acc = Mat3c::zeros();
            let mut accd = Mat3c::zeros();
            for (x, r) in xs.iter().zip(&rem) {
                let lam = Complex64::new(contour.sigma, *x);
                acc += r * phase;
                accd += r * (phase * lam);
                phase *= step;
            }
            let scale = (contour.sigma * t).exp() * contour.dx / (2.0 * PI);
            let [a, ad, b, bd] = asym.inverse(*t);
            let mut n = [[0.0; 3]; 3];
            let mut nd = [[0.0; 3]; 3];
            let mut imag = 0.0f64;
            for i in 0..3 {
                for j in 0..3 {
                    let eye = if i == j { 1.0 } else { 0.0 };
                    let v = acc[(i, j)] * scale;
                    let vd = accd[(i, j)] * scale;
                    let cubic = asym.cubic[(i, j)].re;
                    n[i][j] = v.re + eye * a + cubic * b;
                    nd[i][j] = vd.re + eye * ad + cubic * bd;
                    imag = imag.max(v.im.abs().max(vd.im.abs()) / (magnitude * scale).max(1.0));
                }
            }
            (n, nd, imag)
        })
        .collect();
    let imag_residue = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    if imag_residue > 1e-8 {
        return Err(Error::ImaginaryResidue { residue: imag_residue });
    }
    Ok(KernelN {
        t_samples: t_grid.to_vec(),
        n_vals: rows.iter().map(|r| r.0).collect(),
        ndot_vals: rows.iter().map(|r| r.1).collect(),
        imag_residue,
        tail_estimate: tail,
        contour,
    })
}

/// `∫_X^∞ (|R| + |λR|) dx` from the local power-law decay of the
/// remainder between `X/2` and `X`, worst of both half-lines.
fn tail_estimate(rem: &[Mat3c], count: usize, dx: f64) -> f64 {
    let mid = count;
    let side = |end: usize, half: usize| {
        let (a, b) = (rem[end].norm(), rem[half].norm());
        let x = (end as f64 - mid as f64).abs() * dx;
        // Cancellation noise of the subtraction, relative to |Ñ| ~ x⁻².
        if a <= 1e-14 / (x * x) {
            return x * x * a;
        }
        let p = (b / a).ln() / 2f64.ln();
        if !(p > 2.0) {
            return f64::INFINITY;
        }
        // ∫_X^∞ (x/X)^{−p}|R| dx = X|R|/(p−1); with |λ| ≈ x one more power.
        x * a / (p - 1.0) + x * x * a / (p - 2.0)
    };
    let lo = side(0, mid / 2);
    let hi = side(rem.len() - 1, mid + mid / 2);
    lo.max(hi)
}

/// Uniform grid `0, dt, …, t_end`.
pub fn time_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt).round() as usize;
    (0..=n).map(|j| j as f64 * dt).collect()
}

/// Fixed angular quadrature on the unit sphere with weights summing to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SphereRule {
    /// 6 octahedron vertices, exact to degree 3.
    Lebedev6,
    /// Octahedron and cube vertices, exact to degree 5.
    Lebedev14,
    /// Octahedron, cube and edge midpoints, exact to degree 7.
    Lebedev26,
    /// Gauss–Legendre in `cos θ` times a uniform rule in `φ`.
    Product { n_theta: usize, n_phi: usize },
}

impl Default for SphereRule {
    fn default() -> Self {
        SphereRule::Lebedev26
    }
}

impl SphereRule {
    pub fn nodes(&self) -> Vec<([f64; 3], f64)> {
        let mut out = Vec::new();
        let octa = |w: f64, out: &mut Vec<([f64; 3], f64)>| {
            for a in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut p = [0.0; 3];
                    p[a] = s;
                    out.push((p, w));
                }
            }
        };
        let cube = |w: f64, out: &mut Vec<([f64; 3], f64)>| {
            let c = 1.0 / 3f64.sqrt();
            for sx in [-c, c] {
                for sy in [-c, c] {
                    for sz in [-c, c] {
                        out.push(([sx, sy, sz], w));
                    }
                }
            }
        };
        match *self {
            SphereRule::Lebedev6 => octa(1.0 / 6.0, &mut out),
            SphereRule::Lebedev14 => {
                octa(1.0 / 15.0, &mut out);
                cube(3.0 / 40.0, &mut out);
            }
            SphereRule::Lebedev26 => {
                octa(1.0 / 21.0, &mut out);
                cube(9.0 / 280.0, &mut out);
                let c = 1.0 / 2f64.sqrt();
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    for sa in [-c, c] {
                        for sb in [-c, c] {
                            let mut p = [0.0; 3];
                            p[a] = sa;
                            p[b] = sb;
                            out.push((p, 4.0 / 105.0));
                        }
                    }
                }
            }
            SphereRule::Product { n_theta, n_phi } => {
                let (xs, ws) = gauss_legendre(n_theta.max(1));
                let n_phi = n_phi.max(1);
                for (x, w) in xs.iter().zip(&ws) {
                    let st = (1.0 - x * x).max(0.0).sqrt();
                    for k in 0..n_phi {
                        let ph = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
                        out.push(([st * ph.cos(), st * ph.sin(), *x], w / (2.0 * n_phi as f64)));
                    }
                }
            }
        }
        out
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Half-width of the excluded band around each branch point `|x| = m_n`.
pub const BRANCH_GUARD: f64 = 1e-3;

/// `v·Im H(ix + 0)v = −sign(x)·π·Σ_{m_n < |x|} (2π)⁻³ ∫_{|k| = κ_n} (v·k)²|ρ̂_n(k)|²/(2|k|) dS`
/// with `κ_n = √(x² − m_n²)`. `ρ̂_n` is evaluated off the lattice by a
/// direct sum over the sampled profile.
pub fn plemelj_im_h<T: Real>(model: &DiscreteModel<T>, x: f64, v: [f64; 3], rule: SphereRule) -> Result<f64> {
    let mut total = 0.0;
    for (n, profile) in model.profiles.iter().enumerate() {
        let m = wide(model.masses[n]);
        if (x.abs() - m).abs() < BRANCH_GUARD {
            return Err(Error::BranchPoint {
                x,
                mass: m,
                guard: BRANCH_GUARD,
            });
        }
        if x.abs() <= m {
            continue;
        }
        let kappa = (x * x - m * m).sqrt();
        let mut sphere = 0.0;
        for (dir, w) in rule.nodes() {
            let k = dir.map(|c| c * kappa);
            let kt: [T; 3] = k.map(crate::real::lit);
            let rho = fourier_at(&model.grid, &profile.values, kt);
            let rho2 = wide(rho.norm_sqr());
            let vk = v[0] * k[0] + v[1] * k[1] + v[2] * k[2];
            sphere += w * vk * vk * rho2 / (2.0 * kappa);
        }
        // ∫ dS = 4π κ² · (mean over directions)
        total += 4.0 * PI * kappa * kappa * sphere;
    }
    Ok(-x.signum() * PI * total / (2.0 * PI).powi(3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayKind {
    /// `v ≈ C e^{−rate·t}`, fitted on a semilog scale.
    Exponential,
    /// `v ≈ C (1 + t)^{slope}`, fitted on a log-log scale.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub kind: DecayKind,
    /// Decay rate (exponential, positive when decaying) or log-log slope.
    pub rate_or_slope: f64,
    pub fit_window: (f64, f64),
    /// Root-mean-square residual of the log values.
    pub residual: f64,
    /// Range `max − min` of the log values in the window.
    pub spread: f64,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Least-squares line through `(log(1+t) or t, log v)` for samples with
/// `t` in the window.
pub fn fit_decay(series: &[(f64, f64)], kind: DecayKind, window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::EmptyWindow {
            lo: window.0,
            hi: window.1,
            found: pts.len(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositiveValue { time: *t, value: *v });
    }
    let xy: Vec<(f64, f64)> = pts
        .iter()
        .map(|(t, v)| {
            let x = match kind {
                DecayKind::Exponential => *t,
                DecayKind::Power => (1.0 + t).ln(),
            };
            (x, v.ln())
        })
        .collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let residual = (xy
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let lo = xy.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = xy.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayFit {
        kind,
        rate_or_slope: match kind {
            DecayKind::Exponential => -slope,
            DecayKind::Power => slope,
        },
        fit_window: window,
        residual,
        spread: hi - lo,
        samples: pts.len(),
    })
}

/// Frobenius norm of a real 3×3 matrix.
pub fn frobenius(m: &[[f64; 3]; 3]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}
