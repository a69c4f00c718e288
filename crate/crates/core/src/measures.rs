//! Translation-invariant Gaussian initial measures, the flow-averaged limit
//! covariance, exact second moments by adjoint pullback and Monte Carlo
//! ensembles.
//!
//! A field covariance is stored as its spectral density: for every stored
//! mode a Hermitian `2d × 2d` matrix `M(k)` over the slots `(φ_1..φ_d,
//! π_1..π_d)` with `E f̂_a(k) conj f̂_b(k) = L³ M_ab(k)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::{Complex, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    local_energy_norms, pairing, pullback_at, step_plan, FullState, Propagator, SpectralState,
    TestFunctional,
};
use crate::error::{Error, Result};
use crate::model::{smooth_bump, DiscreteModel};
use crate::real::{lit, wide, Real};
use crate::spectral::fundamental_multiplier;

/// Smooth even bump `χ`; the base correlation is `g = χ * χ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub amplitude: f64,
    pub width: f64,
    pub radius: f64,
}

/// Multiplier applied to `ĝ` in one covariance entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `g` itself.
    #[default]
    Base,
    /// `(−Δ + m_n²)g`, with `m_n` the mass of the entry's first component.
    Helmholtz,
    /// `∂_axis g`. Odd, so it can only couple different slots.
    Gradient(usize),
}

/// `q^{ij}_{nn'}(z) += coefficient·(kernel g)(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub i: usize,
    pub j: usize,
    pub n: usize,
    pub n_prime: usize,
    pub coefficient: f64,
    #[serde(default)]
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub chi: BumpSpec,
    /// Entries not given are zero; an entry without its transposed partner
    /// gets the Hermitian completion.
    #[serde(default)]
    pub blocks: Vec<BlockEntry>,
    /// Covariance of `(q⁰, p⁰)`.
    #[serde(default)]
    pub particle: [[f64; 6]; 6],
}

impl CovarianceSpec {
    pub fn new(chi: BumpSpec) -> Self {
        Self {
            chi,
            blocks: Vec::new(),
            particle: [[0.0; 6]; 6],
        }
    }

    pub fn with_block(mut self, i: usize, j: usize, n: usize, n_prime: usize, coefficient: f64, kernel: Kernel) -> Self {
        self.blocks.push(BlockEntry {
            i,
            j,
            n,
            n_prime,
            coefficient,
            kernel,
        });
        self
    }

    /// `diag(σ_q² I₃, σ_p² I₃)`.
    pub fn with_particle_diag(mut self, sigma_q: f64, sigma_p: f64) -> Self {
        self.particle = [[0.0; 6]; 6];
        for r in 0..3 {
            self.particle[r][r] = sigma_q * sigma_q;
            self.particle[r + 3][r + 3] = sigma_p * sigma_p;
        }
        self
    }

    /// Support radius of `g`.
    pub fn support(&self) -> f64 {
        2.0 * self.chi.radius
    }

    pub fn validate(&self, d: usize, box_length: f64) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let c = &self.chi;
        if !(c.width > 0.0) || !(c.radius > 0.0) || !c.amplitude.is_finite() {
            errs.push(format!("covariance.chi: need width > 0, radius > 0, finite amplitude, got {c:?}"));
        }
        if !(self.support() < box_length / 2.0) {
            errs.push(format!(
                "covariance.chi: support of g = 2·radius = {} must be below L/2 = {}",
                self.support(),
                box_length / 2.0
            ));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.i > 1 || b.j > 1 || b.n >= d || b.n_prime >= d {
                errs.push(format!("covariance.blocks[{k}]: slot out of range for d = {d}: {b:?}"));
            }
            if !b.coefficient.is_finite() {
                errs.push(format!("covariance.blocks[{k}]: coefficient must be finite"));
            }
            if let Kernel::Gradient(axis) = b.kernel {
                if axis > 2 {
                    errs.push(format!("covariance.blocks[{k}]: gradient axis {axis} > 2"));
                }
            }
        }
        for r in 0..6 {
            for s in 0..6 {
                let (a, b) = (self.particle[r][s], self.particle[s][r]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * (a.abs() + b.abs()) {
                    errs.push(format!("covariance.particle: not symmetric at ({r}, {s})"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// Per-mode Hermitian matrices on the half spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub d: usize,
    /// `(2d)²` entries per stored mode, row-major.
    pub entries: Vec<Complex64>,
}

impl SpectralDensity {
    pub fn zeros(d: usize, len: usize) -> Self {
        Self {
            d,
            entries: vec![Complex64::new(0.0, 0.0); len * 4 * d * d],
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.d
    }

    pub fn len(&self) -> usize {
        self.entries.len() / (self.dim() * self.dim())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Slot index of `φ_n` (`i = 0`) or `π_n` (`i = 1`).
    pub fn slot(&self, i: usize, n: usize) -> usize {
        i * self.d + n
    }

    pub fn mode(&self, idx: usize) -> &[Complex64] {
        let s = self.dim() * self.dim();
        &self.entries[idx * s..(idx + 1) * s]
    }

    fn mode_mut(&mut self, idx: usize) -> &mut [Complex64] {
        let s = self.dim() * self.dim();
        &mut self.entries[idx * s..(idx + 1) * s]
    }

    pub fn get(&self, idx: usize, a: usize, b: usize) -> Complex64 {
        self.mode(idx)[a * self.dim() + b]
    }

    /// `q̂^{ij}_{nn'}(k)`.
    pub fn block(&self, idx: usize, i: usize, j: usize, n: usize, n_prime: usize) -> Complex64 {
        self.get(idx, self.slot(i, n), self.slot(j, n_prime))
    }

    pub fn matrix(&self, idx: usize) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), self.mode(idx))
    }

    /// `L⁻³ Σ_k a(k)^H M(k) b(k)` over the full lattice for real functionals
    /// (field slots of `a`, `b` only).
    pub fn bilinear<T: Real>(&self, model: &DiscreteModel<T>, a: &SpectralState<T>, b: &SpectralState<T>) -> f64 {
        let dim = self.dim();
        let d = self.d;
        let w = model.lattice.weight();
        let slot = |s: &SpectralState<T>, k: usize, idx: usize| -> Complex64 {
            let c = if k < d { s.phi[k][idx] } else { s.pi[k - d][idx] };
            Complex64::new(wide(c.re), wide(c.im))
        };
        let mut acc = 0.0;
        for idx in 0..self.len() {
            let m = self.mode(idx);
            let mut sum = Complex64::new(0.0, 0.0);
            for r in 0..dim {
                let ar = slot(a, r, idx).conj();
                if ar == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut row = Complex64::new(0.0, 0.0);
                for c in 0..dim {
                    row += m[r * dim + c] * slot(b, c, idx);
                }
                sum += ar * row;
            }
            acc += wide(w[idx]) * sum.re;
        }
        acc / wide(model.grid.volume())
    }

    /// Covariance of `W(t)` applied to a field with this density:
    /// `W(t) M W(t)ᵀ` per mode and component pair.
    pub fn transport<T: Real>(&self, model: &DiscreteModel<T>, t: f64) -> Self {
        let d = self.d;
        let dim = self.dim();
        let mut out = self.clone();
        for idx in 0..self.len() {
            let mut w = DMatrix::<Complex64>::zeros(dim, dim);
            for n in 0..d {
                let om = wide(model.frequencies[n][idx]);
                let (s, c) = (om * t).sin_cos();
                let sw = if om == 0.0 { t } else { s / om };
                w[(n, n)] = c.into();
                w[(n, d + n)] = sw.into();
                w[(d + n, n)] = (-om * s).into();
                w[(d + n, d + n)] = c.into();
            }
            let moved = &w * self.matrix(idx) * w.transpose();
            out.mode_mut(idx).copy_from_slice(moved.transpose().as_slice());
        }
        out
    }

    /// Largest `|M_ab − M'_ab|` over all modes.
    pub fn max_difference(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `χ̂` of the bump sampled on the model grid (real since `χ` is even).
pub fn bump_transform<T: Real>(model: &DiscreteModel<T>, chi: &BumpSpec) -> Result<Vec<f64>> {
    let values: Vec<T> = smooth_bump(&model.grid, [0.0; 3], chi.amplitude, chi.width, chi.radius);
    Ok(model.transform.forward(&values)?.iter().map(|c| wide(c.re)).collect())
}

/// Assembles `M(k)` and checks it is Hermitian and PSD at every mode
/// (eigenvalues `≥ −1e−12·trace`).
pub fn assemble_spectral_density<T: Real>(spec: &CovarianceSpec, model: &DiscreteModel<T>) -> Result<SpectralDensity> {
    let d = model.d();
    if let Err(errs) = spec.validate(d, wide(model.grid.box_length())) {
        return Err(Error::InvalidParameter {
            name: "covariance",
            reason: errs.join("; "),
        });
    }
    let chi = bump_transform(model, &spec.chi)?;
    let g_hat: Vec<f64> = chi.iter().map(|c| c * c).collect();
    let lat = &model.lattice;
    let mut dens = SpectralDensity::zeros(d, lat.len());
    let dim = dens.dim();
    let mut given = vec![false; dim * dim];
    for b in &spec.blocks {
        let (r, c) = (dens.slot(b.i, b.n), dens.slot(b.j, b.n_prime));
        if r == c && matches!(b.kernel, Kernel::Gradient(_)) {
            return Err(Error::NotHermitian(format!(
                "gradient kernel on the diagonal entry (i, n) = ({}, {})",
                b.i, b.n
            )));
        }
        given[r * dim + c] = true;
    }
    let m2: Vec<f64> = model.masses.iter().map(|m| wide(*m).powi(2)).collect();
    for idx in 0..lat.len() {
        let k2 = wide(lat.k2()[idx]);
        let g = g_hat[idx];
        let mode = dens.mode_mut(idx);
        for b in &spec.blocks {
            let (r, c) = (b.i * d + b.n, b.j * d + b.n_prime);
            let v = match b.kernel {
                Kernel::Base => Complex64::new(g, 0.0),
                Kernel::Helmholtz => Complex64::new((k2 + m2[b.n]) * g, 0.0),
                Kernel::Gradient(axis) => Complex64::new(0.0, wide(lat.kd(axis)[idx]) * g),
            };
            mode[r * dim + c] += v * b.coefficient;
        }
        for r in 0..dim {
            for c in 0..dim {
                if given[r * dim + c] && !given[c * dim + r] {
                    mode[c * dim + r] = mode[r * dim + c].conj();
                }
            }
        }
    }
    check_hermitian(&dens, model)?;
    check_psd(&dens, model)?;
    Ok(dens)
}

fn check_hermitian<T: Real>(dens: &SpectralDensity, model: &DiscreteModel<T>) -> Result<()> {
    let dim = dens.dim();
    let scale = dens.entries.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for idx in 0..dens.len() {
        let m = dens.mode(idx);
        for r in 0..dim {
            for c in r..dim {
                let gap = (m[r * dim + c] - m[c * dim + r].conj()).norm();
                if gap > 1e-12 * scale {
                    return Err(Error::NotHermitian(format!(
                        "entries ({r}, {c}) and ({c}, {r}) differ by {gap:e} at mode j = {:?}",
                        model.grid.mode(idx)
                    )));
                }
            }
        }
    }
    Ok(())
}

fn hermitian_eigen(dens: &SpectralDensity, idx: usize) -> SymmetricEigen<Complex64, nalgebra::Dyn> {
    SymmetricEigen::new(dens.matrix(idx))
}

fn check_psd<T: Real>(dens: &SpectralDensity, model: &DiscreteModel<T>) -> Result<()> {
    let mut worst: Option<(f64, usize, f64)> = None;
    for idx in 0..dens.len() {
        let trace: f64 = (0..dens.dim()).map(|a| dens.get(idx, a, a).re).sum();
        let eig = hermitian_eigen(dens, idx).eigenvalues;
        let low = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if low < -1e-12 * trace.max(0.0) {
            let excess = -low / trace.abs().max(f64::MIN_POSITIVE);
            if worst.is_none_or(|w| excess > w.0) {
                worst = Some((excess, idx, low));
            }
        }
    }
    match worst {
        Some((_, idx, eigenvalue)) => Err(Error::NotPsd {
            mode: model.grid.mode(idx),
            eigenvalue,
        }),
        None => Ok(()),
    }
}

/// PSD square root `V·diag(√max(λ, 0))·V^H`.
fn psd_root(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(m);
    let v = &eig.eigenvectors;
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0)));
    v * s * v.adjoint()
}

fn check_particle(p: &[[f64; 6]; 6]) -> Result<DMatrix<f64>> {
    let m = DMatrix::from_fn(6, 6, |r, c| p[r][c]);
    let eig = SymmetricEigen::new(m.clone());
    let trace = m.trace();
    let low = eig.eigenvalues.min();
    if low < -1e-12 * trace.max(0.0) {
        return Err(Error::NotPsd {
            mode: [0, 0, 0],
            eigenvalue: low,
        });
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt())) * v.transpose())
}

/// Field density plus particle covariance of the initial measure: the
/// operator `C₀` with `C₀(Z₁, Z₂) = E⟨Y₀, Z₁⟩⟨Y₀, Z₂⟩`.
#[derive(Debug, Clone)]
pub struct InitialCovariance {
    pub density: SpectralDensity,
    pub particle: [[f64; 6]; 6],
}

impl InitialCovariance {
    pub fn new<T: Real>(spec: &CovarianceSpec, model: &DiscreteModel<T>) -> Result<Self> {
        let density = assemble_spectral_density(spec, model)?;
        check_particle(&spec.particle)?;
        Ok(Self {
            density,
            particle: spec.particle,
        })
    }

    pub fn apply<T: Real>(&self, model: &DiscreteModel<T>, z1: &SpectralState<T>, z2: &SpectralState<T>) -> f64 {
        let a: Vec<f64> = z1.q.iter().chain(&z1.p).map(|v| wide(*v)).collect();
        let b: Vec<f64> = z2.q.iter().chain(&z2.p).map(|v| wide(*v)).collect();
        let mut particle = 0.0;
        for r in 0..6 {
            for c in 0..6 {
                particle += a[r] * self.particle[r][c] * b[c];
            }
        }
        self.density.bilinear(model, z1, z2) + particle
    }
}

/// Flow-averaged covariance blocks:
/// `00 = χ·½(q⁰⁰ + E_n q¹¹)`, `01 = χ·½(q⁰¹ − q¹⁰)`, `10 = −01`,
/// `11 = χ·½(q¹¹ + (k² + m_n²) q⁰⁰)`, with `χ_{nn'} = 1` iff `m_n = m_n'`
/// and `E_n` the fundamental multiplier (zero on a massless `k = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCovariance {
    pub density: SpectralDensity,
}

pub fn limit_covariance<T: Real>(density: &SpectralDensity, model: &DiscreteModel<T>) -> LimitCovariance {
    let d = density.d;
    let dim = density.dim();
    let lat = &model.lattice;
    let fundamental: Vec<Vec<T>> = model
        .masses
        .iter()
        .map(|m| fundamental_multiplier(lat, *m))
        .collect();
    let mut out = SpectralDensity::zeros(d, density.len());
    for idx in 0..density.len() {
        let k2 = wide(lat.k2()[idx]);
        let src = density.mode(idx);
        let at = |i: usize, j: usize, n: usize, np: usize| src[(i * d + n) * dim + j * d + np];
        let mode = out.mode_mut(idx);
        for n in 0..d {
            for np in 0..d {
                if model.masses[n] != model.masses[np] {
                    continue;
                }
                let e = wide(fundamental[n][idx]);
                let helm = k2 + wide(model.masses[n]).powi(2);
                let b00 = (at(0, 0, n, np) + at(1, 1, n, np) * e) * 0.5;
                let b01 = (at(0, 1, n, np) - at(1, 0, n, np)) * 0.5;
                let b11 = (at(1, 1, n, np) + at(0, 0, n, np) * helm) * 0.5;
                mode[n * dim + np] = b00;
                mode[n * dim + d + np] = b01;
                mode[(d + n) * dim + np] = -b01;
                mode[(d + n) * dim + d + np] = b11;
            }
        }
    }
    LimitCovariance { density: out }
}

impl LimitCovariance {
    /// `Q^ν_∞(ψ₁, ψ₂)` over the field slots of two functionals.
    pub fn quadratic_form<T: Real>(&self, model: &DiscreteModel<T>, psi1: &SpectralState<T>, psi2: &SpectralState<T>) -> f64 {
        self.density.bilinear(model, psi1, psi2)
    }
}

pub fn quadratic_form_limit<T: Real>(model: &DiscreteModel<T>, limit: &LimitCovariance, psi: &SpectralState<T>) -> f64 {
    limit.quadratic_form(model, psi, psi)
}

/// `E⟨Y(t), Z₁⟩⟨Y(t), Z₂⟩ = C₀(U'(t)Z₁, U'(t)Z₂)` at each time.
pub fn exact_qt<T: Real>(
    model: &DiscreteModel<T>,
    cov: &InitialCovariance,
    z1: &SpectralState<T>,
    z2: &SpectralState<T>,
    times: &[T],
    dt: T,
) -> Result<Vec<f64>> {
    let a = pullback_at(model, z1, times, dt)?;
    let b = if z1 == z2 { a.clone() } else { pullback_at(model, z2, times, dt)? };
    Ok(a.iter().zip(&b).map(|(x, y)| cov.apply(model, x, y)).collect())
}

/// Sampler of the Gaussian measure with a precomputed `M(k)^{1/2}`.
#[derive(Debug, Clone)]
pub struct GaussianMeasure<'a, T: Real> {
    model: &'a DiscreteModel<T>,
    pub covariance: InitialCovariance,
    root: SpectralDensity,
    particle_root: DMatrix<f64>,
}

/// RNG of sample `index` under `base_seed`: one ChaCha8 stream per sample.
pub fn sample_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

impl<'a, T: Real> GaussianMeasure<'a, T> {
    pub fn new(spec: &CovarianceSpec, model: &'a DiscreteModel<T>) -> Result<Self> {
        let covariance = InitialCovariance::new(spec, model)?;
        let dens = &covariance.density;
        let mut root = SpectralDensity::zeros(dens.d, dens.len());
        for idx in 0..dens.len() {
            let mut r = psd_root(dens.matrix(idx));
            let n = model.grid.n() as i64;
            if model.grid.mode(idx).iter().all(|j| (2 * j) % n == 0) {
                r = r.map(|c| Complex64::new(c.re, 0.0));
            }
            root.mode_mut(idx).copy_from_slice(r.transpose().as_slice());
        }
        let particle_root = check_particle(&spec.particle)?;
        Ok(Self {
            model,
            covariance,
            root,
            particle_root,
        })
    }

    /// One draw in spectral form. Consumes `2d·N³ + 6` normals from `rng`:
    /// white noise of variance `h⁻³` per slot and grid point, then the
    /// particle.
    pub fn sample_spectral(&self, rng: &mut ChaCha8Rng) -> Result<SpectralState<T>> {
        let model = self.model;
        let d = model.d();
        let dim = 2 * d;
        let scale = wide(model.grid.cell_volume()).powf(-0.5);
        let mut noise = Vec::with_capacity(dim);
        for _ in 0..dim {
            let w: Vec<T> = (0..model.grid.real_len())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    lit::<T>(z * scale)
                })
                .collect();
            noise.push(model.transform.forward(&w)?);
        }
        let mut s = SpectralState::zeros(d, model.lattice.len());
        let mut mixed = vec![Complex64::new(0.0, 0.0); dim];
        for idx in 0..model.lattice.len() {
            let r = self.root.mode(idx);
            for (a, out) in mixed.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (b, w) in noise.iter().enumerate() {
                    let wb = Complex64::new(wide(w[idx].re), wide(w[idx].im));
                    acc += r[a * dim + b] * wb;
                }
                *out = acc;
            }
            for n in 0..d {
                s.phi[n][idx] = Complex::new(lit(mixed[n].re), lit(mixed[n].im));
                s.pi[n][idx] = Complex::new(lit(mixed[d + n].re), lit(mixed[d + n].im));
            }
        }
        let z: Vec<f64> = (0..6).map(|_| StandardNormal.sample(rng)).collect();
        let z = nalgebra::DVector::from_vec(z);
        let qp = &self.particle_root * z;
        for r in 0..3 {
            s.q[r] = lit(qp[r]);
            s.p[r] = lit(qp[r + 3]);
        }
        Ok(s)
    }

    pub fn sample(&self, seed: u64) -> Result<FullState<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.model.from_spectral(&self.sample_spectral(&mut rng)?)
    }
}

/// One draw of the initial measure for `seed`.
pub fn sample_initial<T: Real>(spec: &CovarianceSpec, model: &DiscreteModel<T>, seed: u64) -> Result<FullState<T>> {
    GaussianMeasure::new(spec, model)?.sample(seed)
}

/// Jackknife estimate and standard error of `stat` applied to the column
/// means of `columns[c][sample]`.
pub fn jackknife<F: Fn(&[f64]) -> f64>(columns: &[Vec<f64>], stat: F) -> (f64, f64) {
    let m = columns.first().map_or(0, |c| c.len());
    let totals: Vec<f64> = columns.iter().map(|c| c.iter().sum()).collect();
    let full: Vec<f64> = totals.iter().map(|t| t / m as f64).collect();
    let estimate = stat(&full);
    if m < 2 {
        return (estimate, f64::INFINITY);
    }
    let mut loo = vec![0.0; columns.len()];
    let thetas: Vec<f64> = (0..m)
        .map(|s| {
            for (c, col) in columns.iter().enumerate() {
                loo[c] = (totals[c] - col[s]) / (m - 1) as f64;
            }
            stat(&loo)
        })
        .collect();
    let mean = thetas.iter().sum::<f64>() / m as f64;
    let var = thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>();
    (estimate, ((m - 1) as f64 / m as f64 * var).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Ensemble size `M` (at least 100).
    pub samples: usize,
    pub base_seed: u64,
    /// Observation times (multiples of the adjusted step).
    pub times: Vec<f64>,
    pub dt: f64,
    /// Ball radius of the uniform moment check.
    pub moment_radius: f64,
}

/// Statistics of `x = ⟨Y(t), Z⟩` for one functional and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalStats {
    pub mean: f64,
    pub mean_se: f64,
    /// Raw second moment `Ê x²`.
    pub second_moment: f64,
    pub second_moment_se: f64,
    /// `Ê e^{ix}`.
    pub char_re: f64,
    pub char_im: f64,
    pub char_se: f64,
    /// `|Ê e^{ix} − exp(−½ Ê x²)|` with its jackknife error.
    pub gaussian_gap: f64,
    pub gaussian_gap_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub samples: usize,
    pub base_seed: u64,
    pub times: Vec<f64>,
    /// `stats[t][z]`.
    pub stats: Vec<Vec<FunctionalStats>>,
    /// Mean `‖Y(t)‖²_{E,R}` per time.
    pub moment: Vec<f64>,
    /// `max_t moment ≤ 3·mean_t moment`.
    pub moment_bounded: bool,
}

struct SampleRecord {
    values: Vec<Vec<f64>>,
    moment: Vec<f64>,
}

/// Forward Monte Carlo: each sample is drawn from its own stream and
/// evolved by the Strang stepper; the reduction runs in sample order.
pub fn ensemble_run<T: Real>(
    model: &DiscreteModel<T>,
    spec: &CovarianceSpec,
    functionals: &[TestFunctional<T>],
    config: &EnsembleConfig,
) -> Result<EnsembleStats> {
    if config.samples < 100 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("ensemble needs M >= 100, got {}", config.samples),
        });
    }
    let measure = GaussianMeasure::new(spec, model)?;
    let zs: Vec<SpectralState<T>> = functionals
        .iter()
        .map(|z| model.functional_to_spectral(z))
        .collect::<Result<_>>()?;
    let t_max = config.times.iter().copied().fold(0.0, f64::max);
    let (steps, h) = step_plan(lit::<T>(t_max), lit(config.dt))?;
    let targets: Vec<usize> = config
        .times
        .iter()
        .map(|t| (t / wide(h)).round() as usize)
        .collect();
    let stride = targets.iter().copied().filter(|s| *s > 0).fold(0, gcd);
    let radius = lit::<T>(config.moment_radius);
    let run = |index: usize| -> Result<SampleRecord> {
        let mut rng = sample_rng(config.base_seed, index as u64);
        let mut s = measure.sample_spectral(&mut rng)?;
        let mut values = vec![Vec::new(); targets.len()];
        let mut moment = vec![0.0; targets.len()];
        let prop = Propagator::new(model, h);
        prop.run(&mut s, steps, stride, |step, st| {
            for (k, t) in targets.iter().enumerate() {
                if *t == step {
                    values[k] = zs.iter().map(|z| wide(pairing(model, st, z))).collect();
                    moment[k] = wide(local_energy_norms(model, st, &[radius])?[0].sobolev).powi(2);
                }
            }
            Ok(())
        })?;
        Ok(SampleRecord { values, moment })
    };
    let records: Vec<SampleRecord> = (0..config.samples)
        .into_par_iter()
        .map(run)
        .collect::<Result<_>>()?;

    let m = records.len() as f64;
    let mut stats = Vec::with_capacity(targets.len());
    for k in 0..targets.len() {
        let mut row = Vec::with_capacity(zs.len());
        for z in 0..zs.len() {
            let x: Vec<f64> = records.iter().map(|r| r.values[k][z]).collect();
            let cols = vec![
                x.clone(),
                x.iter().map(|v| v * v).collect(),
                x.iter().map(|v| v.cos()).collect(),
                x.iter().map(|v| v.sin()).collect(),
            ];
            let (mean, mean_se) = jackknife(&cols, |c| c[0]);
            let (second_moment, second_moment_se) = jackknife(&cols, |c| c[1]);
            let (char_re, se_re) = jackknife(&cols, |c| c[2]);
            let (char_im, se_im) = jackknife(&cols, |c| c[3]);
            let (gaussian_gap, gaussian_gap_se) =
                jackknife(&cols, |c| Complex64::new(c[2] - (-0.5 * c[1]).exp(), c[3]).norm());
            row.push(FunctionalStats {
                mean,
                mean_se,
                second_moment,
                second_moment_se,
                char_re,
                char_im,
                char_se: se_re.hypot(se_im),
                gaussian_gap,
                gaussian_gap_se,
            });
        }
        stats.push(row);
    }
    let moment: Vec<f64> = (0..targets.len())
        .map(|k| records.iter().map(|r| r.moment[k]).sum::<f64>() / m)
        .collect();
    let average = moment.iter().sum::<f64>() / moment.len().max(1) as f64;
    let moment_bounded = moment.iter().all(|v| *v <= 3.0 * average);
    Ok(EnsembleStats {
        samples: config.samples,
        base_seed: config.base_seed,
        times: config.times.clone(),
        stats,
        moment,
        moment_bounded,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
