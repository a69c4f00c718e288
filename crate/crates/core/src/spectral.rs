//! Periodic-box grid, real-to-complex transforms and Fourier multipliers.
//!
//! Conventions (fixed once, checked by the Parseval tests):
//!
//! * positions are stored in FFT order with the origin at index 0, so index
//!   `i` on an axis sits at `i·h` for `i < N/2` and at `(i − N)·h` otherwise;
//! * `f̂(k) = h³ Σ_x f(x) e^{−ik·x}` and `f(x) = L⁻³ Σ_k f̂(k) e^{ik·x}`;
//! * `Σ_x |f|² h³ = L⁻³ Σ_k |f̂|²`.
//!
//! Real fields are kept as half spectra (`N × N × (N/2+1)`, last axis
//! truncated). Sums over the full lattice are recovered with the weights
//! returned by [`Lattice::weight`].

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::real::{count, lit, Real};

/// Cubic periodic box `[−L/2, L/2)³` sampled with `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    box_length: T,
    grid_n: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(box_length: T, grid_n: usize) -> Result<Self> {
        if !(box_length > T::zero()) || !box_length.is_finite() {
            return Err(Error::InvalidParameter {
                name: "box_length",
                reason: format!("must be finite and positive, got {box_length}"),
            });
        }
        if grid_n < 2 || grid_n % 2 != 0 {
            return Err(Error::InvalidParameter {
                name: "grid_n",
                reason: format!("must be even and at least 2, got {grid_n}"),
            });
        }
        Ok(Self {
            box_length,
            grid_n,
        })
    }

    pub fn n(&self) -> usize {
        self.grid_n
    }

    pub fn box_length(&self) -> T {
        self.box_length
    }

    pub fn spacing(&self) -> T {
        self.box_length / count(self.grid_n)
    }

    pub fn cell_volume(&self) -> T {
        self.spacing().powi(3)
    }

    pub fn volume(&self) -> T {
        self.box_length.powi(3)
    }

    /// Wavenumber spacing `2π/L`.
    pub fn dk(&self) -> T {
        T::TAU() / self.box_length
    }

    /// Length of the truncated last axis, `N/2 + 1`.
    pub fn half_n(&self) -> usize {
        self.grid_n / 2 + 1
    }

    pub fn real_len(&self) -> usize {
        self.grid_n.pow(3)
    }

    pub fn spectral_len(&self) -> usize {
        self.grid_n * self.grid_n * self.half_n()
    }

    /// Signed lattice index of position `i` along a full axis.
    pub fn signed(&self, i: usize) -> i64 {
        let n = self.grid_n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Minimal-image coordinate of grid index `i` along one axis.
    pub fn coord(&self, i: usize) -> T {
        self.spacing() * T::from_i64(self.signed(i)).unwrap()
    }

    /// Position of the flat real-space index.
    pub fn point(&self, idx: usize) -> [T; 3] {
        let n = self.grid_n;
        [self.coord(idx / (n * n)), self.coord((idx / n) % n), self.coord(idx % n)]
    }

    /// Flat real-space index of `(ix, iy, iz)`.
    pub fn real_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.grid_n + iy) * self.grid_n + iz
    }

    /// Flat real-space index of the mirror point `−x`.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let n = self.grid_n;
        let flip = |i: usize| (n - i) % n;
        self.real_index(flip(idx / (n * n)), flip((idx / n) % n), flip(idx % n))
    }

    /// Integer lattice vector `j` (so `k = 2πj/L`) of a half-spectrum index.
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let n = self.grid_n;
        let nh = self.half_n();
        let iz = idx % nh;
        let iy = (idx / nh) % n;
        let ix = idx / (nh * n);
        let jz = if iz == n / 2 { -(n as i64) / 2 } else { iz as i64 };
        [self.signed(ix), self.signed(iy), jz]
    }

    /// Half-spectrum index of lattice vector `j`, using Hermitian symmetry
    /// when `j` lies in the omitted half. The flag reports conjugation.
    pub fn spectral_index(&self, j: [i64; 3]) -> (usize, bool) {
        let n = self.grid_n as i64;
        let wrap = |v: i64| v.rem_euclid(n) as usize;
        let (j, conj) = if wrap(j[2]) <= (n / 2) as usize {
            (j, false)
        } else {
            ([-j[0], -j[1], -j[2]], true)
        };
        let nh = self.half_n();
        let idx = (wrap(j[0]) * self.grid_n + wrap(j[1])) * nh + wrap(j[2]);
        (idx, conj)
    }
}

/// Per-mode tables for the half spectrum of a grid.
#[derive(Debug, Clone)]
pub struct Lattice<T> {
    grid: GridSpec<T>,
    k2: Vec<T>,
    kd: [Vec<T>; 3],
    weight: Vec<T>,
    shell: Vec<u32>,
}

impl<T: Real> Lattice<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        let len = grid.spectral_len();
        let dk = grid.dk();
        let half = (grid.n() / 2) as i64;
        let mut k2 = Vec::with_capacity(len);
        let mut kd = [
            Vec::with_capacity(len),
            Vec::with_capacity(len),
            Vec::with_capacity(len),
        ];
        let mut weight = Vec::with_capacity(len);
        let mut shell = Vec::with_capacity(len);
        let nh = grid.half_n();
        for idx in 0..len {
            let j = grid.mode(idx);
            let jj: i64 = j.iter().map(|v| v * v).sum();
            k2.push(dk * dk * T::from_i64(jj).unwrap());
            for (axis, table) in kd.iter_mut().enumerate() {
                // The Nyquist row has no odd partner, so derivatives drop it.
                let v = if j[axis] == -half { 0 } else { j[axis] };
                table.push(dk * T::from_i64(v).unwrap());
            }
            let iz = idx % nh;
            let w = if iz == 0 || iz == nh - 1 { 1.0 } else { 2.0 };
            weight.push(lit(w));
            shell.push(jj as u32);
        }
        Self {
            grid,
            k2,
            kd,
            weight,
            shell,
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }

    /// `|k|²` including the Nyquist components.
    pub fn k2(&self) -> &[T] {
        &self.k2
    }

    /// Derivative wavenumbers along `axis` (Nyquist entries zeroed).
    pub fn kd(&self, axis: usize) -> &[T] {
        &self.kd[axis]
    }

    /// Multiplicity of each stored mode in full-lattice sums.
    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    /// Integer `|j|²` of each stored mode.
    pub fn shell(&self) -> &[u32] {
        &self.shell
    }

    /// `L⁻³ Σ_k â conj(b̂)` over the full lattice for real fields, i.e. the
    /// grid inner product `h³ Σ_x a b`.
    pub fn inner(&self, a: &[Complex<T>], b: &[Complex<T>]) -> T {
        let mut acc = T::zero();
        for ((w, x), y) in self.weight.iter().zip(a).zip(b) {
            acc = acc + *w * (x.re * y.re + x.im * y.im);
        }
        acc / self.grid.volume()
    }

    pub fn norm_sqr(&self, a: &[Complex<T>]) -> T {
        self.inner(a, a)
    }

    /// Spectral derivative `∂_axis f` of a half spectrum.
    pub fn derivative(&self, a: &[Complex<T>], axis: usize) -> Vec<Complex<T>> {
        a.iter()
            .zip(&self.kd[axis])
            .map(|(c, k)| Complex::new(-c.im * *k, c.re * *k))
            .collect()
    }
}

/// Dispersion relation `ω_n(k) = (|k|² + m²)^{1/2}`.
pub fn dispersion<T: Real>(mass: T, k: [T; 3]) -> T {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + mass * mass).sqrt()
}

/// `ω_n` on every stored mode.
pub fn dispersion_table<T: Real>(lattice: &Lattice<T>, mass: T) -> Vec<T> {
    lattice
        .k2()
        .iter()
        .map(|k2| (*k2 + mass * mass).sqrt())
        .collect()
}

/// Multiplier of the fundamental solution `E_n` of `−Δ + m²`. The massless
/// zero mode is set to 0.
pub fn fundamental_multiplier<T: Real>(lattice: &Lattice<T>, mass: T) -> Vec<T> {
    lattice
        .k2()
        .iter()
        .map(|k2| {
            let d = *k2 + mass * mass;
            if d == T::zero() {
                T::zero()
            } else {
                d.recip()
            }
        })
        .collect()
}

/// Multiplier of `−Δ + m²`.
pub fn helmholtz_multiplier<T: Real>(lattice: &Lattice<T>, mass: T) -> Vec<T> {
    lattice.k2().iter().map(|k2| *k2 + mass * mass).collect()
}

pub fn apply_multiplier<T: Real>(coeffs: &mut [Complex<T>], multiplier: &[T]) {
    for (c, m) in coeffs.iter_mut().zip(multiplier) {
        *c = *c * *m;
    }
}

/// Fourier coefficients of a multi-component real field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField<T> {
    pub components: Vec<Vec<Complex<T>>>,
}

/// Forward and inverse 3-D real transforms for one grid.
#[derive(Clone)]
pub struct SpectralTransform<T: Real> {
    grid: GridSpec<T>,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for SpectralTransform<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralTransform")
            .field("grid", &self.grid)
            .finish()
    }
}

impl<T: Real> SpectralTransform<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        let n = grid.n();
        let mut real = RealFftPlanner::<T>::new();
        let mut cplx = FftPlanner::<T>::new();
        Self {
            grid,
            r2c: real.plan_fft_forward(n),
            c2r: real.plan_fft_inverse(n),
            fwd: cplx.plan_fft_forward(n),
            inv: cplx.plan_fft_inverse(n),
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    /// `f̂ = h³ Σ f e^{−ik·x}` on the half spectrum.
    pub fn forward(&self, field: &[T]) -> Result<Vec<Complex<T>>> {
        let n = self.grid.n();
        let nh = self.grid.half_n();
        if field.len() != self.grid.real_len() {
            return Err(Error::SizeMismatch {
                expected: self.grid.real_len(),
                got: field.len(),
            });
        }
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.grid.spectral_len()];
        let mut line = self.r2c.make_input_vec();
        let mut spec = self.r2c.make_output_vec();
        let mut scratch = self.r2c.make_scratch_vec();
        for row in 0..n * n {
            line.copy_from_slice(&field[row * n..(row + 1) * n]);
            self.r2c
                .process_with_scratch(&mut line, &mut spec, &mut scratch)
                .expect("plan lengths match");
            out[row * nh..(row + 1) * nh].copy_from_slice(&spec);
        }
        self.transverse(&mut out, &*self.fwd);
        let scale = self.grid.cell_volume();
        for c in out.iter_mut() {
            *c = *c * scale;
        }
        Ok(out)
    }

    /// `f = L⁻³ Σ f̂ e^{ik·x}` from a half spectrum.
    pub fn inverse(&self, coeffs: &[Complex<T>]) -> Result<Vec<T>> {
        let n = self.grid.n();
        let nh = self.grid.half_n();
        if coeffs.len() != self.grid.spectral_len() {
            return Err(Error::SizeMismatch {
                expected: self.grid.spectral_len(),
                got: coeffs.len(),
            });
        }
        let scale = self.grid.volume().recip();
        let mut work: Vec<Complex<T>> = coeffs.iter().map(|c| *c * scale).collect();
        self.transverse(&mut work, &*self.inv);
        let mut out = vec![T::zero(); self.grid.real_len()];
        let mut spec = self.c2r.make_input_vec();
        let mut line = self.c2r.make_output_vec();
        let mut scratch = self.c2r.make_scratch_vec();
        for row in 0..n * n {
            spec.copy_from_slice(&work[row * nh..(row + 1) * nh]);
            spec[0].im = T::zero();
            spec[nh - 1].im = T::zero();
            self.c2r
                .process_with_scratch(&mut spec, &mut line, &mut scratch)
                .expect("plan lengths match");
            out[row * n..(row + 1) * n].copy_from_slice(&line);
        }
        Ok(out)
    }

    pub fn forward_field(&self, components: &[Vec<T>]) -> Result<SpectralField<T>> {
        Ok(SpectralField {
            components: components
                .iter()
                .map(|c| self.forward(c))
                .collect::<Result<_>>()?,
        })
    }

    pub fn inverse_field(&self, field: &SpectralField<T>) -> Result<Vec<Vec<T>>> {
        field.components.iter().map(|c| self.inverse(c)).collect()
    }

    /// Complex transforms along the first two axes.
    fn transverse(&self, data: &mut [Complex<T>], plan: &dyn Fft<T>) {
        let n = self.grid.n();
        let nh = self.grid.half_n();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
        for ix in 0..n {
            for iz in 0..nh {
                for iy in 0..n {
                    buf[iy] = data[(ix * n + iy) * nh + iz];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for iy in 0..n {
                    data[(ix * n + iy) * nh + iz] = buf[iy];
                }
            }
        }
        for iy in 0..n {
            for iz in 0..nh {
                for ix in 0..n {
                    buf[ix] = data[(ix * n + iy) * nh + iz];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for ix in 0..n {
                    data[(ix * n + iy) * nh + iz] = buf[ix];
                }
            }
        }
    }
}

/// Direct evaluation of `h³ Σ_x f(x) e^{−ik·x}` at an arbitrary wavevector,
/// using minimal-image positions. Only grid points with `f ≠ 0` contribute.
pub fn fourier_at<T: Real>(grid: &GridSpec<T>, field: &[T], k: [T; 3]) -> Complex<T> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for (idx, f) in field.iter().enumerate() {
        if *f == T::zero() {
            continue;
        }
        let x = grid.point(idx);
        let phase = -(k[0] * x[0] + k[1] * x[1] + k[2] * x[2]);
        acc = acc + Complex::new(phase.cos(), phase.sin()) * *f;
    }
    acc * grid.cell_volume()
}

/// Minimal-image distance `|x|` of every grid point from the origin.
pub fn radius_table<T: Real>(grid: &GridSpec<T>) -> Vec<T> {
    (0..grid.real_len())
        .map(|idx| {
            let x = grid.point(idx);
            (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
        })
        .collect()
}
