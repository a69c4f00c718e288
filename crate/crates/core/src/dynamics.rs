//! Coupled field–particle dynamics: exact subflows, Strang composition,
//! energy, local energy norms, the adjoint flow and the Duhamel formula.
//!
//! Evolution runs entirely on half spectra; fields only visit real space
//! for local norms and on export.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::DiscreteModel;
use crate::real::{count, lit, wide, Real};
use crate::spectral::{radius_table, GridSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<T> {
    pub phi: Vec<Vec<T>>,
    pub pi: Vec<Vec<T>>,
}

impl<T: Real> FieldState<T> {
    pub fn zeros(d: usize, grid: &GridSpec<T>) -> Self {
        Self {
            phi: vec![vec![T::zero(); grid.real_len()]; d],
            pi: vec![vec![T::zero(); grid.real_len()]; d],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParticleState<T> {
    pub q: [T; 3],
    pub p: [T; 3],
}

/// `Y = (φ, q, π, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState<T> {
    pub field: FieldState<T>,
    pub particle: ParticleState<T>,
}

impl<T: Real> FullState<T> {
    pub fn zeros(d: usize, grid: &GridSpec<T>) -> Self {
        Self {
            field: FieldState::zeros(d, grid),
            particle: ParticleState::default(),
        }
    }
}

/// `Z = (ψ, u, v)` with `ψ_n = (ψ⁰_n, ψ¹_n)`, paired with `Y` by
/// `⟨Y, Z⟩ = Σ_n ⟨φ_n, ψ⁰_n⟩ + ⟨π_n, ψ¹_n⟩ + q·u + p·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctional<T> {
    pub psi0: Vec<Vec<T>>,
    pub psi1: Vec<Vec<T>>,
    pub u: [T; 3],
    pub v: [T; 3],
}

impl<T: Real> TestFunctional<T> {
    pub fn zeros(d: usize, grid: &GridSpec<T>) -> Self {
        Self {
            psi0: vec![vec![T::zero(); grid.real_len()]; d],
            psi1: vec![vec![T::zero(); grid.real_len()]; d],
            u: [T::zero(); 3],
            v: [T::zero(); 3],
        }
    }
}

/// Half-spectrum representation shared by states and test functionals
/// (for a functional, `phi`/`pi`/`q`/`p` hold `ψ⁰`/`ψ¹`/`u`/`v`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState<T> {
    pub phi: Vec<Vec<Complex<T>>>,
    pub pi: Vec<Vec<Complex<T>>>,
    pub q: [T; 3],
    pub p: [T; 3],
}

impl<T: Real> SpectralState<T> {
    pub fn zeros(d: usize, len: usize) -> Self {
        let z = Complex::new(T::zero(), T::zero());
        Self {
            phi: vec![vec![z; len]; d],
            pi: vec![vec![z; len]; d],
            q: [T::zero(); 3],
            p: [T::zero(); 3],
        }
    }

    pub fn scale(&mut self, a: T) {
        for c in self.phi.iter_mut().chain(self.pi.iter_mut()).flatten() {
            *c = *c * a;
        }
        for x in self.q.iter_mut().chain(self.p.iter_mut()) {
            *x = *x * a;
        }
    }

    /// `self += a·other`.
    pub fn axpy(&mut self, a: T, other: &Self) {
        for (x, y) in self
            .phi
            .iter_mut()
            .chain(self.pi.iter_mut())
            .flatten()
            .zip(other.phi.iter().chain(other.pi.iter()).flatten())
        {
            *x = *x + *y * a;
        }
        for i in 0..3 {
            self.q[i] = self.q[i] + a * other.q[i];
            self.p[i] = self.p[i] + a * other.p[i];
        }
    }

    pub fn particle(&self) -> ParticleState<T> {
        ParticleState {
            q: self.q,
            p: self.p,
        }
    }
}

/// `⟨Y, Z⟩` of two spectral representations.
pub fn pairing<T: Real>(model: &DiscreteModel<T>, y: &SpectralState<T>, z: &SpectralState<T>) -> T {
    let lat = &model.lattice;
    let mut acc = T::zero();
    for n in 0..y.phi.len() {
        acc = acc + lat.inner(&y.phi[n], &z.phi[n]) + lat.inner(&y.pi[n], &z.pi[n]);
    }
    for i in 0..3 {
        acc = acc + y.q[i] * z.q[i] + y.p[i] * z.p[i];
    }
    acc
}

impl<T: Real> DiscreteModel<T> {
    pub fn to_spectral(&self, y: &FullState<T>) -> Result<SpectralState<T>> {
        self.pack(&y.field.phi, &y.field.pi, y.particle.q, y.particle.p)
    }

    pub fn from_spectral(&self, s: &SpectralState<T>) -> Result<FullState<T>> {
        let (phi, pi) = self.unpack(s)?;
        Ok(FullState {
            field: FieldState { phi, pi },
            particle: s.particle(),
        })
    }

    pub fn functional_to_spectral(&self, z: &TestFunctional<T>) -> Result<SpectralState<T>> {
        self.pack(&z.psi0, &z.psi1, z.u, z.v)
    }

    pub fn functional_from_spectral(&self, s: &SpectralState<T>) -> Result<TestFunctional<T>> {
        let (psi0, psi1) = self.unpack(s)?;
        Ok(TestFunctional {
            psi0,
            psi1,
            u: s.q,
            v: s.p,
        })
    }

    fn pack(&self, a: &[Vec<T>], b: &[Vec<T>], q: [T; 3], p: [T; 3]) -> Result<SpectralState<T>> {
        if a.len() != self.d() || b.len() != self.d() {
            return Err(Error::SizeMismatch {
                expected: self.d(),
                got: a.len().min(b.len()),
            });
        }
        let f = |v: &[Vec<T>]| -> Result<Vec<_>> { v.iter().map(|c| self.transform.forward(c)).collect() };
        Ok(SpectralState {
            phi: f(a)?,
            pi: f(b)?,
            q,
            p,
        })
    }

    #[allow(clippy::type_complexity)]
    fn unpack(&self, s: &SpectralState<T>) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
        let f = |v: &[Vec<Complex<T>>]| -> Result<Vec<_>> { v.iter().map(|c| self.transform.inverse(c)).collect() };
        Ok((f(&s.phi)?, f(&s.pi)?))
    }
}

/// Exact oscillator rotation over time `t`.
pub fn harmonic_step<T: Real>(particle: &ParticleState<T>, omega: T, t: T) -> ParticleState<T> {
    let (s, c) = (omega * t).sin_cos();
    let mut out = *particle;
    for i in 0..3 {
        out.q[i] = c * particle.q[i] + s / omega * particle.p[i];
        out.p[i] = -omega * s * particle.q[i] + c * particle.p[i];
    }
    out
}

/// Per-mode coefficients of the free flow `W(t)`:
/// `[[c, sw], [−ws, c]]` with `sw = sin(ωt)/ω`, `ws = ω·sin(ωt)`.
#[derive(Debug, Clone)]
struct FlowTable<T> {
    c: Vec<Vec<T>>,
    sw: Vec<Vec<T>>,
    ws: Vec<Vec<T>>,
}

impl<T: Real> FlowTable<T> {
    fn new(model: &DiscreteModel<T>, t: T) -> Self {
        let mut c = Vec::new();
        let mut sw = Vec::new();
        let mut ws = Vec::new();
        for freq in &model.frequencies {
            let mut cn = Vec::with_capacity(freq.len());
            let mut swn = Vec::with_capacity(freq.len());
            let mut wsn = Vec::with_capacity(freq.len());
            for w in freq {
                let (s, co) = (*w * t).sin_cos();
                cn.push(co);
                swn.push(if *w == T::zero() { t } else { s / *w });
                wsn.push(*w * s);
            }
            c.push(cn);
            sw.push(swn);
            ws.push(wsn);
        }
        Self { c, sw, ws }
    }

    fn apply(&self, phi: &mut [Vec<Complex<T>>], pi: &mut [Vec<Complex<T>>]) {
        for n in 0..phi.len() {
            let (c, sw, ws) = (&self.c[n], &self.sw[n], &self.ws[n]);
            for (i, (a, b)) in phi[n].iter_mut().zip(pi[n].iter_mut()).enumerate() {
                let (x, y) = (*a, *b);
                *a = x * c[i] + y * sw[i];
                *b = y * c[i] - x * ws[i];
            }
        }
    }

    fn apply_transpose(&self, psi0: &mut [Vec<Complex<T>>], psi1: &mut [Vec<Complex<T>>]) {
        for n in 0..psi0.len() {
            let (c, sw, ws) = (&self.c[n], &self.sw[n], &self.ws[n]);
            for (i, (a, b)) in psi0[n].iter_mut().zip(psi1[n].iter_mut()).enumerate() {
                let (x, y) = (*a, *b);
                *a = x * c[i] - y * ws[i];
                *b = x * sw[i] + y * c[i];
            }
        }
    }
}

/// Exact free Klein–Gordon flow over time `t`, per Fourier mode.
pub fn free_field_step<T: Real>(model: &DiscreteModel<T>, state: &FieldState<T>, t: T) -> Result<FieldState<T>> {
    let mut s = model.pack(&state.phi, &state.pi, [T::zero(); 3], [T::zero(); 3])?;
    FlowTable::new(model, t).apply(&mut s.phi, &mut s.pi);
    let (phi, pi) = model.unpack(&s)?;
    Ok(FieldState { phi, pi })
}

/// `W(t)` on the field part of a spectral state (particle untouched).
pub fn free_flow_spectral<T: Real>(model: &DiscreteModel<T>, s: &mut SpectralState<T>, t: T) {
    FlowTable::new(model, t).apply(&mut s.phi, &mut s.pi);
}

/// `W'(t)`, the transpose of [`free_flow_spectral`], on a spectral functional.
pub fn free_flow_transpose_spectral<T: Real>(model: &DiscreteModel<T>, z: &mut SpectralState<T>, t: T) {
    FlowTable::new(model, t).apply_transpose(&mut z.phi, &mut z.pi);
}

/// `(⟨φ_n, ∂_r ρ_n⟩ summed over n)_r`, i.e. `L⁻³ Σ w k'_r ρ̂ Im φ̂`.
fn gradient_pairing<T: Real>(model: &DiscreteModel<T>, phi: &[Vec<Complex<T>>]) -> [T; 3] {
    let w = model.lattice.weight();
    let mut out = [T::zero(); 3];
    for (n, g) in model.grad.iter().enumerate() {
        for r in 0..3 {
            let mut acc = T::zero();
            for ((gi, wi), c) in g[r].iter().zip(w).zip(&phi[n]) {
                acc = acc + *gi * *wi * c.im;
            }
            out[r] = out[r] + acc;
        }
    }
    let vol = model.grid.volume();
    out.map(|v| v / vol)
}

/// `π̂_n −= τ·(a·∇ρ̂_n)` with `∇ρ̂_n = i·grad`.
fn shear<T: Real>(model: &DiscreteModel<T>, target: &mut [Vec<Complex<T>>], a: [T; 3], tau: T) {
    if a.iter().all(|x| *x == T::zero()) {
        return;
    }
    for (n, g) in model.grad.iter().enumerate() {
        for (i, c) in target[n].iter_mut().enumerate() {
            let s = a[0] * g[0][i] + a[1] * g[1][i] + a[2] * g[2][i];
            c.im = c.im - tau * s;
        }
    }
}

/// Exact flow of the coupling term for time `dt` (φ and q frozen).
pub fn coupling_kick<T: Real>(model: &DiscreteModel<T>, state: &FullState<T>, dt: T) -> Result<FullState<T>> {
    let mut s = model.to_spectral(state)?;
    kick(model, &mut s, dt);
    model.from_spectral(&s)
}

fn kick<T: Real>(model: &DiscreteModel<T>, s: &mut SpectralState<T>, tau: T) {
    let g = gradient_pairing(model, &s.phi);
    for r in 0..3 {
        s.p[r] = s.p[r] - tau * g[r];
    }
    shear(model, &mut s.pi, s.q, tau);
}

fn adjoint_kick<T: Real>(model: &DiscreteModel<T>, z: &mut SpectralState<T>, tau: T) {
    let g = gradient_pairing(model, &z.pi);
    for r in 0..3 {
        z.q[r] = z.q[r] - tau * g[r];
    }
    shear(model, &mut z.phi, z.p, tau);
}

/// Strang stepper `K(dt/2)·[W(dt) ⊕ oscillator(dt)]·K(dt/2)` and its transpose.
#[derive(Debug, Clone)]
pub struct Propagator<'a, T: Real> {
    model: &'a DiscreteModel<T>,
    dt: T,
    flow: FlowTable<T>,
}

impl<'a, T: Real> Propagator<'a, T> {
    pub fn new(model: &'a DiscreteModel<T>, dt: T) -> Self {
        Self {
            model,
            dt,
            flow: FlowTable::new(model, dt),
        }
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    fn free(&self, s: &mut SpectralState<T>) {
        self.flow.apply(&mut s.phi, &mut s.pi);
        let p = harmonic_step(&s.particle(), self.model.omega, self.dt);
        s.q = p.q;
        s.p = p.p;
    }

    fn free_transpose(&self, z: &mut SpectralState<T>) {
        self.flow.apply_transpose(&mut z.phi, &mut z.pi);
        let (s, c) = (self.model.omega * self.dt).sin_cos();
        let w = self.model.omega;
        for i in 0..3 {
            let (u, v) = (z.q[i], z.p[i]);
            z.q[i] = c * u - w * s * v;
            z.p[i] = s / w * u + c * v;
        }
    }

    /// One Strang step.
    pub fn step(&self, s: &mut SpectralState<T>) {
        let half = self.dt * lit(0.5);
        kick(self.model, s, half);
        self.free(s);
        kick(self.model, s, half);
    }

    /// Advances `steps` Strang steps, fusing consecutive half kicks.
    /// `observe` sees the state at step 0, every `stride` steps (if nonzero)
    /// and at the last step. Returns the particle state after every step.
    pub fn run<F>(
        &self,
        s: &mut SpectralState<T>,
        steps: usize,
        stride: usize,
        mut observe: F,
    ) -> Result<Vec<ParticleState<T>>>
    where
        F: FnMut(usize, &SpectralState<T>) -> Result<()>,
    {
        let mut history = Vec::with_capacity(steps + 1);
        history.push(s.particle());
        observe(0, s)?;
        if steps == 0 {
            return Ok(history);
        }
        let half = self.dt * lit(0.5);
        kick(self.model, s, half);
        for step in 1..=steps {
            self.free(s);
            let seen = step == steps || (stride > 0 && step % stride == 0);
            if seen {
                kick(self.model, s, half);
                history.push(s.particle());
                observe(step, s)?;
                if step < steps {
                    kick(self.model, s, half);
                }
            } else {
                let g = gradient_pairing(self.model, &s.phi);
                let mut rec = s.particle();
                for r in 0..3 {
                    rec.p[r] = rec.p[r] - half * g[r];
                    s.p[r] = s.p[r] - self.dt * g[r];
                }
                history.push(rec);
                shear(self.model, &mut s.pi, s.q, self.dt);
            }
            if !(s.q.iter().chain(&s.p).all(|v| v.is_finite())) {
                return Err(Error::Instability {
                    time: wide(self.dt * count(step)),
                    energy: f64::NAN,
                    initial: f64::NAN,
                });
            }
        }
        Ok(history)
    }

    /// Applies the transposed step `(S')^steps = (S^steps)'`, observing as
    /// in [`Propagator::run`].
    pub fn run_adjoint<F>(&self, z: &mut SpectralState<T>, steps: usize, stride: usize, mut observe: F) -> Result<()>
    where
        F: FnMut(usize, &SpectralState<T>) -> Result<()>,
    {
        observe(0, z)?;
        if steps == 0 {
            return Ok(());
        }
        let half = self.dt * lit(0.5);
        adjoint_kick(self.model, z, half);
        for step in 1..=steps {
            self.free_transpose(z);
            let seen = step == steps || (stride > 0 && step % stride == 0);
            if seen {
                adjoint_kick(self.model, z, half);
                observe(step, z)?;
                if step < steps {
                    adjoint_kick(self.model, z, half);
                }
            } else {
                adjoint_kick(self.model, z, self.dt);
            }
        }
        Ok(())
    }
}

/// Number of steps and the adjusted step size covering `[0, t_end]`.
pub fn step_plan<T: Real>(t_end: T, dt: T) -> Result<(usize, T)> {
    if !(dt > T::zero()) || !(t_end >= T::zero()) || !t_end.is_finite() {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("need dt > 0 and T >= 0, got dt = {dt}, T = {t_end}"),
        });
    }
    if t_end == T::zero() {
        return Ok((0, dt));
    }
    let n = (t_end / dt - lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
    Ok((n, t_end / count(n)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Evaluate `H` every this many steps (0: only at the ends).
    pub energy_stride: usize,
    /// Keep a full snapshot every this many steps (0: none besides the end).
    pub snapshot_stride: usize,
    /// Abort when `|H|` exceeds this multiple of `|H(Y0)|`.
    pub guard_factor: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            energy_stride: 10,
            snapshot_stride: 0,
            guard_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    /// Time of every step, starting at 0.
    pub times: Vec<T>,
    /// `(q, p)` after every step.
    pub particle: Vec<ParticleState<T>>,
    /// `(t, H)` at the energy stride.
    pub energy: Vec<(T, T)>,
    pub snapshots: Vec<(T, FullState<T>)>,
    pub final_state: FullState<T>,
}

/// Strang-split evolution of `y0` up to time `t_end` with step `≈ dt`
/// (adjusted so that an integer number of steps lands on `t_end`).
pub fn evolve<T: Real>(
    model: &DiscreteModel<T>,
    y0: &FullState<T>,
    t_end: T,
    dt: T,
    options: &EvolveOptions,
) -> Result<Trajectory<T>> {
    let (steps, h) = step_plan(t_end, dt)?;
    if steps == 0 {
        return Ok(Trajectory {
            times: vec![T::zero()],
            particle: vec![y0.particle],
            energy: vec![(T::zero(), hamiltonian(model, y0)?)],
            snapshots: vec![(T::zero(), y0.clone())],
            final_state: y0.clone(),
        });
    }
    let prop = Propagator::new(model, h);
    let mut s = model.to_spectral(y0)?;
    let h0 = hamiltonian_spectral(model, &s);
    let stride = match (options.energy_stride, options.snapshot_stride) {
        (0, 0) => 0,
        (0, b) | (b, 0) => b,
        (a, b) => gcd(a, b),
    };
    let mut energy = Vec::new();
    let mut snapshots = Vec::new();
    let history = prop.run(&mut s, steps, stride, |step, st| {
        let t = h * count(step);
        let last = step == steps;
        if last || (options.energy_stride > 0 && step % options.energy_stride == 0) {
            let e = hamiltonian_spectral(model, st);
            let blown = h0 != T::zero() && wide(e.abs()) > options.guard_factor * wide(h0.abs());
            if !e.is_finite() || blown {
                return Err(Error::Instability {
                    time: wide(t),
                    energy: wide(e),
                    initial: wide(h0),
                });
            }
            energy.push((t, e));
        }
        if !last && options.snapshot_stride > 0 && step % options.snapshot_stride == 0 {
            snapshots.push((t, model.from_spectral(st)?));
        }
        Ok(())
    })?;
    let final_state = model.from_spectral(&s)?;
    snapshots.push((t_end, final_state.clone()));
    Ok(Trajectory {
        times: (0..=steps).map(|j| h * count(j)).collect(),
        particle: history,
        energy,
        snapshots,
        final_state,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `H(Y)` with the field energy evaluated in Fourier space.
pub fn hamiltonian<T: Real>(model: &DiscreteModel<T>, y: &FullState<T>) -> Result<T> {
    Ok(hamiltonian_spectral(model, &model.to_spectral(y)?))
}

pub fn hamiltonian_spectral<T: Real>(model: &DiscreteModel<T>, s: &SpectralState<T>) -> T {
    let lat = &model.lattice;
    let mut field = T::zero();
    for n in 0..s.phi.len() {
        let freq = &model.frequencies[n];
        for (i, w) in lat.weight().iter().enumerate() {
            let (a, b) = (s.phi[n][i], s.pi[n][i]);
            field = field + *w * (freq[i] * freq[i] * a.norm_sqr() + b.norm_sqr());
        }
    }
    field = field * lit(0.5) / model.grid.volume();
    let g = gradient_pairing(model, &s.phi);
    let mut rest = T::zero();
    for r in 0..3 {
        rest = rest
            + s.q[r] * g[r]
            + lit::<T>(0.5) * (s.p[r] * s.p[r] + model.omega * model.omega * s.q[r] * s.q[r]);
    }
    field + rest
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalNorms<T> {
    /// `‖Y‖_{E(R)}`: ball energy with `m_n²φ_n²`, plus `|q|² + |p|²`.
    pub energy: T,
    /// `‖Y‖_{E,R}`: ball `H¹ × L²` norm (`φ² + |∇φ|² + π²`), plus `|q|² + |p|²`.
    pub sobolev: T,
}

/// Both local seminorms with the sharp indicator of `|x| < R`
/// (minimal image). `R = L/2` is taken to mean the whole box.
pub fn local_energy_norm<T: Real>(model: &DiscreteModel<T>, y: &FullState<T>, radius: T) -> Result<LocalNorms<T>> {
    local_energy_norm_spectral(model, &model.to_spectral(y)?, radius)
}

pub fn local_energy_norm_spectral<T: Real>(
    model: &DiscreteModel<T>,
    s: &SpectralState<T>,
    radius: T,
) -> Result<LocalNorms<T>> {
    Ok(local_energy_norms(model, s, &[radius])?[0])
}

/// Evaluates [`LocalNorms`] for several radii with one set of transforms.
pub fn local_energy_norms<T: Real>(
    model: &DiscreteModel<T>,
    s: &SpectralState<T>,
    radii: &[T],
) -> Result<Vec<LocalNorms<T>>> {
    let half = model.grid.box_length() * lit(0.5);
    for r in radii {
        if !(*r > T::zero() && *r <= half) {
            return Err(Error::RadiusOutOfRange {
                radius: wide(*r),
                limit: wide(half),
            });
        }
    }
    let dist = radius_table(&model.grid);
    let mut e = vec![T::zero(); radii.len()];
    let mut h1 = vec![T::zero(); radii.len()];
    let inside = |x: T, r: T| r == half || x < r;
    for n in 0..s.phi.len() {
        let phi = model.transform.inverse(&s.phi[n])?;
        let pi = model.transform.inverse(&s.pi[n])?;
        let mut grad2 = vec![T::zero(); phi.len()];
        for axis in 0..3 {
            let g = model.transform.inverse(&model.lattice.derivative(&s.phi[n], axis))?;
            for (a, b) in grad2.iter_mut().zip(&g) {
                *a = *a + *b * *b;
            }
        }
        let m2 = model.masses[n] * model.masses[n];
        for (k, r) in radii.iter().enumerate() {
            let (mut se, mut sh) = (T::zero(), T::zero());
            for i in 0..phi.len() {
                if inside(dist[i], *r) {
                    let base = grad2[i] + pi[i] * pi[i];
                    se = se + base + m2 * phi[i] * phi[i];
                    sh = sh + base + phi[i] * phi[i];
                }
            }
            e[k] = e[k] + se;
            h1[k] = h1[k] + sh;
        }
    }
    let h3 = model.grid.cell_volume();
    let particle: T = s.q.iter().chain(&s.p).map(|v| *v * *v).sum();
    Ok(e.iter()
        .zip(&h1)
        .map(|(a, b)| LocalNorms {
            energy: (*a * h3 + particle).sqrt(),
            sobolev: (*b * h3 + particle).sqrt(),
        })
        .collect())
}

/// State summary at one observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub t: T,
    pub particle: ParticleState<T>,
    pub energy: T,
    /// One entry per requested radius.
    pub local: Vec<LocalNorms<T>>,
}

/// Evolves `y0` like [`evolve`] and records an [`Observation`] every
/// `stride` steps and at the end, under the same energy guard.
pub fn observe<T: Real>(
    model: &DiscreteModel<T>,
    y0: &FullState<T>,
    t_end: T,
    dt: T,
    stride: usize,
    radii: &[T],
    guard_factor: f64,
) -> Result<Vec<Observation<T>>> {
    let (steps, h) = step_plan(t_end, dt)?;
    let mut s = model.to_spectral(y0)?;
    let h0 = hamiltonian_spectral(model, &s);
    let mut out = Vec::new();
    Propagator::new(model, h).run(&mut s, steps, stride, |step, st| {
        let t = h * count(step);
        let energy = hamiltonian_spectral(model, st);
        if !energy.is_finite() || (h0 != T::zero() && wide(energy.abs()) > guard_factor * wide(h0.abs())) {
            return Err(Error::Instability {
                time: wide(t),
                energy: wide(energy),
                initial: wide(h0),
            });
        }
        out.push(Observation {
            t,
            particle: st.particle(),
            energy,
            local: local_energy_norms(model, st, radii)?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// `U'(T)Z` by the transposed splitting.
pub fn adjoint_pullback<T: Real>(
    model: &DiscreteModel<T>,
    z: &TestFunctional<T>,
    t_end: T,
    dt: T,
) -> Result<TestFunctional<T>> {
    let (steps, h) = step_plan(t_end, dt)?;
    if steps == 0 {
        return Ok(z.clone());
    }
    let mut s = model.functional_to_spectral(z)?;
    Propagator::new(model, h).run_adjoint(&mut s, steps, 0, |_, _| Ok(()))?;
    model.functional_from_spectral(&s)
}

/// Pulls back a spectral functional and reports it at each requested time
/// (times must be nonnegative multiples of the adjusted step).
pub fn pullback_at<T: Real>(
    model: &DiscreteModel<T>,
    z: &SpectralState<T>,
    times: &[T],
    dt: T,
) -> Result<Vec<SpectralState<T>>> {
    let t_max = times.iter().copied().fold(T::zero(), T::max);
    let (steps, h) = step_plan(t_max, dt)?;
    let targets: Vec<usize> = times
        .iter()
        .map(|t| (*t / h).round().to_usize().unwrap_or(0))
        .collect();
    let mut out: Vec<Option<SpectralState<T>>> = vec![None; times.len()];
    let mut s = z.clone();
    Propagator::new(model, h).run_adjoint(&mut s, steps, 1, |step, st| {
        for (slot, t) in out.iter_mut().zip(&targets) {
            if *t == step {
                *slot = Some(st.clone());
            }
        }
        Ok(())
    })?;
    Ok(out.into_iter().map(|s| s.expect("every target visited")).collect())
}

/// `∫₀¹ u^m e^{−iθu} du` for `m ∈ {0, 1}`, with a series near `θ = 0`.
pub(crate) fn filon_moments<T: Real>(theta: T) -> (Complex<T>, Complex<T>) {
    if theta.abs() < lit(0.1) {
        let mut m0 = Complex::new(T::zero(), T::zero());
        let mut m1 = m0;
        let mut term = Complex::new(T::one(), T::zero());
        for k in 0..14 {
            let kk: T = count(k);
            m0 = m0 + term / (kk + T::one());
            m1 = m1 + term / (kk + lit(2.0));
            term = term * Complex::new(T::zero(), -theta) / (kk + T::one());
        }
        return (m0, m1);
    }
    let e = Complex::new(theta.cos(), -theta.sin());
    let i = Complex::new(T::zero(), T::one());
    let m0 = (Complex::new(T::one(), T::zero()) - e) / (i * theta);
    let m1 = i * e / theta - (Complex::new(T::one(), T::zero()) - e) / (theta * theta);
    (m0, m1)
}

/// Field at time `t_end` from `φ⁰` and a recorded particle path:
/// `φ(T) = W(T)φ⁰ − ∫₀^T W(T−s)(0, ∇ρ)·q(s) ds`, with `q` interpolated
/// linearly between samples and each piece integrated exactly against the
/// free propagator.
pub fn duhamel_reconstruct<T: Real>(
    model: &DiscreteModel<T>,
    phi0: &FieldState<T>,
    times: &[T],
    q: &[[T; 3]],
    t_end: T,
) -> Result<FieldState<T>> {
    if times.len() != q.len() || times.len() < 2 {
        return Err(Error::MissingTrajectory(format!(
            "{} times and {} positions",
            times.len(),
            q.len()
        )));
    }
    let tol = lit::<T>(1e-9) * (T::one() + t_end.abs());
    if times[0].abs() > tol || (times[times.len() - 1] - t_end).abs() > tol {
        return Err(Error::MissingTrajectory(format!(
            "samples span [{}, {}], need [0, {}]",
            times[0],
            times[times.len() - 1],
            t_end
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::MissingTrajectory("sample times must increase".into()));
    }
    let mut s = model.pack(&phi0.phi, &phi0.pi, [T::zero(); 3], [T::zero(); 3])?;
    FlowTable::new(model, t_end).apply(&mut s.phi, &mut s.pi);
    let zero = Complex::new(T::zero(), T::zero());
    for n in 0..model.d() {
        let g = &model.grad[n];
        for (idx, w) in model.frequencies[n].iter().enumerate() {
            let gk = [g[0][idx], g[1][idx], g[2][idx]];
            if gk.iter().all(|v| *v == T::zero()) {
                continue;
            }
            // I = ∫ e^{iω(T−s)} (g·q(s)) ds
            let mut acc = zero;
            for j in 0..times.len() - 1 {
                let (a, b) = (times[j], times[j + 1]);
                let delta = b - a;
                let (m0, m1) = filon_moments(*w * delta);
                let qa = gk[0] * q[j][0] + gk[1] * q[j][1] + gk[2] * q[j][2];
                let qb = gk[0] * q[j + 1][0] + gk[1] * q[j + 1][1] + gk[2] * q[j + 1][2];
                let ph = *w * (t_end - a);
                let rot = Complex::new(ph.cos(), ph.sin());
                acc = acc + rot * ((m0 - m1) * qa + m1 * qb) * delta;
            }
            // ∇ρ̂·q = i·(g·q): φ̂ −= i·∫ sin(ω(T−s))/ω (g·q), π̂ −= i·∫ cos(ω(T−s)) (g·q).
            let sin_part = if *w == T::zero() { T::zero() } else { acc.im / *w };
            let cos_part = acc.re;
            s.phi[n][idx].im = s.phi[n][idx].im - sin_part;
            s.pi[n][idx].im = s.pi[n][idx].im - cos_part;
        }
    }
    let (phi, pi) = model.unpack(&s)?;
    Ok(FieldState { phi, pi })
}
