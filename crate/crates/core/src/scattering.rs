//! Asymptotic-completeness profiles: the maps `α`, `β`, `θ` and the
//! scattered field functional `ψ^Z`, plus the residual they control.
//!
//! Everything is built per Fourier mode. For a field component with
//! frequency `ω`, `W'(−s)` acting on `(a, 0)` and `(0, a)` reduces the
//! `s`-integrals to the cosine and sine moments of the sampled kernel,
//! which are integrated with a piecewise-linear Filon rule.

use num_complex::{Complex, Complex64};

use crate::dynamics::{filon_moments, free_flow_transpose_spectral, pullback_at, SpectralState};
use crate::error::{Error, Result};
use crate::measures::{InitialCovariance, LimitCovariance};
use crate::model::DiscreteModel;
use crate::real::{lit, wide, Real};
use crate::resolvent::{inverse_laplace_n, time_grid, ContourParams, KernelN, ShellTable};

/// Largest admissible horizon, `L/2 − R_ρ`.
pub fn horizon_limit<T: Real>(model: &DiscreteModel<T>) -> f64 {
    wide(model.grid.box_length()) / 2.0 - model.support()
}

fn check_horizon<T: Real>(model: &DiscreteModel<T>, s_max: f64, ds: f64) -> Result<usize> {
    if !(ds > 0.0) || !ds.is_finite() {
        return Err(Error::InvalidParameter {
            name: "ds",
            reason: format!("must be positive and finite, got {ds}"),
        });
    }
    if !(s_max > 0.0) {
        return Err(Error::InvalidParameter {
            name: "s_max",
            reason: format!("must be positive, got {s_max}"),
        });
    }
    let limit = horizon_limit(model);
    if s_max >= limit {
        return Err(Error::HorizonExceedsBox { s_max, limit });
    }
    Ok((s_max / ds).round() as usize)
}

/// `N(s)` on `s_j = j·ds`, `0 ≤ s_j ≤ s_max`.
pub fn horizon_kernel<T: Real>(model: &DiscreteModel<T>, s_max: f64, ds: f64, contour: ContourParams) -> Result<KernelN> {
    check_horizon(model, s_max, ds)?;
    inverse_laplace_n(&ShellTable::new(model), &time_grid(s_max, ds), contour)
}

/// `∫₀^{J·ds} f(s) e^{iωs} ds` for `f` linear between the samples.
fn filon<const C: usize>(f: &[[f64; C]], ds: f64, omega: f64) -> [Complex64; C] {
    let mut out = [Complex64::new(0.0, 0.0); C];
    if f.len() < 2 {
        return out;
    }
    let (m0, m1) = filon_moments(omega * ds);
    let (a, b) = ((m0 - m1).conj() * ds, m1.conj() * ds);
    let step = Complex64::from_polar(1.0, omega * ds);
    let mut phase = Complex64::new(1.0, 0.0);
    for j in 0..f.len() - 1 {
        if j % 64 == 0 {
            phase = Complex64::from_polar(1.0, omega * ds * j as f64);
        }
        let (wa, wb) = (phase * a, phase * b);
        for c in 0..C {
            out[c] += wa * f[j][c] + wb * f[j + 1][c];
        }
        phase *= step;
    }
    out
}

/// Frequency of each shell of component `n` (shells absent from the lattice stay `None`).
fn shell_frequencies<T: Real>(model: &DiscreteModel<T>, n: usize) -> Vec<Option<f64>> {
    let shells = model.lattice.shell();
    let top = shells.iter().copied().max().unwrap_or(0) as usize;
    let mut out = vec![None; top + 1];
    for (idx, s) in shells.iter().enumerate() {
        let slot = &mut out[*s as usize];
        if slot.is_none() {
            *slot = Some(wide(model.frequencies[n][idx]));
        }
    }
    out
}

/// Runs `f(ω)` once per occupied shell of component `n`.
fn per_shell<T: Real, R: Clone>(model: &DiscreteModel<T>, n: usize, f: impl Fn(f64) -> R) -> Vec<Option<R>> {
    shell_frequencies(model, n).into_iter().map(|w| w.map(&f)).collect()
}

fn field_zeros<T: Real>(model: &DiscreteModel<T>) -> SpectralState<T> {
    SpectralState::zeros(model.d(), model.lattice.len())
}

/// `α^i` and `β^i` for `i = 1..3` on a fixed horizon.
#[derive(Debug, Clone)]
pub struct ScatteringPlan<T: Real> {
    pub s_max: f64,
    pub ds: f64,
    pub alpha: [SpectralState<T>; 3],
    pub beta: [SpectralState<T>; 3],
}

/// The profiles attached to one test functional.
#[derive(Debug, Clone)]
pub struct ScatteringProfiles<T: Real> {
    /// `θ_{·n}`, one field functional per source component `n`.
    pub theta: Vec<SpectralState<T>>,
    pub psi_z: SpectralState<T>,
}

impl<T: Real> ScatteringPlan<T> {
    /// Uses the first `s_max/ds` steps of `kernel`, which must be sampled
    /// uniformly from zero with spacing `ds`.
    pub fn new(model: &DiscreteModel<T>, kernel: &KernelN, s_max: f64, ds: f64) -> Result<Self> {
        let steps = check_horizon(model, s_max, ds)?;
        let ts = &kernel.t_samples;
        if ts.len() <= steps || (ts[steps] - steps as f64 * ds).abs() > 1e-9 * (1.0 + s_max) || ts[0] != 0.0 {
            return Err(Error::InvalidParameter {
                name: "kernel",
                reason: format!("samples must cover [0, {s_max}] with spacing {ds}"),
            });
        }
        let samples: Vec<[f64; 9]> = kernel.n_vals[..=steps]
            .iter()
            .map(|n| std::array::from_fn(|c| n[c / 3][c % 3]))
            .collect();
        let d = model.d();
        let mut alpha: [SpectralState<T>; 3] = std::array::from_fn(|_| field_zeros(model));
        let mut beta = alpha.clone();
        for n in 0..d {
            let moments = per_shell(model, n, |w| filon(&samples, ds, w));
            let grad = &model.grad[n];
            for (idx, shell) in model.lattice.shell().iter().enumerate() {
                let w = wide(model.frequencies[n][idx]);
                if w == 0.0 {
                    continue;
                }
                let m = moments[*shell as usize].as_ref().expect("occupied shell");
                let g = [0, 1, 2].map(|r| wide(grad[r][idx]));
                for i in 0..3 {
                    let (mut ic, mut is) = (0.0, 0.0);
                    for r in 0..3 {
                        ic += g[r] * m[i * 3 + r].re;
                        is += g[r] * m[i * 3 + r].im;
                    }
                    // ∇ρ̂ = i·grad, so every coefficient is purely imaginary.
                    alpha[i].phi[n][idx] = Complex::new(T::zero(), lit(-ic));
                    alpha[i].pi[n][idx] = Complex::new(T::zero(), lit(is / w));
                    beta[i].phi[n][idx] = Complex::new(T::zero(), lit(-w * is));
                    beta[i].pi[n][idx] = Complex::new(T::zero(), lit(-ic));
                }
            }
        }
        Ok(Self { s_max, ds, alpha, beta })
    }

    /// Builds the plan from scratch, evaluating `N(s)` on the horizon.
    pub fn from_model(model: &DiscreteModel<T>, s_max: f64, ds: f64, contour: ContourParams) -> Result<Self> {
        let kernel = horizon_kernel(model, s_max, ds, contour)?;
        Self::new(model, &kernel, s_max, ds)
    }

    /// `θ` and `ψ^Z = ψ − Σ_n θ_{·n} + α·u + β·v` for `Z = (ψ, u, v)`.
    pub fn profiles(&self, model: &DiscreteModel<T>, z: &SpectralState<T>) -> ScatteringProfiles<T> {
        let g = huygens_integrand(model, z, self.s_max, self.ds);
        let mut theta = Vec::with_capacity(model.d());
        for gn in &g {
            theta.push(self.theta_from(model, gn));
        }
        let mut psi_z = z.clone();
        psi_z.q = [T::zero(); 3];
        psi_z.p = [T::zero(); 3];
        for th in &theta {
            psi_z.axpy(-T::one(), th);
        }
        for i in 0..3 {
            psi_z.axpy(z.q[i], &self.alpha[i]);
            psi_z.axpy(z.p[i], &self.beta[i]);
        }
        ScatteringProfiles { theta, psi_z }
    }

    fn theta_from(&self, model: &DiscreteModel<T>, g: &[[f64; 3]]) -> SpectralState<T> {
        let mut out = field_zeros(model);
        for k in 0..model.d() {
            let moments = per_shell(model, k, |w| filon(g, self.ds, w));
            for (idx, shell) in model.lattice.shell().iter().enumerate() {
                let w = wide(model.frequencies[k][idx]);
                if w == 0.0 {
                    continue;
                }
                let m = moments[*shell as usize].as_ref().expect("occupied shell");
                let (mut a, mut b) = (Complex::new(T::zero(), T::zero()), Complex::new(T::zero(), T::zero()));
                for i in 0..3 {
                    let (jc, js) = (m[i].re, m[i].im);
                    let (a0, a1) = (self.alpha[i].phi[k][idx], self.alpha[i].pi[k][idx]);
                    a = a + a0 * lit::<T>(jc) + a1 * lit::<T>(w * js);
                    b = b + a1 * lit::<T>(jc) - a0 * lit::<T>(js / w);
                }
                out.phi[k][idx] = a;
                out.pi[k][idx] = b;
            }
        }
        out
    }
}

/// `g_{in}(s) = ⟨W_n(s)(0, ∂_iρ_n), ψ_n⟩` on `s_j = j·ds ≤ s_max`,
/// indexed `[n][j][i]`. For a massless component it vanishes once
/// `s` exceeds the sum of the supports of `ρ` and `ψ`.
pub fn huygens_integrand<T: Real>(model: &DiscreteModel<T>, psi: &SpectralState<T>, s_max: f64, ds: f64) -> Vec<Vec<[f64; 3]>> {
    let steps = (s_max / ds).round() as usize;
    let w = model.lattice.weight();
    let shells = model.lattice.shell();
    let vol = wide(model.grid.volume());
    let mut out = Vec::with_capacity(model.d());
    for n in 0..model.d() {
        let freqs = shell_frequencies(model, n);
        // Per shell: Σ w grad_i Im ψ̂⁰ and Σ w grad_i Im ψ̂¹.
        let mut a = vec![[0.0; 3]; freqs.len()];
        let mut b = vec![[0.0; 3]; freqs.len()];
        for (idx, s) in shells.iter().enumerate() {
            let wi = wide(w[idx]);
            let (p0, p1) = (wide(psi.phi[n][idx].im), wide(psi.pi[n][idx].im));
            for i in 0..3 {
                let g = wi * wide(model.grad[n][i][idx]);
                a[*s as usize][i] += g * p0;
                b[*s as usize][i] += g * p1;
            }
        }
        let live: Vec<(f64, [f64; 3], [f64; 3])> = freqs
            .iter()
            .enumerate()
            .filter_map(|(s, f)| f.map(|om| (om, a[s], b[s])))
            .filter(|(_, x, y)| x.iter().chain(y).any(|v| *v != 0.0))
            .collect();
        let mut gn = Vec::with_capacity(steps + 1);
        for j in 0..=steps {
            let s = j as f64 * ds;
            let mut acc = [0.0; 3];
            for (om, x, y) in &live {
                let (sn, c) = (om * s).sin_cos();
                let sw = if *om == 0.0 { s } else { sn / om };
                for i in 0..3 {
                    acc[i] += sw * x[i] + c * y[i];
                }
            }
            gn.push(acc.map(|v| v / vol));
        }
        out.push(gn);
    }
    out
}

/// `E|⟨Y(t), Z⟩ − ⟨W(t)φ⁰, ψ^Z⟩|²` as the single form
/// `C₀(D, D)` with `D = U'(t)Z − (W'(t)ψ^Z, 0, 0)`.
pub fn residual_second_moment<T: Real>(
    model: &DiscreteModel<T>,
    cov: &InitialCovariance,
    z: &SpectralState<T>,
    psi_z: &SpectralState<T>,
    times: &[T],
    dt: T,
) -> Result<Vec<f64>> {
    let pulled = pullback_at(model, z, times, dt)?;
    let mut out = Vec::with_capacity(times.len());
    for (p, t) in pulled.into_iter().zip(times) {
        let mut free = psi_z.clone();
        free.q = [T::zero(); 3];
        free.p = [T::zero(); 3];
        free_flow_transpose_spectral(model, &mut free, *t);
        let mut d = p;
        d.axpy(-T::one(), &free);
        out.push(cov.apply(model, &d, &d));
    }
    Ok(out)
}

/// `Q_∞(Z) = Q^ν_∞(ψ^Z, ψ^Z)`.
pub fn q_infinity<T: Real>(model: &DiscreteModel<T>, limit: &LimitCovariance, psi_z: &SpectralState<T>) -> f64 {
    limit.quadratic_form(model, psi_z, psi_z)
}
