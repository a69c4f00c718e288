mod common;

use common::*;
use kgfield::dynamics::*;
use kgfield::model::{check_conditions, DiscreteModel, ProfileSpec};
use kgfield::spectral::{radius_table, GridSpec};
use num_complex::Complex64;
use proptest::prelude::*;

fn small_model(amplitude: f64) -> DiscreteModel<f64> {
    model(&config(&[1.0], 1.0, ProfileSpec::gaussian(amplitude, 0.5, 1.9), 8.0, 4))
}

#[test]
fn strang_matches_dense_exponential() {
    let m = small_model(0.005);
    let oracle = DenseOracle::new(&m);
    let y0 = random_state(1, &m.grid, &mut rng(7));
    let exact = oracle.evolve(&y0, 1.0, &m.grid);
    let traj = evolve(&m, &y0, 1.0, 1e-3, &EvolveOptions::default()).unwrap();
    let err = max_abs_diff(&traj.final_state, &exact);
    assert!(err < 1e-8, "max error {err:e}");
    let decoupled = oracle_free(&y0, &m.grid);
    assert!(max_abs_diff(&decoupled, &exact) > 1e-3, "coupling must matter");
}

fn oracle_free(y0: &FullState<f64>, grid: &GridSpec<f64>) -> FullState<f64> {
    DenseOracle::new(&small_model(0.0)).evolve(y0, 1.0, grid)
}

#[test]
fn strang_error_is_second_order() {
    let m = small_model(1.0);
    let oracle = DenseOracle::new(&m);
    let y0 = random_state(1, &m.grid, &mut rng(8));
    let exact = oracle.evolve(&y0, 2.0, &m.grid);
    let err = |dt: f64| {
        let t = evolve(&m, &y0, 2.0, dt, &EvolveOptions::default()).unwrap();
        max_abs_diff(&t.final_state, &exact)
    };
    let ratio = err(4e-3) / err(2e-3);
    assert!((3.9..4.1).contains(&ratio), "ratio {ratio}");
}

#[test]
fn adjoint_duality_on_small_grid() {
    let m = small_model(0.8);
    let mut r = rng(11);
    for _ in 0..5 {
        let y = random_state(1, &m.grid, &mut r);
        let zs = random_state(1, &m.grid, &mut r);
        let z = TestFunctional {
            psi0: zs.field.phi,
            psi1: zs.field.pi,
            u: zs.particle.q,
            v: zs.particle.p,
        };
        let t = 1.7;
        let uy = evolve(&m, &y, t, 1e-2, &EvolveOptions::default()).unwrap().final_state;
        let uz = adjoint_pullback(&m, &z, t, 1e-2).unwrap();
        let zsp = m.functional_to_spectral(&z).unwrap();
        let lhs = pairing(&m, &m.to_spectral(&uy).unwrap(), &zsp);
        let rhs = pairing(&m, &m.to_spectral(&y).unwrap(), &m.functional_to_spectral(&uz).unwrap());
        let ys = m.to_spectral(&y).unwrap();
        let norms = pairing(&m, &ys, &ys).sqrt() * pairing(&m, &zsp, &zsp).sqrt();
        assert!((lhs - rhs).abs() < 1e-8 * norms, "{lhs} vs {rhs}");
    }
}

#[test]
fn adjoint_identity_and_decoupled_transpose() {
    let m = model(&config(&[0.0], 1.0, ProfileSpec::gaussian(0.0, 0.5, 1.5), 8.0, 8));
    let mut r = rng(3);
    let zs = random_state(1, &m.grid, &mut r);
    let z = TestFunctional {
        psi0: zs.field.phi.clone(),
        psi1: zs.field.pi.clone(),
        u: [0.0; 3],
        v: [0.0; 3],
    };
    assert_eq!(adjoint_pullback(&m, &z, 0.0, 0.01).unwrap(), z);
    // ⟨W(T)φ, ψ⟩ = ⟨φ, W'(T)ψ⟩ for the free flow.
    let phi = random_state(1, &m.grid, &mut r).field;
    let t = 2.3;
    let wz = adjoint_pullback(&m, &z, t, 0.1).unwrap();
    let wphi = free_field_step(&m, &phi, t).unwrap();
    let pair = |a: &FieldState<f64>, b: &TestFunctional<f64>| {
        let h3 = m.grid.cell_volume();
        let s: f64 = a.phi[0].iter().zip(&b.psi0[0]).map(|(x, y)| x * y).sum::<f64>()
            + a.pi[0].iter().zip(&b.psi1[0]).map(|(x, y)| x * y).sum::<f64>();
        s * h3
    };
    let lhs = pair(&wphi, &z);
    let rhs = pair(&phi, &wz);
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
}

fn coupled_run(m: &DiscreteModel<f64>, y0: &FullState<f64>, t: f64, dt: f64) -> f64 {
    let traj = evolve(m, y0, t, dt, &EvolveOptions::default()).unwrap();
    let q: Vec<[f64; 3]> = traj.particle.iter().map(|p| p.q).collect();
    let field0 = FieldState {
        phi: y0.field.phi.clone(),
        pi: y0.field.pi.clone(),
    };
    let rec = duhamel_reconstruct(m, &field0, &traj.times, &q, t).unwrap();
    rec.phi[0]
        .iter()
        .zip(&traj.final_state.field.phi[0])
        .chain(rec.pi[0].iter().zip(&traj.final_state.field.pi[0]))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn duhamel_converges_at_second_order() {
    let m = model(&config(&[1.0], 1.0, ProfileSpec::gaussian(1.0, 0.5, 1.9), 8.0, 16));
    let mut y0 = FullState::zeros(1, &m.grid);
    y0.field.phi[0] = kgfield::model::smooth_bump(&m.grid, [0.5, 0.0, 0.0], 1.0, 0.6, 1.9);
    y0.particle.q = [0.3, -0.2, 0.1];
    y0.particle.p = [0.0, 0.5, 0.0];
    let coarse = coupled_run(&m, &y0, 4.0, 1e-2);
    let fine = coupled_run(&m, &y0, 4.0, 5e-3);
    let ratio = coarse / fine;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio} ({coarse:e}, {fine:e})");
}

#[test]
fn duhamel_trivial_cases() {
    let m = model(&config(&[1.0], 1.0, ProfileSpec::gaussian(0.0, 0.5, 1.9), 8.0, 8));
    let field = random_state(1, &m.grid, &mut rng(5)).field;
    let times = vec![0.0, 0.5, 1.0];
    let q = vec![[1.0, 2.0, 3.0]; 3];
    let rec = duhamel_reconstruct(&m, &field, &times, &q, 1.0).unwrap();
    assert_eq!(rec, free_field_step(&m, &field, 1.0).unwrap());
    let coupled = model(&config(&[1.0], 1.0, ProfileSpec::gaussian(1.0, 0.5, 1.9), 8.0, 8));
    let rec = duhamel_reconstruct(&coupled, &field, &times, &[[0.0; 3]; 3], 1.0).unwrap();
    assert_eq!(rec, free_field_step(&coupled, &field, 1.0).unwrap());
    assert!(duhamel_reconstruct(&coupled, &field, &times[..2], &q, 1.0).is_err());
}

/// Band-limited smooth field `Σ c cos(k·x) + s sin(k·x)` over `|j|∞ ≤ 1`.
struct TrigField {
    terms: Vec<([f64; 3], f64, f64)>,
}

impl TrigField {
    fn random(box_length: f64, r: &mut rand_chacha::ChaCha8Rng) -> Self {
        let dk = 2.0 * std::f64::consts::PI / box_length;
        let mut terms = Vec::new();
        for jx in -1..=1 {
            for jy in -1..=1 {
                for jz in 0..=1 {
                    terms.push(([dk * jx as f64, dk * jy as f64, dk * jz as f64], 0.3 * normal(r), 0.3 * normal(r)));
                }
            }
        }
        Self { terms }
    }

    fn at(&self, x: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(k, c, s)| {
                let ph = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
                c * ph.cos() + s * ph.sin()
            })
            .sum()
    }

    fn sample(&self, grid: &GridSpec<f64>) -> Vec<f64> {
        (0..grid.real_len()).map(|i| self.at(grid.point(i))).collect()
    }
}

/// Trigonometric interpolant of grid samples evaluated on a finer grid by
/// direct sums (the Nyquist terms enter as cosines).
fn interpolate(f: &[f64], coarse: &GridSpec<f64>, fine: &GridSpec<f64>) -> Vec<f64> {
    let n = coarse.n() as i64;
    let dk = 2.0 * std::f64::consts::PI / coarse.box_length();
    let pts: Vec<[f64; 3]> = (0..coarse.real_len()).map(|i| coarse.point(i)).collect();
    let mut modes = Vec::new();
    for jx in -n / 2..n / 2 {
        for jy in -n / 2..n / 2 {
            for jz in -n / 2..n / 2 {
                let k = [dk * jx as f64, dk * jy as f64, dk * jz as f64];
                let (mut re, mut im) = (0.0, 0.0);
                for (x, v) in pts.iter().zip(f) {
                    let ph = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
                    re += v * ph.cos();
                    im -= v * ph.sin();
                }
                let nyq = [jx, jy, jz].iter().any(|j| *j == -n / 2);
                modes.push((k, re, if nyq { 0.0 } else { im }));
            }
        }
    }
    let norm = 1.0 / coarse.real_len() as f64;
    (0..fine.real_len())
        .map(|i| {
            let x = fine.point(i);
            let mut acc = 0.0;
            for (k, re, im) in &modes {
                let ph = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
                acc += re * ph.cos() - im * ph.sin();
            }
            acc * norm
        })
        .collect()
}

/// Fourth-order periodic central difference along `axis`.
fn fd4(f: &[f64], grid: &GridSpec<f64>, axis: usize) -> Vec<f64> {
    let n = grid.n();
    let h = grid.spacing();
    (0..f.len())
        .map(|idx| {
            let mut c = [idx / (n * n), (idx / n) % n, idx % n];
            let base = c[axis];
            let mut at = |o: isize| {
                c[axis] = (base as isize + o).rem_euclid(n as isize) as usize;
                f[grid.real_index(c[0], c[1], c[2])]
            };
            (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)
        })
        .collect()
}

#[test]
fn hamiltonian_matches_refined_finite_differences() {
    let profile = ProfileSpec::gaussian(200.0, 0.3, 0.95);
    let (l, mass, omega) = (4.0, 1.0, 1.5);
    let coarse = model(&config(&[mass], omega, profile, l, 8));
    let g = GridSpec::new(l, 32).unwrap();
    let rho = interpolate(&coarse.profiles[0].values, &coarse.grid, &g);
    let mut r = rng(21);
    for _ in 0..3 {
        let phi = TrigField::random(l, &mut r);
        let pi = TrigField::random(l, &mut r);
        let q = [3.0 * normal(&mut r), 3.0 * normal(&mut r), 3.0 * normal(&mut r)];
        let p = [normal(&mut r), normal(&mut r), normal(&mut r)];
        let mut y = FullState::zeros(1, &coarse.grid);
        y.field.phi[0] = phi.sample(&coarse.grid);
        y.field.pi[0] = pi.sample(&coarse.grid);
        y.particle = ParticleState { q, p };
        let h = hamiltonian(&coarse, &y).unwrap();

        let f = phi.sample(&g);
        let v = pi.sample(&g);
        let mut field = 0.0;
        let mut coupling = 0.0;
        for axis in 0..3 {
            let df = fd4(&f, &g, axis);
            let dr = fd4(&rho, &g, axis);
            field += df.iter().map(|x| x * x).sum::<f64>();
            coupling += q[axis] * f.iter().zip(&dr).map(|(a, b)| a * b).sum::<f64>();
        }
        field += f.iter().zip(&v).map(|(a, b)| mass * mass * a * a + b * b).sum::<f64>();
        let h3 = g.cell_volume();
        let particle: f64 = (0..3).map(|i| 0.5 * (p[i] * p[i] + omega * omega * q[i] * q[i])).sum();
        let oracle = 0.5 * field * h3 + coupling * h3 + particle;
        assert!(((h - oracle) / oracle).abs() < 1e-2, "{h} vs {oracle}");
        assert!((coupling * h3).abs() > 1e-2 * oracle.abs(), "coupling {} of {oracle}", coupling * h3);
    }
}

#[test]
fn hamiltonian_nonnegative_under_a1p() {
    let m = model(&config(&[1.0], 1.0, ProfileSpec::gaussian(1.5, 0.5, 1.9), 8.0, 8));
    let report = check_conditions(&m);
    assert!(report.a1p_holds, "{report:?}");
    let mut r = rng(99);
    let len = m.lattice.len();
    for trial in 0..1000 {
        let q = [normal(&mut r), normal(&mut r), normal(&mut r)];
        // Minimizer of H over φ for this q, plus a perturbation of random size.
        let mut s = kgfield::dynamics::SpectralState::zeros(1, len);
        s.q = q;
        for idx in 0..len {
            let w2 = m.frequencies[0][idx].powi(2);
            let g = (0..3).map(|a| q[a] * m.grad[0][a][idx]).sum::<f64>();
            s.phi[0][idx] = Complex64::new(0.0, g / w2);
        }
        let eps = 10f64.powf(-6.0 * (trial as f64 / 1000.0));
        let noise = random_state(1, &m.grid, &mut r);
        let ns = m.to_spectral(&noise).unwrap();
        for (a, b) in s.phi[0].iter_mut().zip(&ns.phi[0]) {
            *a += b * eps;
        }
        let h = hamiltonian_spectral(&m, &s);
        let scale = 0.5 * (q.iter().map(|v| v * v).sum::<f64>() + m.lattice.norm_sqr(&s.phi[0]));
        assert!(h >= -1e-12 * scale, "trial {trial}: H = {h:e}");
    }
}

#[test]
fn energy_drift_is_second_order() {
    let m = model(&config(&[1.0], 1.0, ProfileSpec::gaussian(1.0, 0.5, 1.9), 8.0, 16));
    let mut y0 = FullState::zeros(1, &m.grid);
    y0.field.phi[0] = kgfield::model::smooth_bump(&m.grid, [0.0; 3], 0.5, 0.6, 1.9);
    y0.particle.q = [0.5, 0.0, 0.2];
    let drift = |dt: f64| {
        let opts = EvolveOptions {
            energy_stride: 1,
            ..Default::default()
        };
        let t = evolve(&m, &y0, 20.0, dt, &opts).unwrap();
        let h0 = t.energy[0].1;
        t.energy.iter().map(|(_, h)| ((h - h0) / h0).abs()).fold(0.0, f64::max)
    };
    let (a, b) = (drift(0.02), drift(0.01));
    assert!(b < 1e-4, "drift {b:e}");
    assert!((3.5..4.5).contains(&(a / b)), "ratio {}", a / b);
}

#[test]
fn finite_propagation_speed() {
    // ρ is resolved by about 1.6 points per width, so its band-limited
    // interpolant leaks below 1e-13 of the peak.
    let rho_support = 1.95;
    let cfg = config(&[1.0], 1.0, ProfileSpec::gaussian(0.5, 0.2, rho_support), 8.0, 96);
    let m = model(&cfg);
    let mut y = FullState::zeros(1, &m.grid);
    y.particle.p = [1.0, 0.0, 0.0];
    let t = 2.0;
    let traj = evolve(&m, &y, t, 0.01, &EvolveOptions::default()).unwrap();
    let f = &traj.final_state.field;
    let dist = radius_table(&m.grid);
    let mut peak = 0.0f64;
    let mut outside = 0.0f64;
    for i in 0..dist.len() {
        let v = f.phi[0][i].abs().max(f.pi[0][i].abs());
        peak = peak.max(v);
        if dist[i] > rho_support + t {
            outside = outside.max(v);
        }
    }
    assert!(peak > 0.0 && outside < 1e-10 * peak, "ratio {:e}", outside / peak);
}

#[test]
fn a_priori_bound_is_stable_under_refinement() {
    let m = model(&config(&[1.0], 1.0, ProfileSpec::gaussian(1.0, 0.5, 1.9), 16.0, 32));
    let mut y0 = FullState::zeros(1, &m.grid);
    y0.field.pi[0] = kgfield::model::smooth_bump(&m.grid, [1.0, 0.0, 0.0], 1.0, 0.6, 2.0);
    y0.particle.p = [0.0, 0.0, 1.0];
    let half = 8.0;
    let constant = |dt: f64| {
        let opts = EvolveOptions {
            energy_stride: 0,
            snapshot_stride: (0.5 / dt).round() as usize,
            ..Default::default()
        };
        let traj = evolve(&m, &y0, 6.0, dt, &opts).unwrap();
        let n0 = local_energy_norm(&m, &y0, half).unwrap().energy;
        traj.snapshots
            .iter()
            .map(|(_, y)| local_energy_norm(&m, y, half).unwrap().energy / n0)
            .fold(0.0, f64::max)
    };
    let (a, b) = (constant(0.02), constant(0.01));
    assert!(a.is_finite() && a < 10.0, "C = {a}");
    assert!(((a - b) / b).abs() < 1e-3, "{a} vs {b}");
}

fn arb_state() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 2 * 64 + 6)
}

fn state_from(v: &[f64], grid: &GridSpec<f64>) -> FullState<f64> {
    let mut y = FullState::zeros(1, grid);
    y.field.phi[0].copy_from_slice(&v[..64]);
    y.field.pi[0].copy_from_slice(&v[64..128]);
    y.particle.q.copy_from_slice(&v[128..131]);
    y.particle.p.copy_from_slice(&v[131..134]);
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn evolve_is_linear(a in arb_state(), b in arb_state(), s in -3.0f64..3.0) {
        let m = small_model(0.7);
        let ya = state_from(&a, &m.grid);
        let yb = state_from(&b, &m.grid);
        let mut comb = ya.clone();
        for (x, y) in comb.field.phi[0].iter_mut().zip(&yb.field.phi[0]) { *x += s * y; }
        for (x, y) in comb.field.pi[0].iter_mut().zip(&yb.field.pi[0]) { *x += s * y; }
        for i in 0..3 {
            comb.particle.q[i] += s * yb.particle.q[i];
            comb.particle.p[i] += s * yb.particle.p[i];
        }
        let opts = EvolveOptions { guard_factor: f64::INFINITY, ..Default::default() };
        let ua = evolve(&m, &ya, 0.5, 0.05, &opts).unwrap().final_state;
        let ub = evolve(&m, &yb, 0.5, 0.05, &opts).unwrap().final_state;
        let uc = evolve(&m, &comb, 0.5, 0.05, &opts).unwrap().final_state;
        let mut expect = ua.clone();
        for (x, y) in expect.field.phi[0].iter_mut().zip(&ub.field.phi[0]) { *x += s * y; }
        for (x, y) in expect.field.pi[0].iter_mut().zip(&ub.field.pi[0]) { *x += s * y; }
        for i in 0..3 {
            expect.particle.q[i] += s * ub.particle.q[i];
            expect.particle.p[i] += s * ub.particle.p[i];
        }
        prop_assert!(max_abs_diff(&uc, &expect) < 1e-11);
    }

    #[test]
    fn free_flow_keeps_mode_invariant(a in arb_state(), t in -5.0f64..5.0) {
        let m = small_model(0.0);
        let y = state_from(&a, &m.grid);
        let before = m.to_spectral(&y).unwrap();
        let after = m.to_spectral(&FullState {
            field: free_field_step(&m, &y.field, t).unwrap(),
            particle: y.particle,
        }).unwrap();
        for idx in 0..m.lattice.len() {
            let w2 = m.frequencies[0][idx].powi(2);
            let e = |s: &SpectralState<f64>| w2 * s.phi[0][idx].norm_sqr() + s.pi[0][idx].norm_sqr();
            let (e0, e1) = (e(&before), e(&after));
            prop_assert!((e0 - e1).abs() <= 1e-12 * e0.max(1e-300) + 1e-13);
        }
    }

    #[test]
    fn kicks_compose_additively(a in arb_state(), s in -1.0f64..1.0, u in -1.0f64..1.0) {
        let m = small_model(0.9);
        let y = state_from(&a, &m.grid);
        let two = coupling_kick(&m, &coupling_kick(&m, &y, s).unwrap(), u).unwrap();
        let one = coupling_kick(&m, &y, s + u).unwrap();
        prop_assert!(max_abs_diff(&two, &one) < 1e-12);
    }

    #[test]
    fn harmonic_energy_conserved(q in prop::array::uniform3(-5.0f64..5.0), p in prop::array::uniform3(-5.0f64..5.0),
                                 w in 0.1f64..10.0, t in -20.0f64..20.0) {
        let s = harmonic_step(&ParticleState { q, p }, w, t);
        let e = |x: &ParticleState<f64>| (0..3).map(|i| w * w * x.q[i] * x.q[i] + x.p[i] * x.p[i]).sum::<f64>();
        let e0 = e(&ParticleState { q, p });
        prop_assert!((e(&s) - e0).abs() <= 1e-13 * e0.max(1e-300) + 1e-300);
    }
}
