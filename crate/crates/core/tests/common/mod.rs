#![allow(dead_code)]

use kgfield::dynamics::FullState;
use kgfield::model::{DiscreteModel, ModelConfig, ProfileSpec};
use kgfield::spectral::GridSpec;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn config(masses: &[f64], omega: f64, profile: ProfileSpec, box_length: f64, grid_n: usize) -> ModelConfig {
    ModelConfig {
        masses: masses.to_vec(),
        omega,
        profiles: vec![profile; masses.len()],
        box_length,
        grid_n,
        dt: 0.01,
    }
}

pub fn model(cfg: &ModelConfig) -> DiscreteModel<f64> {
    DiscreteModel::new(cfg).unwrap()
}

/// Independent white-noise state.
pub fn random_state(d: usize, grid: &GridSpec<f64>, rng: &mut ChaCha8Rng) -> FullState<f64> {
    let mut y = FullState::zeros(d, grid);
    for v in y.field.phi.iter_mut().chain(y.field.pi.iter_mut()).flatten() {
        *v = normal(rng);
    }
    for v in y.particle.q.iter_mut().chain(y.particle.p.iter_mut()) {
        *v = normal(rng);
    }
    y
}

pub fn max_abs_diff(a: &FullState<f64>, b: &FullState<f64>) -> f64 {
    let field = a
        .field
        .phi
        .iter()
        .chain(&a.field.pi)
        .flatten()
        .zip(b.field.phi.iter().chain(&b.field.pi).flatten())
        .map(|(x, y)| (x - y).abs());
    let particle = a
        .particle
        .q
        .iter()
        .chain(&a.particle.p)
        .zip(b.particle.q.iter().chain(&b.particle.p))
        .map(|(x, y)| (x - y).abs());
    field.chain(particle).fold(0.0, f64::max)
}

/// Dense generator of the discretized equations of motion for `d = 1`,
/// assembled from direct trigonometric sums (no FFT). State ordering is
/// `[φ(x), π(x), q, p]`.
pub struct DenseOracle {
    pub n: usize,
    pub generator: DMatrix<f64>,
}

impl DenseOracle {
    pub fn new(model: &DiscreteModel<f64>) -> Self {
        assert_eq!(model.d(), 1);
        let grid = model.grid;
        let n = grid.n();
        let len = grid.real_len();
        let l = grid.box_length();
        let h3 = grid.cell_volume();
        let dk = 2.0 * std::f64::consts::PI / l;
        let half = (n / 2) as i64;
        let modes: Vec<[i64; 3]> = (0..n * n * n)
            .map(|i| {
                let s = |v: usize| v as i64 - half;
                [s(i / (n * n)), s((i / n) % n), s(i % n)]
            })
            .collect();
        let pts: Vec<[f64; 3]> = (0..len).map(|i| grid.point(i)).collect();
        let rho = &model.profiles[0].values;
        let dot = |j: &[i64; 3], x: &[f64; 3]| dk * (j[0] as f64 * x[0] + j[1] as f64 * x[1] + j[2] as f64 * x[2]);
        // ρ̂(k) = h³ Σ ρ(y) e^{−ik·y}
        let rho_hat: Vec<(f64, f64)> = modes
            .iter()
            .map(|j| {
                let mut acc = (0.0, 0.0);
                for (y, r) in pts.iter().zip(rho) {
                    let ph = dot(j, y);
                    acc.0 += r * ph.cos();
                    acc.1 -= r * ph.sin();
                }
                (acc.0 * h3, acc.1 * h3)
            })
            .collect();
        let inv_vol = 1.0 / (l * l * l);
        let mut lap = DMatrix::zeros(len, len);
        for a in 0..len {
            for b in 0..len {
                let diff = [pts[a][0] - pts[b][0], pts[a][1] - pts[b][1], pts[a][2] - pts[b][2]];
                let mut acc = 0.0;
                for j in &modes {
                    let k2 = dk * dk * (j[0] * j[0] + j[1] * j[1] + j[2] * j[2]) as f64;
                    acc -= k2 * dot(j, &diff).cos();
                }
                lap[(a, b)] = acc * inv_vol * h3;
            }
        }
        // ∂_r ρ(x) = L⁻³ Σ i k'_r ρ̂(k) e^{ik·x}, Nyquist derivative dropped.
        let mut grad = vec![vec![0.0; len]; 3];
        for (r, g) in grad.iter_mut().enumerate() {
            for (a, x) in pts.iter().enumerate() {
                let mut acc = 0.0;
                for (j, rh) in modes.iter().zip(&rho_hat) {
                    if j[r] == -half {
                        continue;
                    }
                    let k = dk * j[r] as f64;
                    let ph = dot(j, x);
                    // Re(i k (a + ib)(cos + i sin)) = −k (a sin + b cos)
                    acc -= k * (rh.0 * ph.sin() + rh.1 * ph.cos());
                }
                g[a] = acc * inv_vol;
            }
        }
        let dim = 2 * len + 6;
        let mut gen = DMatrix::zeros(dim, dim);
        let m2 = model.masses[0] * model.masses[0];
        let w2 = model.omega * model.omega;
        for a in 0..len {
            gen[(a, len + a)] = 1.0;
            for b in 0..len {
                gen[(len + a, b)] = lap[(a, b)];
            }
            gen[(len + a, a)] -= m2;
            for r in 0..3 {
                gen[(len + a, 2 * len + r)] = -grad[r][a];
                gen[(2 * len + 3 + r, a)] = -h3 * grad[r][a];
            }
        }
        for r in 0..3 {
            gen[(2 * len + r, 2 * len + 3 + r)] = 1.0;
            gen[(2 * len + 3 + r, 2 * len + r)] = -w2;
        }
        Self { n: len, generator: gen }
    }

    pub fn pack(&self, y: &FullState<f64>) -> Vec<f64> {
        let mut v = y.field.phi[0].clone();
        v.extend(&y.field.pi[0]);
        v.extend(y.particle.q);
        v.extend(y.particle.p);
        v
    }

    pub fn unpack(&self, v: &[f64], grid: &GridSpec<f64>) -> FullState<f64> {
        let len = self.n;
        let mut y = FullState::zeros(1, grid);
        y.field.phi[0].copy_from_slice(&v[..len]);
        y.field.pi[0].copy_from_slice(&v[len..2 * len]);
        y.particle.q.copy_from_slice(&v[2 * len..2 * len + 3]);
        y.particle.p.copy_from_slice(&v[2 * len + 3..]);
        y
    }

    /// `exp(tA)·y`.
    pub fn evolve(&self, y: &FullState<f64>, t: f64, grid: &GridSpec<f64>) -> FullState<f64> {
        let e = (&self.generator * t).exp();
        let v = e * nalgebra::DVector::from_vec(self.pack(y));
        self.unpack(v.as_slice(), grid)
    }
}
