//! CSV, JSON and binary artifacts. Every float is written with 17
//! significant digits so that identical runs give identical bytes.

use std::io::Write;

use serde::Serialize;

use crate::dynamics::{Observation, SpectralState};
use crate::error::Result;
use crate::measures::EnsembleStats;
use crate::model::DiscreteModel;
use crate::real::{wide, Real};
use crate::resolvent::{ContourParams, KernelN};
use crate::scattering::{horizon_limit, ScatteringPlan, ScatteringProfiles};

/// Round-trip decimal form of `x`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Columns `t, q1..q3, p1..p3, H` and one `local_norm_R` per radius.
pub fn write_trajectory_csv<T: Real, W: Write>(out: W, radii: &[f64], rows: &[Observation<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["t", "q1", "q2", "q3", "p1", "p2", "p3", "H"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(radii.iter().map(|r| format!("local_norm_{r}")));
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![num(wide(row.t))];
        rec.extend(row.particle.q.iter().chain(&row.particle.p).map(|v| num(wide(*v))));
        rec.push(num(wide(row.energy)));
        rec.extend(row.local.iter().map(|l| num(wide(l.sobolev))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t`, the nine entries of `N` row by row, then those of `Ṅ`.
pub fn write_kernel_csv<W: Write>(out: W, kernel: &KernelN) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for name in ["N", "Ndot"] {
        for i in 1..=3 {
            for j in 1..=3 {
                header.push(format!("{name}{i}{j}"));
            }
        }
    }
    w.write_record(&header)?;
    for ((t, n), nd) in kernel.t_samples.iter().zip(&kernel.n_vals).zip(&kernel.ndot_vals) {
        let mut rec = vec![num(*t)];
        rec.extend(n.iter().chain(nd).flatten().map(|v| num(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelMetadata {
    pub contour: ContourParams,
    pub samples: usize,
    pub t_end: f64,
    pub imag_residue: f64,
    pub tail_estimate: f64,
}

impl KernelMetadata {
    pub fn new(kernel: &KernelN) -> Self {
        Self {
            contour: kernel.contour,
            samples: kernel.t_samples.len(),
            t_end: kernel.t_samples.last().copied().unwrap_or(0.0),
            imag_residue: kernel.imag_residue,
            tail_estimate: kernel.tail_estimate,
        }
    }
}

/// Long-format statistics: columns `t, functional, quantity, empirical,
/// exact, se`. `exact_q[k][z]` is `Q_t(Z, Z)` at `stats.times[k]`.
///
/// Quantities per functional: `mean` (exact 0), `second_moment`
/// (exact `Q_t`), `char_re` (exact `exp(−Q_t/2)`) and `char_im` (exact 0).
pub fn write_stats_csv<W: Write>(out: W, stats: &EnsembleStats, exact_q: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "functional", "quantity", "empirical", "exact", "se"])?;
    for ((t, row), exact) in stats.times.iter().zip(&stats.stats).zip(exact_q) {
        for (z, (s, q)) in row.iter().zip(exact).enumerate() {
            let quantities = [
                ("mean", s.mean, 0.0, s.mean_se),
                ("second_moment", s.second_moment, *q, s.second_moment_se),
                ("char_re", s.char_re, (-0.5 * q).exp(), s.char_se),
                ("char_im", s.char_im, 0.0, s.char_se),
            ];
            for (name, emp, ex, se) in quantities {
                w.write_record([num(*t), z.to_string(), name.to_string(), num(emp), num(ex), num(se)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ArrayEntry {
    pub name: String,
    /// Offset into the dump, in f64 elements.
    pub offset: usize,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileDescriptor {
    pub dtype: &'static str,
    /// Real-space layout of every field block.
    pub order: &'static str,
    pub box_length: f64,
    pub grid_n: usize,
    pub components: usize,
    pub s_max: f64,
    pub ds: f64,
    pub horizon_limit: f64,
    pub arrays: Vec<ArrayEntry>,
}

struct Dump<W> {
    out: W,
    written: usize,
    arrays: Vec<ArrayEntry>,
}

impl<W: Write> Dump<W> {
    fn push(&mut self, name: String, shape: Vec<usize>, values: impl Iterator<Item = f64>) -> Result<()> {
        let offset = self.written;
        for v in values {
            self.out.write_all(&v.to_le_bytes())?;
            self.written += 1;
        }
        debug_assert_eq!(self.written - offset, shape.iter().product::<usize>());
        self.arrays.push(ArrayEntry { name, offset, shape });
        Ok(())
    }

    /// Field parts as `[2, d, N, N, N]` (slot 0 pairs with `φ`, slot 1
    /// with `π`), particle parts as `[2, 3]`.
    fn state<T: Real>(&mut self, model: &DiscreteModel<T>, name: &str, s: &SpectralState<T>, particle: bool) -> Result<()> {
        let n = model.grid.n();
        let f = model.functional_from_spectral(s)?;
        let values = f.psi0.iter().chain(&f.psi1).flatten().map(|v| wide(*v)).collect::<Vec<_>>();
        self.push(name.to_string(), vec![2, model.d(), n, n, n], values.into_iter())?;
        if particle {
            let uv = f.u.iter().chain(&f.v).map(|v| wide(*v)).collect::<Vec<_>>();
            self.push(format!("{name}_particle"), vec![2, 3], uv.into_iter())?;
        }
        Ok(())
    }
}

/// Dumps `α^i`, `β^i` and, for each functional `z`, `θ_{z,n}` and `ψ^Z`
/// as little-endian f64 to `out`, returning the matching descriptor.
pub fn write_profiles<T: Real, W: Write>(
    out: W,
    model: &DiscreteModel<T>,
    plan: &ScatteringPlan<T>,
    profiles: &[ScatteringProfiles<T>],
) -> Result<ProfileDescriptor> {
    let mut dump = Dump {
        out,
        written: 0,
        arrays: Vec::new(),
    };
    for i in 0..3 {
        dump.state(model, &format!("alpha_{}", i + 1), &plan.alpha[i], false)?;
        dump.state(model, &format!("beta_{}", i + 1), &plan.beta[i], false)?;
    }
    for (z, p) in profiles.iter().enumerate() {
        for (n, theta) in p.theta.iter().enumerate() {
            dump.state(model, &format!("theta_{z}_{n}"), theta, false)?;
        }
        dump.state(model, &format!("psi_z_{z}"), &p.psi_z, true)?;
    }
    dump.out.flush()?;
    Ok(ProfileDescriptor {
        dtype: "f64-le",
        order: "row-major, index (ix, iy, iz) with iz fastest, x = (i - N if i >= N/2 else i) * L/N",
        box_length: wide(model.grid.box_length()),
        grid_n: model.grid.n(),
        components: model.d(),
        s_max: plan.s_max,
        ds: plan.ds,
        horizon_limit: horizon_limit(model),
        arrays: dump.arrays,
    })
}
