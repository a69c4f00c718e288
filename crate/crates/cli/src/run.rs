//! One function per experiment. Artifacts go to the configured output
//! directory and nowhere else.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use kgfield::dynamics::{observe, TestFunctional};
use kgfield::io::{
    num, write_kernel_csv, write_profiles, write_stats_csv, write_trajectory_csv, KernelMetadata,
};
use kgfield::measures::{ensemble_run, exact_qt, limit_covariance, EnsembleConfig, InitialCovariance};
use kgfield::model::{check_conditions, smooth_bump, ConditionReport};
use kgfield::resolvent::{fit_decay, inverse_laplace_n, plemelj_im_h, time_grid, ShellTable};
use kgfield::scattering::{q_infinity, residual_second_moment, ScatteringPlan};
use kgfield::{radial, Model, State};
use log::{info, warn};
use serde::Serialize;

use crate::config::{Bump, Experiment, ExperimentConfig, FunctionalDef};

/// Energy guard used by trajectory experiments, as a multiple of `|H(Y0)|`.
const GUARD_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    ConditionsFailed,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<S: Serialize>(dir: &Path, name: &str, value: &S) -> Result<()> {
    serde_json::to_writer_pretty(create(dir, name)?, value)?;
    Ok(())
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(dir, name)?))
}

pub fn run(config: &ExperimentConfig) -> Result<Status> {
    let out = config.out.as_path();
    let model = Model::new(&config.model)?;
    let report = check_conditions(&model);
    write_json(out, "conditions.json", &report)?;
    log_conditions(&report);
    if !report.all_hold() {
        warn!("model conditions fail; not running {}", config.experiment.name());
        return Ok(Status::ConditionsFailed);
    }
    match config.experiment {
        Experiment::CheckModel => {}
        Experiment::Simulate | Experiment::EnergyDecay => trajectory(config, &model, out)?,
        Experiment::Resolvent => resolvent(config, &model, out)?,
        Experiment::Plemelj => plemelj(config, &model, out)?,
        Experiment::Equilibrium => equilibrium(config, &model, out)?,
        Experiment::Scattering => scattering(config, &model, out)?,
    }
    Ok(Status::Done)
}

fn log_conditions(r: &ConditionReport) {
    info!(
        "A1 {} (eig {:?}), A1' {} (eig {:?}), A3 {} (min |rho_hat| {:e} vs {:e})",
        r.a1_holds, r.eig_a1, r.a1p_holds, r.eig_a1p, r.a3_holds, r.a3_min_abs, r.a3_threshold
    );
}

fn add_bumps(model: &Model, target: &mut [Vec<f64>], bumps: &[Bump]) {
    for b in bumps {
        let f = smooth_bump(&model.grid, b.center, b.amplitude, b.width, b.radius);
        for (a, v) in target[b.component].iter_mut().zip(&f) {
            *a += v;
        }
    }
}

fn functional(model: &Model, def: &FunctionalDef) -> TestFunctional<f64> {
    let mut z = TestFunctional::zeros(model.d(), &model.grid);
    add_bumps(model, &mut z.psi0, &def.psi0);
    add_bumps(model, &mut z.psi1, &def.psi1);
    z.u = def.u;
    z.v = def.v;
    z
}

#[derive(Serialize)]
struct TrajectorySummary {
    observations: usize,
    energy_initial: f64,
    energy_final: f64,
    max_relative_drift: f64,
}

fn trajectory(config: &ExperimentConfig, model: &Model, out: &Path) -> Result<()> {
    let time = config.time.as_ref().expect("validated");
    let init = config.initial.as_ref().expect("validated");
    let mut y0 = State::zeros(model.d(), &model.grid);
    add_bumps(model, &mut y0.field.phi, &init.phi);
    add_bumps(model, &mut y0.field.pi, &init.pi);
    y0.particle.q = init.q;
    y0.particle.p = init.p;

    info!("evolving to t = {} with dt = {}", time.t_end, config.model.dt);
    let rows = observe(model, &y0, time.t_end, config.model.dt, time.stride, &time.radii, GUARD_FACTOR)?;
    write_trajectory_csv(create(out, "trajectory.csv")?, &time.radii, &rows)?;
    let h0 = rows[0].energy;
    let drift = rows
        .iter()
        .map(|r| ((r.energy - h0) / h0).abs())
        .fold(0.0, f64::max);
    info!("max relative energy drift {drift:e}");
    write_json(
        out,
        "summary.json",
        &TrajectorySummary {
            observations: rows.len(),
            energy_initial: h0,
            energy_final: rows.last().map_or(h0, |r| r.energy),
            max_relative_drift: drift,
        },
    )?;

    if let Some(fit) = &config.fit {
        let idx = time.radii.iter().position(|r| *r == fit.radius).expect("validated");
        let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.local[idx].sobolev)).collect();
        let result = fit_decay(&series, fit.kind, fit.window)?;
        info!(
            "{:?} fit on {:?}: rate/slope {:.4}, residual {:.3e}, spread {:.3e}",
            result.kind, result.fit_window, result.rate_or_slope, result.residual, result.spread
        );
        write_json(out, "fit.json", &result)?;
    }
    Ok(())
}

fn resolvent(config: &ExperimentConfig, model: &Model, out: &Path) -> Result<()> {
    let r = config.resolvent.as_ref().expect("validated");
    let kernel = inverse_laplace_n(&ShellTable::new(model), &time_grid(r.t_end, r.dt), r.contour)?;
    info!(
        "N(t) on {} samples, imaginary residue {:e}, tail {:e}",
        kernel.t_samples.len(),
        kernel.imag_residue,
        kernel.tail_estimate
    );
    write_kernel_csv(create(out, "kernel.csv")?, &kernel)?;
    write_json(out, "kernel.json", &KernelMetadata::new(&kernel))
}

fn plemelj(config: &ExperimentConfig, model: &Model, out: &Path) -> Result<()> {
    let p = config.plemelj.as_ref().expect("validated");
    let norm = p.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dir = p.direction.map(|v| v / norm);
    let mut w = csv_writer(out, "plemelj.csv")?;
    w.write_record(["x", "surface", "limiting_absorption", "relative_difference"])?;
    for &x in &p.points {
        let surface = plemelj_im_h(model, x, dir, p.rule)?;
        // Radial profiles give an isotropic H, so the unit direction drops out.
        let mut boundary = 0.0;
        for (spec, mass) in config.model.profiles.iter().zip(&config.model.masses) {
            boundary += radial::im_h_boundary(spec, *mass, x, p.eps)?;
        }
        let rel = if boundary != 0.0 { (surface - boundary) / boundary } else { f64::NAN };
        info!("x = {x}: surface {surface:e}, limiting absorption {boundary:e}");
        w.write_record([num(x), num(surface), num(boundary), num(rel)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EquilibriumSummary {
    samples: usize,
    base_seed: u64,
    moment: Vec<f64>,
    moment_bounded: bool,
}

fn equilibrium(config: &ExperimentConfig, model: &Model, out: &Path) -> Result<()> {
    let spec = config.covariance.as_ref().expect("validated");
    let e = config.ensemble.as_ref().expect("validated");
    let seed = config.seed.expect("validated");
    let cov = InitialCovariance::new(spec, model)?;
    let zs: Vec<_> = config.functionals.iter().map(|d| functional(model, d)).collect();
    let mut exact = vec![Vec::new(); e.times.len()];
    for z in &zs {
        let s = model.functional_to_spectral(z)?;
        for (k, q) in exact_qt(model, &cov, &s, &s, &e.times, config.model.dt)?.into_iter().enumerate() {
            exact[k].push(q);
        }
    }
    info!("sampling {} initial states from seed {seed}", e.samples);
    let stats = ensemble_run(
        model,
        spec,
        &zs,
        &EnsembleConfig {
            samples: e.samples,
            base_seed: seed,
            times: e.times.clone(),
            dt: config.model.dt,
            moment_radius: e.moment_radius,
        },
    )?;
    write_stats_csv(create(out, "stats.csv")?, &stats, &exact)?;
    write_json(
        out,
        "summary.json",
        &EquilibriumSummary {
            samples: stats.samples,
            base_seed: stats.base_seed,
            moment: stats.moment.clone(),
            moment_bounded: stats.moment_bounded,
        },
    )
}

fn scattering(config: &ExperimentConfig, model: &Model, out: &Path) -> Result<()> {
    let spec = config.covariance.as_ref().expect("validated");
    let s = config.scattering.as_ref().expect("validated");
    let cov = InitialCovariance::new(spec, model)?;
    let limit = limit_covariance(&cov.density, model);
    info!("scattering plan on [0, {}] with ds = {}", s.s_max, s.ds);
    let plan = ScatteringPlan::from_model(model, s.s_max, s.ds, s.contour)?;

    let mut profiles = Vec::new();
    let mut w = csv_writer(out, "convergence.csv")?;
    w.write_record(["t", "functional", "exact_q", "q_infinity", "residual"])?;
    for (id, def) in config.functionals.iter().enumerate() {
        let z = model.functional_to_spectral(&functional(model, def))?;
        let p = plan.profiles(model, &z);
        let q_inf = q_infinity(model, &limit, &p.psi_z);
        let qt = exact_qt(model, &cov, &z, &z, &s.residual_times, config.model.dt)?;
        let res = residual_second_moment(model, &cov, &z, &p.psi_z, &s.residual_times, config.model.dt)?;
        for ((t, q), r) in s.residual_times.iter().zip(&qt).zip(&res) {
            w.write_record([num(*t), id.to_string(), num(*q), num(q_inf), num(*r)])?;
        }
        info!("functional {id}: Q_inf = {q_inf:e}, residuals {res:?}");
        profiles.push(p);
    }
    w.flush()?;
    let descriptor = write_profiles(create(out, "profiles.bin")?, model, &plan, &profiles)?;
    write_json(out, "profiles.json", &descriptor)
}
