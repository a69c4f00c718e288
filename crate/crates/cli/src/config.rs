//! TOML experiment configuration. Parsing fills defaults and reports every
//! invalid field at once.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use kgfield::measures::{BlockEntry, BumpSpec, CovarianceSpec, Kernel};
use kgfield::model::{ModelConfig, ProfileSpec};
use kgfield::resolvent::{ContourParams, DecayKind, SphereRule};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CheckModel,
    Simulate,
    EnergyDecay,
    Resolvent,
    Plemelj,
    Equilibrium,
    Scattering,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::CheckModel => "check-model",
            Experiment::Simulate => "simulate",
            Experiment::EnergyDecay => "energy-decay",
            Experiment::Resolvent => "resolvent",
            Experiment::Plemelj => "plemelj",
            Experiment::Equilibrium => "equilibrium",
            Experiment::Scattering => "scattering",
        }
    }

    fn uses_trajectory(self) -> bool {
        matches!(self, Experiment::Simulate | Experiment::EnergyDecay)
    }

    fn uses_measure(self) -> bool {
        matches!(self, Experiment::Equilibrium | Experiment::Scattering)
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Read(PathBuf, std::io::Error),
    /// TOML syntax or type error; the message carries line and column.
    Parse(String),
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Invalid(errs) => {
                writeln!(f, "config has {} error(s):", errs.len())?;
                for e in errs {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// A smooth bump added to one field component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    #[serde(default)]
    pub component: usize,
    pub center: [f64; 3],
    pub amplitude: f64,
    pub width: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    #[serde(default)]
    pub phi: Vec<Bump>,
    #[serde(default)]
    pub pi: Vec<Bump>,
    #[serde(default)]
    pub q: [f64; 3],
    #[serde(default)]
    pub p: [f64; 3],
}

/// `Z = (ψ⁰, ψ¹, u, v)` built from bumps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalDef {
    #[serde(default)]
    pub psi0: Vec<Bump>,
    #[serde(default)]
    pub psi1: Vec<Bump>,
    #[serde(default)]
    pub u: [f64; 3],
    #[serde(default)]
    pub v: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSettings {
    pub t_end: f64,
    /// Observation interval in steps.
    pub stride: usize,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSettings {
    pub kind: DecayKind,
    pub window: (f64, f64),
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventSettings {
    pub t_end: f64,
    pub dt: f64,
    pub contour: ContourParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlemeljSettings {
    pub points: Vec<f64>,
    pub direction: [f64; 3],
    pub rule: SphereRule,
    pub eps: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSettings {
    pub samples: usize,
    pub times: Vec<f64>,
    pub moment_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatteringSettings {
    pub s_max: f64,
    pub ds: f64,
    pub residual_times: Vec<f64>,
    pub contour: ContourParams,
}

/// Fully validated configuration. Sections that the experiment does not
/// use are left out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolvent: Option<ResolventSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plemelj: Option<PlemeljSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSettings>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub functionals: Vec<FunctionalDef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scattering: Option<ScatteringSettings>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Experiment>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    model: Option<RawModel>,
    time: Option<RawTime>,
    initial: Option<InitialData>,
    fit: Option<RawFit>,
    resolvent: Option<RawResolvent>,
    plemelj: Option<RawPlemelj>,
    covariance: Option<RawCovariance>,
    ensemble: Option<RawEnsemble>,
    functionals: Option<Vec<FunctionalDef>>,
    scattering: Option<RawScattering>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    masses: Option<Vec<f64>>,
    omega: Option<f64>,
    profiles: Option<Vec<ProfileSpec>>,
    box_length: Option<f64>,
    grid_n: Option<usize>,
    dt: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_end: Option<f64>,
    stride: Option<usize>,
    radii: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    kind: Option<DecayKind>,
    window: Option<(f64, f64)>,
    radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResolvent {
    t_end: Option<f64>,
    dt: Option<f64>,
    contour: Option<ContourParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlemelj {
    points: Option<Vec<f64>>,
    direction: Option<[f64; 3]>,
    rule: Option<SphereRule>,
    eps: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCovariance {
    chi: Option<BumpSpec>,
    blocks: Option<Vec<BlockEntry>>,
    sigma_q: Option<f64>,
    sigma_p: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    samples: Option<usize>,
    times: Option<Vec<f64>>,
    moment_radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScattering {
    s_max: Option<f64>,
    ds: Option<f64>,
    residual_times: Option<Vec<f64>>,
    contour: Option<ContourParams>,
}

/// Values given on the command line, which win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
    parse_str(&text, overrides)
}

pub fn parse_str(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    validate(raw, overrides)
}

fn positive(errs: &mut Vec<String>, name: &str, x: f64) {
    if !(x.is_finite() && x > 0.0) {
        errs.push(format!("{name}: must be finite and > 0, got {x}"));
    }
}

fn check_bumps(errs: &mut Vec<String>, name: &str, bumps: &[Bump], d: usize, half_box: f64) {
    for (k, b) in bumps.iter().enumerate() {
        if b.component >= d {
            errs.push(format!("{name}[{k}].component: {} out of range for d = {d}", b.component));
        }
        positive(errs, &format!("{name}[{k}].width"), b.width);
        if !(b.radius > 0.0 && b.radius < half_box) {
            errs.push(format!("{name}[{k}].radius: must lie in (0, L/2 = {half_box}), got {}", b.radius));
        }
        if !b.amplitude.is_finite() || b.center.iter().any(|c| !c.is_finite()) {
            errs.push(format!("{name}[{k}]: amplitude and center must be finite"));
        }
    }
}

fn validate(raw: RawConfig, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut errs = Vec::new();

    let experiment = match (overrides.experiment, raw.experiment) {
        (Some(a), Some(b)) if a != b => {
            errs.push(format!(
                "experiment: file says {} but the subcommand is {}",
                b.name(),
                a.name()
            ));
            a
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => {
            errs.push("experiment: missing".to_string());
            Experiment::CheckModel
        }
    };
    let out = overrides.out.clone().or(raw.out).unwrap_or_else(|| {
        errs.push("out: missing (set it in the file or pass --out)".to_string());
        PathBuf::new()
    });
    let seed = overrides.seed.or(raw.seed);

    let rm = raw.model.unwrap_or_else(|| {
        errs.push("model: missing section".to_string());
        RawModel::default()
    });
    let masses = rm.masses.unwrap_or_else(|| vec![1.0]);
    let omega = rm.omega.unwrap_or_else(|| {
        errs.push("model.omega: missing".to_string());
        f64::NAN
    });
    let profiles = rm
        .profiles
        .unwrap_or_else(|| vec![ProfileSpec::gaussian(0.5, 0.5, 1.75); masses.len()]);
    let model = ModelConfig {
        masses,
        omega,
        profiles,
        box_length: rm.box_length.unwrap_or(16.0),
        grid_n: rm.grid_n.unwrap_or(32),
        dt: rm.dt.unwrap_or(0.01),
    };
    // A missing omega is already reported; probe the rest without it.
    let probe = ModelConfig {
        omega: rm.omega.unwrap_or(1.0),
        ..model.clone()
    };
    if let Err(e) = probe.validate() {
        errs.extend(e.into_iter().map(|m| format!("model.{m}")));
    }
    let d = model.d().max(1);
    let half_box = model.box_length / 2.0;
    let all_massive = model.masses.iter().all(|m| *m > 0.0);

    let mut time = None;
    let mut initial = None;
    let mut fit = None;
    if experiment.uses_trajectory() {
        let rt = raw.time.unwrap_or_default();
        let t = TimeSettings {
            t_end: rt.t_end.unwrap_or(if experiment == Experiment::Simulate { 10.0 } else { 14.0 }),
            stride: rt.stride.unwrap_or(10),
            radii: rt.radii.unwrap_or_else(|| vec![2.0]),
        };
        positive(&mut errs, "time.t_end", t.t_end);
        if t.stride == 0 {
            errs.push("time.stride: must be >= 1".to_string());
        }
        for (k, r) in t.radii.iter().enumerate() {
            if !(*r > 0.0 && *r <= half_box) {
                errs.push(format!("time.radii[{k}]: must lie in (0, L/2 = {half_box}], got {r}"));
            }
        }
        let init = raw.initial.unwrap_or_else(|| InitialData {
            phi: vec![Bump {
                component: 0,
                center: [0.3, 0.0, 0.0],
                amplitude: 1.0,
                width: 0.7,
                radius: 2.0,
            }],
            ..InitialData::default()
        });
        check_bumps(&mut errs, "initial.phi", &init.phi, d, half_box);
        check_bumps(&mut errs, "initial.pi", &init.pi, d, half_box);
        if experiment == Experiment::EnergyDecay {
            let rf = raw.fit.unwrap_or_default();
            let f = FitSettings {
                kind: rf.kind.unwrap_or(if all_massive { DecayKind::Power } else { DecayKind::Exponential }),
                window: rf.window.unwrap_or((0.55 * t.t_end, t.t_end)),
                radius: rf.radius.unwrap_or_else(|| t.radii.first().copied().unwrap_or(2.0)),
            };
            if !(f.window.0 >= 0.0 && f.window.0 < f.window.1 && f.window.1 <= t.t_end) {
                errs.push(format!(
                    "fit.window: need 0 <= lo < hi <= time.t_end = {}, got {:?}",
                    t.t_end, f.window
                ));
            }
            if !t.radii.contains(&f.radius) {
                errs.push(format!("fit.radius: {} is not one of time.radii", f.radius));
            }
            fit = Some(f);
        }
        time = Some(t);
        initial = Some(init);
    }

    let mut resolvent = None;
    if experiment == Experiment::Resolvent {
        let rr = raw.resolvent.unwrap_or_default();
        let r = ResolventSettings {
            t_end: rr.t_end.unwrap_or(20.0),
            dt: rr.dt.unwrap_or(0.05),
            contour: rr.contour.unwrap_or_default(),
        };
        positive(&mut errs, "resolvent.t_end", r.t_end);
        positive(&mut errs, "resolvent.dt", r.dt);
        resolvent = Some(r);
    }

    let mut plemelj = None;
    if experiment == Experiment::Plemelj {
        let rp = raw.plemelj.unwrap_or_default();
        let p = PlemeljSettings {
            points: rp.points.unwrap_or_else(|| vec![1.5]),
            direction: rp.direction.unwrap_or([1.0, 0.0, 0.0]),
            rule: rp.rule.unwrap_or_default(),
            eps: rp.eps.unwrap_or([1e-2, 1e-3]),
        };
        if p.points.is_empty() {
            errs.push("plemelj.points: at least one point is required".to_string());
        }
        if p.direction.iter().all(|v| *v == 0.0) {
            errs.push("plemelj.direction: must be nonzero".to_string());
        }
        if !(p.eps[0] > 0.0 && p.eps[1] > 0.0 && p.eps[0] != p.eps[1]) {
            errs.push(format!("plemelj.eps: need two distinct positive offsets, got {:?}", p.eps));
        }
        plemelj = Some(p);
    }

    let mut covariance = None;
    let mut ensemble = None;
    let mut functionals = Vec::new();
    let mut scattering = None;
    if experiment.uses_measure() {
        let rc = raw.covariance.unwrap_or_default();
        let mut spec = CovarianceSpec::new(rc.chi.unwrap_or(BumpSpec {
            amplitude: 1.0,
            width: 0.8,
            radius: 2.4,
        }));
        spec.blocks = rc.blocks.unwrap_or_else(|| {
            (0..d)
                .flat_map(|n| {
                    [
                        BlockEntry {
                            i: 0,
                            j: 0,
                            n,
                            n_prime: n,
                            coefficient: 1.0,
                            kernel: Kernel::Base,
                        },
                        BlockEntry {
                            i: 1,
                            j: 1,
                            n,
                            n_prime: n,
                            coefficient: 0.5,
                            kernel: Kernel::Base,
                        },
                    ]
                })
                .collect()
        });
        let spec = spec.with_particle_diag(rc.sigma_q.unwrap_or(0.4), rc.sigma_p.unwrap_or(0.7));
        if let Err(e) = spec.validate(d, model.box_length) {
            errs.extend(e);
        }
        covariance = Some(spec);

        functionals = raw.functionals.unwrap_or_else(|| {
            vec![
                FunctionalDef {
                    u: [1.0, 0.0, 0.0],
                    ..FunctionalDef::default()
                },
                FunctionalDef {
                    v: [1.0, 0.0, 0.0],
                    ..FunctionalDef::default()
                },
            ]
        });
        if functionals.is_empty() {
            errs.push("functionals: at least one functional is required".to_string());
        }
        for (k, z) in functionals.iter().enumerate() {
            check_bumps(&mut errs, &format!("functionals[{k}].psi0"), &z.psi0, d, half_box);
            check_bumps(&mut errs, &format!("functionals[{k}].psi1"), &z.psi1, d, half_box);
        }

        if experiment == Experiment::Equilibrium {
            let re = raw.ensemble.unwrap_or_default();
            let e = EnsembleSettings {
                samples: re.samples.unwrap_or(200),
                times: re.times.unwrap_or_else(|| vec![0.0, 4.0, 8.0]),
                moment_radius: re.moment_radius.unwrap_or(2.0),
            };
            if e.samples < 100 {
                errs.push(format!("ensemble.samples: need at least 100, got {}", e.samples));
            }
            if e.times.is_empty() || e.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                errs.push("ensemble.times: need a nonempty list of times >= 0".to_string());
            }
            if !(e.moment_radius > 0.0 && e.moment_radius <= half_box) {
                errs.push(format!(
                    "ensemble.moment_radius: must lie in (0, L/2 = {half_box}], got {}",
                    e.moment_radius
                ));
            }
            if seed.is_none() {
                errs.push("seed: required for sampling (set it in the file or pass --seed)".to_string());
            }
            ensemble = Some(e);
        } else {
            let rs = raw.scattering.unwrap_or_default();
            let limit = half_box - model.max_support();
            let s = ScatteringSettings {
                s_max: rs.s_max.unwrap_or(limit - 0.5),
                ds: rs.ds.unwrap_or(model.dt),
                residual_times: rs.residual_times.unwrap_or_else(|| vec![4.0, 8.0]),
                contour: rs.contour.unwrap_or_default(),
            };
            if !(s.s_max > 0.0 && s.s_max < limit) {
                errs.push(format!(
                    "scattering.s_max: must lie in (0, L/2 - R_rho = {limit}), got {}",
                    s.s_max
                ));
            }
            positive(&mut errs, "scattering.ds", s.ds);
            if s.residual_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                errs.push("scattering.residual_times: times must be >= 0".to_string());
            }
            scattering = Some(s);
        }
    }

    if errs.is_empty() {
        Ok(ExperimentConfig {
            experiment,
            out,
            seed,
            model,
            time,
            initial,
            fit,
            resolvent,
            plemelj,
            covariance,
            ensemble,
            functionals,
            scattering,
        })
    } else {
        Err(ConfigError::Invalid(errs))
    }
}
