//! Configuration resolution: defaults, then values from an optional TOML
//! file, then command-line flags, in increasing precedence. Every resolved
//! setting can be printed with `--show-config`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mvprobit::mcem::{MaxMode, MaximizerConfig, Objective, ParticleSchedule};
use mvprobit::tmvn::SmcConfig;

use crate::data::Schema;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Constrained,
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveArg {
    Q,
    QTilde,
}

pub fn parse_schema(s: &str) -> Result<Schema, CliError> {
    match s {
        "sixcities" => Ok(Schema::SixCities),
        "generic" => Ok(Schema::Generic),
        other => Err(CliError::Config(format!(
            "unknown schema `{other}` (expected sixcities or generic)"
        ))),
    }
}

pub fn parse_mode(s: &str) -> Result<FitMode, CliError> {
    match s {
        "constrained" => Ok(FitMode::Constrained),
        "unconstrained" => Ok(FitMode::Unconstrained),
        other => Err(CliError::Config(format!(
            "unknown mode `{other}` (expected constrained or unconstrained)"
        ))),
    }
}

pub fn parse_objective(s: &str) -> Result<ObjectiveArg, CliError> {
    match s {
        "q" => Ok(ObjectiveArg::Q),
        "qtilde" => Ok(ObjectiveArg::QTilde),
        other => Err(CliError::Config(format!(
            "unknown objective `{other}` (expected q or qtilde)"
        ))),
    }
}

/// `start,step,growth_iters,plateau_iters,max_particles`.
pub fn parse_schedule(s: &str) -> Result<(usize, usize, usize, usize, usize), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 5 {
        return Err(CliError::Config(format!(
            "particle schedule must be start,step,growth,plateau,max — got `{s}`"
        )));
    }
    let mut values = [0usize; 5];
    for (i, part) in parts.iter().enumerate() {
        values[i] = part.trim().parse().map_err(|_| {
            CliError::Config(format!("particle schedule entry `{part}` is not an integer"))
        })?;
    }
    Ok((values[0], values[1], values[2], values[3], values[4]))
}

/// File mirror of the fit flags; any subset may be present.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitFile {
    pub data: Option<PathBuf>,
    pub schema: Option<String>,
    pub mode: Option<String>,
    pub objective: Option<String>,
    pub fix_sigma11: Option<bool>,
    pub recycle: Option<bool>,
    pub particles_schedule: Option<String>,
    pub vr_steps: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub standard_errors: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScalingFile {
    pub replicates: Option<usize>,
    pub particles: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SampleFile {
    pub mu: Option<String>,
    pub sigma: Option<String>,
    pub orthant: Option<String>,
    pub particles: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub fit: Option<FitFile>,
    pub scaling: Option<ScalingFile>,
    #[serde(rename = "sample-tmvn")]
    pub sample_tmvn: Option<SampleFile>,
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&raw)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Fully resolved fit settings.
#[derive(Debug, Clone)]
pub struct FitSettings {
    pub data: PathBuf,
    pub schema: Schema,
    pub mode: FitMode,
    pub objective: ObjectiveArg,
    pub fix_sigma11: bool,
    pub recycle: bool,
    pub schedule: ParticleSchedule,
    pub schedule_explicit: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub standard_errors: bool,
}

impl FitSettings {
    /// Map the surface-level mode/objective switches onto the maximizer.
    pub fn maximizer(&self) -> Result<MaximizerConfig, CliError> {
        let (objective, mode) = match (self.mode, self.objective, self.fix_sigma11) {
            (FitMode::Constrained, ObjectiveArg::Q, false) => {
                (Objective::Q, MaxMode::Constrained)
            }
            (FitMode::Constrained, ObjectiveArg::QTilde, false) => {
                (Objective::QTilde, MaxMode::CorrelationForm)
            }
            (FitMode::Unconstrained, ObjectiveArg::Q, false) => {
                (Objective::Q, MaxMode::Unconstrained)
            }
            (FitMode::Unconstrained, ObjectiveArg::QTilde, false) => {
                (Objective::QTilde, MaxMode::Unconstrained)
            }
            (FitMode::Unconstrained, ObjectiveArg::QTilde, true) => {
                (Objective::QTilde, MaxMode::FixedFirst)
            }
            (_, _, true) => {
                return Err(CliError::Config(
                    "--fix-sigma11 requires --mode unconstrained --objective qtilde".into(),
                ))
            }
        };
        Ok(MaximizerConfig {
            objective,
            mode,
            ..MaximizerConfig::default()
        })
    }

    pub fn mcem(&self, layout: mvprobit::probit::Layout) -> Result<mvprobit::mcem::McemConfig, CliError> {
        let config = mvprobit::mcem::McemConfig {
            layout,
            maximizer: self.maximizer()?,
            schedule: self.schedule.clone(),
            smc: SmcConfig::default(),
            recycle: self.recycle,
            seed: self.seed,
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn show(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), "fit".into()),
            ("data".into(), self.data.display().to_string()),
            ("schema".into(), self.schema.name().into()),
            (
                "mode".into(),
                match self.mode {
                    FitMode::Constrained => "constrained".into(),
                    FitMode::Unconstrained => "unconstrained".into(),
                },
            ),
            (
                "objective".into(),
                match self.objective {
                    ObjectiveArg::Q => "q".into(),
                    ObjectiveArg::QTilde => "qtilde".into(),
                },
            ),
            ("fix_sigma11".into(), self.fix_sigma11.to_string()),
            ("recycle".into(), self.recycle.to_string()),
            (
                "particles_schedule".into(),
                format!(
                    "{},{},{},{},{}",
                    self.schedule.start,
                    self.schedule.step,
                    self.schedule.growth_iters,
                    self.schedule.plateau_iters,
                    self.schedule.max_particles
                ),
            ),
            ("vr_steps".into(), self.schedule.vr_steps.to_string()),
            ("seed".into(), self.seed.to_string()),
            (
                "threads".into(),
                self.threads.map_or("all".into(), |t| t.to_string()),
            ),
            ("out_dir".into(), self.out_dir.display().to_string()),
            ("standard_errors".into(), self.standard_errors.to_string()),
        ]
    }
}

/// Fully resolved scaling-experiment settings. Dimensions are fixed by the
/// experiment design; the replicate count and particle budget scale it up
/// or down.
#[derive(Debug, Clone)]
pub struct ScalingSettings {
    pub dims: Vec<usize>,
    pub replicates: usize,
    pub particles: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl ScalingSettings {
    pub fn show(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), "scaling".into()),
            (
                "dims".into(),
                self.dims
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("replicates".into(), self.replicates.to_string()),
            ("particles".into(), self.particles.to_string()),
            ("seed".into(), self.seed.to_string()),
            (
                "threads".into(),
                self.threads.map_or("all".into(), |t| t.to_string()),
            ),
            ("out_dir".into(), self.out_dir.display().to_string()),
        ]
    }
}

#[derive(Debug, Default)]
pub struct ScalingArgsRaw {
    pub replicates: Option<usize>,
    pub particles: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

pub fn resolve_scaling(
    raw: &ScalingArgsRaw,
    file: Option<&ScalingFile>,
) -> Result<ScalingSettings, CliError> {
    let file_default = ScalingFile::default();
    let file = file.unwrap_or(&file_default);
    let replicates = raw.replicates.or(file.replicates).unwrap_or(20);
    let particles = raw.particles.or(file.particles).unwrap_or(4000);
    if replicates == 0 || particles == 0 {
        return Err(CliError::Config(
            "replicates and particles must be at least 1".into(),
        ));
    }
    Ok(ScalingSettings {
        dims: vec![2, 4, 8, 16],
        replicates,
        particles,
        seed: raw.seed.or(file.seed).unwrap_or(1),
        threads: raw.threads.or(file.threads),
        out_dir: raw
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
    })
}

/// Fully resolved standalone-sampler settings.
#[derive(Debug, Clone)]
pub struct SampleSettings {
    pub mu: String,
    pub sigma: String,
    pub orthant: String,
    pub particles: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl SampleSettings {
    pub fn show(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), "sample-tmvn".into()),
            ("mu".into(), self.mu.clone()),
            ("sigma".into(), self.sigma.clone()),
            ("orthant".into(), self.orthant.clone()),
            ("particles".into(), self.particles.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("out_dir".into(), self.out_dir.display().to_string()),
        ]
    }
}

#[derive(Debug, Default)]
pub struct SampleArgsRaw {
    pub mu: Option<String>,
    pub sigma: Option<String>,
    pub orthant: Option<String>,
    pub particles: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

pub fn resolve_sample(
    raw: &SampleArgsRaw,
    file: Option<&SampleFile>,
) -> Result<SampleSettings, CliError> {
    let file_default = SampleFile::default();
    let file = file.unwrap_or(&file_default);
    let mu = raw
        .mu
        .clone()
        .or_else(|| file.mu.clone())
        .ok_or_else(|| CliError::Config("no mean vector given (use --mu)".into()))?;
    let sigma = raw
        .sigma
        .clone()
        .or_else(|| file.sigma.clone())
        .ok_or_else(|| CliError::Config("no covariance given (use --sigma)".into()))?;
    let orthant = raw
        .orthant
        .clone()
        .or_else(|| file.orthant.clone())
        .ok_or_else(|| CliError::Config("no orthant given (use --orthant)".into()))?;
    let particles = raw.particles.or(file.particles).unwrap_or(4000);
    if particles == 0 {
        return Err(CliError::Config("particles must be at least 1".into()));
    }
    Ok(SampleSettings {
        mu,
        sigma,
        orthant,
        particles,
        seed: raw.seed.or(file.seed).unwrap_or(1),
        out_dir: raw
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
    })
}

/// Raw fit inputs as they arrive from clap; `None` means "not given".
#[derive(Debug, Default)]
pub struct FitArgsRaw {
    pub data: Option<PathBuf>,
    pub schema: Option<String>,
    pub mode: Option<String>,
    pub objective: Option<String>,
    pub fix_sigma11: bool,
    pub recycle: bool,
    pub particles_schedule: Option<String>,
    pub vr_steps: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub skip_standard_errors: bool,
}

pub fn resolve_fit(raw: &FitArgsRaw, file: Option<&FitFile>) -> Result<FitSettings, CliError> {
    let file_default = FitFile::default();
    let file = file.unwrap_or(&file_default);
    let data = raw
        .data
        .clone()
        .or_else(|| file.data.clone())
        .ok_or_else(|| CliError::Config("no data file given (use --data)".into()))?;
    let schema = parse_schema(
        raw.schema
            .as_deref()
            .or(file.schema.as_deref())
            .unwrap_or("sixcities"),
    )?;
    let mode = parse_mode(
        raw.mode
            .as_deref()
            .or(file.mode.as_deref())
            .unwrap_or("constrained"),
    )?;
    let objective = parse_objective(
        raw.objective
            .as_deref()
            .or(file.objective.as_deref())
            .unwrap_or("q"),
    )?;
    let fix_sigma11 = raw.fix_sigma11 || file.fix_sigma11.unwrap_or(false);
    let recycle = raw.recycle || file.recycle.unwrap_or(false);
    let vr_steps = raw.vr_steps.or(file.vr_steps).unwrap_or(10);
    let schedule_str = raw
        .particles_schedule
        .clone()
        .or_else(|| file.particles_schedule.clone());
    let schedule_explicit = schedule_str.is_some();
    let schedule = match schedule_str {
        Some(s) => {
            let (start, step, growth, plateau, max) = parse_schedule(&s)?;
            ParticleSchedule {
                start,
                step,
                growth_iters: growth,
                plateau_iters: plateau,
                vr_steps,
                max_particles: max,
            }
        }
        None if recycle => ParticleSchedule::constant(4000, 40, vr_steps),
        None => ParticleSchedule {
            vr_steps,
            // Unconstrained surfaces are flatter; hold the ceiling a while
            // before averaging.
            plateau_iters: if mode == FitMode::Unconstrained { 20 } else { 0 },
            ..ParticleSchedule::default()
        },
    };
    Ok(FitSettings {
        data,
        schema,
        mode,
        objective,
        fix_sigma11,
        recycle,
        schedule,
        schedule_explicit,
        seed: raw.seed.or(file.seed).unwrap_or(1),
        threads: raw.threads.or(file.threads),
        out_dir: raw
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        standard_errors: if raw.skip_standard_errors {
            false
        } else {
            file.standard_errors.unwrap_or(true)
        },
    })
}
