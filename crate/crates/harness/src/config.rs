//! TOML run configuration.
//!
//! Every key is optional. Missing keys fall back to the scenario preset and
//! then to the library defaults (`wall_mass = 0.05`, `section = 1`,
//! `friction = 10`, `beta = 0.1`, `k = 20`, `dt = 1e-4`, `total_time = 2`).
//! Unknown keys are rejected.
//!
//! ```toml
//! scenario = "friction_modes"
//! wall_mass = 0.05
//! pressure_ratio = 1.1        # P0 / P(0) of the initial state
//! friction_mode = "expansion_only"
//! initial_state = "thermal"   # ground | eigenstate | thermal
//! k = 20
//! ```

use std::path::{Path, PathBuf};

use qpiston::thermo::FidelityTarget;
use qpiston::{pressure, FrictionMode, InitialState, QuantumState, SimParams, INITIAL_LENGTH};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::scenarios::ScenarioSpec;

/// Pressure ratio used when neither `pressure_ratio` nor `external_pressure`
/// is given.
pub const DEFAULT_PRESSURE_RATIO: f64 = 1.1;
/// Target spacing of CSV rows when `stride` is not given.
pub const DEFAULT_ROW_SPACING: f64 = 1e-3;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    particle_mass: Option<f64>,
    wall_mass: Option<f64>,
    section: Option<f64>,
    friction: Option<f64>,
    pressure_ratio: Option<f64>,
    external_pressure: Option<f64>,
    dephasing_rate: Option<f64>,
    beta: Option<f64>,
    #[serde(alias = "truncation")]
    k: Option<i64>,
    dt: Option<f64>,
    total_time: Option<f64>,
    friction_mode: Option<String>,
    initial_state: Option<String>,
    initial_level: Option<i64>,
    stride: Option<i64>,
    auto_dt: Option<bool>,
    fidelity_target: Option<String>,
    scenario: Option<String>,
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureSetting {
    /// `P0 / P(0)` with `P(0)` the pressure of the initial state at `L0`.
    Ratio(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Ground,
    Eigenstate(usize),
    /// Gibbs state at the configured `beta`.
    Thermal,
}

/// Partial parameter set. `None` means "not specified here".
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub particle_mass: Option<f64>,
    pub wall_mass: Option<f64>,
    pub section: Option<f64>,
    pub friction: Option<f64>,
    pub pressure: Option<PressureSetting>,
    pub dephasing_rate: Option<f64>,
    pub beta: Option<f64>,
    pub truncation: Option<usize>,
    pub dt: Option<f64>,
    pub total_time: Option<f64>,
    pub friction_mode: Option<FrictionMode>,
    pub initial: Option<InitialKind>,
    pub stride: Option<usize>,
    pub auto_dt: Option<bool>,
    pub fidelity_target: Option<FidelityTarget>,
}

macro_rules! merge_fields {
    ($base:expr, $top:expr, $($field:ident),*) => {
        Overrides { $($field: $top.$field.or($base.$field)),* }
    };
}

impl Overrides {
    /// Fields set in `top` win over those in `self`.
    pub fn merged_with(&self, top: &Overrides) -> Overrides {
        merge_fields!(
            self, top, particle_mass, wall_mass, section, friction, pressure, dephasing_rate,
            beta, truncation, dt, total_time, friction_mode, initial, stride, auto_dt,
            fidelity_target
        )
    }

    /// Library defaults with these overrides applied; `external_pressure` is
    /// left at zero until [`Overrides::resolve`] knows the initial state.
    pub fn params(&self) -> SimParams {
        let d = SimParams::default();
        SimParams {
            particle_mass: self.particle_mass.unwrap_or(d.particle_mass),
            wall_mass: self.wall_mass.unwrap_or(d.wall_mass),
            section: self.section.unwrap_or(d.section),
            friction: self.friction.unwrap_or(d.friction),
            external_pressure: match self.pressure {
                Some(PressureSetting::Absolute(p)) => p,
                _ => d.external_pressure,
            },
            dephasing_rate: self.dephasing_rate.unwrap_or(d.dephasing_rate),
            beta: self.beta.unwrap_or(d.beta),
            truncation: self.truncation.unwrap_or(d.truncation),
            dt: self.dt.unwrap_or(d.dt),
            total_time: self.total_time.unwrap_or(d.total_time),
            friction_mode: self.friction_mode.unwrap_or(d.friction_mode),
        }
    }

    /// Builds the initial state, converts a pressure ratio into `P0`, and
    /// optionally refines `dt` by Richardson probing.
    pub fn resolve(&self) -> Result<RunSetup> {
        let mut params = self.params();
        params.validate()?;
        let initial_state = match self.initial.unwrap_or(InitialKind::Ground) {
            InitialKind::Ground => InitialState::Ground,
            InitialKind::Eigenstate(n) => InitialState::Eigenstate { n },
            InitialKind::Thermal => InitialState::Thermal { beta: params.beta },
        };
        let basis = params.basis()?;
        let mut initial = initial_state.prepare(&basis, INITIAL_LENGTH)?;
        if params.dephasing_rate > 0.0 && !initial.is_mixed() {
            initial = QuantumState::Mixed(initial.to_mixed());
        }
        let p_initial = pressure(&initial, INITIAL_LENGTH, &params)?;
        let pressure_ratio = match self.pressure {
            Some(PressureSetting::Absolute(p)) => p / p_initial,
            Some(PressureSetting::Ratio(r)) => r,
            None => DEFAULT_PRESSURE_RATIO,
        };
        params.external_pressure = pressure_ratio * p_initial;
        params.validate()?;
        if self.auto_dt.unwrap_or(true) && self.dt.is_none() {
            params.dt = qpiston::select_time_step(&params, &initial)?;
        }
        let stride = self.stride.unwrap_or_else(|| default_stride(&params));
        Ok(RunSetup {
            params,
            initial,
            initial_state,
            pressure_ratio,
            stride,
            fidelity_target: self.fidelity_target.unwrap_or_default(),
        })
    }
}

/// Largest divisor of the step count not above `DEFAULT_ROW_SPACING / dt`,
/// so that the final sample lands on a CSV row.
pub(crate) fn default_stride(params: &SimParams) -> usize {
    let steps = params.steps().max(1);
    let target = ((DEFAULT_ROW_SPACING / params.dt).round() as usize).clamp(1, steps);
    (1..=target).rev().find(|s| steps % s == 0).unwrap_or(1)
}

/// A fully resolved single run.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub params: SimParams,
    pub initial: QuantumState,
    pub initial_state: InitialState,
    pub pressure_ratio: f64,
    /// Steps between CSV rows.
    pub stride: usize,
    pub fidelity_target: FidelityTarget,
}

/// Result of reading a config file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Defaults with the file's keys applied (pressure still unresolved).
    pub params: SimParams,
    pub overrides: Overrides,
    pub scenario: Option<ScenarioSpec>,
    pub out: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        HarnessError::ConfigParse { reason, .. } => HarnessError::ConfigParse {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::ConfigParse {
        path: PathBuf::from("<inline>"),
        reason: e.message().to_string(),
    })?;
    let overrides = overrides_from(&raw)?;
    let params = overrides.params();
    let scenario = raw
        .scenario
        .as_deref()
        .map(|name| -> Result<ScenarioSpec> {
            Ok(ScenarioSpec {
                name: name.parse()?,
                overrides: overrides.clone(),
                out: raw.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            })
        })
        .transpose()?;
    Ok(LoadedConfig {
        params,
        overrides,
        scenario,
        out: raw.out,
    })
}

fn positive(key: &str, value: Option<f64>) -> Result<Option<f64>> {
    match value {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(HarnessError::config(
            key,
            format!("must be positive and finite, got {v}"),
        )),
        v => Ok(v),
    }
}

fn non_negative(key: &str, value: Option<f64>) -> Result<Option<f64>> {
    match value {
        Some(v) if !(v >= 0.0 && v.is_finite()) => Err(HarnessError::config(
            key,
            format!("must be non-negative and finite, got {v}"),
        )),
        v => Ok(v),
    }
}

fn count(key: &str, value: Option<i64>, min: i64) -> Result<Option<usize>> {
    match value {
        Some(v) if v < min => Err(HarnessError::config(key, format!("must be at least {min}, got {v}"))),
        v => Ok(v.map(|v| v as usize)),
    }
}

fn overrides_from(raw: &RawConfig) -> Result<Overrides> {
    let pressure = match (raw.pressure_ratio, raw.external_pressure) {
        (Some(_), Some(_)) => {
            return Err(HarnessError::config(
                "pressure_ratio",
                "give either pressure_ratio or external_pressure, not both",
            ))
        }
        (Some(r), None) => positive("pressure_ratio", Some(r))?.map(PressureSetting::Ratio),
        (None, Some(p)) => non_negative("external_pressure", Some(p))?.map(PressureSetting::Absolute),
        (None, None) => None,
    };
    let friction_mode = raw
        .friction_mode
        .as_deref()
        .map(|s| s.parse::<FrictionMode>().map_err(|e| HarnessError::config("friction_mode", e.to_string())))
        .transpose()?;
    let level = count("initial_level", raw.initial_level, 1)?;
    let initial = match raw.initial_state.as_deref() {
        None if level.is_some() => Some(InitialKind::Eigenstate(level.unwrap_or(1))),
        None => None,
        Some("ground") => Some(InitialKind::Ground),
        Some("thermal") => Some(InitialKind::Thermal),
        Some("eigenstate") => Some(InitialKind::Eigenstate(level.ok_or_else(|| {
            HarnessError::config("initial_level", "required when initial_state = \"eigenstate\"")
        })?)),
        Some(other) => {
            return Err(HarnessError::config(
                "initial_state",
                format!("expected ground, eigenstate or thermal, got `{other}`"),
            ))
        }
    };
    let truncation = count("k", raw.k, 2)?;
    if let (Some(InitialKind::Eigenstate(n)), Some(k)) = (initial, truncation) {
        if n > k {
            return Err(HarnessError::config(
                "initial_level",
                format!("level {n} is outside the truncation k = {k}"),
            ));
        }
    }
    let fidelity_target = match raw.fidelity_target.as_deref() {
        None => None,
        Some("physical") => Some(FidelityTarget::Physical),
        Some("effective") => Some(FidelityTarget::Effective),
        Some(other) => {
            return Err(HarnessError::config(
                "fidelity_target",
                format!("expected physical or effective, got `{other}`"),
            ))
        }
    };
    Ok(Overrides {
        particle_mass: positive("particle_mass", raw.particle_mass)?,
        wall_mass: positive("wall_mass", raw.wall_mass)?,
        section: positive("section", raw.section)?,
        friction: non_negative("friction", raw.friction)?,
        pressure,
        dephasing_rate: non_negative("dephasing_rate", raw.dephasing_rate)?,
        beta: positive("beta", raw.beta)?,
        truncation,
        dt: positive("dt", raw.dt)?,
        total_time: positive("total_time", raw.total_time)?,
        friction_mode,
        initial,
        stride: count("stride", raw.stride, 1)?,
        auto_dt: raw.auto_dt,
        fidelity_target,
    })
}
