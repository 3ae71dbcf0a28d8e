//! Scenario runners. Each scenario fixes a preset, runs one or more
//! simulations over a scenario axis (velocities, friction laws, dephasing
//! rates, pressure ratios, masses) and writes CSV tables, an SVG preview and
//! `meta.json` into its output directory.
//!
//! Parameters resolve in three layers: library defaults, then the scenario
//! preset, then the user's config. Axis values are applied last.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use qpiston::thermo::{
    ground_state_fidelity, hstar_basis_observables, transition_probabilities, ThermoRecord, ThermoRecorder,
};
use qpiston::{
    physical_overlap, simulate_with, wavefunction, Frame, FrictionMode, Mode, PureState, QuantumState, RunOptions,
    Trajectory,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{default_stride, InitialKind, Overrides, PressureSetting, RunSetup};
use crate::error::{HarnessError, Result};
use crate::output::{setup_json, thin, thin_records, Metadata, OutputDir, Table};
use crate::plot::{Chart, Series};

/// Wall speeds of the constant-velocity scenario (both signs are run).
pub const CONSTANT_SPEEDS: [f64; 3] = [0.01, 1.0, 100.0];
pub const DEPHASING_RATES: [f64; 3] = [0.0, 1.0, 10.0];
pub const SHIFT_RATES: [f64; 2] = [0.0, 10.0];
pub const THERMO_RATIOS: [f64; 2] = [0.9, 1.1];
pub const FRICTION_COEFFICIENTS: [f64; 3] = [0.1, 1.0, 10.0];
pub const WALL_MASSES: [f64; 2] = [0.001, 1.0];
/// Friction per unit wall mass in the mass scenarios (`γ = 10 M / 0.05`).
pub const FRICTION_PER_MASS: f64 = 10.0 / 0.05;
/// Pressure ratios used by the equilibrium sweep: 0.80, 0.82, ..., 1.20.
pub fn sweep_ratios() -> Vec<f64> {
    (0..=20).map(|i| round_ratio(0.8 + 0.02 * i as f64)).collect()
}

const FRICTION_MODES: [FrictionMode; 3] = [FrictionMode::None, FrictionMode::Symmetric, FrictionMode::ExpansionOnly];
const WAVEFUNCTION_POINTS: usize = 201;
const SNAPSHOTS: usize = 5;
/// Largest number of rows per trajectory CSV in the constant-velocity scenario.
const MAX_ROWS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    ConstVelocity,
    FrictionModes,
    Dephasing,
    DephasingLengthShift,
    EquilibriumSweep,
    EntropyAndFrictionWork,
    IrreversibleWork,
    Jarzynski,
    GammaRegimes,
    MassRegimes,
    FidelityCheck,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 11] = [
        Self::ConstVelocity,
        Self::FrictionModes,
        Self::Dephasing,
        Self::DephasingLengthShift,
        Self::EquilibriumSweep,
        Self::EntropyAndFrictionWork,
        Self::IrreversibleWork,
        Self::Jarzynski,
        Self::GammaRegimes,
        Self::MassRegimes,
        Self::FidelityCheck,
    ];

    pub const ALL_NAMES: &'static [&'static str] = &[
        "const_velocity",
        "friction_modes",
        "dephasing",
        "dephasing_length_shift",
        "equilibrium_sweep",
        "entropy_and_friction_work",
        "irreversible_work",
        "jarzynski",
        "gamma_regimes",
        "mass_regimes",
        "fidelity_check",
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL_NAMES[self as usize]
    }

    /// What the scenario's outputs show.
    pub fn figure(self) -> &'static str {
        match self {
            Self::ConstVelocity => "wavefunction snapshots and ground-state population under constant wall velocity",
            Self::FrictionModes => "wall speed vs time for three friction laws, compression and expansion",
            Self::Dephasing => "populations, coherences and purity in the effective-Hamiltonian basis under dephasing",
            Self::DephasingLengthShift => "box length difference between dephased and coherent runs",
            Self::EquilibriumSweep => "final and minimum box length vs pressure ratio",
            Self::EntropyAndFrictionWork => "entropy production and energy dissipated by friction",
            Self::IrreversibleWork => "mean and irreversible two-point-measurement work",
            Self::Jarzynski => "Jarzynski equality along the trajectory",
            Self::GammaRegimes => "box length for weak, moderate and strong friction under initial expansion",
            Self::MassRegimes => "box length and wall speed for a light and a heavy wall",
            Self::FidelityCheck => "minimum instantaneous ground-state fidelity for a light and a heavy wall",
        }
    }

    /// Parameter choices the scenario makes before the user's config applies.
    pub fn preset(self) -> Overrides {
        let mut o = Overrides::default();
        match self {
            Self::Dephasing | Self::DephasingLengthShift => {
                o.truncation = Some(40);
                o.initial = Some(InitialKind::Ground);
            }
            Self::EquilibriumSweep | Self::EntropyAndFrictionWork | Self::IrreversibleWork | Self::Jarzynski => {
                o.initial = Some(InitialKind::Thermal);
            }
            Self::GammaRegimes | Self::MassRegimes | Self::FidelityCheck => {
                o.pressure = Some(PressureSetting::Ratio(0.9));
                o.initial = Some(InitialKind::Ground);
            }
            Self::ConstVelocity | Self::FrictionModes => {}
        }
        o
    }
}

impl FromStr for ScenarioName {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL_NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Self::ALL[i])
            .ok_or_else(|| HarnessError::UnknownScenario(s.to_string()))
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    /// User overrides; fields left `None` fall back to the scenario preset.
    pub overrides: Overrides,
    pub out: PathBuf,
}

impl ScenarioSpec {
    pub fn new(name: ScenarioName, out: impl Into<PathBuf>) -> Self {
        Self {
            name,
            overrides: Overrides::default(),
            out: out.into(),
        }
    }

    fn base(&self) -> Overrides {
        self.name.preset().merged_with(&self.overrides)
    }
}

/// Runs one scenario and returns the files it wrote, `meta.json` last.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Vec<PathBuf>> {
    log::info!("scenario {} -> {}", spec.name, spec.out.display());
    let base = spec.base();
    let mut dir = OutputDir::create(&spec.out)?;
    let meta = match spec.name {
        ScenarioName::ConstVelocity => const_velocity(&base, &mut dir)?,
        ScenarioName::FrictionModes => friction_modes(&base, &mut dir)?,
        ScenarioName::Dephasing => dephasing(&base, &mut dir)?,
        ScenarioName::DephasingLengthShift => dephasing_length_shift(&base, &mut dir)?,
        ScenarioName::EquilibriumSweep => pressure_sweep_into(&base, &sweep_ratios(), ScenarioName::EquilibriumSweep, &mut dir)?,
        ScenarioName::EntropyAndFrictionWork => thermo_scenario(&base, ScenarioName::EntropyAndFrictionWork, &mut dir)?,
        ScenarioName::IrreversibleWork => thermo_scenario(&base, ScenarioName::IrreversibleWork, &mut dir)?,
        ScenarioName::Jarzynski => thermo_scenario(&base, ScenarioName::Jarzynski, &mut dir)?,
        ScenarioName::GammaRegimes => gamma_regimes(&base, &mut dir)?,
        ScenarioName::MassRegimes => mass_regimes(&base, &mut dir, ScenarioName::MassRegimes)?,
        ScenarioName::FidelityCheck => mass_regimes(&base, &mut dir, ScenarioName::FidelityCheck)?,
    };
    dir.finish(&meta)?;
    Ok(dir.into_files())
}

// ---------------------------------------------------------------------------
// shared helpers

fn metadata(name: ScenarioName, params: serde_json::Value, defaults: Vec<(&str, String)>) -> Metadata {
    let mut all = vec![
        ("pressure_ratio".to_string(), "1.1 unless configured (P0 over the initial-state pressure)".to_string()),
        (
            "fidelity".to_string(),
            "|<ground|psi>| for pure states, sqrt(rho_11) for mixed states".to_string(),
        ),
    ];
    all.extend(defaults.into_iter().map(|(k, v)| (k.to_string(), v)));
    Metadata {
        scenario: name.as_str().to_string(),
        figure: name.figure().to_string(),
        params,
        defaults: all,
    }
}

fn list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn round_ratio(r: f64) -> f64 {
    (r * 1e8).round() / 1e8
}

fn tag(value: f64) -> String {
    format!("{value}").replace('-', "m")
}

fn with_axis(base: &Overrides, axis: impl FnOnce(&mut Overrides)) -> Overrides {
    let mut top = Overrides::default();
    axis(&mut top);
    base.merged_with(&top)
}

/// Resolves every setup, then moves all of them onto the smallest selected
/// step so that their CSV rows share time stamps.
fn resolve_common(overrides: &[Overrides]) -> Result<Vec<RunSetup>> {
    let mut setups = overrides.iter().map(Overrides::resolve).collect::<Result<Vec<_>>>()?;
    let dt = setups.iter().map(|s| s.params.dt).fold(f64::INFINITY, f64::min);
    for (setup, o) in setups.iter_mut().zip(overrides) {
        if setup.params.dt != dt {
            setup.params.dt = dt;
            setup.stride = o.stride.unwrap_or_else(|| default_stride(&setup.params));
        }
    }
    Ok(setups)
}

fn run(setup: &RunSetup, mode: Mode, stride: usize) -> Result<Trajectory> {
    let options = RunOptions {
        stride,
        keep_states: false,
    };
    Ok(simulate_with(&setup.params, mode, &setup.initial, options, |_, _| {})?)
}

/// Self-consistent run recorded at every step with thermodynamic records,
/// optionally including two-point-measurement work from `K` replays.
fn run_thermo(setup: &RunSetup, with_work: bool) -> Result<(Trajectory, Vec<ThermoRecord>)> {
    let basis = setup.params.basis()?;
    let mut recorder = ThermoRecorder::new(setup.params.beta, basis, setup.fidelity_target);
    let options = RunOptions {
        stride: 1,
        keep_states: false,
    };
    let trajectory = simulate_with(&setup.params, Mode::SelfConsistent, &setup.initial, options, |s, q| {
        recorder.observe(s, q)
    })?;
    let table = if with_work {
        Some(transition_probabilities(&trajectory, &setup.params)?)
    } else {
        None
    };
    let records = recorder.finish(&trajectory, table.as_ref())?;
    Ok((trajectory, records))
}

/// Number of sign changes of `values - level` as `(upward, downward)`.
/// Samples within `band` of the level keep the previous sign.
pub fn crossings(values: &[f64], level: f64, band: f64) -> (usize, usize) {
    let mut sign = 0i8;
    let (mut up, mut down) = (0, 0);
    for &v in values {
        let d = v - level;
        let s = if d > band {
            1
        } else if d < -band {
            -1
        } else {
            continue;
        };
        match (sign, s) {
            (-1, 1) => up += 1,
            (1, -1) => down += 1,
            _ => {}
        }
        sign = s;
    }
    (up, down)
}

fn column<F: Fn(&qpiston::Sample) -> f64>(t: &Trajectory, f: F) -> Vec<f64> {
    t.samples.iter().map(f).collect()
}

fn write_chart(dir: &mut OutputDir, name: &str, chart: Chart) -> Result<PathBuf> {
    dir.write(name, &chart.to_svg())
}

// ---------------------------------------------------------------------------
// constant velocity

fn const_velocity(base: &Overrides, dir: &mut OutputDir) -> Result<Metadata> {
    let velocities: Vec<f64> = CONSTANT_SPEEDS.iter().flat_map(|&v| [v, -v]).collect();
    let base_setup = base.resolve()?;
    let meta = metadata(
        ScenarioName::ConstVelocity,
        setup_json(&base_setup),
        vec![
            ("velocities", format!("+/-{{{}}}", list(&CONSTANT_SPEEDS))),
            ("duration", "T = L0 / (2|V|)".to_string()),
            ("time step", "min(dt, T/200), scaled by L_min^2 when compressing".to_string()),
        ],
    );
    let initial = match &base_setup.initial {
        QuantumState::Pure(p) => p.clone(),
        QuantumState::Mixed(_) => {
            return Err(HarnessError::config("initial_state", "const_velocity needs a pure initial state"))
        }
    };

    struct Outcome {
        trajectory: Trajectory,
        snapshots: Vec<(f64, f64, PureState)>,
        min_ground: f64,
        overlap: f64,
    }
    let outcomes: Vec<Outcome> = velocities
        .par_iter()
        .map(|&v| -> Result<Outcome> {
            let mut setup = base_setup.clone();
            let total = 1.0 / (2.0 * v.abs());
            let l_min = (1.0 + v * total).min(1.0);
            let target = setup.params.dt.min(total / 200.0) * l_min * l_min;
            let needed = (total / target).ceil() as usize;
            let stride = needed.div_ceil(MAX_ROWS).max(1);
            let steps = needed.div_ceil(stride) * stride;
            setup.params.total_time = total;
            setup.params.dt = total / steps as f64;
            let spacing = setup.params.dt * stride as f64;
            let targets: Vec<f64> = (0..SNAPSHOTS).map(|i| total * i as f64 / (SNAPSHOTS - 1) as f64).collect();
            let mut snapshots = Vec::new();
            let mut min_ground: f64 = 1.0;
            let options = RunOptions {
                stride,
                keep_states: false,
            };
            let trajectory = simulate_with(&setup.params, Mode::ConstantVelocity(v), &setup.initial, options, |s, q| {
                min_ground = min_ground.min(s.populations[0]);
                if let QuantumState::Pure(p) = q {
                    if targets.iter().any(|&t| (s.t - t).abs() < 0.5 * spacing) {
                        snapshots.push((s.t, s.length, p.clone()));
                    }
                }
            })?;
            let last = match &trajectory.final_state {
                QuantumState::Pure(p) => p.clone(),
                QuantumState::Mixed(_) => unreachable!("pure runs stay pure"),
            };
            let overlap = physical_overlap(&initial, 1.0, &last, trajectory.final_wall.length)?.norm();
            Ok(Outcome {
                trajectory,
                snapshots,
                min_ground,
                overlap,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Table::new(&["V", "T", "L_T", "min_ground_population", "initial_overlap"]);
    let mut chart = Chart::new("ground-state population, constant wall speed", "t / T", "pop_1");
    for (&v, o) in velocities.iter().zip(&outcomes) {
        let total = o.trajectory.params.total_time;
        summary.push(vec![v, total, o.trajectory.final_wall.length, o.min_ground, o.overlap]);
        let run_json = serde_json::json!({"velocity": v, "dt": o.trajectory.params.dt, "total_time": total});
        dir.write_trajectory(&format!("trajectory_v{}.csv", tag(v)), &o.trajectory, None, &meta, &run_json)?;

        let mut header = vec!["x_over_L".to_string()];
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let grid: Vec<f64> = (0..WAVEFUNCTION_POINTS)
            .map(|i| i as f64 / (WAVEFUNCTION_POINTS - 1) as f64)
            .collect();
        columns.push(grid.clone());
        for (t, length, state) in &o.snapshots {
            let xs: Vec<f64> = grid.iter().map(|z| (z * length).min(*length)).collect();
            let psi = wavefunction(state, *length, &xs, Frame::Physical)?;
            header.push(format!("x_t{t:.6}"));
            header.push(format!("re_t{t:.6}"));
            header.push(format!("im_t{t:.6}"));
            header.push(format!("abs2_t{t:.6}"));
            columns.push(xs);
            columns.push(psi.iter().map(|c| c.re).collect());
            columns.push(psi.iter().map(|c| c.im).collect());
            columns.push(psi.iter().map(|c| c.norm_sqr()).collect());
        }
        let mut table = Table::new(&header);
        for i in 0..WAVEFUNCTION_POINTS {
            table.push(columns.iter().map(|c| c[i]).collect());
        }
        dir.write_table(&format!("wavefunction_v{}.csv", tag(v)), &table, &meta)?;

        let ts: Vec<f64> = o.trajectory.samples.iter().map(|s| s.t / total).collect();
        chart = chart.with(Series::new(format!("V = {v}"), &ts, &column(&o.trajectory, |s| s.populations[0])));
    }
    dir.write_table("summary.csv", &summary, &meta)?;
    write_chart(dir, "ground_population.svg", chart)?;
    Ok(meta)
}

// ---------------------------------------------------------------------------
// friction laws

fn friction_mode_code(mode: FrictionMode) -> f64 {
    FRICTION_MODES.iter().position(|m| *m == mode).unwrap_or(0) as f64
}

fn friction_modes(base: &Overrides, dir: &mut OutputDir) -> Result<Metadata> {
    let ratios = ratio_axis(base, &THERMO_RATIOS);
    let cases: Vec<(f64, FrictionMode)> = ratios
        .iter()
        .flat_map(|&r| FRICTION_MODES.iter().map(move |&m| (r, m)))
        .collect();
    let overrides: Vec<Overrides> = cases
        .iter()
        .map(|&(r, m)| {
            with_axis(base, |o| {
                o.pressure = Some(PressureSetting::Ratio(r));
                o.friction_mode = Some(m);
            })
        })
        .collect();
    let setups = resolve_common(&overrides)?;
    let meta = metadata(
        ScenarioName::FrictionModes,
        setup_json(&setups[0]),
        vec![
            ("pressure ratios", list(&ratios)),
            ("mode codes", "0 = none, 1 = symmetric, 2 = expansion_only".to_string()),
            ("crossings", "sign changes of V at full step resolution".to_string()),
        ],
    );
    let runs = setups
        .par_iter()
        .map(|s| run(s, Mode::SelfConsistent, 1))
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Table::new(&[
        "pressure_ratio",
        "mode",
        "L_T",
        "V_T",
        "max_abs_V",
        "relative_residual",
        "final_speed_fraction",
        "crossings_up",
        "crossings_down",
    ]);
    let mut charts: Vec<Chart> = ratios
        .iter()
        .map(|r| Chart::new(&format!("wall speed, P0/P(0) = {r}"), "t", "V"))
        .collect();
    for ((&(r, m), setup), full) in cases.iter().zip(&setups).zip(&runs) {
        let p = &setup.params;
        let last = full.last();
        let balance = p.section * p.external_pressure;
        let residual = (2.0 * last.energy / last.length - balance).abs() / balance;
        let max_v = full.max_abs_velocity();
        let (up, down) = crossings(&column(full, |s| s.velocity), 0.0, 0.0);
        summary.push(vec![
            r,
            friction_mode_code(m),
            last.length,
            last.velocity,
            max_v,
            residual,
            last.velocity.abs() / max_v,
            up as f64,
            down as f64,
        ]);
        let out = thin(full, setup.stride);
        let run_json = setup_json(setup);
        dir.write_trajectory(&format!("trajectory_{}_r{r:.2}.csv", m.name()), &out, None, &meta, &run_json)?;
        let i = ratios.iter().position(|x| *x == r).unwrap_or(0);
        let chart = std::mem::replace(&mut charts[i], Chart::new("", "", ""));
        charts[i] = chart.with(Series::new(m.name(), &out.times(), &column(&out, |s| s.velocity)));
    }
    dir.write_table("summary.csv", &summary, &meta)?;
    for (r, chart) in ratios.iter().zip(charts) {
        write_chart(dir, &format!("speed_r{r:.2}.svg"), chart)?;
    }
    Ok(meta)
}

/// The configured pressure ratio alone, or `default` when none was given.
fn ratio_axis(base: &Overrides, default: &[f64]) -> Vec<f64> {
    match base.pressure {
        Some(PressureSetting::Ratio(r)) => vec![r],
        _ => default.to_vec(),
    }
}

// ---------------------------------------------------------------------------
// dephasing

fn dephasing_setups(base: &Overrides, rates: &[f64]) -> Result<Vec<RunSetup>> {
    let overrides: Vec<Overrides> = rates
        .iter()
        .map(|&g| with_axis(base, |o| o.dephasing_rate = Some(g)))
        .collect();
    let mut setups = resolve_common(&overrides)?;
    for s in &mut setups {
        s.initial = QuantumState::Mixed(s.initial.to_mixed());
    }
    Ok(setups)
}

fn dephasing(base: &Overrides, dir: &mut OutputDir) -> Result<Metadata> {
    let setups = dephasing_setups(base, &DEPHASING_RATES)?;
    let meta = metadata(
        ScenarioName::Dephasing,
        setup_json(&setups[0]),
        vec![
            ("dephasing rates", list(&DEPHASING_RATES)),
            ("state", "density matrix for every rate".to_string()),
            ("coherence", "sum of |rho_nk| over n != k in the effective-Hamiltonian eigenbasis".to_string()),
        ],
    );

    struct Outcome {
        trajectory: Trajectory,
        observables: Table,
    }
    let outcomes = setups
        .par_iter()
        .map(|setup| -> Result<Outcome> {
            let k = setup.params.truncation;
            let basis = setup.params.basis()?;
            let mut header = vec!["t".to_string(), "L".to_string()];
            header.extend((1..=k).map(|n| format!("hpop_{n}")));
            header.push("coherence".into());
            header.push("purity".into());
            let mut table = Table::new(&header);
            let mut failure = None;
            let options = RunOptions {
                stride: setup.stride,
                keep_states: false,
            };
            let trajectory = simulate_with(&setup.params, Mode::SelfConsistent, &setup.initial, options, |s, q| {
                if failure.is_some() {
                    return;
                }
                let result = basis
                    .effective_hamiltonian(s.length, s.velocity)
                    .and_then(|h| hstar_basis_observables(&q.to_mixed(), &h));
                match result {
                    Ok(obs) => {
                        let mut row = vec![s.t, s.length];
                        row.extend(obs.populations);
                        row.push(obs.coherence);
                        row.push(obs.purity);
                        table.push(row);
                    }
                    Err(e) => failure = Some(e),
                }
            })?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            Ok(Outcome {
                trajectory,
                observables: table,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Table::new(&["dephasing_rate", "min_purity", "L_T", "coherence_T"]);
    let mut purity = Chart::new("purity under dephasing", "t", "purity");
    for ((&g, setup), o) in DEPHASING_RATES.iter().zip(&setups).zip(&outcomes) {
        let min_purity = o.trajectory.samples.iter().fold(f64::INFINITY, |m, s| m.min(s.purity));
        let coherence = o.observables.column("coherence").and_then(|c| c.last().copied()).unwrap_or(f64::NAN);
        summary.push(vec![g, min_purity, o.trajectory.final_wall.length, coherence]);
        dir.write_trajectory(&format!("trajectory_gamma{g}.csv"), &o.trajectory, None, &meta, &setup_json(setup))?;
        dir.write_table(&format!("hstar_basis_gamma{g}.csv"), &o.observables, &meta)?;
        purity = purity.with(Series::new(format!("Gamma = {g}"), &o.trajectory.times(), &column(&o.trajectory, |s| s.purity)));
    }
    dir.write_table("summary.csv", &summary, &meta)?;
    write_chart(dir, "purity.svg", purity)?;
    Ok(meta)
}

fn dephasing_length_shift(base: &Overrides, dir: &mut OutputDir) -> Result<Metadata> {
    let setups = dephasing_setups(base, &SHIFT_RATES)?;
    let meta = metadata(
        ScenarioName::DephasingLengthShift,
        setup_json(&setups[0]),
        vec![("dephasing rates", list(&SHIFT_RATES))],
    );
    let runs = setups
        .par_iter()
        .map(|s| run(s, Mode::SelfConsistent, s.stride))
        .collect::<Result<Vec<_>>>()?;
    let (coherent, dephased) = (&runs[0], &runs[1]);
    let header = vec![
        "t".to_string(),
        format!("L_gamma{}", SHIFT_RATES[0]),
        format!("L_gamma{}", SHIFT_RATES[1]),
        "delta_L".to_string(),
    ];
    let mut table = Table::new(&header);
    for (a, b) in coherent.samples.iter().zip(&dephased.samples) {
        table.push(vec![a.t, a.length, b.length, b.length - a.length]);
    }
    for (g, (setup, t)) in SHIFT_RATES.iter().zip(setups.iter().zip(&runs)) {
        dir.write_trajectory(&format!("trajectory_gamma{g}.csv"), t, None, &meta, &setup_json(setup))?;
    }
    let delta = table.column("delta_L").unwrap_or_default();
    dir.write_table("length_shift.csv", &table, &meta)?;
    write_chart(
        dir,
        "length_shift.svg",
        Chart::new("length shift from dephasing", "t", "delta L").with(Series::new("delta L", &coherent.times(), &delta)),
    )?;
    Ok(meta)
}

// ---------------------------------------------------------------------------
// pressure sweep

/// Runs `base` once per pressure ratio (in parallel) and writes `L(T)` and
/// `L_min` against the ratio.
pub fn pressure_sweep(base: &Overrides, ratios: &[f64], out: &Path) -> Result<Vec<PathBuf>> {
    let mut dir = OutputDir::create(out)?;
    let meta = pressure_sweep_into(base, ratios, ScenarioName::EquilibriumSweep, &mut dir)?;
    dir.finish(&meta)?;
    Ok(dir.into_files())
}

fn pressure_sweep_into(base: &Overrides, ratios: &[f64], name: ScenarioName, dir: &mut OutputDir) -> Result<Metadata> {
    if ratios.is_empty() {
        return Err(HarnessError::config("pressure_ratio", "the sweep needs at least one ratio"));
    }
    let overrides: Vec<Overrides> = ratios
        .iter()
        .map(|&r| with_axis(base, |o| o.pressure = Some(PressureSetting::Ratio(r))))
        .collect();
    let setups = overrides.iter().map(Overrides::resolve).collect::<Result<Vec<_>>>()?;
    let meta = metadata(
        name,
        setup_json(&setups[0]),
        vec![("pressure ratios", format!("{} .. {} ({} values)", ratios[0], ratios[ratios.len() - 1], ratios.len()))],
    );
    let runs = setups
        .par_iter()
        .map(|s| run(s, Mode::SelfConsistent, s.stride))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["pressure_ratio", "L_T", "L_min", "V_T", "dt"]);
    for ((&r, s), t) in ratios.iter().zip(&setups).zip(&runs) {
        table.push(vec![r, t.final_wall.length, t.min_length(), t.final_wall.velocity, s.params.dt]);
    }
    let lt = table.column("L_T").unwrap_or_default();
    let lmin = table.column("L_min").unwrap_or_default();
    dir.write_table("sweep.csv", &table, &meta)?;
    write_chart(
        dir,
        "sweep.svg",
        Chart::new("final and minimum length", "P0 / P(0)", "L")
            .with(Series::new("L(T)", ratios, &lt))
            .with(Series::new("L_min", ratios, &lmin)),
    )?;
    Ok(meta)
}

// ---------------------------------------------------------------------------
// thermodynamics

/// Full-resolution checks of one thermodynamic run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThermoSummary {
    pub min_entropy_production: f64,
    /// `max |Σ - β(ΔU - ΔF)|`.
    pub max_identity_error: f64,
    /// `max |⟨e^{-βW}⟩ - e^{-βΔF}|`, NaN without work statistics.
    pub max_jarzynski_error: f64,
    pub entropy_production_t: f64,
    pub friction_work_t: f64,
}

pub fn summarize_thermo(records: &[ThermoRecord], beta: f64) -> ThermoSummary {
    let mut s = ThermoSummary {
        min_entropy_production: f64::INFINITY,
        max_jarzynski_error: f64::NAN,
        ..Default::default()
    };
    for r in records {
        s.min_entropy_production = s.min_entropy_production.min(r.entropy_production);
        let identity = (r.entropy_production - beta * (r.delta_u - r.delta_f)).abs();
        s.max_identity_error = s.max_identity_error.max(identity);
        if let (Some(l), Some(rhs)) = (r.jarzynski_lhs, r.jarzynski_rhs) {
            let e = (l - rhs).abs();
            s.max_jarzynski_error = if s.max_jarzynski_error.is_nan() { e } else { s.max_jarzynski_error.max(e) };
        }
    }
    if let Some(last) = records.last() {
        s.entropy_production_t = last.entropy_production;
        s.friction_work_t = last.friction_work;
    }
    s
}

/// Thermal run at the configured pressure with entropy production and
/// two-point-measurement work, written to `out`.
pub fn jarzynski_run(base: &Overrides, out: &Path) -> Result<Vec<PathBuf>> {
    let base = ScenarioName::Jarzynski.preset().merged_with(base);
    let ratios = ratio_axis(&base, &[crate::config::DEFAULT_PRESSURE_RATIO]);
    let mut dir = OutputDir::create(out)?;
    let meta = thermo_runs(&base, &ratios, ScenarioName::Jarzynski, &mut dir)?;
    dir.finish(&meta)?;
    Ok(dir.into_files())
}

fn thermo_scenario(base: &Overrides, name: ScenarioName, dir: &mut OutputDir) -> Result<Metadata> {
    let ratios = ratio_axis(base, &THERMO_RATIOS);
    thermo_runs(base, &ratios, name, dir)
}

fn thermo_runs(base: &Overrides, ratios: &[f64], name: ScenarioName, dir: &mut OutputDir) -> Result<Metadata> {
    let with_work = name != ScenarioName::EntropyAndFrictionWork;
    let overrides: Vec<Overrides> = ratios
        .iter()
        .map(|&r| with_axis(base, |o| o.pressure = Some(PressureSetting::Ratio(r))))
        .collect();
    let setups = resolve_common(&overrides)?;
    let mut defaults = vec![
        ("pressure ratios", list(ratios)),
        ("entropy production", "relative entropy to the instantaneous Gibbs state at the initial beta".to_string()),
    ];
    if with_work {
        defaults.push(("work statistics", "two-point measurement from one replay per basis state".to_string()));
    }
    let meta = metadata(name, setup_json(&setups[0]), defaults);
    let runs = setups
        .par_iter()
        .map(|s| run_thermo(s, with_work))
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Table::new(&[
        "pressure_ratio",
        "L_T",
        "Sigma_T",
        "W_fric_T",
        "min_Sigma",
        "max_identity_error",
        "max_jarzynski_error",
    ]);
    let (y_label, title) = match name {
        ScenarioName::EntropyAndFrictionWork => ("Sigma", "entropy production"),
        ScenarioName::IrreversibleWork => ("W_irr", "irreversible work"),
        _ => ("<exp(-beta W)> - exp(-beta dF)", "Jarzynski difference"),
    };
    let mut chart = Chart::new(title, "t", y_label);
    let mut friction = Chart::new("energy dissipated by friction", "t", "W_fric");
    for ((&r, setup), (full, records)) in ratios.iter().zip(&setups).zip(&runs) {
        let beta = setup.params.beta;
        let s = summarize_thermo(records, beta);
        summary.push(vec![
            r,
            full.final_wall.length,
            s.entropy_production_t,
            s.friction_work_t,
            s.min_entropy_production,
            s.max_identity_error,
            s.max_jarzynski_error,
        ]);
        let traj = thin(full, setup.stride);
        let recs = thin_records(records, setup.stride);
        dir.write_trajectory(&format!("trajectory_r{r:.2}.csv"), &traj, Some(&recs), &meta, &setup_json(setup))?;
        let ts: Vec<f64> = recs.iter().map(|x| x.t).collect();
        let series: Vec<f64> = match name {
            ScenarioName::EntropyAndFrictionWork => {
                let mut table = Table::new(&["t", "Sigma", "beta_dU_minus_dF", "W_fric"]);
                for x in &recs {
                    table.push(vec![x.t, x.entropy_production, beta * (x.delta_u - x.delta_f), x.friction_work]);
                }
                dir.write_table(&format!("entropy_r{r:.2}.csv"), &table, &meta)?;
                recs.iter().map(|x| x.entropy_production).collect()
            }
            ScenarioName::IrreversibleWork => {
                let mut table = Table::new(&["t", "W_mean", "Delta_F", "W_irr", "Sigma_over_beta"]);
                for x in &recs {
                    table.push(vec![
                        x.t,
                        x.mean_work.unwrap_or(f64::NAN),
                        x.delta_f,
                        x.irreversible_work.unwrap_or(f64::NAN),
                        x.entropy_production / beta,
                    ]);
                }
                dir.write_table(&format!("irreversible_work_r{r:.2}.csv"), &table, &meta)?;
                recs.iter().map(|x| x.irreversible_work.unwrap_or(f64::NAN)).collect()
            }
            _ => {
                let mut table = Table::new(&["t", "lhs", "rhs", "difference", "Sigma", "beta_dU_minus_dF"]);
                for x in &recs {
                    let lhs = x.jarzynski_lhs.unwrap_or(f64::NAN);
                    let rhs = x.jarzynski_rhs.unwrap_or(f64::NAN);
                    table.push(vec![x.t, lhs, rhs, lhs - rhs, x.entropy_production, beta * (x.delta_u - x.delta_f)]);
                }
                dir.write_table(&format!("jarzynski_r{r:.2}.csv"), &table, &meta)?;
                recs.iter()
                    .map(|x| x.jarzynski_lhs.unwrap_or(f64::NAN) - x.jarzynski_rhs.unwrap_or(f64::NAN))
                    .collect()
            }
        };
        chart = chart.with(Series::new(format!("P0/P(0) = {r}"), &ts, &series));
        friction = friction.with(Series::new(
            format!("P0/P(0) = {r}"),
            &ts,
            &recs.iter().map(|x| x.friction_work).collect::<Vec<_>>(),
        ));
    }
    dir.write_table("summary.csv", &summary, &meta)?;
    write_chart(dir, &format!("{}.svg", name.as_str()), chart)?;
    if name == ScenarioName::EntropyAndFrictionWork {
        write_chart(dir, "friction_work.svg", friction)?;
    }
    Ok(meta)
}

// ---------------------------------------------------------------------------
// friction and mass regimes

fn gamma_regimes(base: &Overrides, dir: &mut OutputDir) -> Result<Metadata> {
    let overrides: Vec<Overrides> = FRICTION_COEFFICIENTS
        .iter()
        .map(|&g| with_axis(base, |o| o.friction = Some(g)))
        .collect();
    let setups = resolve_common(&overrides)?;
    let meta = metadata(
        ScenarioName::GammaRegimes,
        setup_json(&setups[0]),
        vec![
            ("friction coefficients", list(&FRICTION_COEFFICIENTS)),
            ("crossings", "sign changes of L(t) - L(T) at full step resolution".to_string()),
        ],
    );
    let runs = setups
        .par_iter()
        .map(|s| run(s, Mode::SelfConsistent, 1))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = Table::new(&["friction", "L_T", "L_min", "crossings_of_final_length"]);
    let mut chart = Chart::new("box length for three friction coefficients", "t", "L");
    for ((&g, setup), full) in FRICTION_COEFFICIENTS.iter().zip(&setups).zip(&runs) {
        let lengths = column(full, |s| s.length);
        let l_t = full.final_wall.length;
        let (up, down) = crossings(&lengths, l_t, 0.0);
        summary.push(vec![g, l_t, full.min_length(), (up + down) as f64]);
        let out = thin(full, setup.stride);
        dir.write_trajectory(&format!("trajectory_gamma{g}.csv"), &out, None, &meta, &setup_json(setup))?;
        chart = chart.with(Series::new(format!("gamma = {g}"), &out.times(), &column(&out, |s| s.length)));
    }
    dir.write_table("summary.csv", &summary, &meta)?;
    write_chart(dir, "length.svg", chart)?;
    Ok(meta)
}

fn mass_regimes(base: &Overrides, dir: &mut OutputDir, name: ScenarioName) -> Result<Metadata> {
    let overrides: Vec<Overrides> = WALL_MASSES
        .iter()
        .map(|&m| {
            with_axis(base, |o| {
                o.wall_mass = Some(m);
                o.friction = Some(FRICTION_PER_MASS * m);
            })
        })
        .collect();
    let setups = overrides.iter().map(Overrides::resolve).collect::<Result<Vec<_>>>()?;
    let meta = metadata(
        name,
        setup_json(&setups[0]),
        vec![
            ("wall masses", list(&WALL_MASSES)),
            ("friction", format!("gamma = {FRICTION_PER_MASS} * M")),
        ],
    );

    let runs = setups
        .par_iter()
        .map(|setup| -> Result<(Trajectory, f64)> {
            let basis = setup.params.basis()?;
            let mut min_fidelity = f64::INFINITY;
            let mut failure = None;
            // every step, so the minimum is not missed between rows
            let options = RunOptions {
                stride: 1,
                keep_states: false,
            };
            let trajectory = simulate_with(&setup.params, Mode::SelfConsistent, &setup.initial, options, |s, q| {
                let f = match setup.fidelity_target {
                    qpiston::thermo::FidelityTarget::Physical => Ok(ground_state_fidelity(q)),
                    qpiston::thermo::FidelityTarget::Effective => basis
                        .effective_hamiltonian(s.length, s.velocity)
                        .and_then(|h| qpiston::thermo::effective_ground_state_fidelity(q, &h)),
                };
                match f {
                    Ok(f) => min_fidelity = min_fidelity.min(f),
                    Err(e) => failure = Some(e),
                }
            })?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            Ok((thin(&trajectory, setup.stride), min_fidelity))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Table::new(&["wall_mass", "friction", "pressure_ratio", "L_T", "max_abs_V", "min_fidelity"]);
    let mut length = Chart::new("box length", "t", "L");
    let mut speed = Chart::new("wall speed", "t", "V");
    for ((&m, setup), (traj, min_fidelity)) in WALL_MASSES.iter().zip(&setups).zip(&runs) {
        summary.push(vec![
            m,
            setup.params.friction,
            setup.pressure_ratio,
            traj.final_wall.length,
            traj.max_abs_velocity(),
            *min_fidelity,
        ]);
        if name == ScenarioName::MassRegimes {
            dir.write_trajectory(&format!("trajectory_m{m}.csv"), traj, None, &meta, &setup_json(setup))?;
            length = length.with(Series::new(format!("M = {m}"), &traj.times(), &column(traj, |s| s.length)));
            speed = speed.with(Series::new(format!("M = {m}"), &traj.times(), &column(traj, |s| s.velocity)));
        }
    }
    dir.write_table("summary.csv", &summary, &meta)?;
    if name == ScenarioName::MassRegimes {
        write_chart(dir, "length.svg", length)?;
        write_chart(dir, "speed.svg", speed)?;
    }
    Ok(meta)
}
