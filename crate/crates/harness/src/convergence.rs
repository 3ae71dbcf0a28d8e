//! Step-size and truncation convergence of one configured run.
//!
//! The run is repeated at `dt`, `dt/2` and `dt/4` (same `K`) and at `2K`
//! (same `dt`). Deviations are maxima over the common sample times, every
//! `stride` steps of the coarsest run. The observed order of the integrator
//! is `log2` of the ratio of successive dt-halving deviations.

use std::path::{Path, PathBuf};

use qpiston::io::write_trajectory_csv;
use qpiston::thermo::{free_energy_difference, jarzynski_check, transition_probabilities_every, work_distribution_at};
use qpiston::{simulate_with, Mode, RunOptions, SimParams, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Overrides, RunSetup};
use crate::error::{HarnessError, Result};
use crate::output::{setup_json, Metadata, OutputDir, Table};

/// Maximum absolute differences between two runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Deviations {
    pub length: f64,
    pub energy: f64,
    pub ground_population: f64,
    /// Of `⟨e^{-βW}⟩ - e^{-βΔF}`; NaN when not computed.
    pub jarzynski: f64,
}

impl Deviations {
    fn ratio(&self, finer: &Deviations) -> Deviations {
        Deviations {
            length: self.length / finer.length,
            energy: self.energy / finer.energy,
            ground_population: self.ground_population / finer.ground_population,
            jarzynski: self.jarzynski / finer.jarzynski,
        }
    }

    /// Largest of the wall and particle observables (the Jarzynski column is
    /// reported separately).
    pub fn max_observable(&self) -> f64 {
        self.length.max(self.energy).max(self.ground_population)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub dt: f64,
    pub truncation: usize,
    /// Steps of the coarsest run between compared samples.
    pub stride: usize,
    pub dt_vs_half: Deviations,
    pub half_vs_quarter: Deviations,
    /// `dt_vs_half / half_vs_quarter`, about 16 for a fourth-order method.
    pub halving_ratio: Deviations,
    /// `log2` of `halving_ratio` for the combined observable maximum.
    pub observed_order: f64,
    pub k_vs_2k: Deviations,
    /// Two runs with identical parameters wrote identical CSV bytes.
    pub deterministic: bool,
}

struct Run {
    trajectory: Trajectory,
    /// `⟨e^{-βW}⟩ - e^{-βΔF}` at every `every`-th sample.
    jarzynski: Vec<f64>,
}

/// `base` resolves as usual except that `dt` is taken as given.
pub fn convergence_report(base: &Overrides) -> Result<ConvergenceReport> {
    let mut o = base.clone();
    o.auto_dt = Some(false);
    let setup = o.resolve()?;
    let stride = setup.stride;
    let dt = setup.params.dt;
    let k = setup.params.truncation;
    if setup.params.steps() % stride != 0 {
        return Err(HarnessError::config("stride", "must divide the number of steps"));
    }

    let variants: Vec<(f64, usize, usize, bool)> = vec![
        (dt, k, 1, true),
        (dt / 2.0, k, 2, true),
        (dt / 4.0, k, 4, false),
        (dt, 2 * k, 1, true),
        (dt, k, 1, false),
    ];
    let runs = variants
        .par_iter()
        .map(|&(h, size, every, with_work)| -> Result<Run> {
            let mut s = if size == k { setup.clone() } else { resized(&setup, size)? };
            s.params.dt = h;
            run(&s, stride * every, with_work)
        })
        .collect::<Result<Vec<_>>>()?;

    let csv = |t: &Trajectory| {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, t, None, &[]).map(|_| buf)
    };
    let bytes_a = csv(&runs[0].trajectory).map_err(|e| HarnessError::io("<memory>", e))?;
    let bytes_b = csv(&runs[4].trajectory).map_err(|e| HarnessError::io("<memory>", e))?;

    let dt_vs_half = compare(&runs[0], &runs[1], 1, 2);
    let half_vs_quarter = compare(&runs[1], &runs[2], 2, 4);
    let halving_ratio = dt_vs_half.ratio(&half_vs_quarter);
    let observed_order = (dt_vs_half.max_observable() / half_vs_quarter.max_observable()).log2();
    Ok(ConvergenceReport {
        dt,
        truncation: k,
        stride,
        dt_vs_half,
        half_vs_quarter,
        halving_ratio,
        observed_order,
        k_vs_2k: compare(&runs[0], &runs[3], 1, 1),
        deterministic: bytes_a == bytes_b,
    })
}

/// Same physical setup in a basis of `size` states. The external pressure
/// carries over unchanged, so both truncations see the same `P0`.
fn resized(setup: &RunSetup, size: usize) -> Result<RunSetup> {
    let mut s = setup.clone();
    s.params.truncation = size;
    let basis = s.params.basis()?;
    let mut state = setup.initial_state.prepare(&basis, qpiston::INITIAL_LENGTH)?;
    if setup.initial.is_mixed() && !state.is_mixed() {
        state = qpiston::QuantumState::Mixed(state.to_mixed());
    }
    s.initial = state;
    Ok(s)
}

fn run(setup: &RunSetup, every: usize, with_work: bool) -> Result<Run> {
    let options = RunOptions {
        stride: 1,
        keep_states: false,
    };
    let trajectory = simulate_with(&setup.params, Mode::SelfConsistent, &setup.initial, options, |_, _| {})?;
    let jarzynski = if with_work {
        jarzynski_differences(&trajectory, &setup.params, every)?
    } else {
        Vec::new()
    };
    Ok(Run { trajectory, jarzynski })
}

fn jarzynski_differences(trajectory: &Trajectory, params: &SimParams, every: usize) -> Result<Vec<f64>> {
    let table = transition_probabilities_every(trajectory, params, every)?;
    let basis = params.basis()?;
    let l0 = table.lengths[0];
    (0..table.samples())
        .map(|i| {
            let dist = work_distribution_at(&table, i, params.beta, &basis)?;
            let delta_f = free_energy_difference(params.beta, table.lengths[i], l0, &basis)?;
            Ok(jarzynski_check(&dist, params.beta, delta_f).difference)
        })
        .collect::<std::result::Result<Vec<_>, qpiston::Error>>()
        .map_err(Into::into)
}

/// Compares sample `i * step_a` of `a` with sample `i * step_b` of `b`.
fn compare(a: &Run, b: &Run, step_a: usize, step_b: usize) -> Deviations {
    let mut d = Deviations::default();
    for (x, y) in a
        .trajectory
        .samples
        .iter()
        .step_by(step_a)
        .zip(b.trajectory.samples.iter().step_by(step_b))
    {
        d.length = d.length.max((x.length - y.length).abs());
        d.energy = d.energy.max((x.energy - y.energy).abs());
        d.ground_population = d.ground_population.max((x.populations[0] - y.populations[0]).abs());
    }
    d.jarzynski = if a.jarzynski.is_empty() || b.jarzynski.is_empty() {
        f64::NAN
    } else {
        a.jarzynski
            .iter()
            .zip(&b.jarzynski)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    };
    d
}

/// Writes `convergence.csv` (one row per comparison) and `meta.json`.
pub fn write_report(report: &ConvergenceReport, base: &Overrides, out: &Path) -> Result<Vec<PathBuf>> {
    let mut o = base.clone();
    o.auto_dt = Some(false);
    let setup = o.resolve()?;
    let meta = Metadata {
        scenario: "convergence".into(),
        figure: "step-size and truncation convergence of the configured run".into(),
        params: setup_json(&setup),
        defaults: vec![
            ("comparisons".into(), "dt vs dt/2, dt/2 vs dt/4, K vs 2K".into()),
            ("observed order".into(), format!("{:.3}", report.observed_order)),
            ("deterministic".into(), report.deterministic.to_string()),
        ],
    };
    let mut table = Table::new(&["comparison", "dt", "K", "L", "U", "pop_1", "jarzynski"]);
    let rows = [
        (1.0, report.dt, report.truncation, report.dt_vs_half),
        (2.0, report.dt / 2.0, report.truncation, report.half_vs_quarter),
        (3.0, report.dt, report.truncation, report.k_vs_2k),
    ];
    for (code, dt, k, d) in rows {
        table.push(vec![code, dt, k as f64, d.length, d.energy, d.ground_population, d.jarzynski]);
    }
    let mut dir = OutputDir::create(out)?;
    let mut meta = meta;
    meta.defaults
        .push(("comparison codes".into(), "1 = dt vs dt/2, 2 = dt/2 vs dt/4, 3 = K vs 2K".into()));
    dir.write_table("convergence.csv", &table, &meta)?;
    let json = serde_json::to_string_pretty(report).expect("report serialises") + "\n";
    dir.write("report.json", &json)?;
    dir.finish(&meta)?;
    Ok(dir.into_files())
}
