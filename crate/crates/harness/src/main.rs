use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qpiston::thermo::ThermoRecorder;
use qpiston::{simulate_with, Mode, RunOptions};
use qpiston_harness::config::{load_config, LoadedConfig, Overrides};
use qpiston_harness::convergence::{convergence_report, write_report};
use qpiston_harness::output::{setup_json, thin, thin_records, Metadata, OutputDir};
use qpiston_harness::scenarios::{jarzynski_run, pressure_sweep, sweep_ratios};
use qpiston_harness::{run_scenario, HarnessError, Result, ScenarioName, ScenarioSpec};

/// Worker threads for sweeps and replays; defaults to the number of CPUs.
const WORKERS_ENV: &str = "QPISTON_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "qpiston", version, about = "Quantum particle in a box with a moving wall")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of basis states.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Time step; disables automatic step selection.
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One self-consistent run of the configured system.
    Simulate,
    /// Reproduce one of the named scenarios.
    Scenario {
        /// Scenario name (see `qpiston scenario --help`).
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(ScenarioName::ALL_NAMES))]
        name: Option<String>,
    },
    /// Final and minimum length over a range of pressure ratios.
    Sweep {
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Work statistics and the Jarzynski equality for a thermal start.
    Jarzynski,
    /// dt-halving and truncation convergence of the configured run.
    Convergence,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_pool().and_then(|pool| pool.install(|| execute(&cli))) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error ({}): {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(WORKERS_ENV) {
        let n: usize = value
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| HarnessError::config(WORKERS_ENV, format!("expected a positive integer, got `{value}`")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| HarnessError::config(WORKERS_ENV, e.to_string()))
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let loaded = match &cli.config {
        Some(path) => load_config(path)?,
        None => qpiston_harness::parse_config("")?,
    };
    let mut overrides = loaded.overrides.clone();
    if let Some(k) = cli.k {
        overrides.truncation = Some(k);
    }
    if let Some(dt) = cli.dt {
        overrides.dt = Some(dt);
        overrides.auto_dt = Some(false);
    }
    let out = |default: &str| -> PathBuf {
        cli.out
            .clone()
            .or_else(|| loaded.out.clone())
            .unwrap_or_else(|| PathBuf::from(default))
    };

    match &cli.command {
        Command::Simulate => simulate(&overrides, &out("out/simulate")),
        Command::Scenario { name } => {
            let name: ScenarioName = match (name, &loaded) {
                (Some(n), _) => n.parse()?,
                (None, LoadedConfig { scenario: Some(s), .. }) => s.name,
                (None, _) => {
                    return Err(HarnessError::config(
                        "scenario",
                        "give a scenario name on the command line or in the config",
                    ))
                }
            };
            let spec = ScenarioSpec {
                name,
                overrides,
                out: out(&format!("out/{name}")),
            };
            run_scenario(&spec)
        }
        Command::Sweep { from, to, step } => {
            let ratios = match (from, to, step) {
                (None, None, None) => sweep_ratios(),
                _ => ratio_range(from.unwrap_or(0.8), to.unwrap_or(1.2), step.unwrap_or(0.02))?,
            };
            pressure_sweep(&overrides, &ratios, &out("out/sweep"))
        }
        Command::Jarzynski => jarzynski_run(&overrides, &out("out/jarzynski")),
        Command::Convergence => {
            let report = convergence_report(&overrides)?;
            log::info!("observed order {:.3}", report.observed_order);
            write_report(&report, &overrides, &out("out/convergence"))
        }
    }
}

fn ratio_range(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(to >= from) || !(from > 0.0) {
        return Err(HarnessError::config(
            "sweep",
            format!("need 0 < from <= to and step > 0, got {from}..{to} by {step}"),
        ));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((from + step * i as f64) * 1e8).round() / 1e8).collect())
}

fn simulate(overrides: &Overrides, out: &Path) -> Result<Vec<PathBuf>> {
    let setup = overrides.resolve()?;
    let basis = setup.params.basis()?;
    let mut recorder = ThermoRecorder::new(setup.params.beta, basis, setup.fidelity_target);
    let options = RunOptions {
        stride: 1,
        keep_states: false,
    };
    let trajectory = simulate_with(&setup.params, Mode::SelfConsistent, &setup.initial, options, |s, q| {
        recorder.observe(s, q)
    })?;
    let records = recorder.finish(&trajectory, None)?;
    let meta = Metadata {
        scenario: "simulate".into(),
        figure: "single self-consistent run".into(),
        params: setup_json(&setup),
        defaults: vec![],
    };
    let mut dir = OutputDir::create(out)?;
    dir.write_trajectory(
        "trajectory.csv",
        &thin(&trajectory, setup.stride),
        Some(&thin_records(&records, setup.stride)),
        &meta,
        &setup_json(&setup),
    )?;
    dir.write("final_state.txt", &trajectory.final_state.to_record())?;
    dir.finish(&meta)?;
    Ok(dir.into_files())
}
