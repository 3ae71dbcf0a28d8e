//! Trajectory CSV format.
//!
//! Optional `# key: value` preamble lines, one header row, then one row per
//! sample. Base columns are `t,L,V,U,P,W_fric,purity,pop_1..pop_K`, followed
//! by `energy_residual` and, when thermodynamic records are attached,
//! `Sigma_ep,Delta_F,Delta_U,W_mean,W_irr,jarzynski_lhs,jarzynski_rhs,fidelity_ground`.
//! Numbers carry 12 significant digits.

use std::io::{self, Write};

use crate::dynamics::{Sample, Trajectory};
use crate::error::{Error, Result};
use crate::state::{PureState, SimParams, WallState};
use crate::thermo::ThermoRecord;

const THERMO_COLUMNS: [&str; 8] = [
    "Sigma_ep",
    "Delta_F",
    "Delta_U",
    "W_mean",
    "W_irr",
    "jarzynski_lhs",
    "jarzynski_rhs",
    "fidelity_ground",
];

pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn trajectory_header(size: usize, with_thermo: bool) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "L", "V", "U", "P", "W_fric", "purity"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((1..=size).map(|n| format!("pop_{n}")));
    cols.push("energy_residual".into());
    if with_thermo {
        cols.extend(THERMO_COLUMNS.iter().map(|s| s.to_string()));
    }
    cols
}

pub fn write_trajectory_csv<W: Write>(
    mut out: W,
    trajectory: &Trajectory,
    thermo: Option<&[ThermoRecord]>,
    preamble: &[(String, String)],
) -> io::Result<()> {
    for (k, v) in preamble {
        writeln!(out, "# {k}: {v}")?;
    }
    let size = trajectory.params.truncation;
    writeln!(out, "{}", trajectory_header(size, thermo.is_some()).join(","))?;
    for (i, s) in trajectory.samples.iter().enumerate() {
        let mut row: Vec<String> = vec![
            fmt_num(s.t),
            fmt_num(s.length),
            fmt_num(s.velocity),
            fmt_num(s.energy),
            fmt_num(s.pressure),
            fmt_num(s.friction_work),
            fmt_num(s.purity),
        ];
        row.extend(s.populations.iter().map(|&p| fmt_num(p)));
        row.push(fmt_num(s.energy_residual));
        if let Some(records) = thermo {
            let r = &records[i];
            row.extend([
                fmt_num(r.entropy_production),
                fmt_num(r.delta_f),
                fmt_num(r.delta_u),
                fmt_opt(r.mean_work),
                fmt_opt(r.irreversible_work),
                fmt_opt(r.jarzynski_lhs),
                fmt_opt(r.jarzynski_rhs),
                fmt_num(r.fidelity_ground),
            ]);
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a trajectory written by [`write_trajectory_csv`]. Only the recorded
/// observables come back; the quantum state is not stored in the CSV, so the
/// returned `final_state` is a placeholder ground state.
pub fn read_trajectory_csv(text: &str, params: &SimParams) -> Result<Trajectory> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        reason: "missing header row".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let idx = |name: &str| {
        find(name).ok_or(Error::Parse {
            line: 1,
            reason: format!("missing column {name}"),
        })
    };
    let (it, il, iv, iu, ip, iw, ipur) = (
        idx("t")?,
        idx("L")?,
        idx("V")?,
        idx("U")?,
        idx("P")?,
        idx("W_fric")?,
        idx("purity")?,
    );
    let size = params.truncation;
    let pops: Vec<usize> = (1..=size)
        .map(|n| idx(&format!("pop_{n}")))
        .collect::<Result<_>>()?;
    let ires = find("energy_residual");

    let mut samples = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let num = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or(Error::Parse {
                    line: lineno + 1,
                    reason: format!("column {} is not a number", cols.get(i).unwrap_or(&"?")),
                })
        };
        samples.push(Sample {
            t: num(it)?,
            length: num(il)?,
            velocity: num(iv)?,
            energy: num(iu)?,
            pressure: num(ip)?,
            friction_work: num(iw)?,
            purity: num(ipur)?,
            populations: pops.iter().map(|&i| num(i)).collect::<Result<_>>()?,
            energy_residual: match ires {
                Some(i) => num(i)?,
                None => 0.0,
            },
        });
    }
    if samples.len() < 2 {
        return Err(Error::Parse {
            line: 0,
            reason: "trajectory needs at least two samples".into(),
        });
    }
    let spacing = samples[1].t - samples[0].t;
    let stride = (spacing / params.dt).round().max(1.0) as usize;
    let last = samples.last().expect("checked above");
    let final_wall = WallState {
        length: last.length,
        velocity: last.velocity,
    };
    Ok(Trajectory {
        params: params.clone(),
        mode: "recorded".into(),
        stride,
        final_wall,
        samples,
        final_state: PureState::ground(size).into(),
        states: None,
    })
}
