//! Files written by the scenarios: CSV tables with a `# key: value`
//! preamble, trajectory CSVs, and one `meta.json` sidecar per scenario.

use std::path::{Path, PathBuf};

use qpiston::io::{fmt_num, write_trajectory_csv};
use qpiston::thermo::ThermoRecord;
use qpiston::Trajectory;
use serde::Serialize;

use crate::config::RunSetup;
use crate::error::{HarnessError, Result};

/// Description attached to every file of one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub scenario: String,
    /// What the outputs reproduce, in words.
    pub figure: String,
    pub params: serde_json::Value,
    /// Choices the code made where the model leaves a value open.
    pub defaults: Vec<(String, String)>,
}

impl Metadata {
    pub fn preamble(&self) -> Vec<(String, String)> {
        let mut lines = vec![
            ("scenario".to_string(), self.scenario.clone()),
            ("figure".to_string(), self.figure.clone()),
            ("params".to_string(), self.params.to_string()),
        ];
        lines.extend(
            self.defaults
                .iter()
                .map(|(k, v)| (format!("default {k}"), v.clone())),
        );
        lines
    }
}

/// Parameters of one resolved run in JSON form.
pub fn setup_json(setup: &RunSetup) -> serde_json::Value {
    serde_json::json!({
        "sim": setup.params,
        "initial_state": setup.initial_state,
        "pressure_ratio": setup.pressure_ratio,
        "stride": setup.stride,
        "fidelity_target": setup.fidelity_target,
    })
}

/// A numeric table written as CSV.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self, preamble: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in preamble {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Reads a CSV produced by [`Table::to_csv`] (or a trajectory CSV). Empty
/// cells become NaN.
pub fn read_table(text: &str) -> std::result::Result<Table, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or("empty table")?;
    let mut table = Table::new(&header.split(',').collect::<Vec<_>>());
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| {
                if c.is_empty() {
                    Ok(f64::NAN)
                } else {
                    c.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1))
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if row.len() != table.header.len() {
            return Err(format!("row {} has {} cells", i + 1, row.len()));
        }
        table.rows.push(row);
    }
    Ok(table)
}

/// Keeps every `every`-th sample; the final sample survives when `every`
/// divides the number of steps.
pub fn thin(trajectory: &Trajectory, every: usize) -> Trajectory {
    let every = every.max(1);
    let mut t = trajectory.clone();
    t.samples = select(&trajectory.samples, every);
    t.stride = trajectory.stride * every;
    t.states = None;
    t
}

pub fn thin_records(records: &[ThermoRecord], every: usize) -> Vec<ThermoRecord> {
    select(records, every.max(1))
}

fn select<T: Clone>(items: &[T], every: usize) -> Vec<T> {
    items.iter().step_by(every).cloned().collect()
}

/// Output directory of one scenario; remembers what it wrote.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.files
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn write_table(&mut self, name: &str, table: &Table, meta: &Metadata) -> Result<PathBuf> {
        self.write(name, &table.to_csv(&meta.preamble()))
    }

    pub fn write_trajectory(
        &mut self,
        name: &str,
        trajectory: &Trajectory,
        thermo: Option<&[ThermoRecord]>,
        meta: &Metadata,
        run: &serde_json::Value,
    ) -> Result<PathBuf> {
        let mut preamble = meta.preamble();
        preamble.push(("run".to_string(), run.to_string()));
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, trajectory, thermo, &preamble)
            .map_err(|e| HarnessError::io(self.root.join(name), e))?;
        self.write(name, &String::from_utf8(buf).expect("CSV output is ASCII"))
    }

    /// Writes `meta.json` listing every file produced so far.
    pub fn finish(&mut self, meta: &Metadata) -> Result<PathBuf> {
        let names: Vec<String> = self
            .files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        let body = serde_json::json!({
            "scenario": meta.scenario,
            "figure": meta.figure,
            "params": meta.params,
            "defaults": meta.defaults.iter().map(|(k, v)| serde_json::json!({"key": k, "value": v})).collect::<Vec<_>>(),
            "files": names,
        });
        let text = serde_json::to_string_pretty(&body).expect("metadata serialises") + "\n";
        self.write("meta.json", &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.0, -2.5e-7]);
        t.push(vec![f64::NAN, 3.0]);
        let text = t.to_csv(&[("scenario".into(), "x".into())]);
        assert!(text.starts_with("# scenario: x\na,b\n"));
        let back = read_table(&text).unwrap();
        assert_eq!(back.rows[0], vec![1.0, -2.5e-7]);
        assert!(back.rows[1][0].is_nan());
        assert_eq!(back.column("b").unwrap(), vec![-2.5e-7, 3.0]);
    }

    #[test]
    fn thinning_keeps_uniform_spacing() {
        let items: Vec<usize> = (0..=10).collect();
        assert_eq!(select(&items, 3), vec![0, 3, 6, 9]);
        assert_eq!(select(&items, 5), vec![0, 5, 10]);
        assert_eq!(select(&items, 1), items);
    }
}
