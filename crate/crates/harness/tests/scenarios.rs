//! Every scenario on a small basis and a short horizon: the expected files
//! appear, each carries its metadata, and a second run is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use qpiston_harness::config::Overrides;
use qpiston_harness::output::read_table;
use qpiston_harness::{run_scenario, ScenarioName, ScenarioSpec};

fn small() -> Overrides {
    Overrides {
        truncation: Some(4),
        total_time: Some(0.05),
        dt: Some(1e-4),
        ..Default::default()
    }
}

fn contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn every_scenario_runs_and_is_reproducible() {
    let root = tempfile::tempdir().unwrap();
    for name in ScenarioName::ALL {
        let mut spec = ScenarioSpec::new(name, root.path().join(name.as_str()).join("a"));
        spec.overrides = small();
        let files = run_scenario(&spec).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(files.last().unwrap().ends_with("meta.json"), "{name}");

        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(files.last().unwrap()).unwrap()).unwrap();
        assert_eq!(meta["scenario"], name.as_str());
        assert_eq!(meta["figure"], name.figure());
        assert_eq!(meta["files"].as_array().unwrap().len(), files.len() - 1, "{name}");

        for f in &files {
            if f.extension().is_some_and(|e| e == "csv") {
                let text = std::fs::read_to_string(f).unwrap();
                assert!(text.starts_with(&format!("# scenario: {name}\n# figure: ")), "{}", f.display());
                assert!(text.contains("# default fidelity: "), "{}", f.display());
                let table = read_table(&text).unwrap();
                assert!(!table.rows.is_empty(), "{}", f.display());
            }
        }

        spec.out = root.path().join(name.as_str()).join("b");
        run_scenario(&spec).unwrap();
        assert_eq!(
            contents(&root.path().join(name.as_str()).join("a")),
            contents(&spec.out),
            "{name} is not reproducible"
        );
    }
}

#[test]
fn scenario_axes_override_the_matching_user_key() {
    let root = tempfile::tempdir().unwrap();
    let mut spec = ScenarioSpec::new(ScenarioName::MassRegimes, root.path());
    spec.overrides = small();
    spec.overrides.wall_mass = Some(0.3);
    run_scenario(&spec).unwrap();
    let table = read_table(&std::fs::read_to_string(root.path().join("summary.csv")).unwrap()).unwrap();
    assert_eq!(table.column("wall_mass").unwrap(), vec![0.001, 1.0]);
    assert_eq!(table.column("friction").unwrap(), vec![0.2, 200.0]);
}

#[test]
fn trajectory_rows_share_time_stamps_across_a_scenario() {
    let root = tempfile::tempdir().unwrap();
    let mut spec = ScenarioSpec::new(ScenarioName::DephasingLengthShift, root.path());
    spec.overrides = small();
    run_scenario(&spec).unwrap();
    let shift = read_table(&std::fs::read_to_string(root.path().join("length_shift.csv")).unwrap()).unwrap();
    let t = shift.column("t").unwrap();
    assert!((t.last().unwrap() - 0.05).abs() < 1e-12);
    assert_eq!(shift.column("delta_L").unwrap()[0], 0.0);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let root = tempfile::tempdir().unwrap();
    let blocker = root.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let mut spec = ScenarioSpec::new(ScenarioName::GammaRegimes, blocker.join("sub"));
    spec.overrides = small();
    let err = run_scenario(&spec).unwrap_err();
    assert_eq!(err.exit_code(), 6);
}
