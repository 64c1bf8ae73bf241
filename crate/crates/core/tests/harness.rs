//! Sweep, persistence and diagnose round trips on small grids.

use std::f64::consts::PI;
use std::path::Path;

use disclab::grid::{self, GridPolicy};
use disclab::harness::{self, DiagnosticsConfig, ExperimentConfig};
use disclab::optimize::OptimizerConfig;
use disclab::{Error, Map3, Model, Params, PolarGrid};

fn small(model: Model, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        model,
        h_list: vec![0.1, 0.05, 0.03],
        grid: GridPolicy {
            n_r: Some(32),
            n_phi: 32,
            ..GridPolicy::default()
        },
        optimizer: OptimizerConfig {
            max_iters: 150,
            restarts: 1,
            ..OptimizerConfig::default()
        },
        out_dir: out.to_path_buf(),
        seed: 3,
        ..ExperimentConfig::default()
    }
}

#[test]
fn injected_failure_is_recorded_and_the_sweep_continues() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(Model::Fvk, dir.path());
    let result = harness::run_sweep_with(&config, |h| {
        if h == 0.05 {
            Err(Error::InvalidParams("injected".into()))
        } else {
            Ok(())
        }
    })
    .unwrap();
    assert_eq!(result.rows.len(), 3);
    assert!(result.rows[0].is_ok() && result.rows[2].is_ok());
    assert!(result.rows[1].error.contains("injected"));
    assert!(result.rows[1].e_total.is_nan() && result.rows[1].e_ansatz.is_finite());
    let on_disk = harness::read_sweep_csv(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(on_disk.len(), 3);
    assert_eq!(on_disk[1].error, result.rows[1].error);
    assert!(!dir.path().join("report_0.05.json").exists());
    assert!(dir.path().join("report_0.03.json").exists());
}

#[test]
fn rows_descend_from_the_ansatz_and_carry_valid_certificates() {
    for model in [Model::Fvk, Model::Plate] {
        let dir = tempfile::tempdir().unwrap();
        let result = harness::run_sweep(&small(model, dir.path())).unwrap();
        for row in &result.rows {
            assert!(row.is_ok(), "{}", row.error);
            assert!(row.e_total <= row.e_ansatz + 1e-9, "{model} h={}", row.h);
            assert!(row.certificate_ok, "{model} h={}", row.h);
        }
        for d in &result.diagnostics {
            assert!(d.certificate <= d.bending_window * (1.0 + d.isoper.slack));
        }
        for h in ["0.1", "0.05", "0.03"] {
            for name in [format!("kappa_{h}.csv"), format!("fields_{h}.csv"), format!("report_{h}.json")] {
                assert!(dir.path().join(&name).exists(), "{model}: missing {name}");
            }
        }
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    harness::run_sweep(&small(Model::Fvk, a.path())).unwrap();
    harness::run_sweep(&small(Model::Fvk, b.path())).unwrap();
    for name in ["sweep.csv", "kappa_0.05.csv", "fields_0.03.csv", "report_0.1.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between identical runs");
    }
    let text = std::fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    assert!(text.starts_with(&format!("# {}", disclab::VERSION_STAMP)));
    assert_eq!(text.lines().nth(1).unwrap(), harness::SWEEP_HEADER.join(","));
}

#[test]
fn diagnose_reads_persisted_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(Model::Fvk, dir.path());
    let result = harness::run_sweep(&config).unwrap();
    let params = Params::new(0.05, config.delta, Model::Fvk).unwrap();
    let out = dir.path().join("diag");
    let report = harness::diagnose(&dir.path().join("fields_0.05.csv"), &params, &DiagnosticsConfig::default(), &out).unwrap();
    let stored = &result.diagnostics[1];
    assert!((report.diagnostics.kappa_l1_dev - stored.kappa_l1_dev).abs() <= 1e-9 * stored.kappa_l1_dev.max(1e-300));
    assert!((report.energy.total - result.rows[1].e_total).abs() <= 1e-9 * result.rows[1].e_total);
    for name in ["kappa_0.05.csv", "isoper_0.05.csv", "diagnose_0.05.json"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn diagnose_of_zero_fields_reports_the_full_deficit() {
    let dir = tempfile::tempdir().unwrap();
    let grid = PolarGrid::new(0.005, 64, 32).unwrap();
    let zero = Map3::zeros(&grid);
    let path = dir.path().join("zero.csv");
    grid::write_field_csv(&path, &zero, &grid, ["u1", "u2", "v"], "zero").unwrap();
    let params = Params::new(0.05, 0.5, Model::Fvk).unwrap();
    let report = harness::diagnose(&path, &params, &DiagnosticsConfig::default(), dir.path()).unwrap();
    let d = &report.diagnostics;
    assert!(d.rings.kappa.iter().all(|k| *k == 0.0));
    let expected = PI * 0.25 * (d.window.1 - d.window.0);
    assert!((d.kappa_l1_dev - expected).abs() < 1e-12 * expected);
}

#[test]
fn diagnose_errors_name_the_offending_path() {
    let dir = tempfile::tempdir().unwrap();
    let params = Params::new(0.05, 0.5, Model::Fvk).unwrap();
    let missing = dir.path().join("nowhere.csv");
    let err = harness::diagnose(&missing, &params, &DiagnosticsConfig::default(), dir.path()).unwrap_err();
    assert!(err.to_string().contains("nowhere.csv"), "{err}");
    let garbled = dir.path().join("garbled.csv");
    std::fs::write(&garbled, "r,phi,a\n1,2\n").unwrap();
    let err = harness::diagnose(&garbled, &params, &DiagnosticsConfig::default(), dir.path()).unwrap_err();
    assert!(err.to_string().contains("garbled.csv"), "{err}");
}
