//! Exit codes and output files of the `disclab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn disclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disclab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

const SMALL: [&str; 4] = ["--nr", "32", "--nphi", "32"];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL).collect()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&disclab(&[])), 1);
    assert_eq!(code(&disclab(&["frobnicate"])), 1);
    assert_eq!(code(&disclab(&["eval-ansatz", "--h", "0.1", "--model", "shell"])), 1);
    assert_eq!(code(&disclab(&["eval-ansatz", "--h", "1.5"])), 1);
    assert_eq!(code(&disclab(&["eval-ansatz", "--h", "0.1,0.05"])), 1);
    assert_eq!(code(&disclab(&["sweep", "--h", "0.05,0.1"])), 1);
    assert_eq!(code(&disclab(&["radial", "--h", "0.1", "--model", "plate"])), 1);
    assert_eq!(code(&disclab(&["--help"])), 0);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{ "h_list": [0.1], "thickness": 3 }"#).unwrap();
    let out = disclab(&["eval-ansatz", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}

#[test]
fn gradcheck_exits_with_two_above_tolerance() {
    let ok = disclab(&with_small(&["gradcheck", "--h", "0.05", "--model", "plate"]));
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout_json(&ok)["max_relative_error"].as_f64().unwrap() < 1e-6);
    let strict = disclab(&with_small(&["gradcheck", "--h", "0.05", "--tolerance", "1e-300"]));
    assert_eq!(code(&strict), 2);
}

#[test]
fn eval_ansatz_radial_and_kl3d_print_json() {
    let out = disclab(&with_small(&["eval-ansatz", "--h", "0.05", "--delta", "0.4"]));
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["params"]["delta"].as_f64(), Some(0.4));
    assert!(v["quadrature"]["total"].as_f64().unwrap() > 0.0);

    let dir = tempfile::tempdir().unwrap();
    let out = disclab(&with_small(&["radial", "--h", "0.05", "--out", dir.path().to_str().unwrap()]));
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("radial_0.05.csv").exists());

    let out = disclab(&["kl3d", "--h", "0.1", "--nx3", "3"]);
    assert_eq!(code(&out), 0);
    assert!(stdout_json(&out)["per_h2_log_h"].as_f64().unwrap() > 0.0);
}

fn config_file(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let config = serde_json::json!({
        "model": "fvk",
        "delta": 0.5,
        "h_list": [0.1, 0.05, 0.03],
        "grid": { "n_r": 32, "n_phi": 32 },
        "optimizer": { "max_iters": 100, "restarts": 0 },
        "out_dir": dir.join("sweep"),
        "seed": 5
    });
    std::fs::write(&path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn sweep_minimize_and_diagnose_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_file(dir.path());
    let out = disclab(&["sweep", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = dir.path().join("sweep");
    for name in ["sweep.csv", "fit.json", "kappa_0.05.csv", "fields_0.05.csv", "report_0.05.json"] {
        assert!(sweep.join(name).exists(), "missing {name}");
    }
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(sweep.join("fit.json")).unwrap()).unwrap();
    assert!(fit["fit"]["slope"].as_f64().unwrap().is_finite());

    let single = dir.path().join("single");
    let out = disclab(&["minimize", "--config", config.to_str().unwrap(), "--h", "0.05", "--out", single.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["kappa_0.05.csv", "fields_0.05.csv", "report_0.05.json"] {
        assert!(single.join(name).exists(), "missing {name}");
    }

    let diag = dir.path().join("diag");
    let fields = single.join("fields_0.05.csv");
    let out = disclab(&["diagnose", "--h", "0.05", "--fields", fields.to_str().unwrap(), "--out", diag.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(diag.join("diagnose_0.05.json").exists());
    assert_eq!(stdout_json(&out)["certificate_ok"], serde_json::Value::Bool(true));

    let missing = dir.path().join("missing.csv");
    let out = disclab(&["diagnose", "--h", "0.05", "--fields", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}
