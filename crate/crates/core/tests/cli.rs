use std::path::Path;
use std::process::{Command, Output};

fn mixdeg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixdeg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

#[test]
fn no_arguments_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = mixdeg(&[], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout) + String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"));
}

#[test]
fn unknown_flag_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mixdeg(&["fit", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mixdeg(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn simulate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), "{}").unwrap();
    let out = mixdeg(&["simulate", "--spec", "spec.json", "--out", "d"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "responses.csv",
        "scalars.csv",
        "curves.csv",
        "truth.json",
        "config.json",
    ] {
        assert!(dir.path().join("d").join(f).exists(), "{f}");
    }
    std::fs::copy(dir.path().join("d/config.json"), dir.path().join("c.json")).unwrap();
    let out = mixdeg(&["fit", "--data", "d/", "--config", "c.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit_report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], serde_json::Value::Bool(true));
    assert_eq!(report["column_names"].as_array().unwrap().len(), 6);

    let out = mixdeg(
        &[
            "predict",
            "--model",
            "model.json",
            "--data",
            "d",
            "--times",
            "0,1,2",
            "--out",
            "p.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("unit_id,time,y_hat"));
    assert_eq!(text.lines().count(), 1 + 60 * 3);
}

#[test]
fn tpc_rows_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (140, 132);
    let mut text = format!("P2\n{w} {h}\n255\n");
    for y in 0..h {
        let row: Vec<String> = (0..w)
            .map(|x| if (x / 7 + y / 5) % 3 == 0 { "230" } else { "20" }.to_string())
            .collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    std::fs::write(dir.path().join("a.pgm"), &text).unwrap();
    std::fs::write(dir.path().join("b.pgm"), &text).unwrap();
    let out = mixdeg(
        &[
            "descriptor",
            "tpc",
            "--image",
            "a.pgm",
            "b.pgm",
            "--threshold",
            "0.5",
            "--r-max",
            "64",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|l| l.starts_with("a,")).count(), 65);
    assert_eq!(rows.iter().filter(|l| l.starts_with("b,")).count(), 65);
}

#[test]
fn missing_data_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mixdeg(&["fit", "--data", "nowhere"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rank_deficiency_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    std::fs::create_dir(&d).unwrap();
    let mut responses = String::from("unit_id,time,y\n");
    let mut scalars = String::from("unit_id,x1\n");
    for u in 1..=4 {
        for t in 0..5 {
            responses.push_str(&format!("{u},{t},{}\n", t as f64 * (1.0 + 0.1 * u as f64)));
        }
        scalars.push_str(&format!("{u},2.0\n"));
    }
    std::fs::write(d.join("responses.csv"), responses).unwrap();
    std::fs::write(d.join("scalars.csv"), scalars).unwrap();
    std::fs::write(d.join("curves.csv"), "unit_id,s,r,z\n").unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"include_functional": false, "include_interaction": false, "include_latent": false}"#,
    )
    .unwrap();
    let out = mixdeg(&["fit", "--data", "d", "--config", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta[1:x1]"));
}

#[test]
fn compare_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), r#"{"n_units": 20, "n_obs": 10}"#).unwrap();
    assert!(mixdeg(&["simulate", "--spec", "spec.json", "--out", "d"], dir.path())
        .status
        .success());
    let out = mixdeg(
        &[
            "compare",
            "--data",
            "d",
            "--config",
            "d/config.json",
            "--variant",
            "Model1",
            "Model7",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,r2,loglik,aic,bic,mse_train,mse_test");
    assert!(lines[1].starts_with("Model1,") && lines[2].starts_with("Model7,"));
    assert_eq!(lines.len(), 3);
}
