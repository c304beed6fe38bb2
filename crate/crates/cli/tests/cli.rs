//! Functional tests for the runner: config handling, output schemas, error
//! categories, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ssicl")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ssicl_cli_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_with_config(subcommand: &str, dir: &Path, config_text: &str) -> Output {
    let config = dir.join("run.toml");
    std::fs::write(&config, config_text).unwrap();
    Command::new(bin())
        .current_dir(dir)
        .arg(subcommand)
        .arg("--config")
        .arg(&config)
        .output()
        .expect("binary runs")
}

const SMALL_CURVE: &str = r#"
command = "curve"
seed = 21
output = "curve.csv"

[base]
d = 10
sigma = 1.0
n = 50
p = 0.2
trials = 20000

[sweep]
parameter = "np"
values = [5.0, 10.0, 25.0]

[[predictors]]
kind = "spi"

[[predictors]]
kind = "sspi_k"
k = 1
alpha = 0.5

[theory]
error_trials = 200000
"#;

#[test]
fn curve_emits_one_row_per_predictor_per_value() {
    let dir = workdir("rows");
    let output = run_with_config("curve", &dir, SMALL_CURVE);
    assert!(output.status.success());
    let text = std::fs::read_to_string(dir.join("curve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep_value,predictor,accuracy,std_err,analytic_reference"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6, "3 sweep values x 2 predictors");
    assert_eq!(rows.iter().filter(|r| r.contains(",spi,")).count(), 3);
    assert_eq!(rows.iter().filter(|r| r.contains(",sspi_1,")).count(), 3);
    // The blended predictor carries no analytic reference column value.
    assert!(rows
        .iter()
        .filter(|r| r.contains(",sspi_1,"))
        .all(|r| r.ends_with(',')));
}

#[test]
fn curve_spi_rows_track_the_analytic_reference() {
    let dir = workdir("analytic");
    let output = run_with_config("curve", &dir, SMALL_CURVE);
    assert!(output.status.success());
    let text = std::fs::read_to_string(dir.join("curve.csv")).unwrap();
    for line in text.lines().skip(1).filter(|l| l.contains(",spi,")) {
        let fields: Vec<&str> = line.split(',').collect();
        let accuracy: f64 = fields[2].parse().unwrap();
        let std_err: f64 = fields[3].parse().unwrap();
        let reference: f64 = fields[4].parse().unwrap();
        // Allow the reference's own Monte-Carlo jitter on top of 3 row sigmas.
        let tolerance = 3.0 * std_err + 1e-3;
        assert!(
            (accuracy - reference).abs() <= tolerance,
            "row `{line}` strays from its analytic reference"
        );
    }
}

#[test]
fn identical_seeds_give_identical_files_and_seed_override_changes_them() {
    let dir = workdir("seeds");
    assert!(run_with_config("curve", &dir, SMALL_CURVE).status.success());
    let first = std::fs::read(dir.join("curve.csv")).unwrap();
    assert!(run_with_config("curve", &dir, SMALL_CURVE).status.success());
    let second = std::fs::read(dir.join("curve.csv")).unwrap();
    assert_eq!(first, second);

    let config = dir.join("run.toml");
    let status = Command::new(bin())
        .current_dir(&dir)
        .args(["curve", "--config"])
        .arg(&config)
        .args(["--seed", "9999", "--out", "override.csv"])
        .status()
        .unwrap();
    assert!(status.success());
    let overridden = std::fs::read(dir.join("override.csv")).unwrap();
    assert_ne!(first, overridden, "different seed must change the data");
}

#[test]
fn config_round_trips_through_the_spec_model() {
    // Canonical config with every optional field stated; re-serializing the
    // parsed spec must reproduce the same TOML values modulo key order.
    let text = r#"
command = "curve"
seed = 3
output = "c.csv"

[base]
d = 10
sigma = 1.0
n = 50
p = 0.2
trials = 1000

[sweep]
parameter = "np"
values = [5.0, 10.0]

[[predictors]]
kind = "spi"

[[predictors]]
kind = "sspi_inf"
alpha = "auto"

[theory]
error_trials = 1000
"#;
    let value: toml::Value = toml::from_str(text).unwrap();
    let spec: ssicl_cli::config::RunSpec = toml::from_str(text).unwrap();
    let reserialized = toml::to_string(&spec).unwrap();
    let round: toml::Value = toml::from_str(&reserialized).unwrap();
    assert_eq!(value, round);
}

#[test]
fn mismatched_subcommand_is_a_config_error() {
    let dir = workdir("mismatch");
    let output = run_with_config("train", &dir, SMALL_CURVE);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(
        stderr.contains("\"category\":\"config\""),
        "stderr: {stderr}"
    );
}

#[test]
fn invalid_sweep_value_is_a_config_error() {
    let dir = workdir("badsweep");
    let bad = SMALL_CURVE.replace("values = [5.0, 10.0, 25.0]", "values = [5.0, 500.0]");
    let output = run_with_config("curve", &dir, &bad);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("\"category\":\"config\""));
    assert!(!dir.join("curve.csv").exists(), "no output on failure");
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = workdir("unknown");
    let bad = format!("{SMALL_CURVE}\nnonsense = 1\n");
    let output = run_with_config("curve", &dir, &bad);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = workdir("unwritable");
    // Point the output at a path whose parent is a regular file.
    std::fs::write(dir.join("blocker"), b"x").unwrap();
    let bad = SMALL_CURVE.replace("output = \"curve.csv\"", "output = \"blocker/curve.csv\"");
    let output = run_with_config("curve", &dir, &bad);
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("\"category\":\"io\""), "stderr: {stderr}");
}

#[test]
fn missing_csv_is_reported_with_a_category() {
    let dir = workdir("nocsv");
    let config = r#"
command = "looptab"
seed = 1
output = "loop.json"

[base]
d = 2
sigma = 1.0
n = 10
p = 0.5
trials = 100

[looptab]
csv = "does_not_exist.csv"
label_column = "label"
loops = 1

[looptab.base]
kind = "sspi_inf"
alpha = 0.5
"#;
    let output = run_with_config("looptab", &dir, config);
    assert!(!output.status.success());
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("\"category\""), "stderr: {stderr}");
}

#[test]
fn theory_table_empty_grid_emits_an_empty_array() {
    let dir = workdir("emptygrid");
    let config = r#"
command = "theory_table"
seed = 2
output = "table.json"

[base]
d = 10
sigma = 1.0
n = 50
p = 0.2
trials = 100

[sweep]
parameter = "np"
values = []
"#;
    let output = run_with_config("theory_table", &dir, config);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("table.json")).unwrap()).unwrap();
    assert_eq!(json, serde_json::json!([]));
}

#[test]
fn theory_table_records_have_all_fields_and_respect_the_upper_bound() {
    let dir = workdir("theoryfields");
    let config = r#"
command = "theory_table"
seed = 4
output = "table.json"

[base]
d = 5
sigma = 1.0
n = 1000
p = 0.2
trials = 100

[sweep]
parameter = "np"
values = [40.0, 80.0, 200.0]

[theory]
error_trials = 100000
"#;
    let output = run_with_config("theory_table", &dir, config);
    assert!(output.status.success());
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("table.json")).unwrap()).unwrap();
    let records = json.as_array().unwrap();
    assert_eq!(records.len(), 3);
    for record in records {
        for field in [
            "inputs",
            "spi_error",
            "spi_error_upper",
            "oracle_error",
            "w_star",
        ] {
            assert!(record.get(field).is_some(), "missing {field}");
        }
        // This grid satisfies np >= 8 d sigma^2 = 40, where the closed-form
        // bound must dominate the Monte-Carlo error estimate.
        let upper = record["spi_error_upper"].as_f64().unwrap();
        let err = record["spi_error"]["value"].as_f64().unwrap();
        let se = record["spi_error"]["std_err"].as_f64().unwrap();
        assert!(upper >= err - 3.0 * se, "upper {upper} below error {err}");
    }
}

#[test]
fn looptab_report_has_the_loop_trace() {
    let dir = workdir("loopreport");
    // Small synthetic file: clearly separable one-dimensional classes.
    let mut csv = String::from("x0,x1,y\n");
    for i in 0..8 {
        let v = 1.0 + 0.1 * i as f64;
        csv.push_str(&format!("{v},{},1\n", -v));
        csv.push_str(&format!("{},{v},-1\n", -v));
    }
    for i in 0..6 {
        let v = 0.8 + 0.1 * i as f64;
        csv.push_str(&format!("{v},{},\n", -v));
    }
    std::fs::write(dir.join("toy.csv"), csv).unwrap();
    let config = r#"
command = "looptab"
seed = 6
output = "loop.json"

[base]
d = 2
sigma = 1.0
n = 22
p = 0.5
trials = 100

[looptab]
csv = "toy.csv"
label_column = "y"
missing_token = ""
test_fraction = 0.25
loops = 2

[looptab.base]
kind = "sspi_inf"
alpha = 0.5
sigma = 0.0
"#;
    let output = run_with_config("looptab", &dir, config);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("loop.json")).unwrap()).unwrap();
    assert_eq!(json["per_iteration"].as_array().unwrap().len(), 3);
    assert!(json["best_iteration"].as_u64().unwrap() <= 2);
    assert!(json["best_val_risk"].as_f64().unwrap() >= 0.0);
    assert!(json["best_test_accuracy"].as_f64().is_some());
}
