use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use forming_feedback::control::force_to_stress;
use tempfile::TempDir;

const LINEAR: &str = r#"
[material]
E = 1.0
L = 1.0
A = 1.0

[desired]
sigma_star = 0.0

[linearization]
s_star = 0.1

[solver]
n_cells = 64
cfl = 0.9
t_end = 5.0
record_every = 5
scheme = "linear-riemann"

[initial]
bump_sigma = 1.0
"#;

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forming-feedback"))
        .args([cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn units_are_consistent_at_forming_constants() {
    // 1 MPa·mm² = 1 N
    let sigma = force_to_stress(15959.26, 109.31).unwrap();
    assert!((sigma - 146.0).abs() < 1e-9);
    assert_eq!(force_to_stress(68.0 * 109.31, 109.31).unwrap(), 68.0);
}

#[test]
fn certify_succeeds_on_shipped_config() {
    let tmp = TempDir::new().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/linear-certify.toml");
    let out = run("certify", &config, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cert = json(&tmp.path().join("certificate.json"));
    assert_eq!(cert["certificate"]["valid"], true);
    assert!(cert["s_star"].as_f64().unwrap() < 0.1);
}

#[test]
fn certify_without_relaxation_fails_with_status_3() {
    let tmp = TempDir::new().unwrap();
    let text = LINEAR.replace("s_star = 0.1", "s_star = 0.0");
    let config = write_config(&tmp, "zero.toml", &text);
    let out = run("certify", &config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(3));
    let cert = json(&tmp.path().join("out/certificate.json"));
    assert_eq!(cert["certificate"]["valid"], false);
    assert_eq!(cert["certificate"]["K0"], 1.0);
}

#[test]
fn negative_modulus_is_a_config_error_naming_the_key() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, "bad.toml", &LINEAR.replace("E = 1.0", "E = -1.0"));
    let out = run("simulate", &config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("material.E"));
}

#[test]
fn missing_config_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = run("certify", &tmp.path().join("nope.toml"), tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_sweep_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{LINEAR}\n[sweep]\npath = \"material.G\"\nvalues = [1.0]\n");
    let config = write_config(&tmp, "sweep.toml", &text);
    let out = run("sweep", &config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("material.G"));
}

#[test]
fn zero_perturbation_gives_zero_lyapunov_column() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, "zero.toml", &LINEAR.replace("bump_sigma = 1.0", "bump_sigma = 0.0"));
    let out = run("simulate", &config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(tmp.path().join("out/timeseries.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,lyapunov,l2_norm_U,v_left,v_right,sigma_left,sigma_right,displacement,force"
    );
    for line in lines {
        assert_eq!(line.split(',').nth(1), Some("0"));
    }
}

#[test]
fn certified_linear_run_reports_rate_above_certificate() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, "lin.toml", LINEAR);
    let out = run("simulate", &config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(0));
    let summary = json(&tmp.path().join("out/summary.json"));
    let mu = summary["certificate"]["mu"].as_f64().unwrap();
    assert!(summary["fitted_rate"].as_f64().unwrap() >= mu);
    // resolved defaults are echoed
    assert_eq!(summary["config"]["solver"]["cfl"], 0.9);
    assert_eq!(summary["config"]["control"]["law_variant"], "riemann-gain");
    let variants = summary["variant_adjudication"].as_array().unwrap();
    assert_eq!(variants.len(), 2);
    assert_eq!(variants[0]["non_increasing"], true);
}

#[test]
fn blow_up_is_a_runtime_failure_with_partial_output() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{LINEAR}\n[control]\nlaw_variant = \"coth-closed-form\"\ncoupling = \"controller\"\n")
        .replace("t_end = 5.0", "t_end = 40.0");
    let config = write_config(&tmp, "coth.toml", &text);
    let out = run("simulate", &config, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(4));
    let summary = json(&tmp.path().join("out/summary.json"));
    assert!(summary["failure"].as_str().unwrap().contains("non-finite"));
    assert!(summary["records"].as_u64().unwrap() > 1);
    assert!(tmp.path().join("out/timeseries.csv").exists());
}

#[test]
fn single_value_sweep_matches_simulate() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{LINEAR}\n[sweep]\npath = \"material.E\"\nvalues = [1.0]\n");
    let config = write_config(&tmp, "one.toml", &text);
    assert_eq!(run("sweep", &config, &tmp.path().join("sweep")).status.code(), Some(0));
    assert_eq!(run("simulate", &config, &tmp.path().join("sim")).status.code(), Some(0));
    let sweep = json(&tmp.path().join("sweep/sweep.json"));
    let sim = json(&tmp.path().join("sim/summary.json"));
    let row = &sweep["rows"][0];
    assert_eq!(row["fitted_rate"], sim["fitted_rate"]);
    assert_eq!(row["mu"], sim["certificate"]["mu"]);
    assert_eq!(row["final_sigma_die"], sim["final_state"]["sigma_left"]);
}

#[test]
fn refine_reports_first_order() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{LINEAR}\n[refine]\nlevels = [64, 128, 256]\ngain = 0.0\n");
    let config = write_config(&tmp, "refine.toml", &text);
    assert_eq!(run("refine", &config, tmp.path()).status.code(), Some(0));
    let report = json(&tmp.path().join("refine.json"));
    for order in report["observed_orders"].as_array().unwrap() {
        let o = order.as_f64().unwrap();
        assert!((0.8..=1.2).contains(&o), "{o}");
    }
    for ratio in report["ratios"].as_array().unwrap() {
        let r = ratio.as_f64().unwrap();
        assert!((1.8..=2.2).contains(&r), "{r}");
    }
}

#[test]
fn refine_constant_state_is_exact() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{LINEAR}\n[refine]\nlevels = [16, 32, 64]\ngain = 1.0\nprofile = \"constant\"\nt_end = 3.0\n");
    let config = write_config(&tmp, "const.toml", &text);
    assert_eq!(run("refine", &config, tmp.path()).status.code(), Some(0));
    let report = json(&tmp.path().join("refine.json"));
    for level in report["levels"].as_array().unwrap() {
        assert_eq!(level["l2_error"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn nonlinear_sweep_rows_stay_ordered() {
    let tmp = TempDir::new().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/nonlinear-1200C.toml");
    let text = std::fs::read_to_string(config)
        .unwrap()
        .replace("n_cells = 200", "n_cells = 50")
        .replace("values = [8280.0, 9000.0]", "values = [9000.0, 8280.0, -1.0]");
    let config = write_config(&tmp, "sweep.toml", &text);
    let out = run("sweep", &config, tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let report = json(&tmp.path().join("sweep.json"));
    let rows = report["rows"].as_array().unwrap();
    let values: Vec<f64> = rows.iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert_eq!(values, [9000.0, 8280.0, -1.0]);
    // a bad value is recorded, the sweep continues
    assert_eq!(rows[2]["ok"], false);
    assert!(rows[2]["message"].as_str().unwrap().contains("material.E"));
    for row in &rows[..2] {
        assert!((row["final_v_die"].as_f64().unwrap() - 1.5).abs() < 0.05);
    }
}
