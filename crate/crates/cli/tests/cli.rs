use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    repo().join("scenarios").join(format!("{name}.json"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(format!("{name}.json"))
}

/// Runs the binary with a JSON report; returns (exit code, report).
fn run(command: &str, config: &Path) -> (i32, Value) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = Command::new(env!("CARGO_BIN_EXE_colombeau"))
        .args([command, "--format", "json", "--config"])
        .arg(config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let report = std::fs::read(&out).map(|b| serde_json::from_slice(&b).unwrap()).unwrap_or(Value::Null);
    (status.status.code().unwrap(), report)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn summary<'a>(r: &'a Value, key: &str) -> &'a Value {
    &r["summary"][key]
}

fn num(r: &Value, key: &str) -> f64 {
    summary(r, key).as_f64().unwrap_or_else(|| panic!("{key} missing in {r}"))
}

fn column(r: &Value, table: &str, col: &str) -> Vec<f64> {
    let t = r["tables"].as_array().unwrap().iter().find(|t| t["name"] == table).unwrap();
    let idx = t["columns"].as_array().unwrap().iter().position(|c| c == col).unwrap();
    t["rows"].as_array().unwrap().iter().map(|row| row[idx].as_f64().unwrap()).collect()
}

#[test]
fn malformed_expression_exits_2_with_position() {
    let (code, r) = run("classify", &fixture("malformed_expr"));
    assert_eq!(code, 2);
    assert_eq!(summary(&r, "error_kind"), "SyntaxError");
    assert_eq!(summary(&r, "position"), 2);
    assert_eq!(summary(&r, "context"), "kernels.H.expr");
}

#[test]
fn numerical_failure_exits_1() {
    let (code, r) = run("expm", &fixture("overflow"));
    assert_eq!(code, 1);
    assert_eq!(summary(&r, "error_kind"), "Overflow");
}

#[test]
fn config_errors_exit_2_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#""domain": { "dim": 1, "x_box": { "lo": [0.0], "hi": [1.0] } },
        "kernels": { "H": { "expr": "x*y", "support": { "lo": [0.0, 0.0], "hi": [1.0, 1.0] } } }"#;
    for (run_section, extra) in [
        (r#"{ "kernel": "missing" }"#, ""),
        (r#"{ "kernel": "H", "bogus": 1 }"#, ""),
        (r#"{ "command": "power", "kernel": "H" }"#, ""),
        (r#"{ "kernel": "H" }"#, r#", "eps_grid": { "start": 2.0, "ratio": 0.5, "count": 16 }"#),
        (r#"{ "kernel": "H" }"#, r#", "functions": { "g": { "expr": "sin(" } }"#),
        (r#"{ "kernel": "H" }"#, r#", "functions": { "d": { "delta": [3.0] } }"#),
    ] {
        let cfg = write_config(dir.path(), &format!("{{ {base}{extra}, \"run\": {run_section} }}"));
        let (code, r) = run("classify", &cfg);
        assert_eq!(code, 2, "{run_section} {extra}: {r}");
        assert_eq!(summary(&r, "status"), "error");
    }
}

#[test]
fn report_hash_matches_input_bytes() {
    use sha2::{Digest, Sha256};
    let path = scenario("classify_smooth");
    let bytes = std::fs::read(&path).unwrap();
    let want: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    let (code, r) = run("classify", &path);
    assert_eq!(code, 0);
    assert_eq!(r["config_sha256"], want.as_str());
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn classify_examples() {
    let (_, r) = run("classify", &scenario("classify_logeps"));
    assert_eq!(summary(&r, "class"), "LogGrowth");
    let (_, r) = run("classify", &scenario("classify_smooth"));
    assert!(num(&r, "moderate_q").abs() <= 0.05);
    let (_, r) = run("classify", &scenario("classify_delta"));
    assert!((num(&r, "moderate_q") - 1.0).abs() <= 0.05);
}

#[test]
fn compose_and_power_examples() {
    let (code, r) = run("compose", &scenario("compose_separable"));
    assert_eq!(code, 0);
    assert!(num(&r, "max_abs_err") <= 1e-13);
    assert!(num(&r, "consistency_residual") <= 1e-12 * num(&r, "consistency_scale").max(1.0));

    let (_, r) = run("compose", &scenario("compose_disjoint"));
    assert_eq!(summary(&r, "support_check"), "pass");

    let (_, r) = run("power", &scenario("power_constant"));
    assert!(num(&r, "max_abs_err") <= 1e-12);
    assert!(column(&r, "kernel", "value").iter().all(|v| (v - 1.0).abs() <= 1e-12));
}

#[test]
fn exponential_examples() {
    let (_, r) = run("expm", &scenario("expm_rank_one"));
    let e1 = 1f64.exp() - 1.0;
    assert!(column(&r, "exp_kernel", "value").iter().all(|v| (v - e1).abs() <= 1e-12));

    let (_, r) = run("check", &scenario("check_gauss"));
    assert_eq!(summary(&r, "all_pass"), true);
    let semi = column(&r, "residuals", "value")[0];
    assert!(semi <= 1e-8);

    let (_, r) = run("check", &scenario("check_logeps"));
    assert_eq!(summary(&r, "kernel_class"), "LogGrowth");
    assert_eq!(summary(&r, "bound_ok"), true);

    let (_, r) = run("evolve", &scenario("evolve_constant"));
    let t = column(&r, "evolution", "t");
    let u = column(&r, "evolution", "u");
    for (t, u) in t.iter().zip(&u) {
        assert!((u - t.exp()).abs() <= 1e-12, "t={t}: {u}");
    }
    let (_, r) = run("evolve", &scenario("evolve_wave"));
    assert!(num(&r, "max_abs_diff") <= 1e-10);
}

#[test]
fn probe_examples() {
    let (_, r) = run("probe", &scenario("probe_sincos"));
    let ratios = column_opt(&r, "probe", "ratio");
    assert!(ratios.iter().flatten().all(|q| (3.2..=4.8).contains(q)), "{ratios:?}");
    let (_, r) = run("probe", &scenario("probe_zero"));
    assert!(num(&r, "max_abs_err") <= 1e-12);
}

fn column_opt(r: &Value, table: &str, col: &str) -> Vec<Option<f64>> {
    let t = r["tables"].as_array().unwrap().iter().find(|t| t["name"] == table).unwrap();
    let idx = t["columns"].as_array().unwrap().iter().position(|c| c == col).unwrap();
    t["rows"].as_array().unwrap().iter().map(|row| row[idx].as_f64()).collect()
}

#[test]
fn csv_floats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_colombeau"))
        .args(["classify", "--config"])
        .arg(scenario("classify_logeps"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let body: String = text.lines().skip_while(|l| !l.starts_with("# table: seminorm")).skip(1).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["eps", "seminorm", "class", "fitted_q", "residual"]);
    let grid = colombeau::EpsilonGrid::default().values();
    for (row, eps) in rdr.records().zip(grid) {
        let row = row.unwrap();
        assert_eq!(row[0].parse::<f64>().unwrap().to_bits(), eps.to_bits());
        assert_eq!(&row[2], "LogGrowth");
    }
}
