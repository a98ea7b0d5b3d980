use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spml"))
        .args(args)
        .env("SPML_LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
        .display()
        .to_string()
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spml-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn reproduce_prints_matching_tables() {
    for example in ["1", "2", "3"] {
        let o = spml(&["reproduce", example]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = spml(&["reproduce", "3"]);
    assert!(stdout(&o).contains("0.3777"), "{}", stdout(&o));
    let json = spml(&["reproduce", "1", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_example_is_a_usage_error() {
    assert_eq!(spml(&["reproduce", "4"]).status.code(), Some(2));
    assert_eq!(spml(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn run_writes_srm_payments() {
    let dir = scratch("srm");
    let o = spml(&[
        "run",
        &scenario("example1_srm.json"),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.join("settlement.csv")).unwrap();
    let mut rows = csv.lines().skip(1);
    let first: Vec<&str> = rows.next().unwrap().split(',').collect();
    let second: Vec<&str> = rows.next().unwrap().split(',').collect();
    let paid = |r: &[&str]| r[4].parse::<f64>().unwrap();
    assert!((paid(&first) - (0.4f64.ln() - 0.5f64.ln())).abs() < 1e-12);
    assert!((paid(&second) - (0.7f64.ln() - 0.4f64.ln())).abs() < 1e-12);
    assert!(dir.join("ledger.jsonl").exists() && dir.join("report.json").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sp_settlement_lists_both_references() {
    let dir = scratch("sp");
    let o = spml(&[
        "run",
        &scenario("example1_sp.json"),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.join("settlement.csv")).unwrap();
    assert!(csv.contains("p_c^1") && csv.contains("p_c^2"), "{csv}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn resettling_a_written_ledger_is_byte_identical() {
    let first = scratch("first");
    let second = scratch("second");
    let file = scenario("example1_sp.json");
    assert!(spml(&["run", &file, "--out-dir", first.to_str().unwrap()])
        .status
        .success());
    let ledger = first.join("ledger.jsonl");
    let o = spml(&[
        "run",
        &file,
        "--ledger",
        ledger.to_str().unwrap(),
        "--out-dir",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(first.join("settlement.csv")).unwrap(),
        std::fs::read(second.join("settlement.csv")).unwrap()
    );
    std::fs::remove_dir_all(&first).unwrap();
    std::fs::remove_dir_all(&second).unwrap();
}

#[test]
fn invalid_scenario_reports_the_field() {
    let fixture =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/nm_missing_private.json");
    let o = spml(&[
        "run",
        fixture.to_str().unwrap(),
        "--out-dir",
        scratch("bad").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("private_estimate"));
}

#[test]
fn wcl_prints_one_row_per_epsilon() {
    let o = spml(&[
        "wcl",
        "--epsilon",
        "0.01,0.001",
        "--protocol",
        "SP_SRM",
        "--agents",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3, "{text}");
    let wcl: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((wcl - 2.0 * 99f64.ln()).abs() < 1e-9, "{wcl}");
}

#[test]
fn verify_writes_a_summary() {
    let dir = scratch("verify");
    let o = spml(&[
        "verify",
        "t1",
        "--trials",
        "3",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("verify_T1.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    std::fs::remove_dir_all(&dir).unwrap();
}
