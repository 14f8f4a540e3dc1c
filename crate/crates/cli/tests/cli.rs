use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .output()
        .expect("running sim")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn model_eq1_prints_published_value() {
    let o = sim(&["model", "--eq", "1", "--params", "K=24.47KB,S=2KB,rho=0.2"]);
    assert!(o.status.success());
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    assert_eq!(line.split(',').nth(4), Some("5.61e-5"));
}

#[test]
fn model_eq2_lists_each_hop_count() {
    let o = sim(&[
        "model",
        "--eq",
        "2",
        "--params",
        "K=24.47KB,S=2KB,rho=0.2,n=32,j=1;2;3",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].split(',').nth(7), Some("5.61e-5"));
}

#[test]
fn model_eq3_with_oracle() {
    let o = sim(&["model", "--eq", "3", "--oracle-samples", "64000"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("# monte carlo 64000 samples"));
}

#[test]
fn model_rejects_unstable_load() {
    let o = sim(&["model", "--eq", "1", "--params", "rho=1.5"]);
    assert!(!o.status.success());
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = sim(&[
        "run",
        &scenario("many-to-one-mixed-both.ini"),
        "--horizon",
        "10",
        "--set",
        "sim.warmup=1ms",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"scenario\": \"many-to-one-mixed-both\""));
    assert!(summary.contains("\"horizon_us\": 10000.0"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ini");
    std::fs::write(&bad, "[topology]\nleaves = 0\n").unwrap();
    let o = sim(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = sim(&[
        "run",
        &scenario("head-of-line.ini"),
        "--set",
        "no.such.key=1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_is_an_error() {
    let o = sim(&["run", "/nonexistent/x.ini"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_prints_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&[
        "sweep",
        &scenario("isolation-ets-0.ini"),
        "--param",
        "isolation.ets.elephant",
        "--values",
        "0,0.2",
        "--horizon",
        "5",
        "--set",
        "sim.warmup=1ms",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 3);
    assert!(dir.path().join("sweep.csv").is_file());
    assert!(dir.path().join("point-001/summary.json").is_file());
}

#[test]
fn every_stock_scenario_loads() {
    for e in
        std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")).unwrap()
    {
        let p = e.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        isosim::scenario::ScenarioConfig::parse(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}
