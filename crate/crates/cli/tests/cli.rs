use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hypothetica"));
    c.env_remove("HYPOTHETICA_SEED").env_remove("RUST_LOG");
    c
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn naive_estimate_on_fixture() {
    let no_ice = fixture("no_ice.csv");
    let o = run(&["--quiet", "estimate", "--data", no_ice.to_str().unwrap(), "--method", "naive"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let row = out.lines().find(|l| l.starts_with("naive")).expect("result row");
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(&cols[1..6], &["3", "3", "0.500000", "2.000000", "1.500000"]);
}

#[test]
fn estimate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sim.csv");
    let out = dir.path().join("est.csv");
    let o = run(&["--quiet", "--seed", "3", "simulate", "--n", "400", "--k", "3", "--out", data.to_str().unwrap()]);
    assert!(o.status.success());
    for method in ["gformula", "ipw", "mi", "ipw-true"] {
        let mut args = vec!["--quiet", "estimate", "--data", data.to_str().unwrap(), "--method", method, "--out", out.to_str().unwrap()];
        if method == "ipw-true" {
            args.extend(["--dgp-regime", "prob"]);
        }
        let o = run(&args);
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 2, "{method}");
    }
}

#[test]
fn invalid_method_is_a_usage_error() {
    let no_ice = fixture("no_ice.csv");
    let o = run(&["estimate", "--data", no_ice.to_str().unwrap(), "--method", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gformula-icefree-perarm"), "{err}");
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let o = run(&["--quiet", "estimate", "--data", "/nonexistent/data.csv", "--method", "naive"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn check_dag_reports_mar() {
    let g = fixture("two_ice.graph");
    let o = run(&["--quiet", "check-dag", "--graph", g.to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    let pass: Vec<&str> = out.lines().filter(|l| l.starts_with("PASS")).collect();
    assert_eq!(pass.len(), 2, "{out}");
    assert!(pass[0].contains("A1 ⊥"));
    assert!(pass[1].contains("A2^{a1=0} ⊥"));

    let o = run(&["--quiet", "check-dag", "--graph", g.to_str().unwrap(), "--unmeasured", "L1"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL"));
    assert!(out.contains("A1 <- L1 -> Y^{a1=0,a2=0}"), "{out}");
}

#[test]
fn simulate_is_deterministic_across_threads() {
    let a = run(&["--quiet", "--seed", "9", "--threads", "1", "simulate", "--n", "300"]);
    let b = run(&["--quiet", "--seed", "9", "--threads", "4", "simulate", "--n", "300"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = bin().args(["--quiet", "--threads", "2", "simulate", "--n", "300"]).env("HYPOTHETICA_SEED", "9").output().unwrap();
    assert_eq!(a.stdout, c.stdout);
    let d = run(&["--quiet", "--seed", "10", "simulate", "--n", "300"]);
    assert_ne!(a.stdout, d.stdout);
}

#[test]
fn study_outputs_are_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    std::fs::write(
        &config,
        r#"{"dgp": {"n": 200, "k": 3}, "replicates": 6, "estimators": ["naive", "gformula-all-pooled", "ipw-icefree-pooled", "mi-perarm"], "seed": 5, "mi_m": 3}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let o = run(&["--quiet", "--threads", threads, "study", "--config", config.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("gformula-all-pooled"));
        let files: Vec<Vec<u8>> = ["long.csv", "summary.csv", "boxplot.csv"]
            .iter()
            .map(|f| std::fs::read(out_dir.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn study_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    std::fs::write(&config, r#"{"replicates": 4, "estimators": ["naive"], "colour": "blue"}"#).unwrap();
    let o = run(&["--quiet", "study", "--config", config.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
