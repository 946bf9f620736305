use idrate_cli::RunReport;
use std::path::Path;
use std::process::{Command, Output};

fn idrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idrate"))
        .args(args)
        .env("IDRATE_THREADS", "1")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn read_report(path: &Path) -> RunReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small enough to run in a second or two.
const QUICK: &str = r#"{
    "model": "builtin:white",
    "paths": 100000,
    "m_ladder": [2, 4, 8],
    "surrogate": {"k": 1024, "paths": 20}
}"#;

#[test]
fn analyze_half_band_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "band.json",
        r#"{"L": 1, "bands": [{"lo": -0.25, "hi": 0.25, "re": [[2.0]]}]}"#,
    );
    let out = dir.path().join("r.json");
    let o = idrate(&["analyze", "--model", &model, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_report(&out);
    assert_eq!(r.reports[0].quantity, "d");
    assert!((r.reports[0].value - 0.5).abs() < 1e-12);
    assert!((r.reports[1].value - 0.5).abs() < 1e-12, "rank-0 fraction");
}

#[test]
fn analyze_bivariate_includes_bound() {
    let o = idrate(&[
        "analyze",
        "--model",
        "builtin:independent-half-band",
        "--format",
        "csv",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("quantity,method,value,se,reference,tolerance,pass\n"));
    assert!(
        text.contains("complex-bound,two-support-measure,1,"),
        "{text}"
    );
}

#[test]
fn estimate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", QUICK);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = idrate(&[
            "estimate",
            "--config",
            &cfg,
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut r = read_report(&out);
        r.wall_time_s = 0.0;
        r.settings.out = None;
        r
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(a, b);
    assert_eq!(a.reports.len(), 2);
    assert!(a
        .reports
        .iter()
        .all(|r| r.se.is_some() && r.tolerance.is_some()));
    // A different seed moves the Monte Carlo numbers.
    let out = dir.path().join("c.json.out");
    idrate(&[
        "estimate",
        "--config",
        &cfg,
        "--seed",
        "12",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ne!(read_report(&out).reports[0].value, a.reports[0].value);
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert!(idrate(&[
        "rd",
        "--model",
        "builtin:band-0.4",
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let r = read_report(&out);
    let again: RunReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(again, r);
    assert!((r.reports[0].value - 0.4).abs() < 0.01);
    let curve = std::fs::read_to_string(dir.path().join("r.rd.csv")).unwrap();
    assert!(curve.starts_with("D,R,w\n"));
}

#[test]
fn verify_white_noise_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", QUICK);
    let o = idrate(&["verify", "--config", &cfg, "--seed", "3", "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(
        o.status.success(),
        "{text}\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for q in [
        "scale-invariance",
        "translate-invariance",
        "bussgang-gain-0",
        "spectral-residual",
        "kl-divergence",
    ] {
        assert!(text.contains(q), "{q} missing");
    }
    assert!(!text.contains(",false"));
}

#[test]
fn complex_task() {
    let o = idrate(&["complex", "--model", "builtin:proper-complex-band"]);
    assert!(o.status.success());
    let r: RunReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(
        r.reports[0].settings["proper"],
        serde_json::Value::Bool(true)
    );
    assert!(!idrate(&["complex", "--model", "builtin:white"])
        .status
        .success());
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"model": "builtin:white", "paths": 100000, "m_ladder": [2, 4, 8],
            "surrogate": {"k": 1024, "paths": 20},
            "tolerances": {"slope": 0.0, "surrogate": 0.0, "rd": 0.01, "invariance": 0.05}}"#,
    );
    assert_eq!(
        idrate(&["estimate", "--config", &cfg, "--seed", "1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"model": "builtin:white", "seeed": 1}"#,
    );
    let o = idrate(&["analyze", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));
    assert_eq!(
        idrate(&["estimate", "--model", "builtin:white"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        idrate(&["analyze", "--model", "builtin:nope"])
            .status
            .code(),
        Some(2)
    );
    let wrong = write(
        dir.path(),
        "rd.json",
        r#"{"model": "builtin:white", "task": "rd"}"#,
    );
    assert_eq!(
        idrate(&["analyze", "--config", &wrong]).status.code(),
        Some(2)
    );
}
