use std::path::PathBuf;
use std::process::{Command, Output};

fn rfagree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfagree")).args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

#[test]
fn agreement_sweep_exits_cleanly() {
    let out = rfagree(&["agree", "--n", "9", "--t", "2", "--delta", "0.02", "--qubits", "20000", "--trials", "100", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    assert!(text(&out).contains("100 runs"));
}

#[test]
fn fault_bound_is_enforced() {
    let out = rfagree(&["agree", "--n", "8", "--t", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("t <= 1"), "{}", text(&out));
    let out = rfagree(&["agree", "--n", "8", "--t", "2", "--allow-excess-faults", "--trials", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    assert!(text(&out).contains("violation study"));
}

#[test]
fn check_reports_forged_causal_violation() {
    let out = rfagree(&["check", fixture("causal.jsonl").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).contains("Causal"), "{}", text(&out));
}

#[test]
fn saved_traces_check_clean_and_outputs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let path = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let args = |tag: &str| {
        vec![
            "arcast".to_string(),
            "--adversary".into(),
            "equivocator".into(),
            "--scheduler".into(),
            "adaptive-splitter".into(),
            "--trials".into(),
            "10".into(),
            "--seed".into(),
            "3".into(),
            "--out".into(),
            path(&format!("{tag}.results")),
            "--trace-out".into(),
            path(&format!("{tag}.trace")),
        ]
    };
    for tag in ["a", "b"] {
        let a = args(tag);
        let out = rfagree(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    }
    for kind in ["results", "trace"] {
        let a = std::fs::read(path(&format!("a.{kind}"))).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, std::fs::read(path(&format!("b.{kind}"))).unwrap(), "{kind} differs");
    }
    let out = rfagree(&["check", &path("a.trace")]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    assert!(text(&out).contains("10 traces, 0 violations"));
    let results = std::fs::read_to_string(path("a.results")).unwrap();
    assert!(results.lines().next().unwrap().contains("rfagree-results/1"));
    assert_eq!(results.lines().count(), 12);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "n = 5\nt = 1\ntrials = 4\nfault_strategy = \"colluder\"\n").unwrap();
    let out_file = dir.path().join("r.jsonl");
    let out = rfagree(&[
        "agree",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "2",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let header: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&out_file).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["config"]["n"], 5);
    assert_eq!(header["config"]["trials"], 2);
    assert_eq!(header["config"]["fault_strategy"], "colluder");
}

#[test]
fn estimate_reports_a_rate() {
    let out = rfagree(&["estimate", "--delta", "0.2", "--qubits", "3200", "--trials", "2000"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out).contains("success 1.000000") || text(&out).contains("success 0.99"), "{}", text(&out));
}

#[test]
fn bad_names_are_rejected() {
    let out = rfagree(&["agree", "--adversary", "nobody"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("expected one of"), "{}", text(&out));
}
