use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpt")).args(args).env("RUST_LOG", "warn").output().expect("spawn dpt")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let out = dpt(args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    stdout(&out)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_edges(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("edges");
    ok(&["gen-data", "--task", "edges", "--count", "10", "--resolution", "16", "--seed", "3", "--out", p(&out)]);
    out
}

fn tiny_phase1(dir: &Path) -> std::path::PathBuf {
    let edges = tiny_edges(dir);
    let runs = dir.join("runs");
    ok(&["phase1", "--data", p(&edges), "--set", "epochs=1", "--out", p(&runs)]);
    runs.join("dpt.phase1.ckpt")
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&dpt(&[])), 2);
    assert_eq!(code(&dpt(&["gen-data", "--task", "edges", "--per-class", "3", "--dry-run"])), 2);
    assert_eq!(code(&dpt(&["gen-data", "--task", "shapes", "--resolution", "0", "--dry-run"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let edges = tiny_edges(dir.path());
    let out = dpt(&["phase1", "--data", p(&edges), "--set", "seed=4", "--out", p(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = dpt(&["phase1", "--data", p(&edges), "--set", "epochs=0", "--out", p(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = dpt(&["phase1", "--data", p(&edges), "--run-id", "a.b", "--out", p(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpt(&["phase1", "--data", p(&dir.path().join("nope")), "--out", p(dir.path())]);
    assert_eq!(code(&out), 3);
}

#[test]
fn wrong_phase_exits_4_and_wrong_data_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_phase1(dir.path());
    let bench = dir.path().join("bench");
    ok(&["gen-data", "--task", "bench", "--per-class", "2", "--resolution", "16", "--out", p(&bench)]);
    let out = dpt(&["benchmark", "--data", p(&bench), "--from", p(&ckpt), "--out", p(dir.path())]);
    assert_eq!(code(&out), 4);
    // A classification set handed to the edge autoencoder.
    let out = dpt(&["phase1", "--data", p(&bench), "--out", p(dir.path())]);
    assert_eq!(code(&out), 5);
}

#[test]
fn dry_run_prints_the_split() {
    let text = ok(&["gen-data", "--task", "edges", "--dry-run"]);
    assert!(text.contains("200 train") && text.contains("50 test"), "{text}");
    let text = ok(&["gen-data", "--task", "shapes", "--per-class", "10", "--dry-run"]);
    assert!(text.contains("90 items") && text.contains("81 train"), "{text}");
}

#[test]
fn compare_prints_a_verdict_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench");
    let runs = dir.path().join("runs");
    ok(&["gen-data", "--task", "bench", "--per-class", "2", "--resolution", "16", "--out", p(&bench)]);
    for id in ["a", "b"] {
        ok(&["benchmark", "--data", p(&bench), "--vanilla", "--set", "epochs=3", "--run-id", id, "--out", p(&runs)]);
    }
    let text = ok(&["compare", "--a", p(&runs.join("a.benchmark.csv")), "--b", p(&runs.join("b.benchmark.csv"))]);
    assert!(text.lines().any(|l| l.starts_with("VERDICT: ")), "{text}");
    for name in ["a_vs_b.benchmark.csv", "a_vs_b.benchmark.svg"] {
        assert!(runs.join(name).is_file(), "{name}");
    }
    roxmltree::Document::parse(&fs::read_to_string(runs.join("a_vs_b.benchmark.svg")).unwrap()).unwrap();
}

#[test]
fn tampered_gradient_fails_with_exit_1() {
    let out = dpt(&["gradcheck", "--tamper-grad", "fc1.weight"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("FAIL") && err.contains("fc1.weight"), "{err}");
}

#[test]
fn rerun_reproduces_a_run() {
    let dir = tempfile::tempdir().unwrap();
    tiny_phase1(dir.path());
    let runs = dir.path().join("runs");
    let again = dir.path().join("again");
    ok(&["rerun", p(&runs.join("dpt.phase1.run")), "--out", p(&again)]);
    for name in ["dpt.phase1.ckpt", "dpt.phase1.csv"] {
        assert_eq!(fs::read(runs.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
    // Data generation replays too.
    let edges = dir.path().join("edges");
    let edges2 = dir.path().join("edges2");
    ok(&["rerun", p(&edges.join("dataset.run")), "--out", p(&edges2)]);
    assert_eq!(fs::read(edges.join("manifest.csv")).unwrap(), fs::read(edges2.join("manifest.csv")).unwrap());
}
