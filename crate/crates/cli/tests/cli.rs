use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn heurank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heurank"))
        .current_dir(dir)
        .env("HEURANK_WORKERS", "2")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = heurank(dir, args);
    assert!(
        out.status.success(),
        "heurank {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn pipeline(dir: &Path) {
    ok(
        dir,
        &[
            "generate",
            "--domain",
            "maze_teleport",
            "--count",
            "6",
            "--seed",
            "3",
            "--params",
            r#"{"size":7}"#,
            "--out",
            "inst.jsonl",
        ],
    );
    ok(
        dir,
        &["solve", "--in", "inst.jsonl", "--out", "plans.jsonl"],
    );
    ok(
        dir,
        &[
            "trace",
            "--instances",
            "inst.jsonl",
            "--plans",
            "plans.jsonl",
            "--loss",
            "lstar",
            "--out",
            "rec.jsonl",
        ],
    );
    fs::write(
        dir.join("spec.json"),
        r#"{"format_version":1,"kind":"linear"}"#,
    )
    .unwrap();
    ok(
        dir,
        &[
            "train",
            "--records",
            "rec.jsonl",
            "--model-spec",
            "spec.json",
            "--loss",
            "lstar",
            "--seed",
            "1",
            "--epochs",
            "20",
            "--lr",
            "0.01",
            "--out",
            "model.json",
        ],
    );
    ok(
        dir,
        &[
            "eval",
            "--instances",
            "inst.jsonl",
            "--model",
            "model.json",
            "--search",
            "astar",
            "--budget",
            "1000",
            "--name",
            "lstar",
            "--out",
            "astar.csv",
        ],
    );
    ok(
        dir,
        &[
            "eval",
            "--instances",
            "inst.jsonl",
            "--model",
            "oracle",
            "--search",
            "gbfs",
            "--budget",
            "1000",
            "--out",
            "gbfs.csv",
        ],
    );
}

#[test]
fn full_pipeline_is_idempotent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    for f in [
        "inst.jsonl",
        "plans.jsonl",
        "rec.jsonl",
        "model.json",
        "astar.csv",
        "gbfs.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
    let text = ok(
        a.path(),
        &[
            "report",
            "--metrics",
            "astar.csv",
            "gbfs.csv",
            "--out",
            "table.csv",
        ],
    );
    assert!(text.contains("Solved instances (percent)"));
    let table = fs::read_to_string(a.path().join("table.csv")).unwrap();
    assert!(
        table.starts_with("# format_version=1\nproblem,complexity,astar:lstar,gbfs:oracle\n"),
        "{table}"
    );
    assert!(table.contains("maze_teleport,7,100.0,100.0"));
    assert!(a.path().join("table_length.csv").exists());
}

#[test]
fn enumerate_writes_every_optimal_plan() {
    let d = tempfile::tempdir().unwrap();
    ok(
        d.path(),
        &[
            "generate",
            "--domain",
            "oneway_grid",
            "--size",
            "5",
            "--out",
            "g.jsonl",
        ],
    );
    ok(
        d.path(),
        &[
            "solve",
            "--in",
            "g.jsonl",
            "--out",
            "p.jsonl",
            "--enumerate",
            "100",
        ],
    );
    let lines = fs::read_to_string(d.path().join("p.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 70);
}

#[test]
fn missing_artifacts_and_bad_versions_fail_cleanly() {
    let d = tempfile::tempdir().unwrap();
    let out = heurank(
        d.path(),
        &["solve", "--in", "nope.jsonl", "--out", "p.jsonl"],
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("nope.jsonl") && err.contains("generate"),
        "{err}"
    );

    ok(
        d.path(),
        &[
            "generate",
            "--domain",
            "explicit_graph",
            "--count",
            "2",
            "--out",
            "g.jsonl",
        ],
    );
    let text = fs::read_to_string(d.path().join("g.jsonl")).unwrap();
    fs::write(
        d.path().join("g.jsonl"),
        text.replace("\"format_version\":1", "\"format_version\":2"),
    )
    .unwrap();
    let out = heurank(d.path(), &["solve", "--in", "g.jsonl", "--out", "p.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("format_version"));
}

#[test]
fn verify_prints_evidence_and_sets_the_exit_code() {
    let d = tempfile::tempdir().unwrap();
    let text = ok(d.path(), &["verify", "--case", "fig1b_gbfs"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v[0]["name"], "fig1b_gbfs");
    assert_eq!(v[0]["passed"], true);
    assert_eq!(v[0]["evidence"]["gbfs_cost"], 11.0);
    assert!(!heurank(d.path(), &["verify", "--case", "bogus"])
        .status
        .success());
}
