use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SYNTH: &str = r#"
name = "tiny"
length = 8
canvas = [96, 96]
noise = 2.0
seed = 3
[target]
box = [30, 30, 20, 20]
texture_seed = 9
[[motion]]
start = 1
velocity = [1.0, 0.5]
"#;

const TRACKER: &str = r#"
seed = 5
[qbst]
committee_size = 3
m = 40
tau_b = 5
[search]
n = 150
[bootstrap]
m_prime = 120
"#;

fn qbst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbst"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the tiny sequence under `root/lib/tiny` and the tracker config.
fn setup(root: &Path) {
    fs::write(root.join("synth.toml"), SYNTH).unwrap();
    fs::write(root.join("tracker.toml"), TRACKER).unwrap();
    let out = qbst(&[
        "synth",
        s(&root.join("synth.toml")),
        "--out",
        s(&root.join("lib/tiny")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn synth_track_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    setup(root);
    assert_eq!(fs::read_dir(root.join("lib/tiny/img")).unwrap().count(), 8);
    assert!(root.join("lib/tiny/groundtruth_rect.txt").exists());

    let res = root.join("res");
    let out = qbst(&[
        "track",
        s(&root.join("lib/tiny")),
        "--config",
        s(&root.join("tracker.toml")),
        "--seed",
        "11",
        "--out",
        s(&res),
        "--checkpoint",
        s(&root.join("ckpt")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let text = fs::read_to_string(res.join("tiny.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines[0].starts_with("1,31.000000,31.000000,20.000000,20.000000,0,"));
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0], (i + 1).to_string());
        for f in &fields[1..5] {
            assert_eq!(f.split('.').nth(1).unwrap().len(), 6, "{line}");
        }
        assert!(fields[6] == "0" || fields[6] == "1");
    }
    let diag = fs::read_to_string(res.join("tiny_diagnostics.csv")).unwrap();
    // Header plus one row per member per frame.
    assert_eq!(diag.lines().count(), 1 + 8 * 3);
    assert!(root.join("ckpt/oracle.bin").exists());
    assert!(root.join("ckpt/committee_2.bin").exists());

    let report = root.join("report");
    let out = qbst(&["eval", s(&res), s(&root.join("lib")), "--out", s(&report)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    let auc = summary["overall_auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(report.join("tiny_success.csv").exists());
}

#[test]
fn same_seed_gives_identical_results() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    setup(root);
    let run = |dir: &str| {
        let out = qbst(&[
            "track",
            s(&root.join("lib/tiny")),
            "--config",
            s(&root.join("tracker.toml")),
            "--out",
            s(&root.join(dir)),
        ]);
        assert!(out.status.success());
        fs::read(root.join(dir).join("tiny.txt")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn bench_and_sweep_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    setup(root);
    let cfg = root.join("tracker.toml");
    let out = qbst(&[
        "bench",
        s(&root.join("lib")),
        "--config",
        s(&cfg),
        "--out",
        s(&root.join("bench")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(root.join("bench/summary.json").exists());
    assert!(root.join("bench/tiny.txt").exists());

    let out = qbst(&[
        "sweep-delta",
        s(&root.join("lib")),
        "--deltas",
        "0,0.5",
        "--random-p",
        "0.5",
        "--config",
        s(&cfg),
        "--out",
        s(&root.join("sweep")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(root.join("sweep/sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("delta_0,"));
    assert!(rows[3].starts_with("random_0.5,"));
    // No band means no oracle queries after the first frame.
    assert_eq!(rows[1].split(',').nth(4), Some("0.000"));
}

#[test]
fn exit_codes_separate_validation_from_runtime() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    setup(root);
    let seq = root.join("lib/tiny");

    let bad_delta = qbst(&["track", s(&seq), "--set", "qbst.delta=1.5"]);
    assert_eq!(bad_delta.status.code(), Some(1));

    let unknown_key = qbst(&["track", s(&seq), "--set", "qbst.nope=1"]);
    assert_eq!(unknown_key.status.code(), Some(1));

    let bad_usage = qbst(&["track"]);
    assert_eq!(bad_usage.status.code(), Some(1));

    fs::write(seq.join("groundtruth_rect.txt"), "1,2,3\n").unwrap();
    let bad_gt = qbst(&["track", s(&seq), "--out", s(&root.join("x"))]);
    assert_eq!(bad_gt.status.code(), Some(1));

    let broken = root.join("broken");
    fs::create_dir_all(broken.join("img")).unwrap();
    fs::write(broken.join("img/0001.jpg"), b"not an image").unwrap();
    fs::write(broken.join("groundtruth_rect.txt"), "10,10,20,20\n").unwrap();
    let undecodable = qbst(&["track", s(&broken), "--out", s(&root.join("y"))]);
    assert_eq!(undecodable.status.code(), Some(2));

    assert_eq!(qbst(&["--help"]).status.code(), Some(0));
}
