use std::path::Path;
use std::process::Command;

fn sagin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sagin")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"{
  "experiment": "delay-vs-max-isl",
  "sweep": [1, 2],
  "schemes": ["epm", "ao"],
  "seeds": 2,
  "slots": 2,
  "slot_stride": 97,
  "scenario": { "num_planes": 4, "sats_per_plane": 6 }
}"#;

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = sagin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("experiment,sweep,scheme,seed,mean_delay_s"));
    // Two points, two schemes plus their fully connected references, two seeds.
    assert_eq!(text.lines().count(), 1 + 2 * 4 * 2);
}

#[test]
fn summary_has_one_row_per_point_and_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = dir.path().join("rows.csv");
    let summary = dir.path().join("summary.csv");
    let res = sagin(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let text = std::fs::read_to_string(summary).unwrap();
    assert!(text.lines().next().unwrap().contains("stderr_s"));
    assert_eq!(text.lines().count(), 1 + 2 * 4);
}

#[test]
fn per_curve_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("per.csv");
    let res = sagin(&["per", "--out", out.to_str().unwrap(), "--from", "-5", "--to", "5", "--step", "5"]);
    assert!(res.status.success());
    let text = std::fs::read_to_string(out).unwrap();
    // Four models at three SNRs.
    assert_eq!(text.lines().count(), 1 + 4 * 3);
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{ "experiment": "delay-vs-max-isl", "sweep": [-1] }"#);
    let out = dir.path().join("x.csv");
    let res = sagin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));

    let cfg = write_config(dir.path(), "typo.json", r#"{ "experiment": "delay-vs-max-isl", "sweeep": [1] }"#);
    let res = sagin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_instance_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "quiet.json",
        r#"{
  "experiment": "convergence-trace",
  "sweep": [],
  "scenario": { "request_probability": 0.0, "num_slots": 4 }
}"#,
    );
    let out = dir.path().join("trace.csv");
    let res = sagin(&["trace", "--problem", "cached", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}
