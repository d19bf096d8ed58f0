use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tdt::checkpoint::Checkpoint;
use tdt::harness::curves::CURVES_HEADER;
use tdt::harness::train::HISTORY_HEADER;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny.toml")
}

fn tdt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdt")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn train_to(dir: &Path, name: &str) -> (PathBuf, Output) {
    let ck = dir.join(name);
    let o = tdt(&[
        "train",
        "--config",
        fixture().to_str().unwrap(),
        "--out",
        ck.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (ck, o)
}

fn metric_lines(s: &str) -> Vec<&str> {
    s.lines()
        .filter(|l| !l.starts_with("checkpoint=") && !l.starts_with("metrics_stream="))
        .collect()
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = tdt(&[
        "train",
        "--config",
        dir.path().join("nope.toml").to_str().unwrap(),
        "--out",
        dir.path().join("m.tdt").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}

#[test]
fn invalid_config_exits_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(fixture()).unwrap().replace("lr = 0.001", "lr = -1.0");
    std::fs::write(&cfg, text).unwrap();
    let o = tdt(&["train", "--config", cfg.to_str().unwrap(), "--out", "x.tdt"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.lr"));
}

#[test]
fn train_is_deterministic_and_eval_matches() {
    let dir = tempfile::tempdir().unwrap();
    let (a, out_a) = train_to(dir.path(), "a.tdt");
    let (b, _) = train_to(dir.path(), "b.tdt");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let ck = Checkpoint::load(&a).unwrap();
    assert!(ck.priors.is_cached());
    assert_eq!(ck.priors.len(), 16);

    let stream = std::fs::read_to_string(dir.path().join("a.tdt.metrics.csv")).unwrap();
    assert_eq!(stream.lines().next(), Some(HISTORY_HEADER));
    assert_eq!(stream.lines().count(), 3);

    let ev = tdt(&["eval", "--ckpt", a.to_str().unwrap()]);
    assert_eq!(code(&ev), 0);
    assert_eq!(metric_lines(&stdout(&ev)), metric_lines(&stdout(&out_a)));
    let again = tdt(&["eval", "--ckpt", a.to_str().unwrap()]);
    assert_eq!(stdout(&again), stdout(&ev));

    let synth = tdt(&["eval", "--ckpt", a.to_str().unwrap(), "--synth", "n=7,seed=4"]);
    assert_eq!(code(&synth), 0);
    assert!(stdout(&synth).starts_with("n=7\nmae="));

    let other = tdt(&["train", "--config", fixture().to_str().unwrap(), "--out", dir.path().join("c.tdt").to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code(&other), 0);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(dir.path().join("c.tdt")).unwrap());
}

#[test]
fn checkpoint_errors_and_stale_cache() {
    let dir = tempfile::tempdir().unwrap();
    let (ck_path, _) = train_to(dir.path(), "m.tdt");

    let mut bytes = std::fs::read(&ck_path).unwrap();
    bytes[1] = b'X';
    let bad = dir.path().join("bad.tdt");
    std::fs::write(&bad, &bytes).unwrap();
    assert_eq!(code(&tdt(&["eval", "--ckpt", bad.to_str().unwrap()])), 2);

    // Move the backbone without refreshing the prior cache.
    let mut ck = Checkpoint::load(&ck_path).unwrap();
    let w = ck.model.params.get("backbone.fc2.bias").unwrap().to_vec();
    ck.model
        .params
        .set_values("backbone.fc2.bias", w.iter().map(|v| v + 0.1).collect())
        .unwrap();
    let stale = dir.path().join("stale.tdt");
    ck.save(&stale).unwrap();
    let o = tdt(&["eval", "--ckpt", stale.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("re-cache"));

    assert_eq!(code(&tdt(&["recache", "--ckpt", stale.to_str().unwrap()])), 0);
    assert_eq!(code(&tdt(&["eval", "--ckpt", stale.to_str().unwrap()])), 0);

    let saved = dir.path().join("resaved.tdt");
    Checkpoint::load(&ck_path).unwrap().save(&saved).unwrap();
    assert_eq!(std::fs::read(&saved).unwrap(), std::fs::read(&ck_path).unwrap());
}

#[test]
fn export_curves_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, _) = train_to(dir.path(), "m.tdt");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = tdt(&["export-curves", "--ckpt", ck.to_str().unwrap(), "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        assert!(stdout(&o).contains("rows=371"));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next(), Some(CURVES_HEADER));
    assert_eq!(text.lines().count(), 1 + 371);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let o = tdt(&[
        "export-curves",
        "--ckpt",
        ck.to_str().unwrap(),
        "--out",
        dir.path().join("missing/dir/c.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 5);
}

#[test]
fn eval_reads_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, _) = train_to(dir.path(), "m.tdt");
    let csv = dir.path().join("d.csv");
    let mut text = (0..32).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    text.push_str(",y\n");
    for r in 0..3 {
        let row: Vec<String> = (0..33).map(|i| format!("{}", (i + r) as f64 * 0.01)).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&csv, text).unwrap();
    let o = tdt(&["eval", "--ckpt", ck.to_str().unwrap(), "--data", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("n=3\n"));
}

#[test]
fn check_commands() {
    let o = tdt(&["propcheck", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("pdf_integral_b2.4495") && s.contains("integral="));
    assert!(s.contains("pdf_variance") && s.contains("variance="));
    assert!(s.contains("tol=1.0e-6"));

    let o = tdt(&["gradcheck", "--seed", "2", "--negative-control", "relu"]);
    assert_eq!(code(&o), 1);
    let s = stdout(&o);
    let failed: Vec<&str> = s.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failed.len(), 1, "{s}");
    assert!(failed[0].starts_with("FAIL relu "));
}
