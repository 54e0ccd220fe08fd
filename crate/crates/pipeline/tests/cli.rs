use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use causalnet_core::grid::Grid;

const BIN: &str = env!("CARGO_BIN_EXE_causalnet");

/// Two-second trials give one crop each; tiny networks keep runs short.
const SMALL: &str = r#"
seed = 3
[synth]
seconds = 2.0
train_per_class = 4
test_per_class = 2
[convnet]
max_epochs = 4
patience = 2
[boost]
rounds = 2
"#;

fn config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["run", "--no-such-flag"]).0, 1);
    assert_eq!(run(&[]).0, 1);
    assert_eq!(run(&["causality", "--trial", "x"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn data_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = config(dir.path(), "[crops]\nwidth = 3\n");
    let (code, _, err) = run(&["--config", s(&bad_key), "synth"]);
    assert_eq!(code, 2);
    assert!(err.contains("width"), "{err}");

    let missing = config(dir.path(), "[data]\nmanifest = 'absent.csv'\n");
    let (code, _, err) = run(&["--config", s(&missing), "--out", s(&dir.path().join("o")), "image"]);
    assert_eq!(code, 2);
    assert!(err.contains("stage load"), "{err}");

    let unstable = config(dir.path(), "[synth]\nradius = 1.05\n");
    assert_eq!(run(&["--config", s(&unstable), "--out", s(&dir.path().join("u")), "synth"]).0, 2);
}

#[test]
fn causality_map_and_image_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &SMALL.replace("train_per_class = 4", "train_per_class = 1").replace("test_per_class = 2", "test_per_class = 0"));
    let out = dir.path().join("out");
    let (code, stdout, err) = run(&["--config", s(&cfg), "--out", s(&out), "synth"]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.trim().ends_with("manifest.csv"));

    let (code, stdout, err) = run(&[
        "--config", s(&cfg), "--out", s(&out), "causality", "--trial", "0", "--source", "C4", "--sink", "C3",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.starts_with("500x90"), "{stdout}");
    let grid = Grid::read(&out.join("causality/trial_0000_C4_C3_1.cgrd")).unwrap();
    assert_eq!(grid.values.dim(), (500, 90));
    assert_eq!((grid.label("source"), grid.label("sink")), (Some("C4"), Some("C3")));
    assert_eq!(grid.label("conditioning"), Some("Fz,Cz,Pz"));
    assert!(out.join("causality/trial_0000_C4_C3_1.csv").exists());

    let (code, _, err) = run(&["--config", s(&cfg), "--out", s(&out), "image"]);
    assert_eq!(code, 0, "{err}");
    let bytes = fs::read(out.join("images/trial_0000_crop_0.pgm")).unwrap();
    assert!(bytes.starts_with(b"P5\n500 90\n255\n"));
    let grid = Grid::read(&out.join("images/trial_0000_crop_0.cgrd")).unwrap();
    assert_eq!(grid.values.dim(), (90, 500));

    let (code, _, _) = run(&[
        "--config", s(&cfg), "--out", s(&out), "causality", "--trial", "0", "--source", "C4", "--sink", "C4",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn train_only_run_still_emits_images() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &SMALL.replace("test_per_class = 2", "test_per_class = 0"));
    let out = dir.path().join("out");
    let (code, stdout, err) = run(&["--config", s(&cfg), "--out", s(&out), "run"]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("train-only report"), "{stdout}");
    assert!(out.join("images/trial_0007_crop_0.pgm").exists());
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",,,,,,,"), "{csv}");
}

#[test]
fn train_then_eval_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (code, _, err) = run(&["--config", s(&cfg), "--out", s(&a), "run"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(run(&["--config", s(&cfg), "--out", s(&b), "train"]).0, 0);
    let (code, stdout, err) = run(&["--config", s(&cfg), "--out", s(&b), "eval"]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("ACC"));
    assert_eq!(
        fs::read(a.join("predictions.csv")).unwrap(),
        fs::read(b.join("predictions.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("model/ensemble.bin")).unwrap(),
        fs::read(b.join("model/ensemble.bin")).unwrap()
    );
    let missing = dir.path().join("none.bin");
    assert_eq!(run(&["--config", s(&cfg), "--out", s(&b), "eval", "--model", s(&missing)]).0, 2);
}

#[test]
fn reports_do_not_depend_on_threads_or_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    assert_eq!(run(&["--config", s(&cfg), "--seed", "7", "--out", s(&one), "--threads", "1", "run"]).0, 0);
    assert_eq!(run(&["--config", s(&cfg), "--seed", "7", "--out", s(&two), "--threads", "2", "--fresh", "run"]).0, 0);
    let files = ["report.txt", "report.csv", "predictions.csv", "boost.csv", "config.toml", "seeds.txt"];
    for f in files {
        assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(two.join(f)).unwrap(), "{f}");
    }
    // Resuming from the cached artifacts reproduces the report.
    let before = fs::read(one.join("report.txt")).unwrap();
    assert_eq!(run(&["--config", s(&cfg), "--seed", "7", "--out", s(&one), "run"]).0, 0);
    assert_eq!(fs::read(one.join("report.txt")).unwrap(), before);
    let snapshot = fs::read_to_string(one.join("config.toml")).unwrap();
    assert!(snapshot.starts_with("seed = 7"), "{snapshot}");
}
