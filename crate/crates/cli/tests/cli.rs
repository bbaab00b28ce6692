use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"{
  "seed": 3,
  "n_films": 9,
  "simulation": {"width": 32, "height": 32, "class_mix": {"good": 0.34, "medium": 0.33, "bad": 0.33}},
  "split": [0.4, 0.3, 0.3],
  "augment": {"multiplier": 2},
  "train": {"epochs": 2},
  "ablation": {"n_seeds": 1, "frames_per_film": 2}
}"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("small.json"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_weldscan"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn small(&self, args: &[&str]) -> String {
        let mut all = vec!["--config", "small.json"];
        all.extend_from_slice(args);
        self.ok(&all)
    }
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), read(&p)));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn zero_films_gives_empty_manifest() {
    let ws = Workspace::new();
    ws.small(&["simulate", "--films", "0", "--out", "empty"]);
    let m: serde_json::Value =
        serde_json::from_slice(&read(&ws.path("empty/manifest.json"))).unwrap();
    assert_eq!(m["films"].as_array().unwrap().len(), 0);
    assert_eq!(m["provenance"]["seed"], 3);
}

#[test]
fn default_film_file_size() {
    let ws = Workspace::new();
    ws.ok(&["simulate", "--films", "1", "--out", "films"]);
    let len = fs::metadata(ws.path("films/film-0000.tfilm"))
        .unwrap()
        .len();
    assert_eq!(len, 64 + 131 * 146 * 250 * 2);
    assert_eq!(len, 9_563_064);
}

#[test]
fn seed_flag_overrides_config() {
    let ws = Workspace::new();
    ws.small(&["--seed", "11", "simulate", "--films", "0", "--out", "e"]);
    let m: serde_json::Value = serde_json::from_slice(&read(&ws.path("e/manifest.json"))).unwrap();
    assert_eq!(m["provenance"]["seed"], 11);
    assert_eq!(m["provenance"]["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["provenance"]["config_hash"].as_str().unwrap().len(), 16);
}

#[test]
fn pipeline_is_deterministic() {
    let ws = Workspace::new();
    for run in ["a", "b"] {
        let films = format!("{run}/films");
        let norm = format!("{run}/norm");
        let ds = format!("{run}/ds");
        let ckpt = format!("{run}/model.ckpt");
        let ev = format!("{run}/eval");
        ws.small(&["simulate", "--out", &films]);
        ws.small(&["normalize", "--input", &films, "--out", &norm]);
        ws.small(&["prepare", "--input", &norm, "--filter", "F10", "--out", &ds]);
        ws.small(&["train", "--dataset", &ds, "--out", &ckpt]);
        ws.small(&[
            "eval",
            "--checkpoint",
            &ckpt,
            "--dataset",
            &ds,
            "--out",
            &ev,
        ]);
    }
    let a = tree(&ws.path("a"));
    let b = tree(&ws.path("b"));
    assert_eq!(a.len(), b.len());
    assert!(a.iter().any(|(p, _)| p.ends_with("model.ckpt")));
    for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
        assert_eq!(pa, pb);
        assert!(ba == bb, "{} differs between runs", pa.display());
    }
}

#[test]
fn eval_on_training_split_beats_chance() {
    let ws = Workspace::new();
    ws.small(&["simulate", "--out", "films"]);
    ws.small(&["prepare", "--input", "films", "--out", "ds"]);
    ws.small(&["train", "--dataset", "ds", "--out", "m.ckpt"]);
    let text = ws.small(&[
        "eval",
        "--checkpoint",
        "m.ckpt",
        "--dataset",
        "ds",
        "--split",
        "train",
        "--out",
        "ev",
    ]);
    assert!(text.starts_with("                  good    medium       bad\nError Rate"));
    let r: serde_json::Value = serde_json::from_slice(&read(&ws.path("ev/report.json"))).unwrap();
    assert!(r["accuracy"].as_f64().unwrap() >= 100.0 / 3.0);
    assert_eq!(r["metadata"]["filter"], "F10");
    assert!(r["metadata"]["config_hash"].is_string());
    let sidecar: serde_json::Value =
        serde_json::from_slice(&read(&ws.path("m.ckpt.json"))).unwrap();
    assert_eq!(sidecar["history"].as_array().unwrap().len(), 2);
}

#[test]
fn split_into_train_only_warns() {
    let ws = Workspace::new();
    ws.small(&["simulate", "--out", "films"]);
    let out = ws.run(&[
        "--config",
        "small.json",
        "prepare",
        "--input",
        "films",
        "--augment",
        "none",
        "--split",
        "1",
        "0",
        "0",
        "--count-only",
    ]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("split val has no films"));
    assert!(stderr.contains("split test has no films"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout
        .lines()
        .any(|l| l.starts_with("val") && l.ends_with(" 0")));
    assert!(!ws.path("out").exists());
}

#[test]
fn empty_filter_is_a_data_error() {
    let ws = Workspace::new();
    fs::write(
        ws.path("cold.json"),
        r#"{"n_films": 3, "simulation": {"width": 16, "height": 16, "pulse": {"absorbed_energy": 0.0}}}"#,
    )
    .unwrap();
    ws.ok(&["--config", "cold.json", "simulate", "--out", "films"]);
    let out = ws.run(&[
        "--config",
        "cold.json",
        "prepare",
        "--input",
        "films",
        "--filter",
        "F3",
        "--out",
        "ds",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no images selected"));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    assert_eq!(ws.run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        ws.run(&["--config", "missing.json", "simulate"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        ws.run(&["--config", "small.json", "train", "--dataset", "nowhere"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(ws.run(&["--help"]).status.code(), Some(0));

    ws.small(&["simulate", "--out", "films"]);
    ws.small(&["prepare", "--input", "films", "--out", "ds"]);
    let out = ws.run(&[
        "--config",
        "small.json",
        "train",
        "--dataset",
        "ds",
        "--learning-rate",
        "1e9",
        "--epochs",
        "1",
        "--out",
        "x",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = ws.run(&[
        "--config",
        "small.json",
        "eval",
        "--checkpoint",
        "nothing.ckpt",
        "--dataset",
        "ds",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablation_csv_has_one_row_per_filter() {
    let ws = Workspace::new();
    ws.small(&["simulate", "--out", "films"]);
    ws.small(&["normalize", "--input", "films", "--out", "norm"]);
    ws.small(&[
        "ablate",
        "--input",
        "norm",
        "--filters",
        "F3,F9,F10,F11",
        "--out",
        "abl",
    ]);
    let csv = String::from_utf8(read(&ws.path("abl/ablation.csv"))).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "entry,mean,stddev");
    assert_eq!(lines.len(), 5);
    assert!(lines[3].starts_with("F10/positional,"));
}

#[test]
fn curve_and_frames() {
    let ws = Workspace::new();
    ws.small(&["simulate", "--films", "1", "--out", "films"]);
    let csv = ws.small(&["curve", "films/film-0000.tfilm"]);
    assert_eq!(csv.lines().count(), 251);
    assert!(csv.starts_with("frame,mean_digits\n1,"));
    ws.small(&[
        "export-frames",
        "films/film-0000.tfilm",
        "--frames",
        "1,60",
        "--out",
        "png",
    ]);
    let img = image::open(ws.path("png/film-0000_f060.png")).unwrap();
    assert_eq!((img.width(), img.height()), (32, 32));
    let out = ws.run(&[
        "--config",
        "small.json",
        "export-frames",
        "films/film-0000.tfilm",
        "--frames",
        "251",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
