mod common;

use std::path::{Path, PathBuf};

use metrum::cli::{main_with_args, run};
use metrum::ingest::{midi_to_pianoroll, save_pianoroll_json};
use metrum::model::{Checkpoint, EmissionModel, ModelConfig};
use tempfile::TempDir;

const FAST: [&str; 4] = ["--levels", "4", "--seed", "3"];

fn call(args: &[&str]) -> metrum::Result<()> {
    let mut all = vec!["metrum"];
    all.extend_from_slice(args);
    all.extend_from_slice(&FAST);
    run(all)
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn json_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files
}

/// Synthesizes a small corpus and trains a small model on it.
fn trained(dir: &TempDir, epochs: &str) {
    call(&[
        "synth",
        "--out",
        &path(dir, "corpus"),
        "--songs",
        "4",
        "--steps",
        "96",
    ])
    .unwrap();
    call(&[
        "train",
        "--corpus",
        &path(dir, "corpus"),
        "--out",
        &path(dir, "model.json"),
        "--epochs",
        epochs,
        "--channels",
        "8",
        "--depth",
        "2",
    ])
    .unwrap();
}

#[test]
fn synth_writes_songs_and_manifest() {
    let dir = TempDir::new().unwrap();
    call(&[
        "synth",
        "--out",
        &path(&dir, "c"),
        "--songs",
        "3",
        "--steps",
        "64",
    ])
    .unwrap();
    let files = json_files(&dir.path().join("c"));
    let names: Vec<_> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_str().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "manifest.json",
            "song_0000.json",
            "song_0001.json",
            "song_0002.json"
        ]
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["songs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn synth_with_no_songs_writes_only_the_manifest() {
    let dir = TempDir::new().unwrap();
    call(&["synth", "--out", &path(&dir, "c"), "--songs", "0"]).unwrap();
    assert_eq!(json_files(&dir.path().join("c")).len(), 1);
}

#[test]
fn synth_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        call(&[
            "synth",
            "--out",
            &path(dir, "c"),
            "--songs",
            "2",
            "--steps",
            "64",
        ])
        .unwrap();
    }
    for (x, y) in json_files(&a.path().join("c"))
        .iter()
        .zip(json_files(&b.path().join("c")))
    {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

#[test]
fn zero_epochs_keeps_the_initialization() {
    let dir = TempDir::new().unwrap();
    trained(&dir, "0");
    let ck = Checkpoint::load(dir.path().join("model.json")).unwrap();
    let init = EmissionModel::init(ModelConfig::new(4).with_channels(8).with_depth(2), 3).unwrap();
    assert_eq!(ck.model, init);
    assert!(ck.loss_log.is_empty());
}

#[test]
fn calibrate_is_idempotent() {
    let dir = TempDir::new().unwrap();
    trained(&dir, "1");
    let model = path(&dir, "model.json");
    let song = path(&dir, "corpus/song_0000.json");
    let base = [
        "calibrate",
        "--checkpoint",
        model.as_str(),
        "--song",
        song.as_str(),
    ];
    let mut once = base.to_vec();
    let once_out = path(&dir, "once.json");
    once.extend(["--out", once_out.as_str()]);
    call(&once).unwrap();
    call(&base).unwrap();
    call(&base).unwrap();
    let a = Checkpoint::load(&once_out).unwrap();
    let b = Checkpoint::load(&model).unwrap();
    assert_eq!(a, b);
    let stored = b.calibration.unwrap();
    assert_eq!(stored.song, "song_0000");
    assert!(stored.offset.abs() <= 32);
}

#[test]
fn calibrate_needs_annotations() {
    let dir = TempDir::new().unwrap();
    trained(&dir, "0");
    let roll = midi_to_pianoroll(common::FORMAT0_TWO_NOTES).unwrap();
    let bare = dir.path().join("bare.json");
    std::fs::write(&bare, save_pianoroll_json(&roll, None).unwrap()).unwrap();
    let code = main_with_args([
        "metrum",
        "calibrate",
        "--checkpoint",
        &path(&dir, "model.json"),
        "--song",
        bare.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn decode_covers_every_step() {
    let dir = TempDir::new().unwrap();
    trained(&dir, "1");
    let out = path(&dir, "analysis.json");
    call(&[
        "decode",
        "--checkpoint",
        &path(&dir, "model.json"),
        "--input",
        &path(&dir, "corpus/song_0001.json"),
        "--out",
        &out,
    ])
    .unwrap();
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(a["num_steps"], 96);
    assert_eq!(a["levels"].as_array().unwrap().len(), 96);
    assert_eq!(a["probabilities"].as_array().unwrap().len(), 96);
    assert_eq!(a["probabilities"][0].as_array().unwrap().len(), 5);
    assert_eq!(
        a["dot_diagram"].as_str().unwrap().lines().count(),
        2 * 5 + 1
    );
}

#[test]
fn midi_and_json_inputs_give_the_same_analysis() {
    let dir = TempDir::new().unwrap();
    trained(&dir, "1");
    let mid = dir.path().join("piece.mid");
    std::fs::write(&mid, common::FORMAT0_TWO_NOTES).unwrap();
    let json = dir.path().join("piece.json");
    let roll = midi_to_pianoroll(common::FORMAT0_TWO_NOTES).unwrap();
    std::fs::write(&json, save_pianoroll_json(&roll, None).unwrap()).unwrap();
    let mut outputs = Vec::new();
    for input in [&mid, &json] {
        let out = path(&dir, "out.json");
        call(&[
            "decode",
            "--checkpoint",
            &path(&dir, "model.json"),
            "--input",
            input.to_str().unwrap(),
            "--out",
            &out,
        ])
        .unwrap();
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn eval_writes_json_and_table() {
    let dir = TempDir::new().unwrap();
    trained(&dir, "1");
    let out = path(&dir, "report.json");
    call(&[
        "eval",
        "--checkpoint",
        &path(&dir, "model.json"),
        "--corpus",
        &path(&dir, "corpus"),
        "--out",
        &out,
    ])
    .unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["num_songs"], 4);
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "nope");
    let model = path(&dir, "m.json");
    assert_eq!(
        main_with_args(["metrum", "train", "--corpus", &missing, "--out", &model]),
        2
    );
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let empty = path(&dir, "empty");
    assert_eq!(
        main_with_args(["metrum", "train", "--corpus", &empty, "--out", &model]),
        1
    );
    assert_eq!(main_with_args(["metrum", "bogus"]), 1);
    assert_eq!(main_with_args(["metrum", "--help"]), 0);

    trained(&dir, "0");
    let code = main_with_args([
        "metrum",
        "eval",
        "--checkpoint",
        &path(&dir, "model.json"),
        "--corpus",
        &empty,
        "--out",
        &path(&dir, "r.json"),
    ]);
    assert_ne!(code, 0);
}
