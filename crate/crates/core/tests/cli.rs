use std::path::{Path, PathBuf};

use biaslens::cli::{self, report::Report};
use biaslens::manifest::{save_manifest, DatasetManifest, Sample};
use biaslens::synthetic::{caption_datasets, color_datasets, write_to_disk};

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("biaslens").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn color_manifests(dir: &Path) -> Vec<PathBuf> {
    let (m, imgs) = color_datasets(&[60.0, 196.0], 20.0, 30, 16, 1);
    write_to_disk(&m, &imgs, dir).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn classify_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let paths = color_manifests(dir.path());
    let out = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "c.toml",
        "n_trials = 2\nn_train = 20\nn_val = 10\nresize = 8\n[features]\nkind = \"mean_rgb\"\nnormalize = true\n",
    );
    let code = run(&[
        "classify", "--config", s(&cfg), "--seed", "3", "--out", s(&out), "--manifests", s(&paths[0]), s(&paths[1]),
    ]);
    assert_eq!(code, 0);
    let report = Report::load(out.join("report.json")).unwrap();
    assert_eq!(report.command, "classify");
    assert_eq!(report.config["train"]["seed"], 3);
    assert!(out.join("confusion.csv").exists());
    let mean_rgb = std::fs::read_to_string(out.join("mean_rgb.csv")).unwrap();
    assert_eq!(mean_rgb.lines().count(), 61);

    let plots = dir.path().join("plots");
    assert_eq!(run(&["report", "--input", s(&out.join("report.json")), "--out", s(&plots), "--plot", "confusion"]), 0);
    assert!(plots.join("confusion.csv").exists());
    assert_eq!(run(&["report", "--input", s(&out.join("report.json")), "--out", s(&plots), "--plot", "topics"]), 1);
}

#[test]
fn transform_writes_pngs_and_channel_planes() {
    let dir = tempfile::tempdir().unwrap();
    let paths = color_manifests(dir.path());
    let out = dir.path().join("t");
    let cfg = write(dir.path(), "t.toml", "limit = 2\n[transform]\ntransform = \"hog\"\n");
    assert_eq!(run(&["transform", "--config", s(&cfg), "--out", s(&out), "--manifests", s(&paths[0])]), 0);
    let report = Report::load(out.join("report.json")).unwrap();
    let json = serde_json::to_value(&report.blocks).unwrap();
    let images = json[0]["images"].as_array().unwrap();
    assert_eq!(images.len(), 2);
    for img in images {
        for f in img["files"].as_array().unwrap() {
            assert!(out.join(f.as_str().unwrap()).exists());
        }
    }
}

#[test]
fn sweep_without_axis_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let paths = color_manifests(dir.path());
    let out = dir.path().join("o");
    assert_eq!(run(&["sweep", "--seed", "1", "--out", s(&out), "--manifests", s(&paths[0]), s(&paths[1])]), 1);
}

#[test]
fn missing_manifest_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(run(&["classify", "--seed", "1", "--out", s(&out), "--manifests", s(&missing)]), 2);
}

#[test]
fn objects_and_text_run_from_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (d, own) in ["cat", "boat"].iter().enumerate() {
        let samples = (0..40)
            .map(|i| {
                let mut objs = vec!["person"];
                if i % 4 != 0 {
                    objs.push(own);
                }
                Sample::new(format!("m{d}-{i}"), format!("m{d}-{i}.png"))
                    .with_objects(objs)
                    .with_label(if i % 2 == 0 { "indoor" } else { own })
                    .with_captions(Some(format!("a {own} near a person")), None)
            })
            .collect();
        let p = dir.path().join(format!("m{d}.jsonl"));
        save_manifest(&DatasetManifest::new(format!("m{d}"), samples).unwrap(), &p).unwrap();
        paths.push(p);
    }
    let vocab = write(dir.path(), "vocab.txt", "person\ncat\nboat\n");
    let cfg = write(dir.path(), "o.toml", "labels = true\nmin_support = 5\nmin_frequency = 5\nn_train = 20\nn_val = 10\n");
    let out = dir.path().join("obj");
    let code = run(&[
        "objects", "--config", s(&cfg), "--vocab", s(&vocab), "--seed", "2", "--out", s(&out), "--manifests",
        s(&paths[0]), s(&paths[1]),
    ]);
    assert_eq!(code, 0);
    for f in ["class_shares.csv", "unique_objects.csv", "rankings.csv", "accuracy_vs_share.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let out = dir.path().join("txt");
    let cfg = write(dir.path(), "short.toml", "caption = \"short\"\n");
    let code = run(&["text", "--mode", "freq", "--config", s(&cfg), "--out", s(&out), "--manifests", s(&paths[0]), s(&paths[1])]);
    assert_eq!(code, 0);
    let phrases = std::fs::read_to_string(out.join("phrases.csv")).unwrap();
    assert!(phrases.contains("m0,2,cat_person,40"), "{phrases}");
    // Long captions, the default field, are absent.
    assert_eq!(run(&["text", "--out", s(&out), "--manifests", s(&paths[0])]), 1);
}

#[test]
fn llm_runs_against_a_mock() {
    let dir = tempfile::tempdir().unwrap();
    let (m, imgs) = caption_datasets(2, 20, 6, 3, 4);
    let paths = write_to_disk(&m, &imgs, dir.path()).unwrap();
    let cfg = write(
        dir.path(),
        "l.toml",
        "[icl]\ndemos_per_dataset = 5\nstop_window = 3\n[transport]\nkind = \"mock\"\nresponses = [\"1\"]\n",
    );
    let out = dir.path().join("llm");
    let code = run(&[
        "llm", "--mode", "icl", "--config", s(&cfg), "--seed", "9", "--out", s(&out), "--manifests", s(&paths[0]),
        s(&paths[1]),
    ]);
    assert_eq!(code, 0);
    assert!(out.join("icl_curve.csv").exists());
    let log = std::fs::read_to_string(out.join("llm_log.jsonl")).unwrap();
    assert!(log.lines().count() >= 2);
}
