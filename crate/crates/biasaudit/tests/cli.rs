use std::path::Path;
use std::process::{Command, Output};

use biasaudit::digest::{determinism_digests, render};
use serde_json::Value;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biasaudit")).current_dir(dir).args(args).output().expect("spawn biasaudit")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = bin(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{args:?}: {e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn digest_matches_in_process_and_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = bin(dir.path(), &["digest", "--seed", "3"]);
    let b = bin(dir.path(), &["digest", "--seed", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap(), render(&determinism_digests(3).unwrap()));
    assert_ne!(bin(dir.path(), &["digest", "--seed", "4"]).stdout, b.stdout);
}

#[test]
fn folder_to_probe_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for (style, id) in [("alpha", "yfcc"), ("delta", "cc")] {
        let v = ok_json(d, &["dataset", "synth", "--style", style, "--count", "40", "--seed", "1", "--out-dir", id]);
        assert_eq!(v["images"], 40);
        if id == "yfcc" {
            std::fs::write(d.join("yfcc/broken.png"), b"not an image").unwrap();
        }
        let v = ok_json(d, &["dataset", "build", id, "--id", id, "--out", &format!("{id}.jsonl")]);
        assert_eq!(v["images"], if id == "yfcc" { 41 } else { 40 });
        assert_eq!(v["undecodable"], u8::from(id == "yfcc"));
    }

    let split = ok_json(d, &["dataset", "sample", "--manifest", "yfcc.jsonl", "--train", "30", "--val", "10", "--seed", "5"]);
    assert_eq!(split["train_indices"].as_array().unwrap().len(), 30);
    assert_eq!(split["val_indices"].as_array().unwrap().len(), 10);
    let again = ok_json(d, &["dataset", "sample", "--manifest", "yfcc.jsonl", "--train", "30", "--val", "10", "--seed", "5"]);
    assert_eq!(split, again);
    let too_many = bin(d, &["dataset", "sample", "--manifest", "yfcc.jsonl", "--train", "40", "--val", "10"]);
    assert!(!too_many.status.success());
    assert!(String::from_utf8_lossy(&too_many.stderr).contains("error"));

    let pseudo = ok_json(d, &["dataset", "pseudo", "--manifest", "cc.jsonl", "--k", "3", "--n", "10", "--n-val", "2"]);
    assert_eq!(pseudo.as_array().unwrap().len(), 3);

    std::fs::write(
        d.join("exp.yaml"),
        "name: cli\nseed: 0\nn_train: 24\nn_val: 10\ndatasets:\n  - { id: yfcc, source: manifest, manifest: yfcc.jsonl }\n  - { id: cc, source: manifest, manifest: cc.jsonl }\nmodel: { width_multiplier: 0.25 }\ntrain: { preset: desk, ref_epochs: 2, batch_size: 16 }\naugmentation: { level: none }\n",
    )
    .unwrap();
    let record = ok_json(d, &["train", "--config", "exp.yaml", "--out", "run"]);
    assert_eq!(record["class_names"], serde_json::json!(["yfcc", "cc"]));
    assert!(d.join("run/model.bin").exists());

    let eval = ok_json(d, &["eval", "--ckpt", "run/model.bin", "--val", "exp.yaml"]);
    assert_eq!(eval["total"], 20);
    assert!((eval["accuracy"].as_f64().unwrap() - record["val_accuracy"].as_f64().unwrap()).abs() < 1e-9);

    let shape = ok_json(d, &["features", "--ckpt", "run/model.bin", "--config", "exp.yaml", "--out", "f.feat", "--labels", "l.json"]);
    assert_eq!(shape["rows"], 68);
    let probe = ok_json(d, &["probe", "--features", "f.feat", "--labels", "l.json", "--epochs", "5", "--seed", "1"]);
    let acc = probe["accuracy"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&acc));
}

#[test]
fn histogram_report_writes_three_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("acc.json"), "[40, 44, 44, 47, 52]").unwrap();
    let out = bin(d, &["report", "--template", "study_histogram", "--accuracies", "acc.json", "--out", "rep"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for ext in ["md", "csv", "svg"] {
        assert!(d.join(format!("rep/study_histogram.{ext}")).exists());
    }
    let md = std::fs::read_to_string(d.join("rep/study_histogram.md")).unwrap();
    assert!(md.contains("| 40-45 | 3 |"), "{md}");

    let empty = bin(d, &["report", "--template", "combinations_table", "--store", "nothing-here"]);
    assert!(empty.status.success());
    assert!(String::from_utf8_lossy(&empty.stdout).contains("accuracy |"));
    assert!(!bin(d, &["report", "--template", "no_such_template"]).status.success());
}
