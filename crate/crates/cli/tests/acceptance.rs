//! Acceptance criterion 10: `track`, `featurize`, and `train` each produce
//! byte-identical outputs across two runs with the same config and seed.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn poseact() -> Command {
    Command::new(env!("CARGO_BIN_EXE_poseact"))
}

fn run(args: &[&str]) {
    let output = poseact().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "poseact {:?} failed:\n{}\n{}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Every regular file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, files: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("directory exists") {
            let entry = entry.expect("entry readable");
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, files);
            } else {
                let relative = path
                    .strip_prefix(root)
                    .expect("under root")
                    .to_string_lossy()
                    .into_owned();
                files.insert(relative, std::fs::read(&path).expect("file readable"));
            }
        }
    }
    let mut files = BTreeMap::new();
    walk(dir, dir, &mut files);
    files
}

fn assert_identical(first: &Path, second: &Path, what: &str) {
    let a = snapshot(first);
    let b = snapshot(second);
    let names_a: Vec<&String> = a.keys().collect();
    let names_b: Vec<&String> = b.keys().collect();
    assert_eq!(names_a, names_b, "{}: file sets differ", what);
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "{}: {} differs between runs", what, name);
    }
    assert!(!a.is_empty(), "{}: no outputs produced", what);
}

#[test]
fn criterion_10_determinism() {
    let root = tempfile::tempdir().expect("tempdir");
    let root = root.path();

    // shared synthetic inputs
    let scenario = root.join("scenario");
    run(&[
        "synth",
        "scenario",
        "--out",
        scenario.to_str().unwrap(),
        "--frames",
        "300",
        "--seed",
        "11",
    ]);
    let actions = root.join("actions");
    run(&[
        "synth",
        "actions",
        "--out",
        actions.to_str().unwrap(),
        "--clips-per-class",
        "4",
        "--seed",
        "11",
    ]);

    // track twice
    for run_dir in ["track_a", "track_b"] {
        run(&[
            "track",
            "--detections",
            scenario.join("detections.jsonl").to_str().unwrap(),
            "--manifest",
            scenario.join("manifest.toml").to_str().unwrap(),
            "--embeddings",
            scenario.join("embeddings.jsonl").to_str().unwrap(),
            "--identities",
            scenario.join("identities.csv").to_str().unwrap(),
            "--out",
            root.join(run_dir).to_str().unwrap(),
            "--seed",
            "11",
        ]);
    }
    assert_identical(&root.join("track_a"), &root.join("track_b"), "track");

    // featurize twice
    for run_dir in ["feat_a", "feat_b"] {
        run(&[
            "featurize",
            "--track",
            actions.join("track.json").to_str().unwrap(),
            "--annotations",
            actions.join("annotations.csv").to_str().unwrap(),
            "--manifest",
            actions.join("manifest.toml").to_str().unwrap(),
            "--out",
            root.join(run_dir).to_str().unwrap(),
            "--scale",
            "0.03125",
            "--val-fraction",
            "0.2",
            "--seed",
            "11",
        ]);
    }
    assert_identical(&root.join("feat_a"), &root.join("feat_b"), "featurize");

    // train twice on the featurized clips
    for run_dir in ["train_a", "train_b"] {
        run(&[
            "train",
            "--data",
            root.join("feat_a").to_str().unwrap(),
            "--out",
            root.join(run_dir).to_str().unwrap(),
            "--epochs",
            "2",
            "--batch-size",
            "8",
            "--seed",
            "11",
        ]);
    }
    assert_identical(&root.join("train_a"), &root.join("train_b"), "train");

    println!(
        "ACCEPTANCE 10 determinism: PASS (track, featurize, train byte-identical across reruns)"
    );
}

/// Training parallelizes internally; outputs must not depend on the worker
/// count.
#[test]
fn train_is_thread_count_independent() {
    let root = tempfile::tempdir().expect("tempdir");
    let root = root.path();
    let actions = root.join("actions");
    run(&[
        "synth",
        "actions",
        "--out",
        actions.to_str().unwrap(),
        "--clips-per-class",
        "4",
        "--seed",
        "5",
    ]);
    run(&[
        "featurize",
        "--track",
        actions.join("track.json").to_str().unwrap(),
        "--annotations",
        actions.join("annotations.csv").to_str().unwrap(),
        "--manifest",
        actions.join("manifest.toml").to_str().unwrap(),
        "--out",
        root.join("feat").to_str().unwrap(),
        "--scale",
        "0.03125",
        "--val-fraction",
        "0.2",
        "--seed",
        "5",
    ]);
    for (run_dir, threads) in [("one_thread", "1"), ("many_threads", "4")] {
        let output = poseact()
            .env("RAYON_NUM_THREADS", threads)
            .args([
                "train",
                "--data",
                root.join("feat").to_str().unwrap(),
                "--out",
                root.join(run_dir).to_str().unwrap(),
                "--epochs",
                "2",
                "--batch-size",
                "8",
                "--seed",
                "5",
            ])
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    assert_identical(
        &root.join("one_thread"),
        &root.join("many_threads"),
        "train-threads",
    );
}
