#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ace-icd")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn ace-icd")
}

/// Runs the binary and returns stdout, panicking with stderr on failure.
pub fn run_ok<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "ace-icd {:?} failed: {}",
        args.iter().map(|a| a.as_ref().to_string_lossy().into_owned()).collect::<Vec<_>>(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> String {
    path.to_str().unwrap().to_owned()
}

/// Mock expansion of the showcase notes through `eval-expansion`; returns
/// the command's stdout.
pub fn showcase_pipeline(out: &Path) -> String {
    let config = p(&fixture("expansion-showcase").join("ace.toml"));
    let out = p(out);
    let mut last = String::new();
    for cmd in ["segment", "expand", "align", "eval-expansion"] {
        last = run_ok(&["--config", &config, "--output-dir", &out, cmd]);
    }
    last
}

/// Synthetic corpus through every pipeline stage: data preparation once,
/// then augmented and baseline training for two seeds, evaluation,
/// permutation tests and the seed report.
pub fn synthetic_pipeline(root: &Path) {
    let data = root.join("data");
    let d = |name: &str| p(&data.join(name));
    let dd = p(&data);
    run_ok(&["--output-dir", &dd, "--seed", "7", "synth"]);
    run_ok(&["--output-dir", &dd, "--seed", "7", "segment", "--notes", &d("train.jsonl")]);
    run_ok(&["--output-dir", &dd, "--seed", "7", "expand", "--mode", "mock", "--dictionary", &d("dictionary.tsv")]);
    run_ok(&["--output-dir", &dd, "--seed", "7", "align"]);
    run_ok(&["--output-dir", &dd, "--seed", "7", "build-prompts", "--codes", &d("codes.tsv"), "--chunk-size", "8"]);

    let codes = d("codes.tsv");
    let mut ace_metrics = Vec::new();
    for seed in ["0", "1"] {
        for system in ["ace", "baseline"] {
            let out = p(&root.join(format!("seed-{seed}")).join(system));
            let common = ["--output-dir", out.as_str(), "--seed", seed];
            let (train_notes, expanded) = (d("train.jsonl"), d("expanded.jsonl"));
            let mut train = vec!["train", "--notes", &train_notes, "--codes", &codes, "--expanded", &expanded];
            if system == "baseline" {
                train.extend(["--no-augment", "--alpha", "0"]);
            }
            run_ok(&[&common[..], &train].concat());
            run_ok(&[&common[..], &["score", "--notes", &d("dev.jsonl"), "--codes", &codes, "--out", "dev_scores.tsv"]].concat());
            let dev_scores = format!("{out}/dev_scores.tsv");
            run_ok(&[&common[..], &["tune-threshold", "--scores", &dev_scores, "--notes", &d("dev.jsonl"), "--codes", &codes]].concat());
            run_ok(&[&common[..], &["score", "--notes", &d("test_acronym.jsonl"), "--codes", &codes]].concat());
            run_ok(&[&common[..], &["eval-coding", "--notes", &d("test_acronym.jsonl"), "--codes", &codes, "--k", "5,8"]].concat());
        }
        let seed_dir = root.join(format!("seed-{seed}"));
        let s = |sys: &str, f: &str| p(&seed_dir.join(sys).join(f));
        run_ok(&[
            "--output-dir", &p(&seed_dir), "--seed", seed, "perm-test",
            "--scores-a", &s("ace", "scores.tsv"), "--scores-b", &s("baseline", "scores.tsv"),
            "--notes", &d("test_acronym.jsonl"), "--codes", &codes,
            "--threshold", &s("ace", "threshold.json"), "--rounds", "200",
        ]);
        ace_metrics.push(s("ace", "metrics.json"));
    }
    let mut report = vec!["--output-dir".to_string(), p(root), "report".to_string()];
    report.extend(ace_metrics);
    run_ok(&report);
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(e.path()).unwrap()))
        .collect()
}
