//! Helpers that drive the compiled binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subsumm::config::RunConfig;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_subsumm")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

/// Runs the binary and panics with its stderr on a non-zero exit.
pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "subsumm {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

/// synth (train and test), train-sentiment, train-valuation, train-stage1,
/// gen-candidates, train-stage2 and evaluate for one perspective.
pub fn full_pipeline(out: &Path, config: &Path, perspective: &str) {
    let o = out.to_str().unwrap();
    let c = config.to_str().unwrap();
    let train = format!("{o}/corpus/train.jsonl");
    let test = format!("{o}/corpus/test.jsonl");
    let common = ["--config", c, "--out", o];
    let with = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend(common);
        args.extend(extra);
        run_ok(&args);
    };
    with("synth", &[]);
    with("synth", &["--split", "test"]);
    with("train-sentiment", &["--corpus", &train]);
    with("train-valuation", &["--corpus", &train, "--perspective", perspective]);
    with("train-stage1", &["--corpus", &train, "--perspective", perspective]);
    with("gen-candidates", &["--corpus", &train, "--perspective", perspective]);
    with("train-stage2", &["--corpus", &train, "--perspective", perspective]);
    with("evaluate", &["--corpus", &test, "--split", "test", "--perspective", perspective]);
}

/// Relative path to contents of every file below `dir`.
pub fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
