#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY_CONFIG: &str = "\
[model]
block_widths = [8, 8, 8, 8]
subblocks_per_block = 1
kernel = 3
seq_len = 16

[train]
epochs = 3
batch_size = 16
seed = 1
";

pub fn resflu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resflu")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// A temp directory with a tiny config and a synthetic train/test split in
/// which every held-out subject covers every class.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        let ws = Workspace { dir: tempfile::tempdir().expect("tempdir") };
        std::fs::write(ws.path("tiny.toml"), TINY_CONFIG).unwrap();
        let out = resflu(&[
            "synth",
            "--out",
            s(&ws.path("train.jsonl")),
            "--test-out",
            s(&ws.path("test.jsonl")),
            "--samples-per-class",
            "30",
            "--subjects",
            "5",
            "--holdout-subjects",
            "2",
            "--frames",
            "16",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        ws
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (data, config, out) = (self.path("train.jsonl"), self.path("tiny.toml"), self.path(out));
        let mut args = vec!["train", "--data", s(&data), "--config", s(&config), "--out", s(&out)];
        args.extend_from_slice(extra);
        resflu(&args)
    }

    pub fn eval(&self, model: &str, report: &str, extra: &[&str]) -> Output {
        let (m, d, r) = (self.path(model), self.path("test.jsonl"), self.path(report));
        let mut args = vec!["eval", "--model", s(&m), "--data", s(&d), "--report", s(&r)];
        args.extend_from_slice(extra);
        resflu(&args)
    }
}

/// Reads the value after `key: ` in diagnose output.
pub fn field(text: &str, key: &str) -> Option<String> {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}: ")).map(str::to_string))
}
