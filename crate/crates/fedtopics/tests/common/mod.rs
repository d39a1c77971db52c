#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use fedtopics::{Pipeline, PipelineConfig};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/goldens/synthetic")
}

/// The fixture configuration writing to `out`, free of environment overrides.
pub fn fixture_config(out: &Path) -> PipelineConfig {
    let path = fixture_dir().join("config.toml");
    let text = fs::read_to_string(&path).unwrap();
    let mut cfg = PipelineConfig::from_toml(&text, &fixture_dir()).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn run_all(cfg: PipelineConfig) {
    Pipeline::new(cfg, &[]).unwrap().run_all().unwrap();
}

/// One complete fixture run shared by read-only tests.
pub fn shared_run() -> &'static Path {
    static OUT: OnceLock<PathBuf> = OnceLock::new();
    OUT.get_or_init(|| {
        let dir = tempfile::Builder::new().prefix("fedtopics-shared").tempdir().unwrap().keep();
        run_all(fixture_config(&dir));
        dir
    })
}

/// Relative paths of every file under `root`, sorted.
pub fn files(root: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<String>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                acc.push(path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut acc = Vec::new();
    walk(root, root, &mut acc);
    acc.sort();
    acc
}

/// Copies `src` into a fresh directory.
pub fn copy_tree(src: &Path, dst: &Path) {
    for rel in files(src) {
        let target = dst.join(&rel);
        fs::create_dir_all(target.parent().unwrap()).unwrap();
        fs::copy(src.join(&rel), target).unwrap();
    }
}

/// Differences between `out` and the goldens, ignoring the manifest (it
/// carries timings). With `FEDTOPICS_BLESS=1` the goldens are rewritten.
pub fn golden_mismatches(out: &Path) -> Vec<String> {
    let golden = golden_dir();
    let produced: Vec<String> = files(out).into_iter().filter(|f| f != "manifest.json").collect();
    if std::env::var("FEDTOPICS_BLESS").is_ok_and(|v| v == "1") {
        if golden.exists() {
            fs::remove_dir_all(&golden).unwrap();
        }
        for rel in &produced {
            let target = golden.join(rel);
            fs::create_dir_all(target.parent().unwrap()).unwrap();
            fs::copy(out.join(rel), target).unwrap();
        }
        return Vec::new();
    }
    let expected = if golden.exists() { files(&golden) } else { Vec::new() };
    let mut problems = Vec::new();
    for rel in &expected {
        if !produced.contains(rel) {
            problems.push(format!("{rel}: not produced"));
        } else if fs::read(out.join(rel)).unwrap() != fs::read(golden.join(rel)).unwrap() {
            problems.push(format!("{rel}: differs from golden"));
        }
    }
    for rel in &produced {
        if !expected.contains(rel) {
            problems.push(format!("{rel}: no golden (rerun with FEDTOPICS_BLESS=1)"));
        }
    }
    problems
}

pub fn cli(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedtopics"));
    cmd.args(args).env_remove("RUST_LOG");
    for (key, _) in std::env::vars().filter(|(k, _)| k.starts_with("FEDTOPICS_")) {
        cmd.env_remove(key);
    }
    cmd.output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
