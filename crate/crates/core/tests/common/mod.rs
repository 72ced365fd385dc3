#![allow(dead_code)]

pub mod oracle;

use std::fs;
use std::path::{Path, PathBuf};

use geeval_core::forge::{materialize_suite, MaterializeOptions, MaterializeStatus};
use geeval_core::model::{load_suite, Suite};
use geeval_core::runner::SubprocessRunner;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn mock_runner() -> SubprocessRunner {
    let script = fixtures().join("mock_runner.py");
    SubprocessRunner::new("python3", vec![script.to_string_lossy().into_owned()])
}

pub fn runner_command() -> String {
    format!("python3 {}", fixtures().join("mock_runner.py").display())
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let p = e.path();
        if p.is_dir() {
            copy_dir(&p, &to.join(e.file_name()));
        } else {
            fs::copy(&p, to.join(e.file_name())).unwrap();
        }
    }
}

/// Copies the desk suite into `dir` and materializes its expected answers.
pub fn desk_suite(dir: &Path) -> Suite {
    let root = dir.join("desk_suite");
    copy_dir(&fixtures().join("desk_suite"), &root);
    let suite = load_suite(&root).unwrap();
    let opts = MaterializeOptions { timeout_s: 30.0, concurrency: 4, ..Default::default() };
    let statuses = materialize_suite(&suite, &mock_runner(), &opts).unwrap();
    for s in &statuses {
        assert_eq!(s.status, MaterializeStatus::Ok, "{}: {}", s.case_id, s.message);
    }
    suite
}

/// A materialized suite holding only the desk cases whose ids start with
/// one of `prefixes`.
pub fn desk_subset(dir: &Path, prefixes: &[&str]) -> Suite {
    let root = dir.join("subset");
    fs::create_dir_all(&root).unwrap();
    let mut names = Vec::new();
    for e in fs::read_dir(fixtures().join("desk_suite")).unwrap() {
        let name = e.unwrap().file_name().to_string_lossy().into_owned();
        if name.ends_with(".yaml") && prefixes.iter().any(|p| name.starts_with(p)) {
            fs::copy(fixtures().join("desk_suite").join(&name), root.join(&name)).unwrap();
            names.push(name);
        }
    }
    names.sort();
    fs::write(root.join("manifest.json"), serde_json::to_string(&names).unwrap()).unwrap();
    let suite = load_suite(&root).unwrap();
    let statuses = materialize_suite(&suite, &mock_runner(), &MaterializeOptions { timeout_s: 30.0, ..Default::default() }).unwrap();
    assert!(statuses.iter().all(|s| s.status == MaterializeStatus::Ok));
    suite
}
