//! Run orchestration and on-disk run layout.
//!
//! ```text
//! <home>/runs/<run-id>/run.json
//!                     /attempts.jsonl
//!                     /verdicts.jsonl
//!                     /outputs/<model>/<case>/attempt<k>.<ext>
//!                     /reports/
//! ```
//!
//! Logs are append-only while running and rewritten in sorted order once a
//! run finishes, so an interrupted and resumed run ends with the same log
//! as an uninterrupted one.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{self, ErrorCategory, Patterns};
use crate::judge::{self, Tolerances, Verdict};
use crate::model::{Suite, TestCase};
use crate::runner::{PlatformBackend, Runner, RunnerError, DEFAULT_TIMEOUT_S};
use crate::submission::{self, AttemptRecord, ExecSettings, ModelClient, ModelProfile};

pub const RUN_FILE: &str = "run.json";
pub const ATTEMPTS_FILE: &str = "attempts.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const OUTPUTS_DIR: &str = "outputs";
pub const REPORTS_DIR: &str = "reports";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Log { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Runner(#[from] RunnerError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Root for run storage: `$GEEVAL_HOME`, else `./.geeval`.
pub fn default_home() -> PathBuf {
    std::env::var_os("GEEVAL_HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".geeval"))
}

pub fn run_dir(home: &Path, run_id: &str) -> PathBuf {
    home.join("runs").join(run_id)
}

/// Settings persisted in `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub suite: PathBuf,
    pub models: Vec<ModelProfile>,
    pub attempts: usize,
    pub backend: PlatformBackend,
    pub concurrency: usize,
    pub tolerances: Tolerances<f64>,
    pub timeout_s: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(run_id: impl Into<String>, suite: impl Into<PathBuf>, models: Vec<ModelProfile>) -> Self {
        RunConfig {
            run_id: run_id.into(),
            suite: suite.into(),
            models,
            attempts: 5,
            backend: PlatformBackend::Mock,
            concurrency: 1,
            tolerances: Tolerances::default(),
            timeout_s: DEFAULT_TIMEOUT_S,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.attempts == 0 {
            return bad("attempts must be at least 1".into());
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.models.is_empty() {
            return bad("no models".into());
        }
        if !(self.timeout_s > 0.0) {
            return bad("timeout must be positive".into());
        }
        let id_ok = !self.run_id.is_empty()
            && self.run_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            && !self.run_id.starts_with('.');
        if !id_ok {
            return bad(format!("run id {:?} must be alphanumeric with - _ .", self.run_id));
        }
        let mut ids = BTreeSet::new();
        for m in &self.models {
            m.validate().map_err(RunError::Config)?;
            if !ids.insert(&m.model_id) {
                return bad(format!("model {} listed twice", m.model_id));
            }
        }
        self.tolerances.validate().map_err(RunError::Config)
    }
}

/// One line of `verdicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub model_id: String,
    pub case_id: String,
    pub attempt_index: usize,
    pub verdict: Option<Verdict>,
    pub error_category: Option<ErrorCategory>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub category_reason: String,
}

/// Reads a JSON-lines log. A torn final line (no newline, or unparseable
/// and last) is dropped and, when `repair` is set, truncated from the file.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, repair: bool) -> Result<Vec<T>, RunError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(path)(e)),
    };
    let mut out = Vec::new();
    let mut good_len = 0usize;
    let mut start = 0usize;
    let mut line_no = 0usize;
    while start < bytes.len() {
        line_no += 1;
        let end = bytes[start..].iter().position(|&b| b == b'\n').map(|p| start + p);
        let (line, next, complete) = match end {
            Some(e) => (&bytes[start..e], e + 1, true),
            None => (&bytes[start..], bytes.len(), false),
        };
        if line.iter().all(u8::is_ascii_whitespace) {
            start = next;
            if complete {
                good_len = next;
            }
            continue;
        }
        match serde_json::from_slice::<T>(line) {
            Ok(v) if complete => {
                out.push(v);
                good_len = next;
            }
            Ok(_) => break,
            Err(_) if next >= bytes.len() => break,
            Err(e) => return Err(RunError::Log { path: path.to_path_buf(), line: line_no, message: e.to_string() }),
        }
        start = next;
    }
    if repair && good_len < bytes.len() {
        log::warn!("{}: dropping torn final line", path.display());
        let f = OpenOptions::new().write(true).open(path).map_err(io(path))?;
        f.set_len(good_len as u64).map_err(io(path))?;
    }
    Ok(out)
}

fn write_jsonl_sorted<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RunError> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it).expect("record serializes"));
        text.push('\n');
    }
    fs::write(&tmp, text).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

struct Logs {
    attempts: Mutex<File>,
    verdicts: Mutex<File>,
}

impl Logs {
    fn append(&self, rec: &AttemptRecord, v: &VerdictLine) -> std::io::Result<()> {
        let mut a = serde_json::to_string(rec).expect("record serializes");
        a.push('\n');
        let mut b = serde_json::to_string(v).expect("verdict serializes");
        b.push('\n');
        // verdict first: the attempt line is what marks the triple done
        {
            let mut f = self.verdicts.lock().expect("verdict log lock");
            f.write_all(b.as_bytes())?;
            f.flush()?;
        }
        let mut f = self.attempts.lock().expect("attempt log lock");
        f.write_all(a.as_bytes())?;
        f.flush()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_dir: PathBuf,
    /// Attempts executed in this invocation.
    pub executed: usize,
    /// Attempts found already complete.
    pub skipped: usize,
    /// False when stopped early by `max_new_attempts`.
    pub complete: bool,
}

/// Runtime pieces not persisted with the run.
pub struct RunContext<'a> {
    pub runner: &'a dyn Runner,
    pub patterns: &'a Patterns,
    /// Stop after this many new attempts (simulates an interruption).
    pub max_new_attempts: Option<usize>,
}

fn output_file(dir: &Path, model: &str, case: &TestCase, k: usize) -> PathBuf {
    dir.join(OUTPUTS_DIR)
        .join(sanitize(model))
        .join(sanitize(&case.case_id))
        .join(format!("attempt{k}.{}", case.group().extension()))
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Judges an executed attempt and assigns its error category.
pub fn finish_attempt(
    rec: &mut AttemptRecord,
    case: &TestCase,
    suite: &Suite,
    output: &Path,
    tol: &Tolerances<f64>,
    patterns: &Patterns,
) -> VerdictLine {
    rec.verdict = rec
        .execution
        .is_ok()
        .then(|| judge::judge_case(case, rec.attempt_index, output, &suite.expected_answer(case), tol));
    let c = classify::classify_with(patterns, &rec.execution, rec.verdict.as_ref());
    rec.error_category = c.as_ref().map(|c| c.category);
    VerdictLine {
        model_id: rec.model_id.clone(),
        case_id: rec.case_id.clone(),
        attempt_index: rec.attempt_index,
        verdict: rec.verdict.clone(),
        error_category: rec.error_category,
        category_reason: c.map(|c| c.reason).unwrap_or_default(),
    }
}

type Key = (String, String, usize);

fn key_of(r: &AttemptRecord) -> Key {
    (r.model_id.clone(), r.case_id.clone(), r.attempt_index)
}

/// Executes (or resumes) a run: every model × case × attempt, skipping
/// triples already present in the attempt log.
pub fn execute_run(home: &Path, cfg: &RunConfig, ctx: &RunContext<'_>) -> Result<RunStatus, RunError> {
    cfg.validate()?;
    let suite = crate::model::load_suite(&cfg.suite).map_err(|e| RunError::Config(e.to_string()))?;
    if suite.cases.is_empty() {
        return Err(RunError::Config(format!("{}: suite has no cases", cfg.suite.display())));
    }
    let dir = run_dir(home, &cfg.run_id);
    fs::create_dir_all(dir.join(REPORTS_DIR)).map_err(io(&dir))?;
    let run_file = dir.join(RUN_FILE);
    if let Ok(text) = fs::read_to_string(&run_file) {
        let old: RunConfig = serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", run_file.display())))?;
        if old.models != cfg.models || old.attempts != cfg.attempts || old.suite != cfg.suite || old.seed != cfg.seed {
            return Err(RunError::Config(format!(
                "run {} exists with different models, suite, attempts, or seed",
                cfg.run_id
            )));
        }
    }
    let mut cfg_text = serde_json::to_string_pretty(cfg).expect("config serializes");
    cfg_text.push('\n');
    fs::write(&run_file, cfg_text).map_err(io(&run_file))?;

    let attempts_path = dir.join(ATTEMPTS_FILE);
    let verdicts_path = dir.join(VERDICTS_FILE);
    let done_records: Vec<AttemptRecord> = read_jsonl(&attempts_path, true)?;
    read_jsonl::<VerdictLine>(&verdicts_path, true)?;
    let done: BTreeSet<Key> = done_records.iter().map(key_of).collect();

    let open = |p: &Path| OpenOptions::new().create(true).append(true).open(p).map_err(io(p));
    let logs = Logs { attempts: Mutex::new(open(&attempts_path)?), verdicts: Mutex::new(open(&verdicts_path)?) };

    let clients: Vec<Box<dyn ModelClient>> = cfg
        .models
        .iter()
        .map(|m| submission::client_for(m, cfg.seed))
        .collect::<Result<_, _>>()
        .map_err(RunError::Config)?;
    let exec = ExecSettings { timeout_s: cfg.timeout_s, backend: cfg.backend };

    let units: Vec<(usize, &TestCase)> =
        (0..cfg.models.len()).flat_map(|m| suite.cases.iter().map(move |c| (m, c))).collect();
    let executed = AtomicUsize::new(0);
    let skipped = AtomicUsize::new(0);
    let budget = ctx.max_new_attempts.unwrap_or(usize::MAX);
    let stopped = std::sync::atomic::AtomicBool::new(false);

    let run_unit = |&(m, case): &(usize, &TestCase)| -> Result<(), RunError> {
        let profile = &cfg.models[m];
        for k in 0..cfg.attempts {
            if done.contains(&(profile.model_id.clone(), case.case_id.clone(), k)) {
                skipped.fetch_add(1, Ordering::SeqCst);
                continue;
            }
            if executed.fetch_add(1, Ordering::SeqCst) >= budget {
                stopped.store(true, Ordering::SeqCst);
                return Ok(());
            }
            let out = output_file(&dir, &profile.model_id, case, k);
            if let Some(parent) = out.parent() {
                fs::create_dir_all(parent).map_err(io(parent))?;
            }
            let mut rec = submission::run_attempt(case, profile, clients[m].as_ref(), k, ctx.runner, out.clone(), &exec)?;
            let line = finish_attempt(&mut rec, case, &suite, &out, &cfg.tolerances, ctx.patterns);
            logs.append(&rec, &line).map_err(io(&attempts_path))?;
        }
        Ok(())
    };
    if cfg.concurrency > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.concurrency)
            .build()
            .map_err(|e| RunError::Config(e.to_string()))?;
        pool.install(|| units.par_iter().try_for_each(run_unit))?;
    } else {
        units.iter().try_for_each(run_unit)?;
    }
    drop(logs);

    let complete = !stopped.load(Ordering::SeqCst);
    let executed = executed.load(Ordering::SeqCst).min(budget);
    if complete {
        normalize_logs(&dir)?;
    }
    Ok(RunStatus { run_dir: dir, executed, skipped: skipped.load(Ordering::SeqCst), complete })
}

/// Rewrites both logs sorted by (model, case, attempt). Verdict lines
/// without an attempt record are dropped; for repeated verdict lines the
/// latest wins, since an earlier one belongs to an attempt that was cut
/// off before its record was written.
pub fn normalize_logs(dir: &Path) -> Result<(), RunError> {
    let ap = dir.join(ATTEMPTS_FILE);
    let vp = dir.join(VERDICTS_FILE);
    let mut recs: BTreeMap<Key, AttemptRecord> = BTreeMap::new();
    for r in read_jsonl::<AttemptRecord>(&ap, true)? {
        recs.entry(key_of(&r)).or_insert(r);
    }
    let mut verdicts: BTreeMap<Key, VerdictLine> = BTreeMap::new();
    for v in read_jsonl::<VerdictLine>(&vp, true)? {
        let k = (v.model_id.clone(), v.case_id.clone(), v.attempt_index);
        if recs.contains_key(&k) {
            verdicts.insert(k, v);
        }
    }
    write_jsonl_sorted(&ap, &recs.into_values().collect::<Vec<_>>())?;
    write_jsonl_sorted(&vp, &verdicts.into_values().collect::<Vec<_>>())
}

/// Loads the attempt log of a run.
pub fn load_attempts(dir: &Path) -> Result<Vec<AttemptRecord>, RunError> {
    let p = dir.join(ATTEMPTS_FILE);
    if !p.is_file() {
        return Err(RunError::Io {
            path: p,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no attempt log"),
        });
    }
    read_jsonl(&p, false)
}

pub fn load_config(dir: &Path) -> Result<RunConfig, RunError> {
    let p = dir.join(RUN_FILE);
    let text = fs::read_to_string(&p).map_err(io(&p))?;
    serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))
}
