//! Orchestrator side of the execution protocol.
//!
//! A runner process receives one JSON [`Job`] on standard input, executes the
//! candidate function against the platform (live or stubbed), writes the
//! value document to `output_path`, and answers with one JSON
//! [`ExecutionOutcome`] on standard output.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{OutputType, ParameterSpec, TestCase, ValueGroup};

pub const DEFAULT_TIMEOUT_S: f64 = 300.0;
pub const MAX_RETRIES: u32 = 3;
/// Slack on top of the job timeout before the process is killed.
pub const KILL_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlatformBackend {
    Live,
    #[default]
    Mock,
}

/// One execution request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub case_id: String,
    pub candidate_code: String,
    /// Function to call inside `candidate_code`.
    pub entry_point: String,
    pub parameters: Vec<ParameterSpec>,
    pub output_type: OutputType,
    /// Serialization group of `output_type`.
    pub value_group: ValueGroup,
    pub output_path: PathBuf,
    pub timeout_s: f64,
    pub backend: PlatformBackend,
}

impl Job {
    pub fn for_case(
        case: &TestCase,
        candidate_code: String,
        output_path: PathBuf,
        timeout_s: f64,
        backend: PlatformBackend,
    ) -> Self {
        let entry_point = case
            .function_name()
            .or_else(|| crate::pycode::entry_point(&candidate_code))
            .unwrap_or_default();
        Job {
            case_id: case.case_id.clone(),
            candidate_code,
            entry_point,
            parameters: case.parameters.clone(),
            output_type: case.output_type,
            value_group: case.group(),
            output_path,
            timeout_s,
            backend,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_s > 0.0) {
            return Err(format!("timeout_s must be positive, got {}", self.timeout_s));
        }
        if self.entry_point.is_empty() {
            return Err("entry_point is empty".into());
        }
        if self.output_path.as_os_str().is_empty() {
            return Err("output_path is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecStatus {
    Ok,
    Exception,
    Timeout,
    ProtocolError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    #[serde(default)]
    pub error_message: String,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub wall_time_s: f64,
    #[serde(default)]
    pub output_written: bool,
    #[serde(default)]
    pub retry_count: u32,
}

impl ExecutionOutcome {
    pub fn failure(status: ExecStatus, message: impl Into<String>) -> Self {
        ExecutionOutcome {
            status,
            error_message: message.into(),
            stdout: String::new(),
            stderr: String::new(),
            wall_time_s: 0.0,
            output_written: false,
            retry_count: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    /// Checks the outcome invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.output_written && self.status != ExecStatus::Ok {
            return Err(format!("output_written with status {:?}", self.status));
        }
        if self.retry_count > MAX_RETRIES {
            return Err(format!("retry_count {} exceeds {MAX_RETRIES}", self.retry_count));
        }
        if !(self.wall_time_s >= 0.0) {
            return Err("negative wall_time_s".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("runner unavailable: {0}")]
    Unavailable(String),
}

/// Executes jobs. Per-job failures are outcomes, not errors; `Err` means the
/// backend itself cannot be reached.
pub trait Runner: Send + Sync {
    fn execute(&self, job: &Job) -> Result<ExecutionOutcome, RunnerError>;
}

/// Spawns one process per job and speaks the JSON protocol over its
/// standard streams.
#[derive(Debug, Clone)]
pub struct SubprocessRunner {
    program: String,
    args: Vec<String>,
    grace: Duration,
}

impl SubprocessRunner {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self { program: program.into(), args, grace: KILL_GRACE }
    }

    /// Splits a command line on whitespace.
    pub fn from_command_line(cmd: &str) -> Result<Self, RunnerError> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| RunnerError::Unavailable("empty runner command".into()))?;
        Ok(Self::new(program, parts.collect()))
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    /// Confirms the program can be spawned at all.
    pub fn probe(&self) -> Result<(), RunnerError> {
        Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .and_then(|mut c| {
                let _ = c.kill();
                c.wait()
            })
            .map(|_| ())
            .map_err(|e| RunnerError::Unavailable(format!("{}: {e}", self.program)))
    }
}

/// Reads a stream to the end on a helper thread.
struct Drain(mpsc::Receiver<String>);

impl Drain {
    fn start<R: Read + Send + 'static>(r: Option<R>) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut buf = Vec::new();
            if let Some(mut r) = r {
                let _ = r.read_to_end(&mut buf);
            }
            let _ = tx.send(String::from_utf8_lossy(&buf).into_owned());
        });
        Drain(rx)
    }

    /// Grandchildren may hold the pipe open after a kill, so a killed
    /// runner's streams are only awaited briefly.
    fn finish(self, wait: Option<Duration>) -> String {
        match wait {
            None => self.0.recv().unwrap_or_default(),
            Some(d) => self.0.recv_timeout(d).unwrap_or_default(),
        }
    }
}

#[cfg(unix)]
fn own_process_group(cmd: &mut Command) {
    use std::os::unix::process::CommandExt;
    cmd.process_group(0);
}

#[cfg(not(unix))]
fn own_process_group(_: &mut Command) {}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // the child leads its own group (see own_process_group)
        if let Ok(pgid) = libc::pid_t::try_from(child.id()) {
            if pgid > 1 {
                unsafe {
                    libc::killpg(pgid, libc::SIGKILL);
                }
            }
        }
    }
    let _ = child.kill();
}

impl Runner for SubprocessRunner {
    fn execute(&self, job: &Job) -> Result<ExecutionOutcome, RunnerError> {
        if let Err(e) = job.validate() {
            return Ok(ExecutionOutcome::failure(ExecStatus::ProtocolError, format!("malformed job: {e}")));
        }
        let payload = serde_json::to_vec(job).expect("job serializes");
        let start = Instant::now();
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
        own_process_group(&mut cmd);
        let mut child = cmd
            .spawn()
            .map_err(|e| RunnerError::Unavailable(format!("{}: {e}", self.program)))?;
        let out = Drain::start(child.stdout.take());
        let err = Drain::start(child.stderr.take());
        if let Some(mut stdin) = child.stdin.take() {
            // a runner that exits early closes the pipe; that shows up below
            let _ = stdin.write_all(&payload);
        }
        let deadline = Duration::from_secs_f64(job.timeout_s) + self.grace;
        let mut killed = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(s)) => break Some(s),
                Ok(None) if start.elapsed() >= deadline => {
                    kill_tree(&mut child);
                    killed = true;
                    break child.wait().ok();
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(_) => break None,
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        let wait = killed.then_some(self.grace);
        let stdout = out.finish(wait);
        let stderr = err.finish(wait);

        if killed {
            let _ = std::fs::remove_file(&job.output_path);
            let mut o = ExecutionOutcome::failure(
                ExecStatus::Timeout,
                format!("execution exceeded {}s and was killed", job.timeout_s),
            );
            o.stderr = stderr;
            o.wall_time_s = elapsed;
            return Ok(o);
        }
        let protocol = |msg: String, stdout: String, stderr: String| {
            let mut o = ExecutionOutcome::failure(ExecStatus::ProtocolError, msg);
            o.stdout = stdout;
            o.stderr = stderr;
            o.wall_time_s = elapsed;
            o
        };
        match status {
            Some(s) if s.success() => {}
            Some(s) => return Ok(protocol(format!("runner exited with {s}"), stdout, stderr)),
            None => return Ok(protocol("runner status unavailable".into(), stdout, stderr)),
        }
        let line = stdout.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        match serde_json::from_str::<ExecutionOutcome>(line) {
            Ok(o) => match o.validate() {
                Ok(()) => Ok(o),
                Err(e) => Ok(protocol(format!("invalid outcome: {e}"), stdout, stderr)),
            },
            Err(e) => Ok(protocol(format!("unparseable outcome: {e}"), stdout, stderr)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParameterSpec;
    use serde_json::json;

    fn job(dir: &std::path::Path) -> Job {
        Job {
            case_id: "c".into(),
            candidate_code: "def f():\n    return 7\n".into(),
            entry_point: "f".into(),
            parameters: vec![ParameterSpec::literal("x", json!(1))],
            output_type: OutputType::Number,
            value_group: ValueGroup::Number,
            output_path: dir.join("out.txt"),
            timeout_s: 5.0,
            backend: PlatformBackend::Mock,
        }
    }

    fn sh(script: &str) -> SubprocessRunner {
        SubprocessRunner::new("sh", vec!["-c".into(), script.into()])
    }

    #[test]
    fn wire_format_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let v = serde_json::to_value(job(dir.path())).unwrap();
        assert_eq!(v["output_type"], "ee.Number");
        assert_eq!(v["value_group"], "NUMBER");
        assert_eq!(v["backend"], "MOCK");
        assert_eq!(v["parameters"][0]["kind"], "LITERAL");
        assert_eq!(v["parameters"][0]["literal_value"], 1);
    }

    #[test]
    fn parses_outcome_from_stdout() {
        let dir = tempfile::tempdir().unwrap();
        let r = sh(r#"cat >/dev/null; echo '{"status":"OK","output_written":true,"wall_time_s":0.1}'"#);
        let o = r.execute(&job(dir.path())).unwrap();
        assert_eq!(o.status, ExecStatus::Ok);
        assert!(o.output_written);
    }

    #[test]
    fn nonzero_exit_is_protocol_error() {
        let dir = tempfile::tempdir().unwrap();
        let o = sh("cat >/dev/null; echo boom >&2; exit 3").execute(&job(dir.path())).unwrap();
        assert_eq!(o.status, ExecStatus::ProtocolError);
        assert!(o.stderr.contains("boom"));
    }

    #[test]
    fn garbage_and_inconsistent_outcomes_are_protocol_errors() {
        let dir = tempfile::tempdir().unwrap();
        let o = sh("cat >/dev/null; echo not-json").execute(&job(dir.path())).unwrap();
        assert_eq!(o.status, ExecStatus::ProtocolError);
        let o = sh(r#"cat >/dev/null; echo '{"status":"EXCEPTION","output_written":true}'"#)
            .execute(&job(dir.path()))
            .unwrap();
        assert_eq!(o.status, ExecStatus::ProtocolError);
        let o = sh(r#"cat >/dev/null; echo '{"status":"EXCEPTION","retry_count":4}'"#)
            .execute(&job(dir.path()))
            .unwrap();
        assert_eq!(o.status, ExecStatus::ProtocolError);
    }

    #[test]
    fn kills_after_timeout_plus_grace() {
        let dir = tempfile::tempdir().unwrap();
        let mut j = job(dir.path());
        j.timeout_s = 0.2;
        let r = sh("cat >/dev/null; sleep 30").with_grace(Duration::from_millis(100));
        let o = r.execute(&j).unwrap();
        assert_eq!(o.status, ExecStatus::Timeout);
        assert!(o.wall_time_s >= 0.2 && o.wall_time_s < 5.0, "{}", o.wall_time_s);
    }

    #[test]
    fn malformed_job_never_spawns() {
        let dir = tempfile::tempdir().unwrap();
        let mut j = job(dir.path());
        j.timeout_s = 0.0;
        let r = SubprocessRunner::new("/nonexistent/runner", vec![]);
        assert_eq!(r.execute(&j).unwrap().status, ExecStatus::ProtocolError);
        j.timeout_s = 1.0;
        assert!(matches!(r.execute(&j), Err(RunnerError::Unavailable(_))));
    }
}
