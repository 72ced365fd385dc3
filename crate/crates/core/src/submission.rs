//! Prompting models for candidate solutions and recording each attempt.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::classify::ErrorCategory;
use crate::forge::{self, ApiDocEntry};
use crate::judge::Verdict;
use crate::model::TestCase;
use crate::pycode;
use crate::runner::{ExecStatus, ExecutionOutcome, Job, PlatformBackend, Runner, RunnerError};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;
/// Transport attempts before a backend error is recorded.
pub const BACKEND_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelBackend {
    HttpChat,
    LocalCommand,
    ScriptedStub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: String,
    pub backend: ModelBackend,
    /// URL, command line, or stub script name depending on `backend`.
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    /// Name sent in the request body; defaults to `model_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote_model: Option<String>,
    #[serde(default)]
    pub reasoning: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_OUTPUT_TOKENS
}

/// Names of the built-in scripted stubs.
pub const STUB_SCRIPTS: [&str; 5] = ["echo", "corrupt", "prose", "flaky", "forge"];

impl ModelProfile {
    pub fn stub(script: &str) -> Self {
        ModelProfile {
            model_id: format!("{script}-stub"),
            backend: ModelBackend::ScriptedStub,
            endpoint: script.to_string(),
            auth_env_var: None,
            remote_model: None,
            reasoning: false,
            temperature: None,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    /// Built-in profile for ids of the form `<script>-stub`.
    pub fn builtin(model_id: &str) -> Option<Self> {
        let script = model_id.strip_suffix("-stub")?;
        STUB_SCRIPTS.contains(&script).then(|| Self::stub(script))
    }

    /// Temperature actually sent: none for reasoning models, else the
    /// configured value or the default.
    pub fn effective_temperature(&self) -> Option<f64> {
        if self.reasoning {
            None
        } else {
            Some(self.temperature.unwrap_or(DEFAULT_TEMPERATURE))
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model_id.trim().is_empty() {
            return Err("model_id is empty".into());
        }
        if self.max_output_tokens == 0 {
            return Err(format!("{}: max_output_tokens must be positive", self.model_id));
        }
        if self.reasoning && self.temperature.is_some() {
            return Err(format!("{}: reasoning models take no temperature", self.model_id));
        }
        if self.backend == ModelBackend::ScriptedStub && !STUB_SCRIPTS.contains(&self.endpoint.as_str()) {
            return Err(format!("{}: unknown stub script {:?}", self.model_id, self.endpoint));
        }
        if self.endpoint.trim().is_empty() {
            return Err(format!("{}: endpoint is empty", self.model_id));
        }
        Ok(())
    }
}

/// Reads a JSON array of profiles.
pub fn load_profiles(path: &Path) -> Result<Vec<ModelProfile>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let profiles: Vec<ModelProfile> = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    for p in &profiles {
        p.validate()?;
    }
    Ok(profiles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn for_profile(p: &ModelProfile, prompt: &str) -> Self {
        ChatRequest {
            model: p.remote_model.clone().unwrap_or_else(|| p.model_id.clone()),
            messages: vec![ChatMessage { role: "user".into(), content: prompt.to_string() }],
            temperature: p.effective_temperature(),
            max_tokens: p.max_output_tokens,
        }
    }
}

/// What the client is asked to produce.
#[derive(Debug, Clone, Copy)]
pub enum Subject<'a> {
    Case(&'a TestCase),
    Doc(&'a ApiDocEntry),
}

#[derive(Debug, Clone, Copy)]
pub struct GenerationContext<'a> {
    pub prompt: &'a str,
    pub subject: Subject<'a>,
    pub attempt_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("backend error: {0}")]
pub struct BackendError(pub String);

pub trait ModelClient: Send + Sync {
    fn complete(&self, ctx: &GenerationContext<'_>) -> Result<Completion, BackendError>;
}

/// Builds the client a profile describes.
pub fn client_for(p: &ModelProfile, seed: u64) -> Result<Box<dyn ModelClient>, String> {
    p.validate()?;
    Ok(match p.backend {
        ModelBackend::HttpChat => Box::new(HttpChatClient::new(p.clone())?),
        ModelBackend::LocalCommand => Box::new(LocalCommandClient::new(&p.endpoint)?),
        ModelBackend::ScriptedStub => Box::new(StubClient::new(&p.endpoint, seed)?),
    })
}

pub struct HttpChatClient {
    profile: ModelProfile,
    http: reqwest::blocking::Client,
    token: Option<String>,
    backoff: Duration,
}

impl HttpChatClient {
    pub fn new(profile: ModelProfile) -> Result<Self, String> {
        let token = match &profile.auth_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(HttpChatClient { profile, http, token, backoff: Duration::from_millis(500) })
    }

    pub fn with_backoff(mut self, d: Duration) -> Self {
        self.backoff = d;
        self
    }

    fn send(&self, body: &ChatRequest) -> Result<Value, (bool, String)> {
        let mut req = self.http.post(&self.profile.endpoint).json(body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retry = status.is_server_error() || status.as_u16() == 429;
            let text = resp.text().unwrap_or_default();
            return Err((retry, format!("HTTP {status}: {}", text.chars().take(300).collect::<String>())));
        }
        resp.json::<Value>().map_err(|e| (false, e.to_string()))
    }
}

/// Pulls text and usage out of a chat-completions response.
pub fn parse_chat_response(v: &Value) -> Result<Completion, BackendError> {
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError("response has no choices[0].message.content".into()))?;
    let usage = |k: &str| v.get("usage").and_then(|u| u.get(k)).and_then(Value::as_u64);
    Ok(Completion {
        text: text.to_string(),
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
    })
}

impl ModelClient for HttpChatClient {
    fn complete(&self, ctx: &GenerationContext<'_>) -> Result<Completion, BackendError> {
        let body = ChatRequest::for_profile(&self.profile, ctx.prompt);
        let mut last = String::new();
        for attempt in 0..BACKEND_ATTEMPTS {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.send(&body) {
                Ok(v) => return parse_chat_response(&v),
                Err((retry, msg)) => {
                    log::warn!("{}: attempt {} failed: {msg}", self.profile.model_id, attempt + 1);
                    last = msg;
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(BackendError(last))
    }
}

/// Prompt on standard input, response on standard output.
pub struct LocalCommandClient {
    program: String,
    args: Vec<String>,
}

impl LocalCommandClient {
    pub fn new(cmd: &str) -> Result<Self, String> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next().ok_or("empty command")?;
        Ok(LocalCommandClient { program, args: parts.collect() })
    }
}

impl ModelClient for LocalCommandClient {
    fn complete(&self, ctx: &GenerationContext<'_>) -> Result<Completion, BackendError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| BackendError(format!("{}: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("piped");
        let prompt = ctx.prompt.to_string();
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(prompt.as_bytes());
        });
        let mut out = String::new();
        child.stdout.take().expect("piped").read_to_string(&mut out).map_err(|e| BackendError(e.to_string()))?;
        let _ = writer.join();
        let status = child.wait().map_err(|e| BackendError(e.to_string()))?;
        if !status.success() {
            let mut err = String::new();
            if let Some(mut e) = child.stderr.take() {
                let _ = e.read_to_string(&mut err);
            }
            return Err(BackendError(format!("{} exited with {status}: {}", self.program, err.trim())));
        }
        Ok(Completion { text: out, prompt_tokens: None, completion_tokens: None })
    }
}

/// Deterministic offline "models".
///
/// `echo` returns the reference code, `corrupt` the reference code with its
/// first numeric literal incremented, `prose` a refusal, `flaky` picks echo
/// or corrupt from a seeded generator, and `forge` writes a forge response
/// for a documentation entry.
pub struct StubClient {
    script: String,
    seed: u64,
}

impl StubClient {
    pub fn new(script: &str, seed: u64) -> Result<Self, String> {
        if !STUB_SCRIPTS.contains(&script) {
            return Err(format!("unknown stub script {script:?}"));
        }
        Ok(StubClient { script: script.to_string(), seed })
    }

    fn coin(&self, case_id: &str, attempt: usize) -> bool {
        // FNV-1a over the case id keeps draws independent of scheduling order
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in case_id.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ h ^ (attempt as u64).rotate_left(32));
        rng.gen_bool(0.5)
    }
}

fn fenced(code: &str) -> String {
    format!("```python\n{}\n```\n", code.trim_end())
}

impl ModelClient for StubClient {
    fn complete(&self, ctx: &GenerationContext<'_>) -> Result<Completion, BackendError> {
        let text = match (self.script.as_str(), ctx.subject) {
            ("prose", _) => "I cannot help with that.".to_string(),
            ("echo", Subject::Case(c)) => fenced(&c.reference_code),
            ("corrupt", Subject::Case(c)) => fenced(&corrupt_reference(&c.reference_code)),
            ("flaky", Subject::Case(c)) => {
                if self.coin(&c.case_id, ctx.attempt_index) {
                    fenced(&c.reference_code)
                } else {
                    fenced(&corrupt_reference(&c.reference_code))
                }
            }
            ("forge", Subject::Doc(d)) => forge::stub_response(d),
            (s, _) => return Err(BackendError(format!("stub {s:?} cannot answer this request"))),
        };
        Ok(Completion { text, prompt_tokens: None, completion_tokens: None })
    }
}

/// Increments the first numeric literal after the header and docstring.
/// Sources without one are returned with `+ 1` appended to the last return.
pub fn corrupt_reference(code: &str) -> String {
    let (header, body) = pycode::split_header_body(code).unwrap_or_default();
    let offset = if header.is_empty() { 0 } else { header.len() + 1 };
    if let Some(r) = first_numeric_literal(&body) {
        let lit = &body[r.clone()];
        let bumped = if let Some((_, frac)) = lit.split_once('.') {
            let v: f64 = lit.parse().unwrap_or(0.0);
            format!("{:.*}", frac.len().max(1), v + 1.0)
        } else {
            (lit.parse::<i128>().unwrap_or(0) + 1).to_string()
        };
        let at = offset + r.start;
        return format!("{}{}{}", &code[..at], bumped, &code[offset + r.end..]);
    }
    match code.rfind("return ") {
        Some(p) => {
            let end = code[p..].find('\n').map_or(code.len(), |e| p + e);
            format!("{} + 1{}", &code[..end], &code[end..])
        }
        None => code.to_string(),
    }
}

/// Byte range of the first decimal literal that is not part of an
/// identifier, attribute, or string.
fn first_numeric_literal(src: &str) -> Option<std::ops::Range<usize>> {
    let b = src.as_bytes();
    let mut quote: Option<u8> = None;
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if let Some(q) = quote {
            if c == b'\\' {
                i += 2;
                continue;
            }
            if c == q {
                quote = None;
            }
            i += 1;
            continue;
        }
        match c {
            b'\'' | b'"' => quote = Some(c),
            b'#' => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'0'..=b'9' => {
                let prev = if i == 0 { b' ' } else { b[i - 1] };
                if prev.is_ascii_alphanumeric() || prev == b'_' || prev == b'.' {
                    while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                        i += 1;
                    }
                    continue;
                }
                let start = i;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                if i + 1 < b.len() && b[i] == b'.' && b[i + 1].is_ascii_digit() {
                    i += 1;
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                return Some(start..i);
            }
            _ => {}
        }
        i += 1;
    }
    None
}

const SUBMISSION_TEMPLATE: &str = "Please write the complete GEE Python API function based on the provided function header. \
Only return the function body without any explanations, comments, or additional text. \
The function must use the specified parameters and produce the expected output. \
Ensure that no extra content is included, and do not modify the function signature or docstring. \
Here's the function header and the relevant information:\n\n";

/// The submission prompt: fixed instructions followed by the function header.
pub fn build_submission_prompt(c: &TestCase) -> String {
    format!("{SUBMISSION_TEMPLATE}{}", c.function_header)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("NoCode: no code block or function definition in the response")]
pub struct NoCode;

/// The first fenced block, else the longest function-definition region.
pub fn extract_function_body(response: &str) -> Result<String, NoCode> {
    if let Some(block) = first_fenced_block(response) {
        if !block.trim().is_empty() {
            return Ok(block);
        }
    }
    pycode::function_regions(response)
        .into_iter()
        .max_by_key(|r| (r.len(), std::cmp::Reverse(r.start)))
        .map(|r| response[r].trim_end().to_string())
        .ok_or(NoCode)
}

fn first_fenced_block(s: &str) -> Option<String> {
    let open = s.find("```")?;
    let rest = &s[open + 3..];
    let nl = rest.find('\n')?;
    let body = &rest[nl + 1..];
    let close = body.find("```").unwrap_or(body.len());
    Some(body[..close].trim_end().to_string())
}

/// Default comment markers for line counting.
pub const COMMENT_MARKERS: [&str; 2] = ["#", "//"];

/// Non-blank lines that do not start with a comment marker.
pub fn count_code_lines(body: &str) -> usize {
    count_code_lines_with(body, &COMMENT_MARKERS)
}

pub fn count_code_lines_with(body: &str, markers: &[&str]) -> usize {
    body.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !markers.iter().any(|m| l.starts_with(m)))
        .count()
}

/// Non-blank lines, comments included.
pub fn count_lines_with_comments(body: &str) -> usize {
    body.lines().filter(|l| !l.trim().is_empty()).count()
}

/// Fallback token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub model_id: String,
    pub case_id: String,
    pub attempt_index: usize,
    pub candidate_code: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub tokens_estimated: bool,
    pub inference_time_s: f64,
    pub code_line_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
    pub execution: ExecutionOutcome,
    #[serde(default)]
    pub verdict: Option<Verdict>,
    #[serde(default)]
    pub error_category: Option<ErrorCategory>,
}

impl AttemptRecord {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn passed(&self) -> bool {
        crate::classify::attempt_passed(&self.execution, self.verdict.as_ref())
    }

    pub fn validate(&self, n: usize) -> Result<(), String> {
        if self.attempt_index >= n {
            return Err(format!("attempt_index {} >= {n}", self.attempt_index));
        }
        if !(self.inference_time_s >= 0.0) {
            return Err("negative inference_time_s".into());
        }
        self.execution.validate()
    }
}

/// Execution settings shared by every attempt of a run.
#[derive(Debug, Clone)]
pub struct ExecSettings {
    pub timeout_s: f64,
    pub backend: PlatformBackend,
}

/// Generates, extracts, and executes one attempt. Judging is left to the
/// caller. Only an unreachable runner is an error.
pub fn run_attempt(
    case: &TestCase,
    profile: &ModelProfile,
    client: &dyn ModelClient,
    attempt_index: usize,
    runner: &dyn Runner,
    output_path: PathBuf,
    exec: &ExecSettings,
) -> Result<AttemptRecord, RunnerError> {
    let prompt = build_submission_prompt(case);
    let ctx = GenerationContext { prompt: &prompt, subject: Subject::Case(case), attempt_index };
    let start = Instant::now();
    let reply = client.complete(&ctx);
    let inference_time_s = start.elapsed().as_secs_f64();
    let mut rec = AttemptRecord {
        model_id: profile.model_id.clone(),
        case_id: case.case_id.clone(),
        attempt_index,
        candidate_code: String::new(),
        prompt_tokens: 0,
        completion_tokens: 0,
        tokens_estimated: true,
        inference_time_s,
        code_line_count: 0,
        backend_error: None,
        execution: ExecutionOutcome::failure(ExecStatus::Exception, ""),
        verdict: None,
        error_category: None,
    };
    let completion = match reply {
        Ok(c) => c,
        Err(e) => {
            rec.prompt_tokens = estimate_tokens(&prompt);
            rec.backend_error = Some(e.0.clone());
            rec.execution = ExecutionOutcome::failure(ExecStatus::Exception, e.to_string());
            return Ok(rec);
        }
    };
    rec.tokens_estimated = completion.prompt_tokens.is_none() || completion.completion_tokens.is_none();
    rec.prompt_tokens = completion.prompt_tokens.unwrap_or_else(|| estimate_tokens(&prompt));
    rec.completion_tokens = completion.completion_tokens.unwrap_or_else(|| estimate_tokens(&completion.text));
    let body = match extract_function_body(&completion.text) {
        Ok(b) => b,
        Err(e) => {
            rec.execution = ExecutionOutcome::failure(ExecStatus::Exception, format!("SyntaxError: {e}"));
            return Ok(rec);
        }
    };
    rec.code_line_count = count_code_lines(&body);
    rec.candidate_code = if pycode::has_function_definition(&body) {
        body
    } else {
        pycode::attach_body(&case.function_header, &body)
    };
    let _ = std::fs::remove_file(&output_path);
    let job = Job::for_case(case, rec.candidate_code.clone(), output_path, exec.timeout_s, exec.backend);
    rec.execution = runner.execute(&job)?;
    Ok(rec)
}

/// `n` sequential attempts for one case.
pub fn run_attempts(
    case: &TestCase,
    profile: &ModelProfile,
    client: &dyn ModelClient,
    n: usize,
    runner: &dyn Runner,
    output_path: impl Fn(usize) -> PathBuf,
    exec: &ExecSettings,
) -> Result<Vec<AttemptRecord>, RunnerError> {
    (0..n)
        .map(|k| run_attempt(case, profile, client, k, runner, output_path(k), exec))
        .collect()
}

/// Request preview used by `--dry-run` style diagnostics.
pub fn request_preview(p: &ModelProfile, prompt: &str) -> Value {
    json!(ChatRequest::for_profile(p, prompt))
}
