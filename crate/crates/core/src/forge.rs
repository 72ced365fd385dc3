//! Drafting test cases from API documentation entries and materializing
//! their expected answers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{self, OutputType, Suite, TestCase};
use crate::pycode;
use crate::runner::{ExecStatus, Job, PlatformBackend, Runner, RunnerError};
use crate::submission::{GenerationContext, ModelClient, Subject};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiParam {
    pub name: String,
    #[serde(rename = "type")]
    pub type_name: String,
    #[serde(default)]
    pub details: String,
}

/// One documentation page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiDocEntry {
    #[serde(rename = "name")]
    pub operator_name: String,
    #[serde(default)]
    pub explanation: String,
    #[serde(rename = "params", default)]
    pub parameters: Vec<ApiParam>,
    #[serde(rename = "returns", default)]
    pub return_type: String,
    #[serde(rename = "examples", default, skip_serializing_if = "Option::is_none")]
    pub usage_examples: Option<String>,
}

impl ApiDocEntry {
    pub fn validate(&self) -> Result<(), String> {
        if self.operator_name.trim().is_empty() {
            return Err("operator name is empty".into());
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(format!("{}: parameter {:?} listed twice", self.operator_name, p.name));
            }
        }
        Ok(())
    }
}

/// Reads a JSON array of entries (a single object is accepted too).
pub fn load_doc_entries(path: &Path) -> Result<Vec<ApiDocEntry>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let entries: Vec<ApiDocEntry> = match v {
        Value::Array(_) => serde_json::from_value(v),
        other => serde_json::from_value(other).map(|e| vec![e]),
    }
    .map_err(|e| format!("{}: {e}", path.display()))?;
    for e in &entries {
        e.validate()?;
    }
    Ok(entries)
}

const FORGE_TEMPLATE: &str = r#"## Task Description
You need to generate standard test code and configuration file entries for a given Google Earth Engine (GEE) Python API operator. Each operator will have two parts: the standard code and the test cases in the configuration file.

### Input
1. **Operator Name**: Name of the operator
2. **Explanation**: The explanation of the operator about what it does
3. **Parameter List**: List of parameters with their types and descriptions. For example, `image` (ee.Image): The input image
4. **Return Type**: The return type of the operator

### Output
1. **Standard Code**: Define a function that uses the given operator and returns the result. The function name should be (Data Type+ operator name + Task). For example, `ee.Image.NormalizedDifference`->`imageNormalizedDifferenceTask`.
2. **Test Cases in Configuration File**: Include multiple test cases, each with parameters, expected answer path, and output type.

### GEE objects in params
1.If the parameter is an GEE object(e.g. ee.Image, ee.Number, etc), use the following format in the configuration file to return the object with python:
param_name: !python |
    def get_ee_object():
        import ee
        ee.Initialize()
        # then get and return the wanted object
2.Notice that some operators may require specific GEE objects as input. e.g. `ee.Array.CholoskyDecomposition` requires a positive definite ee.Array matrix.

### Output Type
1. The output type can be one of the following:
GEE objects:
"ee.Image", "ee.FeatureCollection", "ee.Number", "ee.List", "ee.Dictionary", "ee.Geometry", "ee.Array", "ee.ImageArray"
Python objects:
"str", "int", "float", "bool", "list", "dict", "NoneType"
2. You can use other types if needed.

### Expected answer
1. The value of the "expected_answer" field in the configuration file MUST be the path to the file containing the expected output.
2. The file name should be (function name + "_testcase" + testcase_number), file type should be .npz for images and arrays, .geojson for geometry or feature objects, .txt for other types.

### Note
1. The function should just include ONE operator and return the result. They are used for automatic testing.
2. If the output is a GEE object, do NOT perform getInfo() function. Just return the object.
3. Use the given operator for your answer, do NOT use other methods or operators to solve the task.
4. Any import statements, initialization statements or example usages are NOT needed.
5. Do NOT add any explanation.

### Operator Information
Here is the operator information:
"#;

/// The forging prompt with the entry's information appended.
pub fn build_forge_prompt(e: &ApiDocEntry) -> String {
    let mut s = String::from(FORGE_TEMPLATE);
    s.push_str(&format!("Operator Name: {}\n", e.operator_name));
    s.push_str(&format!("Explanation: {}\n", e.explanation.trim()));
    s.push_str("Parameter List:\n");
    for p in &e.parameters {
        s.push_str(&format!("- `{}` ({}): {}\n", p.name, p.type_name, p.details.trim()));
    }
    s.push_str(&format!("Return Type: {}\n", e.return_type));
    if let Some(ex) = e.usage_examples.as_deref().filter(|x| !x.trim().is_empty()) {
        s.push_str(&format!("Usage Examples:\n{}\n", ex.trim_end()));
    }
    s
}

/// `ee.Image.NormalizedDifference` becomes `imageNormalizedDifferenceTask`.
pub fn expected_function_name(operator: &str) -> String {
    let trimmed = operator.strip_prefix("ee.").unwrap_or(operator);
    let mut out = String::new();
    for (i, seg) in trimmed.split('.').filter(|s| !s.is_empty()).enumerate() {
        let mut chars = seg.chars();
        if let Some(first) = chars.next() {
            if i == 0 {
                out.extend(first.to_lowercase());
            } else {
                out.extend(first.to_uppercase());
            }
            out.push_str(chars.as_str());
        }
    }
    out.retain(|c| c.is_ascii_alphanumeric() || c == '_');
    out.push_str("Task");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
    Revised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MaterializeStatus {
    Ok,
    Failed,
    /// Left alone because the draft is accepted and its answer exists.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseStatus {
    pub case_id: String,
    pub status: MaterializeStatus,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeDraft {
    pub operator_name: String,
    pub function_name: String,
    pub reference_code: String,
    pub cases: Vec<TestCase>,
    pub review_status: ReviewStatus,
    /// Parse or constraint problems; a draft with issues has no cases.
    #[serde(default)]
    pub issues: Vec<String>,
    #[serde(default)]
    pub materialization: Vec<CaseStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintViolation {
    Explanation,
    Import,
    Initialization,
    MultipleOperators,
    FunctionName,
}

impl ConstraintViolation {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintViolation::Explanation => "explanation",
            ConstraintViolation::Import => "import",
            ConstraintViolation::Initialization => "initialization",
            ConstraintViolation::MultipleOperators => "multiple operators",
            ConstraintViolation::FunctionName => "function name",
        }
    }
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForgeError {
    #[error("missing {0} block")]
    MissingBlock(&'static str),
    #[error("bad configuration block: {0}")]
    Config(String),
    #[error("constraint violation: {}", .0.iter().map(|v| v.name()).collect::<Vec<_>>().join(", "))]
    Constraint(Vec<ConstraintViolation>),
}

struct Block<'a> {
    lang: &'a str,
    body: &'a str,
}

/// Fenced blocks and the text outside them.
fn split_fences(s: &str) -> (Vec<Block<'_>>, String) {
    let mut blocks = Vec::new();
    let mut outside = String::new();
    let mut rest = s;
    while let Some(open) = rest.find("```") {
        outside.push_str(&rest[..open]);
        let after = &rest[open + 3..];
        let nl = after.find('\n').unwrap_or(after.len());
        let lang = after[..nl].trim();
        let inner = &after[(nl + 1).min(after.len())..];
        match inner.find("```") {
            Some(close) => {
                blocks.push(Block { lang, body: &inner[..close] });
                rest = &inner[close + 3..];
            }
            None => {
                blocks.push(Block { lang, body: inner });
                rest = "";
            }
        }
    }
    outside.push_str(rest);
    (blocks, outside)
}

fn is_code_block(b: &Block<'_>) -> bool {
    matches!(b.lang, "python" | "py") || (b.lang.is_empty() && pycode::has_function_definition(b.body))
}

/// Splits a forge response into reference code and cases. When
/// `expected_name` is given the function must carry that name.
pub fn parse_forge_response(r: &str, expected_name: Option<&str>) -> Result<ForgeDraft, ForgeError> {
    let (blocks, outside) = split_fences(r);
    let code = blocks.iter().find(|b| is_code_block(b)).ok_or(ForgeError::MissingBlock("code"))?;
    let config = blocks
        .iter()
        .find(|b| !is_code_block(b))
        .ok_or(ForgeError::MissingBlock("configuration"))?;

    let mut violations = Vec::new();
    if !outside.trim().is_empty() || blocks.iter().filter(|b| is_code_block(b)).count() > 1 {
        violations.push(ConstraintViolation::Explanation);
    }
    let lines: Vec<&str> = code.body.lines().map(str::trim).collect();
    if lines.iter().any(|l| l.starts_with("import ") || (l.starts_with("from ") && l.contains(" import "))) {
        violations.push(ConstraintViolation::Import);
    }
    if lines.iter().any(|l| l.contains("ee.Initialize(") || l.contains("ee.Authenticate(")) {
        violations.push(ConstraintViolation::Initialization);
    }
    let defs = pycode::top_level_functions(code.body);
    if defs.len() > 1 {
        violations.push(ConstraintViolation::MultipleOperators);
    }
    let function_name = defs.first().cloned().unwrap_or_default();
    if let Some(want) = expected_name {
        if function_name != want {
            violations.push(ConstraintViolation::FunctionName);
        }
    }
    if !violations.is_empty() {
        return Err(ForgeError::Constraint(violations));
    }
    let reference_code = format!("{}\n", code.body.trim_end());
    let (header, _) = pycode::split_header_body(&reference_code).ok_or(ForgeError::MissingBlock("code"))?;
    let cases = parse_config(config.body, &header, &reference_code)?;
    Ok(ForgeDraft {
        operator_name: String::new(),
        function_name,
        reference_code,
        cases,
        review_status: ReviewStatus::Pending,
        issues: Vec::new(),
        materialization: Vec::new(),
    })
}

/// Accepts a list of case mappings, optionally under a single function-name key.
fn parse_config(text: &str, header: &str, reference_code: &str) -> Result<Vec<TestCase>, ForgeError> {
    use serde_yaml::Value as Y;
    let doc: Y = serde_yaml::from_str(text).map_err(|e| ForgeError::Config(e.to_string()))?;
    let items = match &doc {
        Y::Sequence(s) => s.clone(),
        Y::Mapping(m) if m.len() == 1 && m.values().next().is_some_and(Y::is_sequence) => {
            m.values().next().and_then(Y::as_sequence).cloned().unwrap_or_default()
        }
        Y::Mapping(m) if m.contains_key("expected_answer") => vec![doc.clone()],
        _ => return Err(ForgeError::Config("expected a list of test cases".into())),
    };
    if items.is_empty() {
        return Err(ForgeError::Config("no test cases".into()));
    }
    let here = Path::new("<forge response>");
    let mut cases = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let m = item.as_mapping().ok_or_else(|| ForgeError::Config(format!("case {i} is not a mapping")))?;
        let field = |k: &str| m.get(k).and_then(Y::as_str).map(str::to_string);
        let expected = field("expected_answer").ok_or_else(|| ForgeError::Config(format!("case {i}: no expected_answer")))?;
        let output_type: OutputType = field("output_type")
            .ok_or_else(|| ForgeError::Config(format!("case {i}: no output_type")))?
            .parse()
            .map_err(|e| ForgeError::Config(format!("case {i}: {e}")))?;
        let mut parameters = Vec::new();
        if let Some(Y::Mapping(ps)) = m.get("params") {
            for (k, v) in ps {
                let name = k.as_str().ok_or_else(|| ForgeError::Config("non-string parameter name".into()))?;
                parameters.push(
                    model::parse_param(here, name.to_string(), v).map_err(|e| ForgeError::Config(e.to_string()))?,
                );
            }
        }
        let expected_answer_path = PathBuf::from(&expected);
        let case_id = expected_answer_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        cases.push(TestCase {
            case_id,
            function_header: header.to_string(),
            reference_code: reference_code.to_string(),
            parameters,
            output_type,
            output_path: field("output_path").map(PathBuf::from).unwrap_or_else(|| expected_answer_path.clone()),
            expected_answer_path,
        });
    }
    Ok(cases)
}

/// Asks the model for a draft of one entry. Failures become draft issues.
pub fn forge_entry(entry: &ApiDocEntry, client: &dyn ModelClient) -> ForgeDraft {
    let prompt = build_forge_prompt(entry);
    let want = expected_function_name(&entry.operator_name);
    let ctx = GenerationContext { prompt: &prompt, subject: Subject::Doc(entry), attempt_index: 0 };
    let failed = |issue: String| ForgeDraft {
        operator_name: entry.operator_name.clone(),
        function_name: want.clone(),
        reference_code: String::new(),
        cases: Vec::new(),
        review_status: ReviewStatus::Pending,
        issues: vec![issue],
        materialization: Vec::new(),
    };
    let text = match client.complete(&ctx) {
        Ok(c) => c.text,
        Err(e) => return failed(e.to_string()),
    };
    match parse_forge_response(&text, Some(&want)) {
        Ok(mut d) => {
            d.operator_name = entry.operator_name.clone();
            let bad: Vec<String> = model::validate_cases(&d.cases).iter().map(ToString::to_string).collect();
            if !bad.is_empty() {
                d.cases.clear();
                d.issues = bad;
            }
            d
        }
        Err(e) => failed(e.to_string()),
    }
}

fn constructor_for(type_name: &str) -> Option<String> {
    let t = type_name.trim().trim_start_matches("ee.");
    let expr = match t {
        "Number" => "ee.Number(2)",
        "String" => "ee.String('abc')",
        "List" => "ee.List([1, 2, 3])",
        "Dictionary" => "ee.Dictionary({'a': 1})",
        "Array" => "ee.Array([[2, 1], [1, 2]])",
        "Image" => "ee.Image.constant(1)",
        "Geometry" => "ee.Geometry.Point([0, 0])",
        "Date" => "ee.Date('2021-01-01')",
        _ => return None,
    };
    Some(format!(
        "def get_ee_object():\n    import ee\n    ee.Initialize()\n    return {expr}\n"
    ))
}

/// Canned forge response used by the `forge` stub: a single-operator
/// function and one configuration entry.
pub fn stub_response(e: &ApiDocEntry) -> String {
    let name = expected_function_name(&e.operator_name);
    let args: Vec<&str> = e.parameters.iter().map(|p| p.name.as_str()).collect();
    let call = match (e.operator_name.rsplit_once('.'), args.split_first()) {
        (Some((owner, method)), Some((first, rest))) if owner != "ee" => {
            format!("{first}.{method}({})", rest.join(", "))
        }
        _ => format!("{}({})", e.operator_name, args.join(", ")),
    };
    let ret = e.return_type.trim().trim_start_matches("ee.");
    let output_type: OutputType = format!("ee.{ret}").parse().unwrap_or(OutputType::Dictionary);
    let ext = output_type.group().extension();
    let mut cfg = format!("{name}:\n  - params:\n");
    if e.parameters.is_empty() {
        cfg = format!("{name}:\n  - params: {{}}\n");
    }
    for p in &e.parameters {
        match constructor_for(&p.type_name) {
            Some(script) => {
                cfg.push_str(&format!("      {}: !python |\n", p.name));
                for l in script.lines() {
                    cfg.push_str(&format!("        {l}\n"));
                }
            }
            None => cfg.push_str(&format!("      {}: 1\n", p.name)),
        }
    }
    cfg.push_str(&format!("    output_type: {}\n", output_type.name()));
    cfg.push_str(&format!("    expected_answer: {name}_testcase1.{ext}\n"));
    format!("```python\ndef {name}({}):\n    return {call}\n```\n\n```yaml\n{cfg}```\n", args.join(", "))
}

#[derive(Debug, Clone)]
pub struct MaterializeOptions {
    /// Rewrite answers of accepted drafts too.
    pub force: bool,
    pub timeout_s: f64,
    pub backend: PlatformBackend,
    pub concurrency: usize,
}

impl Default for MaterializeOptions {
    fn default() -> Self {
        MaterializeOptions {
            force: false,
            timeout_s: crate::runner::DEFAULT_TIMEOUT_S,
            backend: PlatformBackend::Mock,
            concurrency: 1,
        }
    }
}

fn partial_path(target: &Path) -> PathBuf {
    let mut name = target.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".partial-{}", std::process::id()));
    target.with_file_name(name)
}

fn materialize_case(
    case: &TestCase,
    target: &Path,
    runner: &dyn Runner,
    opts: &MaterializeOptions,
) -> Result<CaseStatus, RunnerError> {
    let status = |status, message: String| CaseStatus { case_id: case.case_id.clone(), status, message };
    if let Some(dir) = target.parent() {
        if let Err(e) = fs::create_dir_all(dir) {
            return Ok(status(MaterializeStatus::Failed, e.to_string()));
        }
    }
    let tmp = partial_path(target);
    let _ = fs::remove_file(&tmp);
    let job = Job::for_case(case, case.reference_code.clone(), tmp.clone(), opts.timeout_s, opts.backend);
    let o = runner.execute(&job)?;
    if o.status != ExecStatus::Ok || !o.output_written || !tmp.is_file() {
        let _ = fs::remove_file(&tmp);
        let msg = if o.error_message.is_empty() { format!("{:?}", o.status) } else { o.error_message };
        return Ok(status(MaterializeStatus::Failed, msg));
    }
    match fs::rename(&tmp, target) {
        Ok(()) => Ok(status(MaterializeStatus::Ok, String::new())),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Ok(status(MaterializeStatus::Failed, e.to_string()))
        }
    }
}

/// Executes every draft case's reference code and stores the result as its
/// expected answer under `root`. Statuses are also recorded on the drafts.
pub fn materialize_expected_answers(
    drafts: &mut [ForgeDraft],
    root: &Path,
    runner: &dyn Runner,
    opts: &MaterializeOptions,
) -> Result<Vec<CaseStatus>, RunnerError> {
    let work: Vec<(usize, &TestCase, PathBuf, bool)> = drafts
        .iter()
        .enumerate()
        .flat_map(|(i, d)| {
            let keep = d.review_status == ReviewStatus::Accepted && !opts.force;
            d.cases.iter().map(move |c| {
                let target = if c.expected_answer_path.is_absolute() {
                    c.expected_answer_path.clone()
                } else {
                    root.join(&c.expected_answer_path)
                };
                let skip = keep && target.exists();
                (i, c, target, skip)
            })
        })
        .collect();
    let run = |(i, c, target, skip): &(usize, &TestCase, PathBuf, bool)| -> Result<(usize, CaseStatus), RunnerError> {
        if *skip {
            return Ok((*i, CaseStatus { case_id: c.case_id.clone(), status: MaterializeStatus::Skipped, message: String::new() }));
        }
        materialize_case(c, target, runner, opts).map(|s| (*i, s))
    };
    let results: Vec<(usize, CaseStatus)> = if opts.concurrency > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.concurrency)
            .build()
            .map_err(|e| RunnerError::Unavailable(e.to_string()))?;
        pool.install(|| work.par_iter().map(run).collect::<Result<Vec<_>, _>>())?
    } else {
        work.iter().map(run).collect::<Result<Vec<_>, _>>()?
    };
    for d in drafts.iter_mut() {
        d.materialization.clear();
    }
    for (i, s) in &results {
        drafts[*i].materialization.push(s.clone());
    }
    Ok(results.into_iter().map(|(_, s)| s).collect())
}

/// Fills in the expected answers of an existing suite. Cases whose answer
/// file already exists are skipped unless `opts.force` is set.
pub fn materialize_suite(suite: &Suite, runner: &dyn Runner, opts: &MaterializeOptions) -> Result<Vec<CaseStatus>, RunnerError> {
    let run = |c: &TestCase| -> Result<CaseStatus, RunnerError> {
        let target = suite.expected_answer(c);
        if target.exists() && !opts.force {
            return Ok(CaseStatus { case_id: c.case_id.clone(), status: MaterializeStatus::Skipped, message: String::new() });
        }
        materialize_case(c, &target, runner, opts)
    };
    if opts.concurrency > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.concurrency)
            .build()
            .map_err(|e| RunnerError::Unavailable(e.to_string()))?;
        pool.install(|| suite.cases.par_iter().map(run).collect())
    } else {
        suite.cases.iter().map(run).collect()
    }
}

/// Collects the cases of every issue-free draft into a suite rooted at `root`.
pub fn drafts_to_suite(drafts: &[ForgeDraft], root: &Path) -> Suite {
    let mut cases: Vec<TestCase> = drafts.iter().flat_map(|d| d.cases.iter().cloned()).collect();
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Suite { root: root.to_path_buf(), cases }
}

pub const QUEUE_READY: &str = "ready";
pub const QUEUE_ATTENTION: &str = "needs-attention";
pub const QUEUE_PENDING: &str = "pending";

/// Bucket a draft belongs to in the review queue.
pub fn queue_bucket(d: &ForgeDraft) -> &'static str {
    let failed = d.materialization.iter().any(|s| s.status == MaterializeStatus::Failed);
    if !d.issues.is_empty() || failed {
        QUEUE_ATTENTION
    } else if !d.cases.is_empty() && d.materialization.len() == d.cases.len() {
        QUEUE_READY
    } else {
        QUEUE_PENDING
    }
}

/// Review queue document. Entries are ordered by operator and function
/// name so that re-exporting unchanged drafts yields identical bytes.
pub fn review_queue(drafts: &[ForgeDraft]) -> Value {
    let mut buckets: BTreeMap<&str, Vec<Value>> =
        [QUEUE_READY, QUEUE_ATTENTION, QUEUE_PENDING].into_iter().map(|b| (b, Vec::new())).collect();
    let mut sorted: Vec<&ForgeDraft> = drafts.iter().collect();
    sorted.sort_by(|a, b| (&a.operator_name, &a.function_name).cmp(&(&b.operator_name, &b.function_name)));
    for d in sorted {
        let messages: Vec<Value> = d
            .materialization
            .iter()
            .filter(|s| s.status == MaterializeStatus::Failed)
            .map(|s| json!({"case_id": s.case_id, "message": s.message}))
            .collect();
        buckets.get_mut(queue_bucket(d)).expect("known bucket").push(json!({
            "operator": d.operator_name,
            "function_name": d.function_name,
            "review_status": d.review_status,
            "cases": d.cases.iter().map(|c| c.case_id.clone()).collect::<Vec<_>>(),
            "materialization": d.materialization,
            "issues": d.issues,
            "failures": messages,
        }));
    }
    json!({
        QUEUE_READY: buckets[QUEUE_READY],
        QUEUE_ATTENTION: buckets[QUEUE_ATTENTION],
        QUEUE_PENDING: buckets[QUEUE_PENDING],
    })
}

pub fn export_review_queue(drafts: &[ForgeDraft], path: &Path) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(&review_queue(drafts)).expect("queue serializes");
    text.push('\n');
    if fs::read_to_string(path).is_ok_and(|old| old == text) {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamValue;
    use crate::runner::ExecutionOutcome;
    use crate::submission::StubClient;

    fn array_entry() -> ApiDocEntry {
        ApiDocEntry {
            operator_name: "ee.Array".into(),
            explanation: "Creates an array.".into(),
            parameters: vec![
                ApiParam { name: "values".into(), type_name: "Object".into(), details: "Existing array.".into() },
                ApiParam { name: "pixelType".into(), type_name: "PixelType".into(), details: "Type.".into() },
            ],
            return_type: "Array".into(),
            usage_examples: None,
        }
    }

    #[test]
    fn prompt_layout() {
        let p = build_forge_prompt(&array_entry());
        assert!(p.starts_with("## Task Description\n"));
        assert!(p.contains("### Operator Information\nHere is the operator information:\nOperator Name: ee.Array\n"));
        assert!(p.contains("- `values` (Object): Existing array.\n"));
        assert_eq!(p, build_forge_prompt(&array_entry()));
        let mut e = array_entry();
        e.parameters.clear();
        let p = build_forge_prompt(&e);
        assert!(p.contains("Parameter List:\nReturn Type: Array\n"));
    }

    #[test]
    fn function_names() {
        assert_eq!(expected_function_name("ee.Image.NormalizedDifference"), "imageNormalizedDifferenceTask");
        assert_eq!(expected_function_name("ee.Number.add"), "numberAddTask");
        assert_eq!(expected_function_name("ee.Array"), "arrayTask");
    }

    const GOOD: &str = "```python\ndef numberAddTask(a, b):\n    return a.add(b)\n```\n\n```yaml\nnumberAddTask:\n  - params:\n      a: !python |\n        def get_ee_object():\n            import ee\n            ee.Initialize()\n            return ee.Number(1)\n      b: 2\n    output_type: ee.Number\n    expected_answer: numberAddTask_testcase1.txt\n```\n";

    #[test]
    fn parses_good_response() {
        let d = parse_forge_response(GOOD, Some("numberAddTask")).unwrap();
        assert_eq!(d.review_status, ReviewStatus::Pending);
        assert_eq!(d.cases.len(), 1);
        let c = &d.cases[0];
        assert_eq!(c.case_id, "numberAddTask_testcase1");
        assert_eq!(c.function_header, "def numberAddTask(a, b):");
        assert!(matches!(c.parameters[0].value, ParamValue::Constructor(_)));
        assert!(model::validate_case(c).is_empty());
    }

    #[test]
    fn constraint_violations() {
        let init = GOOD.replace("    return a.add(b)", "    ee.Initialize()\n    return a.add(b)");
        assert_eq!(
            parse_forge_response(&init, None),
            Err(ForgeError::Constraint(vec![ConstraintViolation::Initialization]))
        );
        let prose = format!("{GOOD}\nThis function adds two numbers.");
        assert_eq!(
            parse_forge_response(&prose, None),
            Err(ForgeError::Constraint(vec![ConstraintViolation::Explanation]))
        );
        let import = GOOD.replace("def numberAddTask", "import ee\ndef numberAddTask");
        assert_eq!(parse_forge_response(&import, None), Err(ForgeError::Constraint(vec![ConstraintViolation::Import])));
        let two = GOOD.replace("```\n\n```yaml", "def other():\n    return 1\n```\n\n```yaml");
        assert_eq!(
            parse_forge_response(&two, None),
            Err(ForgeError::Constraint(vec![ConstraintViolation::MultipleOperators]))
        );
        assert_eq!(
            parse_forge_response(GOOD, Some("numberPlusTask")),
            Err(ForgeError::Constraint(vec![ConstraintViolation::FunctionName]))
        );
        assert_eq!(parse_forge_response("no blocks", None), Err(ForgeError::MissingBlock("code")));
        let code_only = GOOD.split("\n\n```yaml").next().unwrap();
        assert_eq!(parse_forge_response(code_only, None), Err(ForgeError::MissingBlock("configuration")));
    }

    #[test]
    fn stub_drafts_parse() {
        let stub = StubClient::new("forge", 0).unwrap();
        let d = forge_entry(&array_entry(), &stub);
        assert!(d.issues.is_empty(), "{:?}", d.issues);
        assert_eq!(d.function_name, "arrayTask");
        assert_eq!(d.cases[0].output_type, OutputType::Array);
        assert_eq!(d.cases[0].expected_answer_path, PathBuf::from("arrayTask_testcase1.npz"));
        let e = ApiDocEntry {
            operator_name: "ee.Number.add".into(),
            explanation: String::new(),
            parameters: vec![
                ApiParam { name: "left".into(), type_name: "Number".into(), details: String::new() },
                ApiParam { name: "right".into(), type_name: "Number".into(), details: String::new() },
            ],
            return_type: "Number".into(),
            usage_examples: None,
        };
        let d = forge_entry(&e, &stub);
        assert!(d.issues.is_empty(), "{:?}", d.issues);
        assert!(d.reference_code.contains("return left.add(right)"));
        assert_eq!(d.cases[0].parameters.len(), 2);
    }

    /// Writes `7` for reference code containing "seven", fails otherwise.
    struct ScriptRunner;
    impl Runner for ScriptRunner {
        fn execute(&self, job: &Job) -> Result<ExecutionOutcome, RunnerError> {
            if job.candidate_code.contains("seven") {
                fs::write(&job.output_path, "7").unwrap();
                let mut o = ExecutionOutcome::failure(ExecStatus::Ok, "");
                o.output_written = true;
                Ok(o)
            } else {
                Ok(ExecutionOutcome::failure(ExecStatus::Exception, "'Number' object has no attribute 'foo'"))
            }
        }
    }

    fn draft(name: &str, body: &str) -> ForgeDraft {
        let code = format!("def {name}():\n    {body}\n");
        ForgeDraft {
            operator_name: format!("ee.{name}"),
            function_name: name.into(),
            reference_code: code.clone(),
            cases: vec![TestCase {
                case_id: format!("{name}_testcase1"),
                function_header: format!("def {name}():"),
                reference_code: code,
                parameters: vec![],
                output_type: OutputType::Number,
                output_path: format!("{name}_testcase1.txt").into(),
                expected_answer_path: format!("{name}_testcase1.txt").into(),
            }],
            review_status: ReviewStatus::Pending,
            issues: vec![],
            materialization: vec![],
        }
    }

    #[test]
    fn materialize_and_queue() {
        let dir = tempfile::tempdir().unwrap();
        let mut drafts = vec![
            draft("a", "return ee.Number(7)  # seven"),
            draft("b", "return ee.Number(7).foo()"),
            draft("c", "return 7  # seven"),
        ];
        let st = materialize_expected_answers(&mut drafts, dir.path(), &ScriptRunner, &MaterializeOptions::default()).unwrap();
        let got: Vec<MaterializeStatus> = st.iter().map(|s| s.status).collect();
        assert_eq!(got, vec![MaterializeStatus::Ok, MaterializeStatus::Failed, MaterializeStatus::Ok]);
        assert_eq!(fs::read_to_string(dir.path().join("a_testcase1.txt")).unwrap(), "7");
        assert!(!dir.path().join("b_testcase1.txt").exists());
        assert!(st[1].message.contains("has no attribute"));
        let only_results: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(only_results.len(), 2);

        let q = review_queue(&drafts);
        assert_eq!(q[QUEUE_READY].as_array().unwrap().len(), 2);
        assert_eq!(q[QUEUE_ATTENTION].as_array().unwrap().len(), 1);
        let path = dir.path().join("queue/review_queue.json");
        export_review_queue(&drafts, &path).unwrap();
        let first = fs::read(&path).unwrap();
        export_review_queue(&drafts, &path).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
        assert_eq!(review_queue(&[])[QUEUE_PENDING], json!([]));
    }

    #[test]
    fn accepted_answers_are_kept_unless_forced() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("a_testcase1.txt");
        fs::write(&target, "41").unwrap();
        let mut drafts = vec![draft("a", "return 7  # seven")];
        drafts[0].review_status = ReviewStatus::Accepted;
        let st = materialize_expected_answers(&mut drafts, dir.path(), &ScriptRunner, &MaterializeOptions::default()).unwrap();
        assert_eq!(st[0].status, MaterializeStatus::Skipped);
        assert_eq!(fs::read_to_string(&target).unwrap(), "41");
        let opts = MaterializeOptions { force: true, ..Default::default() };
        materialize_expected_answers(&mut drafts, dir.path(), &ScriptRunner, &opts).unwrap();
        assert_eq!(fs::read_to_string(&target).unwrap(), "7");
    }
}
