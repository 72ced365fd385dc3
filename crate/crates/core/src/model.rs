//! Test-case schema: the six-part case record, the closed set of declared
//! output types, and the value groups the judge dispatches on.
//!
//! A suite on disk is a directory holding one YAML document per case plus a
//! `manifest.json` listing the case files. Platform objects are supplied to
//! a case through `!python |` blocks whose body defines `get_ee_object()`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_yaml::value::{Tag, TaggedValue};
use thiserror::Error;

use crate::pycode;

/// Runtime value shape a declared output type reduces to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValueGroup {
    Array,
    Raster,
    List,
    String,
    Number,
    Dict,
    Timestamp,
    Geojson,
}

impl ValueGroup {
    pub const ALL: [ValueGroup; 8] = [
        ValueGroup::Array,
        ValueGroup::Raster,
        ValueGroup::List,
        ValueGroup::String,
        ValueGroup::Number,
        ValueGroup::Dict,
        ValueGroup::Timestamp,
        ValueGroup::Geojson,
    ];

    /// File extension (without dot) of value documents in this group.
    pub fn extension(self) -> &'static str {
        match self {
            ValueGroup::Array | ValueGroup::Raster => "npz",
            ValueGroup::Geojson => "geojson",
            _ => "txt",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueGroup::Array => "ARRAY",
            ValueGroup::Raster => "RASTER",
            ValueGroup::List => "LIST",
            ValueGroup::String => "STRING",
            ValueGroup::Number => "NUMBER",
            ValueGroup::Dict => "DICT",
            ValueGroup::Timestamp => "TIMESTAMP",
            ValueGroup::Geojson => "GEOJSON",
        }
    }
}

impl fmt::Display for ValueGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! output_types {
    ($( $variant:ident => $name:literal, $group:ident; )*) => {
        /// One of the 26 declared platform output types.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum OutputType {
            $( $variant, )*
        }

        impl OutputType {
            pub const ALL: [OutputType; 26] = [ $( OutputType::$variant, )* ];

            pub fn name(self) -> &'static str {
                match self {
                    $( OutputType::$variant => $name, )*
                }
            }

            pub fn group(self) -> ValueGroup {
                match self {
                    $( OutputType::$variant => ValueGroup::$group, )*
                }
            }
        }

        impl FromStr for OutputType {
            type Err = UnknownOutputType;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim() {
                    $( $name => Ok(OutputType::$variant), )*
                    other => Err(UnknownOutputType(other.to_string())),
                }
            }
        }
    };
}

output_types! {
    Array => "ee.Array", Array;
    ArrayImage => "ee.ArrayImage", Array;
    Blob => "ee.Blob", Dict;
    Bool => "ee.BOOL", String;
    Classifier => "ee.Classifier", Dict;
    Clusterer => "ee.Clusterer", Dict;
    ConfusionMatrix => "ee.ConfusionMatrix", Array;
    Date => "ee.Date", Timestamp;
    DateRange => "ee.DateRange", Timestamp;
    Dictionary => "ee.Dictionary", Dict;
    Element => "ee.Element", Dict;
    ErrorMargin => "ee.ErrorMargin", Dict;
    Feature => "ee.Feature", Geojson;
    FeatureCollection => "ee.FeatureCollection", Geojson;
    Filter => "ee.Filter", Dict;
    Geometry => "ee.Geometry", Geojson;
    Image => "ee.Image", Raster;
    ImageCollection => "ee.ImageCollection", Raster;
    Join => "ee.Join", Dict;
    Kernel => "ee.Kernel", Dict;
    List => "ee.List", List;
    Number => "ee.Number", Number;
    PixelType => "ee.PixelType", Dict;
    Projection => "ee.Projection", Dict;
    Reducer => "ee.Reducer", Dict;
    String => "ee.String", String;
}

/// Value group of a declared output type.
pub fn value_group_of(t: OutputType) -> ValueGroup {
    t.group()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown output type {0:?}")]
pub struct UnknownOutputType(pub String);

impl fmt::Display for OutputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for OutputType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for OutputType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How a parameter value is supplied to the function under test.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    /// Plain JSON value bound directly.
    Literal(serde_json::Value),
    /// Script whose `get_ee_object()` builds a platform object.
    Constructor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParamKind {
    Literal,
    Constructor,
}

/// One named actual parameter of a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParameterWire", into = "ParameterWire")]
pub struct ParameterSpec {
    pub name: String,
    pub value: ParamValue,
}

impl ParameterSpec {
    pub fn literal(name: impl Into<String>, v: serde_json::Value) -> Self {
        Self { name: name.into(), value: ParamValue::Literal(v) }
    }

    pub fn constructor(name: impl Into<String>, script: impl Into<String>) -> Self {
        Self { name: name.into(), value: ParamValue::Constructor(script.into()) }
    }

    pub fn kind(&self) -> ParamKind {
        match self.value {
            ParamValue::Literal(_) => ParamKind::Literal,
            ParamValue::Constructor(_) => ParamKind::Constructor,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParameterWire {
    name: String,
    kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    literal_value: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constructor_script: Option<String>,
}

impl TryFrom<ParameterWire> for ParameterSpec {
    type Error = String;

    fn try_from(w: ParameterWire) -> Result<Self, Self::Error> {
        let value = match (w.kind, w.literal_value, w.constructor_script) {
            (ParamKind::Literal, Some(v), None) => ParamValue::Literal(v),
            // an explicit JSON null deserializes as None
            (ParamKind::Literal, None, None) => ParamValue::Literal(serde_json::Value::Null),
            (ParamKind::Constructor, None, Some(s)) => ParamValue::Constructor(s),
            _ => {
                return Err(format!(
                    "parameter {:?}: exactly one of literal_value/constructor_script must match kind",
                    w.name
                ))
            }
        };
        Ok(ParameterSpec { name: w.name, value })
    }
}

impl From<ParameterSpec> for ParameterWire {
    fn from(p: ParameterSpec) -> Self {
        let kind = p.kind();
        let (literal_value, constructor_script) = match p.value {
            ParamValue::Literal(v) => (Some(v), None),
            ParamValue::Constructor(s) => (None, Some(s)),
        };
        ParameterWire { name: p.name, kind, literal_value, constructor_script }
    }
}

/// A unit test: function header, hidden reference code, actual parameters,
/// declared output type, output location and expected-answer location.
/// Paths are relative to the suite root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    pub function_header: String,
    pub reference_code: String,
    pub parameters: Vec<ParameterSpec>,
    pub output_type: OutputType,
    pub output_path: PathBuf,
    pub expected_answer_path: PathBuf,
}

impl TestCase {
    pub fn group(&self) -> ValueGroup {
        self.output_type.group()
    }

    /// Name of the function the header declares.
    pub fn function_name(&self) -> Option<String> {
        pycode::entry_point(&self.function_header)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    DuplicateId,
    EmptyField,
    ExtensionMismatch,
    FunctionDeclaration,
    ParameterName,
    ConstructorBlock,
}

/// One broken invariant of a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub case_id: String,
    pub field: String,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.case_id, self.field, self.message)
    }
}

fn violation(c: &TestCase, field: &str, kind: ViolationKind, message: String) -> Violation {
    Violation { case_id: c.case_id.clone(), field: field.to_string(), kind, message }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_ascii_alphabetic())
        && chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

/// Checks every per-case invariant; an empty result means the case is valid.
pub fn validate_case(c: &TestCase) -> Vec<Violation> {
    let mut out = Vec::new();
    if c.case_id.trim().is_empty() {
        out.push(violation(c, "case_id", ViolationKind::EmptyField, "case_id is empty".into()));
    }
    if c.reference_code.trim().is_empty() {
        out.push(violation(c, "reference_code", ViolationKind::EmptyField, "reference_code is empty".into()));
    }
    let defs = pycode::function_names(&c.function_header).len();
    if defs != 1 {
        out.push(violation(
            c,
            "function_header",
            ViolationKind::FunctionDeclaration,
            format!("expected exactly one function declaration, found {defs}"),
        ));
    }
    let want = c.group().extension();
    for (field, path) in [("output_path", &c.output_path), ("expected_answer", &c.expected_answer_path)] {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !ext.eq_ignore_ascii_case(want) {
            out.push(violation(
                c,
                field,
                ViolationKind::ExtensionMismatch,
                format!(
                    "{} has extension {:?} but {} ({}) requires .{}",
                    path.display(),
                    ext,
                    c.output_type,
                    c.group(),
                    want
                ),
            ));
        }
    }
    let mut seen = HashMap::new();
    for p in &c.parameters {
        if !is_identifier(&p.name) {
            out.push(violation(
                c,
                &format!("params.{}", p.name),
                ViolationKind::ParameterName,
                format!("{:?} is not an identifier", p.name),
            ));
        }
        if seen.insert(p.name.as_str(), ()).is_some() {
            out.push(violation(
                c,
                &format!("params.{}", p.name),
                ViolationKind::ParameterName,
                "parameter declared twice".into(),
            ));
        }
        if let ParamValue::Constructor(script) = &p.value {
            if !pycode::function_names(script).iter().any(|n| n == "get_ee_object") {
                out.push(violation(
                    c,
                    &format!("params.{}", p.name),
                    ViolationKind::ConstructorBlock,
                    "constructor block does not define get_ee_object()".into(),
                ));
            }
        }
    }
    out
}

/// Per-case violations plus one uniqueness violation per duplicated id.
pub fn validate_cases(cases: &[TestCase]) -> Vec<Violation> {
    let mut out: Vec<Violation> = cases.iter().flat_map(validate_case).collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in cases {
        let n = counts.entry(c.case_id.as_str()).or_default();
        *n += 1;
        if *n > 1 {
            out.push(violation(
                c,
                "case_id",
                ViolationKind::DuplicateId,
                format!("case_id {:?} is not unique", c.case_id),
            ));
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{} invalid case(s); first: {}", .0.len(), .0[0])]
    Validation(Vec<Violation>),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SuiteError + '_ {
    move |source| SuiteError::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, message: impl Into<String>) -> SuiteError {
    SuiteError::Parse { path: path.to_path_buf(), message: message.into() }
}

pub const MANIFEST_FILE: &str = "manifest.json";

const CASE_KEYS: [&str; 6] =
    ["function_header", "reference_code", "params", "output_type", "output_path", "expected_answer"];

/// Parses one case document. The case id is the file stem.
pub fn parse_case_document(path: &Path, text: &str) -> Result<TestCase, SuiteError> {
    let doc: serde_yaml::Value =
        serde_yaml::from_str(text).map_err(|e| parse_err(path, e.to_string()))?;
    let map = doc.as_mapping().ok_or_else(|| parse_err(path, "case document is not a mapping"))?;
    for key in map.keys() {
        let k = key.as_str().ok_or_else(|| parse_err(path, "non-string key"))?;
        if !CASE_KEYS.contains(&k) {
            return Err(parse_err(path, format!("unknown key {k:?}")));
        }
    }
    let text_field = |key: &str| -> Result<String, SuiteError> {
        match map.get(key) {
            Some(serde_yaml::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(parse_err(path, format!("{key} must be a string"))),
            None => Err(parse_err(path, format!("missing key {key}"))),
        }
    };
    let function_header = text_field("function_header")?;
    let reference_code = text_field("reference_code")?;
    let output_type: OutputType = text_field("output_type")?
        .parse()
        .map_err(|e: UnknownOutputType| parse_err(path, format!("output_type: {e}")))?;
    let output_path = PathBuf::from(text_field("output_path")?);
    let expected_answer_path = PathBuf::from(text_field("expected_answer")?);

    let mut parameters = Vec::new();
    match map.get("params") {
        None | Some(serde_yaml::Value::Null) => {}
        Some(serde_yaml::Value::Mapping(params)) => {
            for (k, v) in params {
                let name = k
                    .as_str()
                    .ok_or_else(|| parse_err(path, "parameter names must be strings"))?
                    .to_string();
                parameters.push(parse_param(path, name, v)?);
            }
        }
        Some(_) => return Err(parse_err(path, "params must be a mapping")),
    }

    let case_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| parse_err(path, "case file has no usable name"))?
        .to_string();
    Ok(TestCase {
        case_id,
        function_header,
        reference_code,
        parameters,
        output_type,
        output_path,
        expected_answer_path,
    })
}

pub(crate) fn parse_param(path: &Path, name: String, v: &serde_yaml::Value) -> Result<ParameterSpec, SuiteError> {
    if let serde_yaml::Value::Tagged(t) = v {
        if t.tag != "python" {
            return Err(parse_err(path, format!("params.{name}: unsupported tag {}", t.tag)));
        }
        let script = t
            .value
            .as_str()
            .ok_or_else(|| parse_err(path, format!("params.{name}: !python block must be a string")))?;
        return Ok(ParameterSpec::constructor(name, script));
    }
    let json = serde_json::to_value(v)
        .map_err(|e| parse_err(path, format!("params.{name}: not representable as JSON: {e}")))?;
    Ok(ParameterSpec::literal(name, json))
}

/// Renders a case back into its YAML document form.
pub fn case_to_yaml(c: &TestCase) -> String {
    use serde_yaml::{Mapping, Value};
    let mut params = Mapping::new();
    for p in &c.parameters {
        let v = match &p.value {
            ParamValue::Literal(j) => serde_yaml::to_value(j).expect("JSON is valid YAML"),
            ParamValue::Constructor(s) => Value::Tagged(Box::new(TaggedValue {
                tag: Tag::new("python"),
                value: Value::String(s.clone()),
            })),
        };
        params.insert(Value::String(p.name.clone()), v);
    }
    let mut m = Mapping::new();
    let s = |x: &str| Value::String(x.to_string());
    m.insert(s("function_header"), s(&c.function_header));
    m.insert(s("reference_code"), s(&c.reference_code));
    m.insert(s("params"), Value::Mapping(params));
    m.insert(s("output_type"), s(c.output_type.name()));
    m.insert(s("output_path"), s(&c.output_path.to_string_lossy()));
    m.insert(s("expected_answer"), s(&c.expected_answer_path.to_string_lossy()));
    serde_yaml::to_string(&Value::Mapping(m)).expect("mapping serializes")
}

/// A loaded set of cases. Case paths resolve against `root`.
#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub root: PathBuf,
    pub cases: Vec<TestCase>,
}

impl Suite {
    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.root.join(rel)
        }
    }

    pub fn expected_answer(&self, c: &TestCase) -> PathBuf {
        self.resolve(&c.expected_answer_path)
    }

    pub fn case(&self, id: &str) -> Option<&TestCase> {
        self.cases.iter().find(|c| c.case_id == id)
    }

    pub fn type_histogram(&self) -> BTreeMap<OutputType, usize> {
        let mut h = BTreeMap::new();
        for c in &self.cases {
            *h.entry(c.output_type).or_default() += 1;
        }
        h
    }

    pub fn group_histogram(&self) -> BTreeMap<ValueGroup, usize> {
        let mut h = BTreeMap::new();
        for c in &self.cases {
            *h.entry(c.group()).or_default() += 1;
        }
        h
    }

    /// Writes one `<case_id>.yaml` per case plus the manifest into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SuiteError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut files = Vec::new();
        for c in &self.cases {
            let name = format!("{}.yaml", c.case_id);
            let p = dir.join(&name);
            fs::write(&p, case_to_yaml(c)).map_err(io_err(&p))?;
            files.push(name);
        }
        let manifest = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&files).expect("strings serialize");
        text.push('\n');
        fs::write(&manifest, text).map_err(io_err(&manifest))
    }
}

fn is_case_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("yaml" | "yml"))
}

/// Parses a suite without enforcing invariants. `path` may be a suite
/// directory, a manifest file, or a single case document.
pub fn read_suite(path: &Path) -> Result<Suite, SuiteError> {
    let meta = fs::metadata(path).map_err(io_err(path))?;
    let (root, files): (PathBuf, Vec<PathBuf>) = if meta.is_dir() {
        let manifest = path.join(MANIFEST_FILE);
        if manifest.is_file() {
            (path.to_path_buf(), read_manifest(&manifest)?)
        } else {
            let mut files: Vec<PathBuf> = fs::read_dir(path)
                .map_err(io_err(path))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && is_case_file(p))
                .collect();
            files.sort();
            (path.to_path_buf(), files)
        }
    } else {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if is_case_file(path) {
            (root, vec![path.to_path_buf()])
        } else {
            (root, read_manifest(path)?)
        }
    };
    let mut cases = Vec::with_capacity(files.len());
    for f in &files {
        let text = fs::read_to_string(f).map_err(io_err(f))?;
        cases.push(parse_case_document(f, &text)?);
    }
    // stable sort keeps duplicate ids in manifest order
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(Suite { root, cases })
}

fn read_manifest(manifest: &Path) -> Result<Vec<PathBuf>, SuiteError> {
    let text = fs::read_to_string(manifest).map_err(io_err(manifest))?;
    let entries: Vec<String> = serde_json::from_str(&text)
        .map_err(|e| parse_err(manifest, format!("manifest must be a JSON array of paths: {e}")))?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    Ok(entries.into_iter().map(|e| base.join(e)).collect())
}

/// Parses and validates a suite; cases come back ordered by id.
pub fn load_suite(path: &Path) -> Result<Suite, SuiteError> {
    let suite = read_suite(path)?;
    let violations = validate_cases(&suite.cases);
    if violations.is_empty() {
        Ok(suite)
    } else {
        Err(SuiteError::Validation(violations))
    }
}
