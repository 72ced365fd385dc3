//! Type-dispatched equivalence between a candidate's value document and the
//! expected answer.
//!
//! Each value group has exactly one comparator. Arrays are compared
//! elementwise, rasters pixelwise (center-sampled when large), GeoJSON by
//! point set, timestamps by exact millisecond value, and the JSON groups by
//! recursive structural comparison with a scalar tolerance.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geometry;
use crate::model::{TestCase, ValueGroup};
use crate::npy::{self, NpyArray, NpzArchive};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances<T> {
    /// Per-pixel absolute tolerance for rasters.
    pub raster_abs: T,
    pub scalar_abs: T,
    pub scalar_rel: T,
    /// Coordinate tolerance in degrees.
    pub geom_eps: T,
    /// Rasters with any side above this many pixels are center-sampled.
    pub raster_large_threshold: usize,
    /// Side of the centered comparison window.
    pub sample_window: usize,
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        Tolerances {
            raster_abs: T::lit(1e-3),
            scalar_abs: T::lit(1e-6),
            scalar_rel: T::lit(1e-6),
            geom_eps: T::lit(1e-8),
            raster_large_threshold: 512,
            sample_window: 64,
        }
    }
}

impl<T: Scalar> Tolerances<T> {
    pub fn validate(&self) -> Result<(), String> {
        let pos = |name: &str, v: T| {
            if v > T::zero() {
                Ok(())
            } else {
                Err(format!("tolerance {name} must be positive"))
            }
        };
        pos("raster_abs", self.raster_abs)?;
        pos("scalar_abs", self.scalar_abs)?;
        pos("scalar_rel", self.scalar_rel)?;
        pos("geom_eps", self.geom_eps)?;
        if self.raster_large_threshold == 0 || self.sample_window == 0 {
            return Err("raster_large_threshold and sample_window must be positive".into());
        }
        Ok(())
    }
}

/// Pass/fail judgment for one attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub case_id: String,
    pub attempt_index: usize,
    pub passed: bool,
    /// Comparator that decided the verdict.
    pub rule_fired: ValueGroup,
    /// Largest deviation observed, when the comparison got that far.
    pub deviation: Option<f64>,
    pub detail: String,
}

/// Result of one comparator before it is attached to a case.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment<T> {
    pub passed: bool,
    pub deviation: Option<T>,
    pub detail: String,
}

impl<T: Scalar> Fragment<T> {
    fn pass(deviation: Option<T>, detail: impl Into<String>) -> Self {
        Fragment { passed: true, deviation, detail: detail.into() }
    }

    fn fail(deviation: Option<T>, detail: impl Into<String>) -> Self {
        Fragment { passed: false, deviation, detail: detail.into() }
    }

    fn within(dev: T, tol: T, what: &str) -> Self {
        if dev <= tol {
            Self::pass(Some(dev), format!("{what}: max deviation {dev} <= {tol}"))
        } else {
            Self::fail(Some(dev), format!("{what}: max deviation {dev} > {tol}"))
        }
    }
}

/// A loaded value document.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueDocument {
    Arrays(NpzArchive),
    GeoJson(Value),
    Json(Value),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DocumentError {
    Missing,
    Corrupt(String),
}

impl std::fmt::Display for DocumentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DocumentError::Missing => f.write_str("missing output"),
            DocumentError::Corrupt(m) => write!(f, "corrupt document: {m}"),
        }
    }
}

/// Reads the document at `path` in the format its group prescribes.
pub fn load_value_document(path: &Path, group: ValueGroup) -> Result<ValueDocument, DocumentError> {
    if !path.is_file() {
        return Err(DocumentError::Missing);
    }
    match group {
        ValueGroup::Array | ValueGroup::Raster => npy::read_npz(path)
            .map(ValueDocument::Arrays)
            .map_err(|e| DocumentError::Corrupt(e.to_string())),
        _ => {
            let text = fs::read_to_string(path).map_err(|e| DocumentError::Corrupt(e.to_string()))?;
            let v: Value =
                serde_json::from_str(text.trim()).map_err(|e| DocumentError::Corrupt(e.to_string()))?;
            Ok(if group == ValueGroup::Geojson { ValueDocument::GeoJson(v) } else { ValueDocument::Json(v) })
        }
    }
}

/// Judges the document at `actual` against the expected answer of `case`.
pub fn judge_case<T: Scalar>(
    case: &TestCase,
    attempt_index: usize,
    actual: &Path,
    expected: &Path,
    tol: &Tolerances<T>,
) -> Verdict {
    let group = case.group();
    let verdict = |f: Fragment<T>| Verdict {
        case_id: case.case_id.clone(),
        attempt_index,
        passed: f.passed,
        rule_fired: group,
        deviation: f.deviation.map(Scalar::as_f64),
        detail: f.detail,
    };
    let expected_doc = match load_value_document(expected, group) {
        Ok(d) => d,
        Err(DocumentError::Missing) => {
            return verdict(Fragment::fail(None, format!("expected answer missing: {}", expected.display())))
        }
        Err(e) => return verdict(Fragment::fail(None, format!("expected answer: {e}"))),
    };
    let actual_doc = match load_value_document(actual, group) {
        Ok(d) => d,
        Err(e) => return verdict(Fragment::fail(None, e.to_string())),
    };
    verdict(judge_documents(group, &actual_doc, &expected_doc, tol))
}

/// Dispatches two loaded documents to the comparator for `group`.
pub fn judge_documents<T: Scalar>(
    group: ValueGroup,
    actual: &ValueDocument,
    expected: &ValueDocument,
    tol: &Tolerances<T>,
) -> Fragment<T> {
    use ValueDocument::*;
    match (group, actual, expected) {
        (ValueGroup::Array | ValueGroup::Raster, Arrays(a), Arrays(b)) => compare_archives(a, b, group, tol),
        (ValueGroup::Geojson, GeoJson(a), GeoJson(b)) => compare_geometry(a, b, tol),
        (ValueGroup::Timestamp, Json(a), Json(b)) => compare_timestamp(a, b),
        (ValueGroup::List | ValueGroup::String | ValueGroup::Number | ValueGroup::Dict, Json(a), Json(b)) => {
            compare_basic(a, b, group, tol)
        }
        _ => Fragment::fail(None, format!("document kind does not fit group {group}")),
    }
}

const META_MEMBER: &str = "__meta__";
const BAND_PREFIX: &str = "band_";

/// Data members in band order: `__meta__` order when present, else archive order.
fn bands(a: &NpzArchive) -> Vec<(String, &NpyArray)> {
    let data: Vec<(&str, &NpyArray)> =
        a.members.iter().filter(|(n, _)| n != META_MEMBER).map(|(n, x)| (n.as_str(), x)).collect();
    let strip = |n: &str| n.strip_prefix(BAND_PREFIX).unwrap_or(n).to_string();
    if let Some(order) = a.get(META_MEMBER).and_then(NpyArray::text) {
        let mut out: Vec<(String, &NpyArray)> = order
            .iter()
            .filter_map(|b| data.iter().find(|(n, _)| strip(n) == *b).map(|(_, x)| (b.clone(), *x)))
            .collect();
        for (n, x) in &data {
            if !out.iter().any(|(o, _)| *o == strip(n)) {
                out.push((strip(n), x));
            }
        }
        out
    } else {
        data.into_iter().map(|(n, x)| (strip(n), x)).collect()
    }
}

/// Compares two array archives member by member. Single-member archives
/// are compared directly regardless of member names.
pub fn compare_archives<T: Scalar>(
    a: &NpzArchive,
    b: &NpzArchive,
    group: ValueGroup,
    tol: &Tolerances<T>,
) -> Fragment<T> {
    let (ba, bb) = (bands(a), bands(b));
    if ba.is_empty() || bb.is_empty() {
        return Fragment::fail(None, "archive has no data members");
    }
    let pairs: Vec<(String, &NpyArray, &NpyArray)> = if ba.len() == 1 && bb.len() == 1 {
        vec![(ba[0].0.clone(), ba[0].1, bb[0].1)]
    } else {
        let mut names_a: Vec<&String> = ba.iter().map(|(n, _)| n).collect();
        let mut names_b: Vec<&String> = bb.iter().map(|(n, _)| n).collect();
        names_a.sort();
        names_b.sort();
        if names_a != names_b {
            return Fragment::fail(None, format!("band mismatch: {names_a:?} vs {names_b:?}"));
        }
        ba.iter()
            .map(|(n, x)| (n.clone(), *x, bb.iter().find(|(m, _)| m == n).unwrap().1))
            .collect()
    };
    let mut worst = T::zero();
    let mut notes = Vec::new();
    for (name, x, y) in pairs {
        let f = compare_array(x, y, group, tol);
        if !f.passed {
            return Fragment { detail: format!("band {name}: {}", f.detail), ..f };
        }
        if let Some(d) = f.deviation {
            worst = worst.max(d);
        }
        notes.push(format!("{name}: {}", f.detail));
    }
    Fragment::pass(Some(worst), notes.join("; "))
}

/// Elementwise comparison. Rasters whose spatial extent (last two axes)
/// exceeds the threshold are compared only over the centered window.
pub fn compare_array<T: Scalar>(a: &NpyArray, b: &NpyArray, group: ValueGroup, tol: &Tolerances<T>) -> Fragment<T> {
    if a.shape != b.shape {
        return Fragment::fail(None, format!("shape mismatch: {:?} vs {:?}", a.shape, b.shape));
    }
    if let (Some(x), Some(y)) = (a.text(), b.text()) {
        return match x.iter().zip(y).position(|(p, q)| p != q) {
            None => Fragment::pass(Some(T::zero()), "string elements equal"),
            Some(i) => Fragment::fail(None, format!("string element {i} differs")),
        };
    }
    let (Some(x), Some(y)) = (a.as_scalars::<T>(), b.as_scalars::<T>()) else {
        return Fragment::fail(None, "numeric vs string array");
    };
    let limit = if group == ValueGroup::Raster { tol.raster_abs } else { tol.scalar_abs };
    let shape = &a.shape;
    let large = group == ValueGroup::Raster
        && shape.len() >= 2
        && shape[shape.len() - 2..].iter().any(|&s| s > tol.raster_large_threshold);
    let elem_dev = |p: T, q: T| -> T {
        match (p.is_nan(), q.is_nan()) {
            (true, true) => T::zero(),
            (false, false) => (p - q).abs(),
            _ => T::infinity(),
        }
    };
    if !large {
        let dev = x.iter().zip(&y).fold(T::zero(), |m, (&p, &q)| m.max(elem_dev(p, q)));
        let what = if group == ValueGroup::Raster { "pixel-wise" } else { "element-wise" };
        return Fragment::within(dev, limit, what);
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let (wh, ww) = (tol.sample_window.min(h), tol.sample_window.min(w));
    let (r0, c0) = ((h - wh) / 2, (w - ww) / 2);
    let plane = h * w;
    let planes = x.len() / plane.max(1);
    let mut dev = T::zero();
    for p in 0..planes {
        for r in r0..r0 + wh {
            let base = p * plane + r * w;
            for c in c0..c0 + ww {
                dev = dev.max(elem_dev(x[base + c], y[base + c]));
            }
        }
    }
    let what = format!(
        "center-sampled {wh}x{ww} window of {h}x{w} (threshold {})",
        tol.raster_large_threshold
    );
    Fragment::within(dev, limit, &what)
}

/// Point-set equality of two GeoJSON values; properties are ignored.
pub fn compare_geometry<T: Scalar>(a: &Value, b: &Value, tol: &Tolerances<T>) -> Fragment<T> {
    match geometry::compare::<T>(a, b, tol.geom_eps) {
        Ok(dev) => Fragment::pass(Some(dev), format!("point sets equal within {}", tol.geom_eps)),
        Err(e) => Fragment::fail(None, e),
    }
}

/// Millisecond values carried by a materialized date or date range.
pub fn timestamp_values(v: &Value) -> Result<Vec<f64>, String> {
    match v {
        Value::Number(n) => n.as_f64().map(|x| vec![x]).ok_or_else(|| "bad number".into()),
        Value::Array(items) => {
            let mut out = Vec::new();
            for it in items {
                out.extend(timestamp_values(it)?);
            }
            Ok(out)
        }
        Value::Object(o) => {
            if let Some(d) = o.get("dates") {
                timestamp_values(d)
            } else if let Some(x) = o.get("value") {
                timestamp_values(x)
            } else if let (Some(s), Some(e)) = (o.get("start"), o.get("end")) {
                Ok([timestamp_values(s)?, timestamp_values(e)?].concat())
            } else {
                Err("no 'value' or 'dates' field".into())
            }
        }
        _ => Err(format!("not a timestamp: {v}")),
    }
}

/// Exact millisecond comparison; ranges compare both endpoints.
pub fn compare_timestamp<T: Scalar>(a: &Value, b: &Value) -> Fragment<T> {
    let (x, y) = match (timestamp_values(a), timestamp_values(b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) => return Fragment::fail(None, format!("actual: {e}")),
        (_, Err(e)) => return Fragment::fail(None, format!("expected: {e}")),
    };
    if x.len() != y.len() {
        return Fragment::fail(None, format!("{} vs {} timestamp values", x.len(), y.len()));
    }
    let dev = x.iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    if dev == 0.0 {
        Fragment::pass(Some(T::zero()), "timestamps equal")
    } else {
        Fragment::fail(Some(T::lit(dev)), format!("timestamps differ by {dev} ms"))
    }
}

fn numbers_within<T: Scalar>(p: f64, q: f64, tol: &Tolerances<T>) -> (bool, T) {
    let (p, q) = (T::lit(p), T::lit(q));
    let dev = (p - q).abs();
    let bound = tol.scalar_abs.max(tol.scalar_rel * p.abs().max(q.abs()));
    (dev <= bound, dev)
}

/// Recursive structural comparison. `Ok` carries the largest numeric deviation.
fn compare_json<T: Scalar>(a: &Value, b: &Value, tol: &Tolerances<T>, at: &str) -> Result<T, String> {
    match (a, b) {
        (Value::Null, Value::Null) => Ok(T::zero()),
        (Value::Bool(x), Value::Bool(y)) if x == y => Ok(T::zero()),
        (Value::String(x), Value::String(y)) if x.trim_end() == y.trim_end() => Ok(T::zero()),
        (Value::Number(x), Value::Number(y)) => {
            let (ok, dev) = numbers_within(x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN), tol);
            if ok {
                Ok(dev)
            } else {
                Err(format!("{at}: {x} vs {y}"))
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Err(format!("{at}: length {} vs {}", x.len(), y.len()));
            }
            x.iter().zip(y).enumerate().try_fold(T::zero(), |m, (i, (p, q))| {
                compare_json(p, q, tol, &format!("{at}[{i}]")).map(|d| m.max(d))
            })
        }
        (Value::Object(x), Value::Object(y)) => {
            let mut kx: Vec<&String> = x.keys().collect();
            let mut ky: Vec<&String> = y.keys().collect();
            kx.sort();
            ky.sort();
            if kx != ky {
                return Err(format!("{at}: keys {kx:?} vs {ky:?}"));
            }
            kx.into_iter().try_fold(T::zero(), |m, k| {
                compare_json(&x[k], &y[k], tol, &format!("{at}.{k}")).map(|d| m.max(d))
            })
        }
        _ => Err(format!("{at}: {a} vs {b}")),
    }
}

fn string_form(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim_end().to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Comparators for the JSON groups: exact strings (booleans compare as
/// their string form), toleranced numbers, ordered lists, unordered dicts.
pub fn compare_basic<T: Scalar>(a: &Value, b: &Value, group: ValueGroup, tol: &Tolerances<T>) -> Fragment<T> {
    let structural = |what: &str| match compare_json(a, b, tol, "$") {
        Ok(dev) => Fragment::pass(Some(dev), format!("{what} equal")),
        Err(e) => Fragment::fail(None, format!("{what} differ at {e}")),
    };
    match group {
        ValueGroup::String => {
            let (Some(x), Some(y)) = (string_form(a), string_form(b)) else {
                return Fragment::fail(None, format!("type mismatch: {a} vs {b}"));
            };
            let boolish = matches!(a, Value::Bool(_)) || matches!(b, Value::Bool(_));
            let equal = if boolish { x.eq_ignore_ascii_case(&y) } else { x == y };
            if equal {
                Fragment::pass(Some(T::zero()), "strings equal")
            } else {
                Fragment::fail(None, format!("strings differ: {x:?} vs {y:?}"))
            }
        }
        ValueGroup::Number => match (a, b) {
            (Value::Number(x), Value::Number(y)) => {
                let (ok, dev) = numbers_within(x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN), tol);
                if ok {
                    Fragment::pass(Some(dev), format!("|{x} - {y}| within tolerance"))
                } else {
                    Fragment::fail(Some(dev), format!("{x} vs {y}: deviation {dev}"))
                }
            }
            _ => Fragment::fail(None, format!("type mismatch: {a} vs {b}")),
        },
        ValueGroup::List => match (a, b) {
            (Value::Array(_), Value::Array(_)) => structural("lists"),
            _ => Fragment::fail(None, format!("type mismatch: {a} vs {b}")),
        },
        ValueGroup::Dict => match (a, b) {
            (Value::Object(_), Value::Object(_)) => structural("dictionaries"),
            _ => Fragment::fail(None, format!("type mismatch: {a} vs {b}")),
        },
        other => Fragment::fail(None, format!("compare_basic does not handle {other}")),
    }
}
