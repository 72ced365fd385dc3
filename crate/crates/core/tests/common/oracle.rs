//! A labeled judge corpus and an independent canonicalize-then-compare
//! oracle. The oracle shares no code with the judge: dictionaries are
//! re-sorted, geometries are snapped to a 1e-7 grid and rendered as
//! canonical text (rings rotated and oriented to their smallest form),
//! and arrays are compared by plain loops.

use std::collections::BTreeMap;

use geeval_core::judge::ValueDocument;
use geeval_core::model::ValueGroup;
use geeval_core::npy::{NpyArray, NpzArchive};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

const ABS: f64 = 1e-6;
const REL: f64 = 1e-6;
const RASTER_ABS: f64 = 1e-3;
const LARGE: usize = 512;
const WINDOW: usize = 64;
pub const LARGE_SIDE: usize = 600;

pub struct Fixture {
    pub label: String,
    pub group: ValueGroup,
    pub actual: ValueDocument,
    pub expected: ValueDocument,
    /// Verdict the fixture was built to produce.
    pub designed: bool,
}

// ---------------------------------------------------------------- oracle

pub fn oracle(group: ValueGroup, a: &ValueDocument, b: &ValueDocument) -> bool {
    use ValueDocument::*;
    match (group, a, b) {
        (ValueGroup::Array | ValueGroup::Raster, Arrays(x), Arrays(y)) => arrays_equal(group, x, y),
        (ValueGroup::Geojson, GeoJson(x), GeoJson(y)) => match (canonical_geometry(x), canonical_geometry(y)) {
            (Some(p), Some(q)) => p == q,
            _ => false,
        },
        (ValueGroup::Timestamp, Json(x), Json(y)) => match (millis(x), millis(y)) {
            (Some(p), Some(q)) => p == q,
            _ => false,
        },
        (ValueGroup::String, Json(x), Json(y)) => strings_equal(x, y),
        (ValueGroup::Number, Json(Value::Number(x)), Json(Value::Number(y))) => {
            numbers_close(x.as_f64().unwrap(), y.as_f64().unwrap())
        }
        (ValueGroup::List, Json(x @ Value::Array(_)), Json(y @ Value::Array(_))) => json_equal(&sorted(x), &sorted(y)),
        (ValueGroup::Dict, Json(x @ Value::Object(_)), Json(y @ Value::Object(_))) => json_equal(&sorted(x), &sorted(y)),
        _ => false,
    }
}

fn numbers_close(x: f64, y: f64) -> bool {
    (x - y).abs() <= ABS.max(REL * x.abs().max(y.abs()))
}

fn strings_equal(x: &Value, y: &Value) -> bool {
    let text = |v: &Value| match v {
        Value::String(s) => Some(s.trim_end().to_string()),
        Value::Bool(true) => Some("true".to_string()),
        Value::Bool(false) => Some("false".to_string()),
        _ => None,
    };
    match (text(x), text(y)) {
        (Some(p), Some(q)) if x.is_boolean() || y.is_boolean() => p.to_lowercase() == q.to_lowercase(),
        (Some(p), Some(q)) => p == q,
        _ => false,
    }
}

/// Rebuilds every object with keys in sorted order.
fn sorted(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let b: BTreeMap<&String, Value> = m.iter().map(|(k, x)| (k, sorted(x))).collect();
            Value::Object(b.into_iter().map(|(k, x)| (k.clone(), x)).collect())
        }
        Value::Array(xs) => Value::Array(xs.iter().map(sorted).collect()),
        other => other.clone(),
    }
}

/// Walks two key-sorted values in lockstep.
fn json_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => numbers_close(x.as_f64().unwrap(), y.as_f64().unwrap()),
        (Value::String(x), Value::String(y)) => x.trim_end() == y.trim_end(),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_equal(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|((k1, v1), (k2, v2))| k1 == k2 && json_equal(v1, v2))
        }
        _ => a == b,
    }
}

fn millis(v: &Value) -> Option<Vec<i64>> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)).map(|x| vec![x]),
        Value::Array(xs) => xs.iter().map(millis).collect::<Option<Vec<_>>>().map(|v| v.concat()),
        Value::Object(m) => m.get("dates").or_else(|| m.get("value")).and_then(millis),
        _ => None,
    }
}

fn data_members(a: &NpzArchive) -> BTreeMap<String, &NpyArray> {
    a.members
        .iter()
        .filter(|(n, _)| n != "__meta__")
        .map(|(n, x)| (n.trim_start_matches("band_").to_string(), x))
        .collect()
}

fn arrays_equal(group: ValueGroup, a: &NpzArchive, b: &NpzArchive) -> bool {
    let (ma, mb) = (data_members(a), data_members(b));
    if ma.is_empty() || mb.is_empty() {
        return false;
    }
    if ma.len() == 1 && mb.len() == 1 {
        return array_equal(group, ma.values().next().unwrap(), mb.values().next().unwrap());
    }
    ma.len() == mb.len()
        && ma.iter().all(|(k, x)| mb.get(k).is_some_and(|y| array_equal(group, x, y)))
}

fn array_equal(group: ValueGroup, a: &NpyArray, b: &NpyArray) -> bool {
    if a.shape != b.shape {
        return false;
    }
    let (x, y) = (a.numeric().unwrap(), b.numeric().unwrap());
    let limit = if group == ValueGroup::Raster { RASTER_ABS } else { ABS };
    let same = |p: f64, q: f64| (p.is_nan() && q.is_nan()) || (p - q).abs() <= limit;
    let n = a.shape.len();
    if group != ValueGroup::Raster || n < 2 || (a.shape[n - 2] <= LARGE && a.shape[n - 1] <= LARGE) {
        return x.iter().zip(y).all(|(&p, &q)| same(p, q));
    }
    let (h, w) = (a.shape[n - 2], a.shape[n - 1]);
    let (r0, c0) = ((h - WINDOW) / 2, (w - WINDOW) / 2);
    (0..x.len() / (h * w)).all(|band| {
        (r0..r0 + WINDOW).all(|r| (c0..c0 + WINDOW).all(|c| {
            let i = band * h * w + r * w + c;
            same(x[i], y[i])
        }))
    })
}

type Q = (i64, i64);

fn snap(v: &Value) -> Option<Q> {
    let c = v.as_array()?;
    let f = |x: &Value| x.as_f64().map(|x| (x * 1e7).round() as i64);
    Some((f(c.first()?)?, f(c.get(1)?)?))
}

fn snap_all(v: &Value) -> Option<Vec<Q>> {
    v.as_array()?.iter().map(snap).collect()
}

fn text(pts: &[Q]) -> String {
    pts.iter().map(|(x, y)| format!("{x},{y}")).collect::<Vec<_>>().join(" ")
}

fn collinear_between(a: Q, p: Q, b: Q) -> bool {
    let cross = (p.0 - a.0) as i128 * (b.1 - a.1) as i128 - (p.1 - a.1) as i128 * (b.0 - a.0) as i128;
    cross == 0 && p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn canonical_line(mut pts: Vec<Q>) -> String {
    pts.dedup();
    let mut i = 1;
    while i + 1 < pts.len() {
        if collinear_between(pts[i - 1], pts[i], pts[i + 1]) {
            pts.remove(i);
        } else {
            i += 1;
        }
    }
    let fwd = text(&pts);
    pts.reverse();
    fwd.min(text(&pts))
}

fn canonical_ring(mut pts: Vec<Q>) -> String {
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    pts.dedup();
    loop {
        let n = pts.len();
        if n < 3 {
            break;
        }
        match (0..n).find(|&i| collinear_between(pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n])) {
            Some(i) => {
                pts.remove(i);
            }
            None => break,
        }
    }
    let mut best: Option<String> = None;
    for ring in [pts.clone(), pts.iter().rev().cloned().collect()] {
        for k in 0..ring.len() {
            let mut r = ring.clone();
            r.rotate_left(k);
            let t = text(&r);
            if best.as_ref().is_none_or(|b| t < *b) {
                best = Some(t);
            }
        }
    }
    best.unwrap_or_default()
}

fn geometry_parts(v: &Value, out: &mut Vec<String>) -> Option<()> {
    let o = v.as_object()?;
    let c = o.get("coordinates");
    match o.get("type")?.as_str()? {
        "Feature" => match o.get("geometry") {
            Some(Value::Null) | None => {}
            Some(g) => geometry_parts(g, out)?,
        },
        "FeatureCollection" => {
            for f in o.get("features")?.as_array()? {
                geometry_parts(f, out)?;
            }
        }
        "GeometryCollection" => {
            for g in o.get("geometries")?.as_array()? {
                geometry_parts(g, out)?;
            }
        }
        "Point" => out.push(format!("P {}", text(&[snap(c?)?]))),
        "MultiPoint" => {
            for p in snap_all(c?)? {
                out.push(format!("P {}", text(&[p])));
            }
        }
        "LineString" => out.push(format!("L {}", canonical_line(snap_all(c?)?))),
        "MultiLineString" => {
            for l in c?.as_array()? {
                out.push(format!("L {}", canonical_line(snap_all(l)?)));
            }
        }
        "Polygon" => out.push(canonical_polygon(c?)?),
        "MultiPolygon" => {
            for p in c?.as_array()? {
                out.push(canonical_polygon(p)?);
            }
        }
        _ => return None,
    }
    Some(())
}

fn canonical_polygon(rings: &Value) -> Option<String> {
    let rings = rings.as_array()?;
    let shell = canonical_ring(snap_all(rings.first()?)?);
    let mut holes: Vec<String> = rings[1..].iter().map(|r| snap_all(r).map(canonical_ring)).collect::<Option<_>>()?;
    holes.sort();
    Some(format!("A {shell} / {}", holes.join(" / ")))
}

pub fn canonical_geometry(v: &Value) -> Option<String> {
    let mut parts = Vec::new();
    geometry_parts(v, &mut parts)?;
    parts.sort();
    Some(parts.join(" | "))
}

// ---------------------------------------------------------------- corpus

fn single(name: &str, a: NpyArray) -> ValueDocument {
    let mut ar = NpzArchive::default();
    ar.push(name, a);
    ValueDocument::Arrays(ar)
}

fn raster(bands: &[(&str, NpyArray)]) -> ValueDocument {
    let mut ar = NpzArchive::default();
    for (n, a) in bands {
        ar.push(format!("band_{n}"), a.clone());
    }
    ar.push("__meta__", NpyArray::from_strings(bands.iter().map(|(n, _)| n.to_string()).collect()));
    ValueDocument::Arrays(ar)
}

fn values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| (rng.gen_range(-10000..10000) as f64) / 100.0).collect()
}

fn fx(label: String, group: ValueGroup, actual: ValueDocument, expected: ValueDocument, designed: bool) -> Fixture {
    Fixture { label, group, actual, expected, designed }
}

fn array_fixture(rng: &mut ChaCha8Rng, variant: usize) -> (ValueDocument, ValueDocument, bool, &'static str) {
    let shapes: [&[usize]; 4] = [&[3], &[2, 3], &[4, 4], &[2, 2, 2]];
    let shape = shapes.choose(rng).unwrap().to_vec();
    let n: usize = shape.iter().product();
    let data = values(rng, n);
    let base = NpyArray::from_f64(shape.clone(), data.clone());
    let other_name = if rng.gen_bool(0.5) { "arr_0" } else { "result" };
    let k = rng.gen_range(0..n);
    let mut d2 = data.clone();
    match variant % 7 {
        0 => (single("arr_0", base.clone()), single(other_name, base), true, "identical"),
        1 => {
            let near: Vec<f64> = data.iter().map(|x| x + 1e-9).collect();
            (single("arr_0", NpyArray::from_f64(shape, near)), single(other_name, base), true, "within tolerance")
        }
        2 => {
            d2[k] += 1e-3;
            (single("arr_0", NpyArray::from_f64(shape, d2)), single("arr_0", base), false, "one element off")
        }
        3 => {
            let mut s2 = shape.clone();
            s2.push(1);
            (single("arr_0", NpyArray::from_f64(s2, data)), single("arr_0", base), false, "reshaped")
        }
        4 => {
            d2[k] = f64::NAN;
            let a = NpyArray::from_f64(shape.clone(), d2.clone());
            (single("arr_0", a.clone()), single("arr_0", a), true, "matching NaN")
        }
        5 => {
            d2[k] = f64::NAN;
            (single("arr_0", NpyArray::from_f64(shape, d2)), single("arr_0", base), false, "NaN vs number")
        }
        _ => {
            let ints: Vec<i64> = (0..n).map(|_| rng.gen_range(-50..50)).collect();
            let floats: Vec<f64> = ints.iter().map(|&i| i as f64).collect();
            (
                single("arr_0", NpyArray::from_i64(shape.clone(), ints)),
                single("arr_0", NpyArray::from_f64(shape, floats)),
                true,
                "int vs float",
            )
        }
    }
}

fn raster_fixture(rng: &mut ChaCha8Rng, variant: usize) -> (ValueDocument, ValueDocument, bool, &'static str) {
    let small = |rng: &mut ChaCha8Rng| NpyArray::from_f64(vec![4, 5], values(rng, 20));
    let (b1, b2) = (small(rng), small(rng));
    let shift = |a: &NpyArray, d: f64, at: Option<usize>| {
        let mut v = a.numeric().unwrap().to_vec();
        match at {
            Some(i) => v[i] += d,
            None => v.iter_mut().for_each(|x| *x += d),
        }
        NpyArray::from_f64(a.shape.clone(), v)
    };
    match variant % 8 {
        0 => (raster(&[("B1", b1.clone()), ("B2", b2.clone())]), raster(&[("B1", b1), ("B2", b2)]), true, "identical"),
        1 => (raster(&[("B1", shift(&b1, 5e-4, None))]), raster(&[("B1", b1)]), true, "within raster tolerance"),
        2 => {
            let i = rng.gen_range(0..20);
            (raster(&[("B1", shift(&b1, 2e-3, Some(i)))]), raster(&[("B1", b1)]), false, "one pixel off")
        }
        3 => (raster(&[("B2", b2.clone()), ("B1", b1.clone())]), raster(&[("B1", b1), ("B2", b2)]), true, "band order"),
        4 => (raster(&[("B1", b1.clone())]), raster(&[("B1", b1), ("B2", b2)]), false, "band missing"),
        v @ (5 | 6) => {
            let s = LARGE_SIDE;
            let base = vec![rng.gen_range(0..100) as f64; s * s];
            let mut moved = base.clone();
            if v == 5 {
                moved[0] += 5.0;
            } else {
                moved[(s / 2) * s + s / 2] += 5.0;
            }
            (
                raster(&[("B1", NpyArray::from_f64(vec![s, s], moved))]),
                raster(&[("B1", NpyArray::from_f64(vec![s, s], base))]),
                v == 5,
                if v == 5 { "large, differs outside window" } else { "large, differs in window" },
            )
        }
        _ => {
            let t = NpyArray::from_f64(vec![5, 4], b1.numeric().unwrap().to_vec());
            (raster(&[("B1", t)]), raster(&[("B1", b1)]), false, "transposed shape")
        }
    }
}

fn random_list(rng: &mut ChaCha8Rng) -> Vec<Value> {
    let n = rng.gen_range(3..7);
    let mut out: Vec<Value> = (0..n)
        .map(|i| match rng.gen_range(0..3) {
            0 => json!(rng.gen_range(-1000..1000) as f64 / 7.0),
            1 => json!(format!("item{i}")),
            _ => json!([i, format!("n{i}")]),
        })
        .collect();
    out[0] = json!("first");
    out
}

fn list_fixture(rng: &mut ChaCha8Rng, variant: usize) -> (Value, Value, bool, &'static str) {
    let base = random_list(rng);
    let mut other = base.clone();
    match variant % 5 {
        0 => (json!(base), json!(other), true, "identical"),
        1 => {
            other.reverse();
            (json!(other), json!(base), false, "reversed")
        }
        2 => {
            other.push(json!(12.5));
            let mut base = base;
            base.push(json!(12.5 * (1.0 + 1e-9)));
            (json!(other), json!(base), true, "relative rounding")
        }
        3 => {
            other.push(json!(0));
            (json!(other), json!(base), false, "extra element")
        }
        _ => {
            other.push(json!([1, "a"]));
            let mut base = base;
            base.push(json!([1, "b"]));
            (json!(other), json!(base), false, "nested string differs")
        }
    }
}

fn string_fixture(rng: &mut ChaCha8Rng, variant: usize) -> (Value, Value, bool, &'static str) {
    let words = ["landsat", "sentinel", "NDVI", "B4", "hello world"];
    let w = words.choose(rng).unwrap().to_string();
    match variant % 6 {
        0 => (json!(w), json!(w), true, "identical"),
        1 => (json!(format!("{w}  \n")), json!(w), true, "trailing whitespace"),
        2 => (json!(w.to_uppercase() + "x"), json!(w + "X"), false, "case differs"),
        3 => (json!("true"), json!(true), true, "boolean as string"),
        4 => (json!("True"), json!(false), false, "boolean mismatch"),
        _ => (json!(format!(" {w}")), json!(w), false, "leading whitespace"),
    }
}

fn number_fixture(rng: &mut ChaCha8Rng, variant: usize) -> (Value, Value, bool, &'static str) {
    let x = rng.gen_range(-10000..10000) as f64 / 100.0 + 0.5;
    match variant % 6 {
        0 => (json!(x), json!(x), true, "identical"),
        1 => (json!(x + 1e-9), json!(x), true, "within absolute tolerance"),
        2 => (json!(x + 1e-3), json!(x), false, "outside tolerance"),
        3 => (json!(x * 1e9 * (1.0 + 1e-7)), json!(x * 1e9), true, "within relative tolerance"),
        4 => (json!(3), json!(3.0), true, "int vs float"),
        _ => (json!("3"), json!(3), false, "string vs number"),
    }
}

fn dict_fixture(rng: &mut ChaCha8Rng, variant: usize) -> (Value, Value, bool, &'static str) {
    let keys = ["type", "bands", "scale", "crs", "id"];
    let mut pairs: Vec<(String, Value)> = keys
        .iter()
        .map(|k| (k.to_string(), json!(rng.gen_range(0..1000) as f64 / 3.0)))
        .collect();
    pairs.push(("nested".into(), json!({"a": [1, 2], "b": "x"})));
    let build = |ps: &[(String, Value)]| Value::Object(ps.iter().cloned().collect::<Map<_, _>>());
    let base = build(&pairs);
    match variant % 5 {
        0 => (base.clone(), base, true, "identical"),
        1 => {
            let mut rev = pairs.clone();
            rev.reverse();
            (build(&rev), base, true, "keys reordered")
        }
        2 => {
            let mut v = base.clone();
            v["nested"]["a"][1] = json!(3);
            (v, base, false, "nested value differs")
        }
        3 => {
            let mut v = base.clone();
            v["extra"] = json!(null);
            (v, base, false, "extra key")
        }
        _ => {
            let mut v = base.clone();
            let s = v["scale"].as_f64().unwrap();
            v["scale"] = json!(s + 1e-9);
            (v, base, true, "value within tolerance")
        }
    }
}

fn timestamp_fixture(rng: &mut ChaCha8Rng, variant: usize) -> (Value, Value, bool, &'static str) {
    let t: i64 = 1_500_000_000_000 + rng.gen_range(0..100_000_000_000i64);
    let t1 = t + 86_400_000 * rng.gen_range(1..30);
    match variant % 6 {
        0 => (json!({"type": "Date", "value": t}), json!(t), true, "dictionary vs bare"),
        1 => (json!({"type": "Date", "value": t + 1}), json!({"type": "Date", "value": t}), false, "+1 ms"),
        2 => (json!({"type": "Date", "value": t - 1}), json!(t), false, "-1 ms"),
        3 => (json!({"type": "DateRange", "dates": [t, t1]}), json!([t, t1]), true, "range endpoints"),
        4 => (json!({"type": "DateRange", "dates": [t, t1 + 1]}), json!([t, t1]), false, "range end +1 ms"),
        _ => (json!({"value": t}), json!({"type": "Date", "value": t}), true, "value field only"),
    }
}

fn ring(rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let (cx, cy) = (rng.gen_range(-40..40) as f64 * 0.25, rng.gen_range(-40..40) as f64 * 0.25);
    let shape = [[0.0, 0.0], [2.0, 0.0], [3.0, 1.5], [1.5, 3.0], [-0.5, 1.25]];
    let mut r: Vec<[f64; 2]> = shape.iter().map(|[x, y]| [cx + x, cy + y]).collect();
    r.push(r[0]);
    r
}

fn polygon(r: &[[f64; 2]]) -> Value {
    json!({"type": "Polygon", "coordinates": [r]})
}

fn rotate(r: &[[f64; 2]], k: usize) -> Vec<[f64; 2]> {
    let mut open = r[..r.len() - 1].to_vec();
    open.rotate_left(k);
    open.push(open[0]);
    open
}

fn reverse(r: &[[f64; 2]]) -> Vec<[f64; 2]> {
    r.iter().rev().cloned().collect()
}

fn point(rng: &mut ChaCha8Rng) -> Value {
    json!({"type": "Point", "coordinates": [rng.gen_range(-720..720) as f64 * 0.25, rng.gen_range(-360..360) as f64 * 0.25]})
}

fn feature(g: Value, id: usize) -> Value {
    json!({"type": "Feature", "geometry": g, "properties": {"id": id}})
}

fn geojson_fixture(rng: &mut ChaCha8Rng, variant: usize) -> (Value, Value, bool, &'static str) {
    let r = ring(rng);
    let base = polygon(&r);
    let k = rng.gen_range(1..5);
    match variant % 10 {
        0 => (polygon(&rotate(&r, k)), base, true, "ring rotated"),
        1 => (polygon(&reverse(&r)), base, true, "ring reversed"),
        2 => (polygon(&reverse(&rotate(&r, k))), base, true, "ring rotated and reversed"),
        3 => {
            let mut m = r.clone();
            m[2][0] += 1e-12;
            (polygon(&m), base, true, "vertex within tolerance")
        }
        4 => {
            let mut m = r.clone();
            m[2][0] += 1e-3;
            (polygon(&m), base, false, "vertex moved")
        }
        5 => (json!({"type": "Feature", "geometry": base.clone(), "properties": {"x": 9}}), base, true, "feature vs bare"),
        6 => {
            let fs: Vec<Value> = (0..3).map(|i| feature(point(rng), i)).collect();
            let mut shuffled = fs.clone();
            shuffled.rotate_left(1);
            (
                json!({"type": "FeatureCollection", "features": shuffled}),
                json!({"type": "FeatureCollection", "features": fs}),
                true,
                "collection reordered",
            )
        }
        7 => {
            let fs: Vec<Value> = (0..3).map(|i| feature(point(rng), i)).collect();
            let mut changed = fs.clone();
            changed[1] = feature(json!({"type": "Point", "coordinates": [500.0, 500.0]}), 1);
            (
                json!({"type": "FeatureCollection", "features": changed}),
                json!({"type": "FeatureCollection", "features": fs}),
                false,
                "collection member differs",
            )
        }
        8 => {
            let line: Vec<[f64; 2]> = r[..3].to_vec();
            let back: Vec<[f64; 2]> = line.iter().rev().cloned().collect();
            (
                json!({"type": "LineString", "coordinates": back}),
                json!({"type": "LineString", "coordinates": line}),
                true,
                "line reversed",
            )
        }
        _ => {
            let p = point(rng);
            let mut q = p.clone();
            q["coordinates"][1] = json!(q["coordinates"][1].as_f64().unwrap() + 0.25);
            (q, p, false, "point moved")
        }
    }
}

/// One fixture of `group` built from `variant`; the same seed always
/// yields the same fixture.
pub fn fixture(group: ValueGroup, variant: usize, rng: &mut ChaCha8Rng) -> Fixture {
    let j = |(a, e, d, what): (Value, Value, bool, &str)| (ValueDocument::Json(a), ValueDocument::Json(e), d, what.to_string());
    let (a, e, d, what) = match group {
        ValueGroup::Array => {
            let (a, e, d, w) = array_fixture(rng, variant);
            (a, e, d, w.to_string())
        }
        ValueGroup::Raster => {
            let (a, e, d, w) = raster_fixture(rng, variant);
            (a, e, d, w.to_string())
        }
        ValueGroup::Geojson => {
            let (a, e, d, w) = geojson_fixture(rng, variant);
            (ValueDocument::GeoJson(a), ValueDocument::GeoJson(e), d, w.to_string())
        }
        ValueGroup::List => j(list_fixture(rng, variant)),
        ValueGroup::String => j(string_fixture(rng, variant)),
        ValueGroup::Number => j(number_fixture(rng, variant)),
        ValueGroup::Dict => j(dict_fixture(rng, variant)),
        ValueGroup::Timestamp => j(timestamp_fixture(rng, variant)),
    };
    fx(format!("{group} #{variant}: {what}"), group, a, e, d)
}

pub const GROUPS: [ValueGroup; 8] = [
    ValueGroup::Array,
    ValueGroup::Raster,
    ValueGroup::List,
    ValueGroup::String,
    ValueGroup::Number,
    ValueGroup::Dict,
    ValueGroup::Timestamp,
    ValueGroup::Geojson,
];

/// 25 fixtures per group, 200 in all.
pub fn corpus(seed: u64) -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GROUPS
        .iter()
        .flat_map(|&g| (0..25).map(move |v| (g, v)))
        .map(|(g, v)| fixture(g, v, &mut rng))
        .collect()
}

/// Random small documents for reflexivity and symmetry fuzzing: the two
/// sides of a random fixture, skipping the large rasters and the
/// deliberately mistyped number document.
pub fn fuzz_documents(seed: u64, count: usize) -> Vec<(ValueGroup, ValueDocument, ValueDocument)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let g = *GROUPS.choose(&mut rng).unwrap();
        let v = rng.gen_range(0..10);
        if (g == ValueGroup::Raster && matches!(v % 8, 5 | 6)) || (g == ValueGroup::Number && v % 6 == 5) {
            continue;
        }
        let f = fixture(g, v, &mut rng);
        out.push((g, f.actual, f.expected));
    }
    out
}
