//! Point-set comparison of GeoJSON values.
//!
//! Features and collections are reduced to their geometries, multi-part
//! geometries to their parts. Parts are normalized (duplicate and collinear
//! vertices removed, rings closed-point dropped and oriented) and matched
//! as a multiset; ring start vertex and line direction are searched rather
//! than canonicalized so the coordinate tolerance applies throughout.
//!
//! This is not a full topological equality: a polygon split into two
//! adjacent parts does not equal their union.

use serde_json::Value;

use crate::scalar::Scalar;

type Pos<T> = Vec<T>;

#[derive(Debug, Clone, PartialEq)]
pub enum Part<T> {
    Point(Pos<T>),
    Line(Vec<Pos<T>>),
    /// Exterior ring first, then holes; rings are open (no repeated end).
    Polygon(Vec<Vec<Pos<T>>>),
}

fn position<T: Scalar>(v: &Value) -> Result<Pos<T>, String> {
    let arr = v.as_array().ok_or("position is not an array")?;
    if arr.len() < 2 {
        return Err("position needs at least two coordinates".into());
    }
    arr.iter()
        .map(|c| c.as_f64().map(T::lit).ok_or_else(|| "non-numeric coordinate".to_string()))
        .collect()
}

fn positions<T: Scalar>(v: &Value) -> Result<Vec<Pos<T>>, String> {
    v.as_array().ok_or("expected an array of positions")?.iter().map(position).collect()
}

fn rings<T: Scalar>(v: &Value) -> Result<Vec<Vec<Pos<T>>>, String> {
    v.as_array().ok_or("expected an array of rings")?.iter().map(positions).collect()
}

fn coords(obj: &serde_json::Map<String, Value>) -> Result<&Value, String> {
    obj.get("coordinates").ok_or_else(|| "geometry without coordinates".to_string())
}

/// Flattens any GeoJSON object into its primitive parts.
pub fn parts<T: Scalar>(v: &Value) -> Result<Vec<Part<T>>, String> {
    let obj = v.as_object().ok_or("GeoJSON value is not an object")?;
    let ty = obj.get("type").and_then(Value::as_str).ok_or("GeoJSON object without type")?;
    let mut out = Vec::new();
    match ty {
        "Feature" => match obj.get("geometry") {
            Some(Value::Null) | None => {}
            Some(g) => out.extend(parts(g)?),
        },
        "FeatureCollection" => {
            for f in obj.get("features").and_then(Value::as_array).ok_or("features missing")? {
                out.extend(parts(f)?);
            }
        }
        "GeometryCollection" => {
            for g in obj.get("geometries").and_then(Value::as_array).ok_or("geometries missing")? {
                out.extend(parts(g)?);
            }
        }
        "Point" => out.push(Part::Point(position(coords(obj)?)?)),
        "MultiPoint" => out.extend(positions(coords(obj)?)?.into_iter().map(Part::Point)),
        "LineString" => out.push(Part::Line(positions(coords(obj)?)?)),
        "MultiLineString" => out.extend(rings(coords(obj)?)?.into_iter().map(Part::Line)),
        "Polygon" => out.push(Part::Polygon(rings(coords(obj)?)?)),
        "MultiPolygon" => {
            for p in coords(obj)?.as_array().ok_or("MultiPolygon coordinates")? {
                out.push(Part::Polygon(rings(p)?));
            }
        }
        other => return Err(format!("unsupported GeoJSON type {other:?}")),
    }
    Ok(out)
}

fn max_diff<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    if a.len() != b.len() {
        return None;
    }
    Some(a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs())))
}

fn close<T: Scalar>(a: &[T], b: &[T], eps: T) -> bool {
    max_diff(a, b).is_some_and(|d| d <= eps)
}

fn dedupe<T: Scalar>(pts: &mut Vec<Pos<T>>, eps: T) {
    pts.dedup_by(|b, a| close(a, b, eps));
}

/// Is `p` on the open segment a–b (within eps of the line, between ends)?
fn between<T: Scalar>(a: &[T], p: &[T], b: &[T], eps: T) -> bool {
    let (ax, ay, px, py, bx, by) = (a[0], a[1], p[0], p[1], b[0], b[1]);
    let (dx, dy) = (bx - ax, by - ay);
    let len = (dx * dx + dy * dy).sqrt();
    if len <= eps {
        return false;
    }
    let cross = (dx * (py - ay) - dy * (px - ax)).abs() / len;
    let dot = (px - ax) * dx + (py - ay) * dy;
    cross <= eps && dot > T::zero() && dot < len * len
}

fn drop_collinear_open<T: Scalar>(pts: &mut Vec<Pos<T>>, eps: T) {
    let mut i = 1;
    while pts.len() > 2 && i + 1 < pts.len() {
        if between(&pts[i - 1], &pts[i], &pts[i + 1], eps) {
            pts.remove(i);
        } else {
            i += 1;
        }
    }
}

fn drop_collinear_ring<T: Scalar>(ring: &mut Vec<Pos<T>>, eps: T) {
    let mut changed = true;
    while changed && ring.len() > 3 {
        changed = false;
        let n = ring.len();
        for i in 0..n {
            let (prev, next) = ((i + n - 1) % n, (i + 1) % n);
            if between(&ring[prev], &ring[i], &ring[next], eps) {
                ring.remove(i);
                changed = true;
                break;
            }
        }
    }
}

fn signed_area<T: Scalar>(ring: &[Pos<T>]) -> T {
    let n = ring.len();
    let mut s = T::zero();
    for i in 0..n {
        let (a, b) = (&ring[i], &ring[(i + 1) % n]);
        s = s + (a[0] * b[1] - b[0] * a[1]);
    }
    s / T::lit(2.0)
}

fn normalize_ring<T: Scalar>(mut ring: Vec<Pos<T>>, ccw: bool, eps: T) -> Vec<Pos<T>> {
    dedupe(&mut ring, eps);
    while ring.len() > 1 && close(&ring[0], &ring[ring.len() - 1], eps) {
        ring.pop();
    }
    drop_collinear_ring(&mut ring, eps);
    if ring.len() >= 3 && (signed_area(&ring) > T::zero()) != ccw {
        ring.reverse();
    }
    ring
}

/// Normalized form: points deduplicated, lines and rings simplified,
/// exterior rings counter-clockwise and holes clockwise.
pub fn normalize<T: Scalar>(parts: Vec<Part<T>>, eps: T) -> Vec<Part<T>> {
    let mut out: Vec<Part<T>> = Vec::with_capacity(parts.len());
    for p in parts {
        let n = match p {
            Part::Point(pt) => {
                if out.iter().any(|q| matches!(q, Part::Point(x) if close(x, &pt, eps))) {
                    continue;
                }
                Part::Point(pt)
            }
            Part::Line(mut l) => {
                dedupe(&mut l, eps);
                drop_collinear_open(&mut l, eps);
                if l.len() == 1 {
                    Part::Point(l.pop().unwrap())
                } else {
                    Part::Line(l)
                }
            }
            Part::Polygon(rs) => Part::Polygon(
                rs.into_iter()
                    .enumerate()
                    .map(|(i, r)| normalize_ring(r, i == 0, eps))
                    .collect(),
            ),
        };
        out.push(n);
    }
    out
}

fn seq_dev<T: Scalar>(a: &[Pos<T>], b: &[Pos<T>]) -> Option<T> {
    if a.len() != b.len() {
        return None;
    }
    a.iter().zip(b).try_fold(T::zero(), |m, (x, y)| max_diff(x, y).map(|d| m.max(d)))
}

fn line_dev<T: Scalar>(a: &[Pos<T>], b: &[Pos<T>]) -> Option<T> {
    let rev: Vec<Pos<T>> = b.iter().rev().cloned().collect();
    match (seq_dev(a, b), seq_dev(a, &rev)) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}

/// Smallest deviation over all start vertices of `b` (orientation already
/// normalized).
fn ring_dev<T: Scalar>(a: &[Pos<T>], b: &[Pos<T>]) -> Option<T> {
    if a.len() != b.len() {
        return None;
    }
    if a.is_empty() {
        return Some(T::zero());
    }
    let n = b.len();
    (0..n)
        .filter_map(|s| {
            a.iter()
                .enumerate()
                .try_fold(T::zero(), |m, (i, p)| max_diff(p, &b[(s + i) % n]).map(|d| m.max(d)))
        })
        .fold(None, |best: Option<T>, d| Some(best.map_or(d, |b| b.min(d))))
}

fn polygon_dev<T: Scalar>(a: &[Vec<Pos<T>>], b: &[Vec<Pos<T>>], eps: T) -> Option<T> {
    if a.len() != b.len() || a.is_empty() {
        return if a.is_empty() && b.is_empty() { Some(T::zero()) } else { None };
    }
    let ext = ring_dev(&a[0], &b[0])?;
    if ext > eps {
        return Some(ext);
    }
    // holes as a multiset
    let dev = match_multiset(&a[1..], &b[1..], eps, |x, y| ring_dev(x, y))?;
    Some(ext.max(dev))
}

fn part_dev<T: Scalar>(a: &Part<T>, b: &Part<T>, eps: T) -> Option<T> {
    match (a, b) {
        (Part::Point(x), Part::Point(y)) => max_diff(x, y),
        (Part::Line(x), Part::Line(y)) => line_dev(x, y),
        (Part::Polygon(x), Part::Polygon(y)) => polygon_dev(x, y, eps),
        _ => None,
    }
}

/// Greedy one-to-one matching; every item of `a` must find a partner in `b`
/// within `eps`. Returns the largest matched deviation.
fn match_multiset<X, T: Scalar>(
    a: &[X],
    b: &[X],
    eps: T,
    dev: impl Fn(&X, &X) -> Option<T>,
) -> Option<T> {
    if a.len() != b.len() {
        return None;
    }
    let mut used = vec![false; b.len()];
    let mut worst = T::zero();
    for x in a {
        let mut best: Option<(usize, T)> = None;
        for (j, y) in b.iter().enumerate() {
            if used[j] {
                continue;
            }
            if let Some(d) = dev(x, y) {
                if d <= eps && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        let (j, d) = best?;
        used[j] = true;
        worst = worst.max(d);
    }
    Some(worst)
}

/// Outcome of a geometry comparison: `Ok(deviation)` when the point sets
/// agree within `eps`, otherwise a reason.
pub fn compare<T: Scalar>(a: &Value, b: &Value, eps: T) -> Result<T, String> {
    let pa = normalize(parts::<T>(a).map_err(|e| format!("actual: {e}"))?, eps);
    let pb = normalize(parts::<T>(b).map_err(|e| format!("expected: {e}"))?, eps);
    if pa.len() != pb.len() {
        return Err(format!("part count differs: {} vs {}", pa.len(), pb.len()));
    }
    // match both ways so the verdict does not depend on argument order
    let fwd = match_multiset(&pa, &pb, eps, |x, y| part_dev(x, y, eps));
    let back = match_multiset(&pb, &pa, eps, |x, y| part_dev(x, y, eps));
    match (fwd, back) {
        (Some(x), Some(y)) => Ok(x.max(y)),
        _ => Err("geometries differ".into()),
    }
}
