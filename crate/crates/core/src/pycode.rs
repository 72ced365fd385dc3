//! Line-level helpers for the Python sources that cases and models exchange.
//!
//! Nothing here is a parser. The rules only look at indentation and a few
//! leading keywords, which is enough for single-function snippets.

use std::sync::OnceLock;

use regex::Regex;

fn def_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\s*)(?:async\s+)?def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\(").unwrap())
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

/// Names of every `def` in the source, in order, at any depth.
pub fn function_names(src: &str) -> Vec<String> {
    src.lines()
        .filter_map(|l| def_re().captures(l).map(|c| c[2].to_string()))
        .collect()
}

/// Names of the unindented `def`s.
pub fn top_level_functions(src: &str) -> Vec<String> {
    src.lines()
        .filter_map(|l| def_re().captures(l))
        .filter(|c| c[1].is_empty())
        .map(|c| c[2].to_string())
        .collect()
}

/// First top-level function name, falling back to any `def`.
pub fn entry_point(src: &str) -> Option<String> {
    top_level_functions(src)
        .into_iter()
        .next()
        .or_else(|| function_names(src).into_iter().next())
}

/// Splits a function source into `(header, body)` where the header is the
/// `def` line(s) up to the closing colon plus an immediately following
/// docstring. Returns `None` when the source has no `def`.
pub fn split_header_body(src: &str) -> Option<(String, String)> {
    let lines: Vec<&str> = src.lines().collect();
    let start = lines.iter().position(|l| def_re().is_match(l))?;
    // signature may span lines; it ends at the first line whose code ends with ':'
    let mut i = start;
    while i < lines.len() {
        let code = strip_comment(lines[i]).trim_end();
        if code.ends_with(':') {
            break;
        }
        i += 1;
    }
    if i >= lines.len() {
        return None;
    }
    let mut end = i + 1;
    // optional docstring
    let mut j = end;
    while j < lines.len() && lines[j].trim().is_empty() {
        j += 1;
    }
    if j < lines.len() {
        let t = lines[j].trim_start();
        let quote = ["\"\"\"", "'''"].into_iter().find(|q| {
            t.starts_with(q)
                || ["r", "u", "R", "U"]
                    .iter()
                    .any(|p| t.strip_prefix(p).is_some_and(|r| r.starts_with(q)))
        });
        if let Some(q) = quote {
            let after_open = &t[t.find(q).unwrap() + 3..];
            if after_open.contains(q) {
                end = j + 1;
            } else if let Some(k) = (j + 1..lines.len()).find(|&k| lines[k].contains(q)) {
                end = k + 1;
            }
        }
    }
    let header = lines[start..end].join("\n");
    let body = lines[end..].join("\n");
    Some((header, body))
}

fn strip_comment(line: &str) -> &str {
    // good enough for signatures: a '#' inside a default string value is rare
    match line.find('#') {
        Some(p) => &line[..p],
        None => line,
    }
}

/// Does the source contain an unindented `def`?
pub fn has_function_definition(src: &str) -> bool {
    src.lines().any(|l| def_re().captures(l).is_some_and(|c| c[1].is_empty()))
}

/// Re-indents a bare body under `header`. Lines keep their relative
/// indentation; the shallowest non-blank line lands at four spaces.
pub fn attach_body(header: &str, body: &str) -> String {
    let min = body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(indent_of)
        .min()
        .unwrap_or(0);
    let mut out = header.trim_end().to_string();
    for line in body.lines() {
        out.push('\n');
        if !line.trim().is_empty() {
            out.push_str("    ");
            out.push_str(&line[min.min(indent_of(line))..]);
        }
    }
    out.push('\n');
    out
}

/// Byte ranges of the contiguous regions that look like one function
/// definition: a top-level `def` line followed by indented or blank lines.
pub fn function_regions(src: &str) -> Vec<std::ops::Range<usize>> {
    let mut offsets = Vec::new();
    let mut pos = 0;
    for line in src.split_inclusive('\n') {
        offsets.push((pos, line));
        pos += line.len();
    }
    let mut regions = Vec::new();
    let mut i = 0;
    while i < offsets.len() {
        let (off, line) = offsets[i];
        let base = indent_of(line.trim_end_matches(['\n', '\r']));
        if def_re().is_match(line) {
            let mut last_code = i;
            let mut k = i + 1;
            while k < offsets.len() {
                let l = offsets[k].1.trim_end_matches(['\n', '\r']);
                if l.trim().is_empty() {
                    k += 1;
                    continue;
                }
                if indent_of(l) > base {
                    last_code = k;
                    k += 1;
                } else {
                    break;
                }
            }
            // a def with no indented body is not a function definition
            if last_code > i {
                let (end_off, end_line) = offsets[last_code];
                regions.push(off..end_off + end_line.len());
            }
            i = last_code + 1;
        } else {
            i += 1;
        }
    }
    regions
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_header_with_docstring() {
        let src = "def f(x):\n    \"\"\"Doc\n    more.\n    \"\"\"\n    return x\n";
        let (h, b) = split_header_body(src).unwrap();
        assert_eq!(h, "def f(x):\n    \"\"\"Doc\n    more.\n    \"\"\"");
        assert_eq!(b, "    return x");
    }

    #[test]
    fn splits_multiline_signature_without_docstring() {
        let src = "def f(a,\n      b):\n    return a + b";
        let (h, b) = split_header_body(src).unwrap();
        assert_eq!(h, "def f(a,\n      b):");
        assert_eq!(b, "    return a + b");
    }

    #[test]
    fn single_line_docstring() {
        let (h, b) = split_header_body("def g():\n    '''one'''\n    return 1").unwrap();
        assert_eq!(h, "def g():\n    '''one'''");
        assert_eq!(b, "    return 1");
    }

    #[test]
    fn attach_body_reindents() {
        let out = attach_body("def f(x):", "return x\n");
        assert_eq!(out, "def f(x):\n    return x\n");
        let out = attach_body("def f(x):", "  if x:\n      return 1\n  return 0");
        assert_eq!(out, "def f(x):\n    if x:\n        return 1\n    return 0\n");
    }

    #[test]
    fn regions_skip_bodyless_defs() {
        let src = "text\ndef a():\n    return 1\n\nmore\ndef b():\nnot indented\n";
        let r = function_regions(src);
        assert_eq!(r.len(), 1);
        assert_eq!(&src[r[0].clone()], "def a():\n    return 1\n");
    }

    #[test]
    fn entry_point_prefers_top_level() {
        let src = "def outer(x):\n    def inner():\n        return 1\n    return inner()\n";
        assert_eq!(entry_point(src).as_deref(), Some("outer"));
        assert_eq!(function_names(src), vec!["outer", "inner"]);
        assert_eq!(top_level_functions(src), vec!["outer"]);
    }
}
