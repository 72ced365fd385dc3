//! Leaderboard, accuracy, resource, and error-distribution reports.
//!
//! Reports are computed from attempt records alone, so equal logs give
//! byte-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::classify::{ErrorCategory, ErrorDistribution};
use crate::metrics::{self, MetricsError, ModelSummary};
use crate::runner::ExecStatus;
use crate::submission::AttemptRecord;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no attempt records")]
    EmptyLogs,
    #[error("model {model}: {source}")]
    Metrics { model: String, source: MetricsError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub model_id: String,
    pub attempts: usize,
    pub distribution: ErrorDistribution,
    /// Failures that were timeouts (counted under parameter errors).
    pub timeouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// In leaderboard order.
    pub models: Vec<ModelSummary<f64>>,
    pub errors: Vec<ErrorRow>,
}

/// Summaries, ranks, and error distributions for every model in the log.
pub fn build_report(records: &[AttemptRecord]) -> Result<Report, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyLogs);
    }
    let mut by_model: BTreeMap<&str, Vec<AttemptRecord>> = BTreeMap::new();
    for r in records {
        by_model.entry(r.model_id.as_str()).or_default().push(r.clone());
    }
    let mut models = Vec::new();
    let mut errors = Vec::new();
    for (id, recs) in &by_model {
        models.push(
            metrics::summarize::<f64>(id, recs)
                .map_err(|source| ReportError::Metrics { model: id.to_string(), source })?,
        );
        let failed: Vec<&AttemptRecord> = recs.iter().filter(|r| !r.passed()).collect();
        errors.push(ErrorRow {
            model_id: id.to_string(),
            attempts: recs.len(),
            distribution: ErrorDistribution::from_categories(
                // an unclassified failure in a hand-edited log still counts
                failed.iter().map(|r| r.error_category.unwrap_or(ErrorCategory::ParameterError)),
            ),
            timeouts: failed.iter().filter(|r| r.execution.status == ExecStatus::Timeout).count(),
        });
    }
    metrics::rank_models(&mut models);
    metrics::leaderboard_order(&mut models);
    let order: Vec<&str> = models.iter().map(|m| m.model_id.as_str()).collect();
    errors.sort_by_key(|e| order.iter().position(|m| *m == e.model_id));
    Ok(Report { models, errors })
}

/// A rendered table: headers plus string cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub name: &'static str,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

const DASH: &str = "–";

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// `63.62 (+4.60)`: the value and its change from `prev`, both in percent.
pub fn with_delta(value: f64, prev: f64) -> String {
    let (v, p) = (round2(value * 100.0), round2(prev * 100.0));
    let d = round2(v - p);
    let sign = if d < 0.0 { "-" } else { "+" };
    format!("{v:.2} ({sign}{:.2})", d.abs())
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| DASH.to_string())
}

fn rank_cell(m: &ModelSummary<f64>, f: impl Fn(&metrics::Ranks) -> usize) -> String {
    m.ranks.as_ref().map(|r| f(r).to_string()).unwrap_or_else(|| DASH.into())
}

pub fn leaderboard_table(r: &Report) -> Table {
    let headers = ["Model", "T_Rank", "I_Rank", "Co_Rank", "E_Rank", "S_Rank", "P_Rank", "C_Rank", "Total_Rank"];
    Table {
        name: "leaderboard",
        headers: headers.iter().map(|s| s.to_string()).collect(),
        rows: r
            .models
            .iter()
            .map(|m| {
                vec![
                    m.model_id.clone(),
                    rank_cell(m, |r| r.t),
                    rank_cell(m, |r| r.i),
                    rank_cell(m, |r| r.co),
                    rank_cell(m, |r| r.e),
                    rank_cell(m, |r| r.s),
                    rank_cell(m, |r| r.p),
                    rank_cell(m, |r| r.c),
                    rank_cell(m, |r| r.total),
                ]
            })
            .collect(),
    }
}

pub fn accuracy_table(r: &Report) -> Table {
    let headers = ["Model", "pass@1", "pass@3", "pass@5", "CV", "SA"];
    let rows = r
        .models
        .iter()
        .map(|m| {
            let p1 = m.pass(1);
            let p3 = m.pass(3);
            let p5 = m.pass(5);
            let delta = |v: Option<f64>, prev: Option<f64>| match (v, prev) {
                (Some(v), Some(p)) => with_delta(v, p),
                (Some(v), None) => pct(v),
                _ => DASH.into(),
            };
            vec![
                m.model_id.clone(),
                opt(p1, pct),
                delta(p3, p1),
                delta(p5, p3.or(p1)),
                opt(m.cv, |c| format!("{c:.3}")),
                opt(m.sa, pct),
            ]
        })
        .collect();
    Table { name: "accuracy", headers: headers.iter().map(|s| s.to_string()).collect(), rows }
}

pub fn resource_table(r: &Report) -> Table {
    let headers = ["Model", "Tok.", "In.T", "Co.L", "Tok-E", "In.T-E", "Co.L-E", "Tok. estimated"];
    let rows = r
        .models
        .iter()
        .map(|m| {
            let res = m.resources.as_ref();
            let eff = m.efficiency.as_ref();
            vec![
                m.model_id.clone(),
                opt(res.map(|x| x.tok_avg), |v| format!("{v:.2}")),
                opt(res.map(|x| x.inft_avg), |v| format!("{v:.2}")),
                opt(res.map(|x| x.col_avg), |v| format!("{v:.2}")),
                opt(eff.map(|x| x.tok_eff), |v| format!("{v:.3}")),
                opt(eff.map(|x| x.inft_eff), |v| format!("{v:.3}")),
                opt(eff.map(|x| x.col_eff), |v| format!("{v:.3}")),
                opt(res.map(|x| x.tokens_estimated_fraction), pct),
            ]
        })
        .collect();
    Table { name: "resources", headers: headers.iter().map(|s| s.to_string()).collect(), rows }
}

pub fn error_table(r: &Report) -> Table {
    let mut headers = vec!["Model".to_string()];
    headers.extend(ErrorCategory::ALL.iter().map(|c| c.label().to_string()));
    headers.push("Note".into());
    let rows = r
        .errors
        .iter()
        .map(|e| {
            let mut row = vec![e.model_id.clone()];
            for c in ErrorCategory::ALL {
                row.push(opt(e.distribution.percent(c), |p| format!("{p:.2}")));
            }
            let note = if e.distribution.failures == 0 {
                "100% pass".to_string()
            } else if e.timeouts > 0 {
                format!("{} of {} failures were timeouts", e.timeouts, e.distribution.failures)
            } else {
                String::new()
            };
            row.push(note);
            row
        })
        .collect();
    Table { name: "errors", headers, rows }
}

pub fn tables(r: &Report) -> Vec<Table> {
    vec![leaderboard_table(r), accuracy_table(r), resource_table(r), error_table(r)]
}

pub fn render_json(r: &Report) -> String {
    let tables: serde_json::Map<String, Value> = tables(r)
        .into_iter()
        .map(|t| {
            let rows: Vec<Value> = t
                .rows
                .iter()
                .map(|row| {
                    Value::Object(t.headers.iter().cloned().zip(row.iter().map(|c| json!(c))).collect())
                })
                .collect();
            (t.name.to_string(), Value::Array(rows))
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&json!({"summaries": r.models, "errors": r.errors, "tables": tables}))
        .expect("report serializes");
    s.push('\n');
    s
}

pub fn render_csv(t: &Table) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.headers)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv of strings is utf-8"))
}

pub fn render_text_table(t: &Table) -> String {
    let widths: Vec<usize> = (0..t.headers.len())
        .map(|i| {
            std::iter::once(&t.headers[i])
                .chain(t.rows.iter().map(|r| &r[i]))
                .map(|c| c.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = widths[i] - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(&t.headers));
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in &t.rows {
        let _ = writeln!(out, "{}", line(r));
    }
    out
}

pub fn render_text(r: &Report) -> String {
    let titles = [
        ("leaderboard", "Leaderboard"),
        ("accuracy", "Accuracy (%)"),
        ("resources", "Resources and efficiency"),
        ("errors", "Error type distribution (% of failures)"),
    ];
    let mut out = String::new();
    for t in tables(r) {
        let title = titles.iter().find(|(n, _)| *n == t.name).map_or(t.name, |(_, x)| *x);
        let _ = writeln!(out, "{title}\n");
        out.push_str(&render_text_table(&t));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

/// Writes the report in `format` under `dir`; returns the files written.
pub fn write_report(r: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    let files: Vec<(PathBuf, String)> = match format {
        Format::Json => vec![(dir.join("report.json"), render_json(r))],
        Format::Text => vec![(dir.join("report.txt"), render_text(r))],
        Format::Csv => tables(r)
            .iter()
            .map(|t| Ok((dir.join(format!("{}.csv", t.name)), render_csv(t)?)))
            .collect::<Result<_, ReportError>>()?,
    };
    let mut written = Vec::new();
    for (p, text) in files {
        fs::write(&p, text).map_err(|source| ReportError::Io { path: p.clone(), source })?;
        written.push(p);
    }
    Ok(written)
}
