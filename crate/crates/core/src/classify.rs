//! Failure taxonomy for attempts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::Verdict;
use crate::runner::{ExecStatus, ExecutionOutcome, MAX_RETRIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCategory {
    SyntaxError,
    ParameterError,
    InvalidAnswer,
    NetworkError,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::SyntaxError,
        ErrorCategory::ParameterError,
        ErrorCategory::InvalidAnswer,
        ErrorCategory::NetworkError,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::SyntaxError => "SYNTAX_ERROR",
            ErrorCategory::ParameterError => "PARAMETER_ERROR",
            ErrorCategory::InvalidAnswer => "INVALID_ANSWER",
            ErrorCategory::NetworkError => "NETWORK_ERROR",
        }
    }

    /// Column heading used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::SyntaxError => "Syntax Error",
            ErrorCategory::ParameterError => "Parameter Error",
            ErrorCategory::InvalidAnswer => "Invalid Answer",
            ErrorCategory::NetworkError => "Network Error",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("reading patterns: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing patterns: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad regex {pattern:?}: {source}")]
    Regex { pattern: String, source: regex::Error },
    #[error("category {0} cannot be matched from messages")]
    Unmatchable(ErrorCategory),
}

#[derive(Debug, Clone)]
enum Matcher {
    Substring(String),
    Regex(Regex),
}

impl Matcher {
    fn parse(p: &str) -> Result<Self, PatternError> {
        match p.strip_prefix("re:") {
            Some(re) => RegexBuilder::new(re)
                .case_insensitive(true)
                .build()
                .map(Matcher::Regex)
                .map_err(|source| PatternError::Regex { pattern: p.to_string(), source }),
            None => Ok(Matcher::Substring(p.to_lowercase())),
        }
    }

    fn matches(&self, lowered: &str, raw: &str) -> bool {
        match self {
            Matcher::Substring(s) => lowered.contains(s.as_str()),
            Matcher::Regex(r) => r.is_match(raw),
        }
    }
}

/// Message signatures per category. Substrings are case-insensitive;
/// entries prefixed with `re:` are case-insensitive regexes.
#[derive(Debug, Clone)]
pub struct Patterns {
    rules: BTreeMap<ErrorCategory, Vec<(String, Matcher)>>,
}

pub const DEFAULT_PATTERNS: &str = include_str!("../data/error_patterns.json");

impl Default for Patterns {
    fn default() -> Self {
        Patterns::from_json(DEFAULT_PATTERNS).expect("built-in patterns are valid")
    }
}

impl Patterns {
    pub fn from_json(text: &str) -> Result<Self, PatternError> {
        let raw: BTreeMap<ErrorCategory, Vec<String>> = serde_json::from_str(text)?;
        let mut rules = BTreeMap::new();
        for (cat, list) in raw {
            if cat == ErrorCategory::InvalidAnswer {
                return Err(PatternError::Unmatchable(cat));
            }
            let ms = list
                .into_iter()
                .map(|p| Matcher::parse(&p).map(|m| (p, m)))
                .collect::<Result<Vec<_>, _>>()?;
            rules.insert(cat, ms);
        }
        Ok(Patterns { rules })
    }

    pub fn from_file(path: &Path) -> Result<Self, PatternError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn first_match(&self, cat: ErrorCategory, text: &str) -> Option<&str> {
        let lowered = text.to_lowercase();
        self.rules
            .get(&cat)?
            .iter()
            .find(|(_, m)| m.matches(&lowered, text))
            .map(|(p, _)| p.as_str())
    }
}

/// A category together with why it was chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub category: ErrorCategory,
    pub reason: String,
}

/// Whether the attempt passed: execution OK and a passing verdict.
pub fn attempt_passed(o: &ExecutionOutcome, v: Option<&Verdict>) -> bool {
    o.status == ExecStatus::Ok && v.is_some_and(|v| v.passed)
}

pub fn classify(o: &ExecutionOutcome, v: Option<&Verdict>) -> Option<ErrorCategory> {
    classify_with(&Patterns::default(), o, v).map(|c| c.category)
}

/// Assigns exactly one category to a failed attempt and none to a passing one.
pub fn classify_with(p: &Patterns, o: &ExecutionOutcome, v: Option<&Verdict>) -> Option<Classification> {
    if attempt_passed(o, v) {
        return None;
    }
    let hit = |category, reason: String| Some(Classification { category, reason });
    if o.status == ExecStatus::Ok {
        let detail = v.map(|v| v.detail.as_str()).unwrap_or("no verdict");
        return hit(ErrorCategory::InvalidAnswer, format!("output rejected: {detail}"));
    }
    if o.status == ExecStatus::Timeout {
        return hit(ErrorCategory::ParameterError, "timeout".into());
    }
    let text = if o.stderr.is_empty() {
        o.error_message.clone()
    } else {
        format!("{}\n{}", o.error_message, o.stderr)
    };
    if o.retry_count >= MAX_RETRIES {
        if let Some(m) = p.first_match(ErrorCategory::NetworkError, &text) {
            return hit(ErrorCategory::NetworkError, format!("matched {m:?} after {} retries", o.retry_count));
        }
    }
    for cat in [ErrorCategory::SyntaxError, ErrorCategory::ParameterError] {
        if let Some(m) = p.first_match(cat, &text) {
            return hit(cat, format!("matched {m:?}"));
        }
    }
    hit(ErrorCategory::ParameterError, "unmatched failure".into())
}

/// Category counts and percentages over the failed attempts of one model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub failures: usize,
    pub counts: BTreeMap<ErrorCategory, usize>,
}

impl ErrorDistribution {
    pub fn from_categories<I: IntoIterator<Item = ErrorCategory>>(cats: I) -> Self {
        let mut d = ErrorDistribution::default();
        for c in ErrorCategory::ALL {
            d.counts.insert(c, 0);
        }
        for c in cats {
            d.failures += 1;
            *d.counts.entry(c).or_default() += 1;
        }
        d
    }

    /// Percentage of failures in `c`; `None` when there are no failures.
    pub fn percent(&self, c: ErrorCategory) -> Option<f64> {
        (self.failures > 0).then(|| 100.0 * self.counts.get(&c).copied().unwrap_or(0) as f64 / self.failures as f64)
    }
}
