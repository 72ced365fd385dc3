//! Accuracy, stability, resource, efficiency, and ranking metrics.
//!
//! Rates are fractions in `[0, 1]` everywhere except the efficiency
//! numerators, which use pass@5 in percentage points as the published
//! tables do.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{self, Scalar};
use crate::submission::AttemptRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("case {case} has {have} attempts, {need} required")]
    InsufficientAttempts { case: usize, have: usize, need: usize },
    #[error("no cases")]
    Empty,
    #[error("mean of the stability series is zero")]
    ZeroMean,
    #[error("{0} must be positive")]
    ZeroDenominator(&'static str),
}

fn check(outcomes: &[Vec<bool>], n: usize) -> Result<(), MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    match outcomes.iter().position(|o| o.len() < n) {
        Some(case) => Err(MetricsError::InsufficientAttempts { case, have: outcomes[case].len(), need: n }),
        None => Ok(()),
    }
}

/// Fraction of cases with at least one pass among their first `n` attempts.
pub fn pass_at_n<T: Scalar>(outcomes: &[Vec<bool>], n: usize) -> Result<T, MetricsError> {
    check(outcomes, n)?;
    let solved = outcomes.iter().filter(|o| o[..n].iter().any(|&p| p)).count();
    Ok(T::from_count(solved) / T::from_count(outcomes.len()))
}

/// `1 - C/N` over the first `n` attempts of every case: the fraction of
/// individual samples that pass.
pub fn pass_frac<T: Scalar>(outcomes: &[Vec<bool>], n: usize) -> Result<T, MetricsError> {
    check(outcomes, n)?;
    if n == 0 {
        return Err(MetricsError::InsufficientAttempts { case: 0, have: 0, need: 1 });
    }
    let total = outcomes.len() * n;
    let wrong = outcomes.iter().map(|o| o[..n].iter().filter(|&&p| !p).count()).sum::<usize>();
    Ok(T::from_count(total - wrong) / T::from_count(total))
}

/// Pass rate of attempt `k` across cases, for `k < n`.
pub fn per_attempt_rates<T: Scalar>(outcomes: &[Vec<bool>], n: usize) -> Result<Vec<T>, MetricsError> {
    check(outcomes, n)?;
    let cases = T::from_count(outcomes.len());
    Ok((0..n)
        .map(|k| T::from_count(outcomes.iter().filter(|o| o[k]).count()) / cases)
        .collect())
}

/// Stability-adjusted accuracy.
pub fn sa<T: Scalar>(pass5: T, cv: T) -> T {
    pass5 / (T::one() + cv)
}

/// Population coefficient of variation of `series`, and the resulting SA.
pub fn stability<T: Scalar>(series: &[T], pass5: T) -> Result<(T, T), MetricsError> {
    let mu = scalar::mean(series).ok_or(MetricsError::Empty)?;
    if mu == T::zero() {
        return Err(MetricsError::ZeroMean);
    }
    let sigma = scalar::population_std(series).ok_or(MetricsError::Empty)?;
    let cv = sigma / mu;
    Ok((cv, sa(pass5, cv)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiencies<T> {
    pub tok_eff: T,
    pub inft_eff: T,
    pub col_eff: T,
}

/// Accuracy per token, per second, and per line.
pub fn efficiencies<T: Scalar>(pass5: T, tok_avg: T, inft_avg: T, col_avg: T) -> Result<Efficiencies<T>, MetricsError> {
    for (name, d) in [("tok_avg", tok_avg), ("inft_avg", inft_avg), ("col_avg", col_avg)] {
        if !(d > T::zero()) {
            return Err(MetricsError::ZeroDenominator(name));
        }
    }
    Ok(Efficiencies { tok_eff: pass5 / tok_avg, inft_eff: pass5 / inft_avg, col_eff: pass5 / col_avg })
}

/// Keys closer than this are treated as equal when ranking.
pub const RANK_EPSILON: f64 = 1e-9;

/// Competition ("1224") ranks. `None` keys rank below every present key
/// and tie with each other.
pub fn competition_rank<T: Scalar>(keys: &[Option<T>], descending: bool) -> Vec<usize> {
    let eps = T::lit(RANK_EPSILON);
    let better = |a: &Option<T>, b: &Option<T>| match (a, b) {
        (Some(x), Some(y)) => {
            if descending {
                *x > *y + eps
            } else {
                *x + eps < *y
            }
        }
        (Some(_), None) => true,
        _ => false,
    };
    keys.iter()
        .map(|k| 1 + keys.iter().filter(|o| better(o, k)).count())
        .collect()
}

/// Ranks rows by the mean of their component ranks, lower mean first.
pub fn rank_by_mean(components: &[Vec<usize>]) -> Vec<usize> {
    let means: Vec<Option<f64>> = components
        .iter()
        .map(|c| (!c.is_empty()).then(|| c.iter().sum::<usize>() as f64 / c.len() as f64))
        .collect();
    competition_rank(&means, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ranks {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "Co")]
    pub co: usize,
    #[serde(rename = "E")]
    pub e: usize,
    #[serde(rename = "Total")]
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceAverages<T> {
    /// Prompt plus completion tokens.
    pub tok_avg: T,
    pub prompt_tok_avg: T,
    pub completion_tok_avg: T,
    pub inft_avg: T,
    pub col_avg: T,
    /// Share of attempts whose token counts are estimates.
    pub tokens_estimated_fraction: T,
}

/// Means over every attempt; `None` without attempts.
pub fn resource_averages<T: Scalar>(records: &[AttemptRecord]) -> Option<ResourceAverages<T>> {
    if records.is_empty() {
        return None;
    }
    // fixed summation order so averages do not depend on log order
    let mut sorted: Vec<&AttemptRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.case_id, a.attempt_index).cmp(&(&b.case_id, b.attempt_index)));
    let n = T::from_count(records.len());
    let avg = |f: &dyn Fn(&AttemptRecord) -> f64| sorted.iter().fold(T::zero(), |s, r| s + T::lit(f(r))) / n;
    Some(ResourceAverages {
        tok_avg: avg(&|r| r.total_tokens() as f64),
        prompt_tok_avg: avg(&|r| r.prompt_tokens as f64),
        completion_tok_avg: avg(&|r| r.completion_tokens as f64),
        inft_avg: avg(&|r| r.inference_time_s),
        col_avg: avg(&|r| r.code_line_count as f64),
        tokens_estimated_fraction: avg(&|r| if r.tokens_estimated { 1.0 } else { 0.0 }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary<T> {
    pub model_id: String,
    pub cases: usize,
    pub attempts_per_case: usize,
    /// pass@n for n in 1, 3, 5 (those not exceeding the attempt count).
    pub pass_at: BTreeMap<usize, T>,
    pub pass_frac: Option<T>,
    pub per_attempt: Vec<T>,
    pub cv: Option<T>,
    pub sa: Option<T>,
    pub resources: Option<ResourceAverages<T>>,
    pub efficiency: Option<Efficiencies<T>>,
    pub ranks: Option<Ranks>,
}

impl<T: Scalar> ModelSummary<T> {
    /// pass@n at the largest reported n.
    pub fn headline(&self) -> Option<T> {
        self.pass_at.values().next_back().copied()
    }

    pub fn pass(&self, n: usize) -> Option<T> {
        self.pass_at.get(&n).copied()
    }
}

pub const REPORTED_N: [usize; 3] = [1, 3, 5];

/// Per-case pass lists in attempt order, cases ordered by id.
pub fn outcome_matrix(records: &[AttemptRecord]) -> Vec<(String, Vec<bool>)> {
    let mut by_case: BTreeMap<&str, Vec<&AttemptRecord>> = BTreeMap::new();
    for r in records {
        by_case.entry(r.case_id.as_str()).or_default().push(r);
    }
    by_case
        .into_iter()
        .map(|(id, mut rs)| {
            rs.sort_by_key(|r| r.attempt_index);
            (id.to_string(), rs.iter().map(|r| r.passed()).collect())
        })
        .collect()
}

/// Summary of one model's attempt records, without ranks.
pub fn summarize<T: Scalar>(model_id: &str, records: &[AttemptRecord]) -> Result<ModelSummary<T>, MetricsError> {
    let matrix: Vec<Vec<bool>> = outcome_matrix(records).into_iter().map(|(_, o)| o).collect();
    if matrix.is_empty() {
        return Err(MetricsError::Empty);
    }
    let attempts = matrix.iter().map(Vec::len).min().unwrap_or(0);
    if attempts == 0 {
        return Err(MetricsError::InsufficientAttempts { case: 0, have: 0, need: 1 });
    }
    let mut pass_at = BTreeMap::new();
    for n in REPORTED_N.into_iter().filter(|&n| n <= attempts) {
        pass_at.insert(n, pass_at_n(&matrix, n)?);
    }
    let top = REPORTED_N.into_iter().filter(|&n| n <= attempts).max().unwrap_or(attempts);
    if !pass_at.contains_key(&top) {
        pass_at.insert(top, pass_at_n(&matrix, top)?);
    }
    let headline: T = pass_at[&top];
    let per_attempt = per_attempt_rates::<T>(&matrix, top)?;
    let (cv, sa_val) = match stability(&per_attempt, headline) {
        Ok((cv, s)) => (Some(cv), Some(s)),
        Err(MetricsError::ZeroMean) => (None, Some(T::zero())),
        Err(e) => return Err(e),
    };
    let resources = resource_averages::<T>(records);
    let efficiency = resources.and_then(|r| {
        efficiencies(headline * T::lit(100.0), r.tok_avg, r.inft_avg, r.col_avg).ok()
    });
    Ok(ModelSummary {
        model_id: model_id.to_string(),
        cases: matrix.len(),
        attempts_per_case: attempts,
        pass_at,
        pass_frac: pass_frac(&matrix, top).ok(),
        per_attempt,
        cv,
        sa: sa_val,
        resources,
        efficiency,
        ranks: None,
    })
}

/// Fills in the ranks of every summary. The result does not depend on
/// the order of `summaries`.
pub fn rank_models<T: Scalar>(summaries: &mut [ModelSummary<T>]) {
    let col = |f: &dyn Fn(&ModelSummary<T>) -> Option<T>| summaries.iter().map(f).collect::<Vec<_>>();
    let p = competition_rank(&col(&|s| s.headline()), true);
    let c = competition_rank(&col(&|s| s.cv), false);
    let s = competition_rank(&col(&|s| s.sa), true);
    let t = competition_rank(&col(&|s| s.efficiency.map(|e| e.tok_eff)), true);
    let i = competition_rank(&col(&|s| s.efficiency.map(|e| e.inft_eff)), true);
    let co = competition_rank(&col(&|s| s.efficiency.map(|e| e.col_eff)), true);
    let e = rank_by_mean(&(0..summaries.len()).map(|k| vec![t[k], i[k], co[k]]).collect::<Vec<_>>());
    let total = rank_by_mean(&(0..summaries.len()).map(|k| vec![p[k], e[k], s[k]]).collect::<Vec<_>>());
    for (k, m) in summaries.iter_mut().enumerate() {
        m.ranks = Some(Ranks { p: p[k], c: c[k], s: s[k], t: t[k], i: i[k], co: co[k], e: e[k], total: total[k] });
    }
}

/// Display order: Total rank, then P rank, then model id.
pub fn leaderboard_order<T: Scalar>(summaries: &mut [ModelSummary<T>]) {
    summaries.sort_by(|a, b| {
        let key = |m: &ModelSummary<T>| m.ranks.map(|r| (r.total, r.p)).unwrap_or((usize::MAX, usize::MAX));
        key(a).cmp(&key(b)).then_with(|| a.model_id.cmp(&b.model_id))
    });
}
