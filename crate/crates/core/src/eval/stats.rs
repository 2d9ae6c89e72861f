//! Grouped descriptive statistics over similarity records.
//!
//! Quantiles interpolate linearly between order statistics at position
//! `(n - 1) * p` (Hyndman-Fan type 7). `sd` is the sample standard deviation
//! (divisor `n - 1`); a single value reports `sd = 0`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use super::SimilarityRecord;

/// Group name of the all-records row.
pub const OVERALL: &str = "OVERALL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no values to summarize")]
    Empty,
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("total case count is zero")]
    ZeroTotal,
    #[error("aggregation input must not contain the {OVERALL} row")]
    ContainsOverall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub group: String,
    pub cases: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub sd: f64,
}

/// Type-7 quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summarizes `values` into one row named `group`.
pub fn describe(group: impl Into<String>, values: &[f64]) -> Result<StatsRow, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(*bad));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    // Welford
    let (mut mean, mut m2) = (0.0_f64, 0.0_f64);
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = values.len();
    let sd = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
    let (min, max) = (sorted[0], sorted[n - 1]);

    Ok(StatsRow {
        group: group.into(),
        cases: n,
        // rounding can push the mean a hair outside [min, max]
        mean: mean.clamp(min, max),
        median: quantile_sorted(&sorted, 0.5),
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        min,
        max,
        sd,
    })
}

/// Label used for records without an expert attribution.
pub const UNLABELED: &str = "UNLABELED";

/// One row per expert label plus a trailing `OVERALL` row. Groups are
/// ordered by descending mean, ties broken by name.
pub fn group_statistics(records: &[SimilarityRecord]) -> Result<Vec<StatsRow>, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry(r.expert_label.as_deref().unwrap_or(UNLABELED))
            .or_default()
            .push(r.similarity);
    }
    let mut rows = groups
        .into_iter()
        .map(|(group, values)| describe(group, &values))
        .collect::<Result<Vec<_>, _>>()?;
    order_rows(&mut rows);
    let all: Vec<f64> = records.iter().map(|r| r.similarity).collect();
    rows.push(describe(OVERALL, &all)?);
    Ok(rows)
}

/// Descending mean with `OVERALL` last.
pub fn order_rows(rows: &mut [StatsRow]) {
    rows.sort_by(|a, b| {
        (a.group == OVERALL)
            .cmp(&(b.group == OVERALL))
            .then(b.mean.total_cmp(&a.mean))
            .then_with(|| a.group.cmp(&b.group))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub total_cases: usize,
    pub weighted_mean: f64,
}

/// Case-weighted mean across per-group rows.
pub fn aggregate_rows(rows: &[StatsRow]) -> Result<Aggregate, StatsError> {
    if rows.is_empty() {
        return Err(StatsError::Empty);
    }
    if rows.iter().any(|r| r.group == OVERALL) {
        return Err(StatsError::ContainsOverall);
    }
    let total_cases: usize = rows.iter().map(|r| r.cases).sum();
    if total_cases == 0 {
        return Err(StatsError::ZeroTotal);
    }
    let weighted: f64 = rows.iter().map(|r| r.cases as f64 * r.mean).sum();
    Ok(Aggregate {
        total_cases,
        weighted_mean: weighted / total_cases as f64,
    })
}

/// Fraction of values with similarity `>= threshold`.
pub fn threshold_share(values: &[f64], threshold: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let hits = values.iter().filter(|&&v| v >= threshold).count();
    Ok(hits as f64 / values.len() as f64)
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Independent reference: R's type-7 formula in 1-based form and a
    //! two-pass variance.

    pub fn quantile(values: &[f64], p: f64) -> f64 {
        let mut x = values.to_vec();
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = x.len() as f64;
        let m = 1.0 - p;
        let j = (n * p + m).floor();
        let g = n * p + m - j;
        let j = j as usize; // 1-based
        let xj = x[j.clamp(1, x.len()) - 1];
        let xj1 = x[(j + 1).clamp(1, x.len()) - 1];
        (1.0 - g) * xj + g * xj1
    }

    pub fn mean(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }

    pub fn sd(values: &[f64]) -> f64 {
        if values.len() < 2 {
            return 0.0;
        }
        let m = mean(values);
        let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (values.len() - 1) as f64).sqrt()
    }

    pub fn min(values: &[f64]) -> f64 {
        values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(values: &[f64]) -> f64 {
        values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
