//! Plot-ready data: histogram bins, five-number summaries and Gaussian
//! kernel density curves. No rendering happens here.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use super::stats::{quantile_sorted, UNLABELED};
use super::SimilarityRecord;

/// Refuse to allocate absurd bin counts from a tiny width.
pub const MAX_BINS: i64 = 100_000;
pub const MIN_GRID_POINTS: usize = 16;
pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlotError {
    #[error("bin width must be positive and finite, got {0}")]
    BadWidth(f64),
    #[error("anchor must be finite")]
    BadAnchor,
    #[error("no values")]
    Empty,
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("histogram would need {0} bins")]
    TooManyBins(i64),
    #[error("bin edges collapse at this anchor/width scale")]
    DegenerateEdges,
    #[error("density needs at least 2 distinct values")]
    TooFewDistinct,
    #[error("density grid needs at least {MIN_GRID_POINTS} points, got {0}")]
    GridTooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

fn check_finite(values: &[f64]) -> Result<(), PlotError> {
    if values.is_empty() {
        return Err(PlotError::Empty);
    }
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(PlotError::NonFinite(*v)),
        None => Ok(()),
    }
}

/// Half-open bins `[lo, hi)` on the lattice `anchor + k * width`, covering
/// the occupied range. The last bin is closed on the right.
pub fn histogram(values: &[f64], bin_width: f64, anchor: f64) -> Result<Vec<Bin>, PlotError> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(PlotError::BadWidth(bin_width));
    }
    if !anchor.is_finite() {
        return Err(PlotError::BadAnchor);
    }
    check_finite(values)?;

    let edge = |k: i64| anchor + k as f64 * bin_width;
    let index = |v: f64| -> i64 {
        let mut k = ((v - anchor) / bin_width).floor() as i64;
        while v < edge(k) {
            k -= 1;
        }
        while v >= edge(k + 1) {
            k += 1;
        }
        k
    };

    let (lo_v, hi_v) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let first = index(lo_v);
    let mut last = index(hi_v);
    if last > first && hi_v == edge(last) {
        last -= 1;
    }
    let span = last - first + 1;
    if span > MAX_BINS {
        return Err(PlotError::TooManyBins(span));
    }

    let mut bins: Vec<Bin> = (first..=last)
        .map(|k| Bin {
            lo: edge(k),
            hi: edge(k + 1),
            count: 0,
        })
        .collect();
    if bins.iter().any(|b| b.lo >= b.hi) {
        return Err(PlotError::DegenerateEdges);
    }
    for &v in values {
        let k = index(v).min(last);
        bins[(k - first) as usize].count += 1;
    }
    Ok(bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

/// Silverman's rule of thumb: `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian KDE sampled on `grid_points` evenly spaced points spanning
/// `[min - 3h, max + 3h]`.
pub fn density_estimate(values: &[f64], grid_points: usize) -> Result<Vec<CurvePoint>, PlotError> {
    density_with_bandwidth(values, grid_points).map(|(_, curve)| curve)
}

fn density_with_bandwidth(
    values: &[f64],
    grid_points: usize,
) -> Result<(f64, Vec<CurvePoint>), PlotError> {
    check_finite(values)?;
    if grid_points < MIN_GRID_POINTS {
        return Err(PlotError::GridTooSmall(grid_points));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi {
        return Err(PlotError::TooFewDistinct);
    }
    let h = silverman_bandwidth(values);
    let (start, end) = (lo - 3.0 * h, hi + 3.0 * h);
    let step = (end - start) / (grid_points - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let curve = (0..grid_points)
        .map(|i| {
            let x = start + i as f64 * step;
            let y = values
                .iter()
                .map(|v| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum::<f64>()
                * norm;
            CurvePoint { x, y }
        })
        .collect();
    Ok((h, curve))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub group: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDensity {
    pub group: String,
    pub bandwidth: f64,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolinData {
    pub groups: Vec<GroupDensity>,
    /// Groups with fewer than two distinct values get no curve.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub histogram: Vec<Bin>,
    pub five_number: Vec<FiveNumber>,
    pub density: ViolinData,
}

fn five_number(group: &str, values: &[f64]) -> FiveNumber {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    FiveNumber {
        group: group.to_string(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    }
}

/// Histogram over all records plus per-expert box and violin data.
pub fn build_plot_data(
    records: &[SimilarityRecord],
    bin_width: f64,
    anchor: f64,
    grid_points: usize,
) -> Result<PlotData, PlotError> {
    let all: Vec<f64> = records.iter().map(|r| r.similarity).collect();
    let histogram = histogram(&all, bin_width, anchor)?;

    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry(r.expert_label.as_deref().unwrap_or(UNLABELED))
            .or_default()
            .push(r.similarity);
    }
    let five_number = groups.iter().map(|(g, v)| five_number(g, v)).collect();
    let mut density = ViolinData {
        groups: Vec::new(),
        skipped: Vec::new(),
    };
    for (group, values) in &groups {
        match density_with_bandwidth(values, grid_points) {
            Ok((bandwidth, points)) => density.groups.push(GroupDensity {
                group: group.to_string(),
                bandwidth,
                points,
            }),
            Err(PlotError::TooFewDistinct) => density.skipped.push(group.to_string()),
            Err(e) => return Err(e),
        }
    }
    Ok(PlotData {
        histogram,
        five_number,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trapezoid(curve: &[CurvePoint]) -> f64 {
        curve
            .windows(2)
            .map(|w| 0.5 * (w[0].y + w[1].y) * (w[1].x - w[0].x))
            .sum()
    }

    #[test]
    fn three_value_histogram() {
        let bins = histogram(&[0.61, 0.72, 0.78], 0.1, 0.6).unwrap();
        assert_eq!(bins.len(), 2);
        assert!((bins[0].lo - 0.6).abs() < 1e-12 && (bins[0].hi - 0.7).abs() < 1e-12);
        assert!((bins[1].lo - 0.7).abs() < 1e-12 && (bins[1].hi - 0.8).abs() < 1e-12);
        assert_eq!((bins[0].count, bins[1].count), (1, 2));
    }

    #[test]
    fn single_value_single_bin() {
        let bins = histogram(&[0.33], 0.1, 0.0).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].count, 1);
    }

    #[test]
    fn values_on_an_edge_go_to_the_bin_starting_there() {
        let bins = histogram(&[0.5, 0.5, 0.5], 0.25, 0.0).unwrap();
        assert_eq!(bins, vec![Bin { lo: 0.5, hi: 0.75, count: 3 }]);
    }

    #[test]
    fn last_bin_is_closed() {
        let bins = histogram(&[0.0, 0.5, 1.0], 0.5, 0.0).unwrap();
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[1], Bin { lo: 0.5, hi: 1.0, count: 2 });
    }

    #[test]
    fn histogram_rejects_bad_width() {
        assert_eq!(histogram(&[1.0], 0.0, 0.0), Err(PlotError::BadWidth(0.0)));
        assert!(matches!(histogram(&[1.0], -1.0, 0.0), Err(PlotError::BadWidth(_))));
        assert!(matches!(histogram(&[0.0, 1.0], 1e-9, 0.0), Err(PlotError::TooManyBins(_))));
        assert_eq!(histogram(&[], 0.1, 0.0), Err(PlotError::Empty));
    }

    #[test]
    fn density_of_two_points_is_symmetric() {
        let curve = density_estimate(&[0.0, 1.0], 101).unwrap();
        let n = curve.len();
        for i in 0..n / 2 {
            assert!((curve[i].y - curve[n - 1 - i].y).abs() <= 1e-9);
            assert!((curve[i].x - 0.5 + curve[n - 1 - i].x - 0.5).abs() <= 1e-9);
        }
    }

    #[test]
    fn density_requires_two_distinct_values_and_grid() {
        assert_eq!(density_estimate(&[0.3, 0.3], 64), Err(PlotError::TooFewDistinct));
        assert_eq!(density_estimate(&[0.3, 0.4], 15), Err(PlotError::GridTooSmall(15)));
    }

    #[test]
    fn silverman_falls_back_to_sd_when_iqr_is_zero() {
        let values = [0.0, 0.0, 0.0, 0.0, 1.0];
        let mean = 0.2_f64;
        let sd = ((4.0 * mean * mean + 0.64) / 4.0_f64).sqrt();
        let want = 0.9 * sd * 5f64.powf(-0.2);
        assert!((silverman_bandwidth(&values) - want).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn histogram_counts_sum_to_n(
            values in proptest::collection::vec(-1.0f64..1.0, 1..400),
            width in 0.01f64..0.5,
            anchor in -1.0f64..1.0,
        ) {
            let bins = histogram(&values, width, anchor).unwrap();
            prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), values.len());
            prop_assert!(bins.windows(2).all(|w| w[0].lo < w[1].lo && w[0].hi <= w[1].lo + 1e-12));
            prop_assert!(bins.iter().all(|b| b.lo < b.hi));
        }

        #[test]
        fn density_integrates_to_one_and_peaks_inside_range(
            values in proptest::collection::vec(-1.0f64..1.0, 2..200)
        ) {
            prop_assume!(values.iter().any(|v| *v != values[0]));
            let curve = density_estimate(&values, DEFAULT_GRID_POINTS).unwrap();
            prop_assert!(curve.iter().all(|p| p.y >= 0.0));
            let area = trapezoid(&curve);
            prop_assert!((0.98..=1.02).contains(&area), "area {}", area);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let peak = curve.iter().max_by(|a, b| a.y.total_cmp(&b.y)).unwrap();
            let step = curve[1].x - curve[0].x;
            prop_assert!(peak.x >= lo - step && peak.x <= hi + step);
        }
    }
}
