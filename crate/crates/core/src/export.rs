//! Statistics table export.

use std::path::Path;
use thiserror::Error;

use crate::canonical;
use crate::eval::stats::{order_rows, StatsRow};
use crate::store::{write_atomic, StoreError};

pub const CSV_HEADER: [&str; 9] = ["group", "cases", "mean", "median", "q1", "q3", "min", "max", "sd"];
pub const CSV_DECIMALS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            _ => Err(ExportError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("no rows to export")]
    Empty,
    #[error("unknown export format {0:?} (expected csv or json)")]
    UnknownFormat(String),
    #[error("encoding table: {0}")]
    Encode(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Rows in export order: descending mean, `OVERALL` last.
pub fn export_order(rows: &[StatsRow]) -> Vec<StatsRow> {
    let mut rows = rows.to_vec();
    order_rows(&mut rows);
    rows
}

pub fn to_csv(rows: &[StatsRow]) -> Result<String, ExportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let enc = |e: csv::Error| ExportError::Encode(e.to_string());
    w.write_record(CSV_HEADER).map_err(enc)?;
    for r in export_order(rows) {
        let f = |v: f64| format!("{:.*}", CSV_DECIMALS, if v == 0.0 { 0.0 } else { v });
        w.write_record([
            r.group.clone(),
            r.cases.to_string(),
            f(r.mean),
            f(r.median),
            f(r.q1),
            f(r.q3),
            f(r.min),
            f(r.max),
            f(r.sd),
        ])
        .map_err(enc)?;
    }
    let bytes = w.into_inner().map_err(|e| ExportError::Encode(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ExportError::Encode(e.to_string()))
}

pub fn to_json(rows: &[StatsRow]) -> Result<String, ExportError> {
    canonical::to_canonical_json(&export_order(rows)).map_err(|e| ExportError::Encode(e.to_string()))
}

/// Writes `rows` to `path`; an existing file is kept unless `force`.
pub fn export_table(
    rows: &[StatsRow],
    format: ExportFormat,
    path: &Path,
    force: bool,
) -> Result<(), ExportError> {
    if rows.is_empty() {
        return Err(ExportError::Empty);
    }
    let text = match format {
        ExportFormat::Csv => to_csv(rows)?,
        ExportFormat::Json => to_json(rows)?,
    };
    write_atomic(path, text.as_bytes(), force)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::stats::OVERALL;
    use crate::fixtures::expert_rows;

    fn overall() -> StatsRow {
        StatsRow {
            group: OVERALL.into(),
            cases: 307,
            mean: 0.7441,
            median: 0.7521,
            q1: 0.7089,
            q3: 0.7882,
            min: 0.5566,
            max: 0.8574,
            sd: 0.0583,
        }
    }

    #[test]
    fn wang_long_row_matches_published_table() {
        let mut rows = expert_rows();
        rows.push(overall());
        let csv = to_csv(&rows).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "group,cases,mean,median,q1,q3,min,max,sd");
        let wang = lines.iter().find(|l| l.starts_with("Wang Long,")).unwrap();
        assert_eq!(
            *wang,
            "Wang Long,178,0.7735,0.7754,0.7469,0.7991,0.6367,0.8574,0.0369"
        );
    }

    #[test]
    fn rows_descend_by_mean_with_overall_last() {
        let mut rows = expert_rows();
        rows.reverse();
        rows.insert(0, overall());
        let csv = to_csv(&rows).unwrap();
        let groups: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(
            groups,
            [
                "Wang Long",
                "Min Baoquan",
                "Song Xingchuan",
                "Yan Hu",
                "Zhang Tongyan",
                "Li Hongwei",
                OVERALL
            ]
        );
    }

    #[test]
    fn single_overall_row_is_one_data_line() {
        let csv = to_csv(&[overall()]).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn json_is_canonical_array_of_rows() {
        let rows = expert_rows();
        let text = to_json(&rows).unwrap();
        let parsed: Vec<StatsRow> = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.len(), rows.len());
        assert_eq!(parsed[0].group, "Wang Long");
        assert!(text.contains("\"mean\": 0.773500"));
        assert_eq!(text, to_json(&parsed).unwrap());
    }

    #[test]
    fn empty_rows_rejected_and_existing_file_kept() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.csv");
        assert!(matches!(
            export_table(&[], ExportFormat::Csv, &path, false),
            Err(ExportError::Empty)
        ));
        export_table(&expert_rows(), ExportFormat::Csv, &path, false).unwrap();
        let before = std::fs::read(&path).unwrap();
        let err = export_table(&[overall()], ExportFormat::Csv, &path, false).unwrap_err();
        assert!(matches!(err, ExportError::Store(StoreError::Exists(_))));
        assert_eq!(std::fs::read(&path).unwrap(), before);
        export_table(&[overall()], ExportFormat::Csv, &path, true).unwrap();
        assert_ne!(std::fs::read(&path).unwrap(), before);
    }
}
