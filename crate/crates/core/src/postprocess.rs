//! NaN filtering and column utilities for feature tables.
//!
//! The NaN filter works in three steps:
//!
//! 1. `r = C_clean / R`, where `C_clean` is the number of NaN-free columns
//!    and `R` the number of rows.
//! 2. When `r < 0.1`, rows whose NaN count `n_i` exceeds `q99 / 0.99` are
//!    removed. `q99` is the nearest-rank 99% quantile of the `n_i`: the value
//!    at 1-based position `ceil(0.99 R)` of the sorted counts, computed once
//!    before any row is removed.
//! 3. Every column that still holds a NaN in a retained row is dropped.

use glob::Pattern;
use serde::{Deserialize, Serialize};

use crate::table::{FeatureTable, TableError, KEY_COLUMNS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NanFilterReport {
    pub r: f64,
    /// NaN count of every input row.
    pub n: Vec<usize>,
    pub q99: f64,
    pub threshold: f64,
    /// Whether `r` fell below 0.1 so that the row filter ran.
    pub row_filter_applied: bool,
    pub rows_removed: Vec<usize>,
    pub columns_removed: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NanFilterOptions {
    /// Run step 3 even when the row filter did not run.
    pub drop_columns_without_row_filter: bool,
}

impl Default for NanFilterOptions {
    fn default() -> Self {
        NanFilterOptions { drop_columns_without_row_filter: true }
    }
}

pub const R_LIMIT: f64 = 0.1;
pub const QUANTILE: f64 = 0.99;

/// 1-based nearest-rank position `ceil(0.99 R)`, in exact integer arithmetic.
pub fn q99_rank(rows: usize) -> usize {
    (99 * rows).div_ceil(100).max(1)
}

pub fn nan_filter(table: &FeatureTable) -> Result<(FeatureTable, NanFilterReport), TableError> {
    nan_filter_with(table, NanFilterOptions::default())
}

pub fn nan_filter_with(table: &FeatureTable, opts: NanFilterOptions) -> Result<(FeatureTable, NanFilterReport), TableError> {
    if table.is_empty() {
        return Err(TableError::EmptyTable);
    }
    let rows = table.len();
    let cols = table.columns().len();
    let clean = (0..cols).filter(|&c| table.column_values(c).all(|v| !v.is_nan())).count();
    let r = clean as f64 / rows as f64;

    let n: Vec<usize> = table.rows().iter().map(|row| row.values.iter().filter(|v| v.is_nan()).count()).collect();
    let mut sorted = n.clone();
    sorted.sort_unstable();
    let q99 = sorted[q99_rank(rows) - 1] as f64;
    let threshold = q99 / QUANTILE;

    let row_filter_applied = r < R_LIMIT;
    let mut out = table.clone();
    let mut rows_removed = Vec::new();
    if row_filter_applied {
        rows_removed = (0..rows).filter(|&i| n[i] as f64 > threshold).collect();
        out.retain_rows(|i, _| n[i] as f64 <= threshold);
    }

    let mut columns_removed = Vec::new();
    if row_filter_applied || opts.drop_columns_without_row_filter {
        let dirty: Vec<bool> = (0..cols).map(|c| out.column_values(c).any(|v| v.is_nan())).collect();
        columns_removed = (0..cols).filter(|&c| dirty[c]).map(|c| table.columns()[c].clone()).collect();
        out.retain_columns(|c| !dirty[c]);
    }

    Ok((out, NanFilterReport { r, n, q99, threshold, row_filter_applied, rows_removed, columns_removed }))
}

fn pattern(p: &str) -> Result<Pattern, TableError> {
    Pattern::new(p).map_err(|_| TableError::InvalidPattern(p.to_string()))
}

/// Replaces NaN in every column matching `column_pattern`.
pub fn replace_values(table: &FeatureTable, column_pattern: &str, replacement: f64) -> Result<FeatureTable, TableError> {
    let pat = pattern(column_pattern)?;
    let hits: Vec<usize> = (0..table.columns().len()).filter(|&i| pat.matches(&table.columns()[i])).collect();
    if hits.is_empty() {
        return Err(TableError::NoMatch(column_pattern.to_string()));
    }
    let mut out = table.clone();
    for values in out.values_mut() {
        for &i in &hits {
            if values[i].is_nan() {
                values[i] = replacement;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    Sum,
    Mean,
    Max,
}

impl std::str::FromStr for Reducer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sum" => Ok(Reducer::Sum),
            "mean" => Ok(Reducer::Mean),
            "max" => Ok(Reducer::Max),
            _ => Err(format!("unknown reducer {s:?} (expected sum, mean or max)")),
        }
    }
}

impl Reducer {
    /// NaN if any input is NaN.
    pub fn apply(self, xs: &[f64]) -> f64 {
        if xs.iter().any(|x| x.is_nan()) {
            return f64::NAN;
        }
        match self {
            Reducer::Sum => xs.iter().sum(),
            Reducer::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
            Reducer::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Replaces `sources` with one column `dest` holding their row-wise
/// reduction. `dest` is appended after the remaining columns.
pub fn merge_columns(table: &FeatureTable, sources: &[String], dest: &str, reducer: Reducer) -> Result<FeatureTable, TableError> {
    if sources.len() < 2 {
        return Err(TableError::Invalid("merging needs at least two source columns".into()));
    }
    let mut idx = Vec::with_capacity(sources.len());
    for s in sources {
        let i = table.column_index(s).ok_or_else(|| TableError::MissingColumn(s.clone()))?;
        if idx.contains(&i) {
            return Err(TableError::DuplicateColumn(s.clone()));
        }
        idx.push(i);
    }
    if KEY_COLUMNS.contains(&dest) {
        return Err(TableError::KeyColumn(dest.to_string()));
    }
    if table.column_index(dest).is_some_and(|i| !idx.contains(&i)) {
        return Err(TableError::DuplicateColumn(dest.to_string()));
    }
    let merged: Vec<f64> = table
        .rows()
        .iter()
        .map(|r| reducer.apply(&idx.iter().map(|&i| r.values[i]).collect::<Vec<_>>()))
        .collect();
    let mut out = table.clone();
    out.retain_columns(|c| !idx.contains(&c));
    out.push_column(dest.to_string(), merged)?;
    Ok(out)
}

/// Drops the columns matching `column_pattern` and returns their names.
/// Key columns cannot be dropped.
pub fn drop_columns(table: &FeatureTable, column_pattern: &str) -> Result<(FeatureTable, Vec<String>), TableError> {
    let pat = pattern(column_pattern)?;
    if let Some(k) = KEY_COLUMNS.iter().find(|k| pat.matches(k)) {
        return Err(TableError::KeyColumn(k.to_string()));
    }
    let hits: Vec<usize> = (0..table.columns().len()).filter(|&i| pat.matches(&table.columns()[i])).collect();
    if hits.is_empty() {
        log::warn!("no column matches {column_pattern:?}");
    }
    let names = hits.iter().map(|&i| table.columns()[i].clone()).collect();
    let mut out = table.clone();
    out.retain_columns(|c| !hits.contains(&c));
    Ok((out, names))
}
