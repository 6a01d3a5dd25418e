//! Feature tables and their CSV form.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::extract::FeatureRow;

pub const KEY_COLUMNS: [&str; 3] = ["file_id", "window_start", "window_end"];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {detail}")]
    Malformed { line: u64, detail: String },
    #[error("duplicate column {0}")]
    DuplicateColumn(String),
    #[error("no column matches {0:?}")]
    NoMatch(String),
    #[error("unknown column {0}")]
    MissingColumn(String),
    #[error("key column {0} cannot be modified")]
    KeyColumn(String),
    #[error("invalid column pattern {0:?}")]
    InvalidPattern(String),
    #[error("table has no rows")]
    EmptyTable,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub file_id: String,
    pub window_start: u32,
    pub window_end: u32,
    pub values: Vec<f64>,
}

impl TableRow {
    pub fn key(&self) -> (&str, u32, u32) {
        (&self.file_id, self.window_start, self.window_end)
    }
}

/// Rows keyed by `(file_id, window_start, window_end)` over named feature
/// columns. Cells may be NaN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    columns: Vec<String>,
    rows: Vec<TableRow>,
}

impl FeatureTable {
    pub fn new(columns: Vec<String>) -> Result<Self, TableError> {
        let mut seen = HashSet::new();
        for c in &columns {
            if KEY_COLUMNS.contains(&c.as_str()) {
                return Err(TableError::KeyColumn(c.clone()));
            }
            if !seen.insert(c.as_str()) {
                return Err(TableError::DuplicateColumn(c.clone()));
            }
        }
        Ok(FeatureTable { columns, rows: Vec::new() })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn push_row(&mut self, row: TableRow) -> Result<(), TableError> {
        if row.values.len() != self.columns.len() {
            return Err(TableError::Invalid(format!(
                "row for {} has {} values, table has {} columns",
                row.file_id,
                row.values.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Appends an extracted row; its feature names must equal the columns.
    pub fn push_feature_row(&mut self, row: FeatureRow) -> Result<(), TableError> {
        if row.values.len() != self.columns.len() || !row.values.names().zip(&self.columns).all(|(a, b)| a == b) {
            return Err(TableError::Invalid(format!("feature names of {} do not match the table columns", row.file_id)));
        }
        self.rows.push(TableRow {
            file_id: row.file_id,
            window_start: row.window_start,
            window_end: row.window_end,
            values: row.values.iter().map(|(_, v)| v).collect(),
        });
        Ok(())
    }

    pub fn column_values(&self, index: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r.values[index])
    }

    /// Keeps the rows for which `keep(index, row)` is true.
    pub fn retain_rows(&mut self, mut keep: impl FnMut(usize, &TableRow) -> bool) {
        let mut i = 0;
        self.rows.retain(|r| {
            let k = keep(i, r);
            i += 1;
            k
        });
    }

    /// Keeps the columns whose index satisfies `keep`.
    pub fn retain_columns(&mut self, keep: impl Fn(usize) -> bool) {
        let idx: Vec<usize> = (0..self.columns.len()).filter(|&i| keep(i)).collect();
        self.columns = idx.iter().map(|&i| self.columns[i].clone()).collect();
        for r in &mut self.rows {
            r.values = idx.iter().map(|&i| r.values[i]).collect();
        }
    }

    pub fn push_column(&mut self, name: String, values: Vec<f64>) -> Result<(), TableError> {
        if KEY_COLUMNS.contains(&name.as_str()) {
            return Err(TableError::KeyColumn(name));
        }
        if self.column_index(&name).is_some() {
            return Err(TableError::DuplicateColumn(name));
        }
        assert_eq!(values.len(), self.rows.len(), "one value per row");
        self.columns.push(name);
        for (r, v) in self.rows.iter_mut().zip(values) {
            r.values.push(v);
        }
        Ok(())
    }

    pub fn rename_columns(&mut self, f: impl Fn(&str) -> String) -> Result<(), TableError> {
        let renamed: Vec<String> = self.columns.iter().map(|c| f(c)).collect();
        let fresh = FeatureTable::new(renamed)?;
        self.columns = fresh.columns;
        Ok(())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.rows.iter_mut().map(|r| &mut r.values)
    }

    /// Equality with NaN == NaN and bitwise comparison of other values.
    pub fn nan_eq(&self, other: &FeatureTable) -> bool {
        self.columns == other.columns
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.key() == b.key()
                    && a.values.len() == b.values.len()
                    && a.values.iter().zip(&b.values).all(|(x, y)| (x.is_nan() && y.is_nan()) || x.to_bits() == y.to_bits())
            })
    }

    pub fn has_nan(&self) -> bool {
        self.rows.iter().any(|r| r.values.iter().any(|v| v.is_nan()))
    }

    /// CSV text: header, then one line per row. NaN is the empty field and
    /// other values use the shortest representation that parses back to the
    /// same `f64`.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        let header: Vec<&str> = KEY_COLUMNS.iter().copied().chain(self.columns.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("writing to memory");
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for r in &self.rows {
            record.clear();
            record.push(r.file_id.clone());
            record.push(r.window_start.to_string());
            record.push(r.window_end.to_string());
            record.extend(r.values.iter().map(|v| format_value(*v)));
            w.write_record(&record).expect("writing to memory");
        }
        w.into_inner().expect("flushing to memory")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TableError> {
        fs::write(path, self.to_csv_bytes()).map_err(|source| TableError::Io { path: path.display().to_string(), source })
    }

    pub fn read_csv(path: &Path) -> Result<Self, TableError> {
        let bytes = fs::read(path).map_err(|source| TableError::Io { path: path.display().to_string(), source })?;
        Self::from_csv_bytes(&bytes)
    }

    pub fn from_csv_bytes(bytes: &[u8]) -> Result<Self, TableError> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
        let mut records = r.records();
        let header = match records.next() {
            None => return Err(TableError::Malformed { line: 1, detail: "missing header".into() }),
            Some(h) => h.map_err(csv_error)?,
        };
        let names: Vec<&str> = header.iter().collect();
        if names.len() < 3 || names[..3] != KEY_COLUMNS {
            return Err(TableError::Malformed {
                line: 1,
                detail: format!("header must start with {}", KEY_COLUMNS.join(",")),
            });
        }
        let mut table = FeatureTable::new(names[3..].iter().map(|s| s.to_string()).collect())?;
        for rec in records {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != names.len() {
                return Err(TableError::Malformed {
                    line,
                    detail: format!("expected {} fields, found {}", names.len(), rec.len()),
                });
            }
            let int = |i: usize| {
                rec[i].trim().parse::<u32>().map_err(|_| TableError::Malformed {
                    line,
                    detail: format!("{} is not a measure number: {:?}", KEY_COLUMNS[i], &rec[i]),
                })
            };
            let (window_start, window_end) = (int(1)?, int(2)?);
            let mut values = Vec::with_capacity(table.columns.len());
            for (i, field) in rec.iter().enumerate().skip(3) {
                values.push(parse_value(field).ok_or_else(|| TableError::Malformed {
                    line,
                    detail: format!("column {}: not a number: {field:?}", names[i]),
                })?);
            }
            table.rows.push(TableRow { file_id: rec[0].to_string(), window_start, window_end, values });
        }
        Ok(table)
    }
}

fn csv_error(e: csv::Error) -> TableError {
    let line = e.position().map_or(0, |p| p.line());
    TableError::Malformed { line, detail: e.to_string() }
}

pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Both forms print the shortest digits that round-trip; `Debug`
        // switches to scientific notation for very large or small magnitudes.
        let sci = format!("{v:?}");
        if sci.contains('e') {
            sci
        } else {
            v.to_string()
        }
    }
}

pub fn parse_value(field: &str) -> Option<f64> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    f.parse().ok()
}
