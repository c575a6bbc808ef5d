//! CSV ingestion: a rectangular table of named columns, numeric extraction
//! with line-numbered diagnostics, and row subsampling.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::series::Series;

/// Rectangular table of string cells with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
    /// File line of each data row (the header is line 1).
    lines: Vec<usize>,
    source: Option<PathBuf>,
}

/// Inclusive selection of data rows.
#[derive(Debug, Clone, PartialEq)]
pub enum RowSelection {
    /// Zero-based data-row indices.
    Range { from: Option<usize>, to: Option<usize> },
    /// First and last rows whose cell in `column` equals the given labels.
    Labels {
        column: String,
        from: Option<String>,
        to: Option<String>,
    },
}

impl DataTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != columns.len() {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("expected {} fields, found {}", columns.len(), r.len()),
                });
            }
        }
        let lines = (2..rows.len() + 2).collect();
        Ok(DataTable {
            columns,
            rows,
            lines,
            source: None,
        })
    }

    /// Table of numeric columns.
    pub fn from_columns(columns: &[(&str, &[f64])]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        if columns.iter().any(|c| c.1.len() != n) {
            return Err(Error::InvalidConfig("columns differ in length".into()));
        }
        let names = columns.iter().map(|c| c.0.to_string()).collect();
        let rows = (0..n)
            .map(|i| columns.iter().map(|c| format!("{}", c.1[i])).collect())
            .collect();
        DataTable::new(names, rows)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidConfig(format!("no column named `{name}`")))
    }

    /// Raw cells of a column.
    pub fn labels(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.index_of(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_str()).collect())
    }

    /// Parse a column as finite reals; the first bad cell is reported with
    /// its file line.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index_of(name)?;
        self.rows
            .iter()
            .zip(&self.lines)
            .map(|(r, line)| {
                let cell = r[j].trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::Parse {
                        line: *line,
                        message: format!("column `{name}`: `{cell}` is not a finite number"),
                    }),
                }
            })
            .collect()
    }

    /// Columns whose every cell parses as a finite number.
    pub fn numeric_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| self.numeric(c).is_ok())
            .map(String::as_str)
            .collect()
    }

    pub fn series(&self, name: &str) -> Result<Series> {
        Ok(Series::new(self.numeric(name)?)?.with_label(name))
    }

    pub fn subsample(&self, sel: &RowSelection) -> Result<DataTable> {
        let n = self.rows.len();
        let (from, to) = match sel {
            RowSelection::Range { from, to } => (from.unwrap_or(0), to.unwrap_or(n.saturating_sub(1))),
            RowSelection::Labels { column, from, to } => {
                let labels = self.labels(column)?;
                let find = |want: &str| {
                    labels.iter().position(|l| l.trim() == want).ok_or_else(|| {
                        Error::InvalidConfig(format!("label `{want}` not found in `{column}`"))
                    })
                };
                let a = match from {
                    Some(l) => find(l)?,
                    None => 0,
                };
                let b = match to {
                    Some(l) => find(l)?,
                    None => n.saturating_sub(1),
                };
                (a, b)
            }
        };
        if n == 0 || from > to || to >= n {
            return Err(Error::InvalidConfig(format!(
                "row selection {from}..={to} is outside 0..{n}"
            )));
        }
        Ok(DataTable {
            columns: self.columns.clone(),
            rows: self.rows[from..=to].to_vec(),
            lines: self.lines[from..=to].to_vec(),
            source: self.source.clone(),
        })
    }
}

/// Parse comma-separated text with a header row.
pub fn parse_csv(text: &str) -> Result<DataTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if columns.is_empty() || columns.iter().all(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        rows.push(record.iter().map(str::to_string).collect());
        lines.push(line);
    }
    Ok(DataTable {
        columns,
        rows,
        lines,
        source: None,
    })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn read_csv(path: &Path) -> Result<DataTable> {
    let text = std::fs::read_to_string(path)?;
    let mut table = parse_csv(&text)?;
    table.source = Some(path.to_path_buf());
    Ok(table)
}

pub fn write_csv(table: &DataTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns).map_err(|e| Error::Io(e.to_string()))?;
    for r in &table.rows {
        w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}
