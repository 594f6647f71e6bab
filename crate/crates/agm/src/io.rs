//! CSV datasets: comma separated, optional header row, UTF-8, decimal-point
//! reals. The label column is picked by header name or zero-based index and
//! may sit anywhere in the row.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use agm_core::data::{encode_labels, synthetic_feature_names};
use agm_core::{Dataset, Matrix};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// All-digit strings become indices; anything else is a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Name(n) => write!(f, "{n:?}"),
            LabelColumn::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// Parsed CSV before label encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub feature_names: Vec<String>,
    pub features: Matrix,
    /// Raw label strings, present when a label column was requested.
    pub labels: Option<Vec<String>>,
    pub label_name: Option<String>,
}

impl Table {
    /// Encodes labels (lexicographic order) into a [`Dataset`].
    pub fn into_dataset(self, source_name: &str) -> Result<Dataset> {
        let raw = self
            .labels
            .ok_or_else(|| Error::csv(source_name, None, "no label column selected"))?;
        let (ids, names) = encode_labels(&raw);
        Ok(Dataset::new(self.features, ids, names, self.feature_names)?)
    }
}

fn resolve_label(
    label: &LabelColumn,
    header: Option<&csv::StringRecord>,
    width: usize,
    source_name: &str,
) -> Result<usize> {
    match label {
        LabelColumn::Index(i) if *i < width => Ok(*i),
        LabelColumn::Index(i) => Err(Error::csv(
            source_name,
            None,
            format!("label column index {i} out of range ({width} columns)"),
        )),
        LabelColumn::Name(n) => {
            let header = header.ok_or_else(|| {
                Error::csv(source_name, None, format!("label column {n:?} needs a header row"))
            })?;
            header.iter().position(|h| h.trim() == n).ok_or_else(|| {
                Error::csv(source_name, Some(1), format!("no column named {n:?} in header"))
            })
        }
    }
}

/// Reads a table from any reader. `source_name` only labels error messages.
pub fn read_table<R: Read>(
    reader: R,
    source_name: &str,
    label: Option<&LabelColumn>,
    has_header: bool,
) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = if has_header {
        match records.next() {
            Some(r) => Some(r.map_err(|e| csv_error(source_name, e))?),
            None => return Err(Error::csv(source_name, None, "file is empty")),
        }
    } else {
        None
    };

    let mut width = header.as_ref().map(|h| h.len());
    let mut label_idx = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n_rows = 0;
    for rec in records {
        let rec = rec.map_err(|e| csv_error(source_name, e))?;
        let line = rec.position().map(|p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::csv(
                source_name,
                line,
                format!("ragged row: {} fields, expected {w}", rec.len()),
            ));
        }
        if label_idx.is_none() {
            if let Some(l) = label {
                label_idx = Some(resolve_label(l, header.as_ref(), w, source_name)?);
            }
        }
        for (j, cell) in rec.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(cell.trim().to_string());
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::csv(
                    source_name,
                    line,
                    format!("column {} ({}): {cell:?} is not a number", j, column_name(header.as_ref(), j)),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::csv(
                    source_name,
                    line,
                    format!("column {j} ({}): non-finite value {cell:?}", column_name(header.as_ref(), j)),
                ));
            }
            values.push(v);
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::csv(source_name, None, "no data rows"));
    }
    let width = width.unwrap_or(0);
    let n_features = width - usize::from(label_idx.is_some());
    let feature_names = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != label_idx)
            .map(|(_, s)| s.trim().to_string())
            .collect(),
        None => synthetic_feature_names(n_features),
    };
    Ok(Table {
        feature_names,
        features: Matrix::new(n_rows, n_features, values)?,
        label_name: label_idx.map(|i| column_name(header.as_ref(), i)),
        labels: label_idx.map(|_| labels),
    })
}

fn column_name(header: Option<&csv::StringRecord>, j: usize) -> String {
    header
        .and_then(|h| h.get(j))
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| format!("#{j}"))
}

fn csv_error(source_name: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    Error::csv(source_name, line, e.to_string())
}

pub fn load_table(path: &Path, label: Option<&LabelColumn>, has_header: bool) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, &path.display().to_string(), label, has_header)
}

pub fn load_csv(path: &Path, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    load_table(path, Some(label), has_header)?.into_dataset(&path.display().to_string())
}

/// Writes features then the label column, with a header row. Reals use the
/// shortest representation that parses back to the same value.
pub fn write_dataset<W: Write>(writer: W, ds: &Dataset, label_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = ds
        .feature_names()
        .iter()
        .map(String::as_str)
        .chain([label_name])
        .collect();
    let to_err = |e: csv::Error| Error::csv("<output>", None, e.to_string());
    w.write_record(&header).map_err(to_err)?;
    let mut row = Vec::with_capacity(header.len());
    for (i, x) in ds.features().iter_rows().enumerate() {
        row.clear();
        row.extend(x.iter().map(|v| v.to_string()));
        row.push(ds.class_names()[ds.labels()[i]].clone());
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::csv("<output>", None, e.to_string()))?;
    Ok(())
}

pub fn save_csv(path: &Path, ds: &Dataset, label_name: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(std::io::BufWriter::new(file), ds, label_name).map_err(|e| match e {
        Error::Csv { message, .. } => Error::io(path, std::io::Error::other(message)),
        other => other,
    })
}
