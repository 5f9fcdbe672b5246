//! Tabular CSV in and out.
//!
//! Input needs a header row. The label column is picked by name, or by
//! zero-based index when no header matches. Class labels are arbitrary
//! strings; they are mapped to indices in sorted order (numeric order when
//! every label parses as a number).

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dnspn_core::{Dataset, Matrix, Targets};

use crate::config::TaskKind;
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    /// Original label strings, indexed by class (classification only).
    pub class_names: Option<Vec<String>>,
}

fn label_index(header: &csv::StringRecord, label_col: &str, path: &Path) -> Result<usize> {
    if let Some(i) = header.iter().position(|h| h.trim() == label_col) {
        return Ok(i);
    }
    match label_col.parse::<usize>() {
        Ok(i) if i < header.len() => Ok(i),
        Ok(i) => Err(CliError::format(path, format!("label column index {i} out of range ({} columns)", header.len()))),
        Err(_) => Err(CliError::format(path, format!("no column named {label_col:?}"))),
    }
}

fn compare_labels(a: &str, b: &str, numeric: bool) -> Ordering {
    if numeric {
        let (x, y) = (a.parse::<f64>().unwrap_or(0.0), b.parse::<f64>().unwrap_or(0.0));
        x.total_cmp(&y).then_with(|| a.cmp(b))
    } else {
        a.cmp(b)
    }
}

/// Sorted distinct labels.
pub fn class_names(raw: &[String]) -> Vec<String> {
    let mut names: Vec<String> = raw.to_vec();
    let numeric = names.iter().all(|s| s.parse::<f64>().is_ok());
    names.sort_by(|a, b| compare_labels(a, b, numeric));
    names.dedup();
    names
}

/// Reads a CSV. `known_classes` fixes the label mapping (for test files and
/// evaluation); unseen labels are then a data error.
pub fn load_csv(path: &Path, label_col: &str, task: TaskKind, known_classes: Option<&[String]>) -> Result<Table> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| CliError::format(path, e))?
        .clone();
    if header.is_empty() {
        return Err(CliError::format(path, "missing header row"));
    }
    let li = label_index(&header, label_col, path)?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != li)
        .map(|(_, h)| h.to_string())
        .collect();
    let d = feature_names.len();
    if d == 0 {
        return Err(CliError::format(path, "no feature columns"));
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        // header is line 1
        let line = row + 2;
        let record = record.map_err(|e| CliError::format(path, format!("line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(CliError::format(
                path,
                format!("line {line}: expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (i, field) in record.iter().enumerate() {
            if i == li {
                raw_labels.push(field.to_string());
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                CliError::format(path, format!("line {line}: column {:?} is not numeric: {field:?}", &header[i]))
            })?;
            if !v.is_finite() {
                return Err(CliError::format(path, format!("line {line}: non-finite value in column {:?}", &header[i])));
            }
            features.push(v);
        }
    }
    let n = raw_labels.len();
    if n == 0 {
        return Err(CliError::format(path, "no data rows"));
    }
    let x = Matrix::from_vec(n, d, features)?;

    let (y, classes, names) = match task {
        TaskKind::Regress => {
            let values = raw_labels
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| CliError::format(path, format!("line {}: target {s:?} is not a finite number", i + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            (Targets::Values(values), None, None)
        }
        TaskKind::Class => {
            let names = match known_classes {
                Some(k) => k.to_vec(),
                None => class_names(&raw_labels),
            };
            let labels = raw_labels
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    names.iter().position(|n| n == s).ok_or_else(|| {
                        CliError::Data(format!("{}: line {}: label {s:?} was not seen in training", path.display(), i + 2))
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            (Targets::Classes(labels), Some(names.len()), Some(names))
        }
    };
    Ok(Table {
        dataset: Dataset::new(x, y, classes)?,
        feature_names,
        class_names: names,
    })
}

/// Writes features as `f0..f{d-1}` plus a `label` column.
pub fn write_dataset_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = (0..ds.d()).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| CliError::format(path, e))?;
    let mut record: Vec<String> = Vec::with_capacity(ds.d() + 1);
    for i in 0..ds.n() {
        record.clear();
        record.extend(ds.x.row(i).iter().map(|v| v.to_string()));
        record.push(match &ds.y {
            Targets::Classes(c) => c[i].to_string(),
            Targets::Values(v) => v[i].to_string(),
        });
        w.write_record(&record).map_err(|e| CliError::format(path, e))?;
    }
    let mut inner = w.into_inner().map_err(|e| CliError::format(path, e))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}
