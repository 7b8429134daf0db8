//! Numeric CSV datasets with a header row.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn parse_label(s: &str) -> Option<usize> {
    if let Ok(v) = s.parse::<usize>() {
        return Some(v);
    }
    // accept "2.0"-style integral floats
    s.parse::<f64>()
        .ok()
        .filter(|v| *v >= 0.0 && v.fract() == 0.0 && *v < usize::MAX as f64)
        .map(|v| v as usize)
}

/// Loads a CSV whose `label_column` holds class indices; every other column
/// becomes a feature, in header order.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::UnknownLabelColumn(label_column.to_string()))?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::RaggedRows {
                row: row + 1,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let bad = || Error::NonNumericCell {
                row: row + 1,
                column: header[col].clone(),
                value: cell.to_string(),
            };
            if col == label_idx {
                labels.push(parse_label(cell).ok_or_else(bad)?);
            } else {
                let v: f64 = cell.parse().map_err(|_| bad())?;
                if !v.is_finite() {
                    return Err(bad());
                }
                data.push(v);
            }
        }
    }
    let n = labels.len();
    let inputs = Matrix::new(n, header.len() - 1, data)?;
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(inputs, labels, classes, name)
}
