use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::codec::DataMatrix;
use crate::error::{Error, Result};

/// Response column of a CSV file, by zero-based index or header name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseColumn {
    Index(usize),
    Name(String),
}

/// Reads a headed numeric CSV file. The response keeps its position; use
/// [`DataMatrix::with_response_last`] to move it.
pub fn read_csv(path: impl AsRef<Path>, response: &ResponseColumn) -> Result<DataMatrix> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let names: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut cells = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != names.len() {
            return Err(Error::mismatch(
                format!("{} fields", names.len()),
                format!("{} on row {}", record.len(), i + 1),
            ));
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::invalid(format!(
                    "{}: row {} has non-numeric value {field:?}",
                    path.display(),
                    i + 1
                ))
            })?;
            cells.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::invalid(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    let col = match response {
        ResponseColumn::Index(j) if *j < names.len() => *j,
        ResponseColumn::Index(j) => {
            return Err(Error::invalid(format!("response column {j} out of range")))
        }
        ResponseColumn::Name(n) => names
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| Error::invalid(format!("no column named {n:?}")))?,
    };
    let values = DMatrix::from_row_slice(rows, names.len(), &cells);
    DataMatrix::with_response(values, col)?.with_column_names(names)
}

/// Writes a headed CSV with shortest round-trip float formatting.
pub fn write_csv(data: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = match data.column_names() {
        Some(names) => names.to_vec(),
        None => (0..data.ncols())
            .map(|j| {
                if j == data.response_col() {
                    "y".to_string()
                } else {
                    format!("x{}", j + 1)
                }
            })
            .collect(),
    };
    w.write_record(&header)?;
    for i in 0..data.nrows() {
        w.write_record(data.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
