//! CSV and JSON file formats.
//!
//! Point files hold one point per row as comma-separated reals. A header row
//! is optional and is recognised by any non-numeric cell; when the last header
//! cell is `label` that column carries integer class labels. Values are
//! written with the shortest representation that parses back to the same
//! `f64`, so files round-trip bit-exactly.
//!
//! CDF table files hold `value,cumulative_probability` column pairs, one pair
//! per dimension. Columns of a shorter table are left blank once it ends.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{QqeError, Result};
use crate::matrix::Matrix;
use crate::reference::CdfTable;
use crate::types::{validate_dataset, Dataset};

/// Raw contents of a point file before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable {
    pub header: Option<Vec<String>>,
    pub points: Matrix<f64>,
    pub labels: Option<Vec<i64>>,
}

fn reader_builder() -> csv::ReaderBuilder {
    let mut b = csv::ReaderBuilder::new();
    b.has_headers(false).flexible(true).trim(csv::Trim::All).comment(Some(b'#'));
    b
}

fn parse_real(cell: &str, row: usize, col: usize) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| QqeError::Parse(format!("row {row}, column {col}: `{cell}` is not a number")))
}

fn parse_label(cell: &str, row: usize) -> Result<i64> {
    if let Ok(v) = cell.parse::<i64>() {
        return Ok(v);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(QqeError::Parse(format!("row {row}: label `{cell}` is not an integer"))),
    }
}

/// Parses a point file from any reader. Blank lines and `#` comments are
/// skipped.
pub fn read_point_table(source: impl Read) -> Result<PointTable> {
    let mut records = reader_builder().from_reader(source).into_records();
    let mut header = None;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, record) in records.by_ref().enumerate() {
        let record = record?;
        let cells: Vec<String> = record.iter().map(str::to_string).collect();
        if cells.iter().all(String::is_empty) {
            continue;
        }
        if i == 0 && cells.iter().any(|c| c.parse::<f64>().is_err()) {
            header = Some(cells);
        } else {
            rows.push(cells);
        }
    }
    let has_labels = header
        .as_ref()
        .and_then(|h: &Vec<String>| h.last())
        .is_some_and(|c| c.eq_ignore_ascii_case("label"));
    let width = match (&header, rows.first()) {
        (Some(h), _) => h.len(),
        (None, Some(r)) => r.len(),
        (None, None) => return Err(QqeError::EmptySample),
    };
    let dims = if has_labels { width - 1 } else { width };
    if dims == 0 {
        return Err(QqeError::ShapeMismatch("file has no coordinate columns".into()));
    }
    let mut data = Vec::with_capacity(rows.len() * dims);
    let mut labels = has_labels.then(|| Vec::with_capacity(rows.len()));
    for (r, cells) in rows.iter().enumerate() {
        if cells.len() != width {
            return Err(QqeError::ShapeMismatch(format!("row {r} has {} fields, expected {width}", cells.len())));
        }
        for (c, cell) in cells[..dims].iter().enumerate() {
            data.push(parse_real(cell, r, c)?);
        }
        if let Some(labels) = labels.as_mut() {
            labels.push(parse_label(&cells[dims], r)?);
        }
    }
    let points = Matrix::new(rows.len(), dims, data)?;
    Ok(PointTable { header, points, labels })
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointTable> {
    read_point_table(File::open(path)?)
}

/// Reads and validates a dataset file.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset<f64>> {
    let table = read_points(path)?;
    validate_dataset(table.points, table.labels)
}

/// Writes points (and optional labels) as CSV with a header row
/// `x0,x1,...[,label]`.
pub fn write_points_to(mut sink: impl Write, points: &Matrix<f64>, labels: Option<&[i64]>) -> Result<()> {
    if let Some(labels) = labels {
        if labels.len() != points.rows() {
            return Err(QqeError::LabelLengthMismatch { points: points.rows(), labels: labels.len() });
        }
    }
    let mut header: Vec<String> = (0..points.cols()).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in points.iter_rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(labels) = labels {
            cells.push(labels[i].to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    sink.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_points(path: impl AsRef<Path>, points: &Matrix<f64>, labels: Option<&[i64]>) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    write_points_to(&mut writer, points, labels)?;
    writer.flush()?;
    Ok(())
}

/// `snapshot_000050.csv` style file name.
pub fn snapshot_file_name(iteration: usize) -> String {
    format!("snapshot_{iteration:06}.csv")
}

pub fn write_snapshot(dir: impl AsRef<Path>, iteration: usize, points: &Matrix<f64>, labels: Option<&[i64]>) -> Result<PathBuf> {
    let path = dir.as_ref().join(snapshot_file_name(iteration));
    write_points(&path, points, labels)?;
    Ok(path)
}

/// Headerless file of reals whose row count must equal `expected_n`.
pub fn load_external_embedding(path: impl AsRef<Path>, expected_n: usize) -> Result<Matrix<f64>> {
    let table = read_points(path)?;
    if table.header.is_some() {
        return Err(QqeError::Parse("embedding file must contain only numbers".into()));
    }
    if table.points.rows() != expected_n {
        return Err(QqeError::RowCountMismatch { expected: expected_n, actual: table.points.rows() });
    }
    if let Some((row, col)) = table.points.first_non_finite() {
        return Err(QqeError::NonFinite { row, col });
    }
    Ok(table.points)
}

/// Parses `value,probability` column pairs into one table per pair.
pub fn read_cdf_tables_from(source: impl Read) -> Result<Vec<CdfTable>> {
    let mut columns: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut ended: Vec<bool> = Vec::new();
    for (r, record) in reader_builder().from_reader(source).into_records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = record.iter().collect();
        if cells.iter().all(|c| c.is_empty()) {
            continue;
        }
        if r == 0 && cells.iter().any(|c| !c.is_empty() && c.parse::<f64>().is_err()) {
            continue;
        }
        if !cells.len().is_multiple_of(2) {
            return Err(QqeError::InvalidTable(format!("row {r} has an odd number of fields")));
        }
        let pairs = cells.len() / 2;
        if columns.is_empty() {
            columns = vec![Vec::new(); pairs];
            ended = vec![false; pairs];
        } else if pairs != columns.len() {
            return Err(QqeError::InvalidTable(format!("row {r} has {pairs} column pairs, expected {}", columns.len())));
        }
        for (p, pair) in cells.chunks(2).enumerate() {
            match (pair[0].is_empty(), pair[1].is_empty()) {
                (true, true) => ended[p] = true,
                (false, false) if !ended[p] => {
                    columns[p].push((parse_real(pair[0], r, 2 * p)?, parse_real(pair[1], r, 2 * p + 1)?));
                }
                _ => return Err(QqeError::InvalidTable(format!("row {r}: incomplete or resumed pair {p}"))),
            }
        }
    }
    if columns.is_empty() {
        return Err(QqeError::InvalidTable("file holds no table rows".into()));
    }
    columns.into_iter().map(CdfTable::new).collect()
}

pub fn read_cdf_tables(path: impl AsRef<Path>) -> Result<Vec<CdfTable>> {
    read_cdf_tables_from(File::open(path)?)
}
