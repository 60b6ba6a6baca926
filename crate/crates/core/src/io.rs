//! CSV point-cloud input and atomic file output.
//!
//! Input is one point per row, comma separated. A first row containing any
//! non-numeric cell is taken as a header.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Cells of a CSV file with their 1-based line numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Option<Vec<String>>,
    pub rows: Vec<(u64, Vec<String>)>,
}

fn is_numeric(cell: &str) -> bool {
    cell.trim().parse::<f64>().is_ok()
}

pub fn read_raw<R: Read>(reader: R, path: &Path) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut header = None;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        let cells: Vec<String> = rec.iter().map(str::to_owned).collect();
        if cells.len() == 1 && cells[0].is_empty() {
            continue;
        }
        if k == 0 && cells.iter().any(|c| !c.is_empty() && !is_numeric(c)) {
            header = Some(cells);
            continue;
        }
        rows.push((line, cells));
    }
    Ok(RawTable { header, rows })
}

pub fn read_raw_file(path: &Path) -> Result<RawTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw(std::io::BufReader::new(f), path)
}

/// Parses every row as a point; rows must be equally long and finite.
pub fn points_from_raw(table: &RawTable, path: &Path) -> Result<PointCloud> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let Some((_, first)) = table.rows.first() else {
        return Err(Error::EmptySample);
    };
    let dim = first.len();
    let mut data = Vec::with_capacity(table.rows.len() * dim);
    for (line, cells) in &table.rows {
        if cells.len() != dim {
            return Err(parse_err(*line, format!("expected {dim} fields, found {}", cells.len())));
        }
        for c in cells {
            let v: f64 = c
                .parse()
                .map_err(|_| parse_err(*line, format!("not a number: {c:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(*line, format!("non-finite value: {c:?}")));
            }
            data.push(v);
        }
    }
    PointCloud::new(dim, data)
}

pub fn read_points_csv(path: &Path) -> Result<PointCloud> {
    points_from_raw(&read_raw_file(path)?, path)
}

/// Headerless CSV, full round-trip precision.
pub fn points_to_csv(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.as_slice().len() * 20);
    for row in cloud.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
