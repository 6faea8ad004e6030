//! Matrix file formats: a small binary container and CSV ingestion.
//!
//! Binary layout: 8 magic bytes `CSKMAT01`, then `rows` and `cols` as
//! little-endian u64, then `rows * cols` row-major little-endian f64.
//! Files ending in `.csv` are read as comma-separated decimal rows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CSKMAT01";

/// Writes the binary container.
pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the binary container.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: shorter than the header", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            magic,
            MAGIC
        )));
    }
    let mut dim = [0u8; 8];
    r.read_exact(&mut dim)?;
    let rows = u64::from_le_bytes(dim) as usize;
    r.read_exact(&mut dim)?;
    let cols = u64::from_le_bytes(dim) as usize;
    let count = rows.checked_mul(cols).ok_or_else(|| {
        Error::Format(format!("{}: dimension overflow", path.display()))
    })?;
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf).map_err(|_| {
            Error::Format(format!(
                "{}: truncated, expected {count} values",
                path.display()
            ))
        })?;
        data.push(f64::from_le_bytes(buf));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Reads a comma-separated matrix; all rows must have the same width.
pub fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<f64> = trimmed
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| {
                    Error::Format(format!(
                        "{}:{}: bad number '{}': {e}",
                        path.display(),
                        lineno + 1,
                        f.trim()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Format(format!(
                    "{}:{}: row has {} fields, expected {c}",
                    path.display(),
                    lineno + 1,
                    fields.len()
                )));
            }
            _ => {}
        }
        rows += 1;
        data.extend(fields);
    }
    let cols = cols.ok_or_else(|| Error::Format(format!("{}: empty file", path.display())))?;
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Dispatches on the `.csv` extension, binary otherwise.
pub fn read_auto(path: &Path) -> Result<Array2<f64>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv_matrix(path)
    } else {
        read_matrix(path)
    }
}
