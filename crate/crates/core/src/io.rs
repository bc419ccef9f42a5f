//! Field serialization: CSV with index columns and raw little-endian
//! `f64` with a JSON sidecar.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Field, RegularGrid};

/// Which index space the stored values live on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Real-space cells, row-major.
    Cells,
    /// Harmonic modes in FFT index order.
    Modes,
}

/// JSON sidecar of a binary field file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub shape: Vec<usize>,
    pub lengths: Vec<f64>,
    pub dtype: String,
    pub endianness: String,
    pub layout: Layout,
}

impl Sidecar {
    pub fn grid(&self) -> Result<RegularGrid> {
        if self.shape.len() != self.lengths.len() {
            return Err(Error::InvalidArgument("sidecar shape and lengths differ in rank".into()));
        }
        let axes: Vec<Axis> = self
            .shape
            .iter()
            .zip(&self.lengths)
            .map(|(&n_points, &length)| Axis { n_points, length })
            .collect();
        RegularGrid::try_from(axes)
    }
}

/// Formats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `<path>` as raw little-endian `f64` and `<path>.json` beside it.
pub fn write_binary(path: &Path, grid: &RegularGrid, values: &[f64], layout: Layout) -> Result<()> {
    if values.len() != grid.size() {
        return Err(Error::DomainMismatch {
            expected: grid.size(),
            got: values.len(),
        });
    }
    let mut bytes = Vec::with_capacity(8 * values.len());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let side = Sidecar {
        shape: grid.shape(),
        lengths: grid.axes().iter().map(|a| a.length).collect(),
        dtype: "float64".into(),
        endianness: "little".into(),
        layout,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}

/// Reads a binary field and its sidecar.
pub fn read_binary(path: &Path) -> Result<(Sidecar, Vec<f64>)> {
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if side.dtype != "float64" || side.endianness != "little" {
        return Err(Error::InvalidArgument(format!(
            "unsupported binary format {} / {}",
            side.dtype, side.endianness
        )));
    }
    let bytes = fs::read(path)?;
    let n: usize = side.shape.iter().product();
    if bytes.len() != 8 * n {
        return Err(Error::InvalidArgument(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            8 * n
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((side, values))
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    write_binary(path, field.grid(), field.values(), Layout::Cells)
}

pub fn read_field(path: &Path) -> Result<Field> {
    let (side, values) = read_binary(path)?;
    if side.layout != Layout::Cells {
        return Err(Error::InvalidArgument(format!("{} is not a cell field", path.display())));
    }
    Field::new(side.grid()?, values)
}

/// CSV with one index column per axis and a `value` column.
pub fn write_csv(path: &Path, grid: &RegularGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.size() {
        return Err(Error::DomainMismatch {
            expected: grid.size(),
            got: values.len(),
        });
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    let header: Vec<String> = (0..grid.ndim()).map(|a| format!("i{a}")).collect();
    writeln!(w, "{},value", header.join(","))?;
    for (flat, v) in values.iter().enumerate() {
        for i in grid.unravel(flat) {
            write!(w, "{i},")?;
        }
        writeln!(w, "{}", fmt_f64(*v))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the value column of a CSV written by [`write_csv`].
pub fn read_csv_values(path: &Path) -> Result<Vec<f64>> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate().skip(1) {
        let line = line?;
        let last = line.rsplit(',').next().unwrap_or_default();
        out.push(
            last.parse()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
