//! Field persistence: a small self-describing container (one JSON header
//! line followed by a little-endian f64 payload) plus tidy CSV exports for
//! external plotting. The container round-trips bit-exactly, so downstream
//! tools (norm reports, restarts, regression diffs) can rely on checksums.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Real;
use crate::grids::{StripField, SurfaceField, XGrid, YGrid};

/// Bumped whenever the header schema or payload layout changes.
pub const FORMAT_VERSION: u32 = 1;

/// Header line of the field container. `levels` double as the payload block
/// count; `m` is the interior transverse node count (unused for surface
/// fields, stored as 0).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldHeader {
    pub version: u32,
    pub kind: String,
    pub n_dim: usize,
    pub nx: usize,
    pub m: usize,
    pub len: f64,
    pub levels: Vec<f64>,
}

impl FieldHeader {
    pub fn x_len(&self) -> usize {
        self.nx.pow(self.n_dim as u32)
    }

    fn check(&self, kind: &str) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "field container version {} (this build reads {FORMAT_VERSION})",
                self.version
            )));
        }
        if self.kind != kind {
            return Err(Error::Invalid(format!(
                "expected a {kind} field, found `{}`",
                self.kind
            )));
        }
        if !(self.n_dim == 1 || self.n_dim == 2) || self.nx == 0 || self.levels.is_empty() {
            return Err(Error::Invalid("malformed field header".into()));
        }
        Ok(())
    }
}

fn write_header<W: Write>(w: &mut W, header: &FieldHeader) -> Result<()> {
    let line = serde_json::to_string(header)?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    Ok(())
}

fn read_header<R: BufRead>(r: &mut R) -> Result<FieldHeader> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.is_empty() {
        return Err(Error::Invalid("empty field container".into()));
    }
    Ok(serde_json::from_str(line.trim_end())?)
}

fn write_f64s<W: Write, I: Iterator<Item = f64>>(w: &mut W, values: I) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Invalid("field payload shorter than its header promises".into()))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Write a strip field; the payload holds one `x_len * (m + 2)` block per
/// level in row-major `(i, j)` order.
pub fn write_strip<T: Real>(
    path: &Path,
    n_dim: usize,
    nx: usize,
    len: T,
    m: usize,
    field: &StripField<T>,
) -> Result<()> {
    let header = FieldHeader {
        version: FORMAT_VERSION,
        kind: "strip".into(),
        n_dim,
        nx,
        m,
        len: len.as_f64(),
        levels: field.levels.iter().map(|t| t.as_f64()).collect(),
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut w, &header)?;
    for slice in &field.slices {
        write_f64s(&mut w, slice.iter().map(|v| v.as_f64()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_strip<T: Real>(path: &Path) -> Result<(FieldHeader, StripField<T>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let header = read_header(&mut r)?;
    header.check("strip")?;
    let (x_len, ny) = (header.x_len(), header.m + 2);
    let levels: Vec<T> = header.levels.iter().map(|&t| T::of(t)).collect();
    let mut field = StripField::zeros(&levels, x_len, ny);
    for slice in &mut field.slices {
        let vals = read_f64s(&mut r, x_len * ny)?;
        for (dst, v) in slice.iter_mut().zip(vals) {
            *dst = T::of(v);
        }
    }
    Ok((header, field))
}

/// Write a surface field; each level block holds the `x_len` values followed
/// by the `x_len` time derivatives.
pub fn write_surface<T: Real>(
    path: &Path,
    n_dim: usize,
    nx: usize,
    len: T,
    field: &SurfaceField<T>,
) -> Result<()> {
    let header = FieldHeader {
        version: FORMAT_VERSION,
        kind: "surface".into(),
        n_dim,
        nx,
        m: 0,
        len: len.as_f64(),
        levels: field.levels.iter().map(|t| t.as_f64()).collect(),
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut w, &header)?;
    for (vals, dots) in field.values.iter().zip(&field.dot_values) {
        write_f64s(&mut w, vals.iter().chain(dots.iter()).map(|v| v.as_f64()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_surface<T: Real>(path: &Path) -> Result<(FieldHeader, SurfaceField<T>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let header = read_header(&mut r)?;
    header.check("surface")?;
    let x_len = header.x_len();
    let levels: Vec<T> = header.levels.iter().map(|&t| T::of(t)).collect();
    let mut field = SurfaceField::zeros(&levels, x_len);
    for k in 0..levels.len() {
        let vals = read_f64s(&mut r, 2 * x_len)?;
        field.values[k] = Array1::from_iter(vals[..x_len].iter().map(|&v| T::of(v)));
        field.dot_values[k] = Array1::from_iter(vals[x_len..].iter().map(|&v| T::of(v)));
    }
    Ok((header, field))
}

fn csv_writer(path: &Path) -> Result<BufWriter<std::fs::File>> {
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

/// Tidy long-format CSV of a strip field: one row per `(t, x, y)` sample.
pub fn export_strip_csv<T: Real>(
    path: &Path,
    xgrid: &XGrid<T>,
    ygrid: &YGrid<T>,
    field: &StripField<T>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    if xgrid.n_dim == 1 {
        writeln!(w, "t,x,y,u")?;
    } else {
        writeln!(w, "t,x1,x2,y,u")?;
    }
    for (k, &t) in field.levels.iter().enumerate() {
        for (i, p) in xgrid.points.iter().enumerate() {
            for (j, &y) in ygrid.nodes.iter().enumerate() {
                let u = field.slices[k][(i, j)];
                if xgrid.n_dim == 1 {
                    writeln!(w, "{},{},{},{}", t.as_f64(), p[0].as_f64(), y.as_f64(), u.as_f64())?;
                } else {
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        t.as_f64(),
                        p[0].as_f64(),
                        p[1].as_f64(),
                        y.as_f64(),
                        u.as_f64()
                    )?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Tidy long-format CSV of a surface field: one row per `(t, x)` sample with
/// both the height and its rate.
pub fn export_surface_csv<T: Real>(
    path: &Path,
    xgrid: &XGrid<T>,
    field: &SurfaceField<T>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    if xgrid.n_dim == 1 {
        writeln!(w, "t,x,s,sdot")?;
    } else {
        writeln!(w, "t,x1,x2,s,sdot")?;
    }
    for (k, &t) in field.levels.iter().enumerate() {
        for (i, p) in xgrid.points.iter().enumerate() {
            let (s, sd) = (field.values[k][i], field.dot_values[k][i]);
            if xgrid.n_dim == 1 {
                writeln!(w, "{},{},{},{}", t.as_f64(), p[0].as_f64(), s.as_f64(), sd.as_f64())?;
            } else {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    t.as_f64(),
                    p[0].as_f64(),
                    p[1].as_f64(),
                    s.as_f64(),
                    sd.as_f64()
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
