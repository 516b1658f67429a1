//! Field dump/load: a one-line JSON header followed by the raw little-endian
//! doubles, plus CSV export of 1D slices.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::grid::{Centering, Grid, ScalarField};

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    dim: usize,
    n: usize,
    centering: Centering,
    origin: Vec<f64>,
    h: f64,
}

/// Write a field as a JSON header line followed by the data as raw f64 LE.
pub fn dump_field(field: &ScalarField, path: &Path) -> Result<(), Error> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = Header {
        dim: field.grid.dim,
        n: field.grid.n,
        centering: field.centering,
        origin: field.grid.origin[..field.grid.dim].to_vec(),
        h: field.grid.h,
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for v in &field.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_field(path: &Path) -> Result<ScalarField, Error> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(e.to_string()))?;
    let extent = header.h * header.n as f64;
    let lower = header.origin.clone();
    let upper: Vec<f64> = lower.iter().map(|&v| v + extent).collect();
    let grid = Grid::new(header.dim, header.n, &lower, &upper)?;
    let mut field = ScalarField::zeros(grid, header.centering);
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let expect = field.data.len() * 8;
    if buf.len() != expect {
        return Err(Error::Format(format!(
            "payload holds {} bytes, layout requires {expect}",
            buf.len()
        )));
    }
    for (i, chunk) in buf.chunks_exact(8).enumerate() {
        field.data[i] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(field)
}

/// Export a 1D slice along `axis` with the transverse indices fixed, as
/// `coordinate,value` CSV rows.
pub fn slice_csv(field: &ScalarField, axis: usize, fixed: &[usize], path: &Path) -> Result<(), Error> {
    let grid = field.grid;
    let c = field.centering;
    let shape = grid.shape(c);
    if axis >= grid.dim {
        return Err(Error::Format(format!("axis {axis} out of range for dim {}", grid.dim)));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "coord,value")?;
    for t in 0..shape[axis] {
        let mut pos = [0usize; 3];
        let mut fi = 0;
        for a in 0..grid.dim {
            if a == axis {
                pos[a] = t;
            } else {
                pos[a] = fixed[fi];
                fi += 1;
            }
        }
        let x = grid.coord(c, pos[0], pos[1], pos[2]);
        let v = field.data[grid.idx(c, pos[0], pos[1], pos[2])];
        writeln!(w, "{:.17e},{:.17e}", x[axis], v)?;
    }
    Ok(())
}
