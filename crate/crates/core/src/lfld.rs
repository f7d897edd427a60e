//! LFLD binary field files and CSV export.
//!
//! Layout (little-endian): magic `LFLD1\n`, dim `u32`, extents `u64` × dim,
//! components `u32`, complex flag `u8`, origin `f64` × dim, spacing `f64` × dim,
//! then the `f64` payload in the field's native order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Rank};

pub const MAGIC: &[u8; 6] = b"LFLD1\n";

pub fn to_bytes(f: &Field) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(64 + 8 * f.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for &e in g.extents() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    out.extend_from_slice(&(f.components() as u32).to_le_bytes());
    out.push(f.is_complex() as u8);
    for &o in g.origin() {
        out.extend_from_slice(&o.to_le_bytes());
    }
    for &s in g.spacing() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for &v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse a field. Rank is inferred: one component is a scalar, otherwise a vector.
pub fn from_bytes(buf: &[u8]) -> Result<Field> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(6)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let dim = c.u32()? as usize;
    if !(2..=3).contains(&dim) {
        return Err(Error::Format(format!("dimension {dim}")));
    }
    let mut extents = Vec::with_capacity(dim);
    for _ in 0..dim {
        extents.push(c.u64()? as usize);
    }
    let comps = c.u32()? as usize;
    let complex = match c.take(1)?[0] {
        0 => false,
        1 => true,
        x => return Err(Error::Format(format!("complex flag {x}"))),
    };
    let origin = (0..dim).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let spacing = (0..dim).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(&extents, &origin, &spacing)?;
    let count = grid.len() * comps * if complex { 2 } else { 1 };
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(c.f64()?);
    }
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes".into()));
    }
    let rank = if comps == 1 { Rank::Scalar } else { Rank::Vector(comps) };
    Field::from_values(grid, rank, complex, values)
}

pub fn write(path: impl AsRef<Path>, f: &Field) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&to_bytes(f))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Field> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

/// CSV with one row per point: coordinates, then components (re/im pairs when complex).
pub fn to_csv(f: &Field) -> Result<String> {
    let g = f.grid();
    if g.len() > 256 * 256 {
        return Err(Error::InvalidArgument(format!("CSV export limited to 65536 points, field has {}", g.len())));
    }
    let axes = ["x1", "x2", "x3"];
    let mut header: Vec<String> = axes[..g.dim()].iter().map(|s| s.to_string()).collect();
    for c in 0..f.components() {
        if f.is_complex() {
            header.push(format!("c{c}_re"));
            header.push(format!("c{c}_im"));
        } else {
            header.push(format!("c{c}"));
        }
    }
    let mut s = header.join(",");
    s.push('\n');
    for p in 0..g.len() {
        let x = g.coords(p);
        let row: Vec<String> = x[..g.dim()].iter().chain(f.at(p)).map(|v| format!("{v:.17e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    Ok(s)
}
