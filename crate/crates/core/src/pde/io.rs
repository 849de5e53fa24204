//! Flat binary and CSV export of grid functions.
//!
//! Binary layout: `d: u64`, `n_per_axis: u64`, `R_dom: f64` (little-endian),
//! then `n^d` values as little-endian `f64` in point-major order.

use std::io::{Read, Write};

use super::grid::{make_grid, DiscreteField};
use crate::error::{Error, Result};

pub fn write_binary(field: &DiscreteField, mut w: impl Write) -> Result<()> {
    let g = &field.grid;
    w.write_all(&(g.dim() as u64).to_le_bytes())?;
    w.write_all(&(g.n_per_axis() as u64).to_le_bytes())?;
    w.write_all(&g.r_dom().to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.values.len() * 8);
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<DiscreteField> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let d = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let r_dom = f64::from_le_bytes(word);
    if d == 0 || d > 8 {
        return Err(Error::Format(format!("implausible dimension {d}")));
    }
    let grid = make_grid(d, r_dom, n)?;
    let mut bytes = vec![0u8; grid.len() * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    DiscreteField::from_values(&grid, values)
}

/// CSV with header `x1,…,xd,value`; intended for small grids.
pub fn write_csv(field: &DiscreteField, mut w: impl Write) -> Result<()> {
    let g = &field.grid;
    let d = g.dim();
    let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["value".to_string()]).collect();
    writeln!(w, "{}", header.join(","))?;
    let mut x = vec![0.0; d];
    for (p, v) in field.values.iter().enumerate() {
        g.point(p, &mut x);
        let row: Vec<String> = x.iter().chain([v]).map(|c| format!("{c:e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
