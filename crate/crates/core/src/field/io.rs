//! CSV grid serialization: one line per y index (row 0 first), one column per
//! x index. Vector fields are written as the x-component block, a blank line,
//! then the y-component block. Floats use the shortest round-trip
//! representation so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::{Grid, ScalarField, VectorField};
use crate::error::{EvacError, Result};

fn write_block(out: &mut String, grid: &Grid, values: &[f64]) {
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{}", values[grid.index(i, j)]).expect("write to String");
        }
        out.push('\n');
    }
}

pub fn write_scalar_csv<W: Write>(mut w: W, f: &ScalarField) -> Result<()> {
    let mut s = String::new();
    write_block(&mut s, f.grid(), f.values());
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_vector_csv<W: Write>(mut w: W, f: &VectorField) -> Result<()> {
    let mut s = String::new();
    write_block(&mut s, f.grid(), f.x());
    s.push('\n');
    write_block(&mut s, f.grid(), f.y());
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn parse_block<'a>(grid: &Grid, lines: &mut impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.ny() {
        let line = lines
            .next()
            .ok_or_else(|| EvacError::Input(format!("missing row {j}")))?;
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| EvacError::Input(format!("row {j}: {e}")))?;
        if row.len() != grid.nx() {
            return Err(EvacError::Input(format!(
                "row {j} has {} columns, expected {}",
                row.len(),
                grid.nx()
            )));
        }
        values.extend(row);
    }
    Ok(values)
}

pub fn read_scalar_csv<R: Read>(mut r: R, grid: Grid) -> Result<ScalarField> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines();
    let values = parse_block(&grid, &mut lines)?;
    ScalarField::from_values(grid, values)
}

pub fn read_vector_csv<R: Read>(mut r: R, grid: Grid) -> Result<VectorField> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines();
    let x = parse_block(&grid, &mut lines)?;
    match lines.next() {
        Some(l) if l.trim().is_empty() => {}
        _ => return Err(EvacError::Input("expected blank line between components".into())),
    }
    let y = parse_block(&grid, &mut lines)?;
    VectorField::from_components(grid, x, y)
}
