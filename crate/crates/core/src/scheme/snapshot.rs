//! Per-cell snapshot files: CSV and legacy VTK.

use std::io::{self, Write};

use super::State;
use crate::mesh::{Dimension, Mesh};

/// `cell,x,u,v` in 1D, `cell,x,y,u,v` in 2D, one row per cell center.
pub fn write_snapshot_csv<W: Write>(mesh: &Mesh, state: &State, mut out: W) -> io::Result<()> {
    let two_d = mesh.dimension() == Dimension::Two;
    writeln!(out, "{}", if two_d { "cell,x,y,u,v" } else { "cell,x,u,v" })?;
    let (u, v) = (state.u.values(), state.v.values());
    for (k, cell) in mesh.cells().iter().enumerate() {
        if two_d {
            writeln!(out, "{k},{},{},{},{}", cell.center[0], cell.center[1], u[k], v[k])?;
        } else {
            writeln!(out, "{k},{},{},{}", cell.center[0], u[k], v[k])?;
        }
    }
    Ok(())
}

/// ASCII legacy VTK unstructured grid with `u` and `v` as cell data.
pub fn write_vtk<W: Write>(mesh: &Mesh, state: &State, mut out: W) -> io::Result<()> {
    let (points, cells) = mesh.vertex_connectivity();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "step {} t {}", state.step, state.time)?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(out, "{} {} 0", p[0], p[1])?;
    }
    let size: usize = cells.iter().map(|c| c.len() + 1).sum();
    writeln!(out, "CELLS {} {size}", cells.len())?;
    for c in &cells {
        write!(out, "{}", c.len())?;
        for i in c {
            write!(out, " {i}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "CELL_TYPES {}", cells.len())?;
    for c in &cells {
        // VTK_LINE = 3, VTK_TRIANGLE = 5.
        writeln!(out, "{}", if c.len() == 2 { 3 } else { 5 })?;
    }
    writeln!(out, "CELL_DATA {}", cells.len())?;
    for (name, values) in [("u", state.u.values()), ("v", state.v.values())] {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for x in values {
            writeln!(out, "{x}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DiscreteField;

    #[test]
    fn csv_has_one_row_per_cell() {
        let mesh = Mesh::uniform_1d(0.0, 1.0, 3).unwrap();
        let state = State {
            u: DiscreteField::constant(&mesh, 1.0),
            v: DiscreteField::constant(&mesh, 2.0),
            step: 0,
            time: 0.0,
        };
        let mut out = Vec::new();
        write_snapshot_csv(&mesh, &state, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().nth(2).unwrap(), "1,0.5,1,2");

        let mut vtk = Vec::new();
        write_vtk(&mesh, &state, &mut vtk).unwrap();
        let vtk = String::from_utf8(vtk).unwrap();
        assert!(vtk.contains("POINTS 4 double"));
        assert!(vtk.contains("CELLS 3 9"));
    }
}
