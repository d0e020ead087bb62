//! CSV and legacy-VTK writers.
//!
//! CSV: comma separated, `.` decimal, scientific notation with 17
//! significant digits; one header row naming the columns. VTK: legacy
//! ASCII unstructured grids with point data at the mesh vertices.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::mesh::Mesh;

/// One CSV cell: integer or float column.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Int(i64),
    Num(f64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Int(v) => format!("{v}"),
                Cell::Num(v) => format!("{v:.16e}"),
            })
            .collect();
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}

fn vtk_header(f: &mut impl Write, title: &str, mesh: &Mesh) -> Result<()> {
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "{title}")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(f, "POINTS {} double", mesh.n_vertices())?;
    for v in &mesh.vertices {
        writeln!(f, "{:.16e} {:.16e} 0.0", v[0], v[1])?;
    }
    writeln!(f, "CELLS {} {}", mesh.n_triangles(), 4 * mesh.n_triangles())?;
    for t in &mesh.triangles {
        writeln!(f, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(f, "CELL_TYPES {}", mesh.n_triangles())?;
    for _ in 0..mesh.n_triangles() {
        writeln!(f, "5")?;
    }
    writeln!(f, "POINT_DATA {}", mesh.n_vertices())?;
    Ok(())
}

/// Scalar field given by its values at the mesh vertices.
pub fn write_vtk_scalar(path: impl AsRef<Path>, mesh: &Mesh, name: &str, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), mesh.n_vertices());
    let mut f = std::fs::File::create(path)?;
    vtk_header(&mut f, name, mesh)?;
    writeln!(f, "SCALARS {name} double 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(f, "{v:.16e}")?;
    }
    Ok(())
}

/// Vector field given by its values at the mesh vertices.
pub fn write_vtk_vector(path: impl AsRef<Path>, mesh: &Mesh, name: &str, values: &[[f64; 2]]) -> Result<()> {
    assert_eq!(values.len(), mesh.n_vertices());
    let mut f = std::fs::File::create(path)?;
    vtk_header(&mut f, name, mesh)?;
    writeln!(f, "VECTORS {name} double")?;
    for v in values {
        writeln!(f, "{:.16e} {:.16e} 0.0", v[0], v[1])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::parse_mesh;
    use crate::samples;

    #[test]
    fn csv_format_and_determinism() {
        let dir = std::env::temp_dir().join("mpoc_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("t.csv");
        let rows = vec![vec![Cell::Int(0), Cell::Num(1.0 / 3.0)], vec![Cell::Int(1), Cell::Num(2e-10)]];
        write_csv(&p, &["iter", "value"], &rows).unwrap();
        let a = std::fs::read_to_string(&p).unwrap();
        write_csv(&p, &["iter", "value"], &rows).unwrap();
        let b = std::fs::read_to_string(&p).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("iter,value\n0,3.3333333333333331e-1"));
    }

    #[test]
    fn vtk_structure() {
        let mesh = parse_mesh(&samples::square_two_tri_navier()).unwrap();
        let dir = std::env::temp_dir().join("mpoc_vtk_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("u.vtk");
        write_vtk_vector(&p, &mesh, "u", &vec![[1.0, 2.0]; 4]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains("POINTS 4 double"));
        assert!(text.contains("CELLS 2 8"));
        assert!(text.contains("VECTORS u double"));
        let ps = dir.join("s.vtk");
        write_vtk_scalar(&ps, &mesh, "rho", &vec![1.0; 4]).unwrap();
        let text = std::fs::read_to_string(&ps).unwrap();
        assert!(text.contains("SCALARS rho double 1"));
    }
}
