//! Small sample meshes in the `mesh2d v1` text format.
//!
//! Used by the test suites and handy as templates for writing problem
//! meshes. All of them use the unit square with vertices
//! `0=(0,0), 1=(1,0), 2=(1,1), 3=(0,1)` unless noted otherwise; the G0
//! arc is the left edge traversed downward (positive boundary
//! orientation), so `gamma0_origin = 3`.

use crate::mesh::{parse_mesh, refine_uniform, Mesh};

/// Unit square: left G0, right G1, bottom and top G2 (Navier slip).
pub fn square_two_tri_navier() -> String {
    "mesh2d v1\n\
     vertices 4\n0 0\n1 0\n1 1\n0 1\n\
     triangles 2\n0 1 2\n0 2 3\n\
     bedges 4\n3 0 G0 G0\n0 1 G2 G3\n1 2 G1 G3\n2 3 G2 G3\n\
     gamma0_origin 3\n"
        .to_string()
}

/// Unit square: left G0, the three remaining sides G1 (no slip part).
pub fn square_two_tri_dirichlet() -> String {
    "mesh2d v1\n\
     vertices 4\n0 0\n1 0\n1 1\n0 1\n\
     triangles 2\n0 1 2\n0 2 3\n\
     bedges 4\n3 0 G0 G0\n0 1 G1 G3\n1 2 G1 G3\n2 3 G1 G3\n\
     gamma0_origin 3\n"
        .to_string()
}

/// Skewed quadrilateral (no axis-aligned edges): left G0, rest G1.
pub fn trapezoid_two_tri() -> String {
    "mesh2d v1\n\
     vertices 4\n0 0\n1.2 0.1\n0.9 1.1\n-0.15 0.85\n\
     triangles 2\n0 1 2\n0 2 3\n\
     bedges 4\n3 0 G0 G0\n0 1 G1 G3\n1 2 G1 G3\n2 3 G1 G3\n\
     gamma0_origin 3\n"
        .to_string()
}

/// Parsed and uniformly refined Navier-slip square.
pub fn square_navier(levels: usize) -> Mesh {
    let mut m = parse_mesh(&square_two_tri_navier()).expect("builtin mesh");
    for _ in 0..levels {
        m = refine_uniform(&m);
    }
    m
}

/// Parsed and uniformly refined all-Dirichlet square.
pub fn square_dirichlet(levels: usize) -> Mesh {
    let mut m = parse_mesh(&square_two_tri_dirichlet()).expect("builtin mesh");
    for _ in 0..levels {
        m = refine_uniform(&m);
    }
    m
}

/// Parsed and uniformly refined trapezoid.
pub fn trapezoid(levels: usize) -> Mesh {
    let mut m = parse_mesh(&trapezoid_two_tri()).expect("builtin mesh");
    for _ in 0..levels {
        m = refine_uniform(&m);
    }
    m
}
