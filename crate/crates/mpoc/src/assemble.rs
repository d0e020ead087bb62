//! Assembly of every bilinear form in the weak formulation and of the
//! linearization blocks used by the adjoint system.
//!
//! All operators are assembled over the full DOF numbering (reduction
//! to free DOFs happens at solve time), with slip-node blocks rotated
//! into their (n, tau) frames during scatter. Transport forms are
//! skew-symmetrized so the discrete energy identity holds exactly:
//! `c(a; v, v) = 0` for every coefficient vector.

use crate::linalg::{SparseMatrix, TripletList};
use crate::mesh::VTag;
use crate::quadrature::{edge_gauss3, p1_shape, p2_edge_shape, p2_shape, TRI_QP};
use crate::spaces::{DofSet, SpaceId, SpaceSet};

/// Sparse operator tagged with its row/column spaces.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub matrix: SparseMatrix,
    pub row_space: SpaceId,
    pub col_space: SpaceId,
}

/// Scalar samples at every volume quadrature point (triangle-major order).
#[derive(Debug, Clone)]
pub struct QuadField1(pub Vec<f64>);

/// Vector samples at every volume quadrature point.
#[derive(Debug, Clone)]
pub struct QuadField2(pub Vec<[f64; 2]>);

impl QuadField1 {
    pub fn constant(sp: &SpaceSet, v: f64) -> Self {
        Self(vec![v; sp.n_quad()])
    }

    pub fn from_fn(sp: &SpaceSet, f: impl Fn(f64, f64) -> f64) -> Self {
        Self(quad_points(sp).iter().map(|p| f(p[0], p[1])).collect())
    }
}

impl QuadField2 {
    pub fn constant(sp: &SpaceSet, v: [f64; 2]) -> Self {
        Self(vec![v; sp.n_quad()])
    }

    pub fn from_fn(sp: &SpaceSet, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        Self(quad_points(sp).iter().map(|p| f(p[0], p[1])).collect())
    }
}

/// Physical coordinates of all volume quadrature points.
pub fn quad_points(sp: &SpaceSet) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(sp.n_quad());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        out.extend_from_slice(&geo.qp);
    }
    out
}

/// Quadrature weights (reference weight times Jacobian determinant).
pub fn quad_weights(sp: &SpaceSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(sp.n_quad());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        for (_, _, w) in TRI_QP {
            out.push(w * geo.det);
        }
    }
    out
}

/// Values and gradients of a scalar P2 field at all quadrature points.
pub fn eval_scalar(sp: &SpaceSet, coeffs: &[f64]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let nq = sp.n_quad();
    let mut vals = vec![0.0; nq];
    let mut grads = vec![[0.0; 2]; nq];
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        for q in 0..6 {
            let k = 6 * t + q;
            for i in 0..6 {
                let c = coeffs[nodes[i]];
                vals[k] += c * shapes[q][i];
                grads[k][0] += c * geo.grad[q][i][0];
                grads[k][1] += c * geo.grad[q][i][1];
            }
        }
    }
    (vals, grads)
}

/// Values and gradients of a velocity field at all quadrature points.
/// `grads[k][c][d]` is du_c/dx_d.
pub fn eval_velocity(sp: &SpaceSet, coeffs: &[f64]) -> (Vec<[f64; 2]>, Vec<[[f64; 2]; 2]>) {
    let nq = sp.n_quad();
    let mut vals = vec![[0.0; 2]; nq];
    let mut grads = vec![[[0.0; 2]; 2]; nq];
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let uv: Vec<[f64; 2]> = nodes.iter().map(|&n| sp.node_velocity(coeffs, n)).collect();
        for q in 0..6 {
            let k = 6 * t + q;
            for i in 0..6 {
                let s = shapes[q][i];
                let g = geo.grad[q][i];
                for c in 0..2 {
                    vals[k][c] += uv[i][c] * s;
                    grads[k][c][0] += uv[i][c] * g[0];
                    grads[k][c][1] += uv[i][c] * g[1];
                }
            }
        }
    }
    (vals, grads)
}

/// Scalar rot of a velocity field at quadrature points: du2/dx - du1/dy.
pub fn rot_at_qp(grads: &[[[f64; 2]; 2]]) -> Vec<f64> {
    grads.iter().map(|g| g[1][0] - g[0][1]).collect()
}

pub fn integrate(sp: &SpaceSet, vals: &[f64]) -> f64 {
    quad_weights(sp).iter().zip(vals).map(|(w, v)| w * v).sum()
}

// scatter helpers ------------------------------------------------------

/// Rotates a 12x12 Cartesian element velocity matrix into nodal frames
/// and pushes it into the triplet list.
fn scatter_vv(sp: &SpaceSet, nodes: &[usize; 6], k: &[[f64; 12]; 12], out: &mut TripletList) {
    let mut kk = *k;
    // columns: replace pair (j, :) by frame rotation; K e_frame = K_cart R
    for (j, &nj) in nodes.iter().enumerate() {
        if let Some([n, t]) = sp.frame_of(nj) {
            for row in 0..12 {
                let kx = kk[row][2 * j];
                let ky = kk[row][2 * j + 1];
                kk[row][2 * j] = kx * n[0] + ky * n[1];
                kk[row][2 * j + 1] = kx * t[0] + ky * t[1];
            }
        }
    }
    for (i, &ni) in nodes.iter().enumerate() {
        if let Some([n, t]) = sp.frame_of(ni) {
            for col in 0..12 {
                let kx = kk[2 * i][col];
                let ky = kk[2 * i + 1][col];
                kk[2 * i][col] = kx * n[0] + ky * n[1];
                kk[2 * i + 1][col] = kx * t[0] + ky * t[1];
            }
        }
    }
    for i in 0..6 {
        for c in 0..2 {
            for j in 0..6 {
                for d in 0..2 {
                    let v = kk[2 * i + c][2 * j + d];
                    if v != 0.0 {
                        out.push(2 * nodes[i] + c, 2 * nodes[j] + d, v);
                    }
                }
            }
        }
    }
}

/// Scatters a scalar-row / velocity-column element block with column frames.
fn scatter_sv(sp: &SpaceSet, snodes: &[usize; 6], vnodes: &[usize; 6], k: &[[f64; 12]; 6], out: &mut TripletList) {
    let mut kk = *k;
    for (j, &nj) in vnodes.iter().enumerate() {
        if let Some([n, t]) = sp.frame_of(nj) {
            for row in 0..6 {
                let kx = kk[row][2 * j];
                let ky = kk[row][2 * j + 1];
                kk[row][2 * j] = kx * n[0] + ky * n[1];
                kk[row][2 * j + 1] = kx * t[0] + ky * t[1];
            }
        }
    }
    for i in 0..6 {
        for j in 0..6 {
            for d in 0..2 {
                let v = kk[i][2 * j + d];
                if v != 0.0 {
                    out.push(snodes[i], 2 * vnodes[j] + d, v);
                }
            }
        }
    }
}

/// Scatters a velocity-row / scalar-column element block with row frames.
fn scatter_vs(sp: &SpaceSet, vnodes: &[usize; 6], snodes: &[usize; 6], k: &[[f64; 6]; 12], out: &mut TripletList) {
    let mut kk = *k;
    for (i, &ni) in vnodes.iter().enumerate() {
        if let Some([n, t]) = sp.frame_of(ni) {
            for col in 0..6 {
                let kx = kk[2 * i][col];
                let ky = kk[2 * i + 1][col];
                kk[2 * i][col] = kx * n[0] + ky * n[1];
                kk[2 * i + 1][col] = kx * t[0] + ky * t[1];
            }
        }
    }
    for i in 0..6 {
        for c in 0..2 {
            for j in 0..6 {
                let v = kk[2 * i + c][j];
                if v != 0.0 {
                    out.push(2 * vnodes[i] + c, snodes[j], v);
                }
            }
        }
    }
}

fn scatter_vec_v(sp: &SpaceSet, nodes: &[usize; 6], f: &[f64; 12], out: &mut [f64]) {
    let mut ff = *f;
    for (i, &ni) in nodes.iter().enumerate() {
        if let Some([n, t]) = sp.frame_of(ni) {
            let fx = ff[2 * i];
            let fy = ff[2 * i + 1];
            ff[2 * i] = fx * n[0] + fy * n[1];
            ff[2 * i + 1] = fx * t[0] + fy * t[1];
        }
    }
    for i in 0..6 {
        out[2 * nodes[i]] += ff[2 * i];
        out[2 * nodes[i] + 1] += ff[2 * i + 1];
    }
}

// operators ------------------------------------------------------------

/// `<A u, v> = 2 (D(u), D(v)) + 2 alpha \int_{G2} u . v`.
pub fn assemble_a(sp: &SpaceSet, alpha: f64) -> AssembledOperator {
    let mut trips = TripletList::new(sp.n_velocity_dofs(), sp.n_velocity_dofs());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut k = [[0.0; 12]; 12];
        for q in 0..6 {
            let w = TRI_QP[q].2 * geo.det;
            for i in 0..6 {
                let gi = geo.grad[q][i];
                for j in 0..6 {
                    let gj = geo.grad[q][j];
                    let dot = gi[0] * gj[0] + gi[1] * gj[1];
                    for c in 0..2 {
                        for d in 0..2 {
                            // 2 D(u):D(v) = delta_cd grad.grad + dPhi_i/dx_d dPhi_j/dx_c
                            let v = if c == d { dot + gi[c] * gj[c] } else { gi[d] * gj[c] };
                            k[2 * i + c][2 * j + d] += w * v;
                        }
                    }
                }
            }
        }
        scatter_vv(sp, &nodes, &k, &mut trips);
    }
    if alpha > 0.0 {
        add_gamma2_boundary_mass(sp, 2.0 * alpha, &mut trips);
    }
    let mut m = trips.finalize();
    m.set_symmetric(true);
    AssembledOperator { matrix: m, row_space: SpaceId::Velocity, col_space: SpaceId::Velocity }
}

fn add_gamma2_boundary_mass(sp: &SpaceSet, scale: f64, trips: &mut TripletList) {
    for e in &sp.mesh.boundary_edges {
        if e.vtag != VTag::G2 {
            continue;
        }
        let len = e.length(&sp.mesh.vertices);
        let nodes = [e.v[0], e.v[1], sp.edge_node(e.v[0], e.v[1])];
        let mut k = [[0.0; 3]; 3];
        for (tq, wq) in edge_gauss3() {
            let sh = p2_edge_shape(tq);
            for i in 0..3 {
                for j in 0..3 {
                    k[i][j] += wq * len * sh[i] * sh[j];
                }
            }
        }
        // embed the 3-node edge block into a 6-node element layout
        let mut kk = [[0.0; 12]; 12];
        for i in 0..3 {
            for j in 0..3 {
                for c in 0..2 {
                    kk[2 * i + c][2 * j + c] = scale * k[i][j];
                }
            }
        }
        let enodes = [nodes[0], nodes[1], nodes[2], nodes[0], nodes[0], nodes[0]];
        // only the first three local slots carry values
        let mut small = TripletList::new(sp.n_velocity_dofs(), sp.n_velocity_dofs());
        scatter_vv(sp, &enodes, &kk, &mut small);
        let m = small.finalize();
        for i in 0..m.nrows() {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push(i, j, v);
            }
        }
    }
}

/// `\int_{G2} u . v` for two velocity coefficient vectors.
pub fn gamma2_pairing(sp: &SpaceSet, u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for e in &sp.mesh.boundary_edges {
        if e.vtag != VTag::G2 {
            continue;
        }
        let len = e.length(&sp.mesh.vertices);
        let nodes = [e.v[0], e.v[1], sp.edge_node(e.v[0], e.v[1])];
        let uv: Vec<[f64; 2]> = nodes.iter().map(|&n| sp.node_velocity(u, n)).collect();
        let vv: Vec<[f64; 2]> = nodes.iter().map(|&n| sp.node_velocity(v, n)).collect();
        for (tq, wq) in edge_gauss3() {
            let sh = p2_edge_shape(tq);
            let mut uq = [0.0; 2];
            let mut vq = [0.0; 2];
            for i in 0..3 {
                for c in 0..2 {
                    uq[c] += sh[i] * uv[i][c];
                    vq[c] += sh[i] * vv[i][c];
                }
            }
            acc += wq * len * (uq[0] * vq[0] + uq[1] * vq[1]);
        }
    }
    acc
}

/// Scalar stiffness `(grad w, grad z)` (the operator A-tilde).
pub fn assemble_atilde(sp: &SpaceSet) -> AssembledOperator {
    let mut trips = TripletList::new(sp.n_nodes, sp.n_nodes);
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        for q in 0..6 {
            let w = TRI_QP[q].2 * geo.det;
            for i in 0..6 {
                for j in 0..6 {
                    let v = geo.grad[q][i][0] * geo.grad[q][j][0] + geo.grad[q][i][1] * geo.grad[q][j][1];
                    trips.push(nodes[i], nodes[j], w * v);
                }
            }
        }
    }
    let m = trips.finalize_symmetric();
    AssembledOperator { matrix: m, row_space: SpaceId::Scalar, col_space: SpaceId::Scalar }
}

/// Scalar mass `(w, z)`, optionally weighted by a quadrature field.
pub fn assemble_scalar_mass(sp: &SpaceSet, weight: Option<&QuadField1>) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_nodes, sp.n_nodes);
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        for q in 0..6 {
            let mut w = TRI_QP[q].2 * geo.det;
            if let Some(f) = weight {
                w *= f.0[6 * t + q];
            }
            for i in 0..6 {
                for j in 0..6 {
                    trips.push(nodes[i], nodes[j], w * shapes[q][i] * shapes[q][j]);
                }
            }
        }
    }
    let m = trips.finalize_symmetric();
    AssembledOperator { matrix: m, row_space: SpaceId::Scalar, col_space: SpaceId::Scalar }
}

/// Scalar full H1 Gram `(w, z) + (grad w, grad z)`.
pub fn assemble_scalar_h1(sp: &SpaceSet) -> AssembledOperator {
    let stiff = assemble_atilde(sp);
    let mass = assemble_scalar_mass(sp, None);
    let mut trips = TripletList::new(sp.n_nodes, sp.n_nodes);
    for part in [&stiff.matrix, &mass.matrix] {
        for i in 0..part.nrows() {
            let (cols, vals) = part.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push(i, j, v);
            }
        }
    }
    let m = trips.finalize_symmetric();
    AssembledOperator { matrix: m, row_space: SpaceId::Scalar, col_space: SpaceId::Scalar }
}

/// Vector mass `(u, v)` with slip frames.
pub fn assemble_vector_mass(sp: &SpaceSet) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_velocity_dofs(), sp.n_velocity_dofs());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut k = [[0.0; 12]; 12];
        for q in 0..6 {
            let w = TRI_QP[q].2 * geo.det;
            for i in 0..6 {
                for j in 0..6 {
                    let v = w * shapes[q][i] * shapes[q][j];
                    k[2 * i][2 * j] += v;
                    k[2 * i + 1][2 * j + 1] += v;
                }
            }
        }
        scatter_vv(sp, &nodes, &k, &mut trips);
    }
    let m = trips.finalize_symmetric();
    AssembledOperator { matrix: m, row_space: SpaceId::Velocity, col_space: SpaceId::Velocity }
}

/// Vector full H1 Gram `(u, v) + (grad u, grad v)` with slip frames.
pub fn assemble_vector_h1(sp: &SpaceSet) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_velocity_dofs(), sp.n_velocity_dofs());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut k = [[0.0; 12]; 12];
        for q in 0..6 {
            let w = TRI_QP[q].2 * geo.det;
            for i in 0..6 {
                for j in 0..6 {
                    let v = w
                        * (shapes[q][i] * shapes[q][j]
                            + geo.grad[q][i][0] * geo.grad[q][j][0]
                            + geo.grad[q][i][1] * geo.grad[q][j][1]);
                    k[2 * i][2 * j] += v;
                    k[2 * i + 1][2 * j + 1] += v;
                }
            }
        }
        scatter_vv(sp, &nodes, &k, &mut trips);
    }
    let m = trips.finalize_symmetric();
    AssembledOperator { matrix: m, row_space: SpaceId::Velocity, col_space: SpaceId::Velocity }
}

/// Divergence block `(div u, q)`: pressure rows, velocity columns.
pub fn assemble_div(sp: &SpaceSet) -> AssembledOperator {
    let mut trips = TripletList::new(sp.n_pressure_dofs(), sp.n_velocity_dofs());
    let p1: Vec<[f64; 3]> = TRI_QP.iter().map(|&(x, y, _)| p1_shape(x, y)).collect();
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let tri = sp.mesh.triangles[t];
        // local block: 3 pressure rows x 12 velocity cols, frames on cols
        let mut k = [[0.0; 12]; 6];
        for q in 0..6 {
            let w = TRI_QP[q].2 * geo.det;
            for pi in 0..3 {
                for j in 0..6 {
                    for c in 0..2 {
                        k[pi][2 * j + c] += w * p1[q][pi] * geo.grad[q][j][c];
                    }
                }
            }
        }
        let snodes = [tri[0], tri[1], tri[2], tri[0], tri[0], tri[0]];
        let mut small = TripletList::new(sp.n_nodes.max(sp.n_pressure_dofs()), sp.n_velocity_dofs());
        scatter_sv(sp, &snodes, &nodes, &k, &mut small);
        let m = small.finalize();
        for i in 0..sp.n_pressure_dofs() {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push(i, j, v);
            }
        }
    }
    AssembledOperator { matrix: trips.finalize(), row_space: SpaceId::Pressure, col_space: SpaceId::Velocity }
}

/// Coupling `(rot w, v)` with the vector rot of a scalar field:
/// velocity rows, scalar columns.
pub fn assemble_rot_vw(sp: &SpaceSet) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_velocity_dofs(), sp.n_nodes);
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut k = [[0.0; 6]; 12];
        for q in 0..6 {
            let w = TRI_QP[q].2 * geo.det;
            for i in 0..6 {
                for j in 0..6 {
                    // rot w = (dw/dy, -dw/dx)
                    k[2 * i][j] += w * shapes[q][i] * geo.grad[q][j][1];
                    k[2 * i + 1][j] -= w * shapes[q][i] * geo.grad[q][j][0];
                }
            }
        }
        scatter_vs(sp, &nodes, &nodes, &k, &mut trips);
    }
    AssembledOperator { matrix: trips.finalize(), row_space: SpaceId::Velocity, col_space: SpaceId::Scalar }
}

/// Coupling `(rot u, z)` with the scalar rot of a velocity field:
/// scalar rows, velocity columns.
pub fn assemble_rot_sv(sp: &SpaceSet) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_nodes, sp.n_velocity_dofs());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut k = [[0.0; 12]; 6];
        for q in 0..6 {
            let w = TRI_QP[q].2 * geo.det;
            for i in 0..6 {
                for j in 0..6 {
                    // rot u = du2/dx - du1/dy
                    k[i][2 * j] -= w * shapes[q][i] * geo.grad[q][j][1];
                    k[i][2 * j + 1] += w * shapes[q][i] * geo.grad[q][j][0];
                }
            }
        }
        scatter_sv(sp, &nodes, &nodes, &k, &mut trips);
    }
    AssembledOperator { matrix: trips.finalize(), row_space: SpaceId::Scalar, col_space: SpaceId::Velocity }
}

/// Skew-symmetrized vector transport at frozen transport field `a`:
/// `c(a; v, e) = 0.5 [(rho a. grad v, e) - (rho a. grad e, v)]`,
/// rows = test e, columns = trial v.
pub fn assemble_transport_vec(sp: &SpaceSet, rho: &QuadField1, a: &QuadField2) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_velocity_dofs(), sp.n_velocity_dofs());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut k = [[0.0; 12]; 12];
        for q in 0..6 {
            let kq = 6 * t + q;
            let w = TRI_QP[q].2 * geo.det * rho.0[kq];
            let aq = a.0[kq];
            let adg: Vec<f64> = (0..6).map(|i| aq[0] * geo.grad[q][i][0] + aq[1] * geo.grad[q][i][1]).collect();
            for i in 0..6 {
                for j in 0..6 {
                    let v = 0.5 * w * (adg[j] * shapes[q][i] - adg[i] * shapes[q][j]);
                    k[2 * i][2 * j] += v;
                    k[2 * i + 1][2 * j + 1] += v;
                }
            }
        }
        scatter_vv(sp, &nodes, &k, &mut trips);
    }
    AssembledOperator { matrix: trips.finalize(), row_space: SpaceId::Velocity, col_space: SpaceId::Velocity }
}

/// Skew-symmetrized scalar transport; rows = test z, columns = trial w.
pub fn assemble_transport_scal(sp: &SpaceSet, rho: &QuadField1, a: &QuadField2) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_nodes, sp.n_nodes);
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        for q in 0..6 {
            let kq = 6 * t + q;
            let w = TRI_QP[q].2 * geo.det * rho.0[kq];
            let aq = a.0[kq];
            let adg: Vec<f64> = (0..6).map(|i| aq[0] * geo.grad[q][i][0] + aq[1] * geo.grad[q][i][1]).collect();
            for i in 0..6 {
                for j in 0..6 {
                    trips.push(nodes[i], nodes[j], 0.5 * w * (adg[j] * shapes[q][i] - adg[i] * shapes[q][j]));
                }
            }
        }
    }
    AssembledOperator { matrix: trips.finalize(), row_space: SpaceId::Scalar, col_space: SpaceId::Scalar }
}

/// Derivative of the skew vector transport with respect to the transport
/// field, at the state (u, rho): rows = test i, columns = direction j,
/// `J[i,j] = d/dU_j c(U; U, Phi_i)` with the density frozen.
pub fn assemble_conv_jacobian_vec(
    sp: &SpaceSet,
    rho: &QuadField1,
    u: &QuadField2,
    grad_u: &[[[f64; 2]; 2]],
) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_velocity_dofs(), sp.n_velocity_dofs());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut k = [[0.0; 12]; 12];
        for q in 0..6 {
            let kq = 6 * t + q;
            let w = TRI_QP[q].2 * geo.det * rho.0[kq];
            let uq = u.0[kq];
            let gu = grad_u[kq];
            let udg: Vec<f64> = (0..6).map(|i| uq[0] * geo.grad[q][i][0] + uq[1] * geo.grad[q][i][1]).collect();
            for i in 0..6 {
                for c in 0..2 {
                    for j in 0..6 {
                        for d in 0..2 {
                            // transport-slot part: 0.5 [ (Phi_j e_d . grad U) . Phi_i e_c - (Phi_j e_d . grad Phi_i e_c) . U ]
                            let mut v = 0.5 * (shapes[q][j] * gu[c][d] * shapes[q][i] - shapes[q][j] * geo.grad[q][i][d] * uq[c]);
                            // advected-slot part: 0.5 [ (U . grad Phi_j) Phi_i - (U . grad Phi_i) Phi_j ] delta_cd
                            if c == d {
                                v += 0.5 * (udg[j] * shapes[q][i] - udg[i] * shapes[q][j]);
                            }
                            k[2 * i + c][2 * j + d] += w * v;
                        }
                    }
                }
            }
        }
        scatter_vv(sp, &nodes, &k, &mut trips);
    }
    AssembledOperator { matrix: trips.finalize(), row_space: SpaceId::Velocity, col_space: SpaceId::Velocity }
}

/// Derivative of the skew scalar transport with respect to the transport
/// field at the state (u, w): scalar test rows, velocity direction columns,
/// `J[i,j] = d/dU_j c~(U; W, chi_i)` with the density frozen.
pub fn assemble_conv_jacobian_scal(
    sp: &SpaceSet,
    rho: &QuadField1,
    w_vals: &QuadField1,
    grad_w: &[[f64; 2]],
) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_nodes, sp.n_velocity_dofs());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut k = [[0.0; 12]; 6];
        for q in 0..6 {
            let kq = 6 * t + q;
            let w = TRI_QP[q].2 * geo.det * rho.0[kq];
            let gw = grad_w[kq];
            let wv = w_vals.0[kq];
            for i in 0..6 {
                for j in 0..6 {
                    for d in 0..2 {
                        let v = 0.5 * (shapes[q][j] * gw[d] * shapes[q][i] - shapes[q][j] * geo.grad[q][i][d] * wv);
                        k[i][2 * j + d] += w * v;
                    }
                }
            }
        }
        scatter_sv(sp, &nodes, &nodes, &k, &mut trips);
    }
    AssembledOperator { matrix: trips.finalize(), row_space: SpaceId::Scalar, col_space: SpaceId::Velocity }
}

/// Stream-coupling moments for the momentum equation: scalar (stream test)
/// rows, velocity columns. Row s, column j holds
/// `int eta' theta_s { 0.5 [(U.grad U).Phi_j - (U.grad Phi_j).U] - f.Phi_j }`,
/// the density derivative of the momentum residual paired with a stream
/// perturbation.
pub fn assemble_stream_coupling_vel(
    sp: &SpaceSet,
    drho: &QuadField1,
    u: &QuadField2,
    grad_u: &[[[f64; 2]; 2]],
    f: &QuadField2,
) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_nodes, sp.n_velocity_dofs());
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut k = [[0.0; 12]; 6];
        for q in 0..6 {
            let kq = 6 * t + q;
            let w = TRI_QP[q].2 * geo.det * drho.0[kq];
            if w == 0.0 {
                continue;
            }
            let uq = u.0[kq];
            let gu = grad_u[kq];
            let fq = f.0[kq];
            // (U . grad U)_c
            let conv = [
                uq[0] * gu[0][0] + uq[1] * gu[0][1],
                uq[0] * gu[1][0] + uq[1] * gu[1][1],
            ];
            let udg: Vec<f64> = (0..6).map(|j| uq[0] * geo.grad[q][j][0] + uq[1] * geo.grad[q][j][1]).collect();
            for s in 0..6 {
                for j in 0..6 {
                    for d in 0..2 {
                        let v = 0.5 * (conv[d] * shapes[q][j] - udg[j] * uq[d]) - fq[d] * shapes[q][j];
                        k[s][2 * j + d] += w * shapes[q][s] * v;
                    }
                }
            }
        }
        scatter_sv(sp, &nodes, &nodes, &k, &mut trips);
    }
    AssembledOperator { matrix: trips.finalize(), row_space: SpaceId::Scalar, col_space: SpaceId::Velocity }
}

/// Stream-coupling moments for the rotation equation: scalar (stream test)
/// rows, scalar (rotation) columns. Row s, column j holds
/// `int eta' theta_s { 0.5 [(U.grad W) chi_j - (U.grad chi_j) W] - g chi_j }`.
pub fn assemble_stream_coupling_rot(
    sp: &SpaceSet,
    drho: &QuadField1,
    u: &QuadField2,
    w_vals: &QuadField1,
    grad_w: &[[f64; 2]],
    g: &QuadField1,
) -> AssembledOperator {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut trips = TripletList::new(sp.n_nodes, sp.n_nodes);
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        for q in 0..6 {
            let kq = 6 * t + q;
            let w = TRI_QP[q].2 * geo.det * drho.0[kq];
            if w == 0.0 {
                continue;
            }
            let uq = u.0[kq];
            let gw = grad_w[kq];
            let wv = w_vals.0[kq];
            let conv = uq[0] * gw[0] + uq[1] * gw[1];
            let gq = g.0[kq];
            for s in 0..6 {
                for j in 0..6 {
                    let udgj = uq[0] * geo.grad[q][j][0] + uq[1] * geo.grad[q][j][1];
                    let v = 0.5 * (conv * shapes[q][j] - udgj * wv) - gq * shapes[q][j];
                    trips.push(nodes[s], nodes[j], w * shapes[q][s] * v);
                }
            }
        }
    }
    AssembledOperator { matrix: trips.finalize(), row_space: SpaceId::Scalar, col_space: SpaceId::Scalar }
}

/// Weighted velocity load `(weight f, v)` over the full velocity DOFs.
pub fn assemble_load_velocity(sp: &SpaceSet, weight: &QuadField1, f: &QuadField2) -> Vec<f64> {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut out = vec![0.0; sp.n_velocity_dofs()];
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut fe = [0.0; 12];
        for q in 0..6 {
            let kq = 6 * t + q;
            let w = TRI_QP[q].2 * geo.det * weight.0[kq];
            let fq = f.0[kq];
            for i in 0..6 {
                fe[2 * i] += w * shapes[q][i] * fq[0];
                fe[2 * i + 1] += w * shapes[q][i] * fq[1];
            }
        }
        scatter_vec_v(sp, &nodes, &fe, &mut out);
    }
    out
}

/// Load pairing a scalar quadrature weight with the rot of the velocity
/// basis: entry `(weight, rot Phi_i)`.
pub fn assemble_rot_load(sp: &SpaceSet, weight: &QuadField1) -> Vec<f64> {
    let mut out = vec![0.0; sp.n_velocity_dofs()];
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        let mut fe = [0.0; 12];
        for q in 0..6 {
            let w = TRI_QP[q].2 * geo.det * weight.0[6 * t + q];
            for i in 0..6 {
                // rot(Phi_i e_x) = -dPhi/dy, rot(Phi_i e_y) = dPhi/dx
                fe[2 * i] -= w * geo.grad[q][i][1];
                fe[2 * i + 1] += w * geo.grad[q][i][0];
            }
        }
        scatter_vec_v(sp, &nodes, &fe, &mut out);
    }
    out
}

/// Weighted scalar load `(weight g, z)` over the full scalar DOFs.
pub fn assemble_load_scalar(sp: &SpaceSet, weight: &QuadField1, g: &QuadField1) -> Vec<f64> {
    let shapes: Vec<[f64; 6]> = TRI_QP.iter().map(|&(x, y, _)| p2_shape(x, y)).collect();
    let mut out = vec![0.0; sp.n_nodes];
    for t in 0..sp.mesh.n_triangles() {
        let geo = sp.element_geometry(t);
        let nodes = sp.tri_nodes[t];
        for q in 0..6 {
            let kq = 6 * t + q;
            let w = TRI_QP[q].2 * geo.det * weight.0[kq];
            for i in 0..6 {
                out[nodes[i]] += w * shapes[q][i] * g.0[kq];
            }
        }
    }
    out
}

/// Direct quadrature evaluation of the (optionally skewed) transport form
/// `(rho a . grad adv, test)` for vector fields given as coefficients.
pub fn transport_pairing_vec(
    sp: &SpaceSet,
    rho: &QuadField1,
    a: &QuadField2,
    adv: &[f64],
    test: &[f64],
    skew: bool,
) -> f64 {
    let wq = quad_weights(sp);
    let (adv_v, adv_g) = eval_velocity(sp, adv);
    let (test_v, test_g) = eval_velocity(sp, test);
    let mut acc = 0.0;
    for k in 0..sp.n_quad() {
        let aq = a.0[k];
        let mut fwd = 0.0;
        let mut bwd = 0.0;
        for c in 0..2 {
            fwd += (aq[0] * adv_g[k][c][0] + aq[1] * adv_g[k][c][1]) * test_v[k][c];
            bwd += (aq[0] * test_g[k][c][0] + aq[1] * test_g[k][c][1]) * adv_v[k][c];
        }
        acc += wq[k] * rho.0[k] * if skew { 0.5 * (fwd - bwd) } else { fwd };
    }
    acc
}

/// Scalar version of [`transport_pairing_vec`].
pub fn transport_pairing_scal(
    sp: &SpaceSet,
    rho: &QuadField1,
    a: &QuadField2,
    adv: &[f64],
    test: &[f64],
    skew: bool,
) -> f64 {
    let wq = quad_weights(sp);
    let (adv_v, adv_g) = eval_scalar(sp, adv);
    let (test_v, test_g) = eval_scalar(sp, test);
    let mut acc = 0.0;
    for k in 0..sp.n_quad() {
        let aq = a.0[k];
        let fwd = (aq[0] * adv_g[k][0] + aq[1] * adv_g[k][1]) * test_v[k];
        let bwd = (aq[0] * test_g[k][0] + aq[1] * test_g[k][1]) * adv_v[k];
        acc += wq[k] * rho.0[k] * if skew { 0.5 * (fwd - bwd) } else { fwd };
    }
    acc
}

// reduction helpers ----------------------------------------------------

/// Restricts a full matrix to (row_set x col_set).
pub fn reduce(m: &SparseMatrix, rows: &DofSet, cols: &DofSet) -> SparseMatrix {
    let mut trips = TripletList::new(rows.len(), cols.len());
    for (ri, &full_r) in rows.red_to_full.iter().enumerate() {
        let (cidx, vals) = m.row(full_r);
        for (&j, &v) in cidx.iter().zip(vals) {
            if let Some(cj) = cols.full_to_red[j] {
                trips.push(ri, cj, v);
            }
        }
    }
    trips.finalize()
}

/// Adds a scaled reduced block of `m` into a triplet list at offsets.
pub fn add_reduced_block(
    trips: &mut TripletList,
    m: &SparseMatrix,
    rows: &DofSet,
    cols: &DofSet,
    row_off: usize,
    col_off: usize,
    scale: f64,
) {
    for (ri, &full_r) in rows.red_to_full.iter().enumerate() {
        let (cidx, vals) = m.row(full_r);
        for (&j, &v) in cidx.iter().zip(vals) {
            if let Some(cj) = cols.full_to_red[j] {
                trips.push(row_off + ri, col_off + cj, scale * v);
            }
        }
    }
}

/// Transposed variant of [`add_reduced_block`]: inserts `scale * m[r,c]`
/// at position (col_off + c, row_off + r).
pub fn add_reduced_block_transposed(
    trips: &mut TripletList,
    m: &SparseMatrix,
    rows: &DofSet,
    cols: &DofSet,
    row_off: usize,
    col_off: usize,
    scale: f64,
) {
    for (ri, &full_r) in rows.red_to_full.iter().enumerate() {
        let (cidx, vals) = m.row(full_r);
        for (&j, &v) in cidx.iter().zip(vals) {
            if let Some(cj) = cols.full_to_red[j] {
                trips.push(col_off + cj, row_off + ri, scale * v);
            }
        }
    }
}

/// Relative residual of a constrained linear system over its free rows.
pub fn dirichlet_residual(m: &SparseMatrix, full_sol: &[f64], full_rhs: &[f64], free: &DofSet) -> f64 {
    let ax = m.matvec(full_sol);
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in &free.red_to_full {
        let r = ax[i] - full_rhs[i];
        num += r * r;
        den += full_rhs[i] * full_rhs[i];
    }
    num.sqrt() / (den.sqrt() + 1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use crate::spaces::SpaceSet;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn spaces(levels: usize) -> SpaceSet {
        SpaceSet::new(Arc::new(samples::square_dirichlet(levels))).unwrap()
    }

    fn vel_from_fn(sp: &SpaceSet, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let mut c = vec![0.0; sp.n_velocity_dofs()];
        for n in 0..sp.n_nodes {
            let p = sp.node_pos[n];
            sp.set_node_velocity(&mut c, n, f(p[0], p[1]));
        }
        c
    }

    fn scal_from_fn(sp: &SpaceSet, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..sp.n_nodes).map(|n| f(sp.node_pos[n][0], sp.node_pos[n][1])).collect()
    }

    fn quad_form(m: &crate::linalg::SparseMatrix, x: &[f64], y: &[f64]) -> f64 {
        m.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn a_vanishes_on_rigid_motions() {
        let sp = spaces(2);
        let a = assemble_a(&sp, 0.0);
        let c1 = vel_from_fn(&sp, |_, _| [1.0, -2.0]);
        let c2 = vel_from_fn(&sp, |x, y| [y, -x]);
        assert!(quad_form(&a.matrix, &c1, &c1).abs() < 1e-12);
        assert!(quad_form(&a.matrix, &c2, &c2).abs() < 1e-12);
    }

    #[test]
    fn a_linear_field_exact_value() {
        // u = (x, -y): <Au, u> = 2 int (1+1) = 4 |Omega|
        let sp = spaces(2);
        let a = assemble_a(&sp, 0.0);
        let c = vel_from_fn(&sp, |x, y| [x, -y]);
        assert!((quad_form(&a.matrix, &c, &c) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn a_symmetry() {
        let sp = SpaceSet::new(Arc::new(samples::square_navier(1))).unwrap();
        let a = assemble_a(&sp, 0.7);
        assert!(a.matrix.max_asymmetry() < 1e-12);
    }

    #[test]
    fn atilde_values() {
        let sp = spaces(2);
        let at = assemble_atilde(&sp);
        let c0 = scal_from_fn(&sp, |_, _| 3.0);
        assert!(quad_form(&at.matrix, &c0, &c0).abs() < 1e-12);
        let cx = scal_from_fn(&sp, |x, _| x);
        assert!((quad_form(&at.matrix, &cx, &cx) - 1.0).abs() < 1e-12);
        assert!(at.matrix.max_asymmetry() < 1e-12);
        // quadratic exactness: psi = x^2 on unit square -> (grad, grad) = 4/3
        let cq = scal_from_fn(&sp, |x, _| x * x);
        assert!((quad_form(&at.matrix, &cq, &cq) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn transport_skew_annihilates_diagonal() {
        let sp = spaces(2);
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..5 {
            let rho = QuadField1(quad_points(&sp).iter().map(|_| rng.gen_range(0.5..2.0)).collect());
            let a = QuadField2(quad_points(&sp).iter().map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect());
            let b = assemble_transport_vec(&sp, &rho, &a);
            let bt = assemble_transport_scal(&sp, &rho, &a);
            let v: Vec<f64> = (0..sp.n_velocity_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..sp.n_nodes).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let anorm = 2.0f64.sqrt();
            let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let znorm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(quad_form(&b.matrix, &v, &v).abs() <= 1e-13 * anorm * vnorm * vnorm);
            assert!(quad_form(&bt.matrix, &z, &z).abs() <= 1e-13 * anorm * znorm * znorm);
        }
    }

    #[test]
    fn transport_unskewed_polynomial_value() {
        // rho = 1, a = (1,0), v = e = (x,0): (a.grad v, e) = int x = 1/2
        let sp = spaces(2);
        let rho = QuadField1::constant(&sp, 1.0);
        let a = QuadField2::constant(&sp, [1.0, 0.0]);
        let v = vel_from_fn(&sp, |x, _| [x, 0.0]);
        let val = transport_pairing_vec(&sp, &rho, &a, &v, &v, false);
        assert!((val - 0.5).abs() < 1e-13);
        // scalar: w = z = x
        let w = scal_from_fn(&sp, |x, _| x);
        let val = transport_pairing_scal(&sp, &rho, &a, &w, &w, false);
        assert!((val - 0.5).abs() < 1e-13);
    }

    #[test]
    fn transport_zero_velocity_is_zero_matrix() {
        let sp = spaces(1);
        let rho = QuadField1::constant(&sp, 1.3);
        let a = QuadField2::constant(&sp, [0.0, 0.0]);
        let b = assemble_transport_vec(&sp, &rho, &a);
        assert_eq!(b.matrix.nnz(), 0);
    }

    #[test]
    fn rot_coupling_values() {
        let sp = spaces(2);
        let rvw = assemble_rot_vw(&sp);
        // w const -> rot w = 0
        let wc = scal_from_fn(&sp, |_, _| 2.0);
        let rw = rvw.matrix.matvec(&wc);
        assert!(rw.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-13);
        // w = x, v = (0,-1): (rot w, v) = int (0,-1).(0,-1) = 1
        let wx = scal_from_fn(&sp, |x, _| x);
        let v = vel_from_fn(&sp, |_, _| [0.0, -1.0]);
        let val: f64 = rvw.matrix.matvec(&wx).iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((val - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rot_integration_by_parts_identity() {
        // (rot u, z) = (u, rot z) for u, z vanishing on the boundary
        let sp = spaces(2);
        let rsv = assemble_rot_sv(&sp);
        let rvw = assemble_rot_vw(&sp);
        let bump = |x: f64, y: f64| x * (1.0 - x) * y * (1.0 - y);
        let u = vel_from_fn(&sp, |x, y| [bump(x, y), -2.0 * bump(x, y)]);
        let z = scal_from_fn(&sp, |x, y| bump(x, y) * (1.0 + x));
        let lhs: f64 = rsv.matrix.matvec(&u).iter().zip(&z).map(|(a, b)| a * b).sum();
        let rhs: f64 = rvw.matrix.matvec(&z).iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn mass_and_load_values() {
        let sp = spaces(2);
        let m = assemble_scalar_mass(&sp, None);
        let one = scal_from_fn(&sp, |_, _| 1.0);
        assert!((quad_form(&m.matrix, &one, &one) - 1.0).abs() < 1e-13);
        // f = (1,0), rho = 2, v = (1,0): load total = 2
        let rho = QuadField1::constant(&sp, 2.0);
        let f = QuadField2::constant(&sp, [1.0, 0.0]);
        let load = assemble_load_velocity(&sp, &rho, &f);
        let v = vel_from_fn(&sp, |_, _| [1.0, 0.0]);
        let total: f64 = load.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((total - 2.0).abs() < 1e-13);
        // f = 0 -> zero vector
        let zero = assemble_load_velocity(&sp, &rho, &QuadField2::constant(&sp, [0.0, 0.0]));
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn div_block_on_divergence_free_field() {
        let sp = spaces(2);
        let d = assemble_div(&sp);
        // u = rot(x y) = (x, -y) is divergence free and quadratic
        let u = vel_from_fn(&sp, |x, y| [x, -y]);
        let dv = d.matrix.matvec(&u);
        assert!(dv.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-13);
        // u = (x, 0): (div u, 1) = 1
        let u = vel_from_fn(&sp, |x, _| [x, 0.0]);
        let dv = d.matrix.matvec(&u);
        let total: f64 = dv.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn conv_jacobian_matches_directional_difference() {
        let sp = spaces(1);
        let mut rng = StdRng::seed_from_u64(17);
        let ucoef: Vec<f64> = (0..sp.n_velocity_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rho = QuadField1::constant(&sp, 1.0);
        let (uq, gu) = eval_velocity(&sp, &ucoef);
        let jac = assemble_conv_jacobian_vec(&sp, &rho, &QuadField2(uq), &gu);
        let dir: Vec<f64> = (0..sp.n_velocity_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let test: Vec<f64> = (0..sp.n_velocity_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // analytic: test' J dir
        let jd = jac.matrix.matvec(&dir);
        let analytic: f64 = jd.iter().zip(&test).map(|(a, b)| a * b).sum();
        // numeric: central difference of c(u+t d; u+t d, test) with rho frozen
        let h = 1e-6;
        let eval = |t: f64| {
            let upd: Vec<f64> = ucoef.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let (av, _) = eval_velocity(&sp, &upd);
            transport_pairing_vec(&sp, &rho, &QuadField2(av), &upd, &test, true)
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        assert!((analytic - numeric).abs() < 1e-7 * (1.0 + numeric.abs()), "{analytic} vs {numeric}");
    }

    #[test]
    fn stream_coupling_zero_for_constant_density() {
        let sp = spaces(1);
        let drho = QuadField1::constant(&sp, 0.0);
        let u = QuadField2::constant(&sp, [1.0, 0.5]);
        let gu = vec![[[0.0; 2]; 2]; sp.n_quad()];
        let f = QuadField2::constant(&sp, [1.0, 0.0]);
        let k = assemble_stream_coupling_vel(&sp, &drho, &u, &gu, &f);
        assert_eq!(k.matrix.nnz(), 0);
    }
}
