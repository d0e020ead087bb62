//! Finite-element spaces on a triangulated domain.
//!
//! Taylor-Hood pair: quadratic vector velocity / linear continuous
//! pressure, plus quadratic scalar spaces shared by the microrotation
//! and the stream function. Velocity nodes on the slip boundary carry
//! an orthonormal (n, tau) frame so `u . n = 0` is a single-DOF
//! constraint after rotation.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, RTag, VTag};
use crate::quadrature::{p2_grad, TRI_QP};

/// Identifies which space a coefficient vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceId {
    /// Quadratic vector velocity, 2 DOFs per node (frame-rotated on G2 nodes).
    Velocity,
    /// Linear continuous pressure on vertices.
    Pressure,
    /// Quadratic scalar (microrotation and stream function).
    Scalar,
}

/// Coefficient vector tagged with its space.
#[derive(Debug, Clone)]
pub struct FieldVector {
    pub space: SpaceId,
    pub data: Vec<f64>,
}

impl FieldVector {
    pub fn zeros(space: SpaceId, len: usize) -> Self {
        Self { space, data: vec![0.0; len] }
    }
}

/// Velocity constraint class of a scalar node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VClass {
    Interior,
    /// Full Dirichlet node; the tag says which data applies (G0 or G1).
    Dirichlet(VTag),
    /// Slip node: normal component constrained, tangential free.
    Navier,
}

/// Rotation constraint class of a scalar node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RClass {
    Interior,
    Dirichlet(RTag),
}

/// Per-node boundary record.
#[derive(Debug, Clone, Copy)]
pub struct NodeBoundary {
    pub on_boundary: bool,
    /// Global arc length from x0 along the positive traversal (boundary nodes only).
    pub s: f64,
    pub vclass: VClass,
    pub rclass: RClass,
    /// True when every adjacent boundary edge lies in the named segment.
    pub interior_g0: bool,
    pub interior_g1: bool,
    pub interior_g3: bool,
    pub interior_not_g2: bool,
}

impl Default for NodeBoundary {
    fn default() -> Self {
        Self {
            on_boundary: false,
            s: 0.0,
            vclass: VClass::Interior,
            rclass: RClass::Interior,
            interior_g0: false,
            interior_g1: false,
            interior_g3: false,
            interior_not_g2: false,
        }
    }
}

/// Index map between full DOF numbering and a reduced (free) numbering.
#[derive(Debug, Clone)]
pub struct DofSet {
    pub full_to_red: Vec<Option<usize>>,
    pub red_to_full: Vec<usize>,
}

impl DofSet {
    fn from_mask(mask: &[bool]) -> Self {
        let mut full_to_red = vec![None; mask.len()];
        let mut red_to_full = Vec::new();
        for (i, &free) in mask.iter().enumerate() {
            if free {
                full_to_red[i] = Some(red_to_full.len());
                red_to_full.push(i);
            }
        }
        Self { full_to_red, red_to_full }
    }

    pub fn len(&self) -> usize {
        self.red_to_full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.red_to_full.is_empty()
    }

    /// Gathers the free entries of a full vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.red_to_full.iter().map(|&i| full[i]).collect()
    }

    /// Scatters a reduced vector into a full vector of zeros.
    pub fn prolong(&self, red: &[f64], n_full: usize) -> Vec<f64> {
        let mut full = vec![0.0; n_full];
        for (k, &i) in self.red_to_full.iter().enumerate() {
            full[i] = red[k];
        }
        full
    }
}

/// Precomputed geometry of one triangle.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    /// 2 x area (Jacobian determinant).
    pub det: f64,
    /// Physical coordinates of the quadrature points.
    pub qp: [[f64; 2]; 6],
    /// Physical gradients of the six P2 shape functions at each qp.
    pub grad: [[[f64; 2]; 6]; 6],
    /// Physical gradients of the three P1 shape functions (constant).
    pub grad_p1: [[f64; 2]; 3],
}

/// Function spaces, DOF maps, constraint classification and boundary frames.
#[derive(Debug, Clone)]
pub struct SpaceSet {
    pub mesh: Arc<Mesh>,
    /// Unique undirected edges, sorted.
    pub edges: Vec<(usize, usize)>,
    edge_ids: HashMap<(usize, usize), usize>,
    /// Scalar P2 node count: vertices + edges.
    pub n_nodes: usize,
    /// Physical position of each scalar node.
    pub node_pos: Vec<[f64; 2]>,
    /// Per triangle: the six global scalar nodes (v0, v1, v2, m01, m12, m20).
    pub tri_nodes: Vec<[usize; 6]>,
    /// Boundary scalar nodes in traversal order starting at x0.
    pub boundary_nodes: Vec<usize>,
    pub node_binfo: Vec<NodeBoundary>,
    /// (n, tau) frame for Navier nodes.
    pub frames: Vec<Option<[[f64; 2]; 2]>>,
    /// Free velocity DOFs of the homogeneous solenoidal space (zero on
    /// Dirichlet nodes, tangential-only on Navier nodes).
    pub vel_free_state: DofSet,
    /// Free velocity DOFs with boundary traces released (normal
    /// component on Navier nodes still constrained).
    pub vel_free_traces: DofSet,
    /// Interior scalar nodes (homogeneous Dirichlet everywhere).
    pub scalar_interior: DofSet,
    /// Free rotation DOFs; identical to `scalar_interior` because the
    /// rotation is Dirichlet on the whole boundary.
    pub rot_free: DofSet,
    /// Pressure DOFs with one pinned to fix the constant mode.
    pub pressure_free: DofSet,
    pub pinned_pressure: usize,
}

impl SpaceSet {
    pub fn new(mesh: Arc<Mesh>) -> Result<Self> {
        let nv = mesh.n_vertices();
        let edges = mesh.unique_edges();
        let mut edge_ids = HashMap::with_capacity(edges.len());
        for (k, &e) in edges.iter().enumerate() {
            edge_ids.insert(e, k);
        }
        let n_nodes = nv + edges.len();

        let mut node_pos = vec![[0.0; 2]; n_nodes];
        node_pos[..nv].copy_from_slice(&mesh.vertices);
        for (k, &(a, b)) in edges.iter().enumerate() {
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            node_pos[nv + k] = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        }

        let eid = |a: usize, b: usize| nv + edge_ids[&(a.min(b), a.max(b))];
        let mut tri_nodes = Vec::with_capacity(mesh.n_triangles());
        for &[a, b, c] in &mesh.triangles {
            tri_nodes.push([a, b, c, eid(a, b), eid(b, c), eid(c, a)]);
        }

        // walk the boundary loop: arc length + tag adjacency per node
        let mut node_binfo = vec![NodeBoundary::default(); n_nodes];
        let mut boundary_nodes = Vec::new();
        let mut adj_v: Vec<Vec<VTag>> = vec![Vec::new(); n_nodes];
        let mut adj_r: Vec<Vec<RTag>> = vec![Vec::new(); n_nodes];
        let mut s = 0.0;
        let x0 = mesh.arc_length_origin;
        boundary_nodes.push(x0);
        node_binfo[x0].on_boundary = true;
        node_binfo[x0].s = 0.0;
        for e in &mesh.boundary_edges {
            let len = e.length(&mesh.vertices);
            let m = eid(e.v[0], e.v[1]);
            boundary_nodes.push(m);
            node_binfo[m].on_boundary = true;
            node_binfo[m].s = s + 0.5 * len;
            s += len;
            if e.v[1] != x0 {
                boundary_nodes.push(e.v[1]);
                node_binfo[e.v[1]].on_boundary = true;
                node_binfo[e.v[1]].s = s;
            }
            for n in [e.v[0], e.v[1], m] {
                adj_v[n].push(e.vtag);
                adj_r[n].push(e.rtag);
            }
        }

        // constraint classes; Dirichlet wins over Navier at shared nodes,
        // G0 wins over G1
        let mut frames: Vec<Option<[[f64; 2]; 2]>> = vec![None; n_nodes];
        for n in 0..n_nodes {
            if !node_binfo[n].on_boundary {
                continue;
            }
            let vs = &adj_v[n];
            node_binfo[n].vclass = if vs.contains(&VTag::G0) {
                VClass::Dirichlet(VTag::G0)
            } else if vs.contains(&VTag::G1) {
                VClass::Dirichlet(VTag::G1)
            } else {
                VClass::Navier
            };
            node_binfo[n].rclass = if adj_r[n].contains(&RTag::G0) {
                RClass::Dirichlet(RTag::G0)
            } else {
                RClass::Dirichlet(RTag::G3)
            };
            node_binfo[n].interior_g0 = vs.iter().all(|t| *t == VTag::G0);
            node_binfo[n].interior_g1 = vs.iter().all(|t| *t == VTag::G1);
            node_binfo[n].interior_not_g2 = vs.iter().all(|t| *t != VTag::G2);
            node_binfo[n].interior_g3 = adj_r[n].iter().all(|t| *t == RTag::G3);
        }

        // frames on Navier nodes: edge normal at midpoints, averaged
        // adjacent-edge normal at vertices
        let mut vertex_normal_acc: Vec<[f64; 2]> = vec![[0.0; 2]; n_nodes];
        for e in &mesh.boundary_edges {
            if e.vtag != VTag::G2 {
                continue;
            }
            let nrm = e.normal(&mesh.vertices);
            let m = eid(e.v[0], e.v[1]);
            frames[m] = Some(frame_from_normal(nrm));
            for v in e.v {
                vertex_normal_acc[v][0] += nrm[0];
                vertex_normal_acc[v][1] += nrm[1];
            }
        }
        for n in 0..n_nodes {
            if node_binfo[n].vclass == VClass::Navier && frames[n].is_none() {
                let acc = vertex_normal_acc[n];
                let l = (acc[0] * acc[0] + acc[1] * acc[1]).sqrt();
                if l == 0.0 {
                    return Err(Error::MeshInvalid(format!("cannot build slip frame at node {n}")));
                }
                frames[n] = Some(frame_from_normal([acc[0] / l, acc[1] / l]));
            }
        }

        // DOF sets
        let n_vdof = 2 * n_nodes;
        let mut free_state = vec![false; n_vdof];
        let mut free_traces = vec![false; n_vdof];
        for n in 0..n_nodes {
            match node_binfo[n].vclass {
                VClass::Interior => {
                    free_state[2 * n] = true;
                    free_state[2 * n + 1] = true;
                    free_traces[2 * n] = true;
                    free_traces[2 * n + 1] = true;
                }
                VClass::Dirichlet(_) => {
                    free_traces[2 * n] = true;
                    free_traces[2 * n + 1] = true;
                }
                VClass::Navier => {
                    // rotated DOFs: comp 0 = normal (constrained), comp 1 = tangential
                    free_state[2 * n + 1] = true;
                    free_traces[2 * n + 1] = true;
                }
            }
        }
        let scalar_mask: Vec<bool> = (0..n_nodes).map(|n| !node_binfo[n].on_boundary).collect();
        let pinned_pressure = 0usize;
        let pressure_mask: Vec<bool> = (0..nv).map(|v| v != pinned_pressure).collect();

        Ok(Self {
            mesh,
            edges,
            edge_ids,
            n_nodes,
            node_pos,
            tri_nodes,
            boundary_nodes,
            node_binfo,
            frames,
            vel_free_state: DofSet::from_mask(&free_state),
            vel_free_traces: DofSet::from_mask(&free_traces),
            scalar_interior: DofSet::from_mask(&scalar_mask),
            rot_free: DofSet::from_mask(&scalar_mask),
            pressure_free: DofSet::from_mask(&pressure_mask),
            pinned_pressure,
        })
    }

    pub fn n_velocity_dofs(&self) -> usize {
        2 * self.n_nodes
    }

    pub fn n_pressure_dofs(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn edge_node(&self, a: usize, b: usize) -> usize {
        self.mesh.n_vertices() + self.edge_ids[&(a.min(b), a.max(b))]
    }

    /// Cartesian velocity value at a node from the (possibly rotated)
    /// coefficient pair.
    #[inline]
    pub fn node_velocity(&self, coeffs: &[f64], node: usize) -> [f64; 2] {
        let c0 = coeffs[2 * node];
        let c1 = coeffs[2 * node + 1];
        match self.frames[node] {
            None => [c0, c1],
            Some([n, t]) => [c0 * n[0] + c1 * t[0], c0 * n[1] + c1 * t[1]],
        }
    }

    /// Writes a Cartesian vector into the node's coefficient pair.
    #[inline]
    pub fn set_node_velocity(&self, coeffs: &mut [f64], node: usize, v: [f64; 2]) {
        match self.frames[node] {
            None => {
                coeffs[2 * node] = v[0];
                coeffs[2 * node + 1] = v[1];
            }
            Some([n, t]) => {
                coeffs[2 * node] = v[0] * n[0] + v[1] * n[1];
                coeffs[2 * node + 1] = v[0] * t[0] + v[1] * t[1];
            }
        }
    }

    /// Transforms an element velocity matrix/vector slot from Cartesian
    /// components to the node frame; identity for unframed nodes.
    #[inline]
    pub fn frame_of(&self, node: usize) -> Option<[[f64; 2]; 2]> {
        self.frames[node]
    }

    pub fn element_geometry(&self, t: usize) -> ElementGeometry {
        let [a, b, c] = self.mesh.triangles[t];
        let pa = self.mesh.vertices[a];
        let pb = self.mesh.vertices[b];
        let pc = self.mesh.vertices[c];
        let j = [[pb[0] - pa[0], pc[0] - pa[0]], [pb[1] - pa[1], pc[1] - pa[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // inverse transpose of J
        let inv_t = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        let mut qp = [[0.0; 2]; 6];
        let mut grad = [[[0.0; 2]; 6]; 6];
        for (q, &(x, y, _)) in TRI_QP.iter().enumerate() {
            qp[q] = [pa[0] + j[0][0] * x + j[0][1] * y, pa[1] + j[1][0] * x + j[1][1] * y];
            let gr = p2_grad(x, y);
            for i in 0..6 {
                grad[q][i] = [
                    inv_t[0][0] * gr[i][0] + inv_t[0][1] * gr[i][1],
                    inv_t[1][0] * gr[i][0] + inv_t[1][1] * gr[i][1],
                ];
            }
        }
        let gp1_ref = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        let mut grad_p1 = [[0.0; 2]; 3];
        for i in 0..3 {
            grad_p1[i] = [
                inv_t[0][0] * gp1_ref[i][0] + inv_t[0][1] * gp1_ref[i][1],
                inv_t[1][0] * gp1_ref[i][0] + inv_t[1][1] * gp1_ref[i][1],
            ];
        }
        ElementGeometry { det, qp, grad, grad_p1 }
    }

    /// Total number of volume quadrature points.
    pub fn n_quad(&self) -> usize {
        6 * self.mesh.n_triangles()
    }
}

fn frame_from_normal(n: [f64; 2]) -> [[f64; 2]; 2] {
    [n, [-n[1], n[0]]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    #[test]
    fn node_and_dof_counts() {
        let mesh = Arc::new(samples::square_navier(1));
        let sp = SpaceSet::new(mesh).unwrap();
        assert_eq!(sp.n_nodes, 9 + 16); // 9 vertices + 16 edges
        assert_eq!(sp.boundary_nodes.len(), 16); // 8 boundary edges: 8 vertices + 8 midpoints
        // left edge Dirichlet (G0): 3 nodes; right edge (G1): 3 nodes;
        // 4 corner vertices all Dirichlet; top/bottom interiors are Navier
        let n_navier = sp.node_binfo.iter().filter(|b| b.vclass == VClass::Navier).count();
        assert_eq!(n_navier, 6); // 2 interior vertices + 4 midpoints on top+bottom
    }

    #[test]
    fn frames_are_orthonormal_outward() {
        let sp = SpaceSet::new(Arc::new(samples::square_navier(2))).unwrap();
        for n in 0..sp.n_nodes {
            if let Some([nrm, tau]) = sp.frames[n] {
                assert!((nrm[0] * nrm[0] + nrm[1] * nrm[1] - 1.0).abs() < 1e-14);
                assert!((tau[0] * tau[0] + tau[1] * tau[1] - 1.0).abs() < 1e-14);
                assert!((nrm[0] * tau[0] + nrm[1] * tau[1]).abs() < 1e-14);
                // unit square: slip normals are straight up or down
                assert!(nrm[0].abs() < 1e-14);
                assert!((nrm[1].abs() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn arc_length_walks_the_loop() {
        let sp = SpaceSet::new(Arc::new(samples::square_navier(0))).unwrap();
        // x0 = vertex 3 (top-left); loop: left, bottom, right, top
        let s_origin = sp.node_binfo[3].s;
        assert!(s_origin.abs() < 1e-15);
        let s_bl = sp.node_binfo[0].s; // bottom-left vertex after left edge
        assert!((s_bl - 1.0).abs() < 1e-14);
        let s_br = sp.node_binfo[1].s;
        assert!((s_br - 2.0).abs() < 1e-14);
        let m_left = sp.edge_node(0, 3);
        assert!((sp.node_binfo[m_left].s - 0.5).abs() < 1e-14);
    }

    #[test]
    fn velocity_frame_roundtrip() {
        let sp = SpaceSet::new(Arc::new(samples::square_navier(1))).unwrap();
        let mut coeffs = vec![0.0; sp.n_velocity_dofs()];
        for n in 0..sp.n_nodes {
            let v = [0.3 * n as f64 - 1.0, 0.1 * n as f64];
            sp.set_node_velocity(&mut coeffs, n, v);
            let back = sp.node_velocity(&coeffs, n);
            assert!((back[0] - v[0]).abs() < 1e-13 && (back[1] - v[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn geometry_gradients_reproduce_linear_fields() {
        let sp = SpaceSet::new(Arc::new(samples::trapezoid(1))).unwrap();
        // field f = 2x - 3y on P2 nodes; gradient must be (2, -3) at all qp
        let coeffs: Vec<f64> = sp.node_pos.iter().map(|p| 2.0 * p[0] - 3.0 * p[1]).collect();
        for t in 0..sp.mesh.n_triangles() {
            let geo = sp.element_geometry(t);
            for q in 0..6 {
                let mut g = [0.0, 0.0];
                for i in 0..6 {
                    let node = sp.tri_nodes[t][i];
                    g[0] += coeffs[node] * geo.grad[q][i][0];
                    g[1] += coeffs[node] * geo.grad[q][i][1];
                }
                assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dof_sets_partition() {
        let sp = SpaceSet::new(Arc::new(samples::square_navier(1))).unwrap();
        let nfree = sp.vel_free_state.len();
        let n_navier = sp.node_binfo.iter().filter(|b| b.vclass == VClass::Navier).count();
        let n_dirichlet = sp
            .node_binfo
            .iter()
            .filter(|b| matches!(b.vclass, VClass::Dirichlet(_)))
            .count();
        let n_interior = sp.n_nodes - n_navier - n_dirichlet;
        assert_eq!(nfree, 2 * n_interior + n_navier);
        assert_eq!(sp.vel_free_traces.len(), 2 * (sp.n_nodes - n_navier) + n_navier);
        assert_eq!(sp.scalar_interior.len(), sp.n_nodes - sp.boundary_nodes.len());
    }
}
