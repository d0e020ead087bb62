//! Triangulated 2D domains with tagged boundary segments.
//!
//! The boundary carries two independent decompositions: a velocity
//! decomposition `G0 | G1 | G2` (Dirichlet data, Dirichlet control,
//! Navier slip) and a rotation decomposition `G0 | G3`. `G0` is the
//! same arc in both, must be connected, and anchors the arc-length
//! coordinate used to build the boundary stream function.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Velocity boundary tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VTag {
    G0,
    G1,
    G2,
}

/// Rotation boundary tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RTag {
    G0,
    G3,
}

impl fmt::Display for VTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VTag::G0 => write!(f, "G0"),
            VTag::G1 => write!(f, "G1"),
            VTag::G2 => write!(f, "G2"),
        }
    }
}

impl fmt::Display for RTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RTag::G0 => write!(f, "G0"),
            RTag::G3 => write!(f, "G3"),
        }
    }
}

/// Boundary edge with both tags; `v` is oriented so the domain lies on
/// the left (positive traversal of the boundary loop).
#[derive(Debug, Clone)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub vtag: VTag,
    pub rtag: RTag,
}

impl BoundaryEdge {
    pub fn length(&self, vertices: &[[f64; 2]]) -> f64 {
        let a = vertices[self.v[0]];
        let b = vertices[self.v[1]];
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Outward unit normal (right of the traversal direction).
    pub fn normal(&self, vertices: &[[f64; 2]]) -> [f64; 2] {
        let a = vertices[self.v[0]];
        let b = vertices[self.v[1]];
        let t = [b[0] - a[0], b[1] - a[1]];
        let l = (t[0] * t[0] + t[1] * t[1]).sqrt();
        [t[1] / l, -t[0] / l]
    }

    /// Unit tangent along the traversal direction.
    pub fn tangent(&self, vertices: &[[f64; 2]]) -> [f64; 2] {
        let a = vertices[self.v[0]];
        let b = vertices[self.v[1]];
        let t = [b[0] - a[0], b[1] - a[1]];
        let l = (t[0] * t[0] + t[1] * t[1]).sqrt();
        [t[0] / l, t[1] / l]
    }
}

/// Immutable triangulated domain. Safe to share read-only across threads.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index triples, positively oriented.
    pub triangles: Vec<[usize; 3]>,
    /// Boundary edges in traversal order around the (single) boundary
    /// loop, starting at `arc_length_origin`.
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Starting vertex x0 of the G0 arc.
    pub arc_length_origin: usize,
}

/// Ordered G0 arc with cumulative arc length per vertex from x0.
#[derive(Debug, Clone)]
pub struct BoundaryArc {
    /// Indices into `mesh.boundary_edges`, in order along the arc.
    pub edges: Vec<usize>,
    /// Vertex ids along the arc (edges.len() + 1 entries).
    pub vertices: Vec<usize>,
    /// Cumulative arc length at each vertex; first entry 0.
    pub cumulative: Vec<f64>,
}

impl BoundaryArc {
    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }
}

pub fn tri_signed_area(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        tri_signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Polygon area from the boundary loop (shoelace).
    pub fn polygon_area(&self) -> f64 {
        let mut acc = 0.0;
        for e in &self.boundary_edges {
            let a = self.vertices[e.v[0]];
            let b = self.vertices[e.v[1]];
            acc += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * acc
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges.iter().map(|e| e.length(&self.vertices)).sum()
    }

    pub fn has_vtag(&self, tag: VTag) -> bool {
        self.boundary_edges.iter().any(|e| e.vtag == tag)
    }

    /// All unique undirected edges of the triangulation, as sorted pairs.
    pub fn unique_edges(&self) -> Vec<(usize, usize)> {
        let mut set: Vec<(usize, usize)> = Vec::with_capacity(self.triangles.len() * 3 / 2);
        let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                if seen.insert(key, ()).is_none() {
                    set.push(key);
                }
            }
        }
        set.sort_unstable();
        set
    }
}

/// Loads and validates a mesh file (see the grammar in the README).
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Config(format!("cannot read mesh file {}: {e}", path.as_ref().display())))?;
    parse_mesh(&text)
}

/// Parses the `mesh2d v1` ASCII format and validates every invariant.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let perr = |line: usize, msg: &str| Error::MeshParse { line, msg: msg.to_string() };

    let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    if header != "mesh2d v1" {
        return Err(perr(ln, "expected header `mesh2d v1`"));
    }

    fn expect_section<'a>(
        item: Option<(usize, &'a str)>,
        name: &str,
    ) -> Result<(usize, usize)> {
        let (ln, l) = item.ok_or_else(|| Error::MeshParse { line: 0, msg: format!("missing `{name}` section") })?;
        let mut parts = l.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(n), None) if k == name => n
                .parse::<usize>()
                .map(|n| (ln, n))
                .map_err(|_| Error::MeshParse { line: ln, msg: format!("bad count in `{name}`") }),
            _ => Err(Error::MeshParse { line: ln, msg: format!("expected `{name} N`") }),
        }
    }

    let (_, nv) = expect_section(lines.next(), "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file in vertices"))?;
        let mut it = l.split_whitespace();
        let x: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(ln, "bad vertex line, expected `x y`"))?;
        let y: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(ln, "bad vertex line, expected `x y`"))?;
        if it.next().is_some() {
            return Err(perr(ln, "trailing tokens on vertex line"));
        }
        vertices.push([x, y]);
    }

    let (_, nt) = expect_section(lines.next(), "triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file in triangles"))?;
        let idx: Vec<usize> = l.split_whitespace().map(|s| s.parse()).collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(ln, "bad triangle line, expected `i j k`"))?;
        if idx.len() != 3 {
            return Err(perr(ln, "bad triangle line, expected `i j k`"));
        }
        for &i in &idx {
            if i >= nv {
                return Err(perr(ln, "triangle vertex index out of range"));
            }
        }
        triangles.push([idx[0], idx[1], idx[2]]);
    }

    let (_, nb) = expect_section(lines.next(), "bedges")?;
    let mut bedges_raw = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file in bedges"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(perr(ln, "bad bedge line, expected `i j VTAG RTAG`"));
        }
        let i: usize = toks[0].parse().map_err(|_| perr(ln, "bad bedge vertex index"))?;
        let j: usize = toks[1].parse().map_err(|_| perr(ln, "bad bedge vertex index"))?;
        if i >= nv || j >= nv {
            return Err(perr(ln, "bedge vertex index out of range"));
        }
        let vtag = match toks[2] {
            "G0" => VTag::G0,
            "G1" => VTag::G1,
            "G2" => VTag::G2,
            _ => return Err(perr(ln, "VTAG must be one of G0, G1, G2")),
        };
        let rtag = match toks[3] {
            "G0" => RTag::G0,
            "G3" => RTag::G3,
            _ => return Err(perr(ln, "RTAG must be one of G0, G3")),
        };
        bedges_raw.push((i, j, vtag, rtag, ln));
    }

    let (ln, origin) = {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing `gamma0_origin i`"))?;
        let mut parts = l.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("gamma0_origin"), Some(n), None) => (
                ln,
                n.parse::<usize>().map_err(|_| perr(ln, "bad gamma0_origin index"))?,
            ),
            _ => return Err(perr(ln, "expected `gamma0_origin i`")),
        }
    };
    if origin >= nv {
        return Err(perr(ln, "gamma0_origin out of range"));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "trailing content after gamma0_origin"));
    }

    build_mesh(vertices, triangles, bedges_raw, origin)
}

fn build_mesh(
    vertices: Vec<[f64; 2]>,
    mut triangles: Vec<[usize; 3]>,
    bedges_raw: Vec<(usize, usize, VTag, RTag, usize)>,
    origin: usize,
) -> Result<Mesh> {
    // orientation repair
    for t in triangles.iter_mut() {
        let area = tri_signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        if area < 0.0 {
            t.swap(1, 2);
        } else if area == 0.0 {
            return Err(Error::MeshInvalid(format!("degenerate triangle {:?}", t)));
        }
    }

    // edge incidence from triangles; directed boundary edges keep the
    // domain on the left
    let mut incidence: HashMap<(usize, usize), usize> = HashMap::new();
    let mut directed: HashMap<(usize, usize), (usize, usize)> = HashMap::new(); // sorted -> ccw pair
    for t in &triangles {
        for k in 0..3 {
            let a = t[k];
            let b = t[(k + 1) % 3];
            let key = (a.min(b), a.max(b));
            *incidence.entry(key).or_insert(0) += 1;
            directed.insert(key, (a, b));
        }
    }
    for (key, count) in &incidence {
        if *count > 2 {
            return Err(Error::MeshInvalid(format!("edge {key:?} shared by more than two triangles")));
        }
    }

    // check the tagged edges against the topological boundary
    let mut tagged: HashMap<(usize, usize), (VTag, RTag)> = HashMap::new();
    for &(i, j, vtag, rtag, ln) in &bedges_raw {
        if (vtag == VTag::G0) != (rtag == RTag::G0) {
            return Err(Error::MeshParse {
                line: ln,
                msg: "G0 must carry both tags: VTAG=G0 iff RTAG=G0".into(),
            });
        }
        let key = (i.min(j), i.max(j));
        match incidence.get(&key) {
            Some(1) => {}
            Some(_) => {
                return Err(Error::MeshParse { line: ln, msg: format!("edge ({i},{j}) is interior, not boundary") })
            }
            None => return Err(Error::MeshParse { line: ln, msg: format!("edge ({i},{j}) is not a mesh edge") }),
        }
        if tagged.insert(key, (vtag, rtag)).is_some() {
            return Err(Error::MeshParse { line: ln, msg: format!("duplicate boundary edge ({i},{j})") });
        }
    }
    let n_boundary = incidence.values().filter(|&&c| c == 1).count();
    if tagged.len() != n_boundary {
        return Err(Error::MeshInvalid(format!(
            "boundary tags cover {} of {} boundary edges",
            tagged.len(),
            n_boundary
        )));
    }

    // traverse the boundary loop from the origin
    let mut next_from: HashMap<usize, (usize, usize)> = HashMap::new(); // from-vertex -> (to-vertex, sorted key idx?)
    for (key, count) in &incidence {
        if *count == 1 {
            let (a, b) = directed[key];
            if next_from.insert(a, (b, 0)).is_some() {
                return Err(Error::MeshInvalid(format!("boundary is not a simple loop near vertex {a}")));
            }
        }
    }
    if !next_from.contains_key(&origin) {
        return Err(Error::MeshInvalid("gamma0_origin is not a boundary vertex".into()));
    }
    let mut loop_edges: Vec<BoundaryEdge> = Vec::with_capacity(n_boundary);
    let mut cur = origin;
    loop {
        let (to, _) = *next_from
            .get(&cur)
            .ok_or_else(|| Error::MeshInvalid(format!("boundary loop broken at vertex {cur}")))?;
        let key = (cur.min(to), cur.max(to));
        let (vtag, rtag) = tagged[&key];
        loop_edges.push(BoundaryEdge { v: [cur, to], vtag, rtag });
        cur = to;
        if cur == origin {
            break;
        }
        if loop_edges.len() > n_boundary {
            return Err(Error::MeshInvalid("boundary traversal does not close".into()));
        }
    }
    if loop_edges.len() != n_boundary {
        return Err(Error::MeshInvalid(
            "boundary has more than one component (only a single closed loop is supported)".into(),
        ));
    }

    // G0 must be a nonempty contiguous arc starting at the origin
    let g0_count = loop_edges.iter().filter(|e| e.vtag == VTag::G0).count();
    if g0_count == 0 {
        return Err(Error::MeshInvalid("Γ0 is empty".into()));
    }
    if loop_edges[0].vtag != VTag::G0 {
        return Err(Error::MeshInvalid(
            "gamma0_origin must start Γ0 in positive orientation (first loop edge is not G0)".into(),
        ));
    }
    let prefix = loop_edges.iter().take_while(|e| e.vtag == VTag::G0).count();
    if prefix != g0_count {
        return Err(Error::MeshInvalid("Γ0 not connected".into()));
    }
    if prefix == n_boundary {
        return Err(Error::MeshInvalid("Γ1 is empty (Γ0 covers the whole boundary)".into()));
    }
    if !loop_edges.iter().any(|e| e.vtag == VTag::G1) {
        return Err(Error::MeshInvalid("Γ1 is empty".into()));
    }
    if !loop_edges.iter().any(|e| e.rtag == RTag::G3) {
        return Err(Error::MeshInvalid("Γ3 is empty".into()));
    }

    Ok(Mesh { vertices, triangles, boundary_edges: loop_edges, arc_length_origin: origin })
}

/// Splits every triangle into 4 congruent children; boundary tags are
/// inherited by the child edges.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let nv = mesh.n_vertices();
    let edges = mesh.unique_edges();
    let mut edge_mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices = mesh.vertices.clone();
    for (k, &(a, b)) in edges.iter().enumerate() {
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        edge_mid.insert((a, b), nv + k);
    }
    let mid = |a: usize, b: usize| edge_mid[&(a.min(b), a.max(b))];

    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for &[a, b, c] in &mesh.triangles {
        let mab = mid(a, b);
        let mbc = mid(b, c);
        let mca = mid(c, a);
        triangles.push([a, mab, mca]);
        triangles.push([mab, b, mbc]);
        triangles.push([mca, mbc, c]);
        triangles.push([mab, mbc, mca]);
    }

    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let m = mid(e.v[0], e.v[1]);
        boundary_edges.push(BoundaryEdge { v: [e.v[0], m], vtag: e.vtag, rtag: e.rtag });
        boundary_edges.push(BoundaryEdge { v: [m, e.v[1]], vtag: e.vtag, rtag: e.rtag });
    }

    Mesh {
        vertices,
        triangles,
        boundary_edges,
        arc_length_origin: mesh.arc_length_origin,
    }
}

/// Cumulative arc length along the G0 arc starting at x0.
pub fn gamma0_arclength(mesh: &Mesh) -> Result<BoundaryArc> {
    let g0: Vec<usize> = mesh
        .boundary_edges
        .iter()
        .enumerate()
        .take_while(|(_, e)| e.vtag == VTag::G0)
        .map(|(i, _)| i)
        .collect();
    if g0.is_empty() {
        return Err(Error::MeshInvalid("Γ0 is empty".into()));
    }
    let mut vertices = vec![mesh.boundary_edges[g0[0]].v[0]];
    let mut cumulative = vec![0.0];
    for &ei in &g0 {
        let e = &mesh.boundary_edges[ei];
        vertices.push(e.v[1]);
        cumulative.push(cumulative.last().unwrap() + e.length(&mesh.vertices));
    }
    Ok(BoundaryArc { edges: g0, vertices, cumulative })
}
