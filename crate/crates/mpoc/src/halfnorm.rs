//! Discrete `H^{1/2}` trace norms by extension energy.
//!
//! For a boundary segment the squared norm of a trace `g` is the minimum
//! of `||v||^2_{H1(Omega)}` over finite-element extensions `v` that equal
//! `g` on the segment and vanish on the rest of the boundary: the Schur
//! complement of the scalar H1 Gram matrix onto the segment's interior
//! trace nodes. Vector traces use the same operator per component.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};

use crate::assemble::assemble_scalar_h1;
use crate::error::{Error, Result};
use crate::linalg::schur_complement;
use crate::spaces::SpaceSet;

/// Boundary segment selector for trace norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// Control segment for the velocity (interior nodes of G1).
    Gamma1,
    /// Control segment for the rotation (interior nodes of G3).
    Gamma3,
    /// Dirichlet part of the velocity boundary, G0 plus G1.
    GammaNotG2,
    /// The whole boundary.
    Gamma,
}

/// Scalar nodes of a segment's interior, in boundary-traversal order.
pub fn segment_nodes(sp: &SpaceSet, seg: Segment) -> Vec<usize> {
    sp.boundary_nodes
        .iter()
        .copied()
        .filter(|&n| {
            let b = &sp.node_binfo[n];
            match seg {
                Segment::Gamma1 => b.interior_g1,
                Segment::Gamma3 => b.interior_g3,
                Segment::GammaNotG2 => b.interior_not_g2,
                Segment::Gamma => true,
            }
        })
        .collect()
}

/// Symmetric positive definite matrix realizing the squared extension
/// norm on a segment's interior trace nodes.
pub struct HalfNormOperator {
    pub segment: Segment,
    pub nodes: Vec<usize>,
    pub s: Mat<f64>,
    chol: Llt<f64>,
}

impl HalfNormOperator {
    pub fn build(sp: &SpaceSet, segment: Segment) -> Result<Self> {
        let nodes = segment_nodes(sp, segment);
        if nodes.is_empty() {
            return Err(Error::Precondition(format!("segment {segment:?} has no interior trace nodes")));
        }
        let gram = assemble_scalar_h1(sp);
        let s = schur_complement(&gram.matrix, &nodes)?;
        let chol = Llt::new(s.as_ref(), Side::Lower)
            .map_err(|_| Error::Numerical(format!("halfnorm matrix on {segment:?} not positive definite")))?;
        Ok(Self { segment, nodes, s, chol })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// `g' S h` for scalar traces.
    pub fn pair(&self, g: &[f64], h: &[f64]) -> f64 {
        let n = self.dim();
        assert_eq!(g.len(), n);
        assert_eq!(h.len(), n);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += g[i] * self.s[(i, j)] * h[j];
            }
        }
        acc
    }

    /// Squared norm of a scalar trace.
    pub fn norm_sq(&self, g: &[f64]) -> f64 {
        self.pair(g, g)
    }

    /// Squared norm of an interleaved vector trace `[x0, y0, x1, y1, ...]`.
    pub fn norm_sq_vec(&self, g: &[f64]) -> f64 {
        let n = self.dim();
        assert_eq!(g.len(), 2 * n);
        let gx: Vec<f64> = (0..n).map(|k| g[2 * k]).collect();
        let gy: Vec<f64> = (0..n).map(|k| g[2 * k + 1]).collect();
        self.norm_sq(&gx) + self.norm_sq(&gy)
    }

    pub fn pair_vec(&self, g: &[f64], h: &[f64]) -> f64 {
        let n = self.dim();
        let gx: Vec<f64> = (0..n).map(|k| g[2 * k]).collect();
        let gy: Vec<f64> = (0..n).map(|k| g[2 * k + 1]).collect();
        let hx: Vec<f64> = (0..n).map(|k| h[2 * k]).collect();
        let hy: Vec<f64> = (0..n).map(|k| h[2 * k + 1]).collect();
        self.pair(&gx, &hx) + self.pair(&gy, &hy)
    }

    /// `S^{-1} rhs` for a scalar right-hand side.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut b = Mat::<f64>::zeros(n, 1);
        for i in 0..n {
            b[(i, 0)] = rhs[i];
        }
        let x = self.chol.solve(&b);
        (0..n).map(|i| x[(i, 0)]).collect()
    }

    /// `S g` for a scalar trace.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.s[(i, j)] * g[j]).sum()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseMatrix;
    use crate::samples;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn quad_form(m: &SparseMatrix, x: &[f64]) -> f64 {
        m.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn zero_trace_zero_norm_and_scaling() {
        let sp = SpaceSet::new(Arc::new(samples::square_navier(2))).unwrap();
        let op = HalfNormOperator::build(&sp, Segment::Gamma1).unwrap();
        let zero = vec![0.0; op.dim()];
        assert_eq!(op.norm_sq(&zero), 0.0);
        let mut rng = StdRng::seed_from_u64(1);
        let g: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g2: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let a = op.norm_sq(&g);
        let b = op.norm_sq(&g2);
        assert!((b - 4.0 * a).abs() < 1e-12 * (1.0 + b));
        assert!(a > 0.0);
    }

    #[test]
    fn symmetry_of_s() {
        let sp = SpaceSet::new(Arc::new(samples::square_navier(2))).unwrap();
        for seg in [Segment::Gamma1, Segment::Gamma3, Segment::GammaNotG2, Segment::Gamma] {
            let op = HalfNormOperator::build(&sp, seg).unwrap();
            for i in 0..op.dim() {
                for j in 0..op.dim() {
                    assert!((op.s[(i, j)] - op.s[(j, i)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn minimality_against_explicit_extensions() {
        // g' S g <= ||v||^2_H1 for any extension v with the same trace and
        // zero on the rest of the boundary
        let sp = SpaceSet::new(Arc::new(samples::square_dirichlet(2))).unwrap();
        let gram = assemble_scalar_h1(&sp);
        let op = HalfNormOperator::build(&sp, Segment::Gamma1).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        let g: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sgg = op.norm_sq(&g);
        for trial in 0..5 {
            let mut v = vec![0.0; sp.n_nodes];
            for (k, &node) in op.nodes.iter().enumerate() {
                v[node] = g[k];
            }
            // random interior perturbation (zero on all boundary nodes)
            for n in 0..sp.n_nodes {
                if !sp.node_binfo[n].on_boundary {
                    v[n] = rng.gen_range(-1.0..1.0) * (trial as f64) * 0.3;
                }
            }
            let energy = quad_form(&gram.matrix, &v);
            assert!(
                sgg <= energy + 1e-11 * (1.0 + energy),
                "trial {trial}: schur {sgg} > energy {energy}"
            );
        }
    }

    #[test]
    fn solve_inverts_apply() {
        let sp = SpaceSet::new(Arc::new(samples::square_navier(1))).unwrap();
        let op = HalfNormOperator::build(&sp, Segment::Gamma3).unwrap();
        let mut rng = StdRng::seed_from_u64(4);
        let g: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = op.solve(&op.apply(&g));
        for (a, b) in back.iter().zip(&g) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn segment_node_partition() {
        let sp = SpaceSet::new(Arc::new(samples::square_navier(1))).unwrap();
        // gamma1 = right edge (2 edges after refine): interior nodes = 2 midpoints + 1 vertex
        let g1 = segment_nodes(&sp, Segment::Gamma1);
        assert_eq!(g1.len(), 3);
        // gamma (whole boundary) covers all boundary nodes
        assert_eq!(segment_nodes(&sp, Segment::Gamma).len(), sp.boundary_nodes.len());
        // gamma3: everything except the G0 (left) edge interior and its endpoints
        let g3 = segment_nodes(&sp, Segment::Gamma3);
        assert_eq!(g3.len(), sp.boundary_nodes.len() - 5);
    }
}
