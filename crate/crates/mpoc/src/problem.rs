//! Problem data and the per-mesh discretization context.
//!
//! `Discretization` binds a mesh and a parameter set and caches every
//! control-independent object: assembled operators, the stream solver,
//! the boundary flux map, trace-norm operators, the density profile eta
//! built from the G0 data, and the factorized Stokes-type saddle used
//! for liftings and Riesz solves on the homogeneous solenoidal space.

use std::sync::Arc;

use crate::assemble::{
    add_reduced_block, add_reduced_block_transposed, assemble_a, assemble_div, assemble_rot_vw,
    assemble_scalar_h1, assemble_scalar_mass, assemble_vector_h1, assemble_vector_mass, eval_scalar,
    eval_velocity, quad_points, quad_weights, rot_at_qp, AssembledOperator, QuadField1, QuadField2,
};
use crate::control::ControlPair;
use crate::density::{build_eta, DensityProfile};
use crate::error::{Error, Result};
use crate::halfnorm::{segment_nodes, HalfNormOperator, Segment};
use crate::linalg::{factorize, Factorization, TripletList};
use crate::mesh::{Mesh, RTag, VTag};
use crate::spaces::{RClass, SpaceSet, VClass};
use crate::stream::{BoundaryFluxMap, StreamSolver};

pub type FieldFn1 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type FieldFn2 = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;
/// Boundary data as a function of position and arc length (x, y, s).
pub type BoundaryFn1 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type BoundaryFn2 = Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>;

/// Physical parameters, body forces, boundary data and objective weights.
#[derive(Clone)]
pub struct ModelParams {
    pub mu1: f64,
    pub mu2: f64,
    pub mur: f64,
    pub alpha: f64,
    pub f: FieldFn2,
    pub g: FieldFn1,
    pub u0: BoundaryFn2,
    pub w0: BoundaryFn1,
    pub rho0: BoundaryFn1,
    /// Objective weights beta_1..beta_6.
    pub beta: [f64; 6],
}

impl ModelParams {
    /// Unit viscosities, zero data, unit boundary density, tracking-only
    /// weights. A starting point for tests and examples.
    pub fn base() -> Self {
        Self {
            mu1: 1.0,
            mu2: 1.0,
            mur: 0.0,
            alpha: 0.0,
            f: Arc::new(|_, _| [0.0, 0.0]),
            g: Arc::new(|_, _| 0.0),
            u0: Arc::new(|_, _, _| [0.0, 0.0]),
            w0: Arc::new(|_, _, _| 0.0),
            rho0: Arc::new(|_, _, _| 1.0),
            beta: [0.0, 1.0, 1.0, 0.0, 1.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu1 > 0.0) || !(self.mu2 > 0.0) {
            return Err(Error::Precondition(format!("viscosities must be positive: mu1={}, mu2={}", self.mu1, self.mu2)));
        }
        if self.mur < 0.0 || self.alpha < 0.0 {
            return Err(Error::Precondition("mur and alpha must be nonnegative".into()));
        }
        if self.beta.iter().all(|b| *b == 0.0) {
            return Err(Error::Precondition("objective weights must not all be zero".into()));
        }
        if self.beta.iter().any(|b| *b < 0.0) {
            return Err(Error::Precondition("objective weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Tracking targets sampled at the volume quadrature points.
#[derive(Debug, Clone)]
pub struct Targets {
    pub ud: QuadField2,
    pub wd: QuadField1,
    pub rhod: QuadField1,
}

impl Targets {
    pub fn zeros(sp: &SpaceSet) -> Self {
        Self {
            ud: QuadField2::constant(sp, [0.0, 0.0]),
            wd: QuadField1::constant(sp, 0.0),
            rhod: QuadField1::constant(sp, 0.0),
        }
    }

    pub fn from_fns(
        sp: &SpaceSet,
        ud: impl Fn(f64, f64) -> [f64; 2],
        wd: impl Fn(f64, f64) -> f64,
        rhod: impl Fn(f64, f64) -> f64,
    ) -> Self {
        Self {
            ud: QuadField2::from_fn(sp, ud),
            wd: QuadField1::from_fn(sp, wd),
            rhod: QuadField1::from_fn(sp, rhod),
        }
    }

    /// Inverse-crime targets: the fields of a computed state.
    pub fn from_state(sp: &SpaceSet, u: &[f64], w: &[f64], rho: &QuadField1) -> Self {
        let (uq, _) = eval_velocity(sp, u);
        let (wq, _) = eval_scalar(sp, w);
        Self { ud: QuadField2(uq), wd: QuadField1(wq), rhod: rho.clone() }
    }
}

/// Control-independent discretization of one problem on one mesh.
pub struct Discretization {
    pub sp: SpaceSet,
    pub params: ModelParams,
    pub flux_map: BoundaryFluxMap,
    pub stream: StreamSolver,
    /// `<A u, v> = 2 (D u, D v) + 2 alpha int_G2 u.v` (no viscosity factor).
    pub a0: AssembledOperator,
    pub div: AssembledOperator,
    pub rot_vw: AssembledOperator,
    pub mass_s: AssembledOperator,
    pub mass_v: AssembledOperator,
    pub h1_v: AssembledOperator,
    pub h1_s: AssembledOperator,
    pub hn_g1: HalfNormOperator,
    pub hn_g3: HalfNormOperator,
    pub hn_not_g2: HalfNormOperator,
    pub hn_gamma: HalfNormOperator,
    pub f_qp: QuadField2,
    pub g_qp: QuadField1,
    pub profile: DensityProfile,
    /// u0 scattered on its Dirichlet nodes, zero elsewhere.
    pub u0_dirichlet: Vec<f64>,
    /// w0 scattered on the G0 rotation nodes, zero elsewhere.
    pub w0_dirichlet: Vec<f64>,
    /// G1-interior and G3-interior node lists (control supports).
    pub g1_nodes: Vec<usize>,
    pub g3_nodes: Vec<usize>,
    /// Flux functional over the interleaved g1 DOFs.
    pub flux_vec_g1: Vec<f64>,
    /// Required control flux: minus the G0 inflow/outflow of u0.
    pub flux_target: f64,
    /// Factorized Stokes saddle [A0, D'; D, 0] on the homogeneous space.
    a_saddle: Factorization,
    n_vel_free: usize,
    /// G0-prefix boundary nodes (the eta knots live here).
    pub g0_nodes: Vec<usize>,
    pub psi_gamma0: Vec<f64>,
    pub rho0_gamma0: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: Arc<Mesh>, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let sp = SpaceSet::new(mesh)?;
        let flux_map = BoundaryFluxMap::new(&sp);
        let stream = StreamSolver::new(&sp)?;
        let a0 = assemble_a(&sp, params.alpha);
        let div = assemble_div(&sp);
        let rot_vw = assemble_rot_vw(&sp);
        let mass_s = assemble_scalar_mass(&sp, None);
        let mass_v = assemble_vector_mass(&sp);
        let h1_v = assemble_vector_h1(&sp);
        let h1_s = assemble_scalar_h1(&sp);
        let hn_g1 = HalfNormOperator::build(&sp, Segment::Gamma1)?;
        let hn_g3 = HalfNormOperator::build(&sp, Segment::Gamma3)?;
        let hn_not_g2 = HalfNormOperator::build(&sp, Segment::GammaNotG2)?;
        let hn_gamma = HalfNormOperator::build(&sp, Segment::Gamma)?;
        let f_qp = QuadField2::from_fn(&sp, |x, y| (params.f)(x, y));
        let g_qp = QuadField1::from_fn(&sp, |x, y| (params.g)(x, y));

        // Dirichlet data vectors from the fixed boundary functions
        let mut u0_dirichlet = vec![0.0; sp.n_velocity_dofs()];
        let mut w0_dirichlet = vec![0.0; sp.n_nodes];
        for n in 0..sp.n_nodes {
            let b = sp.node_binfo[n];
            if b.vclass == VClass::Dirichlet(VTag::G0) {
                let p = sp.node_pos[n];
                sp.set_node_velocity(&mut u0_dirichlet, n, (params.u0)(p[0], p[1], b.s));
            }
            if b.rclass == RClass::Dirichlet(RTag::G0) {
                let p = sp.node_pos[n];
                w0_dirichlet[n] = (params.w0)(p[0], p[1], b.s);
            }
        }

        // eta from the G0 samples: psi by arc-length integration of u0.n
        let n_g0_edges = sp.mesh.boundary_edges.iter().filter(|e| e.vtag == VTag::G0).count();
        let g0_nodes: Vec<usize> = sp.boundary_nodes[..=2 * n_g0_edges].to_vec();
        let (psi_all, _) = flux_map.psi_values(&sp, &u0_dirichlet);
        let psi_gamma0: Vec<f64> = psi_all[..=2 * n_g0_edges].to_vec();
        let rho0_gamma0: Vec<f64> = g0_nodes
            .iter()
            .map(|&n| {
                let p = sp.node_pos[n];
                (params.rho0)(p[0], p[1], sp.node_binfo[n].s)
            })
            .collect();
        let profile = build_eta(&psi_gamma0, &rho0_gamma0)?;

        // control support and flux functional
        let g1_nodes = segment_nodes(&sp, Segment::Gamma1);
        let g3_nodes = segment_nodes(&sp, Segment::Gamma3);
        let mut flux_vec_g1 = vec![0.0; 2 * g1_nodes.len()];
        {
            // total flux of a unit coefficient at each g1 DOF
            let mut probe = vec![0.0; sp.n_velocity_dofs()];
            for (k, &node) in g1_nodes.iter().enumerate() {
                for c in 0..2 {
                    probe[2 * node + c] = 1.0;
                    flux_vec_g1[2 * k + c] = flux_map.total_flux(&probe);
                    probe[2 * node + c] = 0.0;
                }
            }
        }
        let flux_target = -flux_map.flux_through(&sp, &u0_dirichlet, |e| sp.mesh.boundary_edges[e].vtag == VTag::G0);

        // Stokes saddle on (free velocity, unpinned pressure)
        let n_vel_free = sp.vel_free_state.len();
        let n_p = sp.pressure_free.len();
        let mut trips = TripletList::new(n_vel_free + n_p, n_vel_free + n_p);
        add_reduced_block(&mut trips, &a0.matrix, &sp.vel_free_state, &sp.vel_free_state, 0, 0, 1.0);
        add_reduced_block(&mut trips, &div.matrix, &sp.pressure_free, &sp.vel_free_state, n_vel_free, 0, 1.0);
        add_reduced_block_transposed(&mut trips, &div.matrix, &sp.pressure_free, &sp.vel_free_state, n_vel_free, 0, 1.0);
        let a_saddle = factorize(&trips.finalize())?;

        Ok(Self {
            sp,
            params,
            flux_map,
            stream,
            a0,
            div,
            rot_vw,
            mass_s,
            mass_v,
            h1_v,
            h1_s,
            hn_g1,
            hn_g3,
            hn_not_g2,
            hn_gamma,
            f_qp,
            g_qp,
            profile,
            u0_dirichlet,
            w0_dirichlet,
            g1_nodes,
            g3_nodes,
            flux_vec_g1,
            flux_target,
            a_saddle,
            n_vel_free,
            g0_nodes,
            psi_gamma0,
            rho0_gamma0,
        })
    }

    /// Zero controls with the compatible flux target and given box half-widths.
    pub fn zero_controls(&self, bound1: f64, bound2: f64) -> ControlPair {
        ControlPair::zeros(self.g1_nodes.len(), self.g3_nodes.len(), bound1, bound2, self.flux_target)
    }

    /// Full velocity Dirichlet vector for given controls: u0 on G0, g1 on
    /// the G1-interior nodes, zero on G1 endpoints and slip normals.
    pub fn dirichlet_velocity(&self, controls: &ControlPair) -> Vec<f64> {
        let mut d = self.u0_dirichlet.clone();
        for (k, &node) in self.g1_nodes.iter().enumerate() {
            self.sp.set_node_velocity(&mut d, node, [controls.g1[2 * k], controls.g1[2 * k + 1]]);
        }
        d
    }

    /// Full rotation Dirichlet vector: w0 on G0 nodes, g2 on G3 nodes.
    pub fn dirichlet_rotation(&self, controls: &ControlPair) -> Vec<f64> {
        let mut d = self.w0_dirichlet.clone();
        for (k, &node) in self.g3_nodes.iter().enumerate() {
            d[node] = controls.g2[k];
        }
        d
    }

    /// Solves `[A0, D'; D, 0] [u; p] = [r_u; r_p]` on the homogeneous
    /// space. Inputs and outputs are full-length vectors.
    pub fn solve_a_saddle(&self, r_u: &[f64], r_p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rhs = self.sp.vel_free_state.restrict(r_u);
        rhs.extend(self.sp.pressure_free.restrict(r_p));
        let sol = self.a_saddle.solve(&rhs)?;
        let u = self.sp.vel_free_state.prolong(&sol[..self.n_vel_free], self.sp.n_velocity_dofs());
        let p = self.sp.pressure_free.prolong(&sol[self.n_vel_free..], self.sp.n_pressure_dofs());
        Ok((u, p))
    }

    /// Riesz representative of a velocity functional on the homogeneous
    /// solenoidal space and the squared dual norm `r' A^{-1} r`.
    pub fn riesz_velocity(&self, r: &[f64]) -> Result<(Vec<f64>, f64)> {
        let zero_p = vec![0.0; self.sp.n_pressure_dofs()];
        let (lambda, _) = self.solve_a_saddle(r, &zero_p)?;
        let norm_sq = lambda.iter().zip(r).map(|(a, b)| a * b).sum();
        Ok((lambda, norm_sq))
    }

    /// Riesz representative on the homogeneous scalar space for the
    /// stiffness duality map and the squared dual norm `r' K^{-1} r`.
    pub fn riesz_scalar(&self, r: &[f64]) -> Result<(Vec<f64>, f64)> {
        let phi = self.stream.poisson_homogeneous(&self.sp, r)?;
        let norm_sq = phi.iter().zip(r).map(|(a, b)| a * b).sum();
        Ok((phi, norm_sq))
    }

    pub fn l2_norm_sq_scalar_qp(&self, vals: &[f64]) -> f64 {
        quad_weights(&self.sp).iter().zip(vals).map(|(w, v)| w * v * v).sum()
    }

    pub fn l2_norm_sq_vec_qp(&self, vals: &[[f64; 2]]) -> f64 {
        quad_weights(&self.sp)
            .iter()
            .zip(vals)
            .map(|(w, v)| w * (v[0] * v[0] + v[1] * v[1]))
            .sum()
    }

    /// H1 norm of a velocity coefficient vector.
    pub fn h1_norm_velocity(&self, u: &[f64]) -> f64 {
        self.h1_v.matrix.matvec(u).iter().zip(u).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// H1 norm of a scalar coefficient vector.
    pub fn h1_norm_scalar(&self, w: &[f64]) -> f64 {
        self.h1_s.matrix.matvec(w).iter().zip(w).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// Trace of a full velocity vector on the GammaNotG2 nodes,
    /// interleaved Cartesian components.
    pub fn trace_not_g2(&self, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.hn_not_g2.nodes.len());
        for &node in &self.hn_not_g2.nodes {
            let v = self.sp.node_velocity(u, node);
            out.push(v[0]);
            out.push(v[1]);
        }
        out
    }

    /// Trace of a full scalar vector on the whole boundary node set.
    pub fn trace_gamma(&self, w: &[f64]) -> Vec<f64> {
        self.hn_gamma.nodes.iter().map(|&n| w[n]).collect()
    }

    /// Data aggregate Theta: `|u_d|_(1/2) |w_d|_(1/2) + |u_d|_(1/2)
    /// + |w_d|_(1/2) + |u_d|^2_(1/2) + |f| + |g|`.
    pub fn theta_bound(&self, controls: &ControlPair) -> f64 {
        let du = self.dirichlet_velocity(controls);
        let dw = self.dirichlet_rotation(controls);
        let a = self.hn_not_g2.norm_sq_vec(&self.trace_not_g2(&du)).max(0.0).sqrt();
        let b = self.hn_gamma.norm_sq(&self.trace_gamma(&dw)).max(0.0).sqrt();
        let fq: Vec<[f64; 2]> = self.f_qp.0.clone();
        let f_norm = self.l2_norm_sq_vec_qp(&fq).sqrt();
        let g_norm = self.l2_norm_sq_scalar_qp(&self.g_qp.0).sqrt();
        a * b + a + b + a * a + f_norm + g_norm
    }

    /// Empirical constants for the viscosity-condition advisory:
    /// a Poincare constant on the scalar space and a Korn-type constant
    /// on the homogeneous velocity space, both by power iteration.
    pub fn advisory_constants(&self) -> Result<(f64, f64)> {
        // Poincare: largest eigenvalue of K^{-1} M on interior scalars
        let mut z = vec![1.0; self.sp.scalar_interior.len()];
        let mut lam_p = 0.0;
        for _ in 0..25 {
            let full = self.sp.scalar_interior.prolong(&z, self.sp.n_nodes);
            let mz = self.mass_s.matrix.matvec(&full);
            let sol = self.stream.poisson_homogeneous(&self.sp, &mz)?;
            let red = self.sp.scalar_interior.restrict(&sol);
            let nrm = red.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm == 0.0 {
                break;
            }
            lam_p = nrm;
            z = red.iter().map(|v| v / nrm).collect();
        }
        // Korn-type: sup |grad v|^2 / <A0 v, v> over the homogeneous space,
        // via the saddle solve (stays in the solenoidal subspace)
        let nf = self.sp.vel_free_state.len();
        let mut v = vec![1.0; nf];
        let mut lam_k = 1.0;
        for _ in 0..25 {
            let full = self.sp.vel_free_state.prolong(&v, self.sp.n_velocity_dofs());
            let h1 = self.h1_v.matrix.matvec(&full);
            let m = self.mass_v.matrix.matvec(&full);
            let grad: Vec<f64> = h1.iter().zip(&m).map(|(a, b)| a - b).collect();
            let zero_p = vec![0.0; self.sp.n_pressure_dofs()];
            let (sol, _) = self.solve_a_saddle(&grad, &zero_p)?;
            let red = self.sp.vel_free_state.restrict(&sol);
            let nrm = red.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm == 0.0 {
                break;
            }
            lam_k = nrm;
            v = red.iter().map(|x| x / nrm).collect();
        }
        Ok((lam_p.sqrt(), lam_k.sqrt()))
    }

    /// Evaluates the advisory viscosity condition; returns `None` when
    /// satisfied, or a diagnostic message otherwise.
    pub fn check_viscosity_condition(&self, controls: &ControlPair) -> Result<Option<String>> {
        let (c_p, c_k) = self.advisory_constants()?;
        let c = 2.0 * std::f64::consts::SQRT_2 * c_p.max(1.0) * c_k.max(1.0);
        let c_eta = self.profile.max_value();
        let dw = self.dirichlet_rotation(controls);
        let wg2 = self.hn_gamma.norm_sq(&self.trace_gamma(&dw)).max(0.0).sqrt();
        let lhs1 = 2.0 * self.params.mu1 - c_eta * c * wg2 - self.params.mur * c;
        let lhs2 = self.params.mu2 - self.params.mur * c;
        if lhs1 > 0.0 && lhs2 > 0.0 {
            Ok(None)
        } else {
            Ok(Some(format!(
                "viscosity condition advisory: min(2*mu1 - C_eta*C*|w_g2| - mur*C, mu2 - mur*C) = min({lhs1:.3e}, {lhs2:.3e}) <= 0 (C = {c:.3e})"
            )))
        }
    }

    /// Density and its derivative at quadrature points for a stream field.
    pub fn density_at_qp(&self, psi: &[f64]) -> (QuadField1, QuadField1) {
        crate::density::evaluate_density(&self.sp, &self.profile, psi)
    }

    /// Pressure values at the volume quadrature points (P1 basis).
    pub fn pressure_at_qp(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.sp.n_quad()];
        for t in 0..self.sp.mesh.n_triangles() {
            let tri = self.sp.mesh.triangles[t];
            for (q, &(x, y, _)) in crate::quadrature::TRI_QP.iter().enumerate() {
                let sh = crate::quadrature::p1_shape(x, y);
                out[6 * t + q] = sh[0] * p[tri[0]] + sh[1] * p[tri[1]] + sh[2] * p[tri[2]];
            }
        }
        out
    }

    /// Subtracts the domain mean from a pressure vector.
    pub fn normalize_pressure(&self, p: &mut [f64]) {
        let vals = self.pressure_at_qp(p);
        let wq = quad_weights(&self.sp);
        let area: f64 = wq.iter().sum();
        let mean: f64 = wq.iter().zip(&vals).map(|(w, v)| w * v).sum::<f64>() / area;
        for v in p.iter_mut() {
            *v -= mean;
        }
    }

    /// Rot of a velocity field at quadrature points.
    pub fn rot_qp(&self, u: &[f64]) -> Vec<f64> {
        let (_, gu) = eval_velocity(&self.sp, u);
        rot_at_qp(&gu)
    }

    pub fn quad_points(&self) -> Vec<[f64; 2]> {
        quad_points(&self.sp)
    }
}
