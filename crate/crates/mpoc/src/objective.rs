//! The tracking objective and the penalized functional.
//!
//! The objective J carries four quadratic tracking terms (vorticity,
//! velocity, microrotation, density) plus the boundary-control costs in
//! the discrete `H^{1/2}` extension norms. The penalized functional adds
//! anchor distances and the state-equation and boundary mismatches in
//! dual / trace norms weighted by `1/(2 eps)`; its multipliers are the
//! Riesz representatives of the scaled residuals.

use crate::assemble::{
    assemble_load_scalar, assemble_load_velocity, assemble_transport_scal, assemble_transport_vec,
    eval_scalar, eval_velocity, quad_weights, QuadField1, QuadField2,
};
use crate::control::ControlPair;
use crate::error::Result;
use crate::problem::{Discretization, Targets};
use crate::state::StateSolution;
use crate::stream::psi_boundary_values;

/// The six weighted addends of the objective and their sum.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveBreakdown {
    /// (b1/2)|rot u|^2, (b2/2)|u-ud|^2, (b3/2)|w-wd|^2, (b4/2)|rho-rhod|^2,
    /// (b5/2)|g1|^2 on G1, (b6/2)|g2|^2 on G3.
    pub addends: [f64; 6],
    pub total: f64,
}

impl ObjectiveBreakdown {
    fn from_addends(addends: [f64; 6]) -> Self {
        Self { addends, total: addends.iter().sum() }
    }
}

/// Objective at explicit field data (velocity and rotation coefficients
/// plus the density at quadrature points).
pub fn evaluate_j_fields(
    dz: &Discretization,
    u: &[f64],
    w: &[f64],
    rho: &QuadField1,
    controls: &ControlPair,
    targets: &Targets,
) -> ObjectiveBreakdown {
    let beta = dz.params.beta;
    let wq = quad_weights(&dz.sp);
    let (uq, gu) = eval_velocity(&dz.sp, u);
    let (wv, _) = eval_scalar(&dz.sp, w);
    let mut t = [0.0; 6];
    for k in 0..dz.sp.n_quad() {
        let rot = gu[k][1][0] - gu[k][0][1];
        let du = [uq[k][0] - targets.ud.0[k][0], uq[k][1] - targets.ud.0[k][1]];
        let dw = wv[k] - targets.wd.0[k];
        let drho = rho.0[k] - targets.rhod.0[k];
        t[0] += wq[k] * rot * rot;
        t[1] += wq[k] * (du[0] * du[0] + du[1] * du[1]);
        t[2] += wq[k] * dw * dw;
        t[3] += wq[k] * drho * drho;
    }
    t[4] = dz.hn_g1.norm_sq_vec(&controls.g1);
    t[5] = dz.hn_g3.norm_sq(&controls.g2);
    let addends = [
        0.5 * beta[0] * t[0],
        0.5 * beta[1] * t[1],
        0.5 * beta[2] * t[2],
        0.5 * beta[3] * t[3],
        0.5 * beta[4] * t[4],
        0.5 * beta[5] * t[5],
    ];
    ObjectiveBreakdown::from_addends(addends)
}

/// Objective at a solved state.
pub fn evaluate_j(
    dz: &Discretization,
    state: &StateSolution,
    controls: &ControlPair,
    targets: &Targets,
) -> ObjectiveBreakdown {
    evaluate_j_fields(dz, &state.u.data, &state.w.data, &state.rho, controls, targets)
}

/// Momentum residual functional of a candidate over the full velocity
/// DOFs (dual pairing is taken against the homogeneous solenoidal space).
pub fn momentum_residual(dz: &Discretization, u: &[f64], w: &[f64], rho: &QuadField1) -> Vec<f64> {
    let p = &dz.params;
    let (a_vals, _) = eval_velocity(&dz.sp, u);
    let a_qp = QuadField2(a_vals);
    let transport = assemble_transport_vec(&dz.sp, rho, &a_qp);
    let visc = dz.a0.matrix.matvec(u);
    let conv = transport.matrix.matvec(u);
    let rotw = dz.rot_vw.matrix.matvec(w);
    let load = assemble_load_velocity(&dz.sp, rho, &dz.f_qp);
    (0..dz.sp.n_velocity_dofs())
        .map(|i| p.mu1 * visc[i] + conv[i] - 2.0 * p.mur * rotw[i] - load[i])
        .collect()
}

/// Rotation residual functional of a candidate over the full scalar DOFs.
pub fn rotation_residual(dz: &Discretization, u: &[f64], w: &[f64], rho: &QuadField1) -> Vec<f64> {
    let p = &dz.params;
    let (a_vals, _) = eval_velocity(&dz.sp, u);
    let a_qp = QuadField2(a_vals);
    let transport = assemble_transport_scal(&dz.sp, rho, &a_qp);
    let stiff = dz.stream.stiffness.matrix.matvec(w);
    let conv = transport.matrix.matvec(w);
    let mass = dz.mass_s.matrix.matvec(w);
    let rotu = dz.stream.rot_sv.matrix.matvec(u);
    let load = assemble_load_scalar(&dz.sp, rho, &dz.g_qp);
    (0..dz.sp.n_nodes)
        .map(|i| p.mu2 * stiff[i] + conv[i] + 4.0 * p.mur * mass[i] - 2.0 * p.mur * rotu[i] - load[i])
        .collect()
}

/// A candidate point of the penalized problem: arbitrary fields plus
/// controls (the fields need not solve the state system).
pub struct Candidate {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub controls: ControlPair,
}

/// Anchor (reference optimum) for the penalized functional.
pub struct Anchor {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

/// Penalty multipliers: Riesz representatives of the scaled residuals
/// and the scaled boundary mismatches.
pub struct PenaltyMultipliers {
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
    /// (1/eps) * (trace of u minus Dirichlet data) on GammaNotG2 nodes,
    /// interleaved components.
    pub xi: Vec<f64>,
    /// (1/eps) * (trace of w minus Dirichlet data) on the boundary nodes.
    pub theta: Vec<f64>,
    /// Squared dual norms of the two residuals and squared trace
    /// mismatch norms (for reuse in the functional value).
    pub mom_dual_sq: f64,
    pub rot_dual_sq: f64,
    pub trace_u_sq: f64,
    pub trace_w_sq: f64,
}

/// Evaluates the four multiplier formulas at a candidate.
pub fn compute_penalty_multipliers(
    dz: &Discretization,
    cand: &Candidate,
    eps: f64,
) -> Result<(PenaltyMultipliers, QuadField1, QuadField1)> {
    let bc = psi_boundary_values(&dz.sp, &dz.flux_map, &cand.u)?;
    let psi = dz.stream.solve(&dz.sp, &cand.u, &bc)?;
    let (rho, drho) = dz.density_at_qp(&psi.psi);

    let r_m = momentum_residual(dz, &cand.u, &cand.w, &rho);
    let (lam_raw, mom_dual_sq) = dz.riesz_velocity(&r_m)?;
    let r_w = rotation_residual(dz, &cand.u, &cand.w, &rho);
    let (phi_raw, rot_dual_sq) = dz.riesz_scalar(&r_w)?;

    let d_u = dz.dirichlet_velocity(&cand.controls);
    let mismatch_u: Vec<f64> = {
        let tu = dz.trace_not_g2(&cand.u);
        let td = dz.trace_not_g2(&d_u);
        tu.iter().zip(&td).map(|(a, b)| a - b).collect()
    };
    let d_w = dz.dirichlet_rotation(&cand.controls);
    let mismatch_w: Vec<f64> = dz
        .hn_gamma
        .nodes
        .iter()
        .map(|&n| cand.w[n] - d_w[n])
        .collect();
    let trace_u_sq = dz.hn_not_g2.norm_sq_vec(&mismatch_u);
    let trace_w_sq = dz.hn_gamma.norm_sq(&mismatch_w);

    let inv = 1.0 / eps;
    let mults = PenaltyMultipliers {
        lambda: lam_raw.iter().map(|v| inv * v).collect(),
        phi: phi_raw.iter().map(|v| inv * v).collect(),
        xi: mismatch_u.iter().map(|v| inv * v).collect(),
        theta: mismatch_w.iter().map(|v| inv * v).collect(),
        mom_dual_sq,
        rot_dual_sq,
        trace_u_sq,
        trace_w_sq,
    };
    Ok((mults, rho, drho))
}

/// Value of the penalized functional at a candidate.
pub fn evaluate_j_eps(
    dz: &Discretization,
    cand: &Candidate,
    targets: &Targets,
    eps: f64,
    anchor: &Anchor,
) -> Result<f64> {
    let (mults, rho, _) = compute_penalty_multipliers(dz, cand, eps)?;
    let j = evaluate_j_fields(dz, &cand.u, &cand.w, &rho, &cand.controls, targets);
    Ok(j.total + penalty_terms(dz, cand, eps, anchor, &mults))
}

/// The penalty addends given precomputed multipliers (all nonnegative).
pub fn penalty_terms(
    dz: &Discretization,
    cand: &Candidate,
    eps: f64,
    anchor: &Anchor,
    mults: &PenaltyMultipliers,
) -> f64 {
    let du: Vec<f64> = cand.u.iter().zip(&anchor.u).map(|(a, b)| a - b).collect();
    let dw: Vec<f64> = cand.w.iter().zip(&anchor.w).map(|(a, b)| a - b).collect();
    let dg1: Vec<f64> = cand.controls.g1.iter().zip(&anchor.g1).map(|(a, b)| a - b).collect();
    let dg2: Vec<f64> = cand.controls.g2.iter().zip(&anchor.g2).map(|(a, b)| a - b).collect();
    let anchor_dist = 0.5
        * (dz.h1_norm_velocity(&du).powi(2)
            + dz.h1_norm_scalar(&dw).powi(2)
            + dz.hn_g1.norm_sq_vec(&dg1)
            + dz.hn_g3.norm_sq(&dg2));
    let residual_pen = 0.5 / eps * (mults.mom_dual_sq + mults.rot_dual_sq);
    let trace_pen = 0.5 / eps * (mults.trace_u_sq + mults.trace_w_sq);
    anchor_dist + residual_pen + trace_pen
}
