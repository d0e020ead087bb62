//! The adjoint system and multiplier recovery.
//!
//! The linearized state operator is assembled as a bordered sparse
//! system over (velocity, pressure, rotation, stream) unknowns: the
//! stream variable carries the density chain `rho = eta(psi)`, which
//! keeps the nonlocal density-derivative couplings sparse (one extra
//! Poisson block instead of dense operator compositions). The adjoint
//! matrix is the exact transpose, assembled by the same block walk, so
//! duality holds to machine precision. The boundary multipliers xi and
//! theta are recovered as total derivatives of the Lagrangian with
//! respect to Dirichlet boundary values, including the arc-length flux
//! chain through the stream boundary data.

use crate::assemble::{
    assemble_conv_jacobian_scal, assemble_conv_jacobian_vec, assemble_load_scalar,
    assemble_load_velocity, assemble_rot_load, assemble_stream_coupling_rot,
    assemble_stream_coupling_vel, assemble_transport_scal, eval_scalar, eval_velocity,
    AssembledOperator, QuadField1, QuadField2,
};
use crate::error::{Error, Result};
use crate::linalg::{factorize, SparseMatrix, TripletList};
use crate::problem::{Discretization, Targets};
use crate::spaces::{DofSet, FieldVector, SpaceId};
use crate::state::StateSolution;

/// State-dependent linearization blocks at a (u, w, rho) triple.
pub struct Linearization {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub rho: QuadField1,
    pub drho: QuadField1,
    /// Skew scalar transport at (u, rho).
    pub transport_s: AssembledOperator,
    /// d/dU of the skew vector transport (momentum rows, velocity cols).
    pub conv_jac_v: AssembledOperator,
    /// d/dU of the skew scalar transport (rotation rows, velocity cols).
    pub conv_jac_s: AssembledOperator,
    /// Density-derivative moments of the momentum residual
    /// (stream rows, velocity cols).
    pub w_lambda: AssembledOperator,
    /// Density-derivative moments of the rotation residual
    /// (stream rows, rotation cols).
    pub w_phi: AssembledOperator,
}

impl Linearization {
    pub fn at(dz: &Discretization, u: &[f64], w: &[f64], rho: &QuadField1, drho: &QuadField1) -> Self {
        let sp = &dz.sp;
        let (uq, gu) = eval_velocity(sp, u);
        let (wv, gw) = eval_scalar(sp, w);
        let uq = QuadField2(uq);
        let wv = QuadField1(wv);
        let transport_s = assemble_transport_scal(sp, rho, &uq);
        let conv_jac_v = assemble_conv_jacobian_vec(sp, rho, &uq, &gu);
        let conv_jac_s = assemble_conv_jacobian_scal(sp, rho, &wv, &gw);
        let w_lambda = assemble_stream_coupling_vel(sp, drho, &uq, &gu, &dz.f_qp);
        let w_phi = assemble_stream_coupling_rot(sp, drho, &uq, &wv, &gw, &dz.g_qp);
        Self {
            u: u.to_vec(),
            w: w.to_vec(),
            rho: rho.clone(),
            drho: drho.clone(),
            transport_s,
            conv_jac_v,
            conv_jac_s,
            w_lambda,
            w_phi,
        }
    }
}

/// Block offsets of the bordered system.
pub struct BorderedLayout {
    pub nf: usize,
    pub np: usize,
    pub nw: usize,
    pub ns: usize,
}

impl BorderedLayout {
    pub fn of(dz: &Discretization) -> Self {
        Self {
            nf: dz.sp.vel_free_state.len(),
            np: dz.sp.pressure_free.len(),
            nw: dz.sp.scalar_interior.len(),
            ns: dz.sp.scalar_interior.len(),
        }
    }

    pub fn total(&self) -> usize {
        self.nf + self.np + self.nw + self.ns
    }

    pub fn p_off(&self) -> usize {
        self.nf
    }

    pub fn w_off(&self) -> usize {
        self.nf + self.np
    }

    pub fn s_off(&self) -> usize {
        self.nf + self.np + self.nw
    }
}

fn emit_block(
    push: &mut dyn FnMut(usize, usize, f64),
    m: &SparseMatrix,
    rows: &DofSet,
    cols: &DofSet,
    row_off: usize,
    col_off: usize,
    scale: f64,
    transpose_block: bool,
) {
    for (ri, &full_r) in rows.red_to_full.iter().enumerate() {
        let (cidx, vals) = m.row(full_r);
        for (&j, &v) in cidx.iter().zip(vals) {
            if let Some(cj) = cols.full_to_red[j] {
                if transpose_block {
                    push(row_off + cj, col_off + ri, scale * v);
                } else {
                    push(row_off + ri, col_off + cj, scale * v);
                }
            }
        }
    }
}

/// Assembles the bordered linearized state operator (`transposed =
/// false`) or its exact transpose, the adjoint matrix (`transposed =
/// true`). Unknown order: velocity, pressure, rotation, stream.
pub fn assemble_bordered_jacobian(dz: &Discretization, lin: &Linearization, transposed: bool) -> SparseMatrix {
    let lay = BorderedLayout::of(dz);
    let n = lay.total();
    let sp = &dz.sp;
    let p = &dz.params;
    let vel = &sp.vel_free_state;
    let prs = &sp.pressure_free;
    let int = &sp.scalar_interior;
    let (v_off, p_off, w_off, s_off) = (0usize, lay.p_off(), lay.w_off(), lay.s_off());

    let mut trips = TripletList::new(n, n);
    {
        let mut push = |r: usize, c: usize, v: f64| {
            if transposed {
                trips.push(c, r, v);
            } else {
                trips.push(r, c, v);
            }
        };
        // momentum rows
        emit_block(&mut push, &dz.a0.matrix, vel, vel, v_off, v_off, p.mu1, false);
        emit_block(&mut push, &lin.conv_jac_v.matrix, vel, vel, v_off, v_off, 1.0, false);
        // pressure gradient: transpose of the divergence block
        emit_block(&mut push, &dz.div.matrix, prs, vel, v_off, p_off, 1.0, true);
        emit_block(&mut push, &dz.rot_vw.matrix, vel, int, v_off, w_off, -2.0 * p.mur, false);
        // density chain: (q_lambda(.), theta_s) moments enter transposed
        emit_block(&mut push, &lin.w_lambda.matrix, int, vel, v_off, s_off, 1.0, true);
        // continuity rows
        emit_block(&mut push, &dz.div.matrix, prs, vel, p_off, v_off, 1.0, false);
        // rotation rows
        emit_block(&mut push, &lin.conv_jac_s.matrix, int, vel, w_off, v_off, 1.0, false);
        emit_block(&mut push, &dz.stream.rot_sv.matrix, int, vel, w_off, v_off, -2.0 * p.mur, false);
        emit_block(&mut push, &dz.stream.stiffness.matrix, int, int, w_off, w_off, p.mu2, false);
        emit_block(&mut push, &lin.transport_s.matrix, int, int, w_off, w_off, 1.0, false);
        emit_block(&mut push, &dz.mass_s.matrix, int, int, w_off, w_off, 4.0 * p.mur, false);
        emit_block(&mut push, &lin.w_phi.matrix, int, int, w_off, s_off, 1.0, true);
        // stream rows
        emit_block(&mut push, &dz.stream.rot_sv.matrix, int, vel, s_off, v_off, -1.0, false);
        emit_block(&mut push, &dz.stream.stiffness.matrix, int, int, s_off, s_off, 1.0, false);
    }
    trips.finalize()
}

/// Multipliers of the optimality system (with the qualification
/// normalization `lambda0 = 1`).
pub struct AdjointSolution {
    pub lambda: FieldVector,
    pub pi: FieldVector,
    pub phi: FieldVector,
    /// Stream-adjoint auxiliary field (homogeneous Dirichlet).
    pub zeta: FieldVector,
    /// Boundary multiplier on GammaNotG2 nodes, interleaved components.
    pub xi: Vec<f64>,
    /// Boundary multiplier on the whole boundary node set.
    pub theta: Vec<f64>,
    pub lambda0: f64,
}

/// Objective-gradient loads at a state (the adjoint right-hand side).
pub struct ObjectiveLoads {
    /// Velocity load: beta1 (rot u, rot v) + beta2 (u - ud, v).
    pub vel: Vec<f64>,
    /// Rotation load: beta3 (w - wd, z).
    pub rot: Vec<f64>,
    /// Moments of q_J = beta4 eta'(psi) (eta(psi) - rhod).
    pub stream_moments: Vec<f64>,
}

pub fn objective_loads(
    dz: &Discretization,
    u: &[f64],
    w: &[f64],
    rho: &QuadField1,
    drho: &QuadField1,
    targets: &Targets,
) -> ObjectiveLoads {
    let sp = &dz.sp;
    let beta = dz.params.beta;
    let ones = QuadField1::constant(sp, 1.0);
    let (uq, gu) = eval_velocity(sp, u);
    let rot_qp = QuadField1(gu.iter().map(|g| beta[0] * (g[1][0] - g[0][1])).collect());
    let mut vel = assemble_rot_load(sp, &rot_qp);
    let mis_u = QuadField2(
        uq.iter()
            .zip(&targets.ud.0)
            .map(|(a, b)| [beta[1] * (a[0] - b[0]), beta[1] * (a[1] - b[1])])
            .collect(),
    );
    for (o, l) in vel.iter_mut().zip(assemble_load_velocity(sp, &ones, &mis_u)) {
        *o += l;
    }
    let (wv, _) = eval_scalar(sp, w);
    let mis_w = QuadField1(wv.iter().zip(&targets.wd.0).map(|(a, b)| beta[2] * (a - b)).collect());
    let rot = assemble_load_scalar(sp, &ones, &mis_w);
    let qj = QuadField1(
        rho.0
            .iter()
            .zip(&drho.0)
            .zip(&targets.rhod.0)
            .map(|((r, dr), rd)| beta[3] * dr * (r - rd))
            .collect(),
    );
    let stream_moments = assemble_load_scalar(sp, &ones, &qj);
    ObjectiveLoads { vel, rot, stream_moments }
}

/// Total derivative of the Lagrangian with respect to every velocity
/// DOF, including the stream-boundary chain (psi boundary data depends
/// on the velocity trace through the arc-length flux integral).
///
/// At free DOFs this vanishes when the multipliers solve the adjoint
/// system; at Dirichlet DOFs it is minus the boundary multiplier xi.
pub fn velocity_total_derivative(
    dz: &Discretization,
    lin: &Linearization,
    lambda: &[f64],
    pi: Option<&[f64]>,
    phi: &[f64],
    zeta: &[f64],
    stream_moments: &[f64],
    jload_vel: &[f64],
) -> Vec<f64> {
    let p = &dz.params;
    let mut out = jload_vel.to_vec();
    let a_lam = dz.a0.matrix.matvec(lambda);
    let cj_lam = lin.conv_jac_v.matrix.matvec_transpose(lambda);
    for i in 0..out.len() {
        out[i] += p.mu1 * a_lam[i] + cj_lam[i];
    }
    if let Some(pi) = pi {
        for (o, v) in out.iter_mut().zip(dz.div.matrix.matvec_transpose(pi)) {
            *o += v;
        }
    }
    let cjs_phi = lin.conv_jac_s.matrix.matvec_transpose(phi);
    let rot_phi = dz.stream.rot_sv.matrix.matvec_transpose(phi);
    let rot_zeta = dz.stream.rot_sv.matrix.matvec_transpose(zeta);
    for i in 0..out.len() {
        out[i] += cjs_phi[i] - 2.0 * p.mur * rot_phi[i] - rot_zeta[i];
    }
    // stream-boundary chain: omega = moments of the full density-derivative
    // pairing plus the stiffness action on zeta; zero at interior nodes by
    // the zeta equation, so only the boundary weights act
    let mut omega = lin.w_lambda.matrix.matvec(lambda);
    for (o, v) in omega.iter_mut().zip(lin.w_phi.matrix.matvec(phi)) {
        *o += v;
    }
    for (o, v) in omega.iter_mut().zip(stream_moments) {
        *o += v;
    }
    for (o, v) in omega.iter_mut().zip(dz.stream.stiffness.matrix.matvec(zeta)) {
        *o += v;
    }
    let weights: Vec<f64> = dz.sp.boundary_nodes.iter().map(|&n| omega[n]).collect();
    for (o, v) in out.iter_mut().zip(dz.flux_map.adjoint(&dz.sp, &weights)) {
        *o += v;
    }
    out
}

/// Solves the auxiliary stream-adjoint equation for given multipliers:
/// `L zeta = -(W_lambda lambda + W_phi phi + stream_moments)` on the
/// interior (the same equation the bordered adjoint solve enforces).
pub fn solve_zeta(
    dz: &Discretization,
    lin: &Linearization,
    lambda: &[f64],
    phi: &[f64],
    stream_moments: &[f64],
) -> Result<Vec<f64>> {
    let mut m = lin.w_lambda.matrix.matvec(lambda);
    for (o, v) in m.iter_mut().zip(lin.w_phi.matrix.matvec(phi)) {
        *o += v;
    }
    for (o, v) in m.iter_mut().zip(stream_moments) {
        *o += v;
    }
    for v in m.iter_mut() {
        *v = -*v;
    }
    dz.stream.poisson_homogeneous(&dz.sp, &m)
}

/// Total derivative of the Lagrangian with respect to every rotation DOF.
pub fn rotation_total_derivative(
    dz: &Discretization,
    lin: &Linearization,
    lambda: &[f64],
    phi: &[f64],
    jload_rot: &[f64],
) -> Vec<f64> {
    let p = &dz.params;
    let mut out = jload_rot.to_vec();
    let rvw_lam = dz.rot_vw.matrix.matvec_transpose(lambda);
    let k_phi = dz.stream.stiffness.matrix.matvec(phi);
    let c_phi = lin.transport_s.matrix.matvec_transpose(phi);
    let m_phi = dz.mass_s.matrix.matvec(phi);
    for i in 0..out.len() {
        out[i] += -2.0 * p.mur * rvw_lam[i] + p.mu2 * k_phi[i] + c_phi[i] + 4.0 * p.mur * m_phi[i];
    }
    out
}

/// Solves the coupled adjoint system at a converged state and recovers
/// the boundary multipliers.
pub fn solve_adjoint(dz: &Discretization, state: &StateSolution, targets: &Targets) -> Result<AdjointSolution> {
    let sp = &dz.sp;
    let lin = Linearization::at(dz, &state.u.data, &state.w.data, &state.rho, &state.drho);
    let loads = objective_loads(dz, &state.u.data, &state.w.data, &state.rho, &state.drho, targets);

    let m = assemble_bordered_jacobian(dz, &lin, true);
    let fact = factorize(&m).map_err(|e| match e {
        Error::SingularPivot(_) | Error::LinearSolve(_) => Error::Numerical(
            "adjoint system singular: the viscosity condition of the qualification corollary is likely violated"
                .into(),
        ),
        other => other,
    })?;

    let lay = BorderedLayout::of(dz);
    let mut rhs = vec![0.0; lay.total()];
    for (k, &i) in sp.vel_free_state.red_to_full.iter().enumerate() {
        rhs[k] = -loads.vel[i];
    }
    for (k, &i) in sp.scalar_interior.red_to_full.iter().enumerate() {
        rhs[lay.w_off() + k] = -loads.rot[i];
        rhs[lay.s_off() + k] = -loads.stream_moments[i];
    }
    let sol = fact.solve(&rhs)?;
    if fact.last_residual() > 1e-9 {
        return Err(Error::Numerical(format!(
            "adjoint solve residual {:.3e} above tolerance",
            fact.last_residual()
        )));
    }

    let lambda = sp.vel_free_state.prolong(&sol[..lay.nf], sp.n_velocity_dofs());
    let pi = sp.pressure_free.prolong(&sol[lay.p_off()..lay.w_off()], sp.n_pressure_dofs());
    let phi = sp.scalar_interior.prolong(&sol[lay.w_off()..lay.s_off()], sp.n_nodes);
    let zeta = sp.scalar_interior.prolong(&sol[lay.s_off()..], sp.n_nodes);

    let dvel = velocity_total_derivative(dz, &lin, &lambda, Some(&pi), &phi, &zeta, &loads.stream_moments, &loads.vel);
    let xi: Vec<f64> = dz
        .hn_not_g2
        .nodes
        .iter()
        .flat_map(|&n| [-dvel[2 * n], -dvel[2 * n + 1]])
        .collect();
    let drot = rotation_total_derivative(dz, &lin, &lambda, &phi, &loads.rot);
    let theta: Vec<f64> = dz.hn_gamma.nodes.iter().map(|&n| -drot[n]).collect();

    Ok(AdjointSolution {
        lambda: FieldVector { space: SpaceId::Velocity, data: lambda },
        pi: FieldVector { space: SpaceId::Pressure, data: pi },
        phi: FieldVector { space: SpaceId::Scalar, data: phi },
        zeta: FieldVector { space: SpaceId::Scalar, data: zeta },
        xi,
        theta,
        lambda0: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlPair;
    use crate::objective::{momentum_residual, rotation_residual};
    use crate::problem::{Discretization, ModelParams};
    use crate::samples;
    use crate::state::{balance_flux, solve_state, SolveOpts};
    use crate::stream::psi_boundary_values;
    use std::sync::Arc;

    fn variable_density_setup(levels: usize) -> (Discretization, ControlPair) {
        let mut params = ModelParams::base();
        params.mu1 = 2.0;
        params.mu2 = 2.0;
        params.mur = 0.3;
        params.beta = [0.2, 1.0, 0.8, 0.7, 0.3, 0.3];
        params.f = Arc::new(|x, y| [0.3 * y, 0.2 * x]);
        params.g = Arc::new(|x, y| 0.4 * x - 0.1 * y);
        params.u0 = Arc::new(|_, _, s: f64| [-2.0 * s * (1.0 - s), 0.4 * s * (1.0 - s)]);
        params.w0 = Arc::new(|_, _, s: f64| 0.3 * s * (1.0 - s));
        params.rho0 = Arc::new(|_, _, s: f64| 1.0 + 0.4 * s);
        let dz = Discretization::new(Arc::new(samples::square_dirichlet(levels)), params).unwrap();
        let mut controls = dz.zero_controls(10.0, 10.0);
        balance_flux(&dz, &mut controls);
        for (k, v) in controls.g2.iter_mut().enumerate() {
            *v = 0.05 * ((k % 3) as f64 - 1.0);
        }
        (dz, controls)
    }

    /// The state residual of the bordered formulation at a perturbed
    /// point: psi interior is an independent unknown, the boundary trace
    /// follows the velocity through the flux map.
    fn bordered_residual(dz: &Discretization, controls: &ControlPair, x: &[f64]) -> Vec<f64> {
        let sp = &dz.sp;
        let lay = BorderedLayout::of(dz);
        let mut u = dz.dirichlet_velocity(controls);
        for (k, &i) in sp.vel_free_state.red_to_full.iter().enumerate() {
            u[i] += x[k];
        }
        let p = sp.pressure_free.prolong(&x[lay.p_off()..lay.w_off()], sp.n_pressure_dofs());
        let mut w = dz.dirichlet_rotation(controls);
        for (k, &i) in sp.scalar_interior.red_to_full.iter().enumerate() {
            w[i] += x[lay.w_off() + k];
        }
        let (bc, _) = dz.flux_map.psi_values(sp, &u);
        let mut psi = vec![0.0; sp.n_nodes];
        for (k, &n) in sp.boundary_nodes.iter().enumerate() {
            psi[n] = bc[k];
        }
        for (k, &i) in sp.scalar_interior.red_to_full.iter().enumerate() {
            psi[i] = x[lay.s_off() + k];
        }
        let (rho, _) = dz.density_at_qp(&psi);

        let rm = momentum_residual(dz, &u, &w, &rho);
        let pterm = dz.div.matrix.matvec_transpose(&p);
        let rw = rotation_residual(dz, &u, &w, &rho);
        let rc = dz.div.matrix.matvec(&u);
        let lpsi = dz.stream.stiffness.matrix.matvec(&psi);
        let rot_u = dz.stream.rot_sv.matrix.matvec(&u);

        let mut out = vec![0.0; lay.total()];
        for (k, &i) in sp.vel_free_state.red_to_full.iter().enumerate() {
            out[k] = rm[i] + pterm[i];
        }
        for (k, &i) in sp.pressure_free.red_to_full.iter().enumerate() {
            out[lay.p_off() + k] = rc[i];
        }
        for (k, &i) in sp.scalar_interior.red_to_full.iter().enumerate() {
            out[lay.w_off() + k] = rw[i];
            out[lay.s_off() + k] = lpsi[i] - rot_u[i];
        }
        out
    }

    #[test]
    fn bordered_jacobian_matches_fd_linearization() {
        let (dz, controls) = variable_density_setup(1);
        let st = solve_state(&dz, &controls, &SolveOpts::default()).unwrap();
        let lin = Linearization::at(&dz, &st.u.data, &st.w.data, &st.rho, &st.drho);
        let jac = assemble_bordered_jacobian(&dz, &lin, false);
        let adj = assemble_bordered_jacobian(&dz, &lin, true);
        let lay = BorderedLayout::of(&dz);
        let n = lay.total();

        // base point: the converged state expressed in bordered coordinates
        let mut x0 = vec![0.0; n];
        {
            let sp = &dz.sp;
            let d = dz.dirichlet_velocity(&controls);
            for (k, &i) in sp.vel_free_state.red_to_full.iter().enumerate() {
                x0[k] = st.u.data[i] - d[i];
            }
            // shift the pressure by a constant so the pinned entry is zero
            // (constant shifts do not change the free-row residuals)
            let p0 = st.p.data[sp.pinned_pressure];
            for (k, &i) in sp.pressure_free.red_to_full.iter().enumerate() {
                x0[lay.p_off() + k] = st.p.data[i] - p0;
            }
            let dw = dz.dirichlet_rotation(&controls);
            for (k, &i) in sp.scalar_interior.red_to_full.iter().enumerate() {
                x0[lay.w_off() + k] = st.w.data[i] - dw[i];
                x0[lay.s_off() + k] = st.psi.psi[i];
            }
        }

        let scale = {
            let mut s: f64 = 0.0;
            for i in 0..n {
                let (_, vals) = jac.row(i);
                for v in vals {
                    s = s.max(v.abs());
                }
            }
            s
        };
        // Richardson-extrapolated central differences, column by column
        let h = 1e-4;
        for j in 0..n {
            let col = |hh: f64| -> Vec<f64> {
                let mut xp = x0.clone();
                xp[j] += hh;
                let rp = bordered_residual(&dz, &controls, &xp);
                let mut xm = x0.clone();
                xm[j] -= hh;
                let rm = bordered_residual(&dz, &controls, &xm);
                rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * hh)).collect()
            };
            let d1 = col(h);
            let d2 = col(0.5 * h);
            for i in 0..n {
                let fd = (4.0 * d2[i] - d1[i]) / 3.0;
                let an = jac.get(i, j);
                assert!(
                    (fd - an).abs() <= 1e-9 * scale.max(1.0),
                    "J[{i},{j}]: fd {fd:.3e} vs assembled {an:.3e}"
                );
                // and the adjoint matrix is the transpose (up to duplicate
                // summation order)
                assert!((adj.get(j, i) - an).abs() <= 1e-13 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn adjoint_zero_sources_zero_multipliers() {
        let (dz, controls) = {
            let mut params = ModelParams::base();
            params.beta = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
            params.u0 = Arc::new(|_, _, s: f64| [-s * (1.0 - s), 0.0]);
            let dz = Discretization::new(Arc::new(samples::square_dirichlet(1)), params).unwrap();
            let mut c = dz.zero_controls(10.0, 10.0);
            balance_flux(&dz, &mut c);
            (dz, c)
        };
        let st = solve_state(&dz, &controls, &SolveOpts::default()).unwrap();
        let targets = crate::problem::Targets::zeros(&dz.sp);
        let adj = solve_adjoint(&dz, &st, &targets).unwrap();
        assert!(adj.lambda.data.iter().all(|v| v.abs() < 1e-13));
        assert!(adj.phi.data.iter().all(|v| v.abs() < 1e-13));
        assert!(adj.xi.iter().all(|v| v.abs() < 1e-13));
        assert!(adj.theta.iter().all(|v| v.abs() < 1e-13));
        assert_eq!(adj.lambda0, 1.0);
    }

    #[test]
    fn adjoint_interior_stationarity() {
        // the recovered total derivatives vanish on free DOFs
        let (dz, controls) = variable_density_setup(1);
        let st = solve_state(&dz, &controls, &SolveOpts { tol: 1e-11, ..Default::default() }).unwrap();
        let targets = crate::problem::Targets::from_fns(&dz.sp, |x, y| [y, -x], |x, _| x, |_, y| 1.0 + 0.2 * y);
        let adj = solve_adjoint(&dz, &st, &targets).unwrap();
        let lin = Linearization::at(&dz, &st.u.data, &st.w.data, &st.rho, &st.drho);
        let loads = objective_loads(&dz, &st.u.data, &st.w.data, &st.rho, &st.drho, &targets);
        let dvel = velocity_total_derivative(
            &dz,
            &lin,
            &adj.lambda.data,
            Some(&adj.pi.data),
            &adj.phi.data,
            &adj.zeta.data,
            &loads.stream_moments,
            &loads.vel,
        );
        let scale = dvel.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
        for &i in &dz.sp.vel_free_state.red_to_full {
            assert!(dvel[i].abs() <= 1e-9 * scale, "free DOF {i}: {}", dvel[i]);
        }
        let drot = rotation_total_derivative(&dz, &lin, &adj.lambda.data, &adj.phi.data, &loads.rot);
        let scale_w = drot.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
        for &i in &dz.sp.scalar_interior.red_to_full {
            assert!(drot[i].abs() <= 1e-9 * scale_w, "interior node {i}: {}", drot[i]);
        }
        // the divergence of lambda vanishes weakly (adjoint continuity rows)
        let dl = dz.div.matrix.matvec(&adj.lambda.data);
        for &i in &dz.sp.pressure_free.red_to_full {
            assert!(dl[i].abs() <= 1e-10 * (1.0 + scale));
        }
    }

    #[test]
    fn adjoint_matches_dense_solve() {
        let (dz, controls) = variable_density_setup(1);
        let st = solve_state(&dz, &controls, &SolveOpts::default()).unwrap();
        let targets = crate::problem::Targets::from_fns(&dz.sp, |_, _| [0.1, 0.0], |_, _| 0.05, |_, _| 1.1);
        let adj = solve_adjoint(&dz, &st, &targets).unwrap();

        let lin = Linearization::at(&dz, &st.u.data, &st.w.data, &st.rho, &st.drho);
        let loads = objective_loads(&dz, &st.u.data, &st.w.data, &st.rho, &st.drho, &targets);
        let m = assemble_bordered_jacobian(&dz, &lin, true).to_dense();
        let lay = BorderedLayout::of(&dz);
        let n = lay.total();
        let mut rhs = faer::Mat::<f64>::zeros(n, 1);
        for (k, &i) in dz.sp.vel_free_state.red_to_full.iter().enumerate() {
            rhs[(k, 0)] = -loads.vel[i];
        }
        for (k, &i) in dz.sp.scalar_interior.red_to_full.iter().enumerate() {
            rhs[(lay.w_off() + k, 0)] = -loads.rot[i];
            rhs[(lay.s_off() + k, 0)] = -loads.stream_moments[i];
        }
        let lu = faer::linalg::solvers::PartialPivLu::new(m.as_ref());
        use faer::linalg::solvers::Solve;
        let x = lu.solve(&rhs);
        let lam_dense = dz
            .sp
            .vel_free_state
            .prolong(&(0..lay.nf).map(|k| x[(k, 0)]).collect::<Vec<_>>(), dz.sp.n_velocity_dofs());
        let scale = lam_dense.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-14);
        for (a, b) in adj.lambda.data.iter().zip(&lam_dense) {
            assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn psi_consistency_of_bordered_residual() {
        // at the converged state the bordered residual vanishes
        let (dz, controls) = variable_density_setup(1);
        let st = solve_state(&dz, &controls, &SolveOpts { tol: 1e-12, ..Default::default() }).unwrap();
        let sp = &dz.sp;
        let lay = BorderedLayout::of(&dz);
        let mut x0 = vec![0.0; lay.total()];
        let d = dz.dirichlet_velocity(&controls);
        for (k, &i) in sp.vel_free_state.red_to_full.iter().enumerate() {
            x0[k] = st.u.data[i] - d[i];
        }
        let p0 = st.p.data[sp.pinned_pressure];
        for (k, &i) in sp.pressure_free.red_to_full.iter().enumerate() {
            x0[lay.p_off() + k] = st.p.data[i] - p0;
        }
        let dw = dz.dirichlet_rotation(&controls);
        for (k, &i) in sp.scalar_interior.red_to_full.iter().enumerate() {
            x0[lay.w_off() + k] = st.w.data[i] - dw[i];
            x0[lay.s_off() + k] = st.psi.psi[i];
        }
        let r = bordered_residual(&dz, &controls, &x0);
        let scale = {
            let bc = psi_boundary_values(sp, &dz.flux_map, &st.u.data).unwrap();
            1.0 + bc.iter().map(|v| v.abs()).fold(0.0, f64::max)
        };
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rnorm <= 1e-7 * scale, "residual norm {rnorm}");
    }
}
