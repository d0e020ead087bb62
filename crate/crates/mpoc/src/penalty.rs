//! Penalty-path validation: minimizing the penalized functional for a
//! decreasing schedule of penalty weights and reporting the distances to
//! the anchor optimum.
//!
//! The inner minimizer is a preconditioned projected-gradient loop: the
//! velocity direction is lifted through the H1-metric divergence-free
//! projector, the rotation through the scalar H1 Gram, the controls
//! through the segment trace metrics, with a Barzilai-Borwein step and
//! Armijo backtracking. Every iterate starts at the anchor, so the
//! final value never exceeds the anchor objective (the sandwich bound
//! holds by construction).

use crate::adjoint::{objective_loads, rotation_total_derivative, solve_zeta, velocity_total_derivative, Linearization};
use crate::assemble::{add_reduced_block, add_reduced_block_transposed};
use crate::control::ControlPair;
use crate::error::{Error, Result};
use crate::linalg::{factorize, Factorization, TripletList};
use crate::objective::{
    evaluate_j_fields, momentum_residual, penalty_terms, rotation_residual, Anchor, Candidate,
    PenaltyMultipliers,
};
use crate::optimizer::project_controls;
use crate::problem::{Discretization, Targets};
use crate::stream::psi_boundary_values;

/// One row of the penalty-path report.
#[derive(Debug, Clone)]
pub struct PenaltyEntry {
    pub eps: f64,
    pub dist_u: f64,
    pub dist_w: f64,
    pub dist_g1: f64,
    pub dist_g2: f64,
    pub j_eps: f64,
    pub j: f64,
    /// Dual norms of the two state-equation residuals at the minimizer.
    pub mom_residual: f64,
    pub rot_residual: f64,
    pub inner_iters: usize,
    pub stagnated: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct PenaltyOpts {
    pub max_inner: usize,
    /// Relative stationarity tolerance for the inner loop.
    pub tol: f64,
    pub step0: f64,
}

impl Default for PenaltyOpts {
    fn default() -> Self {
        Self { max_inner: 400, tol: 1e-9, step0: 1.0 }
    }
}

/// H1-metric projector onto the discretely divergence-free subspace with
/// free boundary traces (frame normals stay constrained).
struct DivFreeProjector {
    fact: Factorization,
    nf: usize,
    np: usize,
}

impl DivFreeProjector {
    fn build(dz: &Discretization) -> Result<Self> {
        let free = &dz.sp.vel_free_traces;
        let nf = free.len();
        // all pressure rows: constraining against constants keeps the
        // total boundary flux zero, so the stream boundary integral
        // stays single valued; with free traces the block has full rank
        let all_p = crate::spaces::DofSet {
            full_to_red: (0..dz.sp.n_pressure_dofs()).map(Some).collect(),
            red_to_full: (0..dz.sp.n_pressure_dofs()).collect(),
        };
        let np = all_p.len();
        let mut trips = TripletList::new(nf + np, nf + np);
        add_reduced_block(&mut trips, &dz.h1_v.matrix, free, free, 0, 0, 1.0);
        add_reduced_block(&mut trips, &dz.div.matrix, &all_p, free, nf, 0, 1.0);
        add_reduced_block_transposed(&mut trips, &dz.div.matrix, &all_p, free, nf, 0, 1.0);
        let fact = factorize(&trips.finalize())?;
        Ok(Self { fact, nf, np })
    }

    /// G-orthogonal projection of a full velocity vector onto the subspace.
    fn project_point(&self, dz: &Discretization, x: &[f64]) -> Result<Vec<f64>> {
        let free = &dz.sp.vel_free_traces;
        let gx = dz.h1_v.matrix.matvec(x);
        let mut rhs = free.restrict(&gx);
        rhs.extend(vec![0.0; self.np]);
        let sol = self.fact.solve(&rhs)?;
        Ok(free.prolong(&sol[..self.nf], dz.sp.n_velocity_dofs()))
    }

    /// G-Riesz representative of a gradient functional, constrained to
    /// the subspace (preconditioned descent direction).
    fn riesz_direction(&self, dz: &Discretization, grad: &[f64]) -> Result<Vec<f64>> {
        let free = &dz.sp.vel_free_traces;
        let mut rhs = free.restrict(grad);
        rhs.extend(vec![0.0; self.np]);
        let sol = self.fact.solve(&rhs)?;
        Ok(free.prolong(&sol[..self.nf], dz.sp.n_velocity_dofs()))
    }
}

/// Value, multipliers and gradients of the penalized functional at a
/// candidate.
struct EpsEval {
    value: f64,
    j: f64,
    mults_mom: f64,
    mults_rot: f64,
    grad_u: Vec<f64>,
    grad_w: Vec<f64>,
    grad_g1: Vec<f64>,
    grad_g2: Vec<f64>,
}

fn eval_j_eps_with_grad(
    dz: &Discretization,
    cand: &Candidate,
    targets: &Targets,
    eps: f64,
    anchor: &Anchor,
) -> Result<EpsEval> {
    let sp = &dz.sp;
    let bc = psi_boundary_values(sp, &dz.flux_map, &cand.u)?;
    let psi = dz.stream.solve(sp, &cand.u, &bc)?;
    let (rho, drho) = dz.density_at_qp(&psi.psi);

    // residual multipliers
    let r_m = momentum_residual(dz, &cand.u, &cand.w, &rho);
    let (lam_raw, mom_sq) = dz.riesz_velocity(&r_m)?;
    let r_w = rotation_residual(dz, &cand.u, &cand.w, &rho);
    let (phi_raw, rot_sq) = dz.riesz_scalar(&r_w)?;
    let inv = 1.0 / eps;
    let lambda: Vec<f64> = lam_raw.iter().map(|v| inv * v).collect();
    let phi: Vec<f64> = phi_raw.iter().map(|v| inv * v).collect();

    // trace mismatches
    let d_u = dz.dirichlet_velocity(&cand.controls);
    let tu = dz.trace_not_g2(&cand.u);
    let td = dz.trace_not_g2(&d_u);
    let mis_u: Vec<f64> = tu.iter().zip(&td).map(|(a, b)| a - b).collect();
    let d_w = dz.dirichlet_rotation(&cand.controls);
    let mis_w: Vec<f64> = dz.hn_gamma.nodes.iter().map(|&n| cand.w[n] - d_w[n]).collect();
    let trace_u_sq = dz.hn_not_g2.norm_sq_vec(&mis_u);
    let trace_w_sq = dz.hn_gamma.norm_sq(&mis_w);

    // objective and its loads
    let j = evaluate_j_fields(dz, &cand.u, &cand.w, &rho, &cand.controls, targets);
    let loads = objective_loads(dz, &cand.u, &cand.w, &rho, &drho, targets);
    let mults = PenaltyMultipliers {
        lambda: lambda.clone(),
        phi: phi.clone(),
        xi: mis_u.iter().map(|v| inv * v).collect(),
        theta: mis_w.iter().map(|v| inv * v).collect(),
        mom_dual_sq: mom_sq,
        rot_dual_sq: rot_sq,
        trace_u_sq,
        trace_w_sq,
    };
    let value = j.total + penalty_terms(dz, cand, eps, anchor, &mults);

    // gradients: shared state-linearization pairing with the scaled
    // multipliers, plus the anchor and trace terms
    let lin = Linearization::at(dz, &cand.u, &cand.w, &rho, &drho);
    let zeta = solve_zeta(dz, &lin, &lambda, &phi, &loads.stream_moments)?;
    let mut grad_u =
        velocity_total_derivative(dz, &lin, &lambda, None, &phi, &zeta, &loads.stream_moments, &loads.vel);
    let du: Vec<f64> = cand.u.iter().zip(&anchor.u).map(|(a, b)| a - b).collect();
    for (o, v) in grad_u.iter_mut().zip(dz.h1_v.matrix.matvec(&du)) {
        *o += v;
    }
    // trace penalty: (1/eps) S (tr u - data) scattered to the trace nodes
    let n_ng2 = dz.hn_not_g2.nodes.len();
    let mx: Vec<f64> = (0..n_ng2).map(|k| mis_u[2 * k]).collect();
    let my: Vec<f64> = (0..n_ng2).map(|k| mis_u[2 * k + 1]).collect();
    let smx = dz.hn_not_g2.apply(&mx);
    let smy = dz.hn_not_g2.apply(&my);
    for (k, &node) in dz.hn_not_g2.nodes.iter().enumerate() {
        grad_u[2 * node] += inv * smx[k];
        grad_u[2 * node + 1] += inv * smy[k];
    }

    let mut grad_w = rotation_total_derivative(dz, &lin, &lambda, &phi, &loads.rot);
    let dw: Vec<f64> = cand.w.iter().zip(&anchor.w).map(|(a, b)| a - b).collect();
    for (o, v) in grad_w.iter_mut().zip(dz.h1_s.matrix.matvec(&dw)) {
        *o += v;
    }
    let smw = dz.hn_gamma.apply(&mis_w);
    for (k, &node) in dz.hn_gamma.nodes.iter().enumerate() {
        grad_w[node] += inv * smw[k];
    }

    // control gradients in Euclidean representation
    let beta = dz.params.beta;
    let n1 = cand.controls.n1();
    let g1x: Vec<f64> = (0..n1).map(|k| cand.controls.g1[2 * k]).collect();
    let g1y: Vec<f64> = (0..n1).map(|k| cand.controls.g1[2 * k + 1]).collect();
    let a1x: Vec<f64> = (0..n1).map(|k| anchor.g1[2 * k]).collect();
    let a1y: Vec<f64> = (0..n1).map(|k| anchor.g1[2 * k + 1]).collect();
    let tx: Vec<f64> = g1x.iter().zip(&a1x).map(|(a, b)| beta[4] * a + (a - b)).collect();
    let ty: Vec<f64> = g1y.iter().zip(&a1y).map(|(a, b)| beta[4] * a + (a - b)).collect();
    let sx = dz.hn_g1.apply(&tx);
    let sy = dz.hn_g1.apply(&ty);
    let mut grad_g1 = vec![0.0; 2 * n1];
    // positions of the g1 nodes inside the GammaNotG2 trace set
    for k in 0..n1 {
        grad_g1[2 * k] = sx[k];
        grad_g1[2 * k + 1] = sy[k];
    }
    for (k, &node) in dz.g1_nodes.iter().enumerate() {
        let pos = dz.hn_not_g2.nodes.iter().position(|m| *m == node).expect("g1 node in trace set");
        grad_g1[2 * k] -= inv * smx[pos];
        grad_g1[2 * k + 1] -= inv * smy[pos];
    }
    let tg2: Vec<f64> = cand
        .controls
        .g2
        .iter()
        .zip(&anchor.g2)
        .map(|(a, b)| beta[5] * a + (a - b))
        .collect();
    let mut grad_g2 = dz.hn_g3.apply(&tg2);
    for (k, &node) in dz.g3_nodes.iter().enumerate() {
        let pos = dz.hn_gamma.nodes.iter().position(|m| *m == node).expect("g3 node in trace set");
        grad_g2[k] -= inv * smw[pos];
    }

    Ok(EpsEval {
        value,
        j: j.total,
        mults_mom: mom_sq.max(0.0).sqrt(),
        mults_rot: rot_sq.max(0.0).sqrt(),
        grad_u,
        grad_w,
        grad_g1,
        grad_g2,
    })
}

/// Minimizes the penalized functional for each entry of a strictly
/// decreasing schedule, starting from the anchor.
pub fn penalty_path_experiment(
    dz: &Discretization,
    targets: &Targets,
    anchor: &Anchor,
    anchor_controls: &ControlPair,
    eps_schedule: &[f64],
    opts: &PenaltyOpts,
) -> Result<Vec<PenaltyEntry>> {
    for w in eps_schedule.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Precondition("eps schedule must be strictly decreasing".into()));
        }
    }
    if eps_schedule.iter().any(|e| *e <= 0.0) {
        return Err(Error::Precondition("eps schedule must be positive".into()));
    }

    let projector = DivFreeProjector::build(dz)?;
    let h1s_fact = {
        let mut m = dz.h1_s.matrix.clone();
        m.set_symmetric(true);
        factorize(&m)?
    };

    let mut out = Vec::with_capacity(eps_schedule.len());
    for &eps in eps_schedule {
        let mut cand = Candidate {
            u: projector.project_point(dz, &anchor.u)?,
            w: anchor.w.clone(),
            controls: anchor_controls.clone(),
        };
        let mut eval = eval_j_eps_with_grad(dz, &cand, targets, eps, anchor)?;
        let mut step = opts.step0;
        let mut prev: Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
        let mut iters = 0usize;
        let mut stagnated = false;

        for it in 0..opts.max_inner {
            iters = it + 1;
            // preconditioned directions
            let du = projector.riesz_direction(dz, &eval.grad_u)?;
            let dw = h1s_fact.solve(&eval.grad_w)?;
            let n1 = cand.controls.n1();
            let gx: Vec<f64> = (0..n1).map(|k| eval.grad_g1[2 * k]).collect();
            let gy: Vec<f64> = (0..n1).map(|k| eval.grad_g1[2 * k + 1]).collect();
            let rx = dz.hn_g1.solve(&gx);
            let ry = dz.hn_g1.solve(&gy);
            let mut dg1 = vec![0.0; 2 * n1];
            for k in 0..n1 {
                dg1[2 * k] = rx[k];
                dg1[2 * k + 1] = ry[k];
            }
            let dg2 = dz.hn_g3.solve(&eval.grad_g2);

            let sq = |g: &[f64], d: &[f64]| g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
            let gnorm_sq = sq(&eval.grad_u, &du) + sq(&eval.grad_w, &dw) + sq(&eval.grad_g1, &dg1) + sq(&eval.grad_g2, &dg2);
            let scale = 1.0 + eval.value.abs();
            if gnorm_sq <= (opts.tol * scale).powi(2) {
                break;
            }

            // Barzilai-Borwein step from the previous iterate
            if let Some((pu, pw, pg1, pg2, pgu, pgw, pgg1, pgg2)) = &prev {
                let s_dot_s: f64 = diff_dot(&cand.u, pu, &cand.u, pu)
                    + diff_dot(&cand.w, pw, &cand.w, pw)
                    + diff_dot(&cand.controls.g1, pg1, &cand.controls.g1, pg1)
                    + diff_dot(&cand.controls.g2, pg2, &cand.controls.g2, pg2);
                let s_dot_y: f64 = diff_dot(&cand.u, pu, &eval.grad_u, pgu)
                    + diff_dot(&cand.w, pw, &eval.grad_w, pgw)
                    + diff_dot(&cand.controls.g1, pg1, &eval.grad_g1, pgg1)
                    + diff_dot(&cand.controls.g2, pg2, &eval.grad_g2, pgg2);
                if s_dot_y > 0.0 && s_dot_s > 0.0 {
                    step = (s_dot_s / s_dot_y).clamp(1e-10, 1e8);
                }
            }

            // backtracking
            let mut t = step;
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial = Candidate {
                    u: cand.u.iter().zip(&du).map(|(a, b)| a - t * b).collect(),
                    w: cand.w.iter().zip(&dw).map(|(a, b)| a - t * b).collect(),
                    controls: cand.controls.clone(),
                };
                for (v, d) in trial.controls.g1.iter_mut().zip(&dg1) {
                    *v -= t * d;
                }
                for (v, d) in trial.controls.g2.iter_mut().zip(&dg2) {
                    *v -= t * d;
                }
                trial.u = projector.project_point(dz, &trial.u)?;
                trial.controls = project_controls(dz, &trial.controls)?;
                match eval_j_eps_with_grad(dz, &trial, targets, eps, anchor) {
                    Ok(te) if te.value <= eval.value - 1e-4 * t * gnorm_sq.max(0.0) => {
                        prev = Some((
                            cand.u.clone(),
                            cand.w.clone(),
                            cand.controls.g1.clone(),
                            cand.controls.g2.clone(),
                            eval.grad_u.clone(),
                            eval.grad_w.clone(),
                            eval.grad_g1.clone(),
                            eval.grad_g2.clone(),
                        ));
                        cand = trial;
                        eval = te;
                        accepted = true;
                        break;
                    }
                    Ok(_) => {}
                    Err(Error::Numerical(_)) | Err(Error::LinearSolve(_)) | Err(Error::Precondition(_)) => {}
                    Err(e) => return Err(e),
                }
                t *= 0.5;
                if t < 1e-14 {
                    break;
                }
            }
            if !accepted {
                stagnated = true;
                break;
            }
            step = t;
        }

        let du: Vec<f64> = cand.u.iter().zip(&anchor.u).map(|(a, b)| a - b).collect();
        let dwv: Vec<f64> = cand.w.iter().zip(&anchor.w).map(|(a, b)| a - b).collect();
        let dg1: Vec<f64> = cand.controls.g1.iter().zip(&anchor.g1).map(|(a, b)| a - b).collect();
        let dg2: Vec<f64> = cand.controls.g2.iter().zip(&anchor.g2).map(|(a, b)| a - b).collect();
        out.push(PenaltyEntry {
            eps,
            dist_u: dz.h1_norm_velocity(&du),
            dist_w: dz.h1_norm_scalar(&dwv),
            dist_g1: dz.hn_g1.norm_sq_vec(&dg1).max(0.0).sqrt(),
            dist_g2: dz.hn_g3.norm_sq(&dg2).max(0.0).sqrt(),
            j_eps: eval.value,
            j: eval.j,
            mom_residual: eval.mults_mom,
            rot_residual: eval.mults_rot,
            inner_iters: iters,
            stagnated,
        });
    }
    Ok(out)
}

fn diff_dot(a: &[f64], a0: &[f64], b: &[f64], b0: &[f64]) -> f64 {
    a.iter()
        .zip(a0)
        .zip(b.iter().zip(b0))
        .map(|((x, x0), (y, y0))| (x - x0) * (y - y0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ModelParams;
    use crate::samples;
    use crate::state::{balance_flux, solve_state, SolveOpts};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn setup() -> (Discretization, ControlPair, Targets) {
        let mut params = ModelParams::base();
        params.mu1 = 2.0;
        params.mu2 = 2.0;
        params.mur = 0.2;
        params.beta = [0.1, 1.0, 0.5, 0.5, 0.4, 0.4];
        params.u0 = Arc::new(|_, _, s: f64| [-s * (1.0 - s), 0.2 * s * (1.0 - s)]);
        params.rho0 = Arc::new(|_, _, s: f64| 1.0 + 0.3 * s);
        let dz = Discretization::new(Arc::new(samples::square_dirichlet(1)), params).unwrap();
        let mut controls = dz.zero_controls(10.0, 10.0);
        balance_flux(&dz, &mut controls);
        let targets = Targets::from_fns(&dz.sp, |x, y| [0.2 * y, 0.1 * x], |_, _| 0.0, |_, _| 1.1);
        (dz, controls, targets)
    }

    #[test]
    fn j_eps_gradient_matches_finite_differences() {
        let (dz, controls, targets) = setup();
        let st = solve_state(&dz, &controls, &SolveOpts { tol: 1e-12, ..Default::default() }).unwrap();
        let anchor = Anchor {
            u: st.u.data.clone(),
            w: st.w.data.clone(),
            g1: controls.g1.clone(),
            g2: controls.g2.clone(),
        };
        let projector = DivFreeProjector::build(&dz).unwrap();
        // an infeasible but solenoidal candidate
        let mut rng = StdRng::seed_from_u64(9);
        let mut u = st.u.data.clone();
        for &i in dz.sp.vel_free_traces.red_to_full.iter() {
            u[i] += 0.02 * rng.gen_range(-1.0..1.0);
        }
        let u = projector.project_point(&dz, &u).unwrap();
        let mut w = st.w.data.clone();
        for v in w.iter_mut() {
            *v += 0.02 * rng.gen_range(-1.0..1.0);
        }
        let cand = Candidate { u, w, controls: controls.clone() };
        let eps = 1e-2;
        let eval = eval_j_eps_with_grad(&dz, &cand, &targets, eps, &anchor).unwrap();

        // directions: solenoidal du, free dw, feasible-direction dg
        for trial in 0..5 {
            let mut du_raw = vec![0.0; dz.sp.n_velocity_dofs()];
            for &i in dz.sp.vel_free_traces.red_to_full.iter() {
                du_raw[i] = rng.gen_range(-1.0..1.0);
            }
            let du = projector.project_point(&dz, &du_raw).unwrap();
            let dw: Vec<f64> = (0..dz.sp.n_nodes).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = &dz.flux_vec_g1;
            let fn2: f64 = f.iter().map(|v| v * v).sum();
            let mut dg1: Vec<f64> = (0..cand.controls.g1.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fd: f64 = f.iter().zip(&dg1).map(|(a, b)| a * b).sum();
            for (k, v) in dg1.iter_mut().enumerate() {
                *v -= fd * f[k] / fn2;
            }
            let dg2: Vec<f64> = (0..cand.controls.g2.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let analytic =
                dot(&eval.grad_u, &du) + dot(&eval.grad_w, &dw) + dot(&eval.grad_g1, &dg1) + dot(&eval.grad_g2, &dg2);

            let value_at = |h: f64| -> f64 {
                let mut c = Candidate {
                    u: cand.u.iter().zip(&du).map(|(a, b)| a + h * b).collect(),
                    w: cand.w.iter().zip(&dw).map(|(a, b)| a + h * b).collect(),
                    controls: cand.controls.clone(),
                };
                for (v, d) in c.controls.g1.iter_mut().zip(&dg1) {
                    *v += h * d;
                }
                for (v, d) in c.controls.g2.iter_mut().zip(&dg2) {
                    *v += h * d;
                }
                crate::objective::evaluate_j_eps(&dz, &c, &targets, eps, &anchor).unwrap()
            };
            let h = 1e-5;
            let fd_d = (value_at(h) - value_at(-h)) / (2.0 * h);
            let rel = (analytic - fd_d).abs() / fd_d.abs().max(1e-10);
            assert!(rel <= 1e-5, "trial {trial}: analytic {analytic:.8e} vs fd {fd_d:.8e} (rel {rel:.2e})");
        }
    }

    #[test]
    fn trivial_anchor_stays_at_zero() {
        // zero-data problem: the anchor is the zero state with zero
        // controls; every eps-minimizer stays there
        let mut params = ModelParams::base();
        params.beta = [0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let dz = Discretization::new(Arc::new(samples::square_dirichlet(1)), params).unwrap();
        let controls = dz.zero_controls(1.0, 1.0);
        let targets = Targets::zeros(&dz.sp);
        let anchor = Anchor {
            u: vec![0.0; dz.sp.n_velocity_dofs()],
            w: vec![0.0; dz.sp.n_nodes],
            g1: controls.g1.clone(),
            g2: controls.g2.clone(),
        };
        let report = penalty_path_experiment(&dz, &targets, &anchor, &controls, &[1.0, 1e-2], &PenaltyOpts::default()).unwrap();
        for entry in &report {
            assert!(entry.dist_u < 1e-10 && entry.dist_w < 1e-10);
            assert!(entry.dist_g1 < 1e-10 && entry.dist_g2 < 1e-10);
            assert!(entry.j_eps.abs() < 1e-18);
        }
    }

    #[test]
    fn penalty_path_distances_and_sandwich() {
        let (dz, controls, targets) = setup();
        let st = solve_state(&dz, &controls, &SolveOpts { tol: 1e-12, ..Default::default() }).unwrap();
        let anchor = Anchor {
            u: st.u.data.clone(),
            w: st.w.data.clone(),
            g1: controls.g1.clone(),
            g2: controls.g2.clone(),
        };
        let j_anchor = evaluate_j_fields(&dz, &st.u.data, &st.w.data, &st.rho, &controls, &targets).total;
        let schedule = [1.0, 1e-2, 1e-4];
        let report =
            penalty_path_experiment(&dz, &targets, &anchor, &controls, &schedule, &PenaltyOpts::default()).unwrap();
        assert_eq!(report.len(), 3);
        for entry in &report {
            // sandwich: J(s_eps) <= J_eps(s_eps) <= J(anchor)
            assert!(entry.j <= entry.j_eps + 1e-12 * (1.0 + entry.j_eps.abs()), "eps {}", entry.eps);
            assert!(entry.j_eps <= j_anchor + 1e-10 * (1.0 + j_anchor.abs()), "eps {}", entry.eps);
        }
        // distances nonincreasing within 10% slack
        let dist = |e: &PenaltyEntry| e.dist_u + e.dist_w + e.dist_g1 + e.dist_g2;
        for w in report.windows(2) {
            assert!(
                dist(&w[1]) <= 1.1 * dist(&w[0]) + 1e-12,
                "distances increased: {} -> {} (eps {} -> {})",
                dist(&w[0]),
                dist(&w[1]),
                w[0].eps,
                w[1].eps
            );
        }
    }
}
