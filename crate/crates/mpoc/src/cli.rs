//! Batch driver: solve / gradcheck / optimize / penalty commands working
//! from a problem configuration file, emitting CSV reports and legacy
//! VTK fields.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjoint::solve_adjoint;
use crate::config::ProblemConfig;
use crate::control::ControlPair;
use crate::error::{Error, Result};
use crate::mesh::{load_mesh, refine_uniform, Mesh};
use crate::objective::{evaluate_j, Anchor};
use crate::optimizer::{
    control_inner, optimize, project_controls, reduced_gradient, ControlIndexMaps, OptimizeOpts,
    Termination,
};
use crate::penalty::{penalty_path_experiment, PenaltyOpts};
use crate::problem::{Discretization, Targets};
use crate::report::{write_csv, write_vtk_scalar, write_vtk_vector, Cell};
use crate::state::{solve_state, SolveOpts, StateSolution};

/// Maps an error to the documented exit codes: 2 input error,
/// 1 numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::MeshParse { .. }
        | Error::MeshInvalid(_)
        | Error::Expr(_)
        | Error::Io(_)
        | Error::Precondition(_) => 2,
        Error::Numerical(_) | Error::LinearSolve(_) | Error::SingularPivot(_) | Error::InfeasibleFlux { .. } => 1,
    }
}

struct Setup {
    dz: Discretization,
    controls: ControlPair,
    targets: Targets,
}

fn build_setup(cfg: &ProblemConfig, levels: usize, project_init: bool) -> Result<Setup> {
    let mut mesh: Mesh = load_mesh(&cfg.mesh_path)?;
    for _ in 0..levels {
        mesh = refine_uniform(&mesh);
    }
    let dz = Discretization::new(Arc::new(mesh), cfg.params.clone())?;
    let mut controls = dz.zero_controls(1.0, 1.0);
    let n1 = controls.n1();
    controls.lo1 = vec![cfg.g1_lo; 2 * n1];
    controls.hi1 = vec![cfg.g1_hi; 2 * n1];
    controls.lo2 = vec![cfg.g2_lo; controls.n3()];
    controls.hi2 = vec![cfg.g2_hi; controls.n3()];
    if let Some([ex, ey]) = &cfg.g1_init {
        for (k, &node) in dz.g1_nodes.iter().enumerate() {
            let p = dz.sp.node_pos[node];
            let s = dz.sp.node_binfo[node].s;
            controls.g1[2 * k] = ex.eval(p[0], p[1], s);
            controls.g1[2 * k + 1] = ey.eval(p[0], p[1], s);
        }
    }
    if let Some(e2) = &cfg.g2_init {
        for (k, &node) in dz.g3_nodes.iter().enumerate() {
            let p = dz.sp.node_pos[node];
            let s = dz.sp.node_binfo[node].s;
            controls.g2[k] = e2.eval(p[0], p[1], s);
        }
    }
    if project_init {
        controls = project_controls(&dz, &controls)?;
    } else {
        controls.validate(&dz.flux_vec_g1).map_err(|e| {
            Error::Config(format!("configured controls are not admissible: {e}"))
        })?;
    }
    let targets = Targets::from_fns(
        &dz.sp,
        |x, y| [cfg.ud[0].eval(x, y, 0.0), cfg.ud[1].eval(x, y, 0.0)],
        |x, y| cfg.wd.eval(x, y, 0.0),
        |x, y| cfg.rhod.eval(x, y, 0.0),
    );
    Ok(Setup { dz, controls, targets })
}

fn solve_opts(cfg: &ProblemConfig) -> SolveOpts {
    SolveOpts { tol: cfg.solver_tol, max_iter: cfg.solver_max_iter, relaxation: cfg.solver_relaxation }
}

fn optimize_opts(cfg: &ProblemConfig, certify: bool) -> OptimizeOpts {
    OptimizeOpts {
        step0: cfg.opt_step0,
        shrink: cfg.opt_shrink,
        max_outer: cfg.opt_max_outer,
        tol_vi: cfg.opt_tol_vi,
        state_opts: solve_opts(cfg),
        seed: cfg.seed,
        certify,
        ..Default::default()
    }
}

fn tag(base: &str, level: Option<usize>, ext: &str) -> String {
    match level {
        None => format!("{base}.{ext}"),
        Some(k) => format!("{base}_r{k}.{ext}"),
    }
}

fn write_state_fields(dir: &Path, level: Option<usize>, dz: &Discretization, st: &StateSolution) -> Result<()> {
    let mesh = &dz.sp.mesh;
    let nv = mesh.n_vertices();
    let u: Vec<[f64; 2]> = (0..nv).map(|n| dz.sp.node_velocity(&st.u.data, n)).collect();
    write_vtk_vector(dir.join(tag("u", level, "vtk")), mesh, "u", &u)?;
    write_vtk_scalar(dir.join(tag("w", level, "vtk")), mesh, "w", &st.w.data[..nv])?;
    write_vtk_scalar(dir.join(tag("psi", level, "vtk")), mesh, "psi", &st.psi.psi[..nv])?;
    let rho: Vec<f64> = st.psi.psi[..nv].iter().map(|&p| dz.profile.eval(p)).collect();
    write_vtk_scalar(dir.join(tag("rho", level, "vtk")), mesh, "rho", &rho)?;
    Ok(())
}

fn state_report_rows(dz: &Discretization, st: &StateSolution) -> Vec<Vec<Cell>> {
    let unorm = dz.h1_norm_velocity(&st.u.data);
    let wnorm = dz.h1_norm_scalar(&st.w.data);
    st.picard_history
        .iter()
        .enumerate()
        .map(|(k, &upd)| {
            vec![
                Cell::from(k),
                Cell::from(upd),
                Cell::from(st.energy_gap),
                Cell::from(st.theta_bound),
                Cell::from(unorm + wnorm),
            ]
        })
        .collect()
}

/// `solve`: state solve (optionally over a refinement series), fields
/// and convergence report.
pub fn cmd_solve(cfg: &ProblemConfig, refine: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&dir)?;
    let n_levels = refine.unwrap_or(1).max(1);
    for lvl in 0..n_levels {
        let tag_lvl = if refine.is_some() { Some(lvl) } else { None };
        let setup = build_setup(cfg, lvl, false)?;
        let st = solve_state(&setup.dz, &setup.controls, &solve_opts(cfg))?;
        if let Some(msg) = &st.advisory {
            eprintln!("note: {msg}");
        }
        if !st.converged {
            eprintln!(
                "warning: Picard iteration did not converge in {} steps (last update {:.3e})",
                st.picard_history.len(),
                st.picard_history.last().copied().unwrap_or(f64::NAN)
            );
        }
        write_csv(
            dir.join(tag("state_report", tag_lvl, "csv")),
            &["iteration", "update_norm_h1", "energy_identity_residual", "theta", "state_norm_h1"],
            &state_report_rows(&setup.dz, &st),
        )?;
        write_state_fields(&dir, tag_lvl, &setup.dz, &st)?;
        println!(
            "solve level {lvl}: {} iterations, converged = {}, |u|+|w| = {:.6e}, Theta = {:.6e}",
            st.picard_history.len(),
            st.converged,
            setup.dz.h1_norm_velocity(&st.u.data) + setup.dz.h1_norm_scalar(&st.w.data),
            st.theta_bound
        );
    }
    Ok(())
}

/// `gradcheck`: adjoint directional derivatives against central finite
/// differences along random feasible control directions.
pub fn cmd_gradcheck(cfg: &ProblemConfig, out: Option<PathBuf>) -> Result<f64> {
    let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&dir)?;
    let setup = build_setup(cfg, 0, true)?;
    let dz = &setup.dz;
    let maps = ControlIndexMaps::build(dz);
    let tight = SolveOpts { tol: cfg.solver_tol.min(1e-11), max_iter: cfg.solver_max_iter.max(200), relaxation: 1.0 };
    let st = solve_state(dz, &setup.controls, &tight)?;
    if !st.converged {
        return Err(Error::Numerical("state solve did not converge for the gradient check".into()));
    }
    let adj = solve_adjoint(dz, &st, &setup.targets)?;
    let grad = reduced_gradient(dz, &maps, &adj, &setup.controls);

    let jval = |c: &ControlPair| -> Result<f64> {
        let s = solve_state(dz, c, &tight)?;
        if !s.converged {
            return Err(Error::Numerical("state solve diverged during finite differencing".into()));
        }
        Ok(evaluate_j(dz, &s, c, &setup.targets).total)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f = &dz.flux_vec_g1;
    let fnorm: f64 = f.iter().map(|v| v * v).sum();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    println!("{:>3} {:>24} {:>24} {:>12}", "dir", "finite_difference", "adjoint", "rel_error");
    for k in 0..5 {
        let mut d1: Vec<f64> = (0..setup.controls.g1.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fd1: f64 = f.iter().zip(&d1).map(|(a, b)| a * b).sum();
        for (j, v) in d1.iter_mut().enumerate() {
            *v -= fd1 * f[j] / fnorm;
        }
        let d2: Vec<f64> = (0..setup.controls.g2.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let analytic = control_inner(dz, &grad.g1, &grad.g2, &d1, &d2);
        let dj = |h: f64| -> Result<f64> {
            let mut cp = setup.controls.clone();
            let mut cm = setup.controls.clone();
            for ((vp, vm), d) in cp.g1.iter_mut().zip(cm.g1.iter_mut()).zip(&d1) {
                *vp += h * d;
                *vm -= h * d;
            }
            for ((vp, vm), d) in cp.g2.iter_mut().zip(cm.g2.iter_mut()).zip(&d2) {
                *vp += h * d;
                *vm -= h * d;
            }
            Ok((jval(&cp)? - jval(&cm)?) / (2.0 * h))
        };
        let h = 1e-3;
        let fd = (4.0 * dj(0.5 * h)? - dj(h)?) / 3.0;
        let rel = (analytic - fd).abs() / fd.abs().max(1e-12);
        worst = worst.max(rel);
        println!("{k:>3} {fd:>24.16e} {analytic:>24.16e} {rel:>12.3e}");
        rows.push(vec![Cell::from(k), Cell::from(fd), Cell::from(analytic), Cell::from(rel)]);
    }
    println!("max relative error: {worst:.3e}");
    write_csv(dir.join("gradcheck.csv"), &["direction", "finite_difference", "adjoint", "rel_error"], &rows)?;
    Ok(worst)
}

/// `optimize`: projected-gradient control optimization with per-iterate
/// certificates, history CSV and field output.
pub fn cmd_optimize(cfg: &ProblemConfig, out: Option<PathBuf>) -> Result<()> {
    let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&dir)?;
    let setup = build_setup(cfg, 0, true)?;
    let result = optimize(&setup.dz, &setup.targets, &setup.controls, &optimize_opts(cfg, true))?;

    let rows: Vec<Vec<Cell>> = result
        .history
        .iter()
        .map(|r| {
            let mut row = vec![Cell::from(r.iter)];
            for a in r.j.addends {
                row.push(Cell::from(a));
            }
            row.push(Cell::from(r.j.total));
            row.push(Cell::from(r.pg_norm));
            row.push(Cell::from(r.vi_residual));
            row.push(Cell::from(r.projection_distance));
            row
        })
        .collect();
    write_csv(
        dir.join("optim_history.csv"),
        &[
            "iteration",
            "j_vorticity",
            "j_velocity",
            "j_rotation",
            "j_density",
            "j_control_g1",
            "j_control_g2",
            "j_total",
            "projected_gradient_norm",
            "vi_residual",
            "projection_distance",
        ],
        &rows,
    )?;

    write_state_fields(&dir, None, &setup.dz, &result.state)?;
    let nv = setup.dz.sp.mesh.n_vertices();
    let lam: Vec<[f64; 2]> = (0..nv)
        .map(|n| setup.dz.sp.node_velocity(&result.adjoint.lambda.data, n))
        .collect();
    write_vtk_vector(dir.join("lambda.vtk"), &setup.dz.sp.mesh, "lambda", &lam)?;
    write_vtk_scalar(dir.join("phi.vtk"), &setup.dz.sp.mesh, "phi", &result.adjoint.phi.data[..nv])?;

    let reason = match result.termination {
        Termination::Stationary => "stationary",
        Termination::MaxOuterReached => "max outer iterations",
        Termination::StateSolverLimited => "state solver limited",
    };
    println!(
        "optimize: {} iterations, J = {:.10e}, termination: {reason}",
        result.history.len(),
        result.history.last().map(|r| r.j.total).unwrap_or(f64::NAN)
    );
    Ok(())
}

/// `penalty`: optimize to an anchor, then run the penalty-path
/// experiment over the configured schedule.
pub fn cmd_penalty(cfg: &ProblemConfig, out: Option<PathBuf>) -> Result<()> {
    let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&dir)?;
    let setup = build_setup(cfg, 0, true)?;
    let result = optimize(&setup.dz, &setup.targets, &setup.controls, &optimize_opts(cfg, false))?;
    let anchor = Anchor {
        u: result.state.u.data.clone(),
        w: result.state.w.data.clone(),
        g1: result.controls.g1.clone(),
        g2: result.controls.g2.clone(),
    };
    let report = penalty_path_experiment(
        &setup.dz,
        &setup.targets,
        &anchor,
        &result.controls,
        &cfg.eps_schedule,
        &PenaltyOpts { max_inner: cfg.penalty_max_inner, ..Default::default() },
    )?;
    let rows: Vec<Vec<Cell>> = report
        .iter()
        .map(|e| {
            vec![
                Cell::from(e.eps),
                Cell::from(e.dist_u),
                Cell::from(e.dist_w),
                Cell::from(e.dist_g1),
                Cell::from(e.dist_g2),
                Cell::from(e.j_eps),
                Cell::from(e.j),
                Cell::from(e.mom_residual),
                Cell::from(e.rot_residual),
                Cell::from(e.inner_iters),
                Cell::Int(e.stagnated as i64),
            ]
        })
        .collect();
    write_csv(
        dir.join("penalty_report.csv"),
        &[
            "eps",
            "dist_u_h1",
            "dist_w_h1",
            "dist_g1",
            "dist_g2",
            "j_eps",
            "j",
            "momentum_residual_dual",
            "rotation_residual_dual",
            "inner_iterations",
            "stagnated",
        ],
        &rows,
    )?;
    for e in &report {
        println!(
            "eps = {:9.3e}: distances (u, w, g1, g2) = ({:.3e}, {:.3e}, {:.3e}, {:.3e}), J_eps = {:.8e}, J = {:.8e}",
            e.eps, e.dist_u, e.dist_w, e.dist_g1, e.dist_g2, e.j_eps, e.j
        );
    }
    Ok(())
}
