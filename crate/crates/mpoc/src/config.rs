//! Problem configuration: a line-based `key = value` format with
//! `[section]` headers. Field data is given as expression strings in
//! `x`, `y` (and `s` on the boundary). See the README for the full key
//! list and defaults.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::problem::ModelParams;

/// Parsed configuration for one run.
#[derive(Clone)]
pub struct ProblemConfig {
    pub mesh_path: PathBuf,
    pub params: ModelParams,
    /// Target expressions (evaluated at quadrature points).
    pub ud: [Expr; 2],
    pub wd: Expr,
    pub rhod: Expr,
    /// Uniform box half-widths (or explicit lo/hi) for the controls.
    pub g1_lo: f64,
    pub g1_hi: f64,
    pub g2_lo: f64,
    pub g2_hi: f64,
    /// Optional initial control expressions (in x, y, s).
    pub g1_init: Option<[Expr; 2]>,
    pub g2_init: Option<Expr>,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub solver_relaxation: f64,
    pub opt_step0: f64,
    pub opt_shrink: f64,
    pub opt_max_outer: usize,
    pub opt_tol_vi: f64,
    pub eps_schedule: Vec<f64>,
    pub penalty_max_inner: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

fn parse_raw(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_lowercase();
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", lineno + 1)));
        };
        let key = line[..eq].trim().to_lowercase();
        let value = line[eq + 1..].trim().to_string();
        let full = if section.is_empty() { key } else { format!("{section}.{key}") };
        if map.insert(full.clone(), value).is_some() {
            return Err(Error::Config(format!("duplicate key `{full}`")));
        }
    }
    Ok(map)
}

struct Raw {
    map: HashMap<String, String>,
}

impl Raw {
    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("bad number for `{key}`: {v}"))),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("bad integer for `{key}`: {v}"))),
        }
    }

    fn expr_or(&self, key: &str, default: &str) -> Result<Expr> {
        let text = self.map.get(key).map(|s| s.as_str()).unwrap_or(default);
        Expr::parse(text).map_err(|e| Error::Config(format!("key `{key}`: {e}")))
    }

    fn expr_opt(&self, key: &str) -> Result<Option<Expr>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(text) => Ok(Some(
                Expr::parse(text).map_err(|e| Error::Config(format!("key `{key}`: {e}")))?,
            )),
        }
    }
}

impl ProblemConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.as_ref().display())))?;
        let base = path.as_ref().parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw = Raw { map: parse_raw(text)? };

        let mesh = raw
            .map
            .get("problem.mesh")
            .ok_or_else(|| Error::Config("missing required key `mesh` in [problem]".into()))?;
        let mesh_path = base_dir.join(mesh);

        let beta = match raw.map.get("problem.beta") {
            None => [0.0, 1.0, 1.0, 0.0, 1.0, 1.0],
            Some(v) => {
                let vals: Vec<f64> = v
                    .split_whitespace()
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("bad beta list: {v}")))?;
                if vals.len() != 6 {
                    return Err(Error::Config("beta needs exactly six weights".into()));
                }
                [vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]]
            }
        };
        if !(beta[4] > 0.0 && beta[5] > 0.0) {
            return Err(Error::Config(
                "control weights beta5 and beta6 must be positive (admissible-set case ii)".into(),
            ));
        }
        if beta.iter().any(|b| *b < 0.0) || beta.iter().all(|b| *b == 0.0) {
            return Err(Error::Config("beta weights must be nonnegative and not all zero".into()));
        }

        let fx = raw.expr_or("problem.f_x", "0")?;
        let fy = raw.expr_or("problem.f_y", "0")?;
        let g = raw.expr_or("problem.g", "0")?;
        let u0x = raw.expr_or("problem.u0_x", "0")?;
        let u0y = raw.expr_or("problem.u0_y", "0")?;
        let w0 = raw.expr_or("problem.w0", "0")?;
        let rho0 = raw.expr_or("problem.rho0", "1")?;

        let params = ModelParams {
            mu1: raw.f64_or("problem.mu1", 1.0)?,
            mu2: raw.f64_or("problem.mu2", 1.0)?,
            mur: raw.f64_or("problem.mur", 0.0)?,
            alpha: raw.f64_or("problem.alpha", 0.0)?,
            f: {
                let (fx, fy) = (fx.clone(), fy.clone());
                Arc::new(move |x, y| [fx.eval(x, y, 0.0), fy.eval(x, y, 0.0)])
            },
            g: {
                let g = g.clone();
                Arc::new(move |x, y| g.eval(x, y, 0.0))
            },
            u0: {
                let (u0x, u0y) = (u0x.clone(), u0y.clone());
                Arc::new(move |x, y, s| [u0x.eval(x, y, s), u0y.eval(x, y, s)])
            },
            w0: {
                let w0 = w0.clone();
                Arc::new(move |x, y, s| w0.eval(x, y, s))
            },
            rho0: {
                let rho0 = rho0.clone();
                Arc::new(move |x, y, s| rho0.eval(x, y, s))
            },
            beta,
        };
        params.validate().map_err(|e| Error::Config(e.to_string()))?;

        let g1_bound = raw.f64_or("controls.g1_bound", 10.0)?;
        let g2_bound = raw.f64_or("controls.g2_bound", 10.0)?;
        let g1_init = match (raw.expr_opt("controls.g1_init_x")?, raw.expr_opt("controls.g1_init_y")?) {
            (None, None) => None,
            (ex, ey) => Some([
                ex.unwrap_or(Expr::parse("0").unwrap()),
                ey.unwrap_or(Expr::parse("0").unwrap()),
            ]),
        };

        let eps_schedule = match raw.map.get("penalty.eps_schedule") {
            None => vec![1.0, 1e-2, 1e-4],
            Some(v) => v
                .split_whitespace()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("bad eps schedule: {v}")))?,
        };

        Ok(Self {
            mesh_path,
            params,
            ud: [raw.expr_or("problem.u_d_x", "0")?, raw.expr_or("problem.u_d_y", "0")?],
            wd: raw.expr_or("problem.w_d", "0")?,
            rhod: raw.expr_or("problem.rho_d", "0")?,
            g1_lo: raw.f64_or("controls.g1_lo", -g1_bound)?,
            g1_hi: raw.f64_or("controls.g1_hi", g1_bound)?,
            g2_lo: raw.f64_or("controls.g2_lo", -g2_bound)?,
            g2_hi: raw.f64_or("controls.g2_hi", g2_bound)?,
            g1_init,
            g2_init: raw.expr_opt("controls.g2_init")?,
            solver_tol: raw.f64_or("solver.tol", 1e-9)?,
            solver_max_iter: raw.usize_or("solver.max_iter", 100)?,
            solver_relaxation: raw.f64_or("solver.relaxation", 1.0)?,
            opt_step0: raw.f64_or("optimizer.step0", 1.0)?,
            opt_shrink: raw.f64_or("optimizer.shrink", 0.5)?,
            opt_max_outer: raw.usize_or("optimizer.max_outer", 100)?,
            opt_tol_vi: raw.f64_or("optimizer.tol_vi", 1e-7)?,
            eps_schedule,
            penalty_max_inner: raw.usize_or("penalty.max_inner", 400)?,
            out_dir: PathBuf::from(raw.map.get("output.dir").cloned().unwrap_or_else(|| "out".into())),
            seed: raw.usize_or("output.seed", 42)? as u64,
            threads: raw.usize_or("output.threads", 1)?,
        })
    }
}
