//! Boundary control pair: velocity control on G1, rotation control on G3.
//!
//! Controls are trace coefficient vectors on the segment-interior nodes
//! (endpoint DOFs are zero by construction, matching membership in the
//! zero-extension trace spaces), constrained by per-DOF boxes and by the
//! flux-compatibility equality on G1.

use crate::error::{Error, Result};

/// Control coefficients with their admissible set.
///
/// `g1` is interleaved `[x0, y0, x1, y1, ...]` over the G1-interior nodes
/// in boundary-traversal order; `g2` is scalar over the G3-interior nodes.
#[derive(Debug, Clone)]
pub struct ControlPair {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub lo1: Vec<f64>,
    pub hi1: Vec<f64>,
    pub lo2: Vec<f64>,
    pub hi2: Vec<f64>,
    /// Required value of the G1 boundary flux integral.
    pub flux_target: f64,
}

impl ControlPair {
    /// Zero controls with symmetric boxes `[-bound, bound]`.
    pub fn zeros(n1: usize, n3: usize, bound1: f64, bound2: f64, flux_target: f64) -> Self {
        Self {
            g1: vec![0.0; 2 * n1],
            g2: vec![0.0; n3],
            lo1: vec![-bound1; 2 * n1],
            hi1: vec![bound1; 2 * n1],
            lo2: vec![-bound2; n3],
            hi2: vec![bound2; n3],
            flux_target,
        }
    }

    pub fn n1(&self) -> usize {
        self.g1.len() / 2
    }

    pub fn n3(&self) -> usize {
        self.g2.len()
    }

    /// Box feasibility and flux compatibility against a flux functional.
    pub fn validate(&self, flux_vec: &[f64]) -> Result<()> {
        if self.g1.len() != self.lo1.len()
            || self.g1.len() != self.hi1.len()
            || self.g2.len() != self.lo2.len()
            || self.g2.len() != self.hi2.len()
        {
            return Err(Error::Precondition("control/box dimension mismatch".into()));
        }
        for (k, &v) in self.g1.iter().enumerate() {
            if v < self.lo1[k] - 1e-12 || v > self.hi1[k] + 1e-12 {
                return Err(Error::Precondition(format!("g1[{k}] = {v} outside box [{}, {}]", self.lo1[k], self.hi1[k])));
            }
        }
        for (k, &v) in self.g2.iter().enumerate() {
            if v < self.lo2[k] - 1e-12 || v > self.hi2[k] + 1e-12 {
                return Err(Error::Precondition(format!("g2[{k}] = {v} outside box [{}, {}]", self.lo2[k], self.hi2[k])));
            }
        }
        let flux = self.flux(flux_vec);
        let scale = 1.0 + self.g1.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (flux - self.flux_target).abs() > 1e-10 * scale {
            return Err(Error::Precondition(format!(
                "flux compatibility violated: integral {flux:.6e}, target {:.6e}",
                self.flux_target
            )));
        }
        Ok(())
    }

    pub fn flux(&self, flux_vec: &[f64]) -> f64 {
        assert_eq!(flux_vec.len(), self.g1.len());
        flux_vec.iter().zip(&self.g1).map(|(a, b)| a * b).sum()
    }
}
