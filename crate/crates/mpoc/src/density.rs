//! The density profile `eta`: a strictly positive C1 function built by
//! monotone cubic interpolation of boundary density samples against the
//! boundary stream function, extended by constants outside the sampled
//! range (so `eta' = 0` there and the extension stays C1).

use crate::assemble::{eval_scalar, QuadField1};
use crate::error::{Error, Result};
use crate::spaces::SpaceSet;

/// Strictly positive C1 interpolant `eta` with derivative `eta'`.
#[derive(Debug, Clone)]
pub struct DensityProfile {
    /// Strictly increasing psi knots (empty for a constant profile).
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    constant: Option<f64>,
}

impl DensityProfile {
    /// Constant density (no dependence on the stream function).
    pub fn constant(value: f64) -> Result<Self> {
        if value <= 0.0 {
            return Err(Error::Precondition(format!("density must be positive, got {value}")));
        }
        Ok(Self { knots: Vec::new(), values: Vec::new(), slopes: Vec::new(), constant: Some(value) })
    }

    /// Builds `eta` from samples `(psi_i, rho0_i)` taken along the G0 arc.
    ///
    /// The psi samples must be strictly monotone (the discrete form of the
    /// inflow/outflow assumption); constant rho0 data short-circuits to a
    /// constant profile. Samples are re-ordered so the knots increase.
    pub fn from_samples(psi: &[f64], rho0: &[f64]) -> Result<Self> {
        if psi.len() != rho0.len() || psi.is_empty() {
            return Err(Error::Precondition("eta samples: psi and rho0 lengths must match and be nonempty".into()));
        }
        for (k, &r) in rho0.iter().enumerate() {
            if !(r > 0.0) {
                return Err(Error::Precondition(format!("rho0 sample {k} is not positive: {r}")));
            }
        }
        let scale = rho0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rho0.iter().all(|&r| (r - rho0[0]).abs() <= 1e-14 * scale) {
            return Self::constant(rho0[0]);
        }
        if psi.len() < 2 {
            return Err(Error::Precondition("variable rho0 needs at least two samples".into()));
        }
        let increasing = psi[1] > psi[0];
        let knots: Vec<f64>;
        let values: Vec<f64>;
        if increasing {
            knots = psi.to_vec();
            values = rho0.to_vec();
        } else {
            knots = psi.iter().rev().copied().collect();
            values = rho0.iter().rev().copied().collect();
        }
        for w in knots.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Precondition(
                    "inflow/outflow assumption violated: psi not strictly monotone on Γ0".into(),
                ));
            }
        }

        // shape-preserving slopes: three-point estimate clamped to the
        // Fritsch-Carlson monotone region, zero at sign changes and at
        // both ends (for the C1 constant extension)
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let sec: Vec<f64> = (0..n - 1).map(|k| (values[k + 1] - values[k]) / h[k]).collect();
        let mut slopes = vec![0.0; n];
        for i in 1..n - 1 {
            let (s0, s1) = (sec[i - 1], sec[i]);
            if s0 * s1 <= 0.0 {
                slopes[i] = 0.0;
            } else {
                let d = (h[i] * s0 + h[i - 1] * s1) / (h[i - 1] + h[i]);
                let cap = 3.0 * s0.abs().min(s1.abs());
                slopes[i] = d.signum() * d.abs().min(cap);
            }
        }
        Ok(Self { knots, values, slopes, constant: None })
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    /// `eta(y)`.
    pub fn eval(&self, y: f64) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let n = self.knots.len();
        if y <= self.knots[0] {
            return self.values[0];
        }
        if y >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let k = self.interval(y);
        let (v, _) = self.hermite(k, y);
        v
    }

    /// `eta'(y)`; analytic from the cubic, zero outside the knot span.
    pub fn deriv(&self, y: f64) -> f64 {
        if self.constant.is_some() {
            return 0.0;
        }
        let n = self.knots.len();
        if y <= self.knots[0] || y >= self.knots[n - 1] {
            return 0.0;
        }
        let k = self.interval(y);
        let (_, d) = self.hermite(k, y);
        d
    }

    fn interval(&self, y: f64) -> usize {
        match self.knots.binary_search_by(|k| k.partial_cmp(&y).unwrap()) {
            Ok(k) => k.min(self.knots.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.knots.len() - 2),
        }
    }

    fn hermite(&self, k: usize, y: f64) -> (f64, f64) {
        let h = self.knots[k + 1] - self.knots[k];
        let t = (y - self.knots[k]) / h;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let d = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
        (v, d)
    }

    /// Largest knot value (used by the viscosity-condition advisory).
    pub fn max_value(&self) -> f64 {
        self.constant.unwrap_or_else(|| self.values.iter().fold(f64::MIN, |m, v| m.max(*v)))
    }

    pub fn min_value(&self) -> f64 {
        self.constant.unwrap_or_else(|| self.values.iter().fold(f64::MAX, |m, v| m.min(*v)))
    }

    /// Exact knot interpolation pairs (empty for constant profiles).
    pub fn knot_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.knots.iter().copied().zip(self.values.iter().copied())
    }
}

/// Builds `eta` from the G0 arc samples; thin wrapper naming the
/// construction after its role.
pub fn build_eta(psi_on_gamma0: &[f64], rho0_on_gamma0: &[f64]) -> Result<DensityProfile> {
    DensityProfile::from_samples(psi_on_gamma0, rho0_on_gamma0)
}

/// Evaluates `rho = eta(psi)` and `eta'(psi)` at every volume quadrature
/// point of the mesh.
pub fn evaluate_density(sp: &SpaceSet, profile: &DensityProfile, psi: &[f64]) -> (QuadField1, QuadField1) {
    let (vals, _) = eval_scalar(sp, psi);
    let rho: Vec<f64> = vals.iter().map(|&y| profile.eval(y)).collect();
    let drho: Vec<f64> = vals.iter().map(|&y| profile.deriv(y)).collect();
    (QuadField1(rho), QuadField1(drho))
}

/// Guards the transport assembly: density must be positive at every
/// quadrature point (structurally true for profiles built here).
pub fn check_positive_density(sp: &SpaceSet, rho: &QuadField1) -> Result<()> {
    for (k, &r) in rho.0.iter().enumerate() {
        if !(r > 0.0) {
            let p = crate::assemble::quad_points(sp)[k];
            return Err(Error::Numerical(format!(
                "nonpositive density {r} at quadrature point ({}, {})",
                p[0], p[1]
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_profile() {
        let eta = build_eta(&[0.0, 0.3, 1.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!(eta.is_constant());
        assert_eq!(eta.eval(-5.0), 1.0);
        assert_eq!(eta.eval(5.0), 1.0);
        assert_eq!(eta.deriv(0.2), 0.0);
    }

    #[test]
    fn linear_data_linear_profile() {
        // rho0 and psi both linear in arc length -> eta linear away from
        // the end intervals (the end slopes are zeroed so the constant
        // extension stays C1)
        let psi: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let rho: Vec<f64> = psi.iter().map(|s| 1.0 + 2.0 * s).collect();
        let eta = build_eta(&psi, &rho).unwrap();
        for y in [0.15, 0.33, 0.5, 0.71, 0.85] {
            assert!((eta.eval(y) - (1.0 + 2.0 * y)).abs() < 1e-12);
            assert!((eta.deriv(y) - 2.0).abs() < 1e-12);
        }
        // constant continuation
        assert!((eta.eval(-1.0) - 1.0).abs() < 1e-14);
        assert!((eta.eval(2.0) - 3.0).abs() < 1e-14);
        assert_eq!(eta.deriv(-1.0), 0.0);
        assert_eq!(eta.deriv(2.0), 0.0);
    }

    #[test]
    fn quadratic_composition_accuracy() {
        // rho0(s) = 1 + s^2, psi(s) = s with 20 knots:
        // eta(0.5) = 1.25, eta'(0.5) = 1.0 within 1e-3
        let psi: Vec<f64> = (0..20).map(|k| k as f64 / 19.0).collect();
        let rho: Vec<f64> = psi.iter().map(|s| 1.0 + s * s).collect();
        let eta = build_eta(&psi, &rho).unwrap();
        assert!((eta.eval(0.5) - 1.25).abs() <= 1e-3, "{}", eta.eval(0.5));
        assert!((eta.deriv(0.5) - 1.0).abs() <= 1e-3, "{}", eta.deriv(0.5));
    }

    #[test]
    fn knots_interpolated_exactly() {
        let psi = [0.0, 0.2, 0.5, 0.6, 1.1];
        let rho = [2.0, 1.5, 1.8, 2.5, 2.2];
        let eta = build_eta(&psi, &rho).unwrap();
        for (y, v) in eta.knot_pairs() {
            assert!((eta.eval(y) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn decreasing_psi_is_reordered() {
        let psi = [1.0, 0.5, 0.0];
        let rho = [3.0, 2.0, 1.0];
        let eta = build_eta(&psi, &rho).unwrap();
        assert!((eta.eval(1.0) - 3.0).abs() < 1e-14);
        assert!((eta.eval(0.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_monotone_psi_rejected() {
        let psi = [0.0, 0.5, 0.4];
        let rho = [1.0, 2.0, 3.0];
        match build_eta(&psi, &rho) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("inflow/outflow")),
            other => panic!("expected monotonicity error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn nonpositive_rho_rejected() {
        assert!(build_eta(&[0.0, 1.0], &[1.0, 0.0]).is_err());
        assert!(build_eta(&[0.0, 1.0], &[-1.0, 1.0]).is_err());
    }

    #[test]
    fn positivity_on_randomized_profiles() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..50 {
            let n = rng.gen_range(2..15);
            let mut psi: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            psi.sort_by(|a, b| a.partial_cmp(b).unwrap());
            psi.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            if psi.len() < 2 {
                continue;
            }
            let rho: Vec<f64> = (0..psi.len()).map(|_| rng.gen_range(0.05..4.0)).collect();
            let eta = match build_eta(&psi, &rho) {
                Ok(e) => e,
                Err(_) => continue, // constant shortcut may reject nothing else
            };
            for k in 0..400 {
                let y = -3.0 + 7.0 * (k as f64) / 399.0;
                assert!(eta.eval(y) > 0.0, "eta({y}) = {} not positive", eta.eval(y));
            }
        }
    }

    #[test]
    fn c1_across_knots_and_span_ends() {
        let psi = [0.0, 0.3, 0.7, 1.0];
        let rho = [1.0, 2.2, 1.4, 3.0];
        let eta = build_eta(&psi, &rho).unwrap();
        let h = 1e-7;
        for y in [0.0, 0.3, 0.7, 1.0] {
            let dm = (eta.eval(y) - eta.eval(y - h)) / h;
            let dp = (eta.eval(y + h) - eta.eval(y)) / h;
            assert!((dm - dp).abs() < 1e-5, "kink at {y}: {dm} vs {dp}");
        }
    }
}
