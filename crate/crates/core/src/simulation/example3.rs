//! A confounded pricing instance with closed-form ground truth.
//!
//! ```text
//! X ~ N(0, 1),  W ~ N(0, τ²),  V ~ N(0, σ²)
//! Z = 3X + W
//! Y(z) = 27.75 − z² + 6Xz − 9X² + V
//! ```
//!
//! The mean response is `y(z) = 18.75 − z²`, maximized under `r(z) = z` at
//! `z* = 2.5` with `R(z*) = 31.25`. Historical prices are high exactly when
//! demand is high, so `E[Y | Z = z] = a − b·z²` with `s = 9 + τ²`,
//! `a = 27.75 − 9τ²/s` and `b = 1 − 18/s + 81/s²`; its revenue maximizer
//! `√(a/(3b)) ≈ 4.330` earns almost nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::problem::{PotentialCurves, ResponseOracle, Sample};

/// Variance of the pricing noise used by default.
pub const DEFAULT_TAU2: f64 = 15.1234;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example3Spec {
    /// Standard deviation of the idiosyncratic demand noise `V`.
    pub sigma: f64,
    /// Variance of the pricing noise `W`.
    pub tau2: f64,
}

impl Default for Example3Spec {
    fn default() -> Self {
        Self { sigma: 1.0, tau2: DEFAULT_TAU2 }
    }
}

impl Example3Spec {
    pub fn new(sigma: f64, tau2: f64) -> Result<Self> {
        let spec = Self { sigma, tau2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau2.is_finite() && self.tau2 > 0.0) {
            return Err(Error::InvalidInput(format!("tau2 must be positive, got {}", self.tau2)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Intercept `a` of `E[Y | Z = z] = a − b·z²`.
    pub fn predictive_intercept(&self) -> f64 {
        let s = 9.0 + self.tau2;
        27.75 - 9.0 * self.tau2 / s
    }

    /// Curvature `b` of `E[Y | Z = z] = a − b·z²`.
    pub fn predictive_curvature(&self) -> f64 {
        let s = 9.0 + self.tau2;
        1.0 - 18.0 / s + 81.0 / (s * s)
    }

    /// `y(z) = 18.75 − z²`.
    pub fn mean_response(&self, z: f64) -> f64 {
        18.75 - z * z
    }

    pub fn predictive_response(&self, z: f64) -> f64 {
        self.predictive_intercept() - self.predictive_curvature() * z * z
    }

    /// True revenue `R(z) = z·y(z)`.
    pub fn revenue(&self, z: f64) -> f64 {
        z * self.mean_response(z)
    }

    /// `z* = 2.5`.
    pub fn optimal_price(&self) -> f64 {
        2.5
    }

    /// `R(z*) = 31.25`.
    pub fn optimal_revenue(&self) -> f64 {
        self.revenue(self.optimal_price())
    }

    /// Maximizer of `z·(a − b·z²)`: `√(a/(3b))`.
    pub fn predictive_price(&self) -> f64 {
        (self.predictive_intercept() / (3.0 * self.predictive_curvature())).sqrt()
    }
}

/// Draws `n` records, also returning each record's potential-outcome curve.
///
/// Generator: ChaCha8 (`rand_chacha` 0.9) seeded with `seed_from_u64(seed)`;
/// standard normals from `rand_distr` 0.5's ziggurat `StandardNormal`,
/// drawn in the order `X, W, V` per record.
pub fn gen_example3_sample(spec: &Example3Spec, n: usize, seed: u64) -> Result<Sample> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = spec.tau2.sqrt();
    let (mut x, mut z, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut curves = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = rng.sample(StandardNormal);
        let wi: f64 = rng.sample::<f64, _>(StandardNormal) * tau;
        let vi: f64 = rng.sample::<f64, _>(StandardNormal) * spec.sigma;
        let zi = 3.0 * xi + wi;
        let c = [27.75 - 9.0 * xi * xi + vi, 6.0 * xi, -1.0];
        y.push(potential_outcome(xi, vi, zi));
        x.push(xi);
        z.push(zi);
        curves.push(c);
    }
    Ok(Sample {
        data: ObservationalDataset::new(x, 1, z, y)?,
        potential: Some(PotentialCurves::Quadratic { coefficients: curves }),
    })
}

/// `Y(z) = 27.75 − z² + 6xz − 9x² + v`.
#[inline]
pub fn potential_outcome(x: f64, v: f64, z: f64) -> f64 {
    27.75 - z * z + 6.0 * x * z - 9.0 * x * x + v
}

/// Draws `n` observational records; see [`gen_example3_sample`].
pub fn gen_example3(spec: &Example3Spec, n: usize, seed: u64) -> Result<ObservationalDataset> {
    Ok(gen_example3_sample(spec, n, seed)?.data)
}

/// Closed-form mean and predictive responses with a seeded sampler.
pub fn oracle_example3(spec: &Example3Spec) -> ResponseOracle {
    let (a, b) = (*spec, *spec);
    let s = *spec;
    ResponseOracle::new(move |z| a.mean_response(z), move |z| b.predictive_response(z))
        .with_sampler(move |n, seed| gen_example3_sample(&s, n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{predictive_reward, true_reward, RewardSpec};

    #[test]
    fn closed_form_constants() {
        let s = Example3Spec::default();
        assert!((s.predictive_intercept() - 22.108).abs() < 1e-3);
        assert!((s.predictive_curvature() - 0.393).abs() < 1e-3);
        // b = τ⁴/s² is the same quantity written differently.
        let sum = 9.0 + s.tau2;
        assert!((s.predictive_curvature() - s.tau2 * s.tau2 / (sum * sum)).abs() < 1e-15);
        assert!((s.predictive_price() - 4.330).abs() < 1e-3);
    }

    #[test]
    fn rewards() {
        let s = Example3Spec::default();
        let o = oracle_example3(&s);
        let r = RewardSpec::margin(0.0).unwrap();
        assert_eq!(true_reward(&o, &r, 2.5), 31.25);
        assert!(true_reward(&o, &r, 4.330).abs() < 0.02);
        let expected = 2.0 * (s.predictive_intercept() - 4.0 * s.predictive_curvature());
        assert_eq!(predictive_reward(&o, &r, 2.0), expected);
        assert!((expected - 41.072).abs() < 2e-3);
    }

    #[test]
    fn deterministic_and_noise_free_law() {
        let s = Example3Spec::new(0.0, DEFAULT_TAU2).unwrap();
        let a = gen_example3_sample(&s, 50, 3).unwrap();
        let b = gen_example3_sample(&s, 50, 3).unwrap();
        assert_eq!(a.data, b.data);
        let d = &a.data;
        for i in 0..d.len() {
            let x = d.x()[i];
            assert_eq!(d.y()[i], potential_outcome(x, 0.0, d.z()[i]));
            let curve = a.potential.as_ref().unwrap().eval(i, d.z()[i]).unwrap();
            assert!((curve - d.y()[i]).abs() < 1e-9);
        }
        assert_ne!(gen_example3(&s, 50, 4).unwrap(), a.data);
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(Example3Spec::new(1.0, 0.0).is_err());
        assert!(Example3Spec::new(-1.0, 1.0).is_err());
    }
}
