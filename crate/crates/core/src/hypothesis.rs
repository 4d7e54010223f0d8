//! Bootstrap test of whether a candidate decision attains the optimal
//! causal reward.
//!
//! The statistic is `ρ = R̄(z̄) − R̄(ẑ)`, the gap between the partial-mean
//! curve at its grid maximizer and at the candidate. Under the null,
//! `n·h³·ρ` is asymptotically `Γ·χ²₁`; the nuisance `Γ` is estimated by
//! `Γ̂ = (n·h³/B)·Σ_b [R̄_b(z̄_b) − R̄_b(z̄)]` over `B` row resamples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::prescriptive::nonparam::{PartialMeanCurve, PartialMeanOptions};
use crate::problem::{DecisionSpace, RewardSpec};
use crate::seeds::derive_seed;

/// `Γ̂` at or below this is treated as zero.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// Extra attempts for a resample whose curve cannot be built.
pub const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    /// Number of bootstrap draws `B`.
    pub draws: usize,
    pub alpha: f64,
    /// Joint kernel of dimension `1 + k`, including the bandwidth rule.
    pub kernel: KernelSpec,
    pub space: DecisionSpace,
    pub seed: u64,
    /// Snap the candidate to the nearest grid node before evaluation.
    #[serde(default)]
    pub snap: bool,
    #[serde(default)]
    pub options: PartialMeanOptions,
}

impl TestConfig {
    pub fn new(draws: usize, alpha: f64, kernel: KernelSpec, space: DecisionSpace, seed: u64) -> Result<Self> {
        let config = Self { draws, alpha, kernel, space, seed, snap: false, options: PartialMeanOptions::default() };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 bootstrap draws, got {}", self.draws)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::OutOfRange { name: "alpha", value: self.alpha, lo: 0.0, hi: 1.0 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub rho_n: f64,
    pub gamma_hat: f64,
    /// `n·h³·ρ/Γ̂`; 0 or `f64::MAX` when `Γ̂` is degenerate.
    pub scaled_statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub z_bar: f64,
    pub z_hat: f64,
    pub n: usize,
    pub bandwidth: f64,
    /// `Γ̂` fell below [`GAMMA_FLOOR`] and the p-value was set by the sign of `ρ`.
    pub degenerate: bool,
    /// Resamples that had to be redrawn.
    pub retries: usize,
    /// Per-draw `A_b`.
    #[serde(skip)]
    pub draws: Vec<f64>,
}

/// `Γ̂` and the per-draw terms `A_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    pub gamma_hat: f64,
    pub draws: Vec<f64>,
    pub retries: usize,
}

fn check_candidate(config: &TestConfig, z_hat: f64) -> Result<f64> {
    let space = &config.space;
    if !z_hat.is_finite() || z_hat < space.lo() || z_hat > space.hi() {
        return Err(Error::OutOfRange { name: "candidate", value: z_hat, lo: space.lo(), hi: space.hi() });
    }
    Ok(if config.snap { space.snap(z_hat) } else { z_hat })
}

/// `(ρ, z̄, curve)` for a candidate, evaluated exactly (not grid-snapped)
/// unless the config asks for snapping.
pub fn test_statistic(
    data: &ObservationalDataset,
    z_hat: f64,
    config: &TestConfig,
    reward: RewardSpec,
) -> Result<(f64, f64, PartialMeanCurve)> {
    config.validate()?;
    let z_hat = check_candidate(config, z_hat)?;
    let curve = PartialMeanCurve::new(data, &config.kernel, reward, &config.space, config.options)?;
    let best = curve.decision()?;
    let rho = best.value - value_at(&curve, z_hat)?;
    Ok((rho, best.z, curve))
}

/// Curve value at `z`, from the grid cache when `z` is a node.
fn value_at(curve: &PartialMeanCurve, z: f64) -> Result<f64> {
    match curve.nodes().iter().position(|&node| node == z) {
        Some(i) => Ok(curve.values()[i]),
        None => curve.eval(z),
    }
}

/// Multiplicities of `n` indices drawn uniformly with replacement.
fn resample_counts(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1.0;
    }
    counts
}

/// Bootstrap estimate of `Γ` around the grid maximizer `z_bar` of `curve`.
///
/// Draw `b` uses a generator seeded from `(seed, b, attempt)`, so the
/// result does not depend on how draws are scheduled across threads.
pub fn bootstrap_gamma_for_curve(curve: &PartialMeanCurve, z_bar: f64, config: &TestConfig) -> Result<BootstrapOutcome> {
    config.validate()?;
    let n = curve.len();
    let outcomes: Vec<Result<(f64, usize)>> = (0..config.draws)
        .into_par_iter()
        .map(|b| {
            let mut last = None;
            for attempt in 0..=MAX_RETRIES {
                let counts = resample_counts(n, derive_seed(config.seed, &[b as u64, attempt as u64]));
                let result = curve.reweighted(counts).and_then(|boot| {
                    let best = boot.decision()?;
                    Ok(best.value - value_at(&boot, z_bar)?)
                });
                match result {
                    Ok(a) => return Ok((a, attempt)),
                    Err(e) => last = Some(e),
                }
            }
            Err(Error::BootstrapFailed {
                draw: b,
                attempts: MAX_RETRIES + 1,
                source: Box::new(last.expect("at least one attempt")),
            })
        })
        .collect();
    let mut draws = Vec::with_capacity(config.draws);
    let mut retries = 0;
    for outcome in outcomes {
        let (a, r) = outcome?;
        draws.push(a);
        retries += r;
    }
    let h = curve.bandwidth();
    let scale = n as f64 * h * h * h;
    let gamma_hat = scale / config.draws as f64 * draws.iter().sum::<f64>();
    Ok(BootstrapOutcome { gamma_hat, draws, retries })
}

/// Builds the curve on `data` and runs [`bootstrap_gamma_for_curve`].
pub fn bootstrap_gamma(
    data: &ObservationalDataset,
    z_bar: f64,
    config: &TestConfig,
    reward: RewardSpec,
) -> Result<BootstrapOutcome> {
    let curve = PartialMeanCurve::new(data, &config.kernel, reward, &config.space, config.options)?;
    bootstrap_gamma_for_curve(&curve, z_bar, config)
}

/// `1 − F_{χ²₁}(s)`.
pub fn chi2_1_sf(s: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    let chi = ChiSquared::new(1.0).expect("one degree of freedom");
    (1.0 - chi.cdf(s)).clamp(0.0, 1.0)
}

/// The full test for a candidate decision.
pub fn optimality_test(
    data: &ObservationalDataset,
    z_hat: f64,
    config: &TestConfig,
    reward: RewardSpec,
) -> Result<TestResult> {
    let z_hat = check_candidate(config, z_hat)?;
    let (rho, z_bar, curve) = test_statistic(data, z_hat, config, reward)?;
    let boot = bootstrap_gamma_for_curve(&curve, z_bar, config)?;
    let n = data.len();
    let h = curve.bandwidth();
    let nh3 = n as f64 * h * h * h;
    let degenerate = boot.gamma_hat <= GAMMA_FLOOR;
    let (scaled_statistic, p_value) = if degenerate {
        if rho <= GAMMA_FLOOR {
            (0.0, 1.0)
        } else {
            (f64::MAX, 0.0)
        }
    } else {
        let s = nh3 * rho / boot.gamma_hat;
        (s, chi2_1_sf(s))
    };
    Ok(TestResult {
        rho_n: rho,
        gamma_hat: boot.gamma_hat,
        scaled_statistic,
        p_value,
        reject: p_value < config.alpha,
        z_bar,
        z_hat,
        n,
        bandwidth: h,
        degenerate,
        retries: boot.retries,
        draws: boot.draws,
    })
}
