//! Repeated-sample study of decision strategies on the pricing instance.
//!
//! Each `(strategy, n, rep)` draws its own dataset, picks a decision `ẑₙ`,
//! and is scored by the true reward `R(ẑₙ)` from the closed form, not by a
//! held-out sample. The optimality test can be run on every decision too.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::hypothesis::{optimality_test, TestConfig};
use crate::kernels::{BandwidthRule, KernelFamily, KernelSpec};
use crate::predictive::{fit_predictive_nonparam, fit_predictive_param, predictive_decision, PredictiveFamily};
use crate::prescriptive::{
    fit_outcome_model, fit_treatment_model, gps_prescribe, impute_gps, OutcomeFamily, PartialMeanCurve,
    PartialMeanOptions, GpsFeature, TreatmentFamily,
};
use crate::problem::{DecisionSpace, RewardSpec};
use crate::seeds::derive_seed;
use crate::simulation::example3::{gen_example3, Example3Spec};

/// How a replication turns data into a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// The true optimum, ignoring the data.
    OracleOptimal,
    /// The exact maximizer of the confounded predictive reward.
    OraclePredictive,
    /// Kernel partial-mean estimate over decision and covariates.
    PrescriptiveNonparam,
    /// Generalized-propensity-score pipeline.
    PrescriptiveGps,
    /// Kernel regression on the decision alone.
    PredictiveNonparam,
    /// Least squares on the decision alone.
    PredictiveParam,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::OracleOptimal,
        Strategy::OraclePredictive,
        Strategy::PrescriptiveNonparam,
        Strategy::PrescriptiveGps,
        Strategy::PredictiveNonparam,
        Strategy::PredictiveParam,
    ];

    /// Stable index mixed into the per-replication seed.
    pub fn code(self) -> u64 {
        Strategy::ALL.iter().position(|&s| s == self).expect("listed") as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::OracleOptimal => "oracle_optimal",
            Strategy::OraclePredictive => "oracle_predictive",
            Strategy::PrescriptiveNonparam => "prescriptive_nonparam",
            Strategy::PrescriptiveGps => "prescriptive_gps",
            Strategy::PredictiveNonparam => "predictive_nonparam",
            Strategy::PredictiveParam => "predictive_param",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown strategy {s:?}")))
    }
}

/// Bootstrap settings for testing each replication's decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub draws: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicationConfig {
    pub spec: Example3Spec,
    /// Defaults to a step of 0.025 on [0, 5], finer than the prescriptive
    /// bandwidth at the sample sizes studied so the grid resolves the curve.
    pub space: DecisionSpace,
    pub reward: RewardSpec,
    /// Joint kernel on `(z, x)` for the partial mean and the test.
    pub prescriptive_kernel: KernelSpec,
    /// Kernel on `z` alone for predictive regression.
    pub predictive_kernel: KernelSpec,
    pub treatment: TreatmentFamily,
    pub outcome: OutcomeFamily,
    pub gps_feature: GpsFeature,
    pub options: PartialMeanOptions,
    /// Run the optimality test on each decision when set.
    pub test: Option<TestSettings>,
    pub seed: u64,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            spec: Example3Spec::default(),
            space: DecisionSpace::interval(0.0, 5.0, 201).expect("valid interval"),
            reward: RewardSpec::Margin { cost: 0.0 },
            prescriptive_kernel: KernelSpec { family: KernelFamily::Gaussian2, dim: 2, bandwidth: BandwidthRule::Rate { scale: 0.1 } },
            predictive_kernel: KernelSpec { family: KernelFamily::Gaussian2, dim: 1, bandwidth: BandwidthRule::Rate { scale: 2.5 } },
            treatment: TreatmentFamily::GaussianIdentity,
            outcome: OutcomeFamily::Linear,
            gps_feature: GpsFeature::LogQ,
            options: PartialMeanOptions::default(),
            test: None,
            seed: 0,
        }
    }
}

impl ReplicationConfig {
    /// Maximizer of `r(z)·(α − β z²)` on `z ≥ 0`.
    fn quadratic_maximizer(&self, alpha: f64, beta: f64) -> f64 {
        match self.reward {
            RewardSpec::Unit => 0.0,
            RewardSpec::Margin { cost } => (beta * cost + (beta * beta * cost * cost + 3.0 * alpha * beta).sqrt()) / (3.0 * beta),
        }
    }

    /// True optimum of `r(z)·y(z)`.
    pub fn optimal_decision(&self) -> f64 {
        self.quadratic_maximizer(18.75, 1.0)
    }

    /// Optimum of `r(z)·E[Y | Z = z]`.
    pub fn predictive_decision(&self) -> f64 {
        self.quadratic_maximizer(self.spec.predictive_intercept(), self.spec.predictive_curvature())
    }

    /// `R(z) = r(z)·y(z)`.
    pub fn true_reward(&self, z: f64) -> f64 {
        self.reward.eval(z) * self.spec.mean_response(z)
    }

    fn decide(&self, strategy: Strategy, data: &ObservationalDataset) -> Result<f64> {
        let space = &self.space;
        Ok(match strategy {
            Strategy::OracleOptimal => self.optimal_decision(),
            Strategy::OraclePredictive => self.predictive_decision(),
            Strategy::PrescriptiveNonparam => {
                PartialMeanCurve::new(data, &self.prescriptive_kernel, self.reward, space, self.options)?.decision()?.z
            }
            Strategy::PrescriptiveGps => {
                let treatment = fit_treatment_model(data, self.treatment)?;
                let gps = impute_gps(&treatment, data)?;
                let outcome = fit_outcome_model(data, &gps, self.outcome, self.gps_feature)?;
                gps_prescribe(&treatment, &outcome, data, &self.reward, space)?.z
            }
            Strategy::PredictiveNonparam => {
                let curve = fit_predictive_nonparam(data, &self.predictive_kernel, self.reward)?;
                predictive_decision(&curve, space)?.z
            }
            Strategy::PredictiveParam => {
                let curve = fit_predictive_param(data, PredictiveFamily::OlsLinear, self.reward, false)?;
                predictive_decision(&curve, space)?.z
            }
        })
    }
}

/// One replication's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRun {
    pub strategy: Strategy,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub z_hat: Option<f64>,
    pub reward: Option<f64>,
    pub p_value: Option<f64>,
    pub reject: Option<bool>,
    pub error: Option<String>,
}

/// Aggregate over the replications of one `(strategy, n)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub strategy: Strategy,
    pub n: usize,
    pub reps: usize,
    pub failures: usize,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    /// Median of `R(ẑₙ)/R(z*)`.
    pub median_ratio: f64,
    /// Fraction of tested replications that rejected, if testing was on.
    pub rejection_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub rows: Vec<ReplicationRow>,
    pub runs: Vec<ReplicationRun>,
    pub optimal_reward: f64,
}

impl ReplicationReport {
    pub fn row(&self, strategy: Strategy, n: usize) -> Option<&ReplicationRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.n == n)
    }
}

/// Type-7 sample quantile of ascending `sorted` (linear interpolation
/// between order statistics at `(len − 1)·p`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs every strategy at every sample size `reps` times, in parallel.
///
/// The dataset of a replication is seeded from `(seed, strategy, n, rep)`
/// and its bootstrap from that seed, so results do not depend on
/// scheduling. Failed replications are kept in `runs` with their error and
/// left out of the aggregates.
pub fn replication_study(
    strategies: &[Strategy],
    ns: &[usize],
    reps: usize,
    config: &ReplicationConfig,
) -> Result<ReplicationReport> {
    config.spec.validate()?;
    if reps == 0 || strategies.is_empty() || ns.is_empty() {
        return Err(Error::InvalidInput("need at least one strategy, sample size and replication".into()));
    }
    if let Some(t) = config.test {
        TestConfig::new(t.draws, t.alpha, config.prescriptive_kernel, config.space.clone(), 0)?;
    }
    let jobs: Vec<(Strategy, usize, usize)> = strategies
        .iter()
        .flat_map(|&s| ns.iter().flat_map(move |&n| (0..reps).map(move |r| (s, n, r))))
        .collect();
    let runs: Vec<ReplicationRun> = jobs.par_iter().map(|&(s, n, rep)| run_one(config, s, n, rep)).collect();

    let optimal_reward = config.true_reward(config.optimal_decision());
    let mut rows = Vec::new();
    for &strategy in strategies {
        for &n in ns {
            let group: Vec<&ReplicationRun> = runs.iter().filter(|r| r.strategy == strategy && r.n == n).collect();
            let mut rewards: Vec<f64> = group.iter().filter_map(|r| r.reward).collect();
            rewards.sort_by(f64::total_cmp);
            let failures = group.len() - rewards.len();
            let (median, p10, p90) = if rewards.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (quantile(&rewards, 0.5), quantile(&rewards, 0.1), quantile(&rewards, 0.9))
            };
            let tested: Vec<bool> = group.iter().filter_map(|r| r.reject).collect();
            let rejection_frequency = (!tested.is_empty())
                .then(|| tested.iter().filter(|&&b| b).count() as f64 / tested.len() as f64);
            rows.push(ReplicationRow {
                strategy,
                n,
                reps,
                failures,
                median,
                p10,
                p90,
                median_ratio: median / optimal_reward,
                rejection_frequency,
            });
        }
    }
    Ok(ReplicationReport { rows, runs, optimal_reward })
}

fn run_one(config: &ReplicationConfig, strategy: Strategy, n: usize, rep: usize) -> ReplicationRun {
    let seed = derive_seed(config.seed, &[strategy.code(), n as u64, rep as u64]);
    let mut run = ReplicationRun { strategy, n, rep, seed, z_hat: None, reward: None, p_value: None, reject: None, error: None };
    let outcome = (|| -> Result<()> {
        let data = gen_example3(&config.spec, n, seed)?;
        let z = config.decide(strategy, &data)?;
        run.z_hat = Some(z);
        run.reward = Some(config.true_reward(z));
        if let Some(t) = config.test {
            let mut test = TestConfig::new(t.draws, t.alpha, config.prescriptive_kernel, config.space.clone(), derive_seed(seed, &[1]))?;
            test.options = config.options;
            let result = optimality_test(&data, z, &test, config.reward)?;
            run.p_value = Some(result.p_value);
            run.reject = Some(result.reject);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        run.reward = None;
        run.error = Some(e.to_string());
    }
    run
}
