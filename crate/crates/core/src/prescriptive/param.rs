//! Generalized-propensity-score pipeline.
//!
//! 1. Fit a treatment model for `Z | X`.
//! 2. Impute scores `Q̂ᵢ = f̂(Zᵢ | Xᵢ)`.
//! 3. Regress `Y` on `Z` and features of `Q̂`.
//! 4. Maximize `r(z)·(1/n)·Σᵢ ŷ(z, f̂(z | Xᵢ))` over the decision grid.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::optimize::{argmax_on_grid, Optimum};
use crate::problem::{DecisionSpace, RewardSpec};
use crate::regression::{design_matrix, logistic_fit, ols_fit, sigmoid, FittedModel, LinearFit, LOGISTIC_MAX_ITER, LOGISTIC_TOL};

/// Densities are floored here so that `ln q` stays finite.
pub const GPS_FLOOR: f64 = 1e-300;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentFamily {
    /// `Z | X ~ N(β'x, τ²)`.
    GaussianIdentity,
    /// `ln Z | X ~ N(β'x, τ²)`.
    Lognormal,
}

impl FromStr for TreatmentFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" | "gaussian" | "gaussian_identity" => Ok(TreatmentFamily::GaussianIdentity),
            "lognormal" => Ok(TreatmentFamily::Lognormal),
            _ => Err(Error::InvalidInput(format!("unknown treatment family `{s}` (expected ols or lognormal)"))),
        }
    }
}

impl fmt::Display for TreatmentFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreatmentFamily::GaussianIdentity => "ols",
            TreatmentFamily::Lognormal => "lognormal",
        })
    }
}

/// Fitted conditional density of the decision given covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentModel {
    pub family: TreatmentFamily,
    /// Intercept first, then one coefficient per covariate.
    pub coefficients: Vec<f64>,
    /// Residual standard deviation `τ̂`.
    pub tau: f64,
}

impl TreatmentModel {
    pub fn covariate_dim(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Linear predictor `β'x` (of `Z` or of `ln Z`).
    pub fn location(&self, x: &[f64]) -> f64 {
        self.coefficients[0] + self.coefficients[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    /// `f̂(z | x)` floored at [`GPS_FLOOR`].
    pub fn density(&self, z: f64, x: &[f64]) -> f64 {
        let mu = self.location(x);
        let log_density = match self.family {
            TreatmentFamily::GaussianIdentity => {
                let s = (z - mu) / self.tau;
                -0.5 * s * s - self.tau.ln() - LN_SQRT_2PI
            }
            TreatmentFamily::Lognormal => {
                if z <= 0.0 {
                    return GPS_FLOOR;
                }
                let lz = z.ln();
                let s = (lz - mu) / self.tau;
                -0.5 * s * s - self.tau.ln() - LN_SQRT_2PI - lz
            }
        };
        log_density.exp().max(GPS_FLOOR)
    }
}

/// Least-squares fit of `Z` (or `ln Z`) on `(1, X)`; `τ̂² = RSS/(n−k−1)`.
pub fn fit_treatment_model(data: &ObservationalDataset, family: TreatmentFamily) -> Result<TreatmentModel> {
    let (n, k) = (data.len(), data.covariate_dim());
    if k == 0 {
        return Err(Error::InvalidInput("treatment model needs at least one covariate column".into()));
    }
    if n <= k + 1 {
        return Err(Error::InvalidInput(format!("treatment model needs more than {} records, got {n}", k + 1)));
    }
    let response: Vec<f64> = match family {
        TreatmentFamily::GaussianIdentity => data.z().to_vec(),
        TreatmentFamily::Lognormal => {
            if let Some(i) = data.z().iter().position(|&z| z <= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "lognormal treatment needs positive decisions, record {i} has z = {}",
                    data.z()[i]
                )));
            }
            data.z().iter().map(|z| z.ln()).collect()
        }
    };
    let design = design_matrix(n, k + 1, |i, row| {
        row[0] = 1.0;
        row[1..].copy_from_slice(data.x_row(i));
    });
    let fit = ols_fit(&design, &response)?;
    let tau = fit.residual_variance.sqrt();
    if !(tau > 0.0) {
        return Err(Error::InvalidInput("treatment residual variance is zero; the density is degenerate".into()));
    }
    Ok(TreatmentModel { family, coefficients: fit.coefficients, tau })
}

/// `Q̂ᵢ = f̂(Zᵢ | Xᵢ)`, each floored at [`GPS_FLOOR`].
pub fn impute_gps(model: &TreatmentModel, data: &ObservationalDataset) -> Result<Vec<f64>> {
    if data.covariate_dim() != model.covariate_dim() {
        return Err(Error::DimensionMismatch { expected: model.covariate_dim(), got: data.covariate_dim() });
    }
    Ok((0..data.len()).map(|i| model.density(data.z()[i], data.x_row(i))).collect())
}

/// Number of scores sitting at the floor.
pub fn floored_count(gps: &[f64]) -> usize {
    gps.iter().filter(|&&q| q <= GPS_FLOOR).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFamily {
    Linear,
    Logistic,
}

impl FromStr for OutcomeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(OutcomeFamily::Linear),
            "logit" | "logistic" => Ok(OutcomeFamily::Logistic),
            _ => Err(Error::InvalidInput(format!("unknown outcome family `{s}` (expected linear or logit)"))),
        }
    }
}

/// How the score enters the outcome model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpsFeature {
    /// Terms `q` and `q²`.
    QLinearQuadratic,
    /// Term `ln q`.
    LogQ,
}

impl FromStr for GpsFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quad" | "q_linear_quadratic" => Ok(GpsFeature::QLinearQuadratic),
            "log" | "log_q" => Ok(GpsFeature::LogQ),
            _ => Err(Error::InvalidInput(format!("unknown score feature `{s}` (expected quad or log)"))),
        }
    }
}

impl GpsFeature {
    fn width(self) -> usize {
        match self {
            GpsFeature::QLinearQuadratic => 4,
            GpsFeature::LogQ => 3,
        }
    }

    fn fill(self, z: f64, q: f64, row: &mut [f64]) {
        row[0] = 1.0;
        row[1] = z;
        match self {
            GpsFeature::QLinearQuadratic => {
                row[2] = q;
                row[3] = q * q;
            }
            GpsFeature::LogQ => row[2] = q.ln(),
        }
    }

    fn names(self) -> Vec<String> {
        let names: &[&str] = match self {
            GpsFeature::QLinearQuadratic => &["1", "z", "q", "q^2"],
            GpsFeature::LogQ => &["1", "z", "ln q"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

/// Fitted `ŷ(z, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub family: OutcomeFamily,
    pub feature: GpsFeature,
    /// Coefficients on `[1, z, q, q²]` or `[1, z, ln q]`.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    /// Residual variance of the least-squares fit; zero for the logistic family.
    pub residual_variance: f64,
}

impl OutcomeModel {
    pub fn predict(&self, z: f64, q: f64) -> f64 {
        let mut row = [0.0; 4];
        self.feature.fill(z, q, &mut row);
        let eta: f64 = self.coefficients.iter().zip(&row).map(|(b, v)| b * v).sum();
        match self.family {
            OutcomeFamily::Linear => eta,
            OutcomeFamily::Logistic => sigmoid(eta),
        }
    }

    pub fn to_fitted_model(&self) -> FittedModel {
        match self.family {
            OutcomeFamily::Linear => FittedModel::Linear {
                features: self.feature.names(),
                fit: LinearFit { coefficients: self.coefficients.clone(), residual_variance: self.residual_variance },
            },
            OutcomeFamily::Logistic => FittedModel::Logistic {
                features: self.feature.names(),
                fit: crate::regression::LogisticFit {
                    coefficients: self.coefficients.clone(),
                    converged: self.converged,
                    iterations: 0,
                },
            },
        }
    }
}

/// Regresses `Y` on `[1, Z, features(Q̂)]`.
pub fn fit_outcome_model(
    data: &ObservationalDataset,
    gps: &[f64],
    family: OutcomeFamily,
    feature: GpsFeature,
) -> Result<OutcomeModel> {
    if gps.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: gps.len() });
    }
    if let Some(i) = gps.iter().position(|&q| !(q > 0.0 && q.is_finite())) {
        return Err(Error::InvalidInput(format!("score {i} is not a positive finite density: {}", gps[i])));
    }
    let design = design_matrix(data.len(), feature.width(), |i, row| feature.fill(data.z()[i], gps[i], row));
    let (coefficients, converged, residual_variance) = match family {
        OutcomeFamily::Linear => {
            let fit = ols_fit(&design, data.y())?;
            (fit.coefficients, true, fit.residual_variance)
        }
        OutcomeFamily::Logistic => {
            let fit = logistic_fit(&design, data.y(), LOGISTIC_MAX_ITER, LOGISTIC_TOL)?;
            (fit.coefficients, fit.converged, 0.0)
        }
    };
    Ok(OutcomeModel { family, feature, coefficients, converged, residual_variance })
}

/// `r(z)·(1/n)·Σᵢ ŷ(z, f̂(z | Xᵢ))` at `z`.
pub fn gps_curve_value(
    treatment: &TreatmentModel,
    outcome: &OutcomeModel,
    data: &ObservationalDataset,
    reward: &RewardSpec,
    z: f64,
) -> f64 {
    let n = data.len();
    let sum: f64 = (0..n).map(|i| outcome.predict(z, treatment.density(z, data.x_row(i)))).sum();
    reward.eval(z) * sum / n as f64
}

/// The averaged dose-response reward on every node of `space`.
pub fn gps_curve(
    treatment: &TreatmentModel,
    outcome: &OutcomeModel,
    data: &ObservationalDataset,
    reward: &RewardSpec,
    space: &DecisionSpace,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if data.covariate_dim() != treatment.covariate_dim() {
        return Err(Error::DimensionMismatch { expected: treatment.covariate_dim(), got: data.covariate_dim() });
    }
    let nodes = space.grid();
    let values = nodes.par_iter().map(|&z| gps_curve_value(treatment, outcome, data, reward, z)).collect();
    Ok((nodes, values))
}

/// Grid maximizer of the averaged dose-response reward.
pub fn gps_prescribe(
    treatment: &TreatmentModel,
    outcome: &OutcomeModel,
    data: &ObservationalDataset,
    reward: &RewardSpec,
    space: &DecisionSpace,
) -> Result<Optimum> {
    let (nodes, values) = gps_curve(treatment, outcome, data, reward, space)?;
    argmax_on_grid(&nodes, &values)
}
