//! Predictive strategies: regress the outcome on the decision alone and
//! optimize the fitted reward.
//!
//! These ignore covariates, so under confounding they target `r(z)·E[Y|Z=z]`
//! rather than the causal `r(z)·E[Y(z)]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::optimize::{argmax_on_grid, Optimum};
use crate::problem::{DecisionSpace, RewardSpec};
use crate::regression::{
    design_matrix, logistic_fit, ols_fit, FittedModel, LinearFit, LogisticFit, ModelDocument, NWRegression,
    LOGISTIC_MAX_ITER, LOGISTIC_TOL,
};

/// Parametric predictive families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictiveFamily {
    OlsLinear,
    Logistic,
}

impl FromStr for PredictiveFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" | "ols_linear" => Ok(PredictiveFamily::OlsLinear),
            "logit" | "logistic" => Ok(PredictiveFamily::Logistic),
            _ => Err(Error::InvalidInput(format!("unknown predictive family `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Estimator {
    Kernel(NWRegression),
    Linear { fit: LinearFit, quadratic: bool },
    Logistic { fit: LogisticFit, quadratic: bool },
}

/// A fitted estimate of `z ↦ r(z)·E[Y | Z = z]`.
#[derive(Debug, Clone)]
pub struct PredictiveCurve {
    estimator: Estimator,
    reward: RewardSpec,
}

impl PredictiveCurve {
    pub fn eval(&self, z: f64) -> Result<f64> {
        match &self.estimator {
            Estimator::Kernel(nw) => nw.predict(&[z]),
            Estimator::Linear { fit, quadratic } => Ok(self.reward.eval(z) * fit.predict(&features(z, *quadratic))),
            Estimator::Logistic { fit, quadratic } => Ok(self.reward.eval(z) * fit.predict(&features(z, *quadratic))),
        }
    }

    pub fn reward(&self) -> RewardSpec {
        self.reward
    }

    /// Name of the fitted variant.
    pub fn variant(&self) -> &'static str {
        match self.estimator {
            Estimator::Kernel(_) => "nonparam_nw",
            Estimator::Linear { .. } => "param_ols_linear",
            Estimator::Logistic { .. } => "param_logistic",
        }
    }

    pub fn model_document(&self) -> ModelDocument {
        let names = |q: bool| {
            let mut f = vec!["1".to_string(), "z".to_string()];
            if q {
                f.push("z^2".into());
            }
            f
        };
        let model = match &self.estimator {
            Estimator::Kernel(nw) => FittedModel::Kernel {
                family: nw.family(),
                bandwidth: nw.bandwidth(),
                n: nw.len(),
                standardizer: None,
            },
            Estimator::Linear { fit, quadratic } => FittedModel::Linear { features: names(*quadratic), fit: fit.clone() },
            Estimator::Logistic { fit, quadratic } => {
                FittedModel::Logistic { features: names(*quadratic), fit: fit.clone() }
            }
        };
        ModelDocument::new(vec![model])
    }
}

fn features(z: f64, quadratic: bool) -> Vec<f64> {
    if quadratic {
        vec![1.0, z, z * z]
    } else {
        vec![1.0, z]
    }
}

/// Kernel regression of `r(Zᵢ)Yᵢ` on `Zᵢ`, bandwidth from the kernel's rule.
pub fn fit_predictive_nonparam(
    data: &ObservationalDataset,
    kernel: &KernelSpec,
    reward: RewardSpec,
) -> Result<PredictiveCurve> {
    if kernel.dim != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: kernel.dim });
    }
    // A single record has no sample-size rate; any positive bandwidth gives the same ratio.
    let h = if data.len() < 2 { kernel.bandwidth.bandwidth(2)? } else { kernel.bandwidth.bandwidth(data.len())? };
    let targets: Vec<f64> = data.z().iter().zip(data.y()).map(|(&z, &y)| reward.eval(z) * y).collect();
    let nw = NWRegression::new(data.z().to_vec(), targets, kernel, h)?;
    Ok(PredictiveCurve { estimator: Estimator::Kernel(nw), reward })
}

/// Least-squares or logistic regression of `Y` on `(1, Z)`, or on
/// `(1, Z, Z²)` when `quadratic` is set.
pub fn fit_predictive_param(
    data: &ObservationalDataset,
    family: PredictiveFamily,
    reward: RewardSpec,
    quadratic: bool,
) -> Result<PredictiveCurve> {
    let p = if quadratic { 3 } else { 2 };
    let z = data.z();
    let design = design_matrix(data.len(), p, |i, row| row.copy_from_slice(&features(z[i], quadratic)));
    let estimator = match family {
        PredictiveFamily::OlsLinear => Estimator::Linear { fit: ols_fit(&design, data.y())?, quadratic },
        PredictiveFamily::Logistic => {
            Estimator::Logistic { fit: logistic_fit(&design, data.y(), LOGISTIC_MAX_ITER, LOGISTIC_TOL)?, quadratic }
        }
    };
    Ok(PredictiveCurve { estimator, reward })
}

/// Maximizes the fitted curve over the grid of `space`.
pub fn predictive_decision(curve: &PredictiveCurve, space: &DecisionSpace) -> Result<Optimum> {
    let nodes = space.grid();
    let values = nodes.iter().map(|&z| curve.eval(z)).collect::<Result<Vec<_>>>()?;
    argmax_on_grid(&nodes, &values)
}

impl fmt::Display for PredictiveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictiveFamily::OlsLinear => "ols",
            PredictiveFamily::Logistic => "logit",
        })
    }
}
