//! Prescriptive strategies that adjust for observed covariates.

pub mod nonparam;
pub mod param;

pub use nonparam::{
    asymptotic_constants, partial_mean_eval, prescriptive_nonparam_decision, AsymptoticDiagnostics, PartialMeanCurve,
    PartialMeanOptions,
};
pub use param::{
    fit_outcome_model, fit_treatment_model, gps_curve, gps_curve_value, gps_prescribe, impute_gps, GpsFeature, OutcomeFamily, OutcomeModel,
    TreatmentFamily, TreatmentModel,
};
