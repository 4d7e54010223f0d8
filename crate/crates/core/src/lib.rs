//! Predictive and prescriptive optimization from observational data.
//!
//! Historical records `(x, z, y)` of covariates, decisions and outcomes are
//! turned into estimated reward curves which are then maximized over a
//! decision space. The predictive route regresses the outcome on the
//! decision alone; the prescriptive routes adjust for the covariates, either
//! nonparametrically (a kernel partial mean) or through a generalized
//! propensity score. A bootstrap test checks whether a candidate decision is
//! distinguishable from the prescriptive optimum.

pub mod bounds;
pub mod dataset;
pub mod error;
pub mod hypothesis;
pub mod kernels;
pub mod optimize;
pub mod predictive;
pub mod prescriptive;
pub mod problem;
pub mod regression;
pub mod seeds;
pub mod simulation;

pub use dataset::ObservationalDataset;
pub use error::{Error, Result};
pub use kernels::{BandwidthRule, KernelFamily, KernelSpec};
pub use optimize::{optimize_scalar_curve, Optimum};
pub use problem::{DecisionSpace, ResponseOracle, RewardSpec};

/// The book's chapters, compiled so their snippets stay in step with the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/confounding.md")]
    mod confounding {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/predictive.md")]
    mod predictive {}
    #[doc = include_str!("../../../book/src/partial-mean.md")]
    mod partial_mean {}
    #[doc = include_str!("../../../book/src/gps.md")]
    mod gps {}
    #[doc = include_str!("../../../book/src/testing.md")]
    mod testing {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
