//! Rewards, decision spaces and ground-truth response oracles.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};

/// The certain part `r(z)` of the reward `r(z)·Y(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RewardSpec {
    /// `r(z) = z - cost`, per-unit profit at price `z`.
    Margin { cost: f64 },
    /// `r(z) = 1`.
    Unit,
}

impl RewardSpec {
    pub fn margin(cost: f64) -> Result<Self> {
        if !cost.is_finite() {
            return Err(Error::InvalidInput(format!("margin cost must be finite, got {cost}")));
        }
        Ok(RewardSpec::Margin { cost })
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            RewardSpec::Margin { cost } => z - cost,
            RewardSpec::Unit => 1.0,
        }
    }
}

impl fmt::Display for RewardSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardSpec::Margin { cost } => write!(f, "margin:{cost}"),
            RewardSpec::Unit => write!(f, "unit"),
        }
    }
}

impl FromStr for RewardSpec {
    type Err = Error;

    /// Parses `margin:<c>` or `unit`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "unit" => Ok(RewardSpec::Unit),
            other => {
                let cost = other
                    .strip_prefix("margin:")
                    .and_then(|c| c.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("reward must be `margin:<c>` or `unit`, got `{s}`")))?;
                RewardSpec::margin(cost)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SpaceKind {
    Interval { lo: f64, hi: f64, grid_points: usize },
    Finite { decisions: Vec<f64> },
}

/// Feasible decisions: a compact interval evaluated on a uniform grid, or
/// an explicit finite list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionSpace {
    kind: SpaceKind,
}

impl DecisionSpace {
    /// Interval `[lo, hi]` with `grid_points` uniform nodes, endpoints included.
    pub fn interval(lo: f64, hi: f64, grid_points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("decision interval needs finite lo < hi, got [{lo}, {hi}]")));
        }
        if grid_points < 2 {
            return Err(Error::InvalidInput(format!("grid_points must be at least 2, got {grid_points}")));
        }
        Ok(Self { kind: SpaceKind::Interval { lo, hi, grid_points } })
    }

    /// Explicit finite decision set, sorted ascending with duplicates removed.
    pub fn finite(mut decisions: Vec<f64>) -> Result<Self> {
        if decisions.is_empty() || decisions.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidInput("finite decision set must be non-empty and finite".into()));
        }
        decisions.sort_by(f64::total_cmp);
        decisions.dedup();
        Ok(Self { kind: SpaceKind::Finite { decisions } })
    }

    pub fn lo(&self) -> f64 {
        match &self.kind {
            SpaceKind::Interval { lo, .. } => *lo,
            SpaceKind::Finite { decisions } => decisions[0],
        }
    }

    pub fn hi(&self) -> f64 {
        match &self.kind {
            SpaceKind::Interval { hi, .. } => *hi,
            SpaceKind::Finite { decisions } => decisions[decisions.len() - 1],
        }
    }

    /// Grid spacing for intervals; `None` for finite sets.
    pub fn step(&self) -> Option<f64> {
        match &self.kind {
            SpaceKind::Interval { lo, hi, grid_points } => Some((hi - lo) / (*grid_points - 1) as f64),
            SpaceKind::Finite { .. } => None,
        }
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            SpaceKind::Interval { grid_points, .. } => *grid_points,
            SpaceKind::Finite { decisions } => decisions.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node `i` of the evaluation grid.
    ///
    /// Interval nodes are `lo + (hi - lo)·i/(m - 1)`, multiplying before
    /// dividing so that nodes of a grid are also exact nodes of its
    /// refinements.
    pub fn node(&self, i: usize) -> f64 {
        match &self.kind {
            SpaceKind::Interval { lo, hi, grid_points } => {
                if i + 1 == *grid_points {
                    *hi
                } else {
                    lo + (hi - lo) * i as f64 / (*grid_points - 1) as f64
                }
            }
            SpaceKind::Finite { decisions } => decisions[i],
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, z: f64) -> bool {
        match &self.kind {
            SpaceKind::Interval { lo, hi, .. } => z >= *lo && z <= *hi,
            SpaceKind::Finite { decisions } => decisions.contains(&z),
        }
    }

    /// Grid node closest to `z` (ties go to the smaller node).
    pub fn snap(&self, z: f64) -> f64 {
        let mut best = self.node(0);
        for i in 1..self.len() {
            let node = self.node(i);
            if (node - z).abs() < (best - z).abs() {
                best = node;
            }
        }
        best
    }

    pub fn is_interval(&self) -> bool {
        matches!(self.kind, SpaceKind::Interval { .. })
    }
}

impl FromStr for DecisionSpace {
    type Err = Error;

    /// Parses `lo,hi,points` (interval) or `{z1;z2;...}` (finite set).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            let decisions = inner
                .split(';')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::InvalidInput(format!("cannot parse decision set `{s}`")))?;
            return DecisionSpace::finite(decisions);
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::InvalidInput(format!("space must be `lo,hi,points`, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo = parts[0].parse().map_err(|_| bad())?;
        let hi = parts[1].parse().map_err(|_| bad())?;
        let points = parts[2].parse().map_err(|_| bad())?;
        DecisionSpace::interval(lo, hi, points)
    }
}

impl fmt::Display for DecisionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SpaceKind::Interval { lo, hi, grid_points } => write!(f, "{lo},{hi},{grid_points}"),
            SpaceKind::Finite { decisions } => {
                let parts: Vec<String> = decisions.iter().map(|d| d.to_string()).collect();
                write!(f, "{{{}}}", parts.join(";"))
            }
        }
    }
}

/// Potential-outcome curves `Y_i(·)` retained alongside a synthetic sample.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialCurves {
    /// `Y_i(d)` for each decision `d` in a finite list; `values[i][m]` is
    /// record `i` under `decisions[m]`.
    Tabulated { decisions: Vec<f64>, values: Vec<Vec<f64>> },
    /// `Y_i(z) = c0 + c1·z + c2·z²` per record.
    Quadratic { coefficients: Vec<[f64; 3]> },
}

impl PotentialCurves {
    /// `Y_i(z)`, or `None` when `z` is not tabulated.
    pub fn eval(&self, i: usize, z: f64) -> Option<f64> {
        match self {
            PotentialCurves::Tabulated { decisions, values } => {
                let m = decisions.iter().position(|&d| d == z)?;
                values.get(i).map(|row| row[m])
            }
            PotentialCurves::Quadratic { coefficients } => {
                coefficients.get(i).map(|c| c[0] + c[1] * z + c[2] * z * z)
            }
        }
    }
}

/// A synthetic draw: the observed data and, when available, the full
/// potential-outcome curves of each record.
#[derive(Debug, Clone)]
pub struct Sample {
    pub data: ObservationalDataset,
    pub potential: Option<PotentialCurves>,
}

type CurveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SamplerFn = Arc<dyn Fn(usize, u64) -> Result<Sample> + Send + Sync>;

/// Ground truth for a synthetic instance: the mean response `y(z) = E[Y(z)]`,
/// the predictive response `ỹ(z) = E[Y | Z = z]`, and a seeded sampler.
#[derive(Clone)]
pub struct ResponseOracle {
    mean_response: CurveFn,
    predictive_response: CurveFn,
    sampler: Option<SamplerFn>,
}

impl fmt::Debug for ResponseOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResponseOracle").field("has_sampler", &self.sampler.is_some()).finish()
    }
}

impl ResponseOracle {
    pub fn new(
        mean_response: impl Fn(f64) -> f64 + Send + Sync + 'static,
        predictive_response: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            mean_response: Arc::new(mean_response),
            predictive_response: Arc::new(predictive_response),
            sampler: None,
        }
    }

    /// Attaches a sampler; it must be a deterministic function of `(n, seed)`.
    pub fn with_sampler(mut self, sampler: impl Fn(usize, u64) -> Result<Sample> + Send + Sync + 'static) -> Self {
        self.sampler = Some(Arc::new(sampler));
        self
    }

    pub fn mean_response(&self, z: f64) -> f64 {
        (self.mean_response)(z)
    }

    pub fn predictive_response(&self, z: f64) -> f64 {
        (self.predictive_response)(z)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        match &self.sampler {
            Some(s) => s(n, seed),
            None => Err(Error::InvalidInput("oracle has no sampler".into())),
        }
    }
}

/// True reward `R(z) = r(z)·y(z)`.
pub fn true_reward(oracle: &ResponseOracle, reward: &RewardSpec, z: f64) -> f64 {
    reward.eval(z) * oracle.mean_response(z)
}

/// Predictive reward `R̃(z) = r(z)·ỹ(z)`.
pub fn predictive_reward(oracle: &ResponseOracle, reward: &RewardSpec, z: f64) -> f64 {
    reward.eval(z) * oracle.predictive_response(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_parsing() {
        assert_eq!("unit".parse::<RewardSpec>().unwrap(), RewardSpec::Unit);
        assert_eq!("margin:19".parse::<RewardSpec>().unwrap(), RewardSpec::Margin { cost: 19.0 });
        assert!("margin:inf".parse::<RewardSpec>().is_err());
        assert!("profit".parse::<RewardSpec>().is_err());
        assert_eq!(RewardSpec::Margin { cost: 0.02 }.to_string(), "margin:0.02");
    }

    #[test]
    fn interval_grid_includes_endpoints() {
        let space = DecisionSpace::interval(0.0, 5.0, 501).unwrap();
        let grid = space.grid();
        assert_eq!(grid.len(), 501);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid[250], 2.5);
        assert_eq!(grid[500], 5.0);
        assert_eq!(space.step(), Some(0.01));
    }

    #[test]
    fn refined_grid_contains_coarse_nodes() {
        let coarse = DecisionSpace::interval(-1.3, 4.7, 37).unwrap();
        let fine = DecisionSpace::interval(-1.3, 4.7, 73).unwrap();
        for i in 0..37 {
            assert_eq!(coarse.node(i), fine.node(2 * i));
        }
    }

    #[test]
    fn invalid_spaces() {
        assert!(DecisionSpace::interval(1.0, 1.0, 10).is_err());
        assert!(DecisionSpace::interval(0.0, 1.0, 1).is_err());
        assert!(DecisionSpace::finite(vec![]).is_err());
    }

    #[test]
    fn space_parsing() {
        let s: DecisionSpace = "0,6,61".parse().unwrap();
        assert_eq!(s.len(), 61);
        assert_eq!(s.to_string(), "0,6,61");
        let f: DecisionSpace = "{28;20}".parse().unwrap();
        assert_eq!(f.grid(), vec![20.0, 28.0]);
        assert!(f.contains(28.0) && !f.contains(24.0));
        assert_eq!(f.to_string(), "{20;28}");
    }

    #[test]
    fn unit_reward_constant_oracle() {
        let oracle = ResponseOracle::new(|_| 5.0, |_| 5.0);
        for z in [-3.0, 0.0, 17.5] {
            assert_eq!(true_reward(&oracle, &RewardSpec::Unit, z), 5.0);
            assert_eq!(predictive_reward(&oracle, &RewardSpec::Unit, z), true_reward(&oracle, &RewardSpec::Unit, z));
        }
    }
}
