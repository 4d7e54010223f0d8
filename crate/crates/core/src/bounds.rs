//! Suboptimality guarantees for pricing on a linear demand curve.
//!
//! With demand `y(z) = d0 − λ(z − c)` and margin reward `r(z) = z − c`, the
//! true profit `R(z) = (z − c)·y(z)` peaks at `z* = c + d0/(2λ)`. A
//! predictive model sees `ỹ(z) = y(z) + E(z)` instead, where `E` is the
//! confounding error, and prices at the maximizer `z̃` of `(z − c)·ỹ(z)`.
//! If `|E| ≤ γ·d0` the ratio `R(z̃)/R(z*)` is bounded below by
//! [`bound_thm2`], or by the stronger [`bound_thm4`] when `E` is
//! non-increasing; [`bound_thm3`] covers jointly normal noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::DecisionSpace;
use crate::seeds::derive_seed;

/// Values of the confounded objective within this relative distance of the
/// maximum count as ties, resolved toward the worst true profit.
pub const TIE_TOLERANCE: f64 = 1e-12;

fn unit_interval(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::OutOfRange { name, value: v, lo: 0.0, hi: 1.0 });
    }
    Ok(())
}

/// `1 − 4γ − 4γ^{3/2} − γ²`: bounded confounding, `|E| ≤ γ·d0`.
pub fn bound_thm2(gamma: f64) -> Result<f64> {
    unit_interval("gamma", gamma)?;
    Ok(1.0 - 4.0 * gamma - 4.0 * gamma * gamma.sqrt() - gamma * gamma)
}

/// `1 − ρ²` with `ρ = E[Y]/d0`: jointly normal, non-positively correlated noise.
pub fn bound_thm3(demand_ratio: f64) -> Result<f64> {
    unit_interval("demand_ratio", demand_ratio)?;
    Ok(1.0 - demand_ratio * demand_ratio)
}

/// `1 − 4γ + 4γ^{3/2} − γ²`: bounded and non-increasing confounding.
pub fn bound_thm4(gamma: f64) -> Result<f64> {
    unit_interval("gamma", gamma)?;
    Ok(1.0 - 4.0 * gamma + 4.0 * gamma * gamma.sqrt() - gamma * gamma)
}

/// Largest `γ` for which [`bound_thm2`] is non-negative: `3 − √8`.
pub fn thm2_breakeven() -> f64 {
    3.0 - 8f64.sqrt()
}

/// Negative lower bounds carry no information; report them as 0.
pub fn clamp_bound(bound: f64) -> f64 {
    bound.max(0.0)
}

/// Which bound a sweep evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    Bounded,
    JointlyNormal,
    Monotone,
}

impl Theorem {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            2 => Ok(Theorem::Bounded),
            3 => Ok(Theorem::JointlyNormal),
            4 => Ok(Theorem::Monotone),
            _ => Err(Error::InvalidInput(format!("unknown bound {n}; expected 2, 3 or 4"))),
        }
    }

    pub fn bound(self, v: f64) -> Result<f64> {
        match self {
            Theorem::Bounded => bound_thm2(v),
            Theorem::JointlyNormal => bound_thm3(v),
            Theorem::Monotone => bound_thm4(v),
        }
    }
}

/// The confounding error `E(z) = E[ε | Z = z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Confounding {
    Constant { value: f64 },
    /// `values[i]` on `[breaks[i-1], breaks[i])`, with `breaks` ascending and
    /// one more value than breaks; each break belongs to the piece on its right.
    Step { breaks: Vec<f64>, values: Vec<f64> },
    /// `slope·(z − center)`.
    Linear { slope: f64, center: f64 },
}

impl Confounding {
    fn validate(&self) -> Result<()> {
        match self {
            Confounding::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidInput("confounding value must be finite".into()))
            }
            Confounding::Step { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(Error::DimensionMismatch { expected: breaks.len() + 1, got: values.len() });
                }
                if breaks.iter().chain(values).any(|v| !v.is_finite()) || breaks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidInput("step breaks must be finite and strictly increasing".into()));
                }
                Ok(())
            }
            Confounding::Linear { slope, center } if !(slope.is_finite() && center.is_finite()) => {
                Err(Error::InvalidInput("linear confounding needs finite slope and center".into()))
            }
            _ => Ok(()),
        }
    }

    fn piece(breaks: &[f64], z: f64) -> usize {
        breaks.partition_point(|&b| b <= z)
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Confounding::Constant { value } => *value,
            Confounding::Step { breaks, values } => values[Self::piece(breaks, z)],
            Confounding::Linear { slope, center } => slope * (z - center),
        }
    }

    pub fn is_non_increasing(&self) -> bool {
        match self {
            Confounding::Constant { .. } => true,
            Confounding::Step { values, .. } => values.windows(2).all(|w| w[1] <= w[0]),
            Confounding::Linear { slope, .. } => *slope <= 0.0,
        }
    }

    /// `sup |E(z)|` over `[lo, hi]`.
    pub fn sup_abs(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Confounding::Constant { value } => value.abs(),
            Confounding::Step { breaks, values } => {
                let (a, b) = (Self::piece(breaks, lo), Self::piece(breaks, hi));
                values[a..=b].iter().fold(0.0, |m, v| m.max(v.abs()))
            }
            Confounding::Linear { .. } => self.eval(lo).abs().max(self.eval(hi).abs()),
        }
    }
}

/// Linear demand `y(z) = d0 − λ(z − c)` observed through confounding `E(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDemandInstance {
    pub d0: f64,
    pub lambda: f64,
    pub c: f64,
    pub confounding: Confounding,
}

impl LinearDemandInstance {
    pub fn new(d0: f64, lambda: f64, c: f64, confounding: Confounding) -> Result<Self> {
        if !(d0.is_finite() && d0 > 0.0) {
            return Err(Error::InvalidInput(format!("d0 must be positive, got {d0}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        if !c.is_finite() {
            return Err(Error::InvalidInput("cost must be finite".into()));
        }
        confounding.validate()?;
        Ok(Self { d0, lambda, c, confounding })
    }

    pub fn demand(&self, z: f64) -> f64 {
        self.d0 - self.lambda * (z - self.c)
    }

    pub fn observed_demand(&self, z: f64) -> f64 {
        self.demand(z) + self.confounding.eval(z)
    }

    /// `R(z) = (z − c)·y(z)`.
    pub fn profit(&self, z: f64) -> f64 {
        (z - self.c) * self.demand(z)
    }

    pub fn observed_profit(&self, z: f64) -> f64 {
        (z - self.c) * self.observed_demand(z)
    }

    /// `z* = c + d0/(2λ)`.
    pub fn optimal_price(&self) -> f64 {
        self.c + self.d0 / (2.0 * self.lambda)
    }

    /// `R(z*) = d0²/(4λ)`.
    pub fn optimal_profit(&self) -> f64 {
        self.d0 * self.d0 / (4.0 * self.lambda)
    }

    /// A decision interval `[c, c + 4·d0/λ]` that contains every
    /// confounded maximizer whenever `|E| ≤ d0`.
    pub fn default_space(&self, grid_points: usize) -> Result<DecisionSpace> {
        DecisionSpace::interval(self.c, self.c + 4.0 * self.d0 / self.lambda, grid_points)
    }

    /// Every point where the confounded profit can attain its maximum on
    /// `space`, each tagged with the profit value it attains there.
    ///
    /// For intervals this adds, per piece of `E`, the vertex of the
    /// piece's parabola clipped to the piece, and the piece's value at its
    /// right break (the left limit, approached but not attained).
    fn candidates(&self, space: &DecisionSpace) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = space.grid().into_iter().map(|z| (z, self.observed_profit(z))).collect();
        if !space.is_interval() {
            return out;
        }
        let (lo, hi) = (space.lo(), space.hi());
        // Pieces as (start, end, profit-on-piece) with a linear E on each.
        let vertex = |slope_e: f64, intercept_e: f64| -> f64 {
            // (z − c)(d0 − λ(z − c) + intercept_e + slope_e·z), stationary point.
            let (l, c) = (self.lambda - slope_e, self.c);
            let k = self.d0 + intercept_e + slope_e * c;
            c + k / (2.0 * l)
        };
        let mut push_piece = |a: f64, b: f64, e_slope: f64, e_at0: f64| {
            let piece_profit = |z: f64| (z - self.c) * (self.demand(z) + e_at0 + e_slope * z);
            if self.lambda - e_slope > 0.0 {
                let v = vertex(e_slope, e_at0).clamp(a, b);
                out.push((v, piece_profit(v)));
            }
            out.push((a, piece_profit(a)));
            out.push((b, piece_profit(b)));
        };
        match &self.confounding {
            Confounding::Constant { value } => push_piece(lo, hi, 0.0, *value),
            Confounding::Linear { slope, center } => push_piece(lo, hi, *slope, -slope * center),
            Confounding::Step { breaks, values } => {
                let inside: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
                let mut edges = vec![lo];
                edges.extend(inside);
                edges.push(hi);
                for w in edges.windows(2) {
                    let value = values[Confounding::piece(breaks, w[0])];
                    push_piece(w[0], w[1], 0.0, value);
                }
            }
        }
        out
    }

    /// `R(z̃)/R(z*)` where `z̃` maximizes the confounded profit over `space`.
    ///
    /// Near-ties are resolved toward the candidate with the lowest true
    /// profit, so the ratio is the worst a predictive pricer could end up with.
    pub fn empirical_ratio(&self, space: &DecisionSpace) -> Result<f64> {
        let optimum = self.optimal_profit();
        if optimum == 0.0 {
            return Err(Error::InvalidInput("optimal profit is zero".into()));
        }
        let candidates = self.candidates(space);
        let best = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let cut = best - TIE_TOLERANCE * best.abs().max(optimum);
        let worst = candidates
            .iter()
            .filter(|c| c.1 >= cut)
            .map(|c| self.profit(c.0))
            .fold(f64::INFINITY, f64::min);
        Ok(worst / optimum)
    }
}

/// `R(z̃)/R(z*)` for `instance` over `space`.
pub fn empirical_ratio(instance: &LinearDemandInstance, space: &DecisionSpace) -> Result<f64> {
    instance.empirical_ratio(space)
}

/// The confounding that pushes the predictive price as high as possible:
/// `E = −η` below `p′ = c + (√d0 + √η)²/(2λ)` and `+η` from `p′` on.
///
/// The confounded profit then ties between `c + (d0 − η)/(2λ)` and `p′`,
/// and pricing at `p′` attains [`bound_thm2`] exactly.
pub fn worst_case_instance_thm2(d0: f64, lambda: f64, c: f64, eta: f64) -> Result<LinearDemandInstance> {
    if !(eta > 0.0 && eta <= d0) {
        return Err(Error::OutOfRange { name: "eta", value: eta, lo: 0.0, hi: d0 });
    }
    let p = worst_case_price_thm2(d0, lambda, c, eta);
    LinearDemandInstance::new(d0, lambda, c, Confounding::Step { breaks: vec![p], values: vec![-eta, eta] })
}

/// `p′ = c + (√d0 + √η)²/(2λ)`.
pub fn worst_case_price_thm2(d0: f64, lambda: f64, c: f64, eta: f64) -> f64 {
    let s = d0.sqrt() + eta.sqrt();
    c + s * s / (2.0 * lambda)
}

/// `R(p′) = (d0² − 4d0η − η² − 4η√(d0η))/(4λ)`.
pub fn worst_case_profit_thm2(d0: f64, lambda: f64, eta: f64) -> f64 {
    (d0 * d0 - 4.0 * d0 * eta - eta * eta - 4.0 * eta * (d0 * eta).sqrt()) / (4.0 * lambda)
}

/// Jointly normal confounding: `E(z) = ζ(z − μ)` with `μ` the mean price.
pub fn jointly_normal_instance(d0: f64, lambda: f64, c: f64, zeta: f64, mu: f64) -> Result<LinearDemandInstance> {
    if zeta > 0.0 {
        return Err(Error::InvalidInput(format!("zeta must be non-positive, got {zeta}")));
    }
    LinearDemandInstance::new(d0, lambda, c, Confounding::Linear { slope: zeta, center: mu })
}

/// One row of a tightness or validity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `γ`, or `E[Y]/d0` for the jointly normal bound.
    pub parameter: f64,
    pub ratio: f64,
    pub bound: f64,
}

impl BoundCheck {
    /// `ratio − bound`; negative means the bound was violated.
    pub fn slack(&self) -> f64 {
        self.ratio - self.bound
    }
}

/// Summary of a batch of [`BoundCheck`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub theorem: Theorem,
    pub checks: Vec<BoundCheck>,
}

impl SweepReport {
    pub fn min_slack(&self) -> f64 {
        self.checks.iter().map(BoundCheck::slack).fold(f64::INFINITY, f64::min)
    }

    /// Number of checks whose ratio falls more than `tol` below the bound.
    pub fn violations(&self, tol: f64) -> usize {
        self.checks.iter().filter(|c| c.slack() < -tol).count()
    }
}

/// Ratio at the worst-case instance for each `γ`, on the default space.
pub fn tightness_sweep_thm2(gammas: &[f64], d0: f64, lambda: f64, c: f64) -> Result<SweepReport> {
    let checks = gammas
        .iter()
        .map(|&g| {
            let inst = worst_case_instance_thm2(d0, lambda, c, g * d0)?;
            let ratio = inst.empirical_ratio(&inst.default_space(401)?)?;
            Ok(BoundCheck { parameter: g, ratio, bound: bound_thm2(g)? })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport { theorem: Theorem::Bounded, checks })
}

/// Random linear-demand instance with a step confounding of up to six
/// pieces, `|E| ≤ γ·d0`, and `γ` uniform on `[0, 1]`. With `monotone` the
/// step values are sorted non-increasing.
pub fn random_step_instance<R: Rng>(rng: &mut R, monotone: bool) -> Result<(LinearDemandInstance, f64)> {
    let d0 = rng.random_range(0.5..5.0);
    let lambda = rng.random_range(0.2..3.0);
    let c = rng.random_range(0.0..2.0);
    let gamma: f64 = rng.random_range(0.0..1.0);
    let eta = gamma * d0;
    let hi = c + 4.0 * d0 / lambda;
    let pieces = rng.random_range(1..=6usize);
    let mut breaks: Vec<f64> = (1..pieces).map(|_| rng.random_range(c..hi)).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut values: Vec<f64> = (0..=breaks.len())
        .map(|_| if eta > 0.0 && rng.random_bool(0.5) { if rng.random_bool(0.5) { eta } else { -eta } } else { rng.random_range(-1.0..=1.0) * eta })
        .collect();
    if monotone {
        values.sort_by(|a, b| b.total_cmp(a));
    }
    Ok((LinearDemandInstance::new(d0, lambda, c, Confounding::Step { breaks, values })?, gamma))
}

/// Checks the bounded (`monotone = false`) or monotone bound on `count`
/// seeded random step instances, in parallel.
pub fn validity_sweep(count: usize, seed: u64, monotone: bool) -> Result<SweepReport> {
    let checks = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
            let (inst, gamma) = random_step_instance(&mut rng, monotone)?;
            let ratio = inst.empirical_ratio(&inst.default_space(201)?)?;
            let bound = if monotone { bound_thm4(gamma)? } else { bound_thm2(gamma)? };
            Ok(BoundCheck { parameter: gamma, ratio, bound })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport { theorem: if monotone { Theorem::Monotone } else { Theorem::Bounded }, checks })
}

/// Jointly normal instances over `ζ` evenly spaced in `[−100, 0]`, with the
/// mean price spread over `[c, c + d0/λ]` so that `E[Y]/d0` covers `[0, 1]`.
pub fn jointly_normal_sweep(zetas: usize, d0: f64, lambda: f64, c: f64) -> Result<SweepReport> {
    let mut checks = Vec::new();
    for i in 0..zetas.max(2) {
        let zeta = -100.0 * i as f64 / (zetas.max(2) - 1) as f64;
        for j in 0..=10 {
            let mu = c + d0 / lambda * j as f64 / 10.0;
            let inst = jointly_normal_instance(d0, lambda, c, zeta, mu)?;
            let demand_ratio = ((d0 - lambda * (mu - c)) / d0).clamp(0.0, 1.0);
            let ratio = inst.empirical_ratio(&inst.default_space(201)?)?;
            checks.push(BoundCheck { parameter: demand_ratio, ratio, bound: bound_thm3(demand_ratio)? });
        }
    }
    Ok(SweepReport { theorem: Theorem::JointlyNormal, checks })
}
