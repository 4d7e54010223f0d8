//! Product kernels of a declared order and their bandwidth rules.
//!
//! Every kernel is a product over coordinates of a one-dimensional member
//! `k(u)` of its family and is evaluated at unit bandwidth; callers scale
//! their arguments by `1/h`. Because the regression estimators are ratios
//! of kernel sums, the `1/h` normalization factors cancel.
//!
//! | family         | `k(u)`                         | order |
//! |----------------|--------------------------------|-------|
//! | `gaussian2`    | `exp(-u²/2)`                   | 2     |
//! | `gaussian4`    | `(3/2 - u²/2)·exp(-u²/2)`      | 4     |
//! | `epanechnikov` | `max(0, 1 - u²)`               | 2     |

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian2,
    Gaussian4,
    Epanechnikov,
}

impl KernelFamily {
    /// Order `s`: all moments `∫K(u)u^α du` with `|α| < s` vanish.
    pub fn order(self) -> u32 {
        match self {
            KernelFamily::Gaussian2 | KernelFamily::Epanechnikov => 2,
            KernelFamily::Gaussian4 => 4,
        }
    }

    pub fn is_gaussian(self) -> bool {
        !matches!(self, KernelFamily::Epanechnikov)
    }

    /// One-dimensional family member `k(u)`.
    #[inline]
    pub fn eval_1d(self, u: f64) -> f64 {
        match self {
            KernelFamily::Gaussian2 => (-0.5 * u * u).exp(),
            KernelFamily::Gaussian4 => (1.5 - 0.5 * u * u) * (-0.5 * u * u).exp(),
            KernelFamily::Epanechnikov => (1.0 - u * u).max(0.0),
        }
    }

    /// Derivative `k'(u)`.
    pub fn derivative_1d(self, u: f64) -> f64 {
        match self {
            KernelFamily::Gaussian2 => -u * (-0.5 * u * u).exp(),
            KernelFamily::Gaussian4 => (0.5 * u * u * u - 2.5 * u) * (-0.5 * u * u).exp(),
            KernelFamily::Epanechnikov => {
                if u.abs() < 1.0 {
                    -2.0 * u
                } else {
                    0.0
                }
            }
        }
    }

    /// Polynomial multiplier of the gaussian families, `k(u) = p(u)·exp(-u²/2)`.
    #[inline]
    pub(crate) fn gaussian_polynomial(self, u: f64) -> f64 {
        match self {
            KernelFamily::Gaussian4 => 1.5 - 0.5 * u * u,
            _ => 1.0,
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian2 => "gaussian2",
            KernelFamily::Gaussian4 => "gaussian4",
            KernelFamily::Epanechnikov => "epanechnikov",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian2" => Ok(KernelFamily::Gaussian2),
            "gaussian4" => Ok(KernelFamily::Gaussian4),
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            other => Err(Error::InvalidInput(format!(
                "unknown kernel `{other}` (expected gaussian2, gaussian4 or epanechnikov)"
            ))),
        }
    }
}

/// How the bandwidth depends on the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `h = scale·(n·ln n)^(-1/7)`.
    Rate { scale: f64 },
    /// A fixed `h` for every `n`.
    Fixed { h: f64 },
}

impl BandwidthRule {
    pub fn rate(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!("bandwidth scale must be positive, got {scale}")));
        }
        Ok(BandwidthRule::Rate { scale })
    }

    pub fn fixed(h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        Ok(BandwidthRule::Fixed { h })
    }

    pub fn bandwidth(&self, n: usize) -> Result<f64> {
        match *self {
            BandwidthRule::Fixed { h } => Ok(h),
            BandwidthRule::Rate { scale } => {
                if n < 2 {
                    return Err(Error::InvalidInput(format!("rate bandwidth needs n >= 2, got {n}")));
                }
                let n = n as f64;
                Ok(scale * (n * n.ln()).powf(-1.0 / 7.0))
            }
        }
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthRule::Rate { scale } => write!(f, "rate:{scale}"),
            BandwidthRule::Fixed { h } => write!(f, "fixed:{h}"),
        }
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    /// Parses `rate:<c>` or `fixed:<h>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("bandwidth must be `rate:<c>` or `fixed:<h>`, got `{s}`"));
        let (kind, value) = s.trim().split_once(':').ok_or_else(bad)?;
        let value: f64 = value.parse().map_err(|_| bad())?;
        match kind {
            "rate" => BandwidthRule::rate(value),
            "fixed" => BandwidthRule::fixed(value),
            _ => Err(bad()),
        }
    }
}

/// A product kernel on `R^dim` together with its bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dim: usize,
    pub bandwidth: BandwidthRule,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dim: usize, bandwidth: BandwidthRule) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("kernel dimension must be positive".into()));
        }
        Ok(Self { family, dim, bandwidth })
    }

    /// Like [`KernelSpec::new`] but also checks a declared order against the family.
    pub fn with_order(family: KernelFamily, dim: usize, order: u32, bandwidth: BandwidthRule) -> Result<Self> {
        if order != family.order() {
            return Err(Error::InvalidInput(format!(
                "{family} has order {}, declared {order}",
                family.order()
            )));
        }
        Self::new(family, dim, bandwidth)
    }

    pub fn order(&self) -> u32 {
        self.family.order()
    }

    /// Same family and bandwidth rule on another dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(self.family, dim, self.bandwidth)
    }

    /// Whether the order satisfies the joint-rate requirement for `k`
    /// covariates (`s ≥ k + 1` when `k ≤ 2`, `s ≥ k` otherwise).
    pub fn order_adequate_for(&self, k: usize) -> bool {
        let s = self.order() as usize;
        if k <= 2 {
            s > k
        } else {
            s >= k
        }
    }
}

/// `K(u) = Π_c k(u_c)`.
///
/// The product is accumulated from the last coordinate to the first, so a
/// joint kernel `K(u_z, u_x)` equals `k(u_z) · K_x(u_x)` bit-for-bit.
pub fn kernel_eval(spec: &KernelSpec, u: &[f64]) -> Result<f64> {
    if u.len() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: u.len() });
    }
    Ok(product_kernel(spec.family, u))
}

#[inline]
pub(crate) fn product_kernel(family: KernelFamily, u: &[f64]) -> f64 {
    u.iter().rev().fold(1.0, |acc, &v| family.eval_1d(v) * acc)
}

/// Bandwidth for a sample of size `n` under the spec's rule.
pub fn bandwidth(spec: &KernelSpec, n: usize) -> Result<f64> {
    spec.bandwidth.bandwidth(n)
}

const QUADRATURE_NODES: usize = 48;

/// `∫ K(u)·u^α du` over `R^dim` by Gauss–Hermite (gaussian families) or
/// Gauss–Legendre (epanechnikov) quadrature.
///
/// Product kernels factor coordinate-wise, so the tensor rule reduces to a
/// product of one-dimensional rules. Exact up to rounding for `|α_c| ≤ 80`.
pub fn kernel_moment(spec: &KernelSpec, multi_index: &[u32]) -> Result<f64> {
    if multi_index.len() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: multi_index.len() });
    }
    Ok(multi_index.iter().map(|&a| moment_1d(spec.family, a)).product())
}

/// `∫ k(u)·u^a du` for the one-dimensional family member.
pub fn moment_1d(family: KernelFamily, a: u32) -> f64 {
    integrate_1d(family, |u| family.eval_1d(u) * u.powi(a as i32), |u| family.gaussian_polynomial(u) * u.powi(a as i32))
}

/// Integrates `f` over the support of the family. For gaussian families
/// `g` must satisfy `f(u) = g(u)·exp(-u²/2)`; it is what the Hermite rule sees.
fn integrate_1d(family: KernelFamily, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    if family.is_gaussian() {
        // ∫ g(u) e^{-u²/2} du = √2 ∫ g(√2 t) e^{-t²} dt
        let rule = gauss_hermite(QUADRATURE_NODES);
        let s2 = std::f64::consts::SQRT_2;
        s2 * rule.iter().map(|&(t, w)| w * g(s2 * t)).sum::<f64>()
    } else {
        gauss_legendre(QUADRATURE_NODES).iter().map(|&(t, w)| w * f(t)).sum()
    }
}

/// Squared-norm integrals of the normalized marginal `K̃ = k/∫k` and of its
/// derivative: `(∫K̃², ∫K̃'²)`.
///
/// Marginalizing a product kernel over the covariate coordinates leaves the
/// decision factor times a constant, which the unit-integral normalization
/// removes; the result does not depend on the joint dimension.
pub fn marginal_roughness(family: KernelFamily) -> (f64, f64) {
    let mass = moment_1d(family, 0);
    let (kappa, kappa_prime) = if family.is_gaussian() {
        // k(u)² = p(u)² e^{-u²}: Hermite weight e^{-t²} with t = u directly.
        let rule = gauss_hermite(QUADRATURE_NODES);
        let k2 = rule.iter().map(|&(t, w)| w * family.gaussian_polynomial(t).powi(2)).sum::<f64>();
        let d2 = rule
            .iter()
            .map(|&(t, w)| {
                let dp = family.derivative_1d(t) / (-0.5 * t * t).exp();
                w * dp * dp
            })
            .sum::<f64>();
        (k2, d2)
    } else {
        let rule = gauss_legendre(QUADRATURE_NODES);
        let k2 = rule.iter().map(|&(t, w)| w * family.eval_1d(t).powi(2)).sum::<f64>();
        let d2 = rule.iter().map(|&(t, w)| w * family.derivative_1d(t).powi(2)).sum::<f64>();
        (k2, d2)
    };
    (kappa / (mass * mass), kappa_prime / (mass * mass))
}

/// Nodes and weights of the `m`-point Gauss–Hermite rule for weight `e^{-t²}`
/// (Golub–Welsch).
pub fn gauss_hermite(m: usize) -> Vec<(f64, f64)> {
    golub_welsch(m, |k| (k as f64 / 2.0).sqrt(), std::f64::consts::PI.sqrt())
}

/// Nodes and weights of the `m`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    golub_welsch(
        m,
        |k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        },
        2.0,
    )
}

fn golub_welsch(m: usize, off_diagonal: impl Fn(usize) -> f64, total_mass: f64) -> Vec<(f64, f64)> {
    let mut jacobi = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let b = off_diagonal(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut rule: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], total_mass * v0 * v0)
        })
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize against eigen-solver noise.
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let t = 0.5 * (rule[j].0 - rule[i].0);
        let w = 0.5 * (rule[i].1 + rule[j].1);
        rule[i] = (-t, w);
        rule[j] = (t, w);
    }
    if m % 2 == 1 {
        rule[m / 2].0 = 0.0;
    }
    rule
}
