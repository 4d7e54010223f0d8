//! Kernel partial-mean estimate of the causal reward curve.
//!
//! For a decision `z` the estimate averages, over the covariate rows `Xᵢ`,
//! a joint Nadaraya–Watson regression of `r(Zⱼ)Yⱼ` on `(Zⱼ, Xⱼ)` queried at
//! `(z, Xᵢ)`:
//!
//! ```text
//! R̄(z) = (1/n) Σᵢ  Σⱼ K((z−Zⱼ)/h, (Xᵢ−Xⱼ)/h)·r(Zⱼ)Yⱼ  /  Σⱼ K((z−Zⱼ)/h, (Xᵢ−Xⱼ)/h)
//! ```
//!
//! Each query is `O(n²)`. Since the kernel is a product, the covariate
//! factor `K_x((Xᵢ−Xⱼ)/h)` does not depend on `z` and is computed once per
//! dataset; terms whose decision factor is exactly zero are skipped, which
//! leaves every sum bit-for-bit unchanged.

use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::kernels::{marginal_roughness, product_kernel, KernelFamily, KernelSpec};
use crate::optimize::{argmax_on_grid, Optimum};
use crate::problem::{DecisionSpace, RewardSpec};
use crate::regression::{Standardizer, UNDERFLOW_GUARD};

/// Largest covariate factor matrix held in memory, in entries.
const MAX_CACHED_ENTRIES: usize = 16 * 1024 * 1024;

/// Construction options for [`PartialMeanCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialMeanOptions {
    /// Standardize covariate columns before kernel evaluation.
    pub standardize: bool,
    /// Cap on the number of rows in the outer average; a seeded subsample
    /// is drawn when the dataset is larger.
    pub max_outer_rows: Option<usize>,
    pub subsample_seed: u64,
    /// Overrides the kernel's bandwidth rule.
    pub bandwidth: Option<f64>,
}

impl Default for PartialMeanOptions {
    fn default() -> Self {
        Self { standardize: true, max_outer_rows: None, subsample_seed: 0, bandwidth: None }
    }
}

/// Data shared by a curve and all of its bootstrap reweightings.
#[derive(Debug)]
struct Engine {
    n: usize,
    k: usize,
    family: KernelFamily,
    h: f64,
    z: Vec<f64>,
    y: Vec<f64>,
    /// `r(Zⱼ)·Yⱼ`.
    t: Vec<f64>,
    /// Covariates after standardization, row-major.
    xs: Vec<f64>,
    standardizer: Standardizer,
    outer: Vec<usize>,
    /// `K_x((Xᵢ−Xⱼ)/h)` stored by record `j`, then outer row `i`
    /// (`n × outer.len()`), so the sweep over outer rows is contiguous.
    wx: Option<Vec<f64>>,
}

impl Engine {
    /// `K_x((Xᵢ−Xⱼ)/h)` for every outer row `i` at fixed record `j`.
    fn covariate_factor_column(&self, j: usize, out: &mut [f64]) {
        let k = self.k;
        let xj = &self.xs[j * k..(j + 1) * k];
        let mut u = vec![0.0; k];
        for (w, &i) in out.iter_mut().zip(&self.outer) {
            let xi = &self.xs[i * k..(i + 1) * k];
            for c in 0..k {
                u[c] = (xi[c] - xj[c]) / self.h;
            }
            *w = product_kernel(self.family, &u);
        }
    }

    fn build_cache(&mut self) {
        let m = self.outer.len();
        if m.saturating_mul(self.n) > MAX_CACHED_ENTRIES {
            return;
        }
        let mut wx = vec![0.0; m * self.n];
        let this = &*self;
        wx.par_chunks_mut(m).enumerate().for_each(|(j, col)| this.covariate_factor_column(j, col));
        self.wx = Some(wx);
    }

    /// Weighted partial mean at `z`; `counts` multiplies each record.
    ///
    /// Records are the outer loop and outer rows the inner one; each row's
    /// sums still accumulate in record order, so the result is identical
    /// to the textbook double loop.
    fn eval(&self, z: f64, counts: Option<&[f64]>) -> Result<f64> {
        let m = self.outer.len();
        let mut num = vec![0.0; m];
        let mut den = vec![0.0; m];
        let mut scratch = if self.wx.is_none() { vec![0.0; m] } else { Vec::new() };
        for j in 0..self.n {
            // a_j = c_j · k((z − Z_j)/h)
            let kz = self.family.eval_1d((z - self.z[j]) / self.h);
            let a = match counts {
                Some(c) => c[j] * kz,
                None => kz,
            };
            if a == 0.0 {
                continue;
            }
            let col: &[f64] = match &self.wx {
                Some(wx) => &wx[j * m..(j + 1) * m],
                None => {
                    self.covariate_factor_column(j, &mut scratch);
                    &scratch
                }
            };
            accumulate(&mut num, &mut den, &col[..m], a, self.t[j]);
        }

        let mut total = 0.0;
        let mut mass = 0.0;
        for (slot, &i) in self.outer.iter().enumerate() {
            let ci = counts.map_or(1.0, |c| c[i]);
            if ci == 0.0 {
                continue;
            }
            let (mut nu, mut de) = (num[slot], den[slot]);
            if de.abs() < UNDERFLOW_GUARD && self.family.is_gaussian() {
                (nu, de) = self.stable_row(i, z, counts);
            }
            if de == 0.0 {
                return Err(Error::EmptyNeighborhoodRow { row: i, z });
            }
            total += ci * (nu / de);
            mass += ci;
        }
        Ok(total / mass)
    }

    /// Row sums rescaled by the largest Gaussian exponent, for rows whose
    /// weights all underflow.
    fn stable_row(&self, i: usize, z: f64, counts: Option<&[f64]>) -> (f64, f64) {
        let k = self.k;
        let xi = &self.xs[i * k..(i + 1) * k];
        let inv_h = 1.0 / self.h;
        let exponent = |j: usize| -> f64 {
            let uz = (z - self.z[j]) * inv_h;
            let mut e = uz * uz;
            for c in 0..k {
                let u = (xi[c] - self.xs[j * k + c]) * inv_h;
                e += u * u;
            }
            -0.5 * e
        };
        let included = |j: usize| counts.is_none_or(|c| c[j] != 0.0);
        let shift = (0..self.n).filter(|&j| included(j)).map(exponent).fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for j in (0..self.n).filter(|&j| included(j)) {
            let e = exponent(j) - shift;
            // Terms this far below the largest are under 1e-26 of it and
            // cannot change the sums at double precision.
            if e < -60.0 {
                continue;
            }
            let mut poly = self.family.gaussian_polynomial((z - self.z[j]) * inv_h);
            for c in 0..k {
                poly *= self.family.gaussian_polynomial((xi[c] - self.xs[j * k + c]) * inv_h);
            }
            let w = counts.map_or(1.0, |c| c[j]) * poly * e.exp();
            num += w * self.t[j];
            den += w;
        }
        (num, den)
    }
}

/// `num[s] += (a·col[s])·t`, `den[s] += a·col[s]` for every outer row `s`.
#[inline]
fn accumulate(num: &mut [f64], den: &mut [f64], col: &[f64], a: f64, t: f64) {
    let m = col.len();
    let (num, den) = (&mut num[..m], &mut den[..m]);
    for s in 0..m {
        let w = a * col[s];
        num[s] += w * t;
        den[s] += w;
    }
}

/// The partial-mean reward curve with cached values on a decision grid.
#[derive(Debug, Clone)]
pub struct PartialMeanCurve {
    engine: Arc<Engine>,
    counts: Option<Arc<Vec<f64>>>,
    reward: RewardSpec,
    space: DecisionSpace,
    nodes: Vec<f64>,
    values: Vec<f64>,
    notices: Vec<String>,
}

impl PartialMeanCurve {
    /// Builds the curve and evaluates it at every node of `space`.
    ///
    /// The kernel must have dimension `1 + k` for `k ≥ 1` covariates. The
    /// bandwidth comes from the kernel's rule at the dataset size unless
    /// overridden in `options`.
    pub fn new(
        data: &ObservationalDataset,
        kernel: &KernelSpec,
        reward: RewardSpec,
        space: &DecisionSpace,
        options: PartialMeanOptions,
    ) -> Result<Self> {
        let k = data.covariate_dim();
        if k == 0 {
            return Err(Error::InvalidInput("the partial-mean estimator needs at least one covariate column".into()));
        }
        if kernel.dim != 1 + k {
            return Err(Error::DimensionMismatch { expected: 1 + k, got: kernel.dim });
        }
        let n = data.len();
        let h = match options.bandwidth {
            Some(h) if h.is_finite() && h > 0.0 => h,
            Some(h) => return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}"))),
            None if n < 2 => kernel.bandwidth.bandwidth(2)?,
            None => kernel.bandwidth.bandwidth(n)?,
        };
        let mut notices = Vec::new();
        if !kernel.order_adequate_for(k) {
            notices.push(format!(
                "kernel {} has order {} which is below the order the convergence rate asks for with {k} covariates",
                kernel.family,
                kernel.order()
            ));
        }
        let standardizer = if options.standardize { Standardizer::fit(data.x(), k) } else { Standardizer::identity(k) };
        let xs = if options.standardize { standardizer.apply(data.x()) } else { data.x().to_vec() };
        let outer = match options.max_outer_rows {
            Some(0) => return Err(Error::InvalidInput("max_outer_rows must be positive".into())),
            Some(cap) if cap < n => {
                let mut rng = ChaCha8Rng::seed_from_u64(options.subsample_seed);
                let mut rows = index::sample(&mut rng, n, cap).into_vec();
                rows.sort_unstable();
                notices.push(format!("outer average subsampled to {cap} of {n} rows (seed {})", options.subsample_seed));
                rows
            }
            _ => (0..n).collect(),
        };
        let t = data.z().iter().zip(data.y()).map(|(&z, &y)| reward.eval(z) * y).collect();
        let mut engine = Engine {
            n,
            k,
            family: kernel.family,
            h,
            z: data.z().to_vec(),
            y: data.y().to_vec(),
            t,
            xs,
            standardizer,
            outer,
            wx: None,
        };
        engine.build_cache();
        Self::assemble(Arc::new(engine), None, reward, space.clone(), notices)
    }

    fn assemble(
        engine: Arc<Engine>,
        counts: Option<Arc<Vec<f64>>>,
        reward: RewardSpec,
        space: DecisionSpace,
        notices: Vec<String>,
    ) -> Result<Self> {
        let nodes = space.grid();
        let values = nodes
            .par_iter()
            .map(|&z| {
                let v = engine.eval(z, counts.as_deref().map(Vec::as_slice))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteCurve { z })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { engine, counts, reward, space, nodes, values, notices })
    }

    /// The same estimator on a bootstrap resample described by per-record
    /// multiplicities. Bandwidth and covariate standardization are those of
    /// the original sample.
    pub fn reweighted(&self, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != self.engine.n {
            return Err(Error::DimensionMismatch { expected: self.engine.n, got: counts.len() });
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || counts.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidInput("resample multiplicities must be non-negative with a positive total".into()));
        }
        Self::assemble(self.engine.clone(), Some(Arc::new(counts)), self.reward, self.space.clone(), self.notices.clone())
    }

    /// Exact (not grid-snapped) evaluation at `z`.
    pub fn eval(&self, z: f64) -> Result<f64> {
        let v = self.engine.eval(z, self.counts.as_deref().map(Vec::as_slice))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteCurve { z })
        }
    }

    /// Grid maximizer from the cached evaluations.
    pub fn decision(&self) -> Result<Optimum> {
        argmax_on_grid(&self.nodes, &self.values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn space(&self) -> &DecisionSpace {
        &self.space
    }

    pub fn reward(&self) -> RewardSpec {
        self.reward
    }

    pub fn bandwidth(&self) -> f64 {
        self.engine.h
    }

    pub fn family(&self) -> KernelFamily {
        self.engine.family
    }

    pub fn len(&self) -> usize {
        self.engine.n
    }

    pub fn is_empty(&self) -> bool {
        self.engine.n == 0
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.engine.standardizer
    }

    /// Rows entering the outer average.
    pub fn outer_rows(&self) -> usize {
        self.engine.outer.len()
    }

    /// Advisory messages produced during construction.
    pub fn notices(&self) -> &[String] {
        &self.notices
    }

    /// Plug-in estimate of `r(z)²·E[Var(Y|Z=z,X) / f(z|X)]`.
    fn eta_hat(&self, z: f64) -> Result<f64> {
        let e = &*self.engine;
        let m = e.outer.len();
        let (mut s0, mut s1, mut s2, mut sx) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let mut col = vec![0.0; m];
        for j in 0..e.n {
            let kz = e.family.eval_1d((z - e.z[j]) / e.h);
            e.covariate_factor_column(j, &mut col);
            let y = e.y[j];
            for s in 0..m {
                let w = kz * col[s];
                s0[s] += w;
                s1[s] += w * y;
                s2[s] += w * y * y;
                sx[s] += col[s];
            }
        }
        let mass_1d = crate::kernels::moment_1d(e.family, 0);
        let mut acc = 0.0;
        let mut used = 0usize;
        for s in 0..m {
            if s0[s] <= 0.0 || sx[s] <= 0.0 {
                continue;
            }
            let m1 = s1[s] / s0[s];
            let var = (s2[s] / s0[s] - m1 * m1).max(0.0);
            let density = s0[s] / (e.h * mass_1d * sx[s]);
            if density > 0.0 {
                acc += var / density;
                used += 1;
            }
        }
        if used == 0 {
            return Err(Error::EmptyNeighborhood { query: vec![z] });
        }
        Ok(self.reward.eval(z).powi(2) * acc / used as f64)
    }
}

/// `R̄(z)` at an arbitrary decision.
pub fn partial_mean_eval(curve: &PartialMeanCurve, z: f64) -> Result<f64> {
    curve.eval(z)
}

/// Maximizes the curve over `space`, reusing the cache when `space` is the
/// one the curve was built on.
pub fn prescriptive_nonparam_decision(curve: &PartialMeanCurve, space: &DecisionSpace) -> Result<Optimum> {
    if space == curve.space() {
        return curve.decision();
    }
    let nodes = space.grid();
    let values = nodes.par_iter().map(|&z| curve.eval(z)).collect::<Result<Vec<_>>>()?;
    argmax_on_grid(&nodes, &values)
}

/// Roughness constants of the kernel and, given a curve, rough plug-in
/// estimates of the variance and nuisance constants at `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticDiagnostics {
    /// `∫K̃²` for the unit-mass decision marginal `K̃` of the kernel.
    pub kappa: f64,
    /// `∫(K̃')²`.
    pub kappa_prime: f64,
    pub eta_hat: Option<f64>,
    /// `−η̂·κ'/(2·R̄''(z))`, present when the curve is locally concave at `z`.
    pub gamma_hat: Option<f64>,
}

/// See [`AsymptoticDiagnostics`]. The plug-in values are diagnostics only;
/// the bootstrap in [`crate::hypothesis`] is the supported route to `Γ`.
pub fn asymptotic_constants(
    kernel: &KernelSpec,
    curve: Option<&PartialMeanCurve>,
    z: f64,
) -> Result<AsymptoticDiagnostics> {
    let (kappa, kappa_prime) = marginal_roughness(kernel.family);
    let (mut eta_hat, mut gamma_hat) = (None, None);
    if let Some(curve) = curve {
        let eta = curve.eta_hat(z)?;
        eta_hat = Some(eta);
        let step = curve.space().step().unwrap_or(curve.bandwidth()).max(curve.bandwidth());
        let second = (curve.eval(z + step)? - 2.0 * curve.eval(z)? + curve.eval(z - step)?) / (step * step);
        if second < 0.0 {
            gamma_hat = Some(-eta * kappa_prime / (2.0 * second));
        }
    }
    Ok(AsymptoticDiagnostics { kappa, kappa_prime, eta_hat, gamma_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BandwidthRule;

    fn kernel(family: KernelFamily, dim: usize, h: f64) -> KernelSpec {
        KernelSpec::new(family, dim, BandwidthRule::Fixed { h }).unwrap()
    }

    fn small() -> ObservationalDataset {
        ObservationalDataset::from_rows(
            &[vec![0.1], vec![-0.4], vec![1.2], vec![0.3], vec![-1.0]],
            vec![1.0, 2.0, 0.5, 1.5, 2.5],
            vec![3.0, 1.0, 4.0, 2.0, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn constant_outcome_is_constant() {
        let d = small();
        let data = ObservationalDataset::new(d.x().to_vec(), 1, d.z().to_vec(), vec![2.5; 5]).unwrap();
        let space = DecisionSpace::interval(0.0, 3.0, 7).unwrap();
        let c = PartialMeanCurve::new(&data, &kernel(KernelFamily::Gaussian2, 2, 0.8), RewardSpec::Unit, &space, Default::default()).unwrap();
        for &v in c.values() {
            assert!((v - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn single_record() {
        let data = ObservationalDataset::from_rows(&[vec![0.3]], vec![2.0], vec![5.0]).unwrap();
        let space = DecisionSpace::interval(0.0, 3.0, 4).unwrap();
        let k = KernelSpec::new(KernelFamily::Gaussian2, 2, BandwidthRule::Rate { scale: 0.1 }).unwrap();
        let c = PartialMeanCurve::new(&data, &k, RewardSpec::margin(0.5).unwrap(), &space, Default::default()).unwrap();
        assert!(c.values().iter().all(|&v| v == 1.5 * 5.0));
    }

    #[test]
    fn needs_covariates_and_matching_dim() {
        let data = ObservationalDataset::without_covariates(vec![1.0, 2.0], vec![0.0, 1.0]).unwrap();
        let space = DecisionSpace::interval(0.0, 1.0, 2).unwrap();
        assert!(PartialMeanCurve::new(&data, &kernel(KernelFamily::Gaussian2, 1, 1.0), RewardSpec::Unit, &space, Default::default()).is_err());
        assert!(matches!(
            PartialMeanCurve::new(&small(), &kernel(KernelFamily::Gaussian2, 3, 1.0), RewardSpec::Unit, &space, Default::default()),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn empty_neighborhood_names_row() {
        let space = DecisionSpace::interval(10.0, 11.0, 2).unwrap();
        let err = PartialMeanCurve::new(&small(), &kernel(KernelFamily::Epanechnikov, 2, 0.5), RewardSpec::Unit, &space, Default::default())
            .unwrap_err();
        assert!(matches!(err, Error::EmptyNeighborhoodRow { row: 0, .. }));
    }

    #[test]
    fn unit_weights_match_plain_curve_exactly() {
        let space = DecisionSpace::interval(0.0, 3.0, 13).unwrap();
        let c = PartialMeanCurve::new(&small(), &kernel(KernelFamily::Gaussian4, 2, 0.7), RewardSpec::Unit, &space, Default::default()).unwrap();
        let w = c.reweighted(vec![1.0; 5]).unwrap();
        assert_eq!(c.values(), w.values());
    }

    #[test]
    fn counts_equal_materialized_resample() {
        let data = small();
        let space = DecisionSpace::interval(0.0, 3.0, 13).unwrap();
        let opts = PartialMeanOptions { standardize: false, ..Default::default() };
        let k = kernel(KernelFamily::Gaussian2, 2, 0.7);
        let c = PartialMeanCurve::new(&data, &k, RewardSpec::Unit, &space, opts).unwrap();
        let w = c.reweighted(vec![2.0, 0.0, 1.0, 0.0, 2.0]).unwrap();
        let resample = data.select(&[0, 0, 2, 4, 4]).unwrap();
        let m = PartialMeanCurve::new(&resample, &k, RewardSpec::Unit, &space, opts).unwrap();
        for (a, b) in w.values().iter().zip(m.values()) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn underflowing_rows_fall_back() {
        let data = ObservationalDataset::from_rows(&[vec![0.0], vec![0.0]], vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        let space = DecisionSpace::interval(50.0, 51.0, 2).unwrap();
        let opts = PartialMeanOptions { standardize: false, ..Default::default() };
        let c = PartialMeanCurve::new(&data, &kernel(KernelFamily::Gaussian2, 2, 0.05), RewardSpec::Unit, &space, opts).unwrap();
        assert!(c.values().iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn outer_subsample_is_recorded() {
        let space = DecisionSpace::interval(0.0, 3.0, 4).unwrap();
        let opts = PartialMeanOptions { max_outer_rows: Some(3), subsample_seed: 9, ..Default::default() };
        let c = PartialMeanCurve::new(&small(), &kernel(KernelFamily::Gaussian2, 2, 1.0), RewardSpec::Unit, &space, opts).unwrap();
        assert_eq!(c.outer_rows(), 3);
        assert_eq!(c.notices().len(), 1);
    }

    #[test]
    fn linear_reward_with_flat_outcome_picks_hi() {
        let m = 41;
        let rows: Vec<Vec<f64>> = (0..m).map(|i| vec![((i * 7) % 5) as f64]).collect();
        let z: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        let data = ObservationalDataset::from_rows(&rows, z, vec![1.0; m]).unwrap();
        let space = DecisionSpace::interval(0.0, 1.0, 11).unwrap();
        let c = PartialMeanCurve::new(&data, &kernel(KernelFamily::Gaussian2, 2, 0.05), RewardSpec::margin(0.0).unwrap(), &space, Default::default())
            .unwrap();
        assert_eq!(c.decision().unwrap().z, 1.0);
    }

    #[test]
    fn gaussian_constants() {
        let k = kernel(KernelFamily::Gaussian2, 2, 1.0);
        let d = asymptotic_constants(&k, None, 0.0).unwrap();
        let sp = std::f64::consts::PI.sqrt();
        assert!((d.kappa - 1.0 / (2.0 * sp)).abs() < 1e-10);
        assert!((d.kappa_prime - 1.0 / (4.0 * sp)).abs() < 1e-10);
        let e = asymptotic_constants(&kernel(KernelFamily::Epanechnikov, 2, 1.0), None, 0.0).unwrap();
        assert!(e.kappa > 0.0 && e.kappa.is_finite());
    }
}
