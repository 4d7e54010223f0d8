//! Regression primitives: Nadaraya–Watson smoothing, least squares and
//! logistic maximum likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};

/// Denominators below this are recomputed in the log domain.
pub(crate) const UNDERFLOW_GUARD: f64 = 1e-250;

/// Per-column centering and scaling.
///
/// Columns with zero spread are only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Column statistics of a row-major `n × d` buffer (population variance).
    pub fn fit(values: &[f64], d: usize) -> Self {
        let n = if d == 0 { 0 } else { values.len() / d };
        let mut means = vec![0.0; d];
        let mut scales = vec![1.0; d];
        if n == 0 {
            return Self { means, scales };
        }
        for c in 0..d {
            let mean = (0..n).map(|i| values[i * d + c]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (values[i * d + c] - mean).powi(2)).sum::<f64>() / n as f64;
            means[c] = mean;
            if var > 0.0 && var.is_finite() {
                scales[c] = var.sqrt();
            }
        }
        Self { means, scales }
    }

    /// The identity transform on `d` columns.
    pub fn identity(d: usize) -> Self {
        Self { means: vec![0.0; d], scales: vec![1.0; d] }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let d = self.means.len();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - self.means[i % d]) / self.scales[i % d])
            .collect()
    }
}

/// A Nadaraya–Watson smoother with a product kernel at a common bandwidth.
#[derive(Debug, Clone)]
pub struct NWRegression {
    points: Vec<f64>,
    d: usize,
    targets: Vec<f64>,
    family: KernelFamily,
    h: f64,
    transform: Standardizer,
}

impl NWRegression {
    /// `points` is a row-major `n × d` buffer; the kernel dimension must be `d`.
    pub fn new(points: Vec<f64>, targets: Vec<f64>, kernel: &KernelSpec, h: f64) -> Result<Self> {
        let d = kernel.dim;
        let n = targets.len();
        if n == 0 {
            return Err(Error::InvalidInput("regression needs at least one point".into()));
        }
        if points.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: points.len() });
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        if let Some(index) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "points", index });
        }
        if let Some(index) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "targets", index });
        }
        Ok(Self { points, d, targets, family: kernel.family, h, transform: Standardizer::identity(d) })
    }

    /// Standardizes columns `from..d` to mean 0 and variance 1 before kernel
    /// evaluation. Queries are transformed the same way, so callers keep
    /// working on the original scale.
    pub fn standardize_from(mut self, from: usize) -> Self {
        let mut t = Standardizer::fit(&self.points, self.d);
        for c in 0..from.min(self.d) {
            t.means[c] = 0.0;
            t.scales[c] = 1.0;
        }
        self.points = t.apply(&self.points);
        self.transform = t;
        self
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: query.len() });
        }
        if let Some(index) = query.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "query", index });
        }
        let q = self.transform.apply(query);
        let d = self.d;
        let mut u = vec![0.0; d];
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &t) in self.targets.iter().enumerate() {
            let p = &self.points[i * d..(i + 1) * d];
            for c in 0..d {
                u[c] = (q[c] - p[c]) / self.h;
            }
            let w = crate::kernels::product_kernel(self.family, &u);
            num += w * t;
            den += w;
        }
        if den.abs() < UNDERFLOW_GUARD && self.family.is_gaussian() {
            (num, den) = self.stable_sums(&q);
        }
        if den == 0.0 {
            return Err(Error::EmptyNeighborhood { query: query.to_vec() });
        }
        Ok(num / den)
    }

    /// Kernel sums rescaled by `exp(max_i Σ_c u_ic²/2)` to survive underflow.
    fn stable_sums(&self, q: &[f64]) -> (f64, f64) {
        let d = self.d;
        let exponent = |i: usize| -> f64 {
            (0..d).map(|c| {
                let u = (q[c] - self.points[i * d + c]) / self.h;
                -0.5 * u * u
            }).sum()
        };
        let shift = (0..self.len()).map(exponent).fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &t) in self.targets.iter().enumerate() {
            let poly: f64 = (0..d)
                .map(|c| self.family.gaussian_polynomial((q[c] - self.points[i * d + c]) / self.h))
                .product();
            let w = poly * (exponent(i) - shift).exp();
            num += w * t;
            den += w;
        }
        (num, den)
    }
}

/// `Σ K((q−pᵢ)/h)·tᵢ / Σ K((q−pᵢ)/h)`.
pub fn nw_predict(model: &NWRegression, query: &[f64]) -> Result<f64> {
    model.predict(query)
}

/// Least-squares coefficients, intercept first when the design carries one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub residual_variance: f64,
}

impl LinearFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }
}

const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares via Householder QR.
///
/// A column whose component orthogonal to the preceding columns is below
/// `1e-10` of its norm is reported as collinear.
pub fn ols_fit(design: &DMatrix<f64>, y: &[f64]) -> Result<LinearFit> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if p == 0 || n < p {
        return Err(Error::InvalidInput(format!("least squares needs rows >= columns >= 1, got {n} x {p}")));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let norm = design.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(Error::RankDeficient { column: j });
        }
    }
    let rhs = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficient { column: p - 1 })?;
    let residuals = DVector::from_column_slice(y) - design * &beta;
    let rss = residuals.norm_squared();
    let residual_variance = if n > p { rss / (n - p) as f64 } else { 0.0 };
    Ok(LinearFit { coefficients: beta.iter().copied().collect(), residual_variance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticFit {
    /// Fitted probability for one design row.
    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum())
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

const SEPARATION_NORM: f64 = 1e6;

/// Bernoulli maximum likelihood by damped Newton–Raphson.
///
/// Each Newton step is halved until the log-likelihood does not decrease.
/// Converged when the largest coefficient change is below `tol`.
pub fn logistic_fit(design: &DMatrix<f64>, y: &[f64], max_iter: usize, tol: f64) -> Result<LogisticFit> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if p == 0 || n < p {
        return Err(Error::InvalidInput(format!("logistic fit needs rows >= columns >= 1, got {n} x {p}")));
    }
    if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!("logistic response must be 0/1, row {i} is {}", y[i])));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::OneClass);
    }
    // Rank check up front so a collinear design is reported as such.
    ols_fit(design, y)?;

    let yv = DVector::from_column_slice(y);
    let loglik = |beta: &DVector<f64>| -> f64 {
        let eta = design * beta;
        eta.iter().zip(y).map(|(&t, &yi)| yi * t - softplus(t)).sum()
    };
    let mut beta = DVector::<f64>::zeros(p);
    let mut ll = loglik(&beta);
    for iter in 1..=max_iter {
        let eta = design * &beta;
        let prob = eta.map(sigmoid);
        let score = design.transpose() * (&yv - &prob);
        let mut weighted = design.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= prob[i] * (1.0 - prob[i]);
        }
        let info = design.transpose() * weighted;
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => info.lu().solve(&score).ok_or(Error::Separation)?,
        };
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = loglik(&candidate);
        let mut halvings = 0;
        while !(cand_ll >= ll) && halvings < 40 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_ll = loglik(&candidate);
            halvings += 1;
        }
        let change = (&candidate - &beta).amax();
        beta = candidate;
        ll = cand_ll;
        if !beta.iter().all(|b| b.is_finite()) || beta.norm() > SEPARATION_NORM {
            return Err(Error::Separation);
        }
        if change < tol {
            return Ok(LogisticFit { coefficients: beta.iter().copied().collect(), converged: true, iterations: iter });
        }
    }
    Ok(LogisticFit { coefficients: beta.iter().copied().collect(), converged: false, iterations: max_iter })
}

/// Default logistic iteration cap and tolerance.
pub const LOGISTIC_MAX_ITER: usize = 100;
pub const LOGISTIC_TOL: f64 = 1e-8;

/// Builds an `n × p` design matrix row by row.
pub fn design_matrix(n: usize, p: usize, mut row: impl FnMut(usize, &mut [f64])) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(n, p);
    let mut buf = vec![0.0; p];
    for i in 0..n {
        row(i, &mut buf);
        for (j, &v) in buf.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A fitted model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Linear { features: Vec<String>, fit: LinearFit },
    Logistic { features: Vec<String>, fit: LogisticFit },
    Kernel { family: KernelFamily, bandwidth: f64, n: usize, standardizer: Option<Standardizer> },
}

/// Versioned JSON envelope for fitted models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub models: Vec<FittedModel>,
}

impl ModelDocument {
    pub fn new(models: Vec<FittedModel>) -> Self {
        Self { version: MODEL_FORMAT_VERSION, models }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported model document version {}", doc.version)));
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BandwidthRule;

    fn spec(family: KernelFamily, dim: usize) -> KernelSpec {
        KernelSpec::new(family, dim, BandwidthRule::Fixed { h: 1.0 }).unwrap()
    }

    fn line_design(z: &[f64]) -> DMatrix<f64> {
        design_matrix(z.len(), 2, |i, r| {
            r[0] = 1.0;
            r[1] = z[i];
        })
    }

    #[test]
    fn nw_single_point_and_constant() {
        let m = NWRegression::new(vec![3.0], vec![7.5], &spec(KernelFamily::Gaussian2, 1), 0.2).unwrap();
        assert_eq!(m.predict(&[10.0]).unwrap(), 7.5);
        let m = NWRegression::new(vec![0.0, 1.0, 5.0], vec![2.0; 3], &spec(KernelFamily::Gaussian4, 1), 1.0).unwrap();
        assert!((m.predict(&[0.3]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn nw_symmetric_midpoint() {
        let m = NWRegression::new(vec![0.0, 1.0], vec![0.0, 1.0], &spec(KernelFamily::Gaussian2, 1), 1.0).unwrap();
        assert_eq!(m.predict(&[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn nw_empty_neighborhood_carries_query() {
        let m = NWRegression::new(vec![0.0], vec![1.0], &spec(KernelFamily::Epanechnikov, 1), 0.1).unwrap();
        match m.predict(&[3.0]).unwrap_err() {
            Error::EmptyNeighborhood { query } => assert_eq!(query, vec![3.0]),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn nw_survives_gaussian_underflow() {
        let m = NWRegression::new(vec![0.0, 1.0], vec![1.0, 3.0], &spec(KernelFamily::Gaussian2, 1), 0.01).unwrap();
        // Both weights underflow to zero at the naive scale.
        let v = m.predict(&[100.0]).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nw_large_bandwidth_gives_grand_mean() {
        let pts = vec![0.0, 1.0, 2.0, 7.0];
        let t = vec![1.0, -2.0, 4.0, 0.5];
        let m = NWRegression::new(pts, t.clone(), &spec(KernelFamily::Gaussian2, 1), 1e6).unwrap();
        let mean = t.iter().sum::<f64>() / 4.0;
        assert!((m.predict(&[3.0]).unwrap() - mean).abs() < 1e-6);
    }

    #[test]
    fn standardization_is_scale_free() {
        let pts = vec![0.0, 10.0, 1.0, 20.0, 2.0, 5.0];
        let t = vec![1.0, 2.0, 4.0];
        let scaled: Vec<f64> = pts.iter().enumerate().map(|(i, &v)| if i % 2 == 1 { v * 1000.0 } else { v }).collect();
        let a = NWRegression::new(pts, t.clone(), &spec(KernelFamily::Gaussian2, 2), 0.7).unwrap().standardize_from(1);
        let b = NWRegression::new(scaled, t, &spec(KernelFamily::Gaussian2, 2), 0.7).unwrap().standardize_from(1);
        let (va, vb) = (a.predict(&[0.5, 12.0]).unwrap(), b.predict(&[0.5, 12000.0]).unwrap());
        assert!((va - vb).abs() < 1e-12);
    }

    #[test]
    fn ols_exact_line() {
        let z = [0.0, 1.0, 2.5, 4.0];
        let y: Vec<f64> = z.iter().map(|v| 2.0 + 3.0 * v).collect();
        let fit = ols_fit(&line_design(&z), &y).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12 && (fit.coefficients[1] - 3.0).abs() < 1e-12);
        assert!(fit.residual_variance < 1e-24);
    }

    #[test]
    fn ols_hand_computed() {
        let fit = ols_fit(&line_design(&[-1.0, 0.0, 1.0]), &[0.0, 1.0, 0.0]).unwrap();
        assert!((fit.coefficients[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!(fit.coefficients[1].abs() < 1e-14);
        // RSS = 2/3 over n - p = 1
        assert!((fit.residual_variance - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn ols_names_collinear_column() {
        let d = design_matrix(4, 3, |i, r| {
            r[0] = 1.0;
            r[1] = i as f64;
            r[2] = 2.0 * i as f64 - 1.0;
        });
        assert!(matches!(ols_fit(&d, &[1.0, 2.0, 0.0, 1.0]), Err(Error::RankDeficient { column: 2 })));
        let constant = design_matrix(3, 2, |_, r| {
            r[0] = 1.0;
            r[1] = 4.0;
        });
        assert!(matches!(ols_fit(&constant, &[1.0, 2.0, 3.0]), Err(Error::RankDeficient { column: 1 })));
    }

    #[test]
    fn logistic_intercept_only_is_logit_mean() {
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0];
        let d = design_matrix(y.len(), 1, |_, r| r[0] = 1.0);
        let fit = logistic_fit(&d, &y, LOGISTIC_MAX_ITER, LOGISTIC_TOL).unwrap();
        let m: f64 = 5.0 / 8.0;
        assert!(fit.converged);
        assert!((fit.coefficients[0] - (m / (1.0 - m)).ln()).abs() < 1e-8);
    }

    #[test]
    fn logistic_symmetric_toy() {
        let fit = logistic_fit(&line_design(&[0.0, 0.0, 1.0, 1.0]), &[0.0, 1.0, 0.0, 1.0], 100, 1e-8).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-8 && fit.coefficients[1].abs() < 1e-8);
    }

    #[test]
    fn logistic_failure_modes() {
        let d = line_design(&[0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(logistic_fit(&d, &[0.0, 0.0, 1.0, 1.0], 100, 1e-8), Err(Error::Separation)));
        assert!(matches!(logistic_fit(&d, &[1.0; 4], 100, 1e-8), Err(Error::OneClass)));
    }

    #[test]
    fn model_document_round_trip() {
        let doc = ModelDocument::new(vec![FittedModel::Linear {
            features: vec!["1".into(), "z".into()],
            fit: LinearFit { coefficients: vec![0.1, -2.0], residual_variance: 0.5 },
        }]);
        let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        assert!(ModelDocument::from_json(r#"{"version":9,"models":[]}"#).is_err());
    }
}
