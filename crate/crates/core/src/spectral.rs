//! Truncated feature expansions of the RBF kernel and the MMD-RBF summand
//! in low dimension, truncation errors, and fitted `(Lambda, mu, Sigma, tau)`
//! inputs for the quadratic-form law.
//!
//! In one dimension
//!
//! ```text
//! exp(-(x - x')^2 / (2 g)) = sum_k  1/(k! g^k)  psi_k(x) psi_k(x'),
//! psi_k(x) = x^k exp(-x^2 / (2 g)),
//! ```
//!
//! and the `d`-dimensional kernel is the product over coordinates, so a
//! multi-index `k = (k_1, ..., k_d)` with every `k_j <= K` carries weight
//! `alpha_k = prod_j 1/(k_j! g^{k_j})`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{rbf_eval, Kernel};
use crate::limits::{simulate_quadratic_form, QuadraticForm};
use crate::model::{MeanShiftModel, RngStream};
use crate::ustat::{mmd_summand, PairedSample, SummandSpec};

pub const MAX_BASIS_DIM: usize = 3;
pub const MAX_BASIS_SIZE: usize = 4096;
pub const MAX_FEATURES: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct RbfBasis {
    gamma: f64,
    d: usize,
    degree: usize,
    // 1-D weights 1/(k! g^k), k = 0..=degree
    lambda_1d: Vec<f64>,
}

impl RbfBasis {
    pub fn new(gamma: f64, d: usize, degree: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("basis bandwidth must be positive"));
        }
        if d == 0 || d > MAX_BASIS_DIM {
            return Err(Error::invalid(format!("basis dimension must be in 1..=3, got {d}")));
        }
        let size = (degree + 1).checked_pow(d as u32).unwrap_or(usize::MAX);
        if size > MAX_BASIS_SIZE {
            return Err(Error::invalid(format!("basis size {size} exceeds {MAX_BASIS_SIZE}")));
        }
        let mut lambda_1d = Vec::with_capacity(degree + 1);
        let mut w = 1.0;
        for k in 0..=degree {
            if k > 0 {
                w /= k as f64 * gamma;
            }
            lambda_1d.push(w);
        }
        Ok(RbfBasis { gamma, d, degree, lambda_1d })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        (self.degree + 1).pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of entry `l`; coordinate 0 varies fastest.
    pub fn multi_index(&self, mut l: usize) -> Vec<usize> {
        let b = self.degree + 1;
        (0..self.d)
            .map(|_| {
                let k = l % b;
                l /= b;
                k
            })
            .collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        (0..self.len())
            .map(|l| self.multi_index(l).iter().map(|&k| self.lambda_1d[k]).product())
            .collect()
    }

    fn table_1d(&self, x: f64) -> Vec<f64> {
        let e = (-x * x / (2.0 * self.gamma)).exp();
        let mut out = Vec::with_capacity(self.degree + 1);
        let mut p = e;
        for _ in 0..=self.degree {
            out.push(p);
            p *= x;
        }
        out
    }

    /// All `psi_k(x)` in multi-index order.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d, "point dimension must match the basis");
        let tables: Vec<Vec<f64>> = x.iter().map(|&v| self.table_1d(v)).collect();
        (0..self.len())
            .map(|l| {
                self.multi_index(l)
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| tables[j][k])
                    .product()
            })
            .collect()
    }
}

/// Truncated RBF kernel as a product of per-coordinate partial sums.
pub fn rbf_truncated_eval(basis: &RbfBasis, x: &[f64], xp: &[f64]) -> f64 {
    assert_eq!(x.len(), basis.d);
    assert_eq!(xp.len(), basis.d);
    x.iter()
        .zip(xp)
        .map(|(&a, &b)| {
            let (ta, tb) = (basis.table_1d(a), basis.table_1d(b));
            (0..=basis.degree)
                .map(|k| basis.lambda_1d[k] * ta[k] * tb[k])
                .sum::<f64>()
        })
        .product()
}

/// Truncated RBF kernel as the explicit multi-index sum.
pub fn rbf_truncated_eval_multi(basis: &RbfBasis, x: &[f64], xp: &[f64]) -> f64 {
    let (f, fp) = (basis.features(x), basis.features(xp));
    basis
        .alphas()
        .iter()
        .zip(f.iter().zip(&fp))
        .map(|(a, (u, v))| a * u * v)
        .sum()
}

/// MMD feature `psi_k(x) - psi_k(y)` for multi-index entry `l`.
pub fn mmd_feature(basis: &RbfBasis, x: &[f64], y: &[f64], l: usize) -> f64 {
    let idx = basis.multi_index(l);
    let psi = |p: &[f64]| -> f64 {
        idx.iter()
            .enumerate()
            .map(|(j, &k)| basis.table_1d(p[j])[k])
            .product()
    };
    psi(x) - psi(y)
}

/// Which expansion is being truncated.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// `phi_k(x, y) = psi_k(x) - psi_k(y)` against the MMD-RBF summand.
    MmdRbf(RbfBasis),
    /// `psi_k(x)` against the plain RBF kernel on `X ~ Q`.
    RawRbf(RbfBasis),
    /// `phi_l(x, y) = x_l - y_l` with unit weights; exact for linear MMD.
    MmdLinear { d: usize },
}

impl FeatureMap {
    /// Feature map matching a summand; KSD has no supported expansion.
    pub fn for_summand(spec: &SummandSpec, d: usize, degree: usize) -> Result<Self> {
        match spec {
            SummandSpec::Mmd { kernel: Kernel::Rbf { gamma } } => {
                Ok(FeatureMap::MmdRbf(RbfBasis::new(*gamma, d, degree)?))
            }
            SummandSpec::Mmd { kernel: Kernel::Linear } => Ok(FeatureMap::MmdLinear { d }),
            SummandSpec::Ksd { .. } => Err(Error::UnsupportedSummand(
                "KSD has no truncated feature expansion here",
            )),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FeatureMap::MmdRbf(b) | FeatureMap::RawRbf(b) => b.len(),
            FeatureMap::MmdLinear { d } => *d,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d(&self) -> usize {
        match self {
            FeatureMap::MmdRbf(b) | FeatureMap::RawRbf(b) => b.d(),
            FeatureMap::MmdLinear { d } => *d,
        }
    }

    pub fn needs_y(&self) -> bool {
        !matches!(self, FeatureMap::RawRbf(_))
    }

    pub fn lambda(&self) -> Vec<f64> {
        match self {
            FeatureMap::MmdRbf(b) | FeatureMap::RawRbf(b) => b.alphas(),
            FeatureMap::MmdLinear { d } => vec![1.0; *d],
        }
    }

    pub fn features(&self, x: &[f64], y: Option<&[f64]>) -> Vec<f64> {
        match self {
            FeatureMap::RawRbf(b) => b.features(x),
            FeatureMap::MmdRbf(b) => {
                let y = y.expect("MMD features need y");
                b.features(x).iter().zip(b.features(y)).map(|(a, c)| a - c).collect()
            }
            FeatureMap::MmdLinear { .. } => {
                let y = y.expect("MMD features need y");
                x.iter().zip(y).map(|(a, c)| a - c).collect()
            }
        }
    }

    /// `sum_k lambda_k phi_k(z) phi_k(z')`.
    pub fn truncated(&self, z: (&[f64], Option<&[f64]>), zp: (&[f64], Option<&[f64]>)) -> f64 {
        let (f, fp) = (self.features(z.0, z.1), self.features(zp.0, zp.1));
        self.lambda().iter().zip(f.iter().zip(&fp)).map(|(l, (a, b))| l * a * b).sum()
    }

    /// The untruncated function being expanded.
    pub fn exact(&self, z: (&[f64], Option<&[f64]>), zp: (&[f64], Option<&[f64]>)) -> f64 {
        match self {
            FeatureMap::RawRbf(b) => rbf_eval(b.gamma(), z.0, zp.0),
            FeatureMap::MmdRbf(b) => mmd_summand(
                &Kernel::Rbf { gamma: b.gamma() },
                z.0,
                z.1.expect("y"),
                zp.0,
                zp.1.expect("y"),
            ),
            FeatureMap::MmdLinear { .. } => {
                mmd_summand(&Kernel::Linear, z.0, z.1.expect("y"), zp.0, zp.1.expect("y"))
            }
        }
    }
}

/// Monte-Carlo `L_nu` truncation error with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationError {
    pub value: f64,
    pub se: f64,
}

/// `(mean over n_mc independent pairs of |truncated - exact|^nu)^{1/nu}`.
///
/// The pairs depend only on `stream`, so calls with different bases on one
/// stream share their random numbers.
pub fn epsilon_k(
    map: &FeatureMap,
    model: &MeanShiftModel,
    nu: u32,
    n_mc: usize,
    stream: RngStream,
) -> Result<TruncationError> {
    Ok(epsilon_k_all(map, model, &[nu], n_mc, stream)?[0])
}

/// [`epsilon_k`] for several `nu` on the same pairs.
pub fn epsilon_k_all(
    map: &FeatureMap,
    model: &MeanShiftModel,
    nus: &[u32],
    n_mc: usize,
    stream: RngStream,
) -> Result<Vec<TruncationError>> {
    if nus.iter().any(|nu| !(1..=3).contains(nu)) {
        return Err(Error::invalid("nu must be 1, 2 or 3"));
    }
    if n_mc < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n_mc });
    }
    if model.d() != map.d() {
        return Err(Error::DimensionMismatch { expected: map.d(), got: model.d() });
    }
    let a = PairedSample::draw_from(model, n_mc, stream.derive(1), map.needs_y())?;
    let b = PairedSample::draw_from(model, n_mc, stream.derive(2), map.needs_y())?;
    let diffs: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let z = (a.x_row(i), a.y_row(i));
            let zp = (b.x_row(i), b.y_row(i));
            (map.truncated(z, zp) - map.exact(z, zp)).abs()
        })
        .collect();
    let nf = n_mc as f64;
    Ok(nus
        .iter()
        .map(|&nu| {
            let p: Vec<f64> = diffs.iter().map(|v| v.powi(nu as i32)).collect();
            let m = p.iter().sum::<f64>() / nf;
            let var = p.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (nf - 1.0);
            let value = m.powf(1.0 / nu as f64);
            let se = if m > 0.0 {
                value / (nu as f64 * m) * (var / nf).sqrt()
            } else {
                0.0
            };
            TruncationError { value, se }
        })
        .collect())
}

/// Fitted moments of the feature vector and the resulting weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedRep {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    /// Eigenvalues of `Sigma^{1/2} Lambda Sigma^{1/2}`, in descending order.
    pub tau: Vec<f64>,
    pub n_fit: usize,
    form: QuadraticForm,
}

impl TruncatedRep {
    /// Draws of the quadratic-form law with these inputs.
    pub fn simulate(&self, n: usize, d_shift: f64, reps: usize, stream: RngStream) -> Result<Vec<f64>> {
        simulate_quadratic_form(&self.form, n, d_shift, reps, stream)
    }

    pub fn sum_tau_sq(&self) -> f64 {
        self.tau.iter().map(|t| t * t).sum()
    }

    /// `mu^T Lambda Sigma Lambda mu`, the conditional variance of the
    /// truncated summand.
    pub fn linear_variance(&self) -> f64 {
        let k = self.lambda.len();
        let lm: Vec<f64> = (0..k).map(|i| self.lambda[i] * self.mu[i]).collect();
        let mut acc = 0.0;
        for i in 0..k {
            for j in 0..k {
                acc += lm[i] * self.sigma[(i, j)] * lm[j];
            }
        }
        acc
    }
}

/// Sample mean and covariance of the feature vector over `n_fit` draws, and
/// the weights `tau`.
pub fn fit_truncated_rep(
    map: &FeatureMap,
    model: &MeanShiftModel,
    n_fit: usize,
    stream: RngStream,
) -> Result<TruncatedRep> {
    fit_with_lambda(map, map.lambda(), model, n_fit, stream)
}

/// [`fit_truncated_rep`] with the feature weights replaced by `lambda`.
pub fn fit_with_lambda(
    map: &FeatureMap,
    lambda: Vec<f64>,
    model: &MeanShiftModel,
    n_fit: usize,
    stream: RngStream,
) -> Result<TruncatedRep> {
    let k = map.len();
    if k > MAX_FEATURES {
        return Err(Error::invalid(format!("{k} features exceed the limit of {MAX_FEATURES}")));
    }
    if lambda.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: lambda.len() });
    }
    if n_fit < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n_fit });
    }
    if model.d() != map.d() {
        return Err(Error::DimensionMismatch { expected: map.d(), got: model.d() });
    }
    let data = PairedSample::draw_from(model, n_fit, stream, map.needs_y())?;
    let rows: Vec<f64> = (0..n_fit)
        .into_par_iter()
        .flat_map_iter(|i| map.features(data.x_row(i), data.y_row(i)))
        .collect();
    let f = DMatrix::from_row_slice(n_fit, k, &rows);
    let nf = n_fit as f64;
    let mu: Vec<f64> = (0..k).map(|j| f.column(j).sum() / nf).collect();
    let mut centered = f;
    for j in 0..k {
        let m = mu[j];
        centered.column_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    let sigma = centered.transpose() * &centered / (nf - 1.0);
    let form = QuadraticForm::new(&lambda, &sigma, &mu)?;
    let mut tau = form.tau.clone();
    tau.sort_by(|a, b| b.total_cmp(a));
    Ok(TruncatedRep { lambda, mu, sigma, tau, n_fit, form })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CovSpec;

    #[test]
    fn basis_examples() {
        let b = RbfBasis::new(3.0, 1, 0).unwrap();
        assert_eq!(rbf_truncated_eval(&b, &[0.0], &[0.0]), 1.0);
        let b = RbfBasis::new(10.0, 1, 12).unwrap();
        let v = rbf_truncated_eval(&b, &[1.0], &[2.0]);
        assert!((v - (-0.05f64).exp()).abs() < 1e-8);
        let b = RbfBasis::new(2.5, 2, 3).unwrap();
        let (x, y) = ([0.4, -1.2], [1.1, 0.3]);
        assert!((rbf_truncated_eval(&b, &x, &y) - rbf_truncated_eval_multi(&b, &x, &y)).abs() < 1e-12);
        assert!(RbfBasis::new(1.0, 4, 1).is_err());
        assert!(RbfBasis::new(1.0, 3, 16).is_err());
    }

    #[test]
    fn alphas_decrease_along_each_coordinate() {
        let b = RbfBasis::new(0.5, 2, 4).unwrap();
        let a = b.alphas();
        for l in 0..b.len() {
            let idx = b.multi_index(l);
            for j in 0..2 {
                if idx[j] < 4 {
                    let step = if j == 0 { 1 } else { 5 };
                    // alpha ratio is 1/((k+1) g), below 1 only when (k+1) g >= 1
                    let ratio = a[l + step] / a[l];
                    assert!((ratio - 1.0 / ((idx[j] + 1) as f64 * 0.5)).abs() < 1e-12);
                }
            }
        }
        let b = RbfBasis::new(1.5, 3, 3).unwrap();
        let a = b.alphas();
        for l in 0..b.len() {
            let idx = b.multi_index(l);
            let mut step = 1;
            for k in idx {
                if k < 3 {
                    assert!(a[l + step] <= a[l]);
                }
                step *= 4;
            }
        }
    }

    #[test]
    fn mmd_feature_examples() {
        let b = RbfBasis::new(4.0, 1, 5).unwrap();
        for l in 0..b.len() {
            assert_eq!(mmd_feature(&b, &[0.7], &[0.7], l), 0.0);
        }
        let v = mmd_feature(&b, &[1.0], &[2.0], 0);
        assert!((v - ((-1.0f64 / 8.0).exp() - (-4.0f64 / 8.0).exp())).abs() < 1e-15);
    }

    #[test]
    fn truncated_mmd_summand_matches_exact() {
        let b = RbfBasis::new(10.0, 1, 12).unwrap();
        let map = FeatureMap::MmdRbf(b);
        let mut worst = 0.0f64;
        for i in 0..100 {
            let t = |k: usize| ((i * 37 + k * 101) % 600) as f64 / 100.0 - 3.0;
            let (x, y, xp, yp) = ([t(1)], [t(2)], [t(3)], [t(4)]);
            let z = (&x[..], Some(&y[..]));
            let zp = (&xp[..], Some(&yp[..]));
            worst = worst.max((map.truncated(z, zp) - map.exact(z, zp)).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn ksd_has_no_feature_map() {
        let m = MeanShiftModel::new(vec![0.0], CovSpec::Identity).unwrap();
        let spec = SummandSpec::ksd(10.0, m).unwrap();
        assert!(matches!(
            FeatureMap::for_summand(&spec, 1, 4),
            Err(Error::UnsupportedSummand(_))
        ));
    }

    #[test]
    fn linear_map_has_no_truncation_error() {
        let m = MeanShiftModel::first_coordinate(2, 1.0, CovSpec::Identity).unwrap();
        let e = epsilon_k(&FeatureMap::MmdLinear { d: 2 }, &m, 2, 500, RngStream::new(1, 0, 0)).unwrap();
        assert!(e.value < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_tau() {
        let m = MeanShiftModel::first_coordinate(1, 1.0, CovSpec::Identity).unwrap();
        let map = FeatureMap::MmdRbf(RbfBasis::new(10.0, 1, 3).unwrap());
        let rep = fit_with_lambda(&map, vec![0.0; 4], &m, 2000, RngStream::new(2, 0, 0)).unwrap();
        assert!(rep.tau.iter().all(|t| t.abs() < 1e-15));
    }
}
