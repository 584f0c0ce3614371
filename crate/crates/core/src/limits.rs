//! Candidate limiting laws of `D_n`: the non-degenerate Gaussian, the
//! mean-and-variance matched Gamma and shifted chi-square, the weighted
//! chi-square sum `W_n`, the quadratic-form law `U_n`, and Kolmogorov
//! distances against any of them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MeanShiftModel, RngStream};
use crate::moments::MomentSet;
use crate::special::{chisq1_cdf, gamma_p, normal_cdf};

/// Draws per parallel chunk in the samplers.
const CHUNK: usize = 4096;

/// Relative tolerance for negative eigenvalues of a covariance.
pub const PSD_TOL: f64 = 1e-8;

/// A limiting distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum LimitSpec {
    #[serde(rename = "gauss")]
    Gaussian { mean: f64, var: f64 },
    #[serde(rename = "gamma")]
    Gamma { shape: f64, scale: f64 },
    /// `a (xi^2 - 1) + shift`.
    #[serde(rename = "chisq1")]
    ShiftedScaledChiSq { a: f64, shift: f64 },
    /// `sum_k weights[k] (xi_k^2 - 1) / sqrt(n (n - 1)) + shift`.
    #[serde(rename = "wchisq")]
    WeightedChiSqSum { weights: Vec<f64>, n: usize, shift: f64 },
    /// Sorted draws.
    #[serde(rename = "empirical")]
    Empirical { samples: Vec<f64> },
}

impl LimitSpec {
    /// Empirical law of `samples` (sorted here).
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empirical law needs at least one sample"));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("empirical samples contain NaN"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(LimitSpec::Empirical { samples })
    }

    pub fn is_point_mass(&self) -> bool {
        match self {
            LimitSpec::Gaussian { var, .. } => *var == 0.0,
            LimitSpec::ShiftedScaledChiSq { a, .. } => *a == 0.0,
            LimitSpec::WeightedChiSqSum { weights, .. } => weights.iter().all(|w| *w == 0.0),
            LimitSpec::Gamma { .. } => false,
            LimitSpec::Empirical { samples } => samples.first() == samples.last(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        match self {
            LimitSpec::Gaussian { mean, var } if !(mean.is_finite() && *var >= 0.0 && var.is_finite()) => {
                bad("gaussian limit needs a finite mean and non-negative variance")
            }
            LimitSpec::Gamma { shape, scale } if !(*shape > 0.0 && *scale > 0.0 && shape.is_finite() && scale.is_finite()) => {
                bad("gamma limit needs positive finite shape and scale")
            }
            LimitSpec::ShiftedScaledChiSq { a, shift } if !(a.is_finite() && shift.is_finite()) => {
                bad("chi-square limit needs finite a and shift")
            }
            LimitSpec::WeightedChiSqSum { weights, n, shift } => {
                if *n < 2 {
                    bad("weighted chi-square limit needs n >= 2")
                } else if weights.is_empty() || !weights.iter().all(|w| w.is_finite()) || !shift.is_finite() {
                    bad("weighted chi-square limit needs finite, non-empty weights")
                } else {
                    Ok(())
                }
            }
            LimitSpec::Empirical { samples } if samples.is_empty() || !is_sorted(samples) => {
                bad("empirical limit needs non-empty sorted samples")
            }
            _ => Ok(()),
        }
    }
}

fn is_sorted(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

fn pair_scale(n: usize) -> f64 {
    let nf = n as f64;
    (nf * (nf - 1.0)).sqrt()
}

/// `N(D, 4 sigma2_cond / n)`. A degenerate summand gives a point mass at `D`.
pub fn nondegenerate_limit(ms: &MomentSet, n: usize) -> Result<LimitSpec> {
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    if ms.sigma_cond == 0.0 {
        log::warn!("sigma_cond = 0: the gaussian limit is a point mass at D = {}", ms.mean);
    }
    Ok(LimitSpec::Gaussian {
        mean: ms.mean,
        var: 4.0 * ms.sigma2_cond() / n as f64,
    })
}

/// Welch-Satterthwaite Gamma law with mean `D` and variance
/// `v = 2 sigma2_full / (n (n - 1))`.
pub fn gamma_matched_limit(ms: &MomentSet, n: usize) -> Result<LimitSpec> {
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    if !(ms.mean > 0.0) {
        return Err(Error::GammaMatchInfeasible(ms.mean));
    }
    let nf = n as f64;
    let v = 2.0 * ms.sigma2_full() / (nf * (nf - 1.0));
    if v == 0.0 {
        return Err(Error::DegenerateDenominator("sigma_full"));
    }
    Ok(LimitSpec::Gamma {
        shape: ms.mean * ms.mean / v,
        scale: v / ms.mean,
    })
}

/// `a (xi^2 - 1) + D` with `a = sigma_full / sqrt(n (n - 1))`.
pub fn chisq_matched_limit(ms: &MomentSet, n: usize) -> Result<LimitSpec> {
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    Ok(LimitSpec::ShiftedScaledChiSq {
        a: ms.sigma_full / pair_scale(n),
        shift: ms.mean,
    })
}

/// Weighted chi-square law of linear-kernel MMD: weights are twice the
/// covariance eigenvalues, shift `|mu|^2`.
pub fn linear_mmd_exact_limit(model: &MeanShiftModel, n: usize) -> Result<LimitSpec> {
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let mut weights = Vec::with_capacity(model.d());
    for (lam, mult) in model.cov().eigenvalues(model.d()) {
        weights.extend(std::iter::repeat_n(2.0 * lam, mult));
    }
    Ok(LimitSpec::WeightedChiSqSum {
        weights,
        n,
        shift: model.mu_norm2(),
    })
}

/// Symmetric square root of a PSD matrix. Eigenvalues down to
/// `-PSD_TOL * max|eig|` are clamped to zero; anything below is rejected.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(m)?;
    let vals = clamp_psd(eig.eigenvalues.as_slice())?;
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|x| x.sqrt())));
    Ok(v * d * v.transpose())
}

fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::invalid("matrix must be square"));
    }
    let sym = (m + m.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym))
}

fn clamp_psd(vals: &[f64]) -> Result<Vec<f64>> {
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(vals.iter().map(|v| v.max(0.0)).collect())
}

/// Inputs of the quadratic-form law in its eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    /// Eigenvalues of `S^{1/2} Lambda S^{1/2}`.
    pub tau: Vec<f64>,
    /// Linear coefficients `V^T S^{1/2} Lambda mu`.
    pub linear: Vec<f64>,
}

impl QuadraticForm {
    pub fn new(lambda: &[f64], sigma: &DMatrix<f64>, mu: &[f64]) -> Result<Self> {
        let k = lambda.len();
        if k == 0 || k > 512 {
            return Err(Error::invalid(format!("feature count must be in 1..=512, got {k}")));
        }
        if sigma.nrows() != k || sigma.ncols() != k {
            return Err(Error::DimensionMismatch { expected: k, got: sigma.nrows() });
        }
        if mu.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: mu.len() });
        }
        let root = psd_sqrt(sigma)?;
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(lambda));
        let m = &root * &lam * &root;
        let eig = symmetric_eigen(&m)?;
        let b = &root * (&lam * DVector::from_column_slice(mu));
        let linear = eig.eigenvectors.transpose() * b;
        Ok(QuadraticForm {
            tau: eig.eigenvalues.iter().cloned().collect(),
            linear: linear.iter().cloned().collect(),
        })
    }
}

/// Samples of
///
/// ```text
/// U_n = 1/(n(n-1)) sum_{i != j} eta_i^T S^{1/2} Lambda S^{1/2} eta_j
///       + (2/n) sum_i mu^T Lambda S^{1/2} eta_i + D
/// ```
///
/// In the eigenbasis of the quadratic form each direction needs only the
/// column sum `S_k ~ N(0, n)` and the residual `chi^2_{n-1}` of the sum of
/// squares, so a replicate costs `O(K)` draws.
pub fn unk_simulator(
    lambda: &[f64],
    sigma: &DMatrix<f64>,
    mu: &[f64],
    n: usize,
    d_shift: f64,
    reps: usize,
    stream: RngStream,
) -> Result<Vec<f64>> {
    let qf = QuadraticForm::new(lambda, sigma, mu)?;
    simulate_quadratic_form(&qf, n, d_shift, reps, stream)
}

pub fn simulate_quadratic_form(
    qf: &QuadraticForm,
    n: usize,
    d_shift: f64,
    reps: usize,
    stream: RngStream,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let nf = n as f64;
    let resid = Gamma::new(0.5 * (nf - 1.0), 2.0).map_err(|e| Error::invalid(e.to_string()))?;
    let sqrt_n = nf.sqrt();
    let denom = nf * (nf - 1.0);
    Ok(chunked(reps, stream, |rng| {
        let mut acc = 0.0;
        for (t, b) in qf.tau.iter().zip(&qf.linear) {
            let z: f64 = rng.sample(StandardNormal);
            let s = sqrt_n * z;
            let q = z * z + resid.sample(rng);
            // sum_{i != j} = S^2 - Q with Q = S^2/n + chi2_{n-1}
            acc += t * (s * s - q) / denom + 2.0 * b * s / nf;
        }
        acc + d_shift
    }))
}

fn chunked<F>(reps: usize, stream: RngStream, draw: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = reps.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.derive(c as u64).rng();
            let len = CHUNK.min(reps - c * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    parts.concat()
}

/// `reps` independent draws from `spec` (resampling for `Empirical`).
pub fn limit_sample(spec: &LimitSpec, reps: usize, stream: RngStream) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    spec.validate()?;
    let out = match spec {
        LimitSpec::Gaussian { mean, var } => {
            let sd = var.sqrt();
            chunked(reps, stream, |rng| mean + sd * rng.sample::<f64, _>(StandardNormal))
        }
        LimitSpec::Gamma { shape, scale } => {
            let g = Gamma::new(*shape, *scale).map_err(|e| Error::invalid(e.to_string()))?;
            chunked(reps, stream, |rng| g.sample(rng))
        }
        LimitSpec::ShiftedScaledChiSq { a, shift } => chunked(reps, stream, |rng| {
            let z: f64 = rng.sample(StandardNormal);
            a * (z * z - 1.0) + shift
        }),
        LimitSpec::WeightedChiSqSum { weights, n, shift } => {
            let groups = weight_groups(weights)?;
            let scale = pair_scale(*n);
            chunked(reps, stream, |rng| {
                let mut acc = 0.0;
                for (w, m, g) in &groups {
                    let chi = match g {
                        None => {
                            let z: f64 = rng.sample(StandardNormal);
                            z * z
                        }
                        Some(g) => g.sample(rng),
                    };
                    acc += w * (chi - *m as f64);
                }
                acc / scale + shift
            })
        }
        LimitSpec::Empirical { samples } => {
            chunked(reps, stream, |rng| samples[rng.random_range(0..samples.len())])
        }
    };
    Ok(out)
}

// Equal weights share one chi-square draw with summed degrees of freedom.
type WeightGroup = (f64, usize, Option<Gamma<f64>>);

fn weight_groups(weights: &[f64]) -> Result<Vec<WeightGroup>> {
    let mut sorted: Vec<f64> = weights.iter().cloned().filter(|w| *w != 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let mut groups: Vec<WeightGroup> = Vec::new();
    for w in sorted {
        match groups.last_mut() {
            Some((v, m, _)) if *v == w => *m += 1,
            _ => groups.push((w, 1, None)),
        }
    }
    for g in groups.iter_mut() {
        if g.1 > 1 {
            g.2 = Some(Gamma::new(0.5 * g.1 as f64, 2.0).map_err(|e| Error::invalid(e.to_string()))?);
        }
    }
    Ok(groups)
}

/// `P(X <= t)`.
pub fn limit_cdf(spec: &LimitSpec, t: f64) -> Result<f64> {
    cdf_impl(spec, t, false)
}

/// `P(X < t)`; differs from [`limit_cdf`] only at atoms.
pub fn limit_cdf_left(spec: &LimitSpec, t: f64) -> Result<f64> {
    cdf_impl(spec, t, true)
}

fn cdf_impl(spec: &LimitSpec, t: f64, left: bool) -> Result<f64> {
    let step = |atom: f64| {
        if t > atom || (!left && t == atom) {
            1.0
        } else {
            0.0
        }
    };
    Ok(match spec {
        LimitSpec::Gaussian { mean, var } => {
            if *var == 0.0 {
                step(*mean)
            } else {
                normal_cdf((t - mean) / var.sqrt())
            }
        }
        LimitSpec::Gamma { shape, scale } => {
            if t <= 0.0 {
                0.0
            } else {
                gamma_p(*shape, t / scale)
            }
        }
        LimitSpec::ShiftedScaledChiSq { a, shift } => {
            if *a == 0.0 {
                step(*shift)
            } else {
                let q = (t - shift) / a + 1.0;
                if *a > 0.0 {
                    chisq1_cdf(q)
                } else {
                    1.0 - chisq1_cdf(q)
                }
            }
        }
        LimitSpec::WeightedChiSqSum { .. } => return Err(Error::UnsupportedAnalyticCdf),
        LimitSpec::Empirical { samples } => {
            let k = if left {
                samples.partition_point(|v| *v < t)
            } else {
                samples.partition_point(|v| *v <= t)
            };
            k as f64 / samples.len() as f64
        }
    })
}

/// Mean, variance, third central moment and excess kurtosis of a law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitMoments {
    pub mean: f64,
    pub variance: f64,
    pub third_central: f64,
    pub excess_kurtosis: Option<f64>,
    /// Set when the values were estimated from `Empirical` samples.
    pub from_samples: bool,
}

impl LimitMoments {
    pub fn skewness(&self) -> f64 {
        self.third_central / self.variance.powf(1.5)
    }
}

pub fn limit_moments(spec: &LimitSpec) -> Result<LimitMoments> {
    spec.validate()?;
    let exact = |mean, variance, third_central, exk: f64| LimitMoments {
        mean,
        variance,
        third_central,
        excess_kurtosis: if exk.is_finite() { Some(exk) } else { None },
        from_samples: false,
    };
    Ok(match spec {
        LimitSpec::Gaussian { mean, var } => exact(*mean, *var, 0.0, 0.0),
        LimitSpec::Gamma { shape, scale } => exact(
            shape * scale,
            shape * scale * scale,
            2.0 * shape * scale.powi(3),
            6.0 / shape,
        ),
        LimitSpec::ShiftedScaledChiSq { a, shift } => {
            let exk = if *a == 0.0 { f64::NAN } else { 12.0 };
            exact(*shift, 2.0 * a * a, 8.0 * a.powi(3), exk)
        }
        LimitSpec::WeightedChiSqSum { weights, n, shift } => {
            let nn = (*n as f64) * (*n as f64 - 1.0);
            let p = |k: i32| weights.iter().map(|w| w.powi(k)).sum::<f64>();
            let (s2, s3, s4) = (p(2), p(3), p(4));
            let variance = 2.0 * s2 / nn;
            let fourth = (48.0 * s4 + 12.0 * s2 * s2) / (nn * nn);
            let exk = if variance == 0.0 { f64::NAN } else { fourth / (variance * variance) - 3.0 };
            exact(*shift, variance, 8.0 * s3 / nn.powf(1.5), exk)
        }
        LimitSpec::Empirical { samples } => {
            let r = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / r;
            let c = |k: i32| samples.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / r;
            let (m2, m3, m4) = (c(2), c(3), c(4));
            LimitMoments {
                mean,
                variance: m2,
                third_central: m3,
                excess_kurtosis: if m2 > 0.0 { Some(m4 / (m2 * m2) - 3.0) } else { None },
                from_samples: true,
            }
        }
    })
}

/// Kolmogorov distance between the empirical law of sorted `samples` and
/// `spec`. An `Empirical` spec gives the exact two-sample statistic.
pub fn kolmogorov_distance(samples: &[f64], spec: &LimitSpec) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    if !is_sorted(samples) {
        return Err(Error::invalid("samples must be sorted ascending"));
    }
    if let LimitSpec::Empirical { samples: other } = spec {
        return Ok(two_sample_ks(samples, other));
    }
    let r = samples.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = limit_cdf(spec, x)?;
        let fl = limit_cdf_left(spec, x)?;
        worst = worst.max((i + 1) as f64 / r - f).max(fl - i as f64 / r);
    }
    Ok(worst.clamp(0.0, 1.0))
}

/// Two-sample Kolmogorov-Smirnov statistic of two sorted samples.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut worst = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CovSpec;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn s() -> RngStream {
        RngStream::new(11, 0, 0)
    }

    #[test]
    fn nondegenerate_examples() {
        let ms = MomentSet::closed(0.0, 1.0, 5.0);
        assert_eq!(nondegenerate_limit(&ms, 4).unwrap(), LimitSpec::Gaussian { mean: 0.0, var: 1.0 });
        let ms = MomentSet::closed(2.0, 9.0, 50.0);
        assert_eq!(nondegenerate_limit(&ms, 36).unwrap(), LimitSpec::Gaussian { mean: 2.0, var: 1.0 });
        let h0 = nondegenerate_limit(&MomentSet::closed(0.0, 0.0, 1.0), 10).unwrap();
        assert!(h0.is_point_mass());
        assert_eq!(limit_cdf(&h0, 0.0).unwrap(), 1.0);
        assert_eq!(limit_cdf_left(&h0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn gamma_matched_examples() {
        // v = 2 sigma2_full / (n (n - 1)) = 8 at n = 2 needs sigma2_full = 8
        let ms = MomentSet::closed(2.0, 1.0, 8.0);
        match gamma_matched_limit(&ms, 2).unwrap() {
            LimitSpec::Gamma { shape, scale } => {
                assert!((shape - 0.5).abs() < 1e-14 && (scale - 4.0).abs() < 1e-14);
            }
            other => panic!("{other:?}"),
        }
        let ms = MomentSet::closed(100.0, 100.0, 1_003_200.0);
        match gamma_matched_limit(&ms, 50).unwrap() {
            LimitSpec::Gamma { shape, scale } => {
                assert!((shape - 12.2109).abs() < 1e-4);
                assert!((scale - 8.18939).abs() < 1e-5);
            }
            other => panic!("{other:?}"),
        }
        let ms = MomentSet::closed(0.0, 0.0, 1.0);
        assert_eq!(gamma_matched_limit(&ms, 5), Err(Error::GammaMatchInfeasible(0.0)));
    }

    #[test]
    fn chisq_matched_examples() {
        let ms = MomentSet::closed(1.5, 1.0, 36.0);
        assert_eq!(
            chisq_matched_limit(&ms, 3).unwrap(),
            LimitSpec::ShiftedScaledChiSq { a: 6.0f64 / 6f64.sqrt(), shift: 1.5 }
        );
        let pm = chisq_matched_limit(&MomentSet::closed(1.0, 0.0, 0.0), 3).unwrap();
        assert!(pm.is_point_mass());
    }

    #[test]
    fn linear_exact_weights() {
        let m = MeanShiftModel::first_coordinate(3, 1.0, CovSpec::Identity).unwrap();
        assert_eq!(
            linear_mmd_exact_limit(&m, 5).unwrap(),
            LimitSpec::WeightedChiSqSum { weights: vec![2.0; 3], n: 5, shift: 1.0 }
        );
        let d = 1000;
        let mut diag = vec![0.5; d];
        diag[0] = 0.5 * (d as f64 + 1.0);
        let m = MeanShiftModel::with_coordinate(d, 1, 10.0, CovSpec::Diagonal(diag)).unwrap();
        let LimitSpec::WeightedChiSqSum { weights, .. } = linear_mmd_exact_limit(&m, 50).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(weights.iter().filter(|w| **w == 1001.0).count(), 1);
        assert_eq!(weights.iter().filter(|w| **w == 1.0).count(), 999);
        let sp = MeanShiftModel::first_coordinate(4, 0.0, CovSpec::Spiked { sigma2: 0.5, rho: 0.5 })
            .unwrap();
        let LimitSpec::WeightedChiSqSum { mut weights, .. } = linear_mmd_exact_limit(&sp, 5).unwrap()
        else {
            unreachable!()
        };
        weights.sort_by(f64::total_cmp);
        assert_eq!(weights, vec![1.0, 1.0, 1.0, 5.0]);
    }

    #[test]
    fn cdf_examples() {
        let g = LimitSpec::Gaussian { mean: 0.0, var: 1.0 };
        assert_eq!(limit_cdf(&g, 0.0).unwrap(), 0.5);
        let gam = LimitSpec::Gamma { shape: 0.5, scale: 4.0 };
        assert!((limit_cdf(&gam, 2.0).unwrap() - 0.682_689_492_137_086).abs() < 1e-10);
        let c = LimitSpec::ShiftedScaledChiSq { a: 2.0, shift: 2.0 };
        assert_eq!(limit_cdf(&c, 0.0).unwrap(), 0.0);
        let neg = LimitSpec::ShiftedScaledChiSq { a: -2.0, shift: 2.0 };
        assert!((limit_cdf(&neg, 2.0).unwrap() + limit_cdf(&c, 2.0).unwrap() - 1.0).abs() < 1e-14);
        let w = LimitSpec::WeightedChiSqSum { weights: vec![1.0], n: 2, shift: 0.0 };
        assert_eq!(limit_cdf(&w, 0.0), Err(Error::UnsupportedAnalyticCdf));
        let e = LimitSpec::empirical(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(limit_cdf(&e, 2.0).unwrap(), 2.0 / 3.0);
        assert_eq!(limit_cdf_left(&e, 2.0).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn moment_formulas() {
        let w = LimitSpec::WeightedChiSqSum { weights: vec![3.0], n: 4, shift: 1.0 };
        let m = limit_moments(&w).unwrap();
        assert!((m.third_central - 8.0 * 27.0 / 12f64.powf(1.5)).abs() < 1e-12);
        let big = LimitSpec::WeightedChiSqSum { weights: vec![1.0; 10_000], n: 10, shift: 0.0 };
        assert!(limit_moments(&big).unwrap().excess_kurtosis.unwrap() < 0.01);
        let mut weights = vec![1.0; 999];
        weights.push(1001.0);
        let a4 = LimitSpec::WeightedChiSqSum { weights, n: 50, shift: 0.0 };
        let sk = limit_moments(&a4).unwrap().skewness();
        assert!((sk - 2.82).abs() < 0.01, "{sk}");
        let gm = limit_moments(&LimitSpec::Gamma { shape: 0.5, scale: 4.0 }).unwrap();
        assert_eq!((gm.mean, gm.variance), (2.0, 8.0));
    }

    #[test]
    fn ks_examples() {
        let g = LimitSpec::Gaussian { mean: 0.0, var: 1.0 };
        assert!((kolmogorov_distance(&[0.0], &g).unwrap() - 0.5).abs() < 1e-15);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let grid: Vec<f64> = (1..=100).map(|i| nd.inverse_cdf((i as f64 - 0.5) / 100.0)).collect();
        assert!((kolmogorov_distance(&grid, &g).unwrap() - 0.005).abs() < 1e-9);
        let two = [nd.inverse_cdf(0.25), nd.inverse_cdf(0.75)];
        assert!((kolmogorov_distance(&two, &g).unwrap() - 0.25).abs() < 1e-9);
        assert!(kolmogorov_distance(&[1.0, 0.0], &g).is_err());
        let pm = LimitSpec::Gaussian { mean: 1.0, var: 0.0 };
        assert_eq!(kolmogorov_distance(&[1.0, 1.0], &pm).unwrap(), 0.0);
    }

    #[test]
    fn two_sample_ks_hand_cases() {
        assert_eq!(two_sample_ks(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(two_sample_ks(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert!((two_sample_ks(&[0.0, 2.0], &[1.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn samplers_are_replayable_and_centered() {
        let w = LimitSpec::WeightedChiSqSum { weights: vec![2.0, 1.0], n: 2, shift: 0.0 };
        let a = limit_sample(&w, 20_000, s()).unwrap();
        let b = limit_sample(&w, 20_000, s()).unwrap();
        assert_eq!(a, b);
        let m = a.iter().sum::<f64>() / a.len() as f64;
        let sd = (a.iter().map(|v| (v - m).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        assert!(m.abs() < 4.0 * sd / (a.len() as f64).sqrt());
    }

    #[test]
    fn zero_quadratic_form_is_constant() {
        let sigma = DMatrix::identity(3, 3);
        let out = unk_simulator(&[0.0; 3], &sigma, &[0.0; 3], 10, 1.25, 100, s()).unwrap();
        assert!(out.iter().all(|v| *v == 1.25));
    }

    #[test]
    fn psd_checks() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(psd_sqrt(&bad), Err(Error::NotPsd { .. })));
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-12]);
        let r = psd_sqrt(&nearly).unwrap();
        assert!((&r * &r - &nearly).amax() < 1e-6);
    }

    #[test]
    fn json_shapes() {
        let g = LimitSpec::Gaussian { mean: 1.0, var: 2.0 };
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"{"gauss":{"mean":1.0,"var":2.0}}"#);
        let w: LimitSpec =
            serde_json::from_str(r#"{"wchisq":{"weights":[1,2],"n":5,"shift":0.5}}"#).unwrap();
        assert_eq!(w, LimitSpec::WeightedChiSqSum { weights: vec![1.0, 2.0], n: 5, shift: 0.5 });
        assert!(serde_json::from_str::<LimitSpec>(r#"{"gauss":{"mean":1,"var":2,"x":0}}"#).is_err());
        let c: LimitSpec = serde_json::from_str(r#"{"chisq1":{"a":2,"shift":1}}"#).unwrap();
        assert_eq!(c, LimitSpec::ShiftedScaledChiSq { a: 2.0, shift: 1.0 });
    }
}
