//! Gaussian mean-shift data model.
//!
//! `Q = N(mu, Sigma)` generates the data and `P = N(0, Sigma)` is both the
//! second MMD sample and the KSD target. Only three covariance families are
//! supported, each with O(d) sampling, inversion, and trace formulas, so no
//! d x d factorization is ever built.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Structured covariance. The dimension lives on [`MeanShiftModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum CovSpec {
    Identity,
    /// Strictly positive diagonal entries; length must equal the model dimension.
    Diagonal(Vec<f64>),
    /// `sigma2 * I + rho * 1 1^T`.
    Spiked { sigma2: f64, rho: f64 },
}

impl CovSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            CovSpec::Identity => Ok(()),
            CovSpec::Diagonal(v) => {
                if v.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: v.len(),
                    });
                }
                if v.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                    return Err(Error::invalid("diagonal covariance entries must be positive"));
                }
                Ok(())
            }
            CovSpec::Spiked { sigma2, rho } => {
                if !(*sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::invalid("spiked covariance needs sigma2 > 0"));
                }
                if !(*rho >= 0.0 && rho.is_finite()) {
                    return Err(Error::invalid("spiked covariance needs rho >= 0"));
                }
                Ok(())
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            CovSpec::Identity => true,
            CovSpec::Diagonal(v) => v.iter().all(|&e| e == 1.0),
            CovSpec::Spiked { sigma2, rho } => *sigma2 == 1.0 && *rho == 0.0,
        }
    }

    /// Eigenvalues as `(value, multiplicity)` pairs.
    pub fn eigenvalues(&self, d: usize) -> Vec<(f64, usize)> {
        match self {
            CovSpec::Identity => vec![(1.0, d)],
            CovSpec::Diagonal(v) => v.iter().map(|&e| (e, 1)).collect(),
            CovSpec::Spiked { sigma2, rho } => {
                let mut out = vec![(sigma2 + rho * d as f64, 1)];
                if d > 1 {
                    out.push((*sigma2, d - 1));
                }
                out
            }
        }
    }

    /// `v^T Sigma v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        match self {
            CovSpec::Identity => v.iter().map(|x| x * x).sum(),
            CovSpec::Diagonal(diag) => v.iter().zip(diag).map(|(x, e)| e * x * x).sum(),
            CovSpec::Spiked { sigma2, rho } => {
                let sq: f64 = v.iter().map(|x| x * x).sum();
                let s: f64 = v.iter().sum();
                sigma2 * sq + rho * s * s
            }
        }
    }

    /// `Tr(Sigma^2)`.
    pub fn trace_sq(&self, d: usize) -> f64 {
        self.eigenvalues(d)
            .iter()
            .map(|&(e, m)| m as f64 * e * e)
            .sum()
    }

    /// Variance of coordinate `j`.
    pub fn variance(&self, j: usize) -> f64 {
        match self {
            CovSpec::Identity => 1.0,
            CovSpec::Diagonal(v) => v[j],
            CovSpec::Spiked { sigma2, rho } => sigma2 + rho,
        }
    }

    /// `Sigma^{-1} x` (Sherman–Morrison for the spiked family).
    pub fn solve(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CovSpec::Identity => x.to_vec(),
            CovSpec::Diagonal(v) => x.iter().zip(v).map(|(a, e)| a / e).collect(),
            CovSpec::Spiked { sigma2, rho } => {
                let d = x.len() as f64;
                let s: f64 = x.iter().sum();
                let shift = rho * s / (sigma2 * (sigma2 + rho * d));
                x.iter().map(|a| a / sigma2 - shift).collect()
            }
        }
    }
}

/// `Q = N(mu, Sigma)` together with `P = N(0, Sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftModel {
    d: usize,
    mu: Vec<f64>,
    cov: CovSpec,
}

impl MeanShiftModel {
    pub fn new(mu: Vec<f64>, cov: CovSpec) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::invalid("model dimension must be at least 1"));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mean vector must be finite"));
        }
        cov.validate(d)?;
        Ok(MeanShiftModel { d, mu, cov })
    }

    /// Mean `(first, 0, ..., 0)`.
    pub fn first_coordinate(d: usize, first: f64, cov: CovSpec) -> Result<Self> {
        Self::with_coordinate(d, 0, first, cov)
    }

    /// Mean with a single non-zero coordinate at `index`.
    pub fn with_coordinate(d: usize, index: usize, value: f64, cov: CovSpec) -> Result<Self> {
        if index >= d.max(1) {
            return Err(Error::invalid(format!(
                "mean coordinate {index} out of range for d = {d}"
            )));
        }
        let mut mu = vec![0.0; d];
        mu[index] = value;
        Self::new(mu, cov)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn cov(&self) -> &CovSpec {
        &self.cov
    }

    pub fn mu_norm2(&self) -> f64 {
        self.mu.iter().map(|m| m * m).sum()
    }

    pub fn is_centered(&self) -> bool {
        self.mu.iter().all(|&m| m == 0.0)
    }

    /// The null model `P`: same covariance, zero mean.
    pub fn null(&self) -> MeanShiftModel {
        MeanShiftModel {
            d: self.d,
            mu: vec![0.0; self.d],
            cov: self.cov.clone(),
        }
    }

    /// Fill `out` with one draw, consuming `rng` sequentially.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.d);
        match &self.cov {
            CovSpec::Identity => {
                for (o, m) in out.iter_mut().zip(&self.mu) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + z;
                }
            }
            CovSpec::Diagonal(v) => {
                for ((o, m), e) in out.iter_mut().zip(&self.mu).zip(v) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + e.sqrt() * z;
                }
            }
            CovSpec::Spiked { sigma2, rho } => {
                let g: f64 = rng.sample(StandardNormal);
                let common = rho.sqrt() * g;
                let sd = sigma2.sqrt();
                for (o, m) in out.iter_mut().zip(&self.mu) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + sd * z + common;
                }
            }
        }
    }

    /// `n` i.i.d. rows drawn from `rng`.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let mut out = Array2::zeros((n, self.d));
        for mut row in out.rows_mut() {
            let slice = row.as_slice_mut().expect("standard layout");
            self.draw_into(rng, slice);
        }
        out
    }

    /// Score of the target density, `grad log p(x) = -Sigma^{-1} x`.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_centered() {
            return Err(Error::TargetNotCentered);
        }
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(self.cov.solve(x).into_iter().map(|v| -v).collect())
    }
}

/// `n` i.i.d. draws from `model` on the given stream.
pub fn sample(model: &MeanShiftModel, n: usize, stream: RngStream) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    Ok(model.sample_with(n, &mut stream.rng()))
}

/// `grad log p` for a centered target.
pub fn score(model: &MeanShiftModel, x: &[f64]) -> Result<Vec<f64>> {
    model.score(x)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective 64-bit avalanche mix.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Address of one independent random stream.
///
/// The triple is folded through [`mix64`] into a 256-bit ChaCha8 key:
///
/// ```text
/// h0 = mix64(base_seed)
/// h1 = mix64(h0 ^ mix64(seed_index + GOLDEN))
/// h2 = mix64(h1 ^ mix64(replicate_index + 2 * GOLDEN))
/// key word i (i = 1..=4) = mix64(h2 + i * GOLDEN)
/// ```
///
/// ChaCha8 is counter-based, so every key gives its own non-overlapping
/// sequence. Bit-exact replay is promised within one build only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub base_seed: u64,
    pub seed_index: u64,
    pub replicate_index: u64,
}

impl RngStream {
    pub fn new(base_seed: u64, seed_index: u64, replicate_index: u64) -> Self {
        RngStream {
            base_seed,
            seed_index,
            replicate_index,
        }
    }

    pub fn key(&self) -> [u8; 32] {
        let h0 = mix64(self.base_seed);
        let h1 = mix64(h0 ^ mix64(self.seed_index.wrapping_add(GOLDEN)));
        let h2 = mix64(h1 ^ mix64(self.replicate_index.wrapping_add(GOLDEN.wrapping_mul(2))));
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let w = mix64(h2.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1)));
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }

    /// Domain-separated family: same `(seed_index, replicate_index)` layout
    /// under a base seed re-mixed with `tag`.
    pub fn derive(&self, tag: u64) -> RngStream {
        RngStream {
            base_seed: mix64(self.base_seed ^ mix64(tag ^ 0xD1B5_4A32_D192_ED03)),
            ..*self
        }
    }

    pub fn with_replicate(&self, replicate_index: u64) -> RngStream {
        RngStream {
            replicate_index,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spiked(d: usize) -> MeanShiftModel {
        MeanShiftModel::new(vec![0.0; d], CovSpec::Spiked { sigma2: 0.5, rho: 0.5 }).unwrap()
    }

    #[test]
    fn identity_moments() {
        let m = MeanShiftModel::new(vec![0.0; 4], CovSpec::Identity).unwrap();
        let n = 100_000;
        let x = sample(&m, n, RngStream::new(1, 0, 0)).unwrap();
        for col in x.columns() {
            let mean = col.mean().unwrap();
            let var = col.var(1.0);
            assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn spiked_covariance_is_recovered() {
        let d = 8;
        let m = spiked(d);
        let n = 100_000;
        let x = sample(&m, n, RngStream::new(2, 0, 0)).unwrap();
        let means: Vec<f64> = x.columns().into_iter().map(|c| c.mean().unwrap()).collect();
        let cov = |j: usize, k: usize| {
            x.rows()
                .into_iter()
                .map(|r| (r[j] - means[j]) * (r[k] - means[k]))
                .sum::<f64>()
                / (n as f64 - 1.0)
        };
        for j in 0..d {
            assert!((cov(j, j) - 1.0).abs() < 0.05);
        }
        for (j, k) in [(0, 1), (2, 7), (3, 5)] {
            assert!((cov(j, k) - 0.5).abs() < 0.02, "cov {}", cov(j, k));
        }
    }

    #[test]
    fn diagonal_means() {
        let m = MeanShiftModel::new(vec![1.0, 2.0], CovSpec::Diagonal(vec![1.0, 4.0])).unwrap();
        let n = 100_000;
        let x = sample(&m, n, RngStream::new(3, 0, 0)).unwrap();
        let se = [1.0 / (n as f64).sqrt(), 2.0 / (n as f64).sqrt()];
        for (j, target) in [1.0, 2.0].into_iter().enumerate() {
            let mean = x.column(j).mean().unwrap();
            assert!((mean - target).abs() < 3.0 * se[j]);
        }
    }

    #[test]
    fn score_examples() {
        let id = MeanShiftModel::new(vec![0.0; 3], CovSpec::Identity).unwrap();
        assert_eq!(id.score(&[1.0, -2.0, 0.0]).unwrap(), vec![-1.0, 2.0, -0.0]);

        let diag = MeanShiftModel::new(vec![0.0; 2], CovSpec::Diagonal(vec![2.0, 4.0])).unwrap();
        assert_eq!(diag.score(&[2.0, 4.0]).unwrap(), vec![-1.0, -1.0]);

        let sp = MeanShiftModel::new(vec![0.0; 2], CovSpec::Spiked { sigma2: 1.0, rho: 1.0 })
            .unwrap();
        let s = sp.score(&[1.0, 1.0]).unwrap();
        for v in s {
            assert!((v + 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn score_rejects_uncentered_target() {
        let m = MeanShiftModel::first_coordinate(3, 2.0, CovSpec::Identity).unwrap();
        assert_eq!(m.score(&[0.0; 3]), Err(Error::TargetNotCentered));
    }

    #[test]
    fn spiked_solve_inverts_quadratic_form() {
        let cov = CovSpec::Spiked { sigma2: 0.7, rho: 1.3 };
        let x = [0.3, -1.2, 2.0, 0.1];
        let y = cov.solve(&x);
        // Sigma y should equal x
        let s: f64 = y.iter().sum();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((0.7 * yi + 1.3 * s - xi).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(MeanShiftModel::new(vec![], CovSpec::Identity).is_err());
        assert!(MeanShiftModel::new(vec![0.0; 2], CovSpec::Diagonal(vec![1.0])).is_err());
        assert!(MeanShiftModel::new(vec![0.0; 2], CovSpec::Diagonal(vec![1.0, 0.0])).is_err());
        assert!(
            MeanShiftModel::new(vec![0.0; 2], CovSpec::Spiked { sigma2: 0.0, rho: 1.0 }).is_err()
        );
        assert!(
            MeanShiftModel::new(vec![0.0; 2], CovSpec::Spiked { sigma2: 1.0, rho: -1.0 }).is_err()
        );
    }

    #[test]
    fn eigenvalues_closed_form() {
        let cov = CovSpec::Spiked { sigma2: 0.5, rho: 0.5 };
        assert_eq!(cov.eigenvalues(10), vec![(5.5, 1), (0.5, 9)]);
        assert!((cov.trace_sq(10) - (5.5 * 5.5 + 9.0 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn streams_replay_and_separate() {
        let m = spiked(5);
        let a = sample(&m, 20, RngStream::new(7, 1, 2)).unwrap();
        let b = sample(&m, 20, RngStream::new(7, 1, 2)).unwrap();
        let c = sample(&m, 20, RngStream::new(7, 1, 3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(RngStream::new(7, 1, 2).key(), RngStream::new(7, 2, 1).key());
        assert_ne!(RngStream::new(7, 1, 2).derive(1).key(), RngStream::new(7, 1, 2).key());
    }
}
