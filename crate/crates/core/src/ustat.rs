//! Summand functions for MMD and KSD and the degree-two U-statistic
//!
//! ```text
//! D_n = 1 / (n (n - 1)) * sum_{i != j} u(Z_i, Z_j)
//! ```
//!
//! Every summand is symmetric, so only pairs `i < j` are evaluated and the
//! diagonal is never touched. Pair sums are accumulated in fixed row blocks
//! with compensated summation and the blocks are combined in index order,
//! which keeps the result independent of the worker count.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{dot, rbf_eval, sq_dist, Kernel};
use crate::model::{sample, MeanShiftModel, RngStream};

const TAG_X: u64 = 0x5851;
const TAG_Y: u64 = 0x5952;

/// Rows per work block in the pairwise loops.
pub const ROW_BLOCK: usize = 16;

/// Which U-statistic summand to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum SummandSpec {
    /// Operates on paired points `z = (x, y)`.
    Mmd { kernel: Kernel },
    /// Langevin Stein kernel built on an RBF kernel with bandwidth `gamma`
    /// and a centered Gaussian target.
    Ksd { gamma: f64, target: MeanShiftModel },
}

impl SummandSpec {
    pub fn ksd(gamma: f64, target: MeanShiftModel) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("KSD bandwidth must be positive"));
        }
        if !target.is_centered() {
            return Err(Error::TargetNotCentered);
        }
        Ok(SummandSpec::Ksd { gamma, target })
    }

    pub fn needs_second_sample(&self) -> bool {
        matches!(self, SummandSpec::Mmd { .. })
    }

    /// Bind the summand to a sample, returning an evaluator of `u_ij`.
    pub fn bind<'a>(&'a self, data: &'a PairedSample) -> Result<BoundSummand<'a>> {
        match self {
            SummandSpec::Mmd { kernel } => {
                let y = data.y.as_ref().ok_or_else(|| {
                    Error::invalid("MMD needs a second sample Y drawn from P")
                })?;
                match *kernel {
                    Kernel::Linear => {
                        let diff = &data.x - y;
                        Ok(BoundSummand::LinearMmd { diff })
                    }
                    Kernel::Rbf { gamma } => Ok(BoundSummand::RbfMmd {
                        gamma,
                        x: &data.x,
                        y,
                    }),
                }
            }
            SummandSpec::Ksd { gamma, target } => {
                if data.y.is_some() {
                    return Err(Error::invalid("KSD takes a single sample"));
                }
                if data.d() != target.d() {
                    return Err(Error::DimensionMismatch {
                        expected: target.d(),
                        got: data.d(),
                    });
                }
                if !target.is_centered() {
                    return Err(Error::TargetNotCentered);
                }
                if target.cov().is_identity() {
                    Ok(BoundSummand::KsdIdentity {
                        gamma: *gamma,
                        x: &data.x,
                    })
                } else {
                    let n = data.n();
                    let mut scores = Array2::zeros((n, data.d()));
                    let mut self_dots = Vec::with_capacity(n);
                    for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
                        let s = target.score(data.x_row(i))?;
                        self_dots.push(dot(&s, data.x_row(i)));
                        row.assign(&ArrayView1::from(&s[..]));
                    }
                    Ok(BoundSummand::KsdGeneral {
                        gamma: *gamma,
                        x: &data.x,
                        scores,
                        self_dots,
                    })
                }
            }
        }
    }
}

/// `X` drawn from `Q` and, for MMD, `Y` drawn from `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    x: Array2<f64>,
    y: Option<Array2<f64>>,
}

impl PairedSample {
    pub fn new(x: Array2<f64>, y: Option<Array2<f64>>) -> Result<Self> {
        if let Some(y) = &y {
            if y.dim() != x.dim() {
                return Err(Error::invalid(format!(
                    "paired samples must share shape, got {:?} and {:?}",
                    x.dim(),
                    y.dim()
                )));
            }
        }
        let x = x.as_standard_layout().into_owned();
        let y = y.map(|y| y.as_standard_layout().into_owned());
        Ok(PairedSample { x, y })
    }

    pub fn single(x: Array2<f64>) -> Self {
        PairedSample {
            x: x.as_standard_layout().into_owned(),
            y: None,
        }
    }

    /// Draw `X ~ Q` and, when the summand needs it, `Y ~ P` on two
    /// domain-separated sub-streams of `stream`.
    pub fn draw(spec: &SummandSpec, model: &MeanShiftModel, n: usize, stream: RngStream) -> Result<Self> {
        Self::draw_from(model, n, stream, spec.needs_second_sample())
    }

    /// Like [`PairedSample::draw`] with the presence of `Y` chosen directly.
    pub fn draw_from(model: &MeanShiftModel, n: usize, stream: RngStream, with_y: bool) -> Result<Self> {
        let x = sample(model, n, stream.derive(TAG_X))?;
        let y = if with_y {
            Some(sample(&model.null(), n, stream.derive(TAG_Y))?)
        } else {
            None
        };
        Ok(PairedSample { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> Option<&Array2<f64>> {
        self.y.as_ref()
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        row(&self.x, i)
    }

    #[inline]
    pub fn y_row(&self, i: usize) -> Option<&[f64]> {
        self.y.as_ref().map(|y| row(y, i))
    }

    /// Apply the same row permutation to `X` and `Y`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let take = |m: &Array2<f64>| m.select(ndarray::Axis(0), perm);
        PairedSample {
            x: take(&self.x),
            y: self.y.as_ref().map(take),
        }
    }
}

#[inline]
fn row(m: &Array2<f64>, i: usize) -> &[f64] {
    let d = m.ncols();
    &m.as_slice().expect("standard layout")[i * d..(i + 1) * d]
}

/// A symmetric function of two sample indices.
pub trait PairFunction: Sync {
    fn len(&self) -> usize;
    fn eval(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Closure-backed [`PairFunction`], used for stub summands.
pub struct FnPairs<F> {
    n: usize,
    f: F,
}

impl<F: Fn(usize, usize) -> f64 + Sync> FnPairs<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnPairs { n, f }
    }
}

impl<F: Fn(usize, usize) -> f64 + Sync> PairFunction for FnPairs<F> {
    fn len(&self) -> usize {
        self.n
    }
    fn eval(&self, i: usize, j: usize) -> f64 {
        (self.f)(i, j)
    }
}

/// A summand bound to data with per-point precomputation done.
pub enum BoundSummand<'a> {
    LinearMmd {
        diff: Array2<f64>,
    },
    RbfMmd {
        gamma: f64,
        x: &'a Array2<f64>,
        y: &'a Array2<f64>,
    },
    KsdIdentity {
        gamma: f64,
        x: &'a Array2<f64>,
    },
    KsdGeneral {
        gamma: f64,
        x: &'a Array2<f64>,
        scores: Array2<f64>,
        self_dots: Vec<f64>,
    },
}

impl PairFunction for BoundSummand<'_> {
    fn len(&self) -> usize {
        match self {
            BoundSummand::LinearMmd { diff } => diff.nrows(),
            BoundSummand::RbfMmd { x, .. }
            | BoundSummand::KsdIdentity { x, .. }
            | BoundSummand::KsdGeneral { x, .. } => x.nrows(),
        }
    }

    #[inline]
    fn eval(&self, i: usize, j: usize) -> f64 {
        match self {
            BoundSummand::LinearMmd { diff } => dot(row(diff, i), row(diff, j)),
            BoundSummand::RbfMmd { gamma, x, y } => {
                let (xi, xj, yi, yj) = (row(x, i), row(x, j), row(y, i), row(y, j));
                rbf_eval(*gamma, xi, xj) + rbf_eval(*gamma, yi, yj)
                    - rbf_eval(*gamma, xi, yj)
                    - rbf_eval(*gamma, xj, yi)
            }
            BoundSummand::KsdIdentity { gamma, x } => {
                ksd_summand_identity(*gamma, row(x, i), row(x, j))
            }
            BoundSummand::KsdGeneral {
                gamma,
                x,
                scores,
                self_dots,
            } => {
                let (xi, xj) = (row(x, i), row(x, j));
                let (si, sj) = (row(scores, i), row(scores, j));
                let r2 = sq_dist(xi, xj);
                let k = (-r2 / (2.0 * gamma)).exp();
                let si_diff = self_dots[i] - dot(si, xj);
                let sj_diff = dot(sj, xi) - self_dots[j];
                let d = xi.len() as f64;
                k * (dot(si, sj) + (si_diff - sj_diff) / gamma + d / gamma - r2 / (gamma * gamma))
            }
        }
    }
}

/// MMD summand `k(x,x') + k(y,y') - k(x,y') - k(x',y)`.
pub fn mmd_summand(kernel: &Kernel, x: &[f64], y: &[f64], xp: &[f64], yp: &[f64]) -> f64 {
    kernel.eval(x, xp) + kernel.eval(y, yp) - kernel.eval(x, yp) - kernel.eval(xp, y)
}

/// KSD summand by the general four-term Stein composition
/// `s(x)^T s(x') k + s(x)^T grad_2 k + s(x')^T grad_1 k + Tr(grad_1 grad_2 k)`.
pub fn ksd_summand(gamma: f64, target: &MeanShiftModel, x: &[f64], xp: &[f64]) -> Result<f64> {
    let s = target.score(x)?;
    let sp = target.score(xp)?;
    let g = crate::kernels::rbf_grads(gamma, x, xp);
    Ok(dot(&s, &sp) * g.value + dot(&s, &g.grad_second) + dot(&sp, &g.grad_first) + g.trace_cross)
}

/// Closed form of the KSD summand for an `N(0, I)` target:
/// `exp(-r^2/(2 gamma)) (x^T x' - (gamma + 1)/gamma^2 r^2 + d/gamma)`.
#[inline]
pub fn ksd_summand_identity(gamma: f64, x: &[f64], xp: &[f64]) -> f64 {
    let r2 = sq_dist(x, xp);
    let d = x.len() as f64;
    (-r2 / (2.0 * gamma)).exp() * (dot(x, xp) - (gamma + 1.0) / (gamma * gamma) * r2 + d / gamma)
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Row-block ranges `[start, end)` covering `0..n`.
pub(crate) fn row_blocks(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .step_by(ROW_BLOCK)
        .map(|s| (s, (s + ROW_BLOCK).min(n)))
        .collect()
}

/// Sum of `u_ij` over `i < j`.
pub fn upper_pair_sum<P: PairFunction + ?Sized>(pf: &P) -> f64 {
    let n = pf.len();
    let partials: Vec<f64> = row_blocks(n)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = CompensatedSum::default();
            for i in lo..hi {
                for j in (i + 1)..n {
                    acc.add(pf.eval(i, j));
                }
            }
            acc.value()
        })
        .collect();
    let mut total = CompensatedSum::default();
    for p in partials {
        total.add(p);
    }
    total.value()
}

/// U-statistic of an arbitrary symmetric pair function.
pub fn u_statistic_of<P: PairFunction + ?Sized>(pf: &P) -> Result<f64> {
    let n = pf.len();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(upper_pair_sum(pf) / pairs)
}

/// `D_n` for `spec` on `data`.
pub fn u_statistic(spec: &SummandSpec, data: &PairedSample) -> Result<f64> {
    if data.n() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            got: data.n(),
        });
    }
    u_statistic_of(&spec.bind(data)?)
}

/// Symmetric matrix of `u_ij` with a NaN diagonal.
pub fn summand_matrix(spec: &SummandSpec, data: &PairedSample) -> Result<Array2<f64>> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let bound = spec.bind(data)?;
    let mut m = Array2::from_elem((n, n), f64::NAN);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = bound.eval(i, j);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CovSpec;
    use ndarray::array;

    #[test]
    fn constant_stub_returns_constant() {
        for n in [2, 3, 10] {
            let pf = FnPairs::new(n, |_, _| 2.5);
            assert!((u_statistic_of(&pf).unwrap() - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn product_stub_on_scalars() {
        let v = [1.0, 2.0, 3.0];
        let pf = FnPairs::new(3, |i, j| v[i] * v[j]);
        assert!((u_statistic_of(&pf).unwrap() - 11.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn too_small_sample() {
        let pf = FnPairs::new(1, |_, _| 1.0);
        assert_eq!(
            u_statistic_of(&pf),
            Err(Error::InsufficientSample { needed: 2, got: 1 })
        );
    }

    #[test]
    fn linear_mmd_identical_columns_is_zero() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let data = PairedSample::new(x.clone(), Some(x)).unwrap();
        let spec = SummandSpec::Mmd {
            kernel: Kernel::Linear,
        };
        assert_eq!(u_statistic(&spec, &data).unwrap(), 0.0);
    }

    #[test]
    fn mmd_summand_examples() {
        let lin = Kernel::Linear;
        assert_eq!(mmd_summand(&lin, &[1.0, 2.0], &[1.0, 2.0], &[3.0, 1.0], &[3.0, 1.0]), 0.0);
        assert_eq!(
            mmd_summand(&lin, &[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]),
            0.0
        );
        let rbf = Kernel::Rbf { gamma: 2.0 };
        let v = mmd_summand(&rbf, &[1.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]);
        assert!((v - (2.0 - 2.0 * (-0.25f64).exp())).abs() < 1e-15);
        assert!((v - 0.442398).abs() < 1e-6);
    }

    #[test]
    fn ksd_summand_examples() {
        for d in [1, 4] {
            let v = ksd_summand_identity(3.0, &vec![0.0; d], &vec![0.0; d]);
            assert!((v - d as f64 / 3.0).abs() < 1e-15);
        }
        let v = ksd_summand_identity(1.0, &[1.0], &[-1.0]);
        assert!((v + 8.0 * (-2.0f64).exp()).abs() < 1e-14);
        assert!((v + 1.082682).abs() < 1e-6);
    }

    #[test]
    fn ksd_rejects_uncentered_target() {
        let target = MeanShiftModel::first_coordinate(2, 1.0, CovSpec::Identity).unwrap();
        assert_eq!(
            ksd_summand(1.0, &target, &[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::TargetNotCentered)
        );
        assert!(SummandSpec::ksd(1.0, target).is_err());
    }

    #[test]
    fn summand_matrix_pair_of_two() {
        let spec = SummandSpec::ksd(
            2.0,
            MeanShiftModel::new(vec![0.0], CovSpec::Identity).unwrap(),
        )
        .unwrap();
        let data = PairedSample::single(array![[0.3], [-0.7]]);
        let m = summand_matrix(&spec, &data).unwrap();
        assert!(m[[0, 0]].is_nan() && m[[1, 1]].is_nan());
        assert_eq!(m[[0, 1]], m[[1, 0]]);
        assert_eq!(m[[0, 1]], u_statistic(&spec, &data).unwrap());
    }

    #[test]
    fn ksd_matrix_matches_hand_enumeration() {
        let target = MeanShiftModel::new(vec![0.0], CovSpec::Identity).unwrap();
        let spec = SummandSpec::ksd(1.5, target).unwrap();
        let pts = [0.2, -1.1, 2.4];
        let data = PairedSample::single(array![[pts[0]], [pts[1]], [pts[2]]]);
        let m = summand_matrix(&spec, &data).unwrap();
        let hand = |a: f64, b: f64| {
            let g = 1.5;
            (-(a - b) * (a - b) / (2.0 * g)).exp()
                * (a * b - (g + 1.0) / (g * g) * (a - b) * (a - b) + 1.0 / g)
        };
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((m[[i, j]] - hand(pts[i], pts[j])).abs() < 1e-14);
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }
}
