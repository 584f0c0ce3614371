//! RBF and linear kernels, the RBF derivatives used by the Stein operator,
//! and bandwidth rules.
//!
//! The RBF kernel is parameterized as `exp(-|x - x'|^2 / (2 gamma))`, so
//! `gamma` plays the role of a squared length scale.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Largest point count accepted by [`median_heuristic`].
pub const MEDIAN_MAX_POINTS: usize = 5000;

/// How the RBF bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    Fixed(f64),
    MedianHeuristic,
    /// `gamma = coef * d^exponent`.
    PowerOfD { coef: f64, exponent: f64 },
}

impl BandwidthRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BandwidthRule::Fixed(g) if !(g > 0.0 && g.is_finite()) => {
                Err(Error::invalid(format!("fixed bandwidth must be positive, got {g}")))
            }
            BandwidthRule::PowerOfD { coef, exponent }
                if !(coef > 0.0 && coef.is_finite() && exponent.is_finite()) =>
            {
                Err(Error::invalid("power-of-d bandwidth needs coef > 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_data_dependent(&self) -> bool {
        matches!(self, BandwidthRule::MedianHeuristic)
    }
}

/// Unresolved kernel choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Rbf { bandwidth: BandwidthRule },
    Linear,
}

/// A kernel with a concrete bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => rbf_eval(gamma, x, y),
            Kernel::Linear => dot(x, y),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Kernel::Rbf { gamma } => Some(gamma),
            Kernel::Linear => None,
        }
    }
}

/// Squared Euclidean distance by direct accumulation of differences.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for k in 0..4 {
            let t = x[k] - y[k];
            acc[k] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let t = x - y;
        tail += t * t;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn rbf_eval(gamma: f64, x: &[f64], y: &[f64]) -> f64 {
    (-sq_dist(x, y) / (2.0 * gamma)).exp()
}

/// Kernel value with both gradients and `Tr(grad_1 grad_2 k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfGrads {
    pub value: f64,
    pub grad_first: Vec<f64>,
    pub grad_second: Vec<f64>,
    pub trace_cross: f64,
}

pub fn rbf_grads(gamma: f64, x: &[f64], y: &[f64]) -> RbfGrads {
    let r2 = sq_dist(x, y);
    let k = (-r2 / (2.0 * gamma)).exp();
    let grad_first: Vec<f64> = x.iter().zip(y).map(|(a, b)| -k * (a - b) / gamma).collect();
    let grad_second = grad_first.iter().map(|g| -g).collect();
    let d = x.len() as f64;
    RbfGrads {
        value: k,
        grad_first,
        grad_second,
        trace_cross: k * (d / gamma - r2 / (gamma * gamma)),
    }
}

/// Result of the median heuristic. `degenerate` is set when every point
/// coincides and the median is zero; such a bandwidth is unusable for RBF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianBandwidth {
    pub gamma: f64,
    pub degenerate: bool,
}

/// Median of all unordered-pair squared distances among the rows of `points`.
pub fn median_heuristic(points: ArrayView2<f64>) -> Result<MedianBandwidth> {
    median_heuristic_pooled(&[points])
}

/// Median heuristic over the union of several point sets (e.g. `X` and `Y`
/// for MMD), without copying them.
pub fn median_heuristic_pooled(sets: &[ArrayView2<f64>]) -> Result<MedianBandwidth> {
    let rows: Vec<&[f64]> = sets
        .iter()
        .flat_map(|s| s.rows().into_iter())
        .map(|r| r.to_slice().expect("rows must be contiguous"))
        .collect();
    median_of_rows(&rows)
}

fn median_of_rows(rows: &[&[f64]]) -> Result<MedianBandwidth> {
    let m = rows.len();
    if m < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: m });
    }
    if m > MEDIAN_MAX_POINTS {
        return Err(Error::invalid(format!(
            "median heuristic supports at most {MEDIAN_MAX_POINTS} points, got {m}"
        )));
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            dists.push(sq_dist(rows[i], rows[j]));
        }
    }
    let gamma = median_in_place(&mut dists);
    Ok(MedianBandwidth {
        gamma,
        degenerate: gamma == 0.0,
    })
}

/// Median by selection; the even case averages the two central order statistics.
pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    let p = v.len();
    debug_assert!(p > 0);
    let cmp = |a: &f64, b: &f64| a.total_cmp(b);
    let (left, upper, _) = v.select_nth_unstable_by(p / 2, cmp);
    let upper = *upper;
    if p % 2 == 1 {
        upper
    } else {
        let lower = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Concrete bandwidth for `rule`. `pooled` is consulted only by the median
/// heuristic; pass the point sets the statistic will be computed on.
pub fn resolve_bandwidth(
    rule: BandwidthRule,
    d: usize,
    pooled: &[ArrayView2<f64>],
) -> Result<f64> {
    rule.validate()?;
    match rule {
        BandwidthRule::Fixed(g) => Ok(g),
        BandwidthRule::PowerOfD { coef, exponent } => Ok(coef * (d as f64).powf(exponent)),
        BandwidthRule::MedianHeuristic => {
            let med = median_heuristic_pooled(pooled)?;
            if med.degenerate {
                Err(Error::DegenerateBandwidth)
            } else {
                Ok(med.gamma)
            }
        }
    }
}

impl KernelSpec {
    pub fn resolve(&self, d: usize, pooled: &[ArrayView2<f64>]) -> Result<Kernel> {
        match *self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Rbf { bandwidth } => Ok(Kernel::Rbf {
                gamma: resolve_bandwidth(bandwidth, d, pooled)?,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn rbf_examples() {
        assert_eq!(rbf_eval(3.0, &[1.0, 2.0], &[1.0, 2.0]), 1.0);
        let v = rbf_eval(2.0, &[1.0, 1.0], &[0.0, 0.0]);
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((rbf_eval(1e8, &[1.0], &[0.0]) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn grads_examples() {
        let g = rbf_grads(4.0, &[0.5, -1.0, 2.0], &[0.5, -1.0, 2.0]);
        assert_eq!(g.value, 1.0);
        assert!(g.grad_first.iter().chain(&g.grad_second).all(|&v| v == 0.0));
        assert!((g.trace_cross - 0.75).abs() < 1e-15);

        let g = rbf_grads(1.0, &[1.0], &[0.0]);
        let e = (-0.5f64).exp();
        assert!((g.value - e).abs() < 1e-15);
        assert!((g.grad_first[0] + e).abs() < 1e-15);
        assert!((g.grad_second[0] - e).abs() < 1e-15);
        assert!(g.trace_cross.abs() < 1e-15);
    }

    #[test]
    fn sq_dist_handles_tails() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.3).collect();
        let b: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!((sq_dist(&a, &b) - naive).abs() < 1e-12);
        let naive_dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive_dot).abs() < 1e-12);
    }

    #[test]
    fn median_of_three_points() {
        let pts = array![[0.0], [1.0], [3.0]];
        let m = median_heuristic(pts.view()).unwrap();
        assert_eq!(m.gamma, 4.0);
        assert!(!m.degenerate);
    }

    #[test]
    fn median_even_count_averages() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(median_in_place(&mut v), 2.5);
    }

    #[test]
    fn identical_points_flag_degenerate() {
        let pts = array![[1.0, 2.0], [1.0, 2.0]];
        let m = median_heuristic(pts.view()).unwrap();
        assert_eq!(m.gamma, 0.0);
        assert!(m.degenerate);
        assert_eq!(
            resolve_bandwidth(BandwidthRule::MedianHeuristic, 2, &[pts.view()]),
            Err(Error::DegenerateBandwidth)
        );
    }

    #[test]
    fn median_needs_two_points_and_caps_size() {
        let one = array![[1.0]];
        assert!(matches!(
            median_heuristic(one.view()),
            Err(Error::InsufficientSample { .. })
        ));
        let big = Array2::<f64>::zeros((MEDIAN_MAX_POINTS + 1, 1));
        assert!(median_heuristic(big.view()).is_err());
    }

    #[test]
    fn resolve_rules() {
        let none: [ArrayView2<f64>; 0] = [];
        let p = BandwidthRule::PowerOfD {
            coef: 1.0,
            exponent: 1.0,
        };
        assert_eq!(resolve_bandwidth(p, 1000, &none).unwrap(), 1000.0);
        assert_eq!(
            resolve_bandwidth(BandwidthRule::Fixed(27.0), 5, &none).unwrap(),
            27.0
        );
        let pts = array![[0.0], [1.0], [3.0]];
        assert_eq!(
            resolve_bandwidth(BandwidthRule::MedianHeuristic, 1, &[pts.view()]).unwrap(),
            4.0
        );
        assert!(resolve_bandwidth(BandwidthRule::Fixed(0.0), 1, &none).is_err());
    }

    #[test]
    fn pooled_median_uses_union() {
        let x = array![[0.0]];
        let y = array![[1.0], [3.0]];
        let m = median_heuristic_pooled(&[x.view(), y.view()]).unwrap();
        assert_eq!(m.gamma, 4.0);
    }
}
