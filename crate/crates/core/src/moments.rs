//! Moment sets of a U-statistic summand: the mean `D`, the conditional and
//! full standard deviations `sigma_cond` and `sigma_full`, and the third
//! absolute central moments `M_cond;3`, `M_full;3`.
//!
//! Closed forms exist for KSD and MMD with an RBF kernel (identity
//! covariance) and for MMD with a linear kernel (any supported covariance).
//! Every other case goes through [`empirical_moments`], which evaluates all
//! pairs of one large Monte-Carlo sample without materializing the summand
//! matrix.

use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::kernels::{dot, sq_dist, Kernel};
use crate::model::{MeanShiftModel, RngStream};
use crate::ustat::{CompensatedSum, PairFunction, PairedSample, SummandSpec};

/// Where a [`MomentSet`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    ClosedForm,
    Empirical { n_mc: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub mean: f64,
    pub sigma_cond: f64,
    pub sigma_full: f64,
    pub m_cond_3: Option<f64>,
    pub m_full_3: Option<f64>,
    pub source: MomentSource,
}

impl MomentSet {
    pub fn closed(mean: f64, sigma2_cond: f64, sigma2_full: f64) -> Self {
        MomentSet {
            mean,
            sigma_cond: sigma2_cond.max(0.0).sqrt(),
            sigma_full: sigma2_full.max(0.0).sqrt(),
            m_cond_3: None,
            m_full_3: None,
            source: MomentSource::ClosedForm,
        }
    }

    pub fn sigma2_cond(&self) -> f64 {
        self.sigma_cond * self.sigma_cond
    }

    pub fn sigma2_full(&self) -> f64 {
        self.sigma_full * self.sigma_full
    }

    /// `sigma_full / sigma_cond`, infinite for a degenerate summand.
    pub fn rho_d(&self) -> f64 {
        if self.sigma_cond == 0.0 {
            f64::INFINITY
        } else {
            self.sigma_full / self.sigma_cond
        }
    }

    /// JSON record; `sigma_max` needs the sample size `n`.
    pub fn to_json(&self, n: usize) -> Value {
        let rho = self.rho_d();
        let sm = rho_and_sigma_max(self, n).sigma_max;
        json!({
            "D": self.mean,
            "sigma_cond": self.sigma_cond,
            "sigma_full": self.sigma_full,
            "m_cond_3": self.m_cond_3,
            "m_full_3": self.m_full_3,
            "rho_d": if rho.is_finite() { json!(rho) } else { json!("inf") },
            "sigma_max": sm,
            "source": match self.source {
                MomentSource::ClosedForm => "closed",
                MomentSource::Empirical { .. } => "mc",
            },
        })
    }
}

// (1 + delta)^e evaluated through log1p so large `e` stays accurate.
#[inline]
fn pow1p(delta: f64, e: f64) -> f64 {
    (e * delta.ln_1p()).exp()
}

// (1 + delta)^e - 1.
#[inline]
fn pow1p_m1(delta: f64, e: f64) -> f64 {
    (e * delta.ln_1p()).exp_m1()
}

fn check_rbf_args(d: usize, gamma: f64, mu_norm2: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {gamma}")));
    }
    if !(mu_norm2 >= 0.0 && mu_norm2.is_finite()) {
        return Err(Error::invalid(format!("|mu|^2 must be non-negative, got {mu_norm2}")));
    }
    Ok(())
}

/// Closed-form moments of the KSD-RBF summand for `X ~ N(mu, I_d)` against
/// the target `N(0, I_d)`.
///
/// ```text
/// D           = (g/(g+2))^{d/2} m
/// sigma2_cond = (g^2/((1+g)(3+g)))^{d/2}
///               [ (2+g)^2/((1+g)(3+g)) m + (1 - ((1+g)(3+g)/(2+g)^2)^{d/2}) m^2 ]
/// sigma2_full = (g/(4+g))^{d/2} T - (g/(2+g))^d m^2
/// T           = c2 d^2 + c1 d + c_dm d m + 2 m + m^2
/// ```
///
/// with `m = |mu|^2`, `g = gamma` and the coefficients of [`ksd_t_coefficients`].
/// `sigma2_full` is evaluated relative to `(g/(4+g))^{d/2}` with the
/// difference `T - (g/(4+g))^{-d/2} (g/(2+g))^d m^2` kept in `expm1` form, so
/// no two large terms cancel.
pub fn closed_form_ksd_moments(d: usize, gamma: f64, mu_norm2: f64) -> Result<MomentSet> {
    check_rbf_args(d, gamma, mu_norm2)?;
    let (g, m, df) = (gamma, mu_norm2, d as f64);
    let h = 0.5 * df;
    let mean = pow1p(-2.0 / (g + 2.0), h) * m;

    let prod13 = (1.0 + g) * (3.0 + g);
    let sq2 = (2.0 + g) * (2.0 + g);
    let pre_cond = pow1p(-(4.0 * g + 3.0) / prod13, h);
    let tail = -pow1p_m1(-1.0 / sq2, h);
    let sigma2_cond = pre_cond * (sq2 / prod13 * m + tail * m * m);

    let (c2, c1, cdm) = ksd_t_coefficients(g);
    let t = c2 * df * df + c1 * df + cdm * df * m + 2.0 * m + m * m;
    // Scale by q4 = (g/(4+g))^{d/2}, the largest factor; l4 = ln(q4 / p2)
    // with p2 = (g/(2+g))^d. Neither factor is formed on its own, so small
    // gamma at large d neither underflows p2 nor overflows q4 / p2.
    let l4 = h * (4.0 / (g * (4.0 + g))).ln_1p();
    let ln_q4 = h * (-4.0 / (4.0 + g)).ln_1p();
    let sigma2_full = ln_q4.exp() * ((t - m * m) * (-l4).exp() - (-l4).exp_m1() * t);

    Ok(MomentSet::closed(mean, sigma2_cond, sigma2_full))
}

/// `(c2, c1, c_dm)` in the KSD second moment polynomial `T`.
pub fn ksd_t_coefficients(gamma: f64) -> (f64, f64, f64) {
    let g = gamma;
    let (g2, g4) = (2.0 + g, 4.0 + g);
    let c2 = g2 * g2 / (g * g * g4 * g4);
    let c1 = 2.0 * (1.0 + g).powi(2) / (g * g * g2 * g2)
        + (2.0 + 4.0 * g + g * g).powi(2) / (g * g2 * g2 * g4)
        + 2.0 * (g + 3.0).powi(2) / (g2 * g2 * g4 * g4);
    let cdm = 2.0 * g2 / (g * g4);
    (c2, c1, cdm)
}

/// Closed-form moments of the MMD-RBF summand for `X ~ N(mu, I_d)`,
/// `Y ~ N(0, I_d)`.
///
/// ```text
/// D           = 2 (g/(2+g))^{d/2} (1 - exp(-m/(2(2+g))))
/// sigma2_cond = 2 B [1 + e^{-m/(3+g)} + 2 A e^{-m/(2(2+g))}
///                    - 2 e^{-c m} - A - A e^{-m/(2+g)}]
/// sigma2_full = 2 (g/(4+g))^{d/2} (1 + e^{-m/(4+g)}) - 2 (g/(2+g))^d
///               - 8 B e^{-c m} - 2 (g/(2+g))^d e^{-m/(2+g)}
///               + 8 (g/(2+g))^d e^{-m/(2(2+g))}
/// ```
///
/// where `A = ((1+g)(3+g)/(2+g)^2)^{d/2}`, `B = (g^2/((1+g)(3+g)))^{d/2}`
/// and `c = (2+g)/(2(1+g)(3+g))`. Brackets are rewritten in `expm1` terms
/// so they vanish exactly at `m = 0`.
pub fn closed_form_mmd_rbf_moments(d: usize, gamma: f64, mu_norm2: f64) -> Result<MomentSet> {
    check_rbf_args(d, gamma, mu_norm2)?;
    let (g, m, df) = (gamma, mu_norm2, d as f64);
    let h = 0.5 * df;
    let prod13 = (1.0 + g) * (3.0 + g);
    let sq2 = (2.0 + g) * (2.0 + g);
    let c = (2.0 + g) / (2.0 * prod13);

    let e_half = (-m / (2.0 * (2.0 + g))).exp_m1();
    let e_2 = (-m / (2.0 + g)).exp_m1();
    let e_3 = (-m / (3.0 + g)).exp_m1();
    let e_4 = (-m / (4.0 + g)).exp_m1();
    let e_c = (-c * m).exp_m1();

    let mean = -2.0 * pow1p(-2.0 / (2.0 + g), h) * e_half;

    let a = pow1p(-1.0 / sq2, h);
    let b = pow1p(-(4.0 * g + 3.0) / prod13, h);
    let sigma2_cond = 2.0 * b * (e_3 + 2.0 * a * e_half - 2.0 * e_c - a * e_2);

    // With p2 = (g/(2+g))^d, q4 = (g/(4+g))^{d/2} / p2 and qb = B / p2:
    //   sigma2_full = p2 [2 (q4 - 1)(2 + e_4) - 8 (qb - 1)(1 + e_c)
    //                     + 2 e_4 - 8 e_c - 2 e_2 + 8 e_half]
    // evaluated as (p2 q4) times the bracket over q4, so no factor underflows
    // or overflows before the result does.
    let l4 = h * (4.0 / (g * (4.0 + g))).ln_1p();
    let lb = h * (1.0 / prod13).ln_1p();
    let ln_scale = h * (-4.0 / (4.0 + g)).ln_1p();
    let inv_q4 = (-l4).exp();
    let small = 2.0 * e_4 - 8.0 * e_c - 2.0 * e_2 + 8.0 * e_half;
    // (qb - 1) / q4, without forming qb when it would overflow
    let qb_m1_over_q4 = if lb > 1.0 { (lb - l4).exp() - inv_q4 } else { lb.exp_m1() * inv_q4 };
    let bracket = -2.0 * (-l4).exp_m1() * (2.0 + e_4) - 8.0 * qb_m1_over_q4 * (1.0 + e_c) + small * inv_q4;
    let sigma2_full = ln_scale.exp() * bracket;

    Ok(MomentSet::closed(mean, sigma2_cond, sigma2_full))
}

/// Closed-form moments of the linear-kernel MMD summand
/// `(x - y)^T (x' - y')`: `D = |mu|^2`, `sigma2_cond = 2 mu^T S mu`,
/// `sigma2_full = 4 Tr(S^2) + 4 mu^T S mu`.
pub fn closed_form_linear_mmd_moments(model: &MeanShiftModel) -> MomentSet {
    let q = model.cov().quad_form(model.mu());
    let tr = model.cov().trace_sq(model.d());
    MomentSet::closed(model.mu_norm2(), 2.0 * q, 4.0 * tr + 4.0 * q)
}

/// Dispatch to the closed form matching `spec`.
pub fn closed_form_moments(spec: &SummandSpec, model: &MeanShiftModel) -> Result<MomentSet> {
    match spec {
        SummandSpec::Mmd {
            kernel: Kernel::Linear,
        } => Ok(closed_form_linear_mmd_moments(model)),
        SummandSpec::Mmd {
            kernel: Kernel::Rbf { gamma },
        } => {
            require_identity(spec, model)?;
            closed_form_mmd_rbf_moments(model.d(), *gamma, model.mu_norm2())
        }
        SummandSpec::Ksd { gamma, .. } => {
            require_identity(spec, model)?;
            closed_form_ksd_moments(model.d(), *gamma, model.mu_norm2())
        }
    }
}

fn require_identity(spec: &SummandSpec, model: &MeanShiftModel) -> Result<()> {
    if !model.cov().is_identity() {
        return Err(Error::NonIdentityCovariance);
    }
    if let SummandSpec::Ksd { target, .. } = spec {
        if !target.cov().is_identity() {
            return Err(Error::NonIdentityCovariance);
        }
        if target.d() != model.d() {
            return Err(Error::DimensionMismatch {
                expected: target.d(),
                got: model.d(),
            });
        }
    }
    Ok(())
}

/// Conditional mean `g(z) = E[u(z, Z')]` with `Z'` drawn from the model.
///
/// `y` must be given for MMD and omitted for KSD. The RBF cases need an
/// identity covariance.
pub fn conditional_mean_fn(
    spec: &SummandSpec,
    model: &MeanShiftModel,
    x: &[f64],
    y: Option<&[f64]>,
) -> Result<f64> {
    let d = model.d();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    let mu = model.mu();
    match spec {
        SummandSpec::Mmd { kernel } => {
            let y = y.ok_or_else(|| Error::invalid("MMD conditional mean needs y"))?;
            if y.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: y.len() });
            }
            match *kernel {
                Kernel::Linear => Ok(dot(mu, x) - dot(mu, y)),
                Kernel::Rbf { gamma } => {
                    require_identity(spec, model)?;
                    let s = 2.0 * (1.0 + gamma);
                    let zero = vec![0.0; d];
                    let pre = pow1p(-1.0 / (1.0 + gamma), 0.5 * d as f64);
                    let e = |a: &[f64], b: &[f64]| (-sq_dist(a, b) / s).exp();
                    Ok(pre * (e(x, mu) + e(y, &zero) - e(x, &zero) - e(y, mu)))
                }
            }
        }
        SummandSpec::Ksd { gamma, .. } => {
            if y.is_some() {
                return Err(Error::invalid("KSD conditional mean takes x only"));
            }
            require_identity(spec, model)?;
            let g = *gamma;
            let pre = pow1p(-1.0 / (1.0 + g), 0.5 * d as f64);
            let e = (-sq_dist(x, mu) / (2.0 * (g + 1.0))).exp();
            let m = model.mu_norm2();
            Ok(pre * e * ((2.0 + g) / (1.0 + g) * dot(mu, x) - m / (1.0 + g)))
        }
    }
}

/// `rho_d`, `sigma_max = max(sigma_full, sqrt(n-1) sigma_cond)` and, when the
/// third moments are known, `M_max;3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoSigma {
    pub rho_d: f64,
    pub sigma_max: f64,
    pub m_max_3: Option<f64>,
}

pub fn rho_and_sigma_max(ms: &MomentSet, n: usize) -> RhoSigma {
    let r = (n.saturating_sub(1) as f64).sqrt();
    let m_max_3 = match (ms.m_full_3, ms.m_cond_3) {
        (Some(f), Some(c)) => Some(f.max(r * c)),
        _ => None,
    };
    RhoSigma {
        rho_d: ms.rho_d(),
        sigma_max: ms.sigma_full.max(r * ms.sigma_cond),
        m_max_3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioCheck {
    pub ratio_cond: f64,
    pub ratio_full: f64,
    pub bound_ok: bool,
}

/// Ratios `M_cond;3 / sigma_cond` and `M_full;3 / sigma_full` against `c`.
pub fn assumption1_check(ms: &MomentSet, c: f64) -> Result<RatioCheck> {
    let mc = ms.m_cond_3.ok_or(Error::MomentUnavailable("m_cond_3"))?;
    let mf = ms.m_full_3.ok_or(Error::MomentUnavailable("m_full_3"))?;
    if ms.sigma_cond == 0.0 {
        return Err(Error::DegenerateDenominator("sigma_cond"));
    }
    if ms.sigma_full == 0.0 {
        return Err(Error::DegenerateDenominator("sigma_full"));
    }
    let ratio_cond = mc / ms.sigma_cond;
    let ratio_full = mf / ms.sigma_full;
    Ok(RatioCheck {
        ratio_cond,
        ratio_full,
        bound_ok: ratio_cond <= c && ratio_full <= c,
    })
}

/// Berry-Esseen distance bound between `D_n` and its Gaussian limit:
///
/// ```text
/// 6.1 M_cond;nu^nu / (n^{(nu-2)/2} sigma_cond^nu) + (1 + sqrt 2) rho_d / (2 sqrt(n-1))
/// ```
///
/// Only `nu = 3` is supported. When `M_cond;3` is absent (closed-form sets)
/// it is replaced by `sigma_cond`, its Lyapunov lower bound, so the returned
/// value is then a lower bound on the true right-hand side.
pub fn berry_esseen_bound(ms: &MomentSet, n: usize, nu: u32) -> Result<f64> {
    if nu != 3 {
        return Err(Error::invalid(format!("only nu = 3 is supported, got {nu}")));
    }
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    if ms.sigma_cond == 0.0 {
        return Err(Error::DegenerateDenominator("sigma_cond"));
    }
    let m = ms.m_cond_3.unwrap_or(ms.sigma_cond);
    let nf = n as f64;
    let first = 6.1 * (m / ms.sigma_cond).powi(3) / nf.sqrt();
    let second = (1.0 + std::f64::consts::SQRT_2) * ms.rho_d() / (2.0 * (nf - 1.0).sqrt());
    Ok(first + second)
}

/// `4 sigma2_cond / n + 2 sigma2_full / (n (n - 1))`, the scale of `D_n - D`.
pub fn variance_proxy(ms: &MomentSet, n: usize) -> f64 {
    let nf = n as f64;
    4.0 * ms.sigma2_cond() / nf + 2.0 * ms.sigma2_full() / (nf * (nf - 1.0))
}

/// Settings of the all-pairs moment estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOptions {
    /// Number of contiguous point groups; pair work and the bootstrap operate
    /// on groups.
    pub groups: usize,
    /// Group-bootstrap resamples; 0 disables standard errors.
    pub bootstrap: usize,
    /// Compute `M_cond;3` and `M_full;3` (stores every `u_ij` as `f32`).
    pub third_moments: bool,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            groups: 50,
            bootstrap: 0,
            third_moments: true,
        }
    }
}

/// Bootstrap standard errors of `(D, sigma2_cond, sigma2_full)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentErrors {
    pub mean: f64,
    pub sigma2_cond: f64,
    pub sigma2_full: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalReport {
    pub moments: MomentSet,
    /// `Var(g_hat)` before the bias correction.
    pub sigma2_cond_uncorrected: f64,
    pub errors: Option<MomentErrors>,
}

struct UnitResult {
    s1: f64,
    s2: f64,
    // Row sums for points of group g over group h, then (if g != h) column
    // sums for points of h over g.
    rows: Vec<f64>,
    cols: Vec<f64>,
    values: Vec<f32>,
}

/// Moments of the summand estimated from one sample of `n_mc` points.
///
/// With `g_hat_i = mean_{j != i} u_ij`:
///
/// ```text
/// D_hat           = off-diagonal mean of u
/// sigma2_full_hat = off-diagonal mean of u^2 - D_hat^2
/// sigma2_cond_hat = Var(g_hat) - sigma2_full_hat / (n - 1), clamped at 0
/// M_full;3        = (off-diagonal mean |u - D_hat|^3)^{1/3}
/// M_cond;3        = (mean |g_hat_i - D_hat|^3)^{1/3}
/// ```
pub fn empirical_moments(
    spec: &SummandSpec,
    model: &MeanShiftModel,
    n_mc: usize,
    stream: RngStream,
) -> Result<MomentSet> {
    Ok(empirical_moments_with(spec, model, n_mc, stream, &MomentOptions::default())?.moments)
}

pub fn empirical_moments_with(
    spec: &SummandSpec,
    model: &MeanShiftModel,
    n_mc: usize,
    stream: RngStream,
    opts: &MomentOptions,
) -> Result<EmpiricalReport> {
    if n_mc < 10 {
        return Err(Error::InsufficientSample { needed: 10, got: n_mc });
    }
    let data = PairedSample::draw(spec, model, n_mc, stream)?;
    pair_moments(&spec.bind(&data)?, opts, stream.derive(0xB007))
}

/// All-pairs moment estimator for an arbitrary symmetric pair function.
pub fn pair_moments<P: PairFunction + ?Sized>(
    pf: &P,
    opts: &MomentOptions,
    stream: RngStream,
) -> Result<EmpiricalReport> {
    let n = pf.len();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let ng = opts.groups.clamp(1, n);
    let bounds: Vec<usize> = (0..=ng).map(|g| g * n / ng).collect();
    let group_of = |i: usize| -> usize {
        // Largest g with bounds[g] <= i.
        bounds.partition_point(|&b| b <= i) - 1
    };
    let units: Vec<(usize, usize)> = (0..ng).flat_map(|g| (g..ng).map(move |h| (g, h))).collect();

    let results: Vec<UnitResult> = units
        .par_iter()
        .map(|&(g, h)| {
            let (g0, g1) = (bounds[g], bounds[g + 1]);
            let (h0, h1) = (bounds[h], bounds[h + 1]);
            let mut s1 = CompensatedSum::default();
            let mut s2 = CompensatedSum::default();
            let mut rows = vec![0.0; g1 - g0];
            let mut cols = vec![0.0; if g == h { 0 } else { h1 - h0 }];
            let mut values = Vec::new();
            for i in g0..g1 {
                let jstart = if g == h { i + 1 } else { h0 };
                for j in jstart..h1 {
                    let u = pf.eval(i, j);
                    s1.add(u);
                    s2.add(u * u);
                    rows[i - g0] += u;
                    if g == h {
                        rows[j - g0] += u;
                    } else {
                        cols[j - h0] += u;
                    }
                    if opts.third_moments {
                        values.push(u as f32);
                    }
                }
            }
            UnitResult {
                s1: s1.value(),
                s2: s2.value(),
                rows,
                cols,
                values,
            }
        })
        .collect();

    // Per-point, per-group row sums r[i * ng + h] = sum_{j in h, j != i} u_ij.
    let mut r = vec![0.0; n * ng];
    let mut s1 = vec![0.0; ng * ng];
    let mut s2 = vec![0.0; ng * ng];
    let mut total1 = CompensatedSum::default();
    let mut total2 = CompensatedSum::default();
    for (&(g, h), res) in units.iter().zip(&results) {
        s1[g * ng + h] = res.s1;
        s2[g * ng + h] = res.s2;
        total1.add(res.s1);
        total2.add(res.s2);
        for (k, v) in res.rows.iter().enumerate() {
            r[(bounds[g] + k) * ng + h] = *v;
        }
        for (k, v) in res.cols.iter().enumerate() {
            r[(bounds[h] + k) * ng + g] = *v;
        }
    }

    let nf = n as f64;
    let pairs = nf * (nf - 1.0) / 2.0;
    let mean = total1.value() / pairs;
    let sigma2_full = (total2.value() / pairs - mean * mean).max(0.0);
    let ghat: Vec<f64> = (0..n)
        .map(|i| r[i * ng..(i + 1) * ng].iter().sum::<f64>() / (nf - 1.0))
        .collect();
    let gmean = ghat.iter().sum::<f64>() / nf;
    let var_g = ghat.iter().map(|v| (v - gmean).powi(2)).sum::<f64>() / nf;
    let sigma2_cond = (var_g - sigma2_full / (nf - 1.0)).max(0.0);

    let (m_cond_3, m_full_3) = if opts.third_moments {
        let full: f64 = results
            .par_iter()
            .map(|res| {
                res.values
                    .iter()
                    .map(|&v| (v as f64 - mean).abs().powi(3))
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        let cond = ghat.iter().map(|v| (v - mean).abs().powi(3)).sum::<f64>() / nf;
        (Some(cond.cbrt()), Some((full / pairs).cbrt()))
    } else {
        (None, None)
    };

    let errors = if opts.bootstrap >= 2 && ng >= 2 {
        let sizes: Vec<f64> = (0..ng).map(|g| (bounds[g + 1] - bounds[g]) as f64).collect();
        let stats: Vec<[f64; 3]> = (0..opts.bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream.with_replicate(b as u64).rng();
                let mut c = vec![0.0f64; ng];
                for _ in 0..ng {
                    c[rng.random_range(0..ng)] += 1.0;
                }
                group_bootstrap_stat(&c, &sizes, &bounds, &s1, &s2, &r, &group_of)
            })
            .collect();
        let sd = |k: usize| {
            let m = stats.iter().map(|s| s[k]).sum::<f64>() / stats.len() as f64;
            (stats.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / (stats.len() - 1) as f64)
                .sqrt()
        };
        Some(MomentErrors {
            mean: sd(0),
            sigma2_cond: sd(1),
            sigma2_full: sd(2),
        })
    } else {
        None
    };

    Ok(EmpiricalReport {
        moments: MomentSet {
            mean,
            sigma_cond: sigma2_cond.sqrt(),
            sigma_full: sigma2_full.sqrt(),
            m_cond_3,
            m_full_3,
            source: MomentSource::Empirical { n_mc: n },
        },
        sigma2_cond_uncorrected: var_g,
        errors,
    })
}

// Moment estimates on a resample holding `c[g]` copies of group `g`. Pairs
// of a point with its own copies are excluded, which makes the weight of an
// unordered pair across groups `g <= h` equal to `c[g] c[h]`.
fn group_bootstrap_stat(
    c: &[f64],
    sizes: &[f64],
    bounds: &[usize],
    s1: &[f64],
    s2: &[f64],
    r: &[f64],
    group_of: &dyn Fn(usize) -> usize,
) -> [f64; 3] {
    let ng = c.len();
    let (mut w, mut a1, mut a2) = (0.0, 0.0, 0.0);
    for g in 0..ng {
        if c[g] == 0.0 {
            continue;
        }
        for h in g..ng {
            let wt = c[g] * c[h];
            if wt == 0.0 {
                continue;
            }
            let np = if g == h {
                sizes[g] * (sizes[g] - 1.0) / 2.0
            } else {
                sizes[g] * sizes[h]
            };
            w += wt * np;
            a1 += wt * s1[g * ng + h];
            a2 += wt * s2[g * ng + h];
        }
    }
    if w == 0.0 {
        return [f64::NAN; 3];
    }
    let mean = a1 / w;
    let full = a2 / w - mean * mean;
    let total: f64 = c.iter().zip(sizes).map(|(a, b)| a * b).sum();
    let (mut sw, mut sg, mut sgg) = (0.0, 0.0, 0.0);
    let n = bounds[ng];
    for i in 0..n {
        let g = group_of(i);
        if c[g] == 0.0 {
            continue;
        }
        let row = &r[i * ng..(i + 1) * ng];
        let num: f64 = row.iter().zip(c).map(|(v, k)| v * k).sum();
        let gi = num / (total - c[g]);
        sw += c[g];
        sg += c[g] * gi;
        sgg += c[g] * gi * gi;
    }
    let gm = sg / sw;
    let var_g = sgg / sw - gm * gm;
    let cond = var_g - full / (total - 1.0);
    [mean, cond, full]
}
