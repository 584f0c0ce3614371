//! Monte-Carlo harness: replicated draws of `D_n` across seeds, survival
//! curves with seed-level confidence bands, Kolmogorov-distance sweeps over
//! the dimension or the bandwidth, regime diagnosis and moment-ratio sweeps.
//!
//! Replicate `r` of seed `s` always uses the stream `(base_seed, s, r)`, so a
//! configuration fully determines its output regardless of the worker count.

use std::io::Write;

use ndarray::{s, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{median_heuristic_pooled, resolve_bandwidth, BandwidthRule, Kernel};
use crate::limits::{
    chisq_matched_limit, gamma_matched_limit, kolmogorov_distance, limit_cdf, limit_moments,
    limit_sample, linear_mmd_exact_limit, nondegenerate_limit, LimitSpec,
};
use crate::model::{CovSpec, MeanShiftModel, RngStream};
use crate::moments::{
    assumption1_check, closed_form_moments, empirical_moments_with, variance_proxy, MomentOptions,
    MomentSet, MomentSource,
};
use crate::special::Z_975;
use crate::ustat::{u_statistic, PairedSample, SummandSpec};

pub const TAILCURVE_HEADER: [&str; 8] =
    ["threshold", "emp_mean", "emp_ci_lo", "emp_ci_hi", "gauss", "gamma", "chisq1", "wchisq"];
pub const SWEEP_HEADER: [&str; 11] = [
    "swept_param",
    "value",
    "gamma",
    "ks_gauss",
    "ks_gauss_sd",
    "ks_gamma",
    "ks_gamma_sd",
    "ks_chisq1",
    "ks_chisq1_sd",
    "rho_d",
    "regime",
];
pub const RATIOS_HEADER: [&str; 3] = ["d", "ratio_cond", "ratio_full"];

/// Points used for a per-replicate median heuristic in moment estimation.
pub const MOMENT_MEDIAN_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatKind {
    KsdRbf,
    MmdRbf,
    MmdLinear,
}

impl StatKind {
    pub fn name(&self) -> &'static str {
        match self {
            StatKind::KsdRbf => "ksd-rbf",
            StatKind::MmdRbf => "mmd-rbf",
            StatKind::MmdLinear => "mmd-linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ksd-rbf" => Some(StatKind::KsdRbf),
            "mmd-rbf" => Some(StatKind::MmdRbf),
            "mmd-linear" => Some(StatKind::MmdLinear),
            _ => None,
        }
    }

    pub fn uses_bandwidth(&self) -> bool {
        !matches!(self, StatKind::MmdLinear)
    }
}

/// Mean vector as a function of the dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum MuPattern {
    /// `(v, 0, ..., 0)`.
    First(f64),
    /// `value` at `index`, zeros elsewhere.
    Coordinate { index: usize, value: f64 },
    /// Explicit vector; its length fixes the dimension.
    Vector(Vec<f64>),
}

impl MuPattern {
    pub fn build(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            MuPattern::First(v) => Ok(one_hot(d, 0, *v)),
            MuPattern::Coordinate { index, value } => {
                if *index >= d {
                    return Err(Error::invalid(format!("mu index {index} out of range for d = {d}")));
                }
                Ok(one_hot(d, *index, *value))
            }
            MuPattern::Vector(v) => {
                if v.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: v.len() });
                }
                Ok(v.clone())
            }
        }
    }
}

fn one_hot(d: usize, i: usize, v: f64) -> Vec<f64> {
    let mut mu = vec![0.0; d];
    if d > 0 {
        mu[i] = v;
    }
    mu
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridRule {
    /// `D +- 4 sqrt(variance proxy)` with `points` evenly spaced thresholds.
    Auto { points: usize },
    Range { lo: f64, hi: f64, points: usize },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitKind {
    #[serde(rename = "gauss")]
    Gauss,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "chisq1")]
    ChiSq1,
    #[serde(rename = "wchisq", alias = "wchisq_exact")]
    WChiSq,
}

impl LimitKind {
    pub const ALL: [LimitKind; 4] = [LimitKind::Gauss, LimitKind::Gamma, LimitKind::ChiSq1, LimitKind::WChiSq];

    pub fn name(&self) -> &'static str {
        match self {
            LimitKind::Gauss => "gauss",
            LimitKind::Gamma => "gamma",
            LimitKind::ChiSq1 => "chisq1",
            LimitKind::WChiSq => "wchisq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wchisq_exact" => Some(LimitKind::WChiSq),
            _ => LimitKind::ALL.into_iter().find(|k| k.name() == s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentMethod {
    /// Closed form when one exists, Monte Carlo otherwise.
    Auto,
    Closed,
    /// Monte Carlo with `n_mc` points (default `max(4000, 4 n)`).
    MonteCarlo { n_mc: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub stat: StatKind,
    pub bandwidth: BandwidthRule,
    pub d: usize,
    pub mu: MuPattern,
    pub cov: CovSpec,
    pub n: usize,
    pub seeds: usize,
    pub reps_per_seed: usize,
    pub grid: GridRule,
    pub limits: Vec<LimitKind>,
    pub base_seed: u64,
    /// Resolve a data-dependent bandwidth once, from replicate 0 of seed 0.
    pub freeze_bandwidth: bool,
    pub moments: MomentMethod,
    /// Draws used to tabulate the weighted chi-square law.
    pub wchisq_reps: usize,
}

impl ExperimentConfig {
    pub fn new(stat: StatKind, d: usize, n: usize) -> Self {
        ExperimentConfig {
            stat,
            bandwidth: BandwidthRule::MedianHeuristic,
            d,
            mu: MuPattern::First(2.0),
            cov: CovSpec::Identity,
            n,
            seeds: 10,
            reps_per_seed: 200,
            grid: GridRule::Auto { points: 101 },
            limits: vec![LimitKind::Gauss, LimitKind::Gamma, LimitKind::ChiSq1],
            base_seed: 20240,
            freeze_bandwidth: false,
            moments: MomentMethod::Auto,
            wchisq_reps: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("model.d", "must be at least 1"));
        }
        if self.n < 2 {
            return Err(Error::config("n", "must be at least 2"));
        }
        if self.seeds == 0 {
            return Err(Error::config("seeds", "must be at least 1"));
        }
        if self.reps_per_seed < 2 {
            return Err(Error::config("reps_per_seed", "must be at least 2"));
        }
        if self.stat.uses_bandwidth() {
            self.bandwidth
                .validate()
                .map_err(|e| Error::config("kernel.bandwidth", e.to_string()))?;
        }
        self.cov.validate(self.d).map_err(|e| Error::config("model.cov", e.to_string()))?;
        self.mu.build(self.d).map_err(|e| Error::config("model.mu", e.to_string()))?;
        match &self.grid {
            GridRule::Auto { points } | GridRule::Range { points, .. } if *points < 2 => {
                return Err(Error::config("grid.points", "must be at least 2"));
            }
            GridRule::Range { lo, hi, .. } if !(lo < hi) => {
                return Err(Error::config("grid.range", "lo must be below hi"));
            }
            GridRule::Explicit(v) if v.is_empty() || v.windows(2).any(|w| w[0] >= w[1]) => {
                return Err(Error::config("grid.explicit", "must be non-empty and strictly increasing"));
            }
            _ => {}
        }
        if let MomentMethod::MonteCarlo { n_mc: Some(m) } = self.moments {
            if m < 10 {
                return Err(Error::config("moments.mc.n_mc", "must be at least 10"));
            }
        }
        if self.limits.contains(&LimitKind::WChiSq) && self.wchisq_reps == 0 {
            return Err(Error::config("wchisq_reps", "must be positive"));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MeanShiftModel> {
        MeanShiftModel::new(self.mu.build(self.d)?, self.cov.clone())
    }

    /// Summand for a resolved bandwidth (ignored for the linear kernel).
    pub fn summand(&self, gamma: f64, model: &MeanShiftModel) -> Result<SummandSpec> {
        Ok(match self.stat {
            StatKind::KsdRbf => SummandSpec::ksd(gamma, model.null())?,
            StatKind::MmdRbf => SummandSpec::Mmd { kernel: Kernel::Rbf { gamma } },
            StatKind::MmdLinear => SummandSpec::Mmd { kernel: Kernel::Linear },
        })
    }
}

/// One replicate of `D_n` and the bandwidth it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replicate {
    pub value: f64,
    pub gamma: Option<f64>,
}

/// Anything that turns a stream into one draw of the statistic.
pub trait ReplicateSource: Sync {
    fn draw(&self, stream: RngStream) -> Result<Replicate>;
}

/// Closure-backed source, used to inject stub statistics.
pub struct FnSource<F>(pub F);

impl<F: Fn(RngStream) -> f64 + Sync> ReplicateSource for FnSource<F> {
    fn draw(&self, stream: RngStream) -> Result<Replicate> {
        Ok(Replicate { value: (self.0)(stream), gamma: None })
    }
}

/// Draws `D_n` from the configured mean-shift model.
pub struct ModelSource {
    cfg: ExperimentConfig,
    model: MeanShiftModel,
    frozen: Option<f64>,
}

impl ModelSource {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.model()?;
        let mut src = ModelSource { cfg: cfg.clone(), model, frozen: None };
        if cfg.freeze_bandwidth && cfg.stat.uses_bandwidth() && cfg.bandwidth.is_data_dependent() {
            let data = src.sample(RngStream::new(cfg.base_seed, 0, 0))?;
            src.frozen = Some(src.resolve(&data)?);
        }
        Ok(src)
    }

    pub fn model(&self) -> &MeanShiftModel {
        &self.model
    }

    fn sample(&self, stream: RngStream) -> Result<PairedSample> {
        PairedSample::draw_from(&self.model, self.cfg.n, stream, self.cfg.stat != StatKind::KsdRbf)
    }

    fn resolve(&self, data: &PairedSample) -> Result<f64> {
        if let Some(g) = self.frozen {
            return Ok(g);
        }
        let mut pooled: Vec<ArrayView2<f64>> = vec![data.x().view()];
        if let Some(y) = data.y() {
            pooled.push(y.view());
        }
        resolve_bandwidth(self.cfg.bandwidth, self.cfg.d, &pooled)
    }
}

impl ReplicateSource for ModelSource {
    fn draw(&self, stream: RngStream) -> Result<Replicate> {
        let data = self.sample(stream)?;
        let gamma = if self.cfg.stat.uses_bandwidth() { Some(self.resolve(&data)?) } else { None };
        let spec = self.cfg.summand(gamma.unwrap_or(1.0), &self.model)?;
        Ok(Replicate { value: u_statistic(&spec, &data)?, gamma })
    }
}

/// Raw replicate values, one vector per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub per_seed: Vec<Vec<f64>>,
    pub gammas: Vec<f64>,
}

impl Simulation {
    pub fn pooled_sorted(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.per_seed.concat();
        all.sort_by(f64::total_cmp);
        all
    }

    /// Median of the per-replicate bandwidths, if any were used.
    pub fn representative_gamma(&self) -> Option<f64> {
        if self.gammas.is_empty() {
            return None;
        }
        let mut g = self.gammas.clone();
        Some(crate::kernels::median_in_place(&mut g))
    }
}

pub fn simulate(src: &dyn ReplicateSource, seeds: usize, reps: usize, base_seed: u64) -> Result<Simulation> {
    let jobs: Vec<(usize, usize)> = (0..seeds).flat_map(|s| (0..reps).map(move |r| (s, r))).collect();
    let draws: Vec<Replicate> = jobs
        .par_iter()
        .map(|&(s, r)| src.draw(RngStream::new(base_seed, s as u64, r as u64)))
        .collect::<Result<_>>()?;
    let per_seed = draws.chunks(reps).map(|c| c.iter().map(|r| r.value).collect()).collect();
    let gammas = draws.iter().filter_map(|r| r.gamma).collect();
    Ok(Simulation { per_seed, gammas })
}

/// Theoretical moments and the requested limit laws.
#[derive(Debug, Clone, PartialEq)]
pub struct Theory {
    pub moments: MomentSet,
    pub gamma: Option<f64>,
    pub limits: Vec<(LimitKind, Option<LimitSpec>)>,
}

impl Theory {
    pub fn limit(&self, kind: LimitKind) -> Option<&LimitSpec> {
        self.limits.iter().find(|(k, _)| *k == kind).and_then(|(_, s)| s.as_ref())
    }
}

/// Build the requested limits. `wchisq` supplies the weighted chi-square law
/// when one is known; it is tabulated by `wchisq_reps` draws. A Gamma match
/// that is infeasible falls back to the matched chi-square law.
pub fn build_limits(
    ms: &MomentSet,
    n: usize,
    kinds: &[LimitKind],
    wchisq: Option<LimitSpec>,
    wchisq_reps: usize,
    stream: RngStream,
) -> Result<Vec<(LimitKind, Option<LimitSpec>)>> {
    kinds
        .iter()
        .map(|&k| {
            let spec = match k {
                LimitKind::Gauss => Some(nondegenerate_limit(ms, n)?),
                LimitKind::ChiSq1 => Some(chisq_matched_limit(ms, n)?),
                LimitKind::Gamma => match gamma_matched_limit(ms, n) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        log::warn!("gamma match unavailable ({e}); using the matched chi-square law");
                        Some(chisq_matched_limit(ms, n)?)
                    }
                },
                LimitKind::WChiSq => match &wchisq {
                    Some(w) => Some(LimitSpec::empirical(limit_sample(w, wchisq_reps, stream)?)?),
                    None => None,
                },
            };
            Ok((k, spec))
        })
        .collect()
}

/// Moments for the configured model at bandwidth `gamma`.
pub fn model_moments(cfg: &ExperimentConfig, gamma: Option<f64>) -> Result<MomentSet> {
    let model = cfg.model()?;
    let spec = cfg.summand(gamma.unwrap_or(1.0), &model)?;
    let mc = |n_mc: usize| -> Result<MomentSet> {
        let opts = MomentOptions { third_moments: false, ..MomentOptions::default() };
        let stream = RngStream::new(cfg.base_seed, u64::MAX, 0).derive(0x4d43);
        Ok(empirical_moments_with(&spec, &model, n_mc, stream, &opts)?.moments)
    };
    let default_mc = (4 * cfg.n).max(4000);
    match cfg.moments {
        MomentMethod::Closed => closed_form_moments(&spec, &model),
        MomentMethod::MonteCarlo { n_mc } => mc(n_mc.unwrap_or(default_mc)),
        MomentMethod::Auto => match closed_form_moments(&spec, &model) {
            Ok(ms) => Ok(ms),
            Err(Error::NonIdentityCovariance) => mc(default_mc),
            Err(e) => Err(e),
        },
    }
}

/// Theory for a finished simulation of the configured model.
pub fn model_theory(cfg: &ExperimentConfig, sim: &Simulation) -> Result<Theory> {
    let gamma = if cfg.stat.uses_bandwidth() {
        Some(match cfg.bandwidth {
            BandwidthRule::MedianHeuristic => sim
                .representative_gamma()
                .ok_or_else(|| Error::invalid("no bandwidths recorded"))?,
            rule => resolve_bandwidth(rule, cfg.d, &[])?,
        })
    } else {
        None
    };
    let moments = model_moments(cfg, gamma)?;
    let wchisq = if cfg.stat == StatKind::MmdLinear {
        Some(linear_mmd_exact_limit(&cfg.model()?, cfg.n)?)
    } else {
        None
    };
    let stream = RngStream::new(cfg.base_seed, u64::MAX, 1).derive(0x5743);
    let limits = build_limits(&moments, cfg.n, &cfg.limits, wchisq, cfg.wchisq_reps, stream)?;
    Ok(Theory { moments, gamma, limits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailCurve {
    pub thresholds: Vec<f64>,
    pub emp_mean: Vec<f64>,
    pub emp_ci_lo: Vec<f64>,
    pub emp_ci_hi: Vec<f64>,
    /// Survival function of each requested limit on the grid.
    pub theory: Vec<(LimitKind, Option<Vec<f64>>)>,
    /// Kolmogorov distance of the pooled draws to each limit.
    pub ks_pooled: Vec<(LimitKind, Option<f64>)>,
    pub pooled: Vec<f64>,
    pub pooled_skewness: f64,
    pub moments: MomentSet,
    pub gamma: Option<f64>,
    pub grid_widened: bool,
}

impl TailCurve {
    pub fn ks(&self, kind: LimitKind) -> Option<f64> {
        self.ks_pooled.iter().find(|(k, _)| *k == kind).and_then(|(_, v)| *v)
    }

    pub fn survival(&self, kind: LimitKind) -> Option<&[f64]> {
        self.theory
            .iter()
            .find(|(k, _)| *k == kind)
            .and_then(|(_, v)| v.as_deref())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TAILCURVE_HEADER).map_err(io_err)?;
        for i in 0..self.thresholds.len() {
            let mut rec = vec![
                fmt(self.thresholds[i]),
                fmt(self.emp_mean[i]),
                fmt(self.emp_ci_lo[i]),
                fmt(self.emp_ci_hi[i]),
            ];
            for kind in LimitKind::ALL {
                rec.push(self.survival(kind).map(|v| fmt(v[i])).unwrap_or_default());
            }
            w.write_record(&rec).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Evaluate the grid rule; returns the grid and whether it was widened to
/// cover 99% of the pooled draws.
pub fn resolve_grid(rule: &GridRule, ms: &MomentSet, n: usize, pooled_sorted: &[f64]) -> (Vec<f64>, bool) {
    let linspace = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
        (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
    };
    match rule {
        GridRule::Explicit(v) => (v.clone(), false),
        GridRule::Range { lo, hi, points } => (linspace(*lo, *hi, *points), false),
        GridRule::Auto { points } => {
            let half = 4.0 * variance_proxy(ms, n).sqrt();
            let (mut lo, mut hi) = (ms.mean - half, ms.mean + half);
            let mut widened = false;
            if !pooled_sorted.is_empty() {
                let r = pooled_sorted.len();
                let q = |p: f64| pooled_sorted[((p * (r - 1) as f64).round() as usize).min(r - 1)];
                let inside = pooled_sorted.iter().filter(|v| **v >= lo && **v <= hi).count();
                if (inside as f64) < 0.99 * r as f64 {
                    lo = lo.min(q(0.0005));
                    hi = hi.max(q(0.9995));
                    widened = true;
                }
            }
            if !(hi > lo) {
                let pad = ms.mean.abs().max(1.0);
                lo = ms.mean - pad;
                hi = ms.mean + pad;
            }
            (linspace(lo, hi, *points), widened)
        }
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let m = v.iter().sum::<f64>() / k;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

fn survival_of(spec: &LimitSpec, t: f64) -> Result<f64> {
    Ok(1.0 - limit_cdf(spec, t)?)
}

/// Survival curves and pooled distances for a finished simulation.
pub fn tail_curve_from(sim: &Simulation, theory: &Theory, grid: &GridRule, n: usize) -> Result<TailCurve> {
    let pooled = sim.pooled_sorted();
    let (thresholds, grid_widened) = resolve_grid(grid, &theory.moments, n, &pooled);
    let seeds = sim.per_seed.len();
    let sorted_seeds: Vec<Vec<f64>> = sim
        .per_seed
        .iter()
        .map(|v| {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let mut emp_mean = Vec::with_capacity(thresholds.len());
    let mut emp_ci_lo = Vec::with_capacity(thresholds.len());
    let mut emp_ci_hi = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        let per: Vec<f64> = sorted_seeds
            .iter()
            .map(|v| (v.len() - v.partition_point(|x| *x <= t)) as f64 / v.len() as f64)
            .collect();
        let (m, sd) = mean_sd(&per);
        let half = Z_975 * sd / (seeds as f64).sqrt();
        emp_mean.push(m);
        emp_ci_lo.push((m - half).max(0.0));
        emp_ci_hi.push((m + half).min(1.0));
    }
    let mut curves = Vec::new();
    let mut ks_pooled = Vec::new();
    for (kind, spec) in &theory.limits {
        match spec {
            Some(spec) => {
                let surv = thresholds.iter().map(|&t| survival_of(spec, t)).collect::<Result<Vec<_>>>()?;
                curves.push((*kind, Some(surv)));
                ks_pooled.push((*kind, Some(kolmogorov_distance(&pooled, spec)?)));
            }
            None => {
                curves.push((*kind, None));
                ks_pooled.push((*kind, None));
            }
        }
    }
    let pooled_skewness = LimitSpec::empirical(pooled.clone())
        .and_then(|e| limit_moments(&e))
        .map(|m| if m.variance > 0.0 { m.skewness() } else { 0.0 })?;
    Ok(TailCurve {
        thresholds,
        emp_mean,
        emp_ci_lo,
        emp_ci_hi,
        theory: curves,
        ks_pooled,
        pooled,
        pooled_skewness,
        moments: theory.moments,
        gamma: theory.gamma,
        grid_widened,
    })
}

pub fn run_tail_curve(cfg: &ExperimentConfig) -> Result<TailCurve> {
    let src = ModelSource::new(cfg)?;
    let sim = simulate(&src, cfg.seeds, cfg.reps_per_seed, cfg.base_seed)?;
    let theory = model_theory(cfg, &sim)?;
    tail_curve_from(&sim, &theory, &cfg.grid, cfg.n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    GaussianDominant,
    Boundary,
    DegenerateDominant,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::GaussianDominant => "gaussian_dominant",
            Regime::Boundary => "boundary",
            Regime::DegenerateDominant => "degenerate_dominant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnosis {
    pub rho_d: f64,
    pub sqrt_n_minus_1: f64,
    pub regime: Regime,
    /// Name of the limit constructor matching the regime.
    pub predicted_limit: &'static str,
}

/// Compare `rho_d` against `sqrt(n - 1)`: above three times it the
/// degenerate law dominates, below a third of it the Gaussian one does.
pub fn diagnose(ms: &MomentSet, n: usize) -> Diagnosis {
    let rho_d = ms.rho_d();
    let r = (n.saturating_sub(1) as f64).sqrt();
    let regime = if rho_d > 3.0 * r {
        Regime::DegenerateDominant
    } else if rho_d < r / 3.0 {
        Regime::GaussianDominant
    } else {
        Regime::Boundary
    };
    let predicted_limit = match regime {
        Regime::GaussianDominant => "nondegenerate_limit",
        Regime::Boundary => "unk_simulator",
        Regime::DegenerateDominant if ms.mean > 0.0 => "gamma_matched_limit",
        Regime::DegenerateDominant => "chisq_matched_limit",
    };
    Diagnosis { rho_d, sqrt_n_minus_1: r, regime, predicted_limit }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthRegime {
    Small,
    Critical,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoOrder {
    pub gamma_regime: BandwidthRegime,
    /// MMD only: whether `gamma < |mu|^2`.
    pub gamma_below_mu2: Option<bool>,
    /// The order expression with unit constants; `None` where no rate is
    /// known. In the MMD critical regime it is an upper-bound order.
    pub order: Option<f64>,
}

impl RhoOrder {
    pub fn label(&self) -> String {
        let g = match self.gamma_regime {
            BandwidthRegime::Small => "small_gamma",
            BandwidthRegime::Critical => "critical_gamma",
            BandwidthRegime::Large => "large_gamma",
        };
        match self.gamma_below_mu2 {
            None => g.to_string(),
            Some(true) => format!("{g}/gamma_below_mu2"),
            Some(false) => format!("{g}/gamma_above_mu2"),
        }
    }
}

/// Order of `rho_d` for the RBF statistics under `N(mu, I)` vs `N(0, I)`,
/// with every implicit constant set to 1. `gamma / sqrt(d)` below 1/3 is the
/// small-bandwidth regime, above 3 the large one.
pub fn predict_rho_order(stat: StatKind, d: usize, gamma: f64, mu_norm: f64) -> Result<RhoOrder> {
    if !(gamma > 0.0 && mu_norm > 0.0 && d > 0) {
        return Err(Error::invalid("d, gamma and |mu| must be positive"));
    }
    let df = d as f64;
    let sd = df.sqrt();
    let m2 = mu_norm * mu_norm;
    let ratio = gamma / sd;
    let gamma_regime = if ratio < 1.0 / 3.0 {
        BandwidthRegime::Small
    } else if ratio > 3.0 {
        BandwidthRegime::Large
    } else {
        BandwidthRegime::Critical
    };
    let growth = (3.0 * df / (4.0 * gamma * gamma)).exp();
    match stat {
        StatKind::KsdRbf => {
            let order = match gamma_regime {
                BandwidthRegime::Small => growth * (df / (gamma * m2) + sd / (gamma.sqrt() * mu_norm) + 1.0),
                BandwidthRegime::Large => {
                    sd * (1.0 + mu_norm / gamma.sqrt()) / (mu_norm * (1.0 + sd * mu_norm / gamma)) + 1.0
                }
                BandwidthRegime::Critical => sd / m2 + df.powf(0.25) / mu_norm + 1.0,
            };
            Ok(RhoOrder { gamma_regime, gamma_below_mu2: None, order: Some(order) })
        }
        StatKind::MmdRbf => {
            let below = gamma < m2;
            let order = match (below, gamma_regime) {
                (true, BandwidthRegime::Small) => Some(growth),
                (true, _) => None,
                (false, BandwidthRegime::Small) => Some(gamma / m2 * growth),
                (false, BandwidthRegime::Large) => Some((mu_norm + sd) / (mu_norm + sd * m2 / gamma)),
                (false, BandwidthRegime::Critical) => Some(sd / m2),
            };
            Ok(RhoOrder { gamma_regime, gamma_below_mu2: Some(below), order })
        }
        StatKind::MmdLinear => Err(Error::UnsupportedSummand("rho order predictions cover RBF statistics")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepVar {
    D(Vec<usize>),
    Gamma(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NRule {
    Fixed,
    /// `n = round(coef * d^{1/2})`.
    SqrtD { coef: f64 },
    /// `n = round(coef * d^2)`.
    DSquared { coef: f64 },
}

impl NRule {
    pub fn n_for(&self, d: usize, fixed: usize) -> usize {
        let df = d as f64;
        let n = match *self {
            NRule::Fixed => return fixed,
            NRule::SqrtD { coef } => coef * df.sqrt(),
            NRule::DSquared { coef } => coef * df * df,
        };
        (n.round() as usize).max(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub swept_param: &'static str,
    pub value: f64,
    pub n: usize,
    pub gamma: Option<f64>,
    /// Mean and across-seed SD of the per-seed Kolmogorov distance.
    pub ks: Vec<(LimitKind, Option<(f64, f64)>)>,
    pub rho_d: f64,
    pub regime: Regime,
}

impl SweepRow {
    pub fn ks_mean(&self, kind: LimitKind) -> Option<f64> {
        self.ks.iter().find(|(k, _)| *k == kind).and_then(|(_, v)| v.map(|p| p.0))
    }

    pub fn ks_sd(&self, kind: LimitKind) -> Option<f64> {
        self.ks.iter().find(|(k, _)| *k == kind).and_then(|(_, v)| v.map(|p| p.1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SWEEP_HEADER).map_err(io_err)?;
        for row in &self.rows {
            let mut rec = vec![row.swept_param.to_string(), fmt(row.value), fmt_opt(row.gamma)];
            for kind in [LimitKind::Gauss, LimitKind::Gamma, LimitKind::ChiSq1] {
                rec.push(fmt_opt(row.ks_mean(kind)));
                rec.push(fmt_opt(row.ks_sd(kind)));
            }
            rec.push(if row.rho_d.is_finite() { fmt(row.rho_d) } else { "inf".into() });
            rec.push(row.regime.name().into());
            w.write_record(&rec).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Per-seed Kolmogorov distances to each analytic limit, summarized across
/// seeds.
pub fn sweep_row_from(
    swept_param: &'static str,
    value: f64,
    n: usize,
    sim: &Simulation,
    theory: &Theory,
) -> Result<SweepRow> {
    let mut ks = Vec::new();
    for kind in [LimitKind::Gauss, LimitKind::Gamma, LimitKind::ChiSq1] {
        let entry = match theory.limit(kind) {
            Some(spec) => {
                let per = sim
                    .per_seed
                    .iter()
                    .map(|v| {
                        let mut v = v.clone();
                        v.sort_by(f64::total_cmp);
                        kolmogorov_distance(&v, spec)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(mean_sd(&per))
            }
            None => None,
        };
        ks.push((kind, entry));
    }
    let diag = diagnose(&theory.moments, n);
    Ok(SweepRow { swept_param, value, n, gamma: theory.gamma, ks, rho_d: diag.rho_d, regime: diag.regime })
}

/// Kolmogorov distances over a grid of dimensions or bandwidths. Each point
/// reuses the same `(base_seed, seed, replicate)` streams.
pub fn run_kdist_sweep(cfg: &ExperimentConfig, vary: &SweepVar, n_rule: NRule) -> Result<SweepResult> {
    let points: Vec<(f64, ExperimentConfig)> = match vary {
        SweepVar::D(ds) => ds
            .iter()
            .map(|&d| {
                let mut c = cfg.clone();
                c.d = d;
                c.n = n_rule.n_for(d, cfg.n);
                (d as f64, c)
            })
            .collect(),
        SweepVar::Gamma(gs) => gs
            .iter()
            .map(|&g| {
                let mut c = cfg.clone();
                c.bandwidth = BandwidthRule::Fixed(g);
                c.n = n_rule.n_for(cfg.d, cfg.n);
                (g, c)
            })
            .collect(),
    };
    if points.len() < 2 {
        return Err(Error::config("sweep.vary", "needs at least two values"));
    }
    let name = match vary {
        SweepVar::D(_) => "d",
        SweepVar::Gamma(_) => "gamma",
    };
    let mut rows = Vec::new();
    for (value, c) in points {
        let mut c = c;
        c.limits = vec![LimitKind::Gauss, LimitKind::Gamma, LimitKind::ChiSq1];
        let src = ModelSource::new(&c)?;
        let sim = simulate(&src, c.seeds, c.reps_per_seed, c.base_seed)?;
        let theory = model_theory(&c, &sim)?;
        let row = sweep_row_from(name, value, c.n, &sim, &theory)?;
        log::info!(
            "sweep {name}={value}: ks_gauss={:?} ks_gamma={:?} rho_d={:.3}",
            row.ks_mean(LimitKind::Gauss),
            row.ks_mean(LimitKind::Gamma),
            row.rho_d
        );
        rows.push(row);
    }
    Ok(SweepResult { rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub d: usize,
    pub ratio_cond: Option<f64>,
    pub ratio_full: Option<f64>,
}

pub fn write_ratios_csv<W: Write>(rows: &[RatioRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RATIOS_HEADER).map_err(io_err)?;
    for r in rows {
        w.write_record([r.d.to_string(), fmt_opt(r.ratio_cond), fmt_opt(r.ratio_full)])
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Average the moment sets of several seeds field by field.
pub fn average_moments(sets: &[MomentSet]) -> MomentSet {
    let k = sets.len() as f64;
    let avg = |f: &dyn Fn(&MomentSet) -> f64| sets.iter().map(f).sum::<f64>() / k;
    let avg_opt = |f: &dyn Fn(&MomentSet) -> Option<f64>| -> Option<f64> {
        sets.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / k)
    };
    MomentSet {
        mean: avg(&|m| m.mean),
        sigma_cond: avg(&|m| m.sigma_cond),
        sigma_full: avg(&|m| m.sigma_full),
        m_cond_3: avg_opt(&|m| m.m_cond_3),
        m_full_3: avg_opt(&|m| m.m_full_3),
        source: sets.first().map(|m| m.source).unwrap_or(MomentSource::ClosedForm),
    }
}

/// Empirical moments of the configured model at dimension `d`, with a
/// data-dependent bandwidth resolved from (at most) the first
/// [`MOMENT_MEDIAN_POINTS`] draws of the same sample.
pub fn empirical_moments_at(cfg: &ExperimentConfig, d: usize, n_mc: usize, stream: RngStream) -> Result<MomentSet> {
    let mut c = cfg.clone();
    c.d = d;
    let model = c.model()?;
    let data = PairedSample::draw_from(&model, n_mc, stream, c.stat != StatKind::KsdRbf)?;
    let gamma = if c.stat.uses_bandwidth() {
        Some(match c.bandwidth {
            BandwidthRule::MedianHeuristic => {
                let take = if data.y().is_some() { MOMENT_MEDIAN_POINTS / 2 } else { MOMENT_MEDIAN_POINTS };
                let take = take.min(n_mc);
                let mut pooled = vec![data.x().slice(s![..take, ..])];
                if let Some(y) = data.y() {
                    pooled.push(y.slice(s![..take, ..]));
                }
                let mb = median_heuristic_pooled(&pooled)?;
                if mb.degenerate {
                    return Err(Error::DegenerateBandwidth);
                }
                mb.gamma
            }
            rule => resolve_bandwidth(rule, d, &[])?,
        })
    } else {
        None
    };
    let spec = c.summand(gamma.unwrap_or(1.0), &model)?;
    let opts = MomentOptions { third_moments: true, bootstrap: 0, ..MomentOptions::default() };
    Ok(crate::moments::pair_moments(&spec.bind(&data)?, &opts, stream.derive(0xB007))?.moments)
}

/// Moment ratios over dimensions; each `d` averages `seeds` empirical moment
/// sets of `n_mc` points.
pub fn run_moment_ratio_sweep(cfg: &ExperimentConfig, ds: &[usize], n_mc: usize, seeds: usize) -> Result<Vec<RatioRow>> {
    if seeds == 0 {
        return Err(Error::config("seeds", "must be at least 1"));
    }
    ds.iter()
        .map(|&d| {
            let sets = (0..seeds)
                .map(|s| empirical_moments_at(cfg, d, n_mc, RngStream::new(cfg.base_seed, s as u64, d as u64)))
                .collect::<Result<Vec<_>>>()?;
            let ms = average_moments(&sets);
            let row = match assumption1_check(&ms, f64::INFINITY) {
                Ok(rc) => RatioRow { d, ratio_cond: Some(rc.ratio_cond), ratio_full: Some(rc.ratio_full) },
                Err(Error::DegenerateDenominator("sigma_cond")) => RatioRow {
                    d,
                    ratio_cond: None,
                    ratio_full: match (ms.m_full_3, ms.sigma_full) {
                        (Some(m), s) if s > 0.0 => Some(m / s),
                        _ => None,
                    },
                },
                Err(e) => return Err(e),
            };
            log::info!("ratios d={d}: cond={:?} full={:?}", row.ratio_cond, row.ratio_full);
            Ok(row)
        })
        .collect()
}

pub const SPECTRAL_HEADER: [&str; 6] = ["K", "eps_1", "eps_2", "eps_3", "ks_unk_vs_dn", "tau_top5"];

/// Truncation study for the MMD-RBF summand: per degree `K`, the truncation
/// errors, the weights `tau`, and the distance between the fitted
/// quadratic-form law and Monte-Carlo draws of `D_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    pub d: usize,
    pub gamma: f64,
    pub mu: MuPattern,
    pub n: usize,
    pub degrees: Vec<usize>,
    /// Draws of `D_n` and of the quadratic-form law.
    pub reps: usize,
    pub n_fit: usize,
    pub n_mc: usize,
    pub base_seed: u64,
}

impl SpectralConfig {
    pub fn new(d: usize, gamma: f64, n: usize) -> Self {
        SpectralConfig {
            d,
            gamma,
            mu: MuPattern::First(1.0),
            n,
            degrees: vec![1, 3, 6, 10, 12],
            reps: 10_000,
            n_fit: 100_000,
            n_mc: 100_000,
            base_seed: 20240,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=crate::spectral::MAX_BASIS_DIM).contains(&self.d) {
            return Err(Error::config("spectral.d", "must be 1, 2 or 3"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("spectral.gamma", "must be positive"));
        }
        if self.n < 2 {
            return Err(Error::config("n", "must be at least 2"));
        }
        if self.degrees.is_empty() {
            return Err(Error::config("spectral.degrees", "must be non-empty"));
        }
        if self.reps < 2 || self.n_fit < 2 || self.n_mc < 2 {
            return Err(Error::config("spectral", "reps, n_fit and n_mc must be at least 2"));
        }
        self.mu.build(self.d).map_err(|e| Error::config("model.mu", e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRow {
    pub degree: usize,
    pub eps: [crate::spectral::TruncationError; 3],
    pub ks_unk_vs_dn: f64,
    /// Rough MC standard error of the two-sample distance.
    pub ks_se: f64,
    pub tau: Vec<f64>,
    pub sum_tau_sq: f64,
}

pub fn run_spectral_convergence(cfg: &SpectralConfig) -> Result<Vec<SpectralRow>> {
    use crate::spectral::{epsilon_k_all, fit_truncated_rep, FeatureMap, RbfBasis};
    cfg.validate()?;
    let model = MeanShiftModel::new(cfg.mu.build(cfg.d)?, CovSpec::Identity)?;
    let spec = SummandSpec::Mmd { kernel: Kernel::Rbf { gamma: cfg.gamma } };
    let src = FnSource(|s: RngStream| {
        PairedSample::draw_from(&model, cfg.n, s, true)
            .and_then(|data| u_statistic(&spec, &data))
            .unwrap_or(f64::NAN)
    });
    let dn = simulate(&src, 1, cfg.reps, cfg.base_seed)?.pooled_sorted();
    if dn.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("D_n simulation failed"));
    }
    let eps_stream = RngStream::new(cfg.base_seed, u64::MAX, 2);
    let fit_stream = RngStream::new(cfg.base_seed, u64::MAX, 3);
    let unk_stream = RngStream::new(cfg.base_seed, u64::MAX, 4);
    let ks_se = 0.5 * (2.0 / cfg.reps as f64).sqrt();
    cfg.degrees
        .iter()
        .map(|&k| {
            let map = FeatureMap::MmdRbf(RbfBasis::new(cfg.gamma, cfg.d, k)?);
            let e = epsilon_k_all(&map, &model, &[1, 2, 3], cfg.n_mc, eps_stream)?;
            let rep = fit_truncated_rep(&map, &model, cfg.n_fit, fit_stream)?;
            let lm: f64 = rep.lambda.iter().zip(&rep.mu).map(|(l, m)| l * m * m).sum();
            let mut unk = rep.simulate(cfg.n, lm, cfg.reps, unk_stream)?;
            unk.sort_by(f64::total_cmp);
            let ks = crate::limits::two_sample_ks(&unk, &dn);
            log::info!("spectral K={k}: eps_2={:.3e} ks={ks:.4}", e[1].value);
            Ok(SpectralRow {
                degree: k,
                eps: [e[0], e[1], e[2]],
                ks_unk_vs_dn: ks,
                ks_se,
                sum_tau_sq: rep.sum_tau_sq(),
                tau: rep.tau,
            })
        })
        .collect()
}

pub fn write_spectral_csv<W: Write>(rows: &[SpectralRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SPECTRAL_HEADER).map_err(io_err)?;
    for r in rows {
        let top: Vec<String> = r.tau.iter().take(5).map(|t| fmt(*t)).collect();
        w.write_record([
            r.degree.to_string(),
            fmt(r.eps[0].value),
            fmt(r.eps[1].value),
            fmt(r.eps[2].value),
            fmt(r.ks_unk_vs_dn),
            top.join(";"),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn stub_theory(ms: MomentSet, n: usize) -> Theory {
        let limits = build_limits(&ms, n, &[LimitKind::Gauss, LimitKind::Gamma, LimitKind::ChiSq1], None, 0, RngStream::new(0, 0, 0)).unwrap();
        Theory { moments: ms, gamma: None, limits }
    }

    #[test]
    fn constant_stub_gives_step_survival() {
        let src = FnSource(|_| 0.75);
        let sim = simulate(&src, 3, 5, 1).unwrap();
        let ms = MomentSet::closed(0.75, 0.0, 0.0);
        let tc = tail_curve_from(&sim, &stub_theory(ms, 10), &GridRule::Auto { points: 11 }, 10).unwrap();
        for (i, &t) in tc.thresholds.iter().enumerate() {
            let expect = if t < 0.75 { 1.0 } else { 0.0 };
            assert_eq!(tc.emp_mean[i], expect);
            assert_eq!(tc.emp_ci_lo[i], tc.emp_ci_hi[i]);
        }
        for kind in [LimitKind::Gauss, LimitKind::Gamma, LimitKind::ChiSq1] {
            assert_eq!(tc.ks(kind), Some(0.0));
        }
    }

    #[test]
    fn survival_is_monotone() {
        let src = FnSource(|s: RngStream| s.rng().sample::<f64, _>(StandardNormal));
        let sim = simulate(&src, 4, 50, 3).unwrap();
        let ms = MomentSet::closed(0.0, 25.0 / 4.0, 1.0);
        let tc = tail_curve_from(&sim, &stub_theory(ms, 100), &GridRule::Auto { points: 41 }, 100).unwrap();
        assert!(tc.emp_mean.windows(2).all(|w| w[0] >= w[1]));
        for (_, curve) in &tc.theory {
            let c = curve.as_ref().unwrap();
            assert!(c.windows(2).all(|w| w[0] >= w[1] - 1e-15));
        }
    }

    #[test]
    fn diagnose_examples() {
        let ms = MomentSet::closed(1.0, 1.0, 16.0);
        assert_eq!(diagnose(&ms, 17).regime, Regime::Boundary);
        let h0 = MomentSet::closed(0.0, 0.0, 1.0);
        assert_eq!(diagnose(&h0, 17).regime, Regime::DegenerateDominant);
        let small = MomentSet::closed(1.0, 1.0, 1.0);
        assert_eq!(diagnose(&small, 101).regime, Regime::GaussianDominant);
        assert_eq!(diagnose(&small, 101).predicted_limit, "nondegenerate_limit");
    }

    #[test]
    fn rho_order_examples() {
        let o = predict_rho_order(StatKind::KsdRbf, 10_000, 10_000.0, 2.0).unwrap();
        assert_eq!(o.gamma_regime, BandwidthRegime::Large);
        assert!((o.order.unwrap() - 51.0).abs() < 1e-9);
        let o = predict_rho_order(StatKind::KsdRbf, 10_000, 100.0, 2.0).unwrap();
        assert_eq!(o.gamma_regime, BandwidthRegime::Critical);
        assert!((o.order.unwrap() - 31.0).abs() < 1e-9);
        let r = |d: usize| predict_rho_order(StatKind::KsdRbf, d, d as f64, 2.0).unwrap().order.unwrap();
        let ratio = r(4000) / r(1000);
        assert!((1.8..=2.2).contains(&ratio));
        let tie = predict_rho_order(StatKind::MmdRbf, 10_000, 4.0, 2.0).unwrap();
        assert_eq!(tie.gamma_below_mu2, Some(false));
        let none = predict_rho_order(StatKind::MmdRbf, 10_000, 1000.0, 100.0).unwrap();
        assert_eq!(none.order, None);
        assert_eq!(none.label(), "large_gamma/gamma_below_mu2");
    }

    #[test]
    fn n_rules() {
        assert_eq!(NRule::Fixed.n_for(100, 50), 50);
        assert_eq!(NRule::SqrtD { coef: 5.0 }.n_for(64, 0), 40);
        assert_eq!(NRule::DSquared { coef: 0.5 }.n_for(4, 0), 8);
    }

    #[test]
    fn csv_headers_are_exact() {
        let src = FnSource(|s: RngStream| s.rng().random::<f64>());
        let sim = simulate(&src, 2, 10, 5).unwrap();
        let ms = MomentSet::closed(0.5, 0.5, 1.0);
        let tc = tail_curve_from(&sim, &stub_theory(ms, 10), &GridRule::Auto { points: 5 }, 10).unwrap();
        let mut buf = Vec::new();
        tc.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "threshold,emp_mean,emp_ci_lo,emp_ci_hi,gauss,gamma,chisq1,wchisq");
        assert!(lines.next().unwrap().ends_with(','));

        let row = sweep_row_from("d", 4.0, 10, &sim, &stub_theory(ms, 10)).unwrap();
        let mut buf = Vec::new();
        SweepResult { rows: vec![row] }.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "swept_param,value,gamma,ks_gauss,ks_gauss_sd,ks_gamma,ks_gamma_sd,ks_chisq1,ks_chisq1_sd,rho_d,regime"
        );

        let mut buf = Vec::new();
        write_ratios_csv(&[RatioRow { d: 3, ratio_cond: None, ratio_full: Some(1.0) }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "d,ratio_cond,ratio_full\n3,,1\n");
    }

    #[test]
    fn validation_names_keys() {
        let mut cfg = ExperimentConfig::new(StatKind::KsdRbf, 3, 10);
        cfg.seeds = 0;
        match cfg.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "seeds"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn model_source_is_deterministic() {
        let mut cfg = ExperimentConfig::new(StatKind::MmdRbf, 3, 12);
        cfg.seeds = 2;
        cfg.reps_per_seed = 4;
        let a = simulate(&ModelSource::new(&cfg).unwrap(), 2, 4, cfg.base_seed).unwrap();
        let b = simulate(&ModelSource::new(&cfg).unwrap(), 2, 4, cfg.base_seed).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.gammas.len(), 8);
    }
}
