//! Command-line front end. Flags override values read from `--config`.
//!
//! Exit codes: 0 on success, 2 on a configuration or usage error (the
//! message names the offending key or path), 1 on a runtime failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{
    load_config_file, to_canonical_json, BandwidthConfig, ConfigFile, CovConfig, KernelConfig, KernelName,
    MomentsConfig, MuConfig, NRuleConfig, RatiosConfig, SpectralSection, SweepConfig, VaryConfig,
};
use crate::error::{Error, Result};
use crate::experiments::{
    diagnose, model_moments, run_kdist_sweep, run_moment_ratio_sweep, run_spectral_convergence, run_tail_curve,
    write_ratios_csv, write_spectral_csv, ExperimentConfig, LimitKind, StatKind, MOMENT_MEDIAN_POINTS,
};
use crate::kernels::{median_heuristic_pooled, resolve_bandwidth, BandwidthRule};
use crate::model::RngStream;
use crate::moments::{empirical_moments_with, MomentOptions};
use crate::ustat::PairedSample;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "HIDIM_USTAT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "hidim-ustat",
    version,
    about = "Moments, limit laws and Monte-Carlo experiments for MMD and KSD U-statistics",
    after_help = "Config files are strict JSON (unknown keys are errors). Absent fields default to: \
n 50, seeds 10, reps_per_seed 200, grid auto (101 points), limits gauss/gamma/chisq1 \
(plus wchisq for mmd-linear), base_seed 20240, moments auto, wchisq_reps 1000000, cov identity, \
kernel rbf with the median heuristic. Set HIDIM_USTAT_THREADS to cap the worker count."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moments of the summand as JSON.
    Moments(CommonArgs),
    /// Survival curves of D_n against the limit laws (CSV).
    Tailcurve(CommonArgs),
    /// Kolmogorov distances over a grid of d or gamma (CSV).
    Sweep(SweepArgs),
    /// Regime of the phase transition as JSON.
    Diagnose(CommonArgs),
    /// Truncated spectral representation study (CSV).
    Spectral(SpectralArgs),
    /// Third-moment ratios over dimensions (CSV).
    Ratios(RatiosArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ksd-rbf | mmd-rbf | mmd-linear.
    #[arg(long)]
    pub stat: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// fixed:G | median | dpow:COEF,EXP.
    #[arg(long)]
    pub gamma: Option<String>,
    /// identity | spiked:SIGMA2,RHO | diagonal:V1,V2,...
    #[arg(long)]
    pub cov: Option<String>,
    /// Mean (v, 0, ..., 0).
    #[arg(long, conflicts_with = "mu_second")]
    pub mu_first: Option<f64>,
    /// Mean (0, v, 0, ..., 0).
    #[arg(long)]
    pub mu_second: Option<f64>,
    /// auto | closed | mc.
    #[arg(long)]
    pub method: Option<String>,
    /// Monte-Carlo sample size for `--method mc`.
    #[arg(long)]
    pub n_mc: Option<usize>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated subset of gauss,gamma,chisq1,wchisq.
    #[arg(long)]
    pub limits: Option<String>,
    /// Base seed; determines every stochastic output.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (required for CSV; JSON defaults to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the effective config as JSON and exit.
    #[arg(long)]
    pub emit_config: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dimensions to sweep, comma separated.
    #[arg(long, conflicts_with = "vary_gamma")]
    pub vary_d: Option<String>,
    /// Bandwidths to sweep at fixed d, comma separated.
    #[arg(long)]
    pub vary_gamma: Option<String>,
    /// fixed | sqrtd:COEF | dsq:COEF.
    #[arg(long)]
    pub n_rule: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Per-coordinate degree caps, comma separated.
    #[arg(long)]
    pub degrees: Option<String>,
    #[arg(long)]
    pub n_fit: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RatiosArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dimensions, comma separated.
    #[arg(long)]
    pub d_values: Option<String>,
}

fn flag_err(key: &str, value: &str, expect: &str) -> Error {
    Error::config(key, format!("cannot parse `{value}`; expected {expect}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| flag_err(key, s, "a comma-separated list of numbers")))
        .collect()
}

pub fn parse_gamma_flag(s: &str) -> Result<BandwidthConfig> {
    let expect = "fixed:G, median or dpow:COEF,EXP";
    if s == "median" {
        return Ok(BandwidthConfig::Median);
    }
    match s.split_once(':') {
        Some(("fixed", g)) => g.parse().map(BandwidthConfig::Fixed).map_err(|_| flag_err("gamma", s, expect)),
        Some(("dpow", rest)) => match parse_list::<f64>("gamma", rest)?.as_slice() {
            [coef, exp] => Ok(BandwidthConfig::PowerOfD { coef: *coef, exp: *exp }),
            _ => Err(flag_err("gamma", s, expect)),
        },
        _ => Err(flag_err("gamma", s, expect)),
    }
}

pub fn parse_cov_flag(s: &str) -> Result<CovConfig> {
    let expect = "identity, spiked:SIGMA2,RHO or diagonal:V1,V2,...";
    if s == "identity" {
        return Ok(CovConfig::Identity {});
    }
    match s.split_once(':') {
        Some(("spiked", rest)) => match parse_list::<f64>("cov", rest)?.as_slice() {
            [sigma2, rho] => Ok(CovConfig::Spiked { sigma2: *sigma2, rho: *rho }),
            _ => Err(flag_err("cov", s, expect)),
        },
        Some(("diagonal", rest)) => Ok(CovConfig::Diagonal(parse_list("cov", rest)?)),
        _ => Err(flag_err("cov", s, expect)),
    }
}

fn parse_n_rule(s: &str) -> Result<NRuleConfig> {
    let expect = "fixed, sqrtd:COEF or dsq:COEF";
    if s == "fixed" {
        return Ok(NRuleConfig::Fixed);
    }
    let coef = |c: &str| c.parse::<f64>().map_err(|_| flag_err("n-rule", s, expect));
    match s.split_once(':') {
        Some(("sqrtd", c)) => Ok(NRuleConfig::SqrtD { coef: coef(c)? }),
        Some(("dsq", c)) => Ok(NRuleConfig::DSquared { coef: coef(c)? }),
        _ => Err(flag_err("n-rule", s, expect)),
    }
}

/// Merge the config file (if any) with flag overrides.
pub fn effective_config(a: &CommonArgs) -> Result<ConfigFile> {
    let mut cfg = match &a.config {
        Some(p) => load_config_file(p)?,
        None => {
            let stat = a.stat.as_deref().ok_or_else(|| Error::config("stat", "required without --config"))?;
            let stat = StatKind::parse(stat).ok_or_else(|| flag_err("stat", stat, "ksd-rbf, mmd-rbf or mmd-linear"))?;
            let d = a.d.ok_or_else(|| Error::config("d", "required without --config"))?;
            ConfigFile::minimal(stat, d, MuConfig::first(2.0))
        }
    };
    if let Some(s) = &a.stat {
        cfg.stat = StatKind::parse(s).ok_or_else(|| flag_err("stat", s, "ksd-rbf, mmd-rbf or mmd-linear"))?;
    }
    if let Some(d) = a.d {
        cfg.model.d = d;
    }
    if let Some(n) = a.n {
        cfg.n = Some(n);
    }
    if let Some(g) = &a.gamma {
        let name = if cfg.stat == StatKind::MmdLinear { KernelName::Linear } else { KernelName::Rbf };
        cfg.kernel = Some(KernelConfig { kernel: name, bandwidth: Some(parse_gamma_flag(g)?) });
    }
    if let Some(c) = &a.cov {
        cfg.model.cov = Some(parse_cov_flag(c)?);
    }
    if let Some(v) = a.mu_first {
        cfg.model.mu = MuConfig::first(v);
    }
    if let Some(v) = a.mu_second {
        cfg.model.mu = MuConfig::coordinate(1, v);
    }
    if let Some(m) = &a.method {
        cfg.moments = Some(match m.as_str() {
            "auto" => MomentsConfig::Auto,
            "closed" => MomentsConfig::Closed,
            "mc" => MomentsConfig::Mc { n_mc: a.n_mc },
            _ => return Err(flag_err("method", m, "auto, closed or mc")),
        });
    } else if let Some(n_mc) = a.n_mc {
        cfg.moments = Some(MomentsConfig::Mc { n_mc: Some(n_mc) });
    }
    if let Some(s) = a.seeds {
        cfg.seeds = Some(s);
    }
    if let Some(r) = a.reps {
        cfg.reps_per_seed = Some(r);
    }
    if let Some(l) = &a.limits {
        let kinds = l
            .split(',')
            .map(|p| LimitKind::parse(p.trim()).ok_or_else(|| flag_err("limits", l, "gauss, gamma, chisq1, wchisq")))
            .collect::<Result<Vec<_>>>()?;
        cfg.limits = Some(kinds);
    }
    if let Some(s) = a.seed {
        cfg.base_seed = Some(s);
    }
    Ok(cfg)
}

fn json_out(a: &CommonArgs, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))? + "\n";
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn csv_out(a: &CommonArgs) -> Result<BufWriter<File>> {
    let p = a.out.as_ref().ok_or_else(|| Error::config("out", "CSV output needs --out FILE"))?;
    File::create(p)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn emit(a: &CommonArgs, cfg: &ConfigFile) -> Result<()> {
    let text = to_canonical_json(cfg);
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Resolve the bandwidth for one-shot commands; the median heuristic uses a
/// pilot sample from the configured model.
fn pilot_gamma(cfg: &ExperimentConfig) -> Result<Option<f64>> {
    if !cfg.stat.uses_bandwidth() {
        return Ok(None);
    }
    match cfg.bandwidth {
        BandwidthRule::MedianHeuristic => {
            let model = cfg.model()?;
            let m = cfg.n.clamp(2, MOMENT_MEDIAN_POINTS);
            let stream = RngStream::new(cfg.base_seed, u64::MAX, 5);
            let data = PairedSample::draw_from(&model, m, stream, cfg.stat != StatKind::KsdRbf)?;
            let mut pooled = vec![data.x().view()];
            if let Some(y) = data.y() {
                pooled.push(y.view());
            }
            let mb = median_heuristic_pooled(&pooled)?;
            if mb.degenerate {
                return Err(Error::DegenerateBandwidth);
            }
            Ok(Some(mb.gamma))
        }
        rule => Ok(Some(resolve_bandwidth(rule, cfg.d, &[])?)),
    }
}

fn cmd_moments(a: &CommonArgs, cfg: &ConfigFile) -> Result<()> {
    let e = cfg.to_experiment()?;
    let gamma = pilot_gamma(&e)?;
    let ms = match e.moments {
        crate::experiments::MomentMethod::MonteCarlo { n_mc } => {
            let model = e.model()?;
            let spec = e.summand(gamma.unwrap_or(1.0), &model)?;
            let stream = RngStream::new(e.base_seed, u64::MAX, 6);
            empirical_moments_with(&spec, &model, n_mc.unwrap_or(4000), stream, &MomentOptions::default())?.moments
        }
        _ => model_moments(&e, gamma)?,
    };
    log::info!("moments at gamma = {gamma:?}");
    json_out(a, &ms.to_json(e.n))
}

fn cmd_diagnose(a: &CommonArgs, cfg: &ConfigFile) -> Result<()> {
    let e = cfg.to_experiment()?;
    let gamma = pilot_gamma(&e)?;
    let ms = model_moments(&e, gamma)?;
    let dg = diagnose(&ms, e.n);
    let rho = |v: f64| if v.is_finite() { json!(v) } else { json!("inf") };
    json_out(
        a,
        &json!({
            "rho_d": rho(dg.rho_d),
            "sqrt_n_minus_1": dg.sqrt_n_minus_1,
            "regime": dg.regime.name(),
            "predicted_limit": dg.predicted_limit,
            "gamma": gamma,
            "n": e.n,
            "moments": ms.to_json(e.n),
        }),
    )
}

fn cmd_tailcurve(a: &CommonArgs, cfg: &ConfigFile) -> Result<()> {
    let e = cfg.to_experiment()?;
    let out = csv_out(a)?;
    let tc = run_tail_curve(&e)?;
    tc.write_csv(out)?;
    let ks: serde_json::Map<String, Value> =
        tc.ks_pooled.iter().map(|(k, v)| (format!("ks_{}", k.name()), json!(v))).collect();
    eprintln!(
        "{}",
        json!({
            "ks": ks,
            "pooled_skewness": tc.pooled_skewness,
            "gamma": tc.gamma,
            "grid_widened": tc.grid_widened,
            "moments": tc.moments.to_json(e.n),
        })
    );
    Ok(())
}

fn cmd_sweep(s: &SweepArgs, cfg: &mut ConfigFile) -> Result<()> {
    if let Some(v) = &s.vary_d {
        let sw = cfg.sweep.get_or_insert(SweepConfig { vary: VaryConfig::D(vec![]), n_rule: None });
        sw.vary = VaryConfig::D(parse_list("vary-d", v)?);
    }
    if let Some(v) = &s.vary_gamma {
        let sw = cfg.sweep.get_or_insert(SweepConfig { vary: VaryConfig::Gamma(vec![]), n_rule: None });
        sw.vary = VaryConfig::Gamma(parse_list("vary-gamma", v)?);
    }
    if let Some(r) = &s.n_rule {
        let rule = parse_n_rule(r)?;
        cfg.sweep
            .as_mut()
            .ok_or_else(|| Error::config("sweep", "--n-rule needs --vary-d or --vary-gamma"))?
            .n_rule = Some(rule);
    }
    if s.common.emit_config {
        return emit(&s.common, cfg);
    }
    let e = cfg.to_experiment()?;
    let (vary, rule) = cfg.to_sweep()?;
    let out = csv_out(&s.common)?;
    run_kdist_sweep(&e, &vary, rule)?.write_csv(out)
}

fn cmd_spectral(s: &SpectralArgs, cfg: &mut ConfigFile) -> Result<()> {
    let degrees = s.degrees.as_deref().map(|v| parse_list("degrees", v)).transpose()?;
    if degrees.is_some() || s.n_fit.is_some() || s.common.reps.is_some() || s.common.n_mc.is_some() {
        let sec = cfg.spectral.get_or_insert(SpectralSection { degrees: None, reps: None, n_fit: None, n_mc: None });
        if degrees.is_some() {
            sec.degrees = degrees;
        }
        if s.n_fit.is_some() {
            sec.n_fit = s.n_fit;
        }
        if s.common.reps.is_some() {
            sec.reps = s.common.reps;
            cfg.reps_per_seed = None;
        }
        if s.common.n_mc.is_some() {
            sec.n_mc = s.common.n_mc;
            cfg.moments = None;
        }
    }
    if s.common.emit_config {
        return emit(&s.common, cfg);
    }
    let sc = cfg.to_spectral()?;
    let out = csv_out(&s.common)?;
    write_spectral_csv(&run_spectral_convergence(&sc)?, out)
}

fn cmd_ratios(r: &RatiosArgs, cfg: &mut ConfigFile) -> Result<()> {
    if let Some(v) = &r.d_values {
        cfg.ratios = Some(RatiosConfig { d_values: parse_list("d-values", v)?, n_mc: None, seeds: None });
    }
    if let Some(sec) = cfg.ratios.as_mut() {
        if r.common.n_mc.is_some() {
            sec.n_mc = r.common.n_mc;
            cfg.moments = None;
        }
        if r.common.seeds.is_some() {
            sec.seeds = r.common.seeds;
            cfg.seeds = None;
        }
    }
    if r.common.emit_config {
        return emit(&r.common, cfg);
    }
    let e = cfg.to_experiment()?;
    let plan = cfg.to_ratios()?;
    let out = csv_out(&r.common)?;
    let rows = run_moment_ratio_sweep(&e, &plan.d_values, plan.n_mc, plan.seeds)?;
    write_ratios_csv(&rows, out)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::config(THREADS_ENV, format!("must be a positive integer, got `{v}`")))?;
        // A second initialization in one process is harmless; keep the first.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Moments(a) | Command::Tailcurve(a) | Command::Diagnose(a) if a.emit_config => {
            emit(&a, &effective_config(&a)?)
        }
        Command::Moments(a) => cmd_moments(&a, &effective_config(&a)?),
        Command::Diagnose(a) => cmd_diagnose(&a, &effective_config(&a)?),
        Command::Tailcurve(a) => cmd_tailcurve(&a, &effective_config(&a)?),
        Command::Sweep(s) => cmd_sweep(&s, &mut effective_config(&s.common)?),
        Command::Spectral(s) => cmd_spectral(&s, &mut effective_config(&s.common)?),
        Command::Ratios(r) => cmd_ratios(&r, &mut effective_config(&r.common)?),
    }
}

/// Parse `args`, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            0
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
