//! JSON experiment configuration.
//!
//! Parsing is strict: unknown keys are errors, and every failure is reported
//! as [`Error::Config`] with the dotted path of the offending key. Optional
//! fields that are absent stay absent when a config is written back out, so
//! a file in canonical form (as produced by [`to_canonical_json`])
//! round-trips byte for byte.
//!
//! Defaults for absent fields: `n` 50, `seeds` 10, `reps_per_seed` 200,
//! `grid` auto with 101 points, `limits` gauss/gamma/chisq1 (plus wchisq for
//! linear MMD), `base_seed` 20240, `freeze_bandwidth` false, `moments` auto,
//! `wchisq_reps` 10^6, `cov` identity, `kernel` RBF with the median
//! heuristic (linear for `mmd-linear`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    ExperimentConfig, GridRule, LimitKind, MomentMethod, MuPattern, NRule, SpectralConfig, StatKind,
    SweepVar,
};
use crate::kernels::BandwidthRule;
use crate::model::CovSpec;

fn is_none<T>(v: &Option<T>) -> bool {
    v.is_none()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub stat: StatKind,
    #[serde(default, skip_serializing_if = "is_none")]
    pub kernel: Option<KernelConfig>,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub reps_per_seed: Option<usize>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub limits: Option<Vec<LimitKind>>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub base_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub freeze_bandwidth: Option<bool>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub moments: Option<MomentsConfig>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub wchisq_reps: Option<usize>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub spectral: Option<SpectralSection>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub ratios: Option<RatiosConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub kernel: KernelName,
    #[serde(default, skip_serializing_if = "is_none")]
    pub bandwidth: Option<BandwidthConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BandwidthConfig {
    Fixed(f64),
    Median,
    PowerOfD { coef: f64, exp: f64 },
}

impl From<BandwidthConfig> for BandwidthRule {
    fn from(b: BandwidthConfig) -> Self {
        match b {
            BandwidthConfig::Fixed(g) => BandwidthRule::Fixed(g),
            BandwidthConfig::Median => BandwidthRule::MedianHeuristic,
            BandwidthConfig::PowerOfD { coef, exp } => BandwidthRule::PowerOfD { coef, exponent: exp },
        }
    }
}

impl From<BandwidthRule> for BandwidthConfig {
    fn from(b: BandwidthRule) -> Self {
        match b {
            BandwidthRule::Fixed(g) => BandwidthConfig::Fixed(g),
            BandwidthRule::MedianHeuristic => BandwidthConfig::Median,
            BandwidthRule::PowerOfD { coef, exponent } => BandwidthConfig::PowerOfD { coef, exp: exponent },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub mu: MuConfig,
    #[serde(default, skip_serializing_if = "is_none")]
    pub cov: Option<CovConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuConfig {
    First(FirstMu),
    Vector(VectorMu),
    Coordinate(CoordinateMu),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstMu {
    pub first: f64,
    #[serde(default, skip_serializing_if = "is_none")]
    pub rest_zero: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorMu {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateMu {
    pub coordinate: Coordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coordinate {
    pub index: usize,
    pub value: f64,
}

impl MuConfig {
    pub fn first(v: f64) -> Self {
        MuConfig::First(FirstMu { first: v, rest_zero: Some(true) })
    }

    pub fn coordinate(index: usize, value: f64) -> Self {
        MuConfig::Coordinate(CoordinateMu { coordinate: Coordinate { index, value } })
    }

    fn pattern(&self) -> Result<MuPattern> {
        Ok(match self {
            MuConfig::First(FirstMu { rest_zero: Some(false), .. }) => {
                return Err(Error::config("model.mu.rest_zero", "only `true` is supported"));
            }
            MuConfig::First(f) => MuPattern::First(f.first),
            MuConfig::Vector(v) => MuPattern::Vector(v.vector.clone()),
            MuConfig::Coordinate(c) => MuPattern::Coordinate { index: c.coordinate.index, value: c.coordinate.value },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CovConfig {
    Identity {},
    Diagonal(Vec<f64>),
    Spiked { sigma2: f64, rho: f64 },
}

impl From<&CovConfig> for CovSpec {
    fn from(c: &CovConfig) -> Self {
        match c {
            CovConfig::Identity {} => CovSpec::Identity,
            CovConfig::Diagonal(v) => CovSpec::Diagonal(v.clone()),
            CovConfig::Spiked { sigma2, rho } => CovSpec::Spiked { sigma2: *sigma2, rho: *rho },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    Auto {
        #[serde(default, skip_serializing_if = "is_none")]
        points: Option<usize>,
    },
    Range { lo: f64, hi: f64, points: usize },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MomentsConfig {
    Auto,
    Closed,
    Mc {
        #[serde(default, skip_serializing_if = "is_none")]
        n_mc: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub vary: VaryConfig,
    #[serde(default, skip_serializing_if = "is_none")]
    pub n_rule: Option<NRuleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VaryConfig {
    D(Vec<usize>),
    Gamma(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NRuleConfig {
    Fixed,
    SqrtD { coef: f64 },
    DSquared { coef: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    #[serde(default, skip_serializing_if = "is_none")]
    pub degrees: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub n_fit: Option<usize>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub n_mc: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatiosConfig {
    pub d_values: Vec<usize>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub n_mc: Option<usize>,
    #[serde(default, skip_serializing_if = "is_none")]
    pub seeds: Option<usize>,
}

/// Resolved moment-ratio sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioPlan {
    pub d_values: Vec<usize>,
    pub n_mc: usize,
    pub seeds: usize,
}

impl ConfigFile {
    /// A config with only the required fields set.
    pub fn minimal(stat: StatKind, d: usize, mu: MuConfig) -> Self {
        ConfigFile {
            stat,
            kernel: None,
            model: ModelConfig { d, mu, cov: None },
            n: None,
            seeds: None,
            reps_per_seed: None,
            grid: None,
            limits: None,
            base_seed: None,
            freeze_bandwidth: None,
            moments: None,
            wchisq_reps: None,
            sweep: None,
            spectral: None,
            ratios: None,
        }
    }

    fn bandwidth(&self) -> Result<BandwidthRule> {
        let default_kernel = match self.stat {
            StatKind::MmdLinear => KernelName::Linear,
            _ => KernelName::Rbf,
        };
        let (name, bw) = match &self.kernel {
            Some(k) => (k.kernel, k.bandwidth),
            None => (default_kernel, None),
        };
        if name != default_kernel {
            return Err(Error::config(
                "kernel.kernel",
                format!("stat `{}` needs the {:?} kernel", self.stat.name(), default_kernel).to_lowercase(),
            ));
        }
        match (name, bw) {
            (KernelName::Linear, Some(_)) => {
                Err(Error::config("kernel.bandwidth", "the linear kernel takes no bandwidth"))
            }
            (_, Some(b)) => Ok(b.into()),
            (_, None) => Ok(BandwidthRule::MedianHeuristic),
        }
    }

    pub fn to_experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.stat, self.model.d, self.n.unwrap_or(50));
        cfg.bandwidth = self.bandwidth()?;
        cfg.mu = self.model.mu.pattern()?;
        cfg.cov = self.model.cov.as_ref().map(CovSpec::from).unwrap_or(CovSpec::Identity);
        if let Some(s) = self.seeds {
            cfg.seeds = s;
        }
        if let Some(r) = self.reps_per_seed {
            cfg.reps_per_seed = r;
        }
        if let Some(g) = &self.grid {
            cfg.grid = match g {
                GridConfig::Auto { points } => GridRule::Auto { points: points.unwrap_or(101) },
                GridConfig::Range { lo, hi, points } => GridRule::Range { lo: *lo, hi: *hi, points: *points },
                GridConfig::Explicit(v) => GridRule::Explicit(v.clone()),
            };
        }
        cfg.limits = match &self.limits {
            Some(l) => l.clone(),
            None if self.stat == StatKind::MmdLinear => LimitKind::ALL.to_vec(),
            None => vec![LimitKind::Gauss, LimitKind::Gamma, LimitKind::ChiSq1],
        };
        if let Some(b) = self.base_seed {
            cfg.base_seed = b;
        }
        cfg.freeze_bandwidth = self.freeze_bandwidth.unwrap_or(false);
        cfg.moments = match self.moments.unwrap_or(MomentsConfig::Auto) {
            MomentsConfig::Auto => MomentMethod::Auto,
            MomentsConfig::Closed => MomentMethod::Closed,
            MomentsConfig::Mc { n_mc } => MomentMethod::MonteCarlo { n_mc },
        };
        if let Some(w) = self.wchisq_reps {
            cfg.wchisq_reps = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_sweep(&self) -> Result<(SweepVar, NRule)> {
        let sw = self.sweep.as_ref().ok_or_else(|| Error::config("sweep", "missing sweep section"))?;
        let vary = match &sw.vary {
            VaryConfig::D(v) => SweepVar::D(v.clone()),
            VaryConfig::Gamma(v) => SweepVar::Gamma(v.clone()),
        };
        let len = match &vary {
            SweepVar::D(v) => v.len(),
            SweepVar::Gamma(v) => v.len(),
        };
        if len < 2 {
            return Err(Error::config("sweep.vary", "needs at least two values"));
        }
        let rule = match sw.n_rule.unwrap_or(NRuleConfig::Fixed) {
            NRuleConfig::Fixed => NRule::Fixed,
            NRuleConfig::SqrtD { coef } => NRule::SqrtD { coef },
            NRuleConfig::DSquared { coef } => NRule::DSquared { coef },
        };
        if let NRule::SqrtD { coef } | NRule::DSquared { coef } = rule {
            if !(coef > 0.0 && coef.is_finite()) {
                return Err(Error::config("sweep.n_rule", "coef must be positive"));
            }
        }
        Ok((vary, rule))
    }

    pub fn to_spectral(&self) -> Result<SpectralConfig> {
        if self.stat != StatKind::MmdRbf {
            return Err(Error::config("stat", "the spectral study supports mmd-rbf only"));
        }
        let gamma = match self.bandwidth()? {
            BandwidthRule::Fixed(g) => g,
            BandwidthRule::PowerOfD { coef, exponent } => coef * (self.model.d as f64).powf(exponent),
            BandwidthRule::MedianHeuristic => {
                return Err(Error::config("kernel.bandwidth", "the spectral study needs a deterministic bandwidth"));
            }
        };
        let mut sc = SpectralConfig::new(self.model.d, gamma, self.n.unwrap_or(50));
        sc.mu = self.model.mu.pattern()?;
        if self.model.cov.as_ref().is_some_and(|c| !CovSpec::from(c).is_identity()) {
            return Err(Error::config("model.cov", "the spectral study uses an identity covariance"));
        }
        if let Some(b) = self.base_seed {
            sc.base_seed = b;
        }
        if let Some(s) = &self.spectral {
            if let Some(k) = &s.degrees {
                sc.degrees = k.clone();
            }
            if let Some(r) = s.reps {
                sc.reps = r;
            }
            if let Some(v) = s.n_fit {
                sc.n_fit = v;
            }
            if let Some(v) = s.n_mc {
                sc.n_mc = v;
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_ratios(&self) -> Result<RatioPlan> {
        let r = self.ratios.as_ref().ok_or_else(|| Error::config("ratios", "missing ratios section"))?;
        if r.d_values.is_empty() || r.d_values.contains(&0) {
            return Err(Error::config("ratios.d_values", "must be non-empty positive dimensions"));
        }
        let plan = RatioPlan { d_values: r.d_values.clone(), n_mc: r.n_mc.unwrap_or(4000), seeds: r.seeds.unwrap_or(5) };
        if plan.n_mc < 10 {
            return Err(Error::config("ratios.n_mc", "must be at least 10"));
        }
        if plan.seeds == 0 {
            return Err(Error::config("ratios.seeds", "must be at least 1"));
        }
        Ok(plan)
    }
}

/// Strict parse of a config document.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path.is_empty() { ".".to_string() } else { path }, e.into_inner().to_string())
    })
}

/// Read and parse a config file; I/O failures are reported against its path.
pub fn load_config_file(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
    parse_config(&text)
}

/// Load, parse and validate an experiment config.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    load_config_file(path)?.to_experiment()
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_canonical_json(cfg: &ConfigFile) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"{
  "stat": "ksd-rbf",
  "kernel": {"kernel": "rbf", "bandwidth": "median"},
  "model": {"d": 20, "mu": {"first": 2.0, "rest_zero": true}, "cov": {"identity": {}}},
  "n": 50,
  "seeds": 3,
  "limits": ["gauss", "gamma"]
}"#;

    #[test]
    fn parses_documented_forms() {
        let c = parse_config(FULL).unwrap();
        let e = c.to_experiment().unwrap();
        assert_eq!(e.mu, MuPattern::First(2.0));
        assert_eq!(e.seeds, 3);
        assert_eq!(e.reps_per_seed, 200);
        assert_eq!(e.limits, vec![LimitKind::Gauss, LimitKind::Gamma]);
        for bw in [r#"{"fixed": 2.0}"#, r#""median""#, r#"{"power_of_d": {"coef": 1.0, "exp": 0.5}}"#] {
            let text = format!(
                r#"{{"stat": "mmd-rbf", "kernel": {{"kernel": "rbf", "bandwidth": {bw}}}, "model": {{"d": 4, "mu": {{"vector": [1, 0, 0, 0]}}, "cov": {{"spiked": {{"sigma2": 0.5, "rho": 0.5}}}}}}}}"#
            );
            parse_config(&text).unwrap().to_experiment().unwrap();
        }
        let diag = r#"{"stat": "mmd-linear", "model": {"d": 2, "mu": {"coordinate": {"index": 1, "value": 3}}, "cov": {"diagonal": [1, 2]}}}"#;
        let e = parse_config(diag).unwrap().to_experiment().unwrap();
        assert_eq!(e.limits.len(), 4);
        assert_eq!(e.cov, CovSpec::Diagonal(vec![1.0, 2.0]));
    }

    #[test]
    fn unknown_keys_are_rejected_with_paths() {
        let bad = FULL.replace("\"seeds\"", "\"sedes\"");
        assert!(matches!(parse_config(&bad), Err(Error::Config { .. })));
        let bad = FULL.replace("{\"identity\": {}}", "{\"identity\": {\"x\": 1}}");
        match parse_config(&bad) {
            Err(Error::Config { key, .. }) => assert!(key.starts_with("model.cov"), "{key}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seeds_zero_names_the_key() {
        let bad = FULL.replace("\"seeds\": 3", "\"seeds\": 0");
        match parse_config(&bad).unwrap().to_experiment() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "seeds"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimal_config_round_trips() {
        let c = ConfigFile::minimal(StatKind::KsdRbf, 2000, MuConfig::first(2.0));
        let text = to_canonical_json(&c);
        let back = parse_config(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(to_canonical_json(&back), text);
        let full = to_canonical_json(&parse_config(FULL).unwrap());
        assert_eq!(to_canonical_json(&parse_config(&full).unwrap()), full);
    }

    #[test]
    fn kernel_must_match_stat() {
        let bad = FULL.replace("\"kernel\": \"rbf\"", "\"kernel\": \"linear\"");
        match parse_config(&bad).unwrap().to_experiment() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "kernel.kernel"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_section() {
        let text = FULL.replace(
            "\"n\": 50,",
            "\"n\": 50, \"sweep\": {\"vary\": {\"gamma\": [2, 4]}, \"n_rule\": {\"sqrt_d\": {\"coef\": 2}}},",
        );
        let (vary, rule) = parse_config(&text).unwrap().to_sweep().unwrap();
        assert_eq!(vary, SweepVar::Gamma(vec![2.0, 4.0]));
        assert_eq!(rule, NRule::SqrtD { coef: 2.0 });
    }
}
