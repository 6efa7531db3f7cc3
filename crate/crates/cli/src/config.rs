//! Experiment configuration (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sigabc::abc::PriorSpec;
use sigabc::models::Model;
use sigabc::streams::Transform;
use sigabc::summaries::FeatureMap;

use crate::error::{invalid, CliError, CliResult};

/// Simulator and its settings. Missing fields take the benchmark defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Ma2 {
        #[serde(default = "d_100")]
        t: usize,
    },
    Gbm {
        #[serde(default = "d_x0")]
        x0: f64,
        #[serde(default = "d_100")]
        t: usize,
    },
    Ricker {
        #[serde(default = "d_50")]
        t: usize,
        #[serde(default = "d_one")]
        n0: f64,
    },
    Gse {
        #[serde(default = "d_z")]
        z: u32,
        #[serde(default = "d_50f")]
        t_end: f64,
    },
}

fn d_100() -> usize {
    100
}
fn d_50() -> usize {
    50
}
fn d_50f() -> f64 {
    50.0
}
fn d_x0() -> f64 {
    10.0
}
fn d_one() -> f64 {
    1.0
}
fn d_z() -> u32 {
    100
}

impl ModelConfig {
    pub fn model(&self) -> Model {
        match *self {
            ModelConfig::Ma2 { t } => Model::Ma2 { t },
            ModelConfig::Gbm { x0, t } => Model::Gbm { x0, t },
            ModelConfig::Ricker { t, n0 } => Model::Ricker { t, n0 },
            ModelConfig::Gse { z, t_end } => Model::Gse { z, t_end },
        }
    }

    pub fn prior(&self) -> PriorSpec {
        match self {
            ModelConfig::Ma2 { .. } => PriorSpec::Ma2Triangle,
            ModelConfig::Gbm { .. } => PriorSpec::UniformBox { lo: vec![-1.0, 0.2], hi: vec![1.0, 2.0] },
            ModelConfig::Ricker { .. } => {
                PriorSpec::UniformBox { lo: vec![3.0, 0.0, 0.0], hi: vec![8.0, 20.0, 0.6] }
            }
            ModelConfig::Gse { .. } => PriorSpec::GammaPair { shape: vec![0.1, 0.2], rate: vec![2.0, 0.5] },
        }
    }

    pub fn default_theta(&self) -> Vec<f64> {
        match self {
            ModelConfig::Ma2 { .. } => vec![0.6, 0.2],
            ModelConfig::Gbm { .. } => vec![0.2, 0.5],
            ModelConfig::Ricker { .. } => vec![4.0, 10.0, 0.3],
            ModelConfig::Gse { .. } => vec![1e-2, 1e-1],
        }
    }

    /// Pre-signature pipeline used when the config gives none.
    pub fn default_pipeline(&self) -> Vec<Step> {
        use Step::*;
        match self {
            ModelConfig::Ma2 { .. } | ModelConfig::Gbm { .. } => vec![TimeAugment, RangeNormalize, BasepointAugment],
            ModelConfig::Ricker { .. } => vec![CumulativeSum, TimeAugment, RangeNormalize, BasepointAugment],
            // Channels and times already lie in [0, 1].
            ModelConfig::Gse { .. } => vec![TimeAugment, BasepointAugment],
        }
    }

    pub fn feature_map(&self, pmax: u32) -> Option<FeatureMap> {
        match self {
            ModelConfig::Ma2 { .. } | ModelConfig::Gbm { .. } => Some(FeatureMap::Powers { pmax }),
            ModelConfig::Ricker { .. } => Some(FeatureMap::Wood),
            ModelConfig::Gse { .. } => None,
        }
    }

    fn validate(&self) -> CliResult<()> {
        match *self {
            ModelConfig::Ma2 { t } | ModelConfig::Gbm { t, .. } | ModelConfig::Ricker { t, .. } if t < 2 => {
                invalid(format!("model.t must be at least 2, got {t}"))
            }
            ModelConfig::Gbm { x0, .. } if !(x0 > 0.0 && x0.is_finite()) => {
                invalid(format!("model.x0 must be positive, got {x0}"))
            }
            ModelConfig::Ricker { n0, .. } if !(n0 > 0.0 && n0.is_finite()) => {
                invalid(format!("model.n0 must be positive, got {n0}"))
            }
            ModelConfig::Gse { z, .. } if z < 2 => invalid(format!("model.z must be at least 2, got {z}")),
            ModelConfig::Gse { t_end, .. } if !(t_end > 0.0 && t_end.is_finite()) => {
                invalid(format!("model.t_end must be positive, got {t_end}"))
            }
            _ => Ok(()),
        }
    }
}

/// One pre-signature transform as named in the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    CumulativeSum,
    LeadLag,
    TimeAugment,
    RangeNormalize,
    BasepointAugment,
}

impl Step {
    pub fn transform(self) -> Transform<f64> {
        match self {
            Step::CumulativeSum => Transform::CumulativeSum,
            Step::LeadLag => Transform::LeadLag,
            Step::TimeAugment => Transform::TimeAugment,
            Step::RangeNormalize => Transform::RangeNormalize(Vec::new()),
            Step::BasepointAugment => Transform::BasepointAugment,
        }
    }
}

/// Inference method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sig,
    #[serde(alias = "sig+leadlag")]
    SigLeadlag,
    Skrr,
    Mmd,
    Wass,
    Sa,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Sig, Method::SigLeadlag, Method::Skrr, Method::Mmd, Method::Wass, Method::Sa];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sig => "sig",
            Method::SigLeadlag => "sig_leadlag",
            Method::Skrr => "skrr",
            Method::Mmd => "mmd",
            Method::Wass => "wass",
            Method::Sa => "sa",
        }
    }

    pub fn parse(s: &str) -> CliResult<Method> {
        let s = if s == "sig+leadlag" { "sig_leadlag" } else { s };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Validation(format!("unknown method {s:?}; expected one of sig, sig_leadlag, skrr, mmd, wass, sa")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_m")]
    pub m: usize,
}

fn d_n() -> usize {
    10_000
}
fn d_m() -> usize {
    100
}

impl Default for Budget {
    fn default() -> Self {
        Self { n: d_n(), m: d_m() }
    }
}

/// Signature ABC settings (`sig` and `sig_leadlag`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigConfig {
    #[serde(default)]
    pub dyadic_order: u32,
    #[serde(default = "d_rbf")]
    pub kernel: KernelKind,
    /// RBF bandwidth; the median pairwise distance of the transformed
    /// observation when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Prior-predictive simulations for range normalisation.
    #[serde(default = "d_pilot")]
    pub pilot: usize,
    /// Pipeline for `sig`; `sig_leadlag` prepends a lead-lag step.
    #[serde(default)]
    pub pipeline: Option<Vec<Step>>,
}

fn d_rbf() -> KernelKind {
    KernelKind::Rbf
}
fn d_pilot() -> usize {
    100
}

impl Default for SigConfig {
    fn default() -> Self {
        Self { dyadic_order: 0, kernel: KernelKind::Rbf, bandwidth: None, pilot: d_pilot(), pipeline: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkrrConfig {
    #[serde(default = "d_r")]
    pub r: usize,
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default = "d_alphas")]
    pub alpha_grid: Vec<f64>,
    /// Multiples of the median-heuristic bandwidth.
    #[serde(default = "d_bw_mult")]
    pub bandwidth_multipliers: Vec<f64>,
    #[serde(default)]
    pub dyadic_order: u32,
    #[serde(default)]
    pub pipeline: Option<Vec<Step>>,
}

fn d_r() -> usize {
    300
}
fn d_folds() -> usize {
    5
}
fn d_alphas() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1]
}
fn d_bw_mult() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

impl Default for SkrrConfig {
    fn default() -> Self {
        Self {
            r: d_r(),
            folds: d_folds(),
            alpha_grid: d_alphas(),
            bandwidth_multipliers: d_bw_mult(),
            dyadic_order: 0,
            pipeline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaConfig {
    #[serde(default = "d_r")]
    pub r: usize,
    /// Highest power of the candidate statistics (MA(2), GBM).
    #[serde(default = "d_pmax")]
    pub pmax: u32,
}

fn d_pmax() -> u32 {
    4
}

impl Default for SaConfig {
    fn default() -> Self {
        Self { r: d_r(), pmax: d_pmax() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmdConfig {
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WassConfig {
    /// Time weight; `V/T` from prior-predictive simulations when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "d_p")]
    pub p: u32,
    #[serde(default = "d_prior_pred")]
    pub prior_predictive: usize,
}

fn d_p() -> u32 {
    1
}
fn d_prior_pred() -> usize {
    2000
}

impl Default for WassConfig {
    fn default() -> Self {
        Self { lambda: None, p: d_p(), prior_predictive: d_prior_pred() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default = "d_samples")]
    pub samples: usize,
    /// Main-run iterations. Defaults: 10^5 for MH, 2·10^4 for PMCMC.
    #[serde(default)]
    pub iters: Option<usize>,
    #[serde(default = "d_particles")]
    pub particles: usize,
    #[serde(default)]
    pub seed: u64,
}

fn d_samples() -> usize {
    1000
}
fn d_particles() -> usize {
    200
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { samples: d_samples(), iters: None, particles: d_particles(), seed: 0 }
    }
}

/// Main-run length below which a Ricker PMCMC reference draws a warning.
pub const RECOMMENDED_PMCMC_ITERS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub out_dir: PathBuf,
    /// Parameters of the simulated observation.
    #[serde(default)]
    pub theta_true: Option<Vec<f64>>,
    #[serde(default = "d_obs_seed")]
    pub obs_seed: u64,
    /// Observation CSV; `out_dir/observation.csv` when absent.
    #[serde(default)]
    pub observation: Option<PathBuf>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub sig: SigConfig,
    #[serde(default)]
    pub skrr: SkrrConfig,
    #[serde(default)]
    pub sa: SaConfig,
    #[serde(default)]
    pub mmd: MmdConfig,
    #[serde(default)]
    pub wass: WassConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
}

fn d_obs_seed() -> u64 {
    1
}
fn d_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn d_methods() -> Vec<Method> {
    vec![Method::SigLeadlag, Method::Mmd, Method::Wass]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Hex SHA-256 of the config as JSON with sorted keys and all defaults
    /// filled in.
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.theta_true.clone().unwrap_or_else(|| self.model.default_theta())
    }

    pub fn observation_path(&self) -> PathBuf {
        self.observation.clone().unwrap_or_else(|| self.out_dir.join("observation.csv"))
    }

    pub fn reference_iters(&self) -> usize {
        self.reference.iters.unwrap_or(match self.model {
            ModelConfig::Ricker { .. } => 20_000,
            _ => 100_000,
        })
    }

    pub fn sig_steps(&self, method: Method) -> Vec<Step> {
        let mut steps = self.sig.pipeline.clone().unwrap_or_else(|| self.model.default_pipeline());
        if method == Method::SigLeadlag && !steps.contains(&Step::LeadLag) {
            steps.insert(0, Step::LeadLag);
        }
        steps
    }

    pub fn skrr_steps(&self) -> Vec<Step> {
        self.skrr.pipeline.clone().unwrap_or_else(|| self.model.default_pipeline())
    }

    /// Checks everything that can be checked without running a simulator.
    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        let prior = self.model.prior();
        let theta = self.theta();
        let dim = self.model.model().param_dim();
        if theta.len() != dim {
            return invalid(format!("theta_true has {} entries, the model has {dim} parameters", theta.len()));
        }
        if !prior.log_density(&theta).is_finite() {
            return invalid(format!("theta_true {theta:?} lies outside the prior support"));
        }
        if let Some(path) = &self.observation {
            if !path.is_file() {
                return invalid(format!("observation file {} does not exist", path.display()));
            }
        }
        check_budget(self.budget.n, self.budget.m)?;
        if self.methods.is_empty() {
            return invalid("methods must not be empty");
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return invalid(format!("method {m} listed twice"));
            }
            self.validate_method(*m)?;
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return invalid("seeds must be distinct");
        }
        let r = &self.reference;
        if r.samples == 0 {
            return invalid("reference.samples must be positive");
        }
        if !matches!(self.model, ModelConfig::Gse { .. }) && self.reference_iters() < r.samples {
            return invalid("reference.iters must be at least reference.samples");
        }
        if r.particles < 2 {
            return invalid("reference.particles must be at least 2");
        }
        Ok(())
    }

    /// Method-specific checks; also used for `--method` overrides.
    pub fn validate_method(&self, method: Method) -> CliResult<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(v) if !(v > 0.0 && v.is_finite()) => invalid(format!("{name} must be positive, got {v}")),
            _ => Ok(()),
        };
        match method {
            Method::Sig | Method::SigLeadlag => {
                positive("sig.bandwidth", self.sig.bandwidth)?;
                check_steps("sig.pipeline", &self.sig_steps(method), self.sig.pilot)?;
            }
            Method::Skrr => {
                let s = &self.skrr;
                if s.folds < 2 || s.r < s.folds {
                    return invalid(format!("skrr needs folds >= 2 and r >= folds, got r={}, folds={}", s.r, s.folds));
                }
                if s.alpha_grid.is_empty() || s.alpha_grid.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                    return invalid("skrr.alpha_grid must be non-empty and non-negative");
                }
                if s.bandwidth_multipliers.is_empty()
                    || s.bandwidth_multipliers.iter().any(|b| !(*b > 0.0 && b.is_finite()))
                {
                    return invalid("skrr.bandwidth_multipliers must be non-empty and positive");
                }
                check_steps("skrr.pipeline", &self.skrr_steps(), s.r)?;
            }
            Method::Sa => {
                if self.model.feature_map(self.sa.pmax).is_none() {
                    return invalid("sa has no candidate statistics for the gse model");
                }
                if self.sa.pmax == 0 || self.sa.r < 2 {
                    return invalid("sa needs pmax >= 1 and r >= 2");
                }
            }
            Method::Mmd => positive("mmd.bandwidth", self.mmd.bandwidth)?,
            Method::Wass => {
                if let Some(l) = self.wass.lambda {
                    if !(l >= 0.0 && l.is_finite()) {
                        return invalid(format!("wass.lambda must be non-negative, got {l}"));
                    }
                }
                if self.wass.p == 0 {
                    return invalid("wass.p must be at least 1");
                }
                if self.wass.lambda.is_none() && self.wass.prior_predictive == 0 {
                    return invalid("wass.prior_predictive must be positive");
                }
            }
        }
        Ok(())
    }
}

pub fn check_budget(n: usize, m: usize) -> CliResult<()> {
    if m == 0 || m >= n {
        return invalid(format!("budget needs 0 < m < n, got n={n}, m={m}"));
    }
    Ok(())
}

fn check_steps(name: &str, steps: &[Step], calibration_size: usize) -> CliResult<()> {
    for (i, s) in steps.iter().enumerate() {
        if steps[..i].contains(s) {
            return invalid(format!("{name}: {s:?} appears twice"));
        }
    }
    if steps.contains(&Step::RangeNormalize) && calibration_size == 0 {
        return invalid(format!("{name}: range normalisation needs calibration simulations"));
    }
    Ok(())
}
