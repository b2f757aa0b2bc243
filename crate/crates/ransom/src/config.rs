//! JSON run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ransom_core::lmo::{DEFAULT_NS_ITERS, DEFAULT_POWER_MAX_ITERS, DEFAULT_POWER_TOL};
use ransom_core::optim::MidpointBatch;
use ransom_core::problems::{NoiseKind, NoiseSpec, OracleNoise};
use ransom_core::{Geometry, HvpStrategy, Method, OptimizerConfig, StepSchedule};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    pub optimizers: Vec<OptimizerSpec>,
    /// Total steps `T`. Exactly one of `steps` and `epochs` is set.
    #[serde(default)]
    pub steps: Option<u64>,
    /// Passes over the training set, converted to `ceil(epochs · n / B)` steps.
    #[serde(default)]
    pub epochs: Option<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub eval_every: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Record `‖m_t - ∇f(x_t)‖` at evaluation points (needs full gradients).
    #[serde(default)]
    pub diagnostics: bool,
    /// Fill `wall_ms`; off by default so that reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    /// Replace every optimizer's `eta`/`beta` by the horizon-tuned values.
    #[serde(default)]
    pub theory_schedule: Option<TheorySpec>,
    /// Inert labels (p, q, sigma_g, L0, ...) copied into the summary.
    #[serde(default)]
    pub annotations: BTreeMap<String, f64>,
}

fn one() -> u64 {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySpec {
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub beta_rule: BetaRule,
}

/// How the momentum weight scales with the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaRule {
    /// `beta = T^(-pq/(2q(p-1)+p))`, the choice that balances the error terms.
    #[default]
    Balanced,
    /// `beta = T^(-q(p-1)/(2q(p-1)+p))`.
    AsPrinted,
}

impl TheorySpec {
    pub fn schedule(&self, horizon: u64) -> Result<(f64, f64)> {
        let pair = match self.beta_rule {
            BetaRule::Balanced => ransom_core::optim::theory_schedule(horizon, self.p, self.q)?,
            BetaRule::AsPrinted => ransom_core::optim::theory_schedule_as_printed(horizon, self.p, self.q)?,
        };
        Ok(pair)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        dim: usize,
        mu: f64,
        #[serde(rename = "L")]
        l: f64,
        /// Seed for `A` and `b`, independent of the run seeds.
        #[serde(default)]
        problem_seed: u64,
        #[serde(default)]
        gradient_noise: Option<NoiseConfig>,
        #[serde(default)]
        hvp_noise: Option<NoiseConfig>,
    },
    Mlp {
        data: ClassificationData,
        #[serde(default = "default_sizes")]
        sizes: Vec<usize>,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Completion {
        data: RatingsData,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        split_seed: u64,
    },
}

fn default_sizes() -> Vec<usize> {
    vec![60, 32, 16, 1]
}

fn default_lambda() -> f64 {
    0.1
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassificationData {
    /// LibSVM files; without `test` the training file is split 80/20.
    Libsvm {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
        #[serde(default)]
        n_features: Option<usize>,
        #[serde(default)]
        split_seed: u64,
    },
    SyntheticSplice {
        n_train: usize,
        n_test: usize,
        #[serde(default = "default_flip")]
        flip: f64,
        #[serde(default)]
        data_seed: u64,
    },
}

fn default_flip() -> f64 {
    0.08
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RatingsData {
    Movielens {
        path: PathBuf,
        #[serde(default = "default_top_users")]
        top_users: usize,
        #[serde(default = "default_top_items")]
        top_items: usize,
    },
    SyntheticLowRank {
        rows: usize,
        cols: usize,
        rank: usize,
        noise_sigma: f64,
        density: f64,
        #[serde(default)]
        data_seed: u64,
    },
}

fn default_top_users() -> usize {
    100
}

fn default_top_items() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKindConfig,
    pub sigma: f64,
    #[serde(default)]
    pub tail_index: Option<f64>,
    #[serde(default = "yes")]
    pub per_sample: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKindConfig {
    Gaussian,
    Pareto,
}

impl NoiseConfig {
    pub fn to_spec(&self) -> Result<NoiseSpec> {
        let kind = match (self.kind, self.tail_index) {
            (NoiseKindConfig::Gaussian, None) => NoiseKind::Gaussian,
            (NoiseKindConfig::Pareto, Some(tail_index)) => NoiseKind::SymmetricPareto { tail_index },
            (NoiseKindConfig::Gaussian, Some(_)) => {
                return Err(HarnessError::config("gaussian noise takes no tail_index"))
            }
            (NoiseKindConfig::Pareto, None) => return Err(HarnessError::config("pareto noise needs tail_index")),
        };
        let spec = NoiseSpec { kind, sigma: self.sigma, per_sample: self.per_sample };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn oracle_noise(gradient: &Option<NoiseConfig>, hvp: &Option<NoiseConfig>) -> Result<OracleNoise> {
    Ok(OracleNoise {
        gradient: gradient.as_ref().map(NoiseConfig::to_spec).transpose()?,
        hvp: hvp.as_ref().map(NoiseConfig::to_spec).transpose()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    /// Names the CSV files and summary entry; defaults to the method name.
    #[serde(default)]
    pub label: Option<String>,
    pub method: String,
    pub eta: EtaSpec,
    pub beta: f64,
    pub geometry: GeometrySpec,
    pub batch_size: usize,
    #[serde(default)]
    pub init_batch: Option<usize>,
    #[serde(default = "default_hvp")]
    pub hvp: String,
    #[serde(default)]
    pub plain_step: bool,
    #[serde(default)]
    pub random_steps: bool,
    #[serde(default)]
    pub storm_a: Option<f64>,
    #[serde(default = "default_midpoint")]
    pub midpoint_batch: String,
}

fn default_hvp() -> String {
    "analytic".into()
}

fn default_midpoint() -> String {
    "fresh".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Constant(f64),
    Polynomial { eta0: f64, power: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometrySpec {
    L2 {
        rho: f64,
    },
    Linf {
        rho: f64,
    },
    Spectral {
        rho: f64,
        #[serde(default = "default_ns")]
        ns_iters: usize,
    },
    Nuclear {
        rho: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
    },
}

fn default_ns() -> usize {
    DEFAULT_NS_ITERS
}

fn default_tol() -> f64 {
    DEFAULT_POWER_TOL
}

fn default_max_iters() -> usize {
    DEFAULT_POWER_MAX_ITERS
}

impl GeometrySpec {
    pub fn to_geometry(self) -> Geometry {
        match self {
            GeometrySpec::L2 { rho } => Geometry::L2Ball { rho },
            GeometrySpec::Linf { rho } => Geometry::LinfBall { rho },
            GeometrySpec::Spectral { rho, ns_iters } => Geometry::SpectralBall { rho, ns_iters },
            GeometrySpec::Nuclear { rho, tol, max_iters } => Geometry::NuclearBall { rho, tol, max_iters },
        }
    }
}

impl OptimizerSpec {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.method)
    }

    pub fn to_config(&self) -> Result<OptimizerConfig> {
        let method = Method::from_name(&self.method)
            .ok_or_else(|| HarnessError::config(format!("unknown method {:?}", self.method)))?;
        let eta = match self.eta {
            EtaSpec::Constant(eta) => StepSchedule::Constant(eta),
            EtaSpec::Polynomial { eta0, power } => StepSchedule::Polynomial { eta0, power },
        };
        let mut cfg = OptimizerConfig::new(method, eta, self.beta, self.geometry.to_geometry(), self.batch_size);
        if let Some(b) = self.init_batch {
            cfg.init_batch = b;
        }
        cfg.hvp_strategy = match self.hvp.as_str() {
            "analytic" => HvpStrategy::Analytic,
            "forward-over-reverse" => HvpStrategy::ForwardOverReverse,
            "central-difference" => HvpStrategy::CentralDifference,
            other => return Err(HarnessError::config(format!("unknown hvp strategy {other:?}"))),
        };
        cfg.midpoint_batch = match self.midpoint_batch.as_str() {
            "fresh" => MidpointBatch::Fresh,
            "shared" => MidpointBatch::Shared,
            other => return Err(HarnessError::config(format!("unknown midpoint batch {other:?}"))),
        };
        cfg.plain_step = self.plain_step;
        cfg.random_steps = self.random_steps;
        cfg.storm_a = self.storm_a;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match (self.steps, self.epochs) {
            (Some(0), _) => return Err(HarnessError::config("steps must be at least 1")),
            (Some(_), None) => {}
            (None, Some(e)) if e > 0.0 && e.is_finite() => {}
            (None, Some(e)) => return Err(HarnessError::config(format!("epochs must be positive, got {e}"))),
            _ => return Err(HarnessError::config("set exactly one of steps and epochs")),
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::config("seeds must be nonempty"));
        }
        if self.eval_every == 0 {
            return Err(HarnessError::config("eval_every must be at least 1"));
        }
        if self.optimizers.is_empty() {
            return Err(HarnessError::config("no optimizers configured"));
        }
        let mut labels: Vec<&str> = self.optimizers.iter().map(|o| o.label()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::config("optimizer labels must be unique"));
        }
        for o in &self.optimizers {
            if o.label().contains(['/', '\\', ',']) {
                return Err(HarnessError::config(format!("label {:?} may not contain / \\ or ,", o.label())));
            }
            o.to_config()?;
        }
        Ok(())
    }
}
