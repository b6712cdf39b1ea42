//! Experiment configuration: a flat TOML file resolved into typed specs.
//!
//! ```toml
//! model = "logistic"        # or "poisson"
//! p = 10
//! n = 10000
//! design = "independent"    # "correlated" | "zero"
//! seed = 1
//! repetitions = 500
//! alpha = 0.05
//! initial_offset = 2.2360679774997896   # omit for θ₀ = 0
//! checkpoints = [100, 1000, 10000]      # omit for a 50-point log grid
//!
//! [[estimators]]
//! kind = "boo"              # t0 defaults to ⌈M(p ln(p ∨ 3) + x)⌉
//! [[estimators]]
//! kind = "boo"
//! t0 = 0
//! [[estimators]]
//! kind = "asgd"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::baselines::{DEFAULT_STEP0, DEFAULT_STEP_EXP};
use crate::datagen::{make_correlated_sigma, CovariateStyle, DesignSpec, TruthSpec};
use crate::error::{BooError, Result};
use crate::glm::LinkFunction;
use crate::posterior::default_t0;

/// Benchmark covariate design. `independent` and `correlated` draw
/// `N(0, I)` or `N(0, Σ)` and normalize to the unit sphere when `normalize`
/// is set (the default for Poisson).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Independent,
    Correlated,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Boo {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t0: Option<usize>,
    },
    Sgd,
    Asgd,
    Wsgd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t0: Option<usize>,
    },
    Wasgd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t0: Option<usize>,
    },
    Mle,
}

impl EstimatorSpec {
    pub fn default_set() -> Vec<EstimatorSpec> {
        vec![
            EstimatorSpec::Boo { t0: None },
            EstimatorSpec::Boo { t0: Some(0) },
            EstimatorSpec::Sgd,
            EstimatorSpec::Asgd,
            EstimatorSpec::Wsgd { t0: None },
            EstimatorSpec::Wasgd { t0: None },
            EstimatorSpec::Mle,
        ]
    }
}

fn default_repetitions() -> usize {
    500
}
fn default_alpha() -> f64 {
    0.05
}
fn default_m() -> f64 {
    1.0
}
fn default_x() -> f64 {
    5.0
}
fn default_step0() -> f64 {
    DEFAULT_STEP0
}
fn default_step_exp() -> f64 {
    DEFAULT_STEP_EXP
}
fn default_design() -> DesignKind {
    DesignKind::Independent
}

/// On-disk configuration. Every field but `model`, `p` and `n` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: LinkFunction,
    pub p: usize,
    pub n: usize,
    #[serde(default = "default_design")]
    pub design: DesignKind,
    /// Project covariates onto the unit sphere; defaults to `model == poisson`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `‖θ₀ − θ⋆‖`; when absent `θ₀ = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_offset: Option<f64>,
    /// Overrides the unit-norm alternating true parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
    /// Multiplier in the default warm-start length.
    #[serde(default = "default_m")]
    pub m: f64,
    /// Confidence term in the default warm-start length.
    #[serde(default = "default_x")]
    pub x: f64,
    #[serde(default = "default_step0")]
    pub step0: f64,
    #[serde(default = "default_step_exp")]
    pub step_exp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default = "EstimatorSpec::default_set")]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ConfigFile {
    pub fn new(model: LinkFunction, p: usize, n: usize) -> Self {
        ConfigFile {
            model,
            p,
            n,
            design: default_design(),
            normalize: None,
            seed: 0,
            repetitions: default_repetitions(),
            alpha: default_alpha(),
            initial_offset: None,
            theta_star: None,
            m: default_m(),
            x: default_x(),
            step0: DEFAULT_STEP0,
            step_exp: DEFAULT_STEP_EXP,
            checkpoints: None,
            estimators: EstimatorSpec::default_set(),
            output: None,
            threads: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BooError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BooError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| BooError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is TOML-representable")
    }

    /// Warm-start length for estimators that do not pin their own `t0`.
    pub fn default_t0(&self) -> usize {
        default_t0(self.p.max(1), self.x, self.m)
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let cfg = |msg: String| BooError::Config(msg);
        if self.p == 0 || self.n == 0 {
            return Err(cfg(format!("p and n must be ≥ 1 (p = {}, n = {})", self.p, self.n)));
        }
        if self.repetitions == 0 {
            return Err(cfg("repetitions must be ≥ 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(cfg(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.m >= 0.0) || !self.m.is_finite() || !self.x.is_finite() {
            return Err(cfg(format!("invalid warm-start constants M = {}, x = {}", self.m, self.x)));
        }
        if !(self.step0 >= 0.0) || !self.step_exp.is_finite() {
            return Err(cfg(format!("invalid step schedule ζ₀ = {}, α = {}", self.step0, self.step_exp)));
        }
        if self.estimators.is_empty() {
            return Err(cfg("at least one estimator is required".into()));
        }
        if let Some(offset) = self.initial_offset {
            if !(offset >= 0.0) || !offset.is_finite() {
                return Err(cfg(format!("initial_offset = {offset} must be finite and ≥ 0")));
            }
        }
        if self.threads == Some(0) {
            return Err(cfg("threads must be ≥ 1".into()));
        }

        let normalize = self.normalize.unwrap_or(self.model == LinkFunction::Poisson);
        let covariate_style = match (self.design, normalize) {
            (DesignKind::Zero, _) => CovariateStyle::Zero,
            (DesignKind::Independent, false) => CovariateStyle::GaussianIdentity,
            (DesignKind::Independent, true) => CovariateStyle::NormalizedGaussian,
            (DesignKind::Correlated, false) => CovariateStyle::GaussianCovariance { sigma: make_correlated_sigma(self.p, self.seed) },
            (DesignKind::Correlated, true) => {
                CovariateStyle::NormalizedGaussianCovariance { sigma: make_correlated_sigma(self.p, self.seed) }
            }
        };
        let design = DesignSpec { p: self.p, n: self.n, model: self.model, covariate_style, seed: self.seed };
        design.validate().map_err(|e| cfg(e.to_string()))?;

        let theta_star = match &self.theta_star {
            Some(v) if v.len() != self.p => return Err(cfg(format!("theta_star has {} entries, expected {}", v.len(), self.p))),
            Some(v) => DVector::from_column_slice(v),
            None => crate::datagen::make_theta_star(self.p),
        };
        let truth = TruthSpec { theta_star, initial_offset: self.initial_offset.unwrap_or(0.0) };
        let initial = match self.initial_offset {
            Some(_) => truth.initial_point(self.seed),
            None => DVector::zeros(self.p),
        };

        let default_t0 = self.default_t0();
        let mut estimators = Vec::new();
        for spec in &self.estimators {
            let resolved = match *spec {
                EstimatorSpec::Boo { t0 } => ResolvedEstimator::Boo { t0: t0.unwrap_or(default_t0) },
                EstimatorSpec::Sgd => ResolvedEstimator::Sgd { t0: 0, averaged: false },
                EstimatorSpec::Asgd => ResolvedEstimator::Sgd { t0: 0, averaged: true },
                EstimatorSpec::Wsgd { t0 } => ResolvedEstimator::Sgd { t0: t0.unwrap_or(default_t0).max(1), averaged: false },
                EstimatorSpec::Wasgd { t0 } => ResolvedEstimator::Sgd { t0: t0.unwrap_or(default_t0).max(1), averaged: true },
                EstimatorSpec::Mle => ResolvedEstimator::Mle,
            };
            if estimators.contains(&resolved) {
                return Err(cfg(format!("estimator `{}` listed twice", resolved.label())));
            }
            estimators.push(resolved);
        }

        let checkpoints = match &self.checkpoints {
            Some(c) => {
                if c.is_empty() || c[0] == 0 || c.windows(2).any(|w| w[0] >= w[1]) || *c.last().unwrap() > self.n {
                    return Err(cfg(format!("checkpoints must be strictly ascending within [1, n = {}]", self.n)));
                }
                c.clone()
            }
            None => log_grid(default_t0.max(1), self.n, 50),
        };

        Ok(ExperimentConfig {
            design,
            truth,
            initial,
            estimators,
            repetitions: self.repetitions,
            checkpoints,
            alpha: self.alpha,
            step0: self.step0,
            step_exp: self.step_exp,
            output_path: self.output.clone(),
            seed: self.seed,
            threads: self.threads,
        })
    }
}

/// Up to `points` distinct integers, log-spaced over `[lo, hi]`, ending at `hi`.
pub fn log_grid(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    let lo = lo.clamp(1, hi);
    if points <= 1 || lo == hi {
        return vec![hi];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as usize)
        .map(|t| t.clamp(lo, hi))
        .collect();
    out.dedup();
    *out.last_mut().unwrap() = hi;
    out
}

/// One estimator column after defaults are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedEstimator {
    Boo { t0: usize },
    /// `t0 = 0` is plain SGD from `θ₀`; otherwise the MAP-initialized variant.
    Sgd { t0: usize, averaged: bool },
    Mle,
}

impl ResolvedEstimator {
    pub fn label(&self) -> String {
        match *self {
            ResolvedEstimator::Boo { t0 } => format!("boo_t0_{t0}"),
            ResolvedEstimator::Sgd { t0: 0, averaged: false } => "sgd".into(),
            ResolvedEstimator::Sgd { t0: 0, averaged: true } => "asgd".into(),
            ResolvedEstimator::Sgd { t0, averaged: false } => format!("wsgd_t0_{t0}"),
            ResolvedEstimator::Sgd { t0, averaged: true } => format!("wasgd_t0_{t0}"),
            ResolvedEstimator::Mle => "mle".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub design: DesignSpec,
    pub truth: TruthSpec,
    /// `θ₀`: prior mean for BOO, starting iterate for SGD.
    pub initial: DVector<f64>,
    pub estimators: Vec<ResolvedEstimator>,
    pub repetitions: usize,
    pub checkpoints: Vec<usize>,
    pub alpha: f64,
    pub step0: f64,
    pub step_exp: f64,
    pub output_path: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
}
