//! First-order baselines: SGD with Polyak–Ruppert averaging, optionally
//! warm-started from the same batch MAP as the one-pass estimator, plus the
//! plug-in sandwich covariance for inference on the averaged iterate.

use nalgebra::{DMatrix, DVector};

use crate::batch::{map_estimate, NewtonSettings};
use crate::error::{check_dim, BooError, Result};
use crate::glm::{LinkFunction, Observation};
use crate::linalg::{add_rank_one, spd_inverse, symmetrize};

pub const DEFAULT_STEP0: f64 = 0.5;
pub const DEFAULT_STEP_EXP: f64 = 0.501;

/// `ζₜ = ζ₀ · t^{−α}`.
pub fn step_size(t: usize, step0: f64, step_exp: f64) -> f64 {
    assert!(t >= 1, "step index starts at 1");
    step0 * (t as f64).powf(-step_exp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub model: LinkFunction,
    pub step0: f64,
    pub step_exp: f64,
    /// Starting iterate for plain SGD.
    pub initial: DVector<f64>,
    /// Warm-start length; 0 gives plain SGD.
    pub t0: usize,
    /// Prior used by the warm-start MAP (same as the one-pass estimator's).
    pub prior_mean: DVector<f64>,
    pub prior_precision: DMatrix<f64>,
    pub newton: NewtonSettings,
}

impl SgdConfig {
    pub fn plain(model: LinkFunction, initial: DVector<f64>) -> Self {
        let p = initial.len();
        SgdConfig {
            model,
            step0: DEFAULT_STEP0,
            step_exp: DEFAULT_STEP_EXP,
            prior_mean: initial.clone(),
            prior_precision: DMatrix::identity(p, p),
            initial,
            t0: 0,
            newton: NewtonSettings::default(),
        }
    }

    pub fn warm(model: LinkFunction, t0: usize, prior_mean: DVector<f64>, prior_precision: DMatrix<f64>) -> Self {
        SgdConfig {
            model,
            step0: DEFAULT_STEP0,
            step_exp: DEFAULT_STEP_EXP,
            initial: prior_mean.clone(),
            t0,
            prior_mean,
            prior_precision,
            newton: NewtonSettings::default(),
        }
    }

    pub fn with_steps(mut self, step0: f64, step_exp: f64) -> Self {
        self.step0 = step0;
        self.step_exp = step_exp;
        self
    }
}

/// SGD iterate, its running average, and the sandwich accumulators
/// `F = Σ ∇²ℓₜ(θ̂ₜ₋₁)` and `V = Σ ∇ℓₜ(θ̂ₜ₋₁)∇ℓₜ(θ̂ₜ₋₁)ᵀ`.
#[derive(Debug, Clone)]
pub struct SgdFamilyEstimator {
    config: SgdConfig,
    t: usize,
    iterate: DVector<f64>,
    average: DVector<f64>,
    averaged: usize,
    f_acc: DMatrix<f64>,
    v_acc: DMatrix<f64>,
    buffer: Vec<Observation>,
}

impl SgdFamilyEstimator {
    pub fn new(config: SgdConfig) -> Result<Self> {
        let p = config.initial.len();
        if p == 0 {
            return Err(BooError::InvalidArgument("dimension must be positive".into()));
        }
        check_dim(p, config.prior_mean.len())?;
        check_dim(p, config.prior_precision.nrows())?;
        if !(config.step0 >= 0.0) || !config.step_exp.is_finite() {
            return Err(BooError::InvalidArgument(format!(
                "invalid step schedule ζ₀ = {}, α = {}",
                config.step0, config.step_exp
            )));
        }
        Ok(SgdFamilyEstimator {
            iterate: config.initial.clone(),
            average: config.initial.clone(),
            averaged: 0,
            f_acc: DMatrix::zeros(p, p),
            v_acc: DMatrix::zeros(p, p),
            buffer: Vec::with_capacity(config.t0),
            t: 0,
            config,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// The SGD iterate `θ̂ₜ`.
    pub fn iterate(&self) -> &DVector<f64> {
        &self.iterate
    }

    /// The averaged iterate. Warm variants average post-warm-start iterates
    /// only; before the first such iterate this is the starting point.
    pub fn average(&self) -> &DVector<f64> {
        &self.average
    }

    pub fn f_acc(&self) -> &DMatrix<f64> {
        &self.f_acc
    }

    pub fn v_acc(&self) -> &DMatrix<f64> {
        &self.v_acc
    }

    pub fn is_warming(&self) -> bool {
        self.t < self.config.t0
    }

    pub fn step(&mut self, obs: &Observation) -> Result<()> {
        check_dim(self.iterate.len(), obs.dim())?;
        self.config.model.validate(obs)?;

        if self.t < self.config.t0 {
            self.buffer.push(obs.clone());
            self.t += 1;
            if self.t == self.config.t0 {
                let buffer = std::mem::take(&mut self.buffer);
                let report = map_estimate(
                    self.config.model,
                    &buffer,
                    &self.config.prior_mean,
                    &self.config.prior_precision,
                    &self.config.newton,
                )?;
                let theta = report.into_converged()?;
                self.iterate = theta.clone();
                self.average = theta;
            }
            return Ok(());
        }

        let (residual, h_scale) = self.config.model.residual_and_scale(obs, &self.iterate)?;
        let gradient = &obs.x * residual;
        add_rank_one(&mut self.f_acc, h_scale, &obs.x);
        add_rank_one(&mut self.v_acc, residual * residual, &obs.x);

        self.t += 1;
        let zeta = step_size(self.t, self.config.step0, self.config.step_exp);
        self.iterate.axpy(-zeta, &gradient, 1.0);
        if self.iterate.iter().any(|v| !v.is_finite()) {
            return Err(BooError::NonFinite("SGD iterate"));
        }
        self.averaged += 1;
        let w = 1.0 / self.averaged as f64;
        self.average.zip_apply(&self.iterate, |a, it| *a += w * (it - *a));
        Ok(())
    }

    /// Plug-in covariance `F⁻¹ V F⁻¹` for the averaged iterate.
    pub fn sandwich_covariance(&self) -> Result<DMatrix<f64>> {
        sandwich_covariance(&self.f_acc, &self.v_acc)
    }
}

pub fn sandwich_covariance(f: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let f_inv = spd_inverse(f, "SGD curvature accumulator").map_err(|_| {
        BooError::Singular("accumulated SGD curvature is not invertible; use a longer stream".into())
    })?;
    let mut out = &f_inv * v * &f_inv;
    symmetrize(&mut out);
    Ok(out)
}
