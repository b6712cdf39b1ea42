//! Per-observation losses for canonical generalized linear models.
//!
//! Every model here has the form `ℓ(θ) = b(xᵀθ) − y·xᵀθ` for a convex
//! cumulant function `b`. The Hessian is `b″(xᵀθ)·x xᵀ`, a rank-one matrix, so
//! it is exposed as the scalar [`LinkFunction::hessian_scale`] and callers
//! keep the covariate around as the rank-one factor.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, BooError, Result};

/// The canonical link families supported by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    /// `b(η) = log(1 + eᶯ)`.
    Logistic,
    /// `b(η) = eᶯ` (the `log y!` term does not depend on θ and is dropped).
    Poisson,
}

/// One streamed observation `(y, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    pub x: DVector<f64>,
}

impl Observation {
    pub fn new(y: f64, x: DVector<f64>) -> Self {
        Observation { y, x }
    }

    pub fn from_slice(y: f64, x: &[f64]) -> Self {
        Observation {
            y,
            x: DVector::from_column_slice(x),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl LinkFunction {
    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Logistic => "logistic",
            LinkFunction::Poisson => "poisson",
        }
    }

    /// Cumulant function `b(η)`.
    pub fn b(self, eta: f64) -> f64 {
        match self {
            // max(η, 0) + log1p(e^{−|η|}) never overflows.
            LinkFunction::Logistic => eta.max(0.0) + (-eta.abs()).exp().ln_1p(),
            LinkFunction::Poisson => eta.exp(),
        }
    }

    /// `b′(η)`, the mean function.
    pub fn b1(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logistic => sigmoid(eta),
            LinkFunction::Poisson => eta.exp(),
        }
    }

    /// `b″(η)`, the variance function.
    pub fn b2(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logistic => {
                let s = sigmoid(eta);
                s * (1.0 - s)
            }
            LinkFunction::Poisson => eta.exp(),
        }
    }

    /// `b‴(η)`.
    pub fn b3(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logistic => {
                let s = sigmoid(eta);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            LinkFunction::Poisson => eta.exp(),
        }
    }

    /// Checks that a response lies in the model's support.
    pub fn validate_response(self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(BooError::NonFinite("response"));
        }
        let ok = match self {
            LinkFunction::Logistic => y == 0.0 || y == 1.0,
            LinkFunction::Poisson => y >= 0.0 && y.is_finite() && y.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(BooError::InvalidArgument(format!(
                "response {y} outside the support of the {} model",
                self.name()
            )))
        }
    }

    /// Checks the response support and covariate finiteness of an observation.
    pub fn validate(self, obs: &Observation) -> Result<()> {
        self.validate_response(obs.y)?;
        if obs.x.iter().any(|v| !v.is_finite()) {
            return Err(BooError::NonFinite("covariate"));
        }
        Ok(())
    }

    fn linear_predictor(self, obs: &Observation, theta: &DVector<f64>) -> Result<f64> {
        check_dim(obs.x.len(), theta.len())?;
        if !obs.y.is_finite() {
            return Err(BooError::NonFinite("response"));
        }
        let eta = obs.x.dot(theta);
        if !eta.is_finite() {
            return Err(BooError::NonFinite("linear predictor"));
        }
        Ok(eta)
    }

    /// `ℓ(θ) = b(xᵀθ) − y·xᵀθ`.
    pub fn loss(self, obs: &Observation, theta: &DVector<f64>) -> Result<f64> {
        let eta = self.linear_predictor(obs, theta)?;
        Ok(self.b(eta) - obs.y * eta)
    }

    /// `∇ℓ(θ) = (b′(xᵀθ) − y)·x`.
    pub fn gradient(self, obs: &Observation, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let eta = self.linear_predictor(obs, theta)?;
        Ok(&obs.x * (self.b1(eta) - obs.y))
    }

    /// The scalar `b″(xᵀθ)`; the full Hessian is `scale·x xᵀ`.
    pub fn hessian_scale(self, obs: &Observation, theta: &DVector<f64>) -> Result<f64> {
        let eta = self.linear_predictor(obs, theta)?;
        Ok(self.b2(eta))
    }

    /// Gradient residual `b′(xᵀθ) − y` and Hessian scale `b″(xᵀθ)` from a
    /// single evaluation of the linear predictor.
    pub fn residual_and_scale(self, obs: &Observation, theta: &DVector<f64>) -> Result<(f64, f64)> {
        let eta = self.linear_predictor(obs, theta)?;
        Ok((self.b1(eta) - obs.y, self.b2(eta)))
    }
}
