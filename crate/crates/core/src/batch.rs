//! Damped Newton solvers for the batch MAP and maximum-likelihood problems.
//!
//! The MAP objective is `Σ ℓₛ(θ) + ½ (θ − θ₀)ᵀ Ω₀ (θ − θ₀)`; the MLE drops
//! the quadratic prior term. Both are smooth and convex, so full Newton steps
//! with an Armijo backtracking line search converge quickly at the dimensions
//! this crate targets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, BooError, Result};
use crate::glm::{LinkFunction, Observation};
use crate::linalg::add_rank_one;

const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_shrink: f64,
    pub min_step: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            max_iter: 100,
            grad_tol: 1e-10,
            step_shrink: 0.5,
            min_step: 1e-12,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iter > 0
            && self.grad_tol > 0.0
            && self.step_shrink > 0.0
            && self.step_shrink < 1.0
            && self.min_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(BooError::InvalidArgument(format!("invalid Newton settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub estimate: DVector<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

impl SolveReport {
    /// Turns a non-converged report into an error.
    pub fn into_converged(self) -> Result<DVector<f64>> {
        if self.converged {
            Ok(self.estimate)
        } else {
            Err(BooError::NotConverged {
                iterations: self.iterations,
                grad_norm: self.final_grad_norm,
            })
        }
    }
}

struct Prior<'a> {
    mean: &'a DVector<f64>,
    precision: &'a DMatrix<f64>,
}

struct Problem<'a> {
    model: LinkFunction,
    observations: &'a [Observation],
    prior: Option<Prior<'a>>,
}

impl Problem<'_> {
    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for obs in self.observations {
            let eta = obs.x.dot(theta);
            total += self.model.b(eta) - obs.y * eta;
        }
        if let Some(prior) = &self.prior {
            let d = theta - prior.mean;
            total += 0.5 * d.dot(&(prior.precision * &d));
        }
        total
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(theta.len());
        for obs in self.observations {
            let eta = obs.x.dot(theta);
            g.axpy(self.model.b1(eta) - obs.y, &obs.x, 1.0);
        }
        if let Some(prior) = &self.prior {
            g += prior.precision * (theta - prior.mean);
        }
        g
    }

    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let p = theta.len();
        let mut h = match &self.prior {
            Some(prior) => prior.precision.clone(),
            None => DMatrix::zeros(p, p),
        };
        for obs in self.observations {
            let eta = obs.x.dot(theta);
            add_rank_one(&mut h, self.model.b2(eta), &obs.x);
        }
        h
    }

    fn solve(&self, start: DVector<f64>, settings: &NewtonSettings) -> SolveReport {
        let mut theta = start;
        let mut value = self.objective(&theta);
        let mut grad = self.gradient(&theta);
        let mut grad_norm = grad.norm();
        let mut trace = vec![value];
        let mut iterations = 0;
        let mut stalled = false;

        while iterations < settings.max_iter && grad_norm > settings.grad_tol && value.is_finite() {
            let Some(chol) = self.hessian(&theta).cholesky() else {
                // Curvature vanished numerically (e.g. separated data).
                break;
            };
            let direction = -chol.solve(&grad);
            // With very stiff objectives (huge prior precision) round-off in
            // the gradient exceeds grad_tol while the Newton step is already
            // below the resolution of θ.
            if direction.norm() <= 4.0 * f64::EPSILON * (1.0 + theta.norm()) {
                stalled = true;
                break;
            }
            let slope = grad.dot(&direction);
            if !(slope < 0.0) {
                break;
            }

            let mut step = 1.0;
            let mut accepted = None;
            while step >= settings.min_step {
                let candidate = &theta + &direction * step;
                let cand_value = self.objective(&candidate);
                if cand_value <= value + ARMIJO * step * slope {
                    accepted = Some((candidate, cand_value, None));
                    break;
                }
                // Near the optimum the predicted decrease falls below the
                // round-off of the objective; fall back to gradient decrease.
                if step == 1.0 && -slope <= 1e-14 * (1.0 + value.abs()) {
                    let cand_grad = self.gradient(&candidate);
                    if cand_grad.norm() < grad_norm {
                        accepted = Some((candidate, cand_value, Some(cand_grad)));
                        break;
                    }
                }
                step *= settings.step_shrink;
            }
            let Some((next, next_value, next_grad)) = accepted else {
                break;
            };
            theta = next;
            value = next_value;
            grad = next_grad.unwrap_or_else(|| self.gradient(&theta));
            grad_norm = grad.norm();
            trace.push(value);
            iterations += 1;
        }

        SolveReport {
            converged: (grad_norm <= settings.grad_tol || stalled) && theta.iter().all(|v| v.is_finite()),
            estimate: theta,
            iterations,
            final_grad_norm: grad_norm,
            objective_trace: trace,
        }
    }
}

fn check_observations(p: usize, observations: &[Observation]) -> Result<()> {
    for obs in observations {
        check_dim(p, obs.dim())?;
        if !obs.y.is_finite() || obs.x.iter().any(|v| !v.is_finite()) {
            return Err(BooError::NonFinite("observation"));
        }
    }
    Ok(())
}

/// Batch MAP estimate under the Gaussian prior `N(prior_mean, prior_precision⁻¹)`,
/// started from the prior mean.
pub fn map_estimate(
    model: LinkFunction,
    observations: &[Observation],
    prior_mean: &DVector<f64>,
    prior_precision: &DMatrix<f64>,
    settings: &NewtonSettings,
) -> Result<SolveReport> {
    settings.validate()?;
    let p = prior_mean.len();
    check_dim(p, prior_precision.nrows())?;
    check_dim(p, prior_precision.ncols())?;
    check_observations(p, observations)?;
    if prior_precision.clone().cholesky().is_none() {
        return Err(BooError::NotPositiveDefinite("prior precision"));
    }
    let problem = Problem {
        model,
        observations,
        prior: Some(Prior {
            mean: prior_mean,
            precision: prior_precision,
        }),
    };
    Ok(problem.solve(prior_mean.clone(), settings))
}

/// Unpenalized maximum-likelihood estimate started from the origin.
pub fn mle_estimate(
    model: LinkFunction,
    observations: &[Observation],
    settings: &NewtonSettings,
) -> Result<SolveReport> {
    let p = observations
        .first()
        .map(Observation::dim)
        .ok_or_else(|| BooError::InvalidArgument("MLE needs at least one observation".into()))?;
    mle_estimate_from(model, observations, DVector::zeros(p), settings)
}

/// Maximum-likelihood estimate started from `start` (used to warm-start
/// refits at successive checkpoints).
pub fn mle_estimate_from(
    model: LinkFunction,
    observations: &[Observation],
    start: DVector<f64>,
    settings: &NewtonSettings,
) -> Result<SolveReport> {
    settings.validate()?;
    if observations.is_empty() {
        return Err(BooError::InvalidArgument("MLE needs at least one observation".into()));
    }
    check_observations(start.len(), observations)?;
    let problem = Problem {
        model,
        observations,
        prior: None,
    };
    Ok(problem.solve(start, settings))
}

/// Observed information `Σ b″(xₛᵀθ) xₛxₛᵀ` at `theta`.
pub fn fisher_information(model: LinkFunction, observations: &[Observation], theta: &DVector<f64>) -> DMatrix<f64> {
    let p = theta.len();
    let mut f = DMatrix::zeros(p, p);
    for obs in observations {
        add_rank_one(&mut f, model.b2(obs.x.dot(theta)), &obs.x);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(p: usize) -> (DVector<f64>, DMatrix<f64>) {
        (DVector::zeros(p), DMatrix::identity(p, p))
    }

    /// Bisection on the scalar MAP gradient σ(θ) − 1 + θ.
    fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn map_without_data_is_prior_mean() {
        let mean = DVector::from_column_slice(&[0.3, -1.0]);
        let prec = DMatrix::identity(2, 2) * 2.0;
        let r = map_estimate(LinkFunction::Logistic, &[], &mean, &prec, &NewtonSettings::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.estimate, mean);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn stiff_prior_converges_at_machine_precision() {
        let obs = [Observation::from_slice(1.0, &[1.0, 1.0])];
        let mean = DVector::from_column_slice(&[0.7, -0.3]);
        let prec = DMatrix::identity(2, 2) * 1e8;
        let r = map_estimate(LinkFunction::Logistic, &obs, &mean, &prec, &NewtonSettings::default()).unwrap();
        assert!(r.converged, "{r:?}");
        // Stationarity: 1e8 (θ − m) = (1 − σ(xᵀθ)) x.
        let shift = (1.0 - crate::glm::sigmoid(0.4)) / 1e8;
        assert!((r.estimate[0] - 0.7 - shift).abs() < 1e-15);
        assert!((r.estimate[1] + 0.3 - shift).abs() < 1e-15);
    }

    #[test]
    fn map_single_logistic_matches_bisection() {
        let oracle = bisect_root(|t| crate::glm::sigmoid(t) - 1.0 + t, -5.0, 5.0);
        assert_relative_eq!(crate::glm::sigmoid(oracle) - 1.0 + oracle, 0.0, epsilon = 1e-14);
        assert_relative_eq!(oracle, 0.40106, epsilon = 1e-5);
        let (m, p) = one(1);
        let obs = [Observation::from_slice(1.0, &[1.0])];
        let r = map_estimate(LinkFunction::Logistic, &obs, &m, &p, &NewtonSettings::default()).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.estimate[0], oracle, epsilon = 1e-12);
    }

    #[test]
    fn map_on_separable_data_is_finite() {
        let obs: Vec<_> = (1..=20)
            .map(|i| {
                let x = i as f64 / 10.0 - 1.05;
                Observation::from_slice(if x > 0.0 { 1.0 } else { 0.0 }, &[x, 1.0])
            })
            .collect();
        let (m, p) = one(2);
        let settings = NewtonSettings::default();
        let r = map_estimate(LinkFunction::Logistic, &obs, &m, &p, &settings).unwrap();
        assert!(r.converged);
        let problem = Problem {
            model: LinkFunction::Logistic,
            observations: &obs,
            prior: Some(Prior { mean: &m, precision: &p }),
        };
        assert!(problem.gradient(&r.estimate).norm() <= settings.grad_tol);
        assert!(r.estimate.norm() < 10.0);
        // Without the prior the same data has no MLE: the iterates run off
        // while the gradient decays geometrically.
        let mle = mle_estimate(LinkFunction::Logistic, &obs, &settings).unwrap();
        assert!(!mle.converged || mle.estimate.norm() > 20.0, "{}", mle.estimate);
    }

    #[test]
    fn mle_closed_forms() {
        let s = NewtonSettings::default();
        let obs = [Observation::from_slice(1.0, &[1.0]), Observation::from_slice(0.0, &[1.0])];
        let r = mle_estimate(LinkFunction::Logistic, &obs, &s).unwrap();
        assert!(r.converged);
        assert!(r.estimate[0].abs() < 1e-12);

        let obs = [Observation::from_slice(2.0, &[1.0])];
        let r = mle_estimate(LinkFunction::Poisson, &obs, &s).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.estimate[0], 2f64.ln(), epsilon = 1e-12);
    }

    fn random_stream(model: LinkFunction, p: usize, n: usize, seed: u64) -> Vec<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..p).map(|j| 0.5 - j as f64 * 0.3).collect();
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                let eta: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
                let y = match model {
                    LinkFunction::Logistic => (rng.random::<f64>() < crate::glm::sigmoid(eta)) as u8 as f64,
                    LinkFunction::Poisson => {
                        let mut k = 0.0;
                        let mut acc = rng.random::<f64>().ln();
                        while acc > -eta.exp() {
                            k += 1.0;
                            acc += rng.random::<f64>().ln();
                        }
                        k
                    }
                };
                Observation::from_slice(y, &x)
            })
            .collect()
    }

    #[test]
    fn mle_random_stream_tight_gradient() {
        let obs = random_stream(LinkFunction::Logistic, 2, 200, 7);
        let r = mle_estimate(LinkFunction::Logistic, &obs, &NewtonSettings::default()).unwrap();
        assert!(r.converged);
        assert!(r.final_grad_norm <= 1e-8);
    }

    #[test]
    fn objective_decreases_monotonically() {
        for model in [LinkFunction::Logistic, LinkFunction::Poisson] {
            let obs = random_stream(model, 3, 300, 11);
            let (m, p) = one(3);
            let r = map_estimate(model, &obs, &(m.add_scalar(2.0)), &p, &NewtonSettings::default()).unwrap();
            for w in r.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn map_approaches_mle_as_prior_vanishes() {
        let obs = random_stream(LinkFunction::Logistic, 2, 400, 3);
        let s = NewtonSettings::default();
        let mle = mle_estimate(LinkFunction::Logistic, &obs, &s).unwrap();
        let prec = DMatrix::identity(2, 2) * 1e-8;
        let map = map_estimate(LinkFunction::Logistic, &obs, &DVector::zeros(2), &prec, &s).unwrap();
        assert!((&map.estimate - &mle.estimate).amax() < 1e-4);
    }

    #[test]
    fn rejects_bad_input() {
        let s = NewtonSettings::default();
        let bad_prior = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(matches!(
            map_estimate(LinkFunction::Logistic, &[], &DVector::zeros(1), &bad_prior, &s),
            Err(BooError::NotPositiveDefinite(_))
        ));
        let obs = [Observation::from_slice(1.0, &[1.0, 2.0])];
        assert!(matches!(
            map_estimate(LinkFunction::Logistic, &obs, &DVector::zeros(1), &DMatrix::identity(1, 1), &s),
            Err(BooError::DimensionMismatch { .. })
        ));
        assert!(mle_estimate(LinkFunction::Logistic, &[], &s).is_err());
        let bad = NewtonSettings { step_shrink: 1.5, ..s };
        assert!(mle_estimate(LinkFunction::Logistic, &obs, &bad).is_err());
    }
}
