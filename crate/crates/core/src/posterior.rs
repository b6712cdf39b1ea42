//! Gaussian approximate posterior and the two-phase one-pass estimator.
//!
//! For `t ≤ t₀` observations are buffered; at `t = t₀` the batch MAP over the
//! buffer becomes the mean and `Ω₀ + Σ b″(xₛᵀθ̂) xₛxₛᵀ` the precision. After
//! that each observation is used exactly once:
//!
//! ```text
//! Ωₜ = Ωₜ₋₁ + b″(xₜᵀθₜ₋₁) xₜxₜᵀ
//! θₜ = θₜ₋₁ − Ωₜ⁻¹ ∇ℓₜ(θₜ₋₁)
//! ```
//!
//! The mean step uses the *updated* precision. `Ωₜ⁻¹` is carried along with
//! Sherman–Morrison downdates and periodically re-factorized from `Ωₜ`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::batch::{map_estimate, NewtonSettings, SolveReport};
use crate::error::{check_dim, BooError, Result};
use crate::glm::{LinkFunction, Observation};
use crate::linalg::{add_rank_one, dist_to_identity, quad_form, spd_inverse, symmetrize};

/// Number of rank-one updates between re-factorizations of `Ωₜ`.
pub const REFACTOR_INTERVAL: usize = 1000;

/// `⌈M·(p·ln(max(p, 3)) + x)⌉`, the warm-start length.
pub fn default_t0(p: usize, x: f64, m: f64) -> usize {
    assert!(p >= 1, "dimension must be positive");
    let p = p as f64;
    let raw = m * (p * p.max(3.0).ln() + x);
    raw.ceil().max(0.0) as usize
}

/// `(Ω + scale·u uᵀ)⁻¹` from `inv = Ω⁻¹`.
///
/// # Panics
/// If `1 + scale·uᵀ inv u` is not a positive finite number, which cannot
/// happen for a positive definite `inv` and `scale ≥ 0` in exact arithmetic.
pub fn sherman_morrison_downdate(inv: &DMatrix<f64>, u: &DVector<f64>, scale: f64) -> DMatrix<f64> {
    let mut out = inv.clone();
    assert!(sherman_morrison_in_place(&mut out, u, scale), "rank-one denominator must be positive and finite");
    out
}

/// Returns false, leaving `inv` untouched, when the denominator has lost
/// positivity to round-off.
fn sherman_morrison_in_place(inv: &mut DMatrix<f64>, u: &DVector<f64>, scale: f64) -> bool {
    if scale == 0.0 {
        return true;
    }
    let w = &*inv * u;
    let denom = 1.0 + scale * u.dot(&w);
    if !(denom > 0.0 && denom.is_finite()) {
        return false;
    }
    add_rank_one(inv, -scale / denom, &w);
    symmetrize(inv);
    true
}

/// `N(mean, precision⁻¹)` with the inverse precision maintained alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    precision_inv: DMatrix<f64>,
    updates_since_refactor: usize,
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), precision.nrows())?;
        check_dim(mean.len(), precision.ncols())?;
        let precision_inv = spd_inverse(&precision, "posterior precision")?;
        Ok(GaussianPosterior {
            mean,
            precision,
            precision_inv,
            updates_since_refactor: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn precision_inv(&self) -> &DMatrix<f64> {
        &self.precision_inv
    }

    pub fn covariance_diag(&self) -> DVector<f64> {
        self.precision_inv.diagonal()
    }

    /// `‖Ω·Ω⁻¹ − I‖_F` for the maintained inverse.
    pub fn inverse_residual(&self) -> f64 {
        dist_to_identity(&(&self.precision * &self.precision_inv))
    }

    /// Replaces the maintained inverse with a fresh factorization of `Ω`.
    pub fn refactorize(&mut self) -> Result<()> {
        self.precision_inv = spd_inverse(&self.precision, "posterior precision")?;
        self.updates_since_refactor = 0;
        Ok(())
    }

    /// In-place version of [`online_update`].
    pub fn apply_update(&mut self, g: &DVector<f64>, h_scale: f64, x: &DVector<f64>) -> Result<()> {
        check_dim(self.dim(), g.len())?;
        check_dim(self.dim(), x.len())?;
        if !(h_scale >= 0.0) || !h_scale.is_finite() {
            return Err(BooError::InvalidArgument(format!("curvature scale {h_scale} must be finite and ≥ 0")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(BooError::NonFinite("gradient"));
        }
        if h_scale > 0.0 {
            add_rank_one(&mut self.precision, h_scale, x);
            self.updates_since_refactor += 1;
            if !sherman_morrison_in_place(&mut self.precision_inv, x, h_scale)
                || self.updates_since_refactor >= REFACTOR_INTERVAL
            {
                self.refactorize()?;
            }
        }
        self.mean -= &self.precision_inv * g;
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(BooError::NonFinite("posterior mean"));
        }
        Ok(())
    }
}

/// One closed-form step: `Ω' = Ω + h·x xᵀ`, `θ' = θ − Ω'⁻¹ g`.
pub fn online_update(
    post: &GaussianPosterior,
    g: &DVector<f64>,
    h_scale: f64,
    x: &DVector<f64>,
) -> Result<GaussianPosterior> {
    let mut next = post.clone();
    next.apply_update(g, h_scale, x)?;
    Ok(next)
}

/// Builds the warm-start posterior from the buffered observations.
pub fn warm_start_posterior(
    model: LinkFunction,
    buffer: &[Observation],
    prior_mean: &DVector<f64>,
    prior_precision: &DMatrix<f64>,
    settings: &NewtonSettings,
) -> Result<(GaussianPosterior, SolveReport)> {
    let report = map_estimate(model, buffer, prior_mean, prior_precision, settings)?;
    if !report.converged {
        return Err(BooError::NotConverged {
            iterations: report.iterations,
            grad_norm: report.final_grad_norm,
        });
    }
    let mut precision = prior_precision.clone();
    for obs in buffer {
        add_rank_one(&mut precision, model.b2(obs.x.dot(&report.estimate)), &obs.x);
    }
    let post = GaussianPosterior::new(report.estimate.clone(), precision)?;
    Ok((post, report))
}

/// `Vₜ = ‖Ωₜ^{1/2}(θₜ − θ⋆)‖²` and `‖θₜ − θ⋆‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationDiagnostics {
    pub v_t: f64,
    pub delta_norm: f64,
}

impl DeviationDiagnostics {
    pub fn compute(post: &GaussianPosterior, theta_star: &DVector<f64>) -> Result<Self> {
        check_dim(post.dim(), theta_star.len())?;
        let delta = post.mean() - theta_star;
        Ok(DeviationDiagnostics {
            v_t: quad_form(post.precision(), &delta).max(0.0),
            delta_norm: delta.norm(),
        })
    }
}

/// Static configuration of a [`BooEstimator`].
#[derive(Debug, Clone, PartialEq)]
pub struct BooConfig {
    pub model: LinkFunction,
    pub t0: usize,
    pub prior_mean: DVector<f64>,
    pub prior_precision: DMatrix<f64>,
    pub newton: NewtonSettings,
    /// Solve the MAP at every warm-start step so [`BooEstimator::estimate`]
    /// tracks it before `t₀`. Only `θ_{t₀}` affects the online phase.
    pub interior_map: bool,
}

impl BooConfig {
    /// Prior `N(0, I)` and default solver settings.
    pub fn new(model: LinkFunction, p: usize, t0: usize) -> Self {
        BooConfig {
            model,
            t0,
            prior_mean: DVector::zeros(p),
            prior_precision: DMatrix::identity(p, p),
            newton: NewtonSettings::default(),
            interior_map: false,
        }
    }

    pub fn with_prior(mut self, mean: DVector<f64>, precision: DMatrix<f64>) -> Self {
        self.prior_mean = mean;
        self.prior_precision = precision;
        self
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }
}

#[derive(Debug, Clone)]
enum Phase {
    Warming {
        buffer: Vec<Observation>,
        interior: Option<DVector<f64>>,
    },
    Online(GaussianPosterior),
    Failed(String),
}

/// Gradient and curvature used by one online step, evaluated at `θₜ₋₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineStep {
    pub gradient: DVector<f64>,
    pub h_scale: f64,
}

/// Single-stream state machine: warm-start buffer, then one-pass updates.
#[derive(Debug, Clone)]
pub struct BooEstimator {
    config: BooConfig,
    t: usize,
    phase: Phase,
    warm_report: Option<SolveReport>,
    exit_watch: Option<(DVector<f64>, f64)>,
    exit_time: Option<usize>,
}

impl BooEstimator {
    pub fn new(config: BooConfig) -> Result<Self> {
        let p = config.dim();
        if p == 0 {
            return Err(BooError::InvalidArgument("dimension must be positive".into()));
        }
        check_dim(p, config.prior_precision.nrows())?;
        check_dim(p, config.prior_precision.ncols())?;
        config.newton.validate()?;
        let phase = if config.t0 == 0 {
            Phase::Online(GaussianPosterior::new(
                config.prior_mean.clone(),
                config.prior_precision.clone(),
            )?)
        } else {
            spd_inverse(&config.prior_precision, "prior precision")?;
            Phase::Warming {
                buffer: Vec::with_capacity(config.t0),
                interior: None,
            }
        };
        Ok(BooEstimator {
            config,
            t: 0,
            phase,
            warm_report: None,
            exit_watch: None,
            exit_time: None,
        })
    }

    /// Records the first online step at which `‖θₜ − θ⋆‖ > radius`.
    pub fn track_exit(&mut self, theta_star: DVector<f64>, radius: f64) -> Result<()> {
        check_dim(self.config.dim(), theta_star.len())?;
        self.exit_watch = Some((theta_star, radius));
        Ok(())
    }

    pub fn exit_time(&self) -> Option<usize> {
        self.exit_time
    }

    pub fn config(&self) -> &BooConfig {
        &self.config
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn t0(&self) -> usize {
        self.config.t0
    }

    pub fn is_online(&self) -> bool {
        matches!(self.phase, Phase::Online(_))
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.phase, Phase::Failed(_))
    }

    /// Buffered warm-start observations (empty once online).
    pub fn warm_buffer(&self) -> &[Observation] {
        match &self.phase {
            Phase::Warming { buffer, .. } => buffer,
            _ => &[],
        }
    }

    pub fn posterior(&self) -> Option<&GaussianPosterior> {
        match &self.phase {
            Phase::Online(post) => Some(post),
            _ => None,
        }
    }

    /// Newton report of the warm-start MAP solve, once it has run.
    pub fn warm_start_report(&self) -> Option<&SolveReport> {
        self.warm_report.as_ref()
    }

    /// Current point estimate: the posterior mean once online, otherwise the
    /// latest interior MAP (if enabled) or the prior mean.
    pub fn estimate(&self) -> &DVector<f64> {
        match &self.phase {
            Phase::Online(post) => post.mean(),
            Phase::Warming {
                interior: Some(theta), ..
            } => theta,
            _ => &self.config.prior_mean,
        }
    }

    fn fail(&mut self, err: BooError) -> BooError {
        self.phase = Phase::Failed(err.to_string());
        err
    }

    /// Consumes one observation. Returns the step quantities for online
    /// updates and `None` during the warm start.
    pub fn ingest(&mut self, obs: &Observation) -> Result<Option<OnlineStep>> {
        if let Phase::Failed(msg) = &self.phase {
            return Err(BooError::Failed(msg.clone()));
        }
        check_dim(self.config.dim(), obs.dim())?;
        self.config.model.validate(obs)?;

        let next_t = self.t + 1;
        match &mut self.phase {
            Phase::Warming { buffer, interior } => {
                buffer.push(obs.clone());
                self.t = next_t;
                if next_t == self.config.t0 {
                    let buffer = std::mem::take(buffer);
                    match warm_start_posterior(
                        self.config.model,
                        &buffer,
                        &self.config.prior_mean,
                        &self.config.prior_precision,
                        &self.config.newton,
                    ) {
                        Ok((post, report)) => {
                            self.warm_report = Some(report);
                            self.phase = Phase::Online(post);
                        }
                        Err(e) => return Err(self.fail(e)),
                    }
                } else if self.config.interior_map {
                    let report = map_estimate(
                        self.config.model,
                        buffer,
                        &self.config.prior_mean,
                        &self.config.prior_precision,
                        &self.config.newton,
                    )?;
                    *interior = Some(report.estimate);
                }
                Ok(None)
            }
            Phase::Online(post) => {
                let (residual, h_scale) = self.config.model.residual_and_scale(obs, post.mean())?;
                let gradient = &obs.x * residual;
                if let Err(e) = post.apply_update(&gradient, h_scale, &obs.x) {
                    return Err(self.fail(e));
                }
                self.t = next_t;
                if self.exit_time.is_none() {
                    if let Some((theta_star, radius)) = &self.exit_watch {
                        if (post.mean() - theta_star).norm() > *radius {
                            self.exit_time = Some(next_t);
                        }
                    }
                }
                Ok(Some(OnlineStep { gradient, h_scale }))
            }
            Phase::Failed(_) => unreachable!(),
        }
    }

    pub fn diagnostics(&self, theta_star: &DVector<f64>) -> Result<DeviationDiagnostics> {
        match &self.phase {
            Phase::Online(post) => DeviationDiagnostics::compute(post, theta_star),
            _ => Err(BooError::InvalidArgument(format!(
                "diagnostics need t ≥ t₀ = {} (t = {})",
                self.config.t0, self.t
            ))),
        }
    }

    pub fn snapshot(&self) -> Option<PosteriorSnapshot> {
        self.posterior().map(|post| PosteriorSnapshot::new(self.t, post))
    }

    /// Resumes an online-phase estimator from a checkpoint.
    pub fn restore(config: BooConfig, snapshot: &PosteriorSnapshot) -> Result<Self> {
        if snapshot.t < config.t0 {
            return Err(BooError::InvalidArgument(format!(
                "snapshot at t = {} precedes t₀ = {}",
                snapshot.t, config.t0
            )));
        }
        let post = snapshot.to_posterior()?;
        check_dim(config.dim(), post.dim())?;
        let mut est = BooEstimator::new(config)?;
        est.t = snapshot.t;
        est.phase = Phase::Online(post);
        Ok(est)
    }
}

/// Flat checkpoint record `{p, t, mean[], precision_row_major[]}`.
///
/// Binary layout (little endian): `u64 p`, `u64 t`, `p × f64` mean,
/// `p² × f64` precision in row-major order. The JSON form uses the same
/// field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub p: usize,
    pub t: usize,
    pub mean: Vec<f64>,
    pub precision_row_major: Vec<f64>,
}

impl PosteriorSnapshot {
    pub fn new(t: usize, post: &GaussianPosterior) -> Self {
        let p = post.dim();
        let precision = post.precision();
        let precision_row_major = (0..p).flat_map(|i| (0..p).map(move |j| precision[(i, j)])).collect();
        PosteriorSnapshot {
            p,
            t,
            mean: post.mean().iter().copied().collect(),
            precision_row_major,
        }
    }

    pub fn to_posterior(&self) -> Result<GaussianPosterior> {
        check_dim(self.p, self.mean.len())?;
        check_dim(self.p * self.p, self.precision_row_major.len())?;
        GaussianPosterior::new(
            DVector::from_column_slice(&self.mean),
            DMatrix::from_row_slice(self.p, self.p, &self.precision_row_major),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: PosteriorSnapshot =
            serde_json::from_str(s).map_err(|e| BooError::InvalidArgument(format!("snapshot JSON: {e}")))?;
        check_dim(snap.p, snap.mean.len())?;
        check_dim(snap.p * snap.p, snap.precision_row_major.len())?;
        Ok(snap)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.p as u64).to_le_bytes())?;
        w.write_all(&(self.t as u64).to_le_bytes())?;
        for v in self.mean.iter().chain(&self.precision_row_major) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.p + self.p * self.p));
        self.write_binary(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |e: std::io::Error| BooError::InvalidArgument(format!("snapshot bytes: {e}"));
        let mut word = [0u8; 8];
        r.read_exact(&mut word).map_err(bad)?;
        let p = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word).map_err(bad)?;
        let t = u64::from_le_bytes(word) as usize;
        if p == 0 || p > 1 << 16 {
            return Err(BooError::InvalidArgument(format!("snapshot dimension {p} out of range")));
        }
        let mut read_vec = |len: usize| -> Result<Vec<f64>> {
            (0..len)
                .map(|_| {
                    r.read_exact(&mut word).map_err(bad)?;
                    Ok(f64::from_le_bytes(word))
                })
                .collect()
        };
        let mean = read_vec(p)?;
        let precision_row_major = read_vec(p * p)?;
        Ok(PosteriorSnapshot {
            p,
            t,
            mean,
            precision_row_major,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_binary(bytes)
    }
}
