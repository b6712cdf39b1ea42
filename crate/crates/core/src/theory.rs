//! Numerical verifiers for the inequalities behind the convergence analysis.
//!
//! All checks are report-only: they return what they measured and whether
//! each inequality held, and only fail on malformed input or estimator errors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{make_theta_star, rng_for, sample_stream, CovariateStyle, DesignSpec, TruthSpec};
use crate::error::{check_dim, BooError, Result};
use crate::glm::{LinkFunction, Observation};
use crate::linalg::{add_rank_one, cholesky, eigenvalues_sorted, log_det_spd, min_eigenvalue, quad_form, sym_inv_sqrt};
use crate::posterior::{default_t0, BooConfig, BooEstimator};

/// Terms of `Vₜ = Vₜ₋₁ + ⟨Hₜ, Δₜ₋₁⊗²⟩ − 2⟨gₜ, Δₜ₋₁⟩ + ⟨gₜ, Ωₜ⁻¹gₜ⟩` at one step,
/// with `Δ = θ − θ⋆` and `V = ΔᵀΩΔ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionRecord {
    pub t: usize,
    pub v_prev: f64,
    pub v_t: f64,
    pub h_quad: f64,
    pub g_dot: f64,
    /// `gᵀΩₜ⁻¹g` with the Sherman–Morrison-maintained inverse.
    pub g_quad: f64,
    /// `gᵀΩₜ⁻¹g` with a fresh Cholesky solve.
    pub g_quad_fresh: f64,
}

impl RecursionRecord {
    pub fn residual(&self) -> f64 {
        (self.v_t - self.v_prev - self.h_quad + 2.0 * self.g_dot - self.g_quad).abs()
    }

    pub fn residual_fresh(&self) -> f64 {
        (self.v_t - self.v_prev - self.h_quad + 2.0 * self.g_dot - self.g_quad_fresh).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionTrace {
    pub t0: usize,
    pub records: Vec<RecursionRecord>,
    pub max_residual: f64,
    pub max_residual_fresh: f64,
    /// `max |g_quad − g_quad_fresh|`.
    pub max_inverse_disagreement: f64,
}

impl RecursionTrace {
    /// `V_{t₀}, V_{t₀+1}, …` as recorded along the online phase.
    pub fn v_trace(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.records.len() + 1);
        if let Some(first) = self.records.first() {
            out.push(first.v_prev);
        }
        out.extend(self.records.iter().map(|r| r.v_t));
        out
    }
}

/// Runs the estimator over `stream` and logs the four recursion terms at
/// every online step.
pub fn check_recursion_identity(stream: &[Observation], config: &BooConfig, theta_star: &DVector<f64>) -> Result<RecursionTrace> {
    if config.t0 == 0 {
        return Err(BooError::InvalidArgument("recursion check needs t₀ ≥ 1".into()));
    }
    check_dim(config.dim(), theta_star.len())?;
    let mut est = BooEstimator::new(config.clone())?;
    let mut records = Vec::new();
    for obs in stream {
        let before = est.posterior().map(|post| (post.mean() - theta_star, post.precision().clone()));
        let step = est.ingest(obs)?;
        let (Some((delta, omega_prev)), Some(step)) = (before, step) else {
            continue;
        };
        let post = est.posterior().expect("online after an online step");
        let g = &step.gradient;
        let xd = obs.x.dot(&delta);
        let fresh = cholesky(post.precision(), "posterior precision")?.solve(g);
        records.push(RecursionRecord {
            t: est.t(),
            v_prev: quad_form(&omega_prev, &delta),
            v_t: quad_form(post.precision(), &(post.mean() - theta_star)),
            h_quad: step.h_scale * xd * xd,
            g_dot: g.dot(&delta),
            g_quad: quad_form(post.precision_inv(), g),
            g_quad_fresh: g.dot(&fresh),
        });
    }
    let max_of = |f: &dyn Fn(&RecursionRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    Ok(RecursionTrace {
        t0: config.t0,
        max_residual: max_of(&|r| r.residual()),
        max_residual_fresh: max_of(&|r| r.residual_fresh()),
        max_inverse_disagreement: max_of(&|r| (r.g_quad - r.g_quad_fresh).abs()),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticReport {
    /// `Σₛ hₛ xₛᵀ Ωₛ⁻¹ xₛ` over the online phase.
    pub lhs: f64,
    /// `log det Ωₜ − log det Ω_{t₀}`.
    pub rhs: f64,
    pub holds: bool,
    pub steps: usize,
}

/// Elliptic potential sum for rank-one curvature updates `(hₛ, xₛ)` applied
/// to `omega0`. Each `Ωₛ⁻¹` comes from a fresh factorization.
pub fn elliptic_potential(omega0: &DMatrix<f64>, updates: &[(f64, DVector<f64>)]) -> Result<EllipticReport> {
    let mut omega = omega0.clone();
    let start = log_det_spd(omega0, "initial precision")?;
    let mut lhs = 0.0;
    for (h, x) in updates {
        check_dim(omega.nrows(), x.len())?;
        if *h == 0.0 {
            continue;
        }
        add_rank_one(&mut omega, *h, x);
        let solved = cholesky(&omega, "posterior precision")?.solve(x);
        lhs += h * x.dot(&solved);
    }
    let rhs = log_det_spd(&omega, "posterior precision")? - start;
    Ok(EllipticReport { lhs, rhs, holds: lhs <= rhs + 1e-9, steps: updates.len() })
}

/// Runs the estimator and checks the elliptic potential inequality on the
/// curvature updates it actually applied.
pub fn check_elliptic_potential(stream: &[Observation], config: &BooConfig) -> Result<EllipticReport> {
    let mut est = BooEstimator::new(config.clone())?;
    let mut omega0 = None;
    let mut updates = Vec::new();
    for obs in stream {
        if omega0.is_none() {
            omega0 = est.posterior().map(|post| post.precision().clone());
        }
        if let Some(step) = est.ingest(obs)? {
            updates.push((step.h_scale, obs.x.clone()));
        }
    }
    match omega0 {
        Some(omega0) => elliptic_potential(&omega0, &updates),
        None => Err(BooError::InvalidArgument(format!(
            "stream of length {} never reaches the online phase (t₀ = {})",
            stream.len(),
            config.t0
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicConstants {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DyadicHypothesis {
    /// `Xₜ ≤ Xₜ₋₁ + aₜ₋₁Xₜ₋₁^{3/2} + bₜ`
    Recursion,
    /// `X_{τ₀} ≤ D₀(p + x)`
    InitialLevel,
    /// `Σ_{r=s}^{t} aᵣ ≤ D₁ s^{−1/2}`
    DriftSum,
    /// `Σ_{r=τ₀+1}^{t} bᵣ ≤ D₂ p log t + D₃(x + log t)`
    NoiseSum,
    /// `τ₀ ≥ ⌈M(p log(p ∨ 3) + x)⌉`
    WarmStartLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFailure {
    pub hypothesis: DyadicHypothesis,
    /// First time index at which it failed.
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicBlock {
    pub k: usize,
    pub start: usize,
    pub end: usize,
    pub a_sum: f64,
    pub s_k: f64,
    pub c_k: f64,
    /// `A_k ≤ (C_k − 1)/(C_k^{3/2} √(S_k ∨ 1))`
    pub drift_condition: bool,
    /// `S_k ≤ P_k H_{τ_{k+1}}`
    pub level_condition: bool,
    pub max_x: f64,
    /// `Xₜ ≤ C_k S_k` on the block.
    pub block_bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicReport {
    pub tau0: usize,
    pub tau_star: usize,
    pub failures: Vec<HypothesisFailure>,
    pub blocks: Vec<DyadicBlock>,
    /// `max_t 2.5 (D₀(p+x) + D₂ p log 2t + D₃(x + log 2t)) / (p log t + x)`.
    pub k_chase: f64,
    /// `max_t Xₜ / (p log t + x)`.
    pub k_observed: f64,
    /// `Xₜ ≤ k_chase (p log t + x)` for every `t`.
    pub conclusion_holds: bool,
}

impl DyadicReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn block_conditions_hold(&self) -> bool {
        self.blocks.iter().all(|b| b.drift_condition && b.level_condition)
    }
}

fn rate(p: usize, x: f64, t: usize) -> f64 {
    p as f64 * (t as f64).ln() + x
}

fn noise_envelope(c: &DyadicConstants, p: usize, x: f64, t: f64) -> f64 {
    c.d2 * p as f64 * t.ln() + c.d3 * (x + t.ln())
}

/// Checks the dyadic-block induction on sequences indexed by
/// `t = τ₀, τ₀+1, …, τ*`: entry `i` of each slice is the value at `τ₀ + i`
/// (`b_seq[0]` is unused).
pub fn check_dyadic_bound(
    x_trace: &[f64],
    a_seq: &[f64],
    b_seq: &[f64],
    tau0: usize,
    p: usize,
    x: f64,
    constants: DyadicConstants,
) -> Result<DyadicReport> {
    let len = x_trace.len();
    if tau0 == 0 || len < 2 {
        return Err(BooError::InvalidArgument("dyadic check needs τ₀ ≥ 1 and τ* > τ₀".into()));
    }
    check_dim(len, a_seq.len())?;
    check_dim(len, b_seq.len())?;
    if x_trace.iter().chain(a_seq).any(|v| !(*v >= 0.0) || !v.is_finite()) || b_seq.iter().any(|v| !v.is_finite()) {
        return Err(BooError::InvalidArgument("X and a must be finite and ≥ 0; b finite".into()));
    }
    let tau_star = tau0 + len - 1;
    let at = |t: usize| t - tau0;
    let mut failures = Vec::new();
    let mut fail = |hypothesis, t| failures.push(HypothesisFailure { hypothesis, t });

    for t in tau0 + 1..=tau_star {
        let prev = x_trace[at(t - 1)];
        let bound = prev + a_seq[at(t - 1)] * prev.powf(1.5) + b_seq[at(t)];
        if x_trace[at(t)] > bound + 1e-12 * bound.abs().max(1.0) {
            fail(DyadicHypothesis::Recursion, t);
            break;
        }
    }
    if x_trace[0] > constants.d0 * (p as f64 + x) {
        fail(DyadicHypothesis::InitialLevel, tau0);
    }
    // a ≥ 0, so the suffix up to τ* is the binding sum for each s.
    let mut suffix = 0.0;
    let mut drift_fail = None;
    for s in (tau0..=tau_star).rev() {
        suffix += a_seq[at(s)];
        if suffix > constants.d1 / (s as f64).sqrt() {
            drift_fail = Some(s);
        }
    }
    if let Some(s) = drift_fail {
        fail(DyadicHypothesis::DriftSum, s);
    }
    // Partial sums of b and the running max B_t.
    let mut partial = vec![0.0; len];
    let mut running_max = vec![0.0f64; len];
    for t in tau0 + 1..=tau_star {
        partial[at(t)] = partial[at(t - 1)] + b_seq[at(t)];
        running_max[at(t)] = running_max[at(t - 1)].max(partial[at(t)]);
    }
    if let Some(t) = (tau0 + 1..=tau_star).find(|&t| partial[at(t)] > noise_envelope(&constants, p, x, t as f64)) {
        fail(DyadicHypothesis::NoiseSum, t);
    }
    if tau0 < default_t0(p, x, constants.m) {
        fail(DyadicHypothesis::WarmStartLength, tau0);
    }

    let h = |t: usize| x_trace[0] + running_max[at(t)];
    let mut blocks = Vec::new();
    let mut product = 1.0;
    let mut drift_mass = 0.0; // Σ_{t=τ₀+1}^{τ_k} a_{t−1} X_{t−1}^{3/2}
    let mut start = tau0;
    let mut k = 0usize;
    while start < tau_star {
        let end = (tau0.saturating_mul(1usize << (k + 1).min(62))).min(tau_star);
        let a_sum: f64 = (start..=end).map(|t| a_seq[at(t)]).sum();
        let s_k = h(end) + drift_mass;
        let c_k = 1.0 + 2f64.powf(-(k as f64) / 4.0) / 7.0;
        let max_x = (start..=end).map(|t| x_trace[at(t)]).fold(0.0, f64::max);
        blocks.push(DyadicBlock {
            k,
            start,
            end,
            a_sum,
            s_k,
            c_k,
            drift_condition: a_sum <= (c_k - 1.0) / (c_k.powf(1.5) * s_k.max(1.0).sqrt()),
            level_condition: s_k <= product * h(end) * (1.0 + 1e-12),
            max_x,
            block_bound_holds: max_x <= c_k * s_k * (1.0 + 1e-12),
        });
        for t in start + 1..=end {
            drift_mass += a_seq[at(t - 1)] * x_trace[at(t - 1)].powf(1.5);
        }
        product *= c_k;
        start = end;
        k += 1;
    }

    let t_range = || (tau0.max(2)..=tau_star).filter(|&t| rate(p, x, t) > 0.0);
    let k_chase = t_range()
        .map(|t| 2.5 * (constants.d0 * (p as f64 + x) + noise_envelope(&constants, p, x, 2.0 * t as f64)) / rate(p, x, t))
        .fold(0.0, f64::max);
    let k_observed = t_range().map(|t| x_trace[at(t)] / rate(p, x, t)).fold(0.0, f64::max);
    let conclusion_holds = t_range().all(|t| x_trace[at(t)] <= k_chase * rate(p, x, t) * (1.0 + 1e-12));
    Ok(DyadicReport { tau0, tau_star, failures, blocks, k_chase, k_observed, conclusion_holds })
}

/// Smallest constants for which the three sequence hypotheses hold, with the
/// noise mass split evenly between `D₂` and `D₃`.
pub fn fit_dyadic_constants(x_trace: &[f64], a_seq: &[f64], b_seq: &[f64], tau0: usize, p: usize, x: f64, m: f64) -> DyadicConstants {
    let tiny = f64::MIN_POSITIVE;
    let d0 = (x_trace[0] / (p as f64 + x)).max(tiny);
    let mut suffix = 0.0;
    let mut d1 = tiny;
    for i in (0..a_seq.len()).rev() {
        suffix += a_seq[i];
        d1 = d1.max(suffix * ((tau0 + i) as f64).sqrt());
    }
    let mut partial = 0.0;
    let mut d23 = tiny;
    for (i, b) in b_seq.iter().enumerate().skip(1) {
        partial += b;
        let t = (tau0 + i) as f64;
        d23 = d23.max(partial / (p as f64 * t.ln() + x + t.ln()));
    }
    DyadicConstants { d0, d1, d2: d23, d3: d23, m }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularitySettings {
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for RegularitySettings {
    fn default() -> Self {
        RegularitySettings { radius: 1.0, samples: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub radius: f64,
    pub n: usize,
    pub max_x_norm: f64,
    /// `(1 ∨ r) max ‖xₜ‖`.
    pub k_max: f64,
    /// `min λ_min(Σₛ∇²ℓₛ(θ̄ₛ)) / t` over sampled trajectories and `t ≥ p`.
    pub min_eigen_slope: f64,
    /// `max |b″(xᵀθ) − b″(xᵀθ′)| ‖x‖² / ‖θ − θ′‖`.
    pub lipschitz_ratio: f64,
    /// `max |log λ(F_θ^{−1/2} F_{θ+h} F_θ^{−1/2})| / ‖h‖`.
    pub sandwich_k: f64,
    /// `max_t b″(xₜᵀθ) ‖xₜ‖²`.
    pub max_hessian_norm: f64,
    /// `¼ max ‖xₜ‖²`.
    pub hessian_norm_bound: f64,
}

fn ball_point(center: &DVector<f64>, radius: f64, rng: &mut impl Rng) -> DVector<f64> {
    let p = center.len();
    let dir = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u: f64 = rng.random();
    center + dir.normalize() * (radius * u.powf(1.0 / p as f64))
}

fn information(covariates: &[DVector<f64>], theta: &DVector<f64>) -> DMatrix<f64> {
    let p = theta.len();
    let mut f = DMatrix::zeros(p, p);
    for x in covariates {
        add_rank_one(&mut f, LinkFunction::Logistic.b2(x.dot(theta)), x);
    }
    f
}

/// Empirical regularity constants of the logistic loss on `Θ_r = B(θ⋆, r)`.
pub fn check_logistic_regularity(
    covariates: &[DVector<f64>],
    theta_star: &DVector<f64>,
    settings: RegularitySettings,
) -> Result<RegularityReport> {
    let p = theta_star.len();
    let n = covariates.len();
    if n == 0 || settings.samples == 0 || !(settings.radius > 0.0) {
        return Err(BooError::InvalidArgument("regularity check needs covariates, samples ≥ 1 and r > 0".into()));
    }
    for x in covariates {
        check_dim(p, x.len())?;
    }
    let model = LinkFunction::Logistic;
    let r = settings.radius;
    let mut rng = rng_for(settings.seed, 0);
    let max_x_norm = covariates.iter().map(|x| x.norm()).fold(0.0, f64::max);

    let mut min_eigen_slope = f64::INFINITY;
    let checkpoints: Vec<usize> = {
        let mut c: Vec<usize> = (0..=20)
            .map(|i| ((p as f64) * ((n as f64) / p as f64).powf(i as f64 / 20.0)).round() as usize)
            .filter(|&t| t >= p && t <= n)
            .collect();
        c.dedup();
        c
    };
    let mut max_hessian_norm = 0.0f64;
    for _ in 0..settings.samples {
        let mut f = DMatrix::zeros(p, p);
        let mut next = 0;
        for (s, x) in covariates.iter().enumerate() {
            let theta = ball_point(theta_star, r, &mut rng);
            let w = model.b2(x.dot(&theta));
            max_hessian_norm = max_hessian_norm.max(w * x.norm_squared());
            add_rank_one(&mut f, w, x);
            if next < checkpoints.len() && s + 1 == checkpoints[next] {
                min_eigen_slope = min_eigen_slope.min(min_eigenvalue(&f) / (s + 1) as f64);
                next += 1;
            }
        }
    }

    let mut lipschitz_ratio = 0.0f64;
    let mut sandwich_k = 0.0f64;
    for _ in 0..settings.samples {
        let theta = ball_point(theta_star, r, &mut rng);
        let other = ball_point(theta_star, r, &mut rng);
        let h = &other - &theta;
        let h_norm = h.norm();
        if h_norm == 0.0 {
            continue;
        }
        for x in covariates {
            let diff = (model.b2(x.dot(&theta)) - model.b2(x.dot(&other))).abs();
            lipschitz_ratio = lipschitz_ratio.max(diff * x.norm_squared() / h_norm);
        }
        let f_theta = information(covariates, &theta);
        if cholesky(&f_theta, "information").is_err() {
            continue;
        }
        let root = sym_inv_sqrt(&f_theta, "information")?;
        let rel = &root * information(covariates, &other) * &root;
        let worst = eigenvalues_sorted(&rel).iter().map(|l| l.ln().abs()).fold(0.0, f64::max);
        sandwich_k = sandwich_k.max(worst / h_norm);
    }

    Ok(RegularityReport {
        radius: r,
        n,
        max_x_norm,
        k_max: r.max(1.0) * max_x_norm,
        min_eigen_slope: if min_eigen_slope.is_finite() { min_eigen_slope } else { 0.0 },
        lipschitz_ratio,
        sandwich_k,
        max_hessian_norm,
        hessian_norm_bound: 0.25 * max_x_norm * max_x_norm,
    })
}

/// Everything the `check` subcommand runs, as one JSON-serializable record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub recursion: Vec<SuiteRecursionEntry>,
    pub elliptic: Vec<SuiteEllipticEntry>,
    pub dyadic: DyadicReport,
    pub regularity: RegularityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRecursionEntry {
    pub model: LinkFunction,
    pub p: usize,
    pub max_residual: f64,
    pub max_residual_fresh: f64,
    pub max_inverse_disagreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEllipticEntry {
    pub model: LinkFunction,
    pub p: usize,
    pub report: EllipticReport,
}

impl SuiteReport {
    pub fn all_hold(&self) -> bool {
        self.recursion.iter().all(|r| r.max_residual <= 1e-8 && r.max_residual_fresh <= 1e-8 && r.max_inverse_disagreement <= 1e-7)
            && self.elliptic.iter().all(|e| e.report.holds)
            && self.dyadic.conclusion_holds
            && self.regularity.max_hessian_norm <= self.regularity.hessian_norm_bound * (1.0 + 1e-12)
    }
}

/// Benchmark design for the theory checks: Gaussian covariates for the
/// logistic model, unit-sphere covariates for Poisson.
pub fn check_design(model: LinkFunction, p: usize, n: usize, seed: u64) -> DesignSpec {
    let covariate_style = match model {
        LinkFunction::Logistic => CovariateStyle::GaussianIdentity,
        LinkFunction::Poisson => CovariateStyle::NormalizedGaussian,
    };
    DesignSpec { p, n, model, covariate_style, seed }
}

pub fn run_suite(seed: u64, n: usize) -> Result<SuiteReport> {
    let mut recursion = Vec::new();
    let mut elliptic = Vec::new();
    let mut boo_trace = None;
    for model in [LinkFunction::Logistic, LinkFunction::Poisson] {
        for p in [1usize, 3, 10] {
            let design = check_design(model, p, n, seed);
            let truth = TruthSpec::standard(p, 0.0);
            let stream: Vec<_> = sample_stream(&design, &truth, 0)?.collect();
            let config = BooConfig::new(model, p, default_t0(p, 5.0, 1.0));
            let trace = check_recursion_identity(&stream, &config, &truth.theta_star)?;
            recursion.push(SuiteRecursionEntry {
                model,
                p,
                max_residual: trace.max_residual,
                max_residual_fresh: trace.max_residual_fresh,
                max_inverse_disagreement: trace.max_inverse_disagreement,
            });
            elliptic.push(SuiteEllipticEntry { model, p, report: check_elliptic_potential(&stream, &config)? });
            if model == LinkFunction::Logistic && p == 10 {
                boo_trace = Some(trace);
            }
        }
    }
    let trace = boo_trace.expect("logistic p = 10 is in the matrix");
    let (p, xconf) = (10, 5.0);
    let v = trace.v_trace();
    let a = vec![0.0; v.len()];
    let mut b = vec![0.0; v.len()];
    for i in 1..v.len() {
        b[i] = v[i] - v[i - 1];
    }
    let constants = fit_dyadic_constants(&v, &a, &b, trace.t0, p, xconf, 1.0);
    let dyadic = check_dyadic_bound(&v, &a, &b, trace.t0, p, xconf, constants)?;

    let design = check_design(LinkFunction::Logistic, 5, n.min(2000), seed);
    let covariates: Vec<_> = sample_stream(&design, &TruthSpec::standard(5, 0.0), 1)?
        .map(|o| o.x.normalize())
        .collect();
    let regularity = check_logistic_regularity(&covariates, &make_theta_star(5), RegularitySettings { seed, ..Default::default() })?;
    Ok(SuiteReport { recursion, elliptic, dyadic, regularity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn stream(model: LinkFunction, p: usize, n: usize, seed: u64) -> Vec<Observation> {
        sample_stream(&check_design(model, p, n, seed), &TruthSpec::standard(p, 0.0), 0).unwrap().collect()
    }

    #[test]
    fn recursion_identity_on_seeded_stream() {
        let obs = stream(LinkFunction::Logistic, 3, 500, 7);
        let config = BooConfig::new(LinkFunction::Logistic, 3, default_t0(3, 5.0, 1.0));
        let trace = check_recursion_identity(&obs, &config, &make_theta_star(3)).unwrap();
        assert_eq!(trace.records.len(), 500 - config.t0);
        assert!(trace.max_residual <= 1e-8, "{}", trace.max_residual);
        assert!(trace.max_inverse_disagreement <= 1e-7);
    }

    #[test]
    fn recursion_zero_covariates() {
        let obs: Vec<_> = (0..20).map(|_| Observation::from_slice(1.0, &[0.0, 0.0])).collect();
        let config = BooConfig::new(LinkFunction::Logistic, 2, 5);
        let trace = check_recursion_identity(&obs, &config, &v(&[0.5, 0.5])).unwrap();
        for r in &trace.records {
            assert_eq!((r.h_quad, r.g_dot, r.g_quad), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn recursion_scalar_hand_evaluation() {
        // t₀ = 1 with prior N(0, 1); after the warm start the mean is the MAP
        // m of one logistic observation, then two online steps.
        let obs = [Observation::from_slice(1.0, &[1.0]), Observation::from_slice(0.0, &[2.0]), Observation::from_slice(1.0, &[-1.0])];
        let config = BooConfig::new(LinkFunction::Logistic, 1, 1);
        let star = v(&[0.2]);
        let trace = check_recursion_identity(&obs, &config, &star).unwrap();
        assert_eq!(trace.records.len(), 2);

        let sig = crate::glm::sigmoid;
        let m = crate::batch::map_estimate(LinkFunction::Logistic, &obs[..1], &v(&[0.0]), &DMatrix::identity(1, 1), &Default::default())
            .unwrap()
            .estimate[0];
        let mut theta = m;
        let mut omega = 1.0 + sig(m) * (1.0 - sig(m));
        for (rec, o) in trace.records.iter().zip(&obs[1..]) {
            let x = o.x[0];
            let d = theta - 0.2;
            let g = (sig(x * theta) - o.y) * x;
            let h = sig(x * theta) * (1.0 - sig(x * theta)) * x * x;
            let v_prev = omega * d * d;
            omega += h;
            theta -= g / omega;
            assert_relative_eq!(rec.v_prev, v_prev, epsilon = 1e-14);
            assert_relative_eq!(rec.h_quad, h * d * d, epsilon = 1e-14);
            assert_relative_eq!(rec.g_dot, g * d, epsilon = 1e-14);
            assert_relative_eq!(rec.g_quad, g * g / omega, epsilon = 1e-14);
            assert_relative_eq!(rec.v_t, omega * (theta - 0.2).powi(2), epsilon = 1e-14);
        }
    }

    #[test]
    fn recursion_needs_warm_start() {
        let config = BooConfig::new(LinkFunction::Logistic, 1, 0);
        assert!(check_recursion_identity(&[], &config, &v(&[0.0])).is_err());
    }

    #[test]
    fn elliptic_zero_curvature() {
        let r = elliptic_potential(&DMatrix::identity(2, 2), &[(0.0, v(&[1.0, 1.0])), (0.5, v(&[0.0, 0.0]))]).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.rhs.abs() < 1e-15);
        assert!(r.holds);
    }

    #[test]
    fn elliptic_scalar_rank_one() {
        let omega0 = 2.0;
        for &h in &[0.1, 1.0, 10.0] {
            let r = elliptic_potential(&DMatrix::from_element(1, 1, omega0), &[(h, v(&[1.0]))]).unwrap();
            assert_relative_eq!(r.lhs, h / (omega0 + h), epsilon = 1e-14);
            assert_relative_eq!(r.rhs, (1.0 + h / omega0).ln(), epsilon = 1e-14);
            assert!(r.holds);
        }
    }

    #[test]
    fn elliptic_on_seeded_stream() {
        let obs = stream(LinkFunction::Logistic, 5, 1000, 3);
        let config = BooConfig::new(LinkFunction::Logistic, 5, default_t0(5, 5.0, 1.0));
        let r = check_elliptic_potential(&obs, &config).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.lhs > 0.0);
    }

    fn constants() -> DyadicConstants {
        DyadicConstants { d0: 1.0, d1: 0.01, d2: 1.0, d3: 1.0, m: 1.0 }
    }

    #[test]
    fn dyadic_no_growth() {
        let n = 200;
        let xs = vec![3.0; n];
        let zeros = vec![0.0; n];
        let r = check_dyadic_bound(&xs, &zeros, &zeros, 29, 10, 5.0, constants()).unwrap();
        assert!(r.hypotheses_hold(), "{:?}", r.failures);
        assert!(r.block_conditions_hold());
        assert!(r.conclusion_holds);
        assert!(r.blocks.iter().all(|b| b.block_bound_holds));
        assert_eq!(r.blocks[0].start, 29);
        assert_eq!(r.blocks[0].end, 58);
        assert_eq!(r.blocks.last().unwrap().end, 29 + n - 1);
        // With nothing else contributing, K is driven by the D₀ term.
        assert!(r.k_chase >= 2.5 * 15.0 / (10.0 * (228f64).ln() + 5.0));
    }

    #[test]
    fn dyadic_tight_drift_envelope() {
        let (tau0, n, p, x) = (29usize, 4000usize, 10usize, 5.0);
        let c = constants();
        let a: Vec<f64> = (0..n)
            .map(|i| {
                let t = (tau0 + i) as f64;
                c.d1 * (t.powf(-0.5) - (t + 1.0).powf(-0.5))
            })
            .collect();
        let mut b = vec![0.0; n];
        for (i, bi) in b.iter_mut().enumerate().skip(1) {
            let t = (tau0 + i) as f64;
            // Increments of the noise envelope itself, scaled inside it.
            *bi = 0.9 * (noise_envelope(&c, p, x, t) - noise_envelope(&c, p, x, t - 1.0));
        }
        let mut xs = vec![c.d0 * (p as f64 + x); n];
        for i in 1..n {
            xs[i] = xs[i - 1] + a[i - 1] * xs[i - 1].powf(1.5) + b[i];
        }
        let r = check_dyadic_bound(&xs, &a, &b, tau0, p, x, c).unwrap();
        assert!(r.hypotheses_hold(), "{:?}", r.failures);
        assert!(r.block_conditions_hold());
        assert!(r.blocks.iter().all(|b| b.block_bound_holds));
        assert!(r.conclusion_holds);
        assert!(r.k_observed <= r.k_chase);
    }

    #[test]
    fn dyadic_reports_failures_with_index() {
        let tau0 = 29;
        let mut xs = vec![1.0; 50];
        xs[10] = 5.0;
        let zeros = vec![0.0; 50];
        let r = check_dyadic_bound(&xs, &zeros, &zeros, tau0, 10, 5.0, constants()).unwrap();
        assert_eq!(r.failures, vec![HypothesisFailure { hypothesis: DyadicHypothesis::Recursion, t: tau0 + 10 }]);

        let r = check_dyadic_bound(&[100.0, 100.0], &[0.0, 0.0], &[0.0, 0.0], 3, 10, 5.0, constants()).unwrap();
        let kinds: Vec<_> = r.failures.iter().map(|f| f.hypothesis).collect();
        assert_eq!(kinds, vec![DyadicHypothesis::InitialLevel, DyadicHypothesis::WarmStartLength]);

        let a = vec![1.0; 10];
        let r = check_dyadic_bound(&[1.0; 10], &a, &[0.0; 10], 29, 10, 5.0, constants()).unwrap();
        assert!(r.failures.iter().any(|f| f.hypothesis == DyadicHypothesis::DriftSum));

        assert!(check_dyadic_bound(&[1.0], &[0.0], &[0.0], 29, 10, 5.0, constants()).is_err());
        assert!(check_dyadic_bound(&[1.0, -1.0], &[0.0; 2], &[0.0; 2], 29, 10, 5.0, constants()).is_err());
    }

    #[test]
    fn dyadic_on_boo_trace() {
        let obs = stream(LinkFunction::Logistic, 10, 5000, 11);
        let t0 = default_t0(10, 5.0, 1.0);
        let config = BooConfig::new(LinkFunction::Logistic, 10, t0);
        let trace = check_recursion_identity(&obs, &config, &make_theta_star(10)).unwrap();
        let vs = trace.v_trace();
        let a = vec![0.0; vs.len()];
        let b: Vec<f64> = (0..vs.len()).map(|i| if i == 0 { 0.0 } else { vs[i] - vs[i - 1] }).collect();
        let c = fit_dyadic_constants(&vs, &a, &b, t0, 10, 5.0, 1.0);
        let r = check_dyadic_bound(&vs, &a, &b, t0, 10, 5.0, c).unwrap();
        assert!(r.hypotheses_hold(), "{:?}", r.failures);
        assert!(r.conclusion_holds);
        assert!(r.k_observed.is_finite() && r.k_observed <= r.k_chase);
    }

    #[test]
    fn regularity_unit_sphere() {
        let obs = stream(LinkFunction::Poisson, 4, 500, 5);
        let xs: Vec<_> = obs.into_iter().map(|o| o.x).collect();
        let r = check_logistic_regularity(&xs, &make_theta_star(4), RegularitySettings { samples: 16, ..Default::default() }).unwrap();
        assert_relative_eq!(r.max_x_norm, 1.0, epsilon = 1e-12);
        assert!(r.max_hessian_norm <= 0.25);
        assert!(r.sandwich_k <= r.max_x_norm * (1.0 + 1e-9), "{}", r.sandwich_k);
        // |b‴| ≤ 1/(6√3) for the logistic link.
        assert!(r.lipschitz_ratio <= 1.0 / (6.0 * 3f64.sqrt()) + 1e-12);
        assert!(r.min_eigen_slope > 0.0);
        assert_eq!(r.k_max, 1.0 * r.max_x_norm);
    }

    #[test]
    fn regularity_degenerate_pairs() {
        // θ′ = θ gives a zero Lipschitz numerator; h = 0 gives F = F.
        let x = v(&[0.6, 0.8]);
        let theta = v(&[0.1, 0.2]);
        let m = LinkFunction::Logistic;
        assert_eq!(m.b2(x.dot(&theta)) - m.b2(x.dot(&theta)), 0.0);
        let f = information(&[x.clone(), v(&[1.0, 0.0])], &theta);
        let root = sym_inv_sqrt(&f, "f").unwrap();
        let rel = &root * &f * &root;
        assert!(eigenvalues_sorted(&rel).iter().all(|l| (l - 1.0).abs() < 1e-12));
        assert!(check_logistic_regularity(&[], &theta, RegularitySettings::default()).is_err());
    }

    #[test]
    fn suite_serializes_and_holds() {
        let report = run_suite(1, 600).unwrap();
        assert!(report.all_hold(), "{report:?}");
        let json = serde_json::to_string(&report).unwrap();
        let back: SuiteReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.recursion.len(), 6);
    }
}
