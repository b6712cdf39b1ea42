//! Monte Carlo repetitions over shared streams, with deterministic aggregation.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigFile, ExperimentConfig, ResolvedEstimator};
use crate::baselines::{SgdConfig, SgdFamilyEstimator};
use crate::batch::{fisher_information, mle_estimate_from, NewtonSettings};
use crate::datagen::sample_stream;
use crate::error::{BooError, Result};
use crate::glm::Observation;
use crate::inference::coordinate_intervals;
use crate::linalg::spd_inverse;
use crate::posterior::{BooConfig, BooEstimator};

pub const METRIC_L2: &str = "l2_error";
pub const METRIC_FAILURES: &str = "failures";
pub const METRIC_INTERVAL_FAILURES: &str = "interval_failures";

pub fn coverage_metric(j: usize) -> String {
    format!("coverage_{}", j + 1)
}

pub fn length_metric(j: usize) -> String {
    format!("length_{}", j + 1)
}

/// One tidy output record: `estimator, t, metric, value, rep_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: String,
    pub t: usize,
    pub metric: String,
    pub value: f64,
    pub rep_count: usize,
}

/// Wall-clock timing; never serialized and ignored by equality so that
/// outputs stay byte-identical between runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Timing {
    pub total_secs: f64,
}

impl PartialEq for Timing {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub repetitions: usize,
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    pub estimators: Vec<String>,
    pub checkpoints: Vec<usize>,
    /// Hash of the observation sequence of each repetition.
    pub stream_hashes: Vec<u64>,
    #[serde(skip)]
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub metadata: RunMetadata,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn row(&self, estimator: &str, t: usize, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.t == t && r.metric == metric)
    }

    pub fn value(&self, estimator: &str, t: usize, metric: &str) -> Option<f64> {
        self.row(estimator, t, metric).map(|r| r.value)
    }

    /// Mean ℓ₂ error at the last checkpoint.
    pub fn final_error(&self, estimator: &str) -> Option<f64> {
        self.value(estimator, *self.metadata.checkpoints.last()?, METRIC_L2)
    }

    pub fn coverage(&self, estimator: &str) -> Option<Vec<f64>> {
        (0..self.metadata.p).map(|j| self.value(estimator, self.metadata.n, &coverage_metric(j))).collect()
    }

    pub fn lengths(&self, estimator: &str) -> Option<Vec<f64>> {
        (0..self.metadata.p).map(|j| self.value(estimator, self.metadata.n, &length_metric(j))).collect()
    }

    /// Repetitions in which the estimator itself failed; they are excluded
    /// from every aggregate.
    pub fn failures(&self, estimator: &str) -> usize {
        self.value(estimator, self.metadata.n, METRIC_FAILURES).unwrap_or(0.0) as usize
    }

    /// Repetitions whose point estimates count but whose interval could not
    /// be formed (e.g. a singular sandwich or a missing MLE).
    pub fn interval_failures(&self, estimator: &str) -> usize {
        self.value(estimator, self.metadata.n, METRIC_INTERVAL_FAILURES).unwrap_or(0.0) as usize
    }
}

#[derive(Debug, Clone, Default)]
struct EstimatorOutcome {
    errors: Vec<Option<f64>>,
    covered: Option<Vec<bool>>,
    lengths: Option<Vec<f64>>,
    failed: bool,
    interval_failed: bool,
}

struct RepOutcome {
    hash: u64,
    estimators: Vec<EstimatorOutcome>,
}

enum Engine {
    Boo(BooEstimator),
    Sgd(SgdFamilyEstimator),
    Mle { last: Option<DVector<f64>> },
}

struct Runner {
    engine: Engine,
    hasher: DefaultHasher,
    error: Option<BooError>,
}

fn hash_observation(h: &mut DefaultHasher, obs: &Observation) {
    h.write_u64(obs.y.to_bits());
    for v in obs.x.iter() {
        h.write_u64(v.to_bits());
    }
}

/// Engines are shared between labels that read the same trajectory
/// (SGD/ASGD and wSGD/wASGD with equal `t₀`).
fn engine_key(e: &ResolvedEstimator) -> ResolvedEstimator {
    match *e {
        ResolvedEstimator::Sgd { t0, .. } => ResolvedEstimator::Sgd { t0, averaged: false },
        other => other,
    }
}

fn build_engine(config: &ExperimentConfig, key: &ResolvedEstimator) -> Result<Engine> {
    let p = config.design.p;
    let model = config.design.model;
    let prior_precision = DMatrix::identity(p, p);
    Ok(match *key {
        ResolvedEstimator::Boo { t0 } => {
            Engine::Boo(BooEstimator::new(BooConfig::new(model, p, t0).with_prior(config.initial.clone(), prior_precision))?)
        }
        ResolvedEstimator::Sgd { t0, .. } => {
            let sgd = if t0 == 0 {
                SgdConfig::plain(model, config.initial.clone())
            } else {
                SgdConfig::warm(model, t0, config.initial.clone(), prior_precision)
            };
            Engine::Sgd(SgdFamilyEstimator::new(sgd.with_steps(config.step0, config.step_exp))?)
        }
        ResolvedEstimator::Mle => Engine::Mle { last: None },
    })
}

/// Runs every estimator over repetition `rep`'s stream.
fn run_repetition(config: &ExperimentConfig, rep: usize) -> Result<RepOutcome> {
    let stream: Vec<Observation> = sample_stream(&config.design, &config.truth, rep as u64)?.collect();
    let theta_star = &config.truth.theta_star;
    let model = config.design.model;
    let newton = NewtonSettings::default();

    let mut keys: Vec<ResolvedEstimator> = Vec::new();
    let mut slot = Vec::with_capacity(config.estimators.len());
    for e in &config.estimators {
        let key = engine_key(e);
        let idx = keys.iter().position(|k| *k == key).unwrap_or_else(|| {
            keys.push(key);
            keys.len() - 1
        });
        slot.push(idx);
    }
    let mut runners = keys
        .iter()
        .map(|k| Ok(Runner { engine: build_engine(config, k)?, hasher: DefaultHasher::new(), error: None }))
        .collect::<Result<Vec<_>>>()?;

    let mut errors: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(config.checkpoints.len()); config.estimators.len()];
    let mut next_checkpoint = 0;
    for (i, obs) in stream.iter().enumerate() {
        let t = i + 1;
        for runner in runners.iter_mut() {
            hash_observation(&mut runner.hasher, obs);
            if runner.error.is_some() {
                continue;
            }
            let res = match &mut runner.engine {
                Engine::Boo(est) => est.ingest(obs).map(|_| ()),
                Engine::Sgd(est) => est.step(obs),
                Engine::Mle { .. } => Ok(()),
            };
            if let Err(e) = res {
                runner.error = Some(e);
            }
        }
        if next_checkpoint < config.checkpoints.len() && config.checkpoints[next_checkpoint] == t {
            next_checkpoint += 1;
            for (label_idx, e) in config.estimators.iter().enumerate() {
                let runner = &mut runners[slot[label_idx]];
                let estimate = match (&mut runner.engine, e) {
                    _ if runner.error.is_some() => None,
                    (Engine::Boo(est), _) => Some(est.estimate().clone()),
                    (Engine::Sgd(est), ResolvedEstimator::Sgd { averaged: true, .. }) => Some(est.average().clone()),
                    (Engine::Sgd(est), _) => Some(est.iterate().clone()),
                    (Engine::Mle { last }, _) => {
                        let start = last.clone().unwrap_or_else(|| DVector::zeros(theta_star.len()));
                        match mle_estimate_from(model, &stream[..t], start, &newton) {
                            Ok(r) if r.converged => {
                                *last = Some(r.estimate.clone());
                                Some(r.estimate)
                            }
                            // No MLE yet (e.g. separable prefix): skip this checkpoint.
                            _ => {
                                *last = None;
                                None
                            }
                        }
                    }
                };
                errors[label_idx].push(estimate.map(|th| (th - theta_star).norm()));
            }
        }
    }

    let hash = runners.first().map(|r| r.hasher.finish()).unwrap_or(0);
    if runners.iter().any(|r| r.hasher.finish() != hash) {
        return Err(BooError::Failed(format!("repetition {rep}: estimators consumed different streams")));
    }

    let mut outcomes = Vec::with_capacity(config.estimators.len());
    for (label_idx, e) in config.estimators.iter().enumerate() {
        let runner = &mut runners[slot[label_idx]];
        if let Some(err) = &runner.error {
            log::debug!("repetition {rep}: {} failed: {err}", e.label());
            outcomes.push(EstimatorOutcome { failed: true, ..Default::default() });
            continue;
        }
        let interval = match &mut runner.engine {
            Engine::Boo(est) => est.posterior().map(|post| Ok((post.mean().clone(), post.covariance_diag()))),
            Engine::Sgd(est) => Some(est.sandwich_covariance().map(|cov| (est.average().clone(), cov.diagonal()))),
            Engine::Mle { last } => Some(final_mle_interval(config, &stream, last.take(), &newton)),
        };
        let mut outcome = EstimatorOutcome { errors: errors[label_idx].clone(), ..Default::default() };
        match interval {
            Some(Ok((center, var))) => {
                let set = coordinate_intervals(&center, &var, config.alpha)?;
                outcome.covered = Some((0..center.len()).map(|j| set.contains(j, theta_star[j])).collect());
                outcome.lengths = Some(set.lengths().collect());
            }
            Some(Err(err)) => {
                log::debug!("repetition {rep}: {} interval failed: {err}", e.label());
                outcome.interval_failed = true;
            }
            None => {}
        }
        outcomes.push(outcome);
    }
    Ok(RepOutcome { hash, estimators: outcomes })
}

fn final_mle_interval(
    config: &ExperimentConfig,
    stream: &[Observation],
    last: Option<DVector<f64>>,
    newton: &NewtonSettings,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let model = config.design.model;
    let start = last.unwrap_or_else(|| DVector::zeros(config.design.p));
    let report = mle_estimate_from(model, stream, start, newton)?;
    let theta = report.into_converged()?;
    let cov = spd_inverse(&fisher_information(model, stream, &theta), "Fisher information")
        .map_err(|_| BooError::Singular("Fisher information at the MLE".into()))?;
    Ok((theta, cov.diagonal()))
}

fn aggregate(config: &ExperimentConfig, reps: &[RepOutcome]) -> Vec<ResultRow> {
    let p = config.design.p;
    let n = config.design.n;
    let mut rows = Vec::new();
    for (k, e) in config.estimators.iter().enumerate() {
        let label = e.label();
        for (c, &t) in config.checkpoints.iter().enumerate() {
            let (sum, count) = reps
                .iter()
                .filter(|r| !r.estimators[k].failed)
                .filter_map(|r| r.estimators[k].errors[c])
                .fold((0.0, 0usize), |(s, m), v| (s + v, m + 1));
            if count > 0 {
                rows.push(ResultRow { estimator: label.clone(), t, metric: METRIC_L2.into(), value: sum / count as f64, rep_count: count });
            }
        }
        let with_intervals: Vec<&EstimatorOutcome> =
            reps.iter().map(|r| &r.estimators[k]).filter(|o| !o.failed && o.covered.is_some()).collect();
        if !with_intervals.is_empty() {
            let m = with_intervals.len();
            for j in 0..p {
                let hits = with_intervals.iter().filter(|o| o.covered.as_ref().unwrap()[j]).count();
                rows.push(ResultRow { estimator: label.clone(), t: n, metric: coverage_metric(j), value: hits as f64 / m as f64, rep_count: m });
            }
            for j in 0..p {
                let total: f64 = with_intervals.iter().map(|o| o.lengths.as_ref().unwrap()[j]).sum();
                rows.push(ResultRow { estimator: label.clone(), t: n, metric: length_metric(j), value: total / m as f64, rep_count: m });
            }
        }
        let failures = reps.iter().filter(|r| r.estimators[k].failed).count();
        rows.push(ResultRow { estimator: label.clone(), t: n, metric: METRIC_FAILURES.into(), value: failures as f64, rep_count: reps.len() });
        let interval_failures = reps.iter().filter(|r| r.estimators[k].interval_failed).count();
        rows.push(ResultRow {
            estimator: label,
            t: n,
            metric: METRIC_INTERVAL_FAILURES.into(),
            value: interval_failures as f64,
            rep_count: reps.len(),
        });
    }
    rows
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let work = || (0..config.repetitions).into_par_iter().map(|rep| run_repetition(config, rep)).collect::<Result<Vec<_>>>();
    let reps = match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| BooError::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let rows = aggregate(config, &reps);
    let total_secs = start.elapsed().as_secs_f64();
    log::info!("{} repetitions in {total_secs:.2}s", config.repetitions);
    Ok(ExperimentResult {
        metadata: RunMetadata {
            seed: config.seed,
            repetitions: config.repetitions,
            n: config.design.n,
            p: config.design.p,
            alpha: config.alpha,
            estimators: config.estimators.iter().map(ResolvedEstimator::label).collect(),
            checkpoints: config.checkpoints.clone(),
            stream_hashes: reps.iter().map(|r| r.hash).collect(),
            timing: Timing { total_secs },
        },
        rows,
    })
}

/// Parameter varied by [`sensitivity_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Warm-start multipliers `M`; applies to estimators without a pinned `t0`.
    M(Vec<f64>),
    /// Initial distances `‖θ₀ − θ⋆‖`.
    Offset(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub result: ExperimentResult,
}

/// One experiment per sweep value, all on the base seed so points are paired.
pub fn sensitivity_sweep(base: &ConfigFile, sweep: &Sweep) -> Result<Vec<SweepPoint>> {
    let values = match sweep {
        Sweep::M(v) | Sweep::Offset(v) => v,
    };
    if values.is_empty() {
        return Err(BooError::InvalidArgument("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            match sweep {
                Sweep::M(_) => cfg.m = value,
                Sweep::Offset(_) => cfg.initial_offset = Some(value),
            }
            Ok(SweepPoint { value, result: run_experiment(&cfg.resolve()?)? })
        })
        .collect()
}
