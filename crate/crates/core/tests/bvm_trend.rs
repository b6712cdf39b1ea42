//! Stochastic trend check for the online BvM diagnostics: both alignment
//! measures should shrink from t = 10³ to t = 10⁴ in most seeded runs.

use rayon::prelude::*;

use boo_core::batch::{fisher_information, mle_estimate, NewtonSettings};
use boo_core::datagen::{sample_stream, CovariateStyle, DesignSpec, TruthSpec};
use boo_core::inference::{bvm_diagnostics, BvmDiagnostics, FisherSource};
use boo_core::{default_t0, BooConfig, BooEstimator, LinkFunction, Observation};

const P: usize = 10;
const T_EARLY: usize = 1_000;
const T_LATE: usize = 10_000;

fn diagnostics_at(est: &BooEstimator, obs: &[Observation]) -> BvmDiagnostics {
    let mle = mle_estimate(LinkFunction::Logistic, obs, &NewtonSettings::default()).unwrap().into_converged().unwrap();
    let fisher = fisher_information(LinkFunction::Logistic, obs, &mle);
    bvm_diagnostics(est.posterior().unwrap(), &mle, &fisher, FisherSource::MleEstimate, obs.len(), est.t0(), 5.0).unwrap()
}

fn one_seed(seed: u64) -> (bool, bool) {
    let design = DesignSpec { p: P, n: T_LATE, model: LinkFunction::Logistic, covariate_style: CovariateStyle::GaussianIdentity, seed };
    let truth = TruthSpec::standard(P, 5f64.sqrt());
    let obs: Vec<Observation> = sample_stream(&design, &truth, 0).unwrap().collect();
    let config = BooConfig::new(LinkFunction::Logistic, P, default_t0(P, 5.0, 1.0))
        .with_prior(truth.initial_point(seed), nalgebra::DMatrix::identity(P, P));
    let mut est = BooEstimator::new(config).unwrap();
    let mut early = None;
    for (i, o) in obs.iter().enumerate() {
        est.ingest(o).unwrap();
        if i + 1 == T_EARLY {
            early = Some(diagnostics_at(&est, &obs[..T_EARLY]));
        }
    }
    let (early, late) = (early.unwrap(), diagnostics_at(&est, &obs));
    assert_eq!(late.fisher_source, FisherSource::MleEstimate);
    assert!(late.eps_app < early.eps_app);
    (late.mean_align < early.mean_align, late.precision_align < early.precision_align)
}

#[test]
fn alignment_shrinks_in_most_runs() {
    let outcomes: Vec<(bool, bool)> = (0..100u64).into_par_iter().map(one_seed).collect();
    let mean_hits = outcomes.iter().filter(|o| o.0).count();
    let prec_hits = outcomes.iter().filter(|o| o.1).count();
    println!("mean_align shrank in {mean_hits}/100, precision_align in {prec_hits}/100");
    assert!(mean_hits >= 90, "mean_align shrank in only {mean_hits}/100 runs");
    assert!(prec_hits >= 90, "precision_align shrank in only {prec_hits}/100 runs");
}
