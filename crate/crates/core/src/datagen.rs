//! Simulation designs: true parameter, covariate laws and response sampling.
//!
//! Every random quantity comes from ChaCha20 seeded with the experiment seed.
//! Repetition `r` reads stream `r`; the fixed rotation used for correlated
//! designs and for the initial offset direction reads stream [`ROTATION_STREAM`].

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BooError, Result};
use crate::glm::{sigmoid, LinkFunction, Observation};
use crate::linalg::{eigenvalues_sorted, sym_sqrt};

pub const ROTATION_STREAM: u64 = u64::MAX;

/// Rates above this switch Poisson sampling from inversion to `rand_distr`.
const POISSON_INVERSION_LIMIT: f64 = 30.0;

/// `v / ‖v‖` with `vⱼ = (−1)^{j−1} j`.
pub fn make_theta_star(p: usize) -> DVector<f64> {
    assert!(p >= 1, "dimension must be positive");
    let v = DVector::from_fn(p, |i, _| if i % 2 == 0 { (i + 1) as f64 } else { -((i + 1) as f64) });
    let norm = v.norm();
    v / norm
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix: `Q` from `QR` of a Gaussian matrix,
/// with columns flipped so that `diag(R) > 0`.
pub fn haar_orthogonal(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, p, p).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// The experiment-level rotation `A`, fixed by `seed`.
pub fn seeded_rotation(p: usize, seed: u64) -> DMatrix<f64> {
    haar_orthogonal(p, &mut rng_for(seed, ROTATION_STREAM))
}

/// `A diag(j²/p²) Aᵀ` with `A` Haar-orthogonal.
pub fn make_correlated_sigma(p: usize, seed: u64) -> DMatrix<f64> {
    assert!(p >= 1, "dimension must be positive");
    let a = seeded_rotation(p, seed);
    let pf = p as f64;
    let d = DMatrix::from_diagonal(&DVector::from_fn(p, |j, _| ((j + 1) as f64 / pf).powi(2)));
    let mut sigma = &a * d * a.transpose();
    crate::linalg::symmetrize(&mut sigma);
    sigma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateStyle {
    /// `x ~ N(0, I)`.
    GaussianIdentity,
    /// `x = z/‖z‖` with `z ~ N(0, I)`.
    NormalizedGaussian,
    /// `x ~ N(0, Σ)`.
    GaussianCovariance { sigma: DMatrix<f64> },
    /// `x = z/‖z‖` with `z ~ N(0, Σ)`.
    NormalizedGaussianCovariance { sigma: DMatrix<f64> },
    /// `x = 0`; carries no information. For degenerate-case checks.
    Zero,
}

impl CovariateStyle {
    fn sigma(&self) -> Option<&DMatrix<f64>> {
        match self {
            CovariateStyle::GaussianCovariance { sigma } | CovariateStyle::NormalizedGaussianCovariance { sigma } => Some(sigma),
            _ => None,
        }
    }

    fn normalized(&self) -> bool {
        matches!(self, CovariateStyle::NormalizedGaussian | CovariateStyle::NormalizedGaussianCovariance { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub p: usize,
    pub n: usize,
    pub model: LinkFunction,
    pub covariate_style: CovariateStyle,
    pub seed: u64,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 {
            return Err(BooError::InvalidArgument(format!("design needs p ≥ 1 and n ≥ 1 (p={}, n={})", self.p, self.n)));
        }
        if let Some(sigma) = self.covariate_style.sigma() {
            if sigma.nrows() != self.p || sigma.ncols() != self.p {
                return Err(BooError::DimensionMismatch { expected: self.p, got: sigma.nrows() });
            }
            if (sigma - sigma.transpose()).amax() > 1e-10 * sigma.amax().max(1.0) {
                return Err(BooError::InvalidArgument("covariate covariance must be symmetric".into()));
            }
            let min_ev = eigenvalues_sorted(sigma)[0];
            if min_ev < -1e-10 * sigma.amax().max(1.0) {
                return Err(BooError::InvalidArgument(format!("covariate covariance not PSD (eigenvalue {min_ev})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub theta_star: DVector<f64>,
    /// `‖θ₀ − θ⋆‖₂` for the online estimators' starting point.
    pub initial_offset: f64,
}

impl TruthSpec {
    pub fn standard(p: usize, initial_offset: f64) -> Self {
        TruthSpec { theta_star: make_theta_star(p), initial_offset }
    }

    /// `θ⋆ + offset·u`, `u` the first column of the seeded rotation.
    /// A zero offset returns `θ⋆` itself.
    pub fn initial_point(&self, seed: u64) -> DVector<f64> {
        if self.initial_offset == 0.0 {
            return self.theta_star.clone();
        }
        let u = seeded_rotation(self.theta_star.len(), seed).column(0).into_owned();
        &self.theta_star + u * self.initial_offset
    }
}

/// Poisson draw by sequential CDF inversion. Rates the sampler cannot
/// represent (infinite or beyond `rand_distr`'s range) give `+∞`.
pub fn sample_poisson(rng: &mut impl Rng, rate: f64) -> f64 {
    if rate > POISSON_INVERSION_LIMIT {
        return Poisson::new(rate).map_or(f64::INFINITY, |d| d.sample(rng));
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut pmf = (-rate).exp();
    let mut cdf = pmf;
    while u > cdf {
        k += 1;
        pmf *= rate / k as f64;
        cdf += pmf;
        if pmf == 0.0 && cdf < u {
            // Round-off left u above the representable CDF; stop at the tail.
            break;
        }
    }
    k as f64
}

/// Deterministic stream of `n` observations for one repetition.
pub struct Stream {
    rng: ChaCha20Rng,
    model: LinkFunction,
    p: usize,
    remaining: usize,
    root: Option<DMatrix<f64>>,
    normalized: bool,
    zero: bool,
    theta_star: DVector<f64>,
}

impl Iterator for Stream {
    type Item = Observation;

    fn next(&mut self) -> Option<Observation> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let x = if self.zero {
            DVector::zeros(self.p)
        } else {
            let z = DVector::from_fn(self.p, |_, _| self.rng.sample(StandardNormal));
            let mut x = match &self.root {
                Some(root) => root * z,
                None => z,
            };
            if self.normalized {
                let norm = x.norm();
                if norm > 0.0 {
                    x /= norm;
                }
            }
            x
        };
        let eta = x.dot(&self.theta_star);
        let y = match self.model {
            LinkFunction::Logistic => {
                let u: f64 = self.rng.random();
                if u < sigmoid(eta) {
                    1.0
                } else {
                    0.0
                }
            }
            LinkFunction::Poisson => sample_poisson(&mut self.rng, eta.exp()),
        };
        Some(Observation::new(y, x))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for Stream {}

/// Observations for repetition `rep` of `design` under `truth`.
pub fn sample_stream(design: &DesignSpec, truth: &TruthSpec, rep: u64) -> Result<Stream> {
    design.validate()?;
    crate::error::check_dim(design.p, truth.theta_star.len())?;
    if truth.theta_star.iter().any(|v| !v.is_finite()) {
        return Err(BooError::NonFinite("true parameter"));
    }
    Ok(Stream {
        rng: rng_for(design.seed, rep),
        model: design.model,
        p: design.p,
        remaining: design.n,
        root: design.covariate_style.sigma().map(sym_sqrt),
        normalized: design.covariate_style.normalized(),
        zero: matches!(design.covariate_style, CovariateStyle::Zero),
        theta_star: truth.theta_star.clone(),
    })
}

/// Writes `y,x_1..x_p` rows with round-trip float formatting.
pub fn write_stream_csv(path: &Path, observations: &[Observation]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| BooError::io(path, e))?;
    write_stream_csv_to(file, observations).map_err(|e| BooError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_stream_csv_to<W: std::io::Write>(w: W, observations: &[Observation]) -> std::result::Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(w);
    let p = observations.first().map_or(0, Observation::dim);
    let mut header = vec!["y".to_string()];
    header.extend((1..=p).map(|j| format!("x_{j}")));
    writer.write_record(&header)?;
    for obs in observations {
        let mut row = vec![obs.y.to_string()];
        row.extend(obs.x.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_stream_csv(path: &Path) -> Result<Vec<Observation>> {
    let format_err = |message: String| BooError::Format { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| format_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| format_err(e.to_string()))?.clone();
    if headers.get(0) != Some("y") {
        return Err(format_err("first column must be `y`".into()));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| format_err(e.to_string()))?;
        let values = record
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| format_err(format!("bad number {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(Observation::from_slice(values[0], &values[1..]));
    }
    Ok(out)
}
