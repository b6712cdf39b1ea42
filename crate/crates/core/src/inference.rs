//! Intervals, Wald ellipsoids and posterior-vs-MLE alignment diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{check_dim, BooError, Result};
use crate::linalg::{cholesky, quad_form, spectral_norm_sym, sym_inv_sqrt, sym_sqrt};
use crate::posterior::GaussianPosterior;

/// Spectral radius up to which the Pinsker-based TV bound is valid.
pub const TV_SPECTRAL_LIMIT: f64 = 0.684;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF (Wichura's AS241, ~1e-16 relative accuracy).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} outside (0, 1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(BooError::InvalidArgument(format!("level α = {alpha} must lie in (0, 1)")))
    }
}

/// Upper `α/2` quantile of the standard normal.
pub fn z_upper(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(normal_quantile(1.0 - alpha / 2.0))
}

fn chi2_cdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(dof as f64 / 2.0, x / 2.0)
    }
}

fn chi2_pdf(dof: usize, x: f64) -> f64 {
    let k = dof as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// `(1 − α)` quantile of the chi-square distribution with `dof` degrees of freedom.
pub fn chi2_quantile(dof: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if dof == 0 {
        return Err(BooError::InvalidArgument("chi-square needs dof ≥ 1".into()));
    }
    let target = 1.0 - alpha;
    let k = dof as f64;
    // Wilson–Hilferty start, then safeguarded Newton on the CDF.
    let z = normal_quantile(target);
    let c = 2.0 / (9.0 * k);
    let mut x = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let f = chi2_cdf(dof, x) - target;
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let mut next = x - f / chi2_pdf(dof, x);
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(lo) + 1.0 };
        }
        if (next - x).abs() <= 1e-14 * x.max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Per-coordinate intervals `centerⱼ ± z_{α/2}·σ̂ⱼ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub centers: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub level: f64,
}

impl IntervalSet {
    pub fn contains(&self, j: usize, value: f64) -> bool {
        (value - self.centers[j]).abs() <= self.half_widths[j]
    }

    pub fn lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.half_widths.iter().map(|h| 2.0 * h)
    }
}

pub fn coordinate_intervals(mean: &DVector<f64>, covariance_diag: &DVector<f64>, alpha: f64) -> Result<IntervalSet> {
    check_dim(mean.len(), covariance_diag.len())?;
    let z = z_upper(alpha)?;
    let half_widths = covariance_diag
        .iter()
        .map(|&var| {
            if var >= 0.0 && var.is_finite() {
                Ok(z * var.sqrt())
            } else {
                Err(BooError::InvalidArgument(format!("variance {var} must be finite and ≥ 0")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalSet {
        centers: mean.iter().copied().collect(),
        half_widths,
        level: alpha,
    })
}

/// Membership in `{θ : (θ − c)ᵀ Ω (θ − c) ≤ χ²_{p,α}}`.
pub fn wald_set_contains(center: &DVector<f64>, precision: &DMatrix<f64>, alpha: f64, theta: &DVector<f64>) -> Result<bool> {
    check_dim(center.len(), theta.len())?;
    check_dim(center.len(), precision.nrows())?;
    let threshold = chi2_quantile(center.len(), alpha)?;
    Ok(quad_form(precision, &(theta - center)) <= threshold)
}

/// Pinsker-based upper bound on `TV(N(m1, P1⁻¹), N(m2, P2⁻¹))`:
/// `½ (‖P1^{1/2}(m1 − m2)‖² + ‖P2^{-1/2} P1 P2^{-1/2} − I‖_F²)^{1/2}`, capped at 1.
/// Returns 1 when `‖P2^{-1/2} P1 P2^{-1/2} − I‖₂` exceeds the validity limit.
pub fn gaussian_tv_bound(
    mean1: &DVector<f64>,
    prec1: &DMatrix<f64>,
    mean2: &DVector<f64>,
    prec2: &DMatrix<f64>,
) -> Result<f64> {
    let p = mean1.len();
    check_dim(p, mean2.len())?;
    check_dim(p, prec1.nrows())?;
    check_dim(p, prec2.nrows())?;
    cholesky(prec1, "first precision")?;
    let root2 = sym_inv_sqrt(prec2, "second precision")?;
    let b = &root2 * prec1 * &root2 - DMatrix::<f64>::identity(p, p);
    if spectral_norm_sym(&b) > TV_SPECTRAL_LIMIT {
        return Ok(1.0);
    }
    let mean_term = quad_form(prec1, &(mean1 - mean2)).max(0.0);
    Ok((0.5 * (mean_term + b.norm_squared()).sqrt()).min(1.0))
}

/// Exact total variation between two univariate normals.
pub fn gaussian_tv_exact_1d(mean1: f64, var1: f64, mean2: f64, var2: f64) -> f64 {
    let (s1, s2) = (var1.sqrt(), var2.sqrt());
    if (var1 - var2).abs() <= 1e-15 * var1.max(var2) {
        return 2.0 * normal_cdf((mean1 - mean2).abs() / (2.0 * s1)) - 1.0;
    }
    // Crossing points of the two densities.
    let a = 0.5 / var2 - 0.5 / var1;
    let b = mean1 / var1 - mean2 / var2;
    let c = mean2 * mean2 / (2.0 * var2) - mean1 * mean1 / (2.0 * var1) + (s2 / s1).ln();
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let (mut r1, mut r2) = ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a));
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    let mass = |m: f64, s: f64| normal_cdf((r2 - m) / s) - normal_cdf((r1 - m) / s);
    (mass(mean1, s1) - mass(mean2, s2)).abs()
}

/// `sqrt(log²(t/t₀)·(p log t + x)² / t)`.
pub fn eps_app(t: usize, t0: usize, p: usize, x: f64) -> f64 {
    let t_f = t as f64;
    let ratio_log = (t_f / t0.max(1) as f64).ln();
    let scale = p as f64 * t_f.ln() + x;
    (ratio_log * ratio_log * scale * scale / t_f).sqrt()
}

/// Where the reference information matrix was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherSource {
    /// `Σ ∇²ℓₛ(θ⋆)`, available when the truth is known (simulation).
    TrueParameter,
    /// `Σ ∇²ℓₛ(θ̂ᴹᴸ)`, the data-mode substitute.
    MleEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BvmDiagnostics {
    /// `‖F^{1/2}(θₜ − θ̂ᴹᴸ)‖₂`
    pub mean_align: f64,
    /// `‖Ωₜ^{−1/2} F Ωₜ^{−1/2} − I‖₂`
    pub precision_align: f64,
    pub tv_bound: f64,
    pub eps_app: f64,
    pub fisher_source: FisherSource,
}

#[allow(clippy::too_many_arguments)]
pub fn bvm_diagnostics(
    posterior: &GaussianPosterior,
    mle: &DVector<f64>,
    fisher: &DMatrix<f64>,
    fisher_source: FisherSource,
    t: usize,
    t0: usize,
    x: f64,
) -> Result<BvmDiagnostics> {
    let p = posterior.dim();
    check_dim(p, mle.len())?;
    check_dim(p, fisher.nrows())?;
    if t <= t0 {
        return Err(BooError::InvalidArgument(format!("BvM diagnostics need t > t₀ ({t} ≤ {t0})")));
    }
    cholesky(fisher, "reference information").map_err(|_| BooError::Singular("reference information matrix".into()))?;

    let mean_align = (sym_sqrt(fisher) * (posterior.mean() - mle)).norm();
    let root = sym_inv_sqrt(posterior.precision(), "posterior precision")?;
    let aligned = &root * fisher * &root - DMatrix::<f64>::identity(p, p);
    let precision_align = spectral_norm_sym(&aligned);
    let tv_bound = gaussian_tv_bound(posterior.mean(), posterior.precision(), mle, fisher)?;
    Ok(BvmDiagnostics {
        mean_align,
        precision_align,
        tv_bound,
        eps_app: eps_app(t, t0, p, x),
        fisher_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn quantiles() {
        assert_relative_eq!(z_upper(0.05).unwrap(), 1.959963984540054, epsilon = 1e-14);
        assert_relative_eq!(normal_quantile(0.5), 0.0);
        for &p in &[1e-12, 1e-6, 0.01, 0.2, 0.7, 0.975, 1.0 - 1e-9] {
            assert_relative_eq!(normal_cdf(normal_quantile(p)), p, max_relative = 1e-9);
        }
        // Reference table values.
        assert_relative_eq!(chi2_quantile(1, 0.05).unwrap(), 3.841458820694124, epsilon = 1e-9);
        assert_relative_eq!(chi2_quantile(2, 0.05).unwrap(), 5.991464547107979, epsilon = 1e-9);
        assert_relative_eq!(chi2_quantile(10, 0.05).unwrap(), 18.307038053275146, epsilon = 1e-9);
        assert_relative_eq!(chi2_quantile(3, 0.99).unwrap(), 0.11483180189911687, epsilon = 1e-9);
        assert!(z_upper(0.0).is_err());
        assert!(chi2_quantile(2, 1.0).is_err());
    }

    #[test]
    fn interval_examples() {
        let set = coordinate_intervals(&v(&[0.0]), &v(&[1.0]), 0.05).unwrap();
        assert_relative_eq!(set.half_widths[0], 1.95996, epsilon = 1e-5);
        let set = coordinate_intervals(&v(&[2.0]), &v(&[0.0]), 0.05).unwrap();
        assert_eq!(set.half_widths[0], 0.0);
        assert!(set.contains(0, 2.0));
        assert!(coordinate_intervals(&v(&[0.0]), &v(&[1.0]), 1.5).is_err());
        assert!(coordinate_intervals(&v(&[0.0]), &v(&[-1.0]), 0.05).is_err());
    }

    #[test]
    fn wald_examples() {
        let c = v(&[0.3, -0.2]);
        let i2 = DMatrix::identity(2, 2);
        assert!(wald_set_contains(&c, &i2, 0.999, &c).unwrap());
        assert!(!wald_set_contains(&v(&[0.0, 0.0]), &i2, 0.05, &v(&[3.0, 3.0])).unwrap());
        let i1 = DMatrix::identity(1, 1);
        assert!(wald_set_contains(&v(&[0.0]), &i1, 0.05, &v(&[1.9599])).unwrap());
        assert!(!wald_set_contains(&v(&[0.0]), &i1, 0.05, &v(&[1.9601])).unwrap());
    }

    #[test]
    fn tv_bound_examples() {
        let m = v(&[0.5, 1.0]);
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert!(gaussian_tv_bound(&m, &p, &m, &p).unwrap() < 1e-15);
        let one = DMatrix::identity(1, 1);
        assert_relative_eq!(gaussian_tv_bound(&v(&[0.1]), &one, &v(&[0.0]), &one).unwrap(), 0.05, epsilon = 1e-15);
        let wide = DMatrix::identity(1, 1) * 2.0;
        assert_eq!(gaussian_tv_bound(&v(&[0.0]), &wide, &v(&[0.0]), &one).unwrap(), 1.0);
        assert!(gaussian_tv_bound(&v(&[0.0]), &(-one.clone()), &v(&[0.0]), &one).is_err());
    }

    /// Midpoint-rule ½∫|p − q| over a wide window.
    fn tv_quadrature(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
        let pdf = |x: f64, m: f64, var: f64| (-(x - m).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let span = 12.0 * v1.max(v2).sqrt();
        let (lo, hi) = (m1.min(m2) - span, m1.max(m2) + span);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        0.5 * (0..n)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                (pdf(x, m1, v1) - pdf(x, m2, v2)).abs() * h
            })
            .sum::<f64>()
    }

    #[test]
    fn exact_tv_matches_quadrature() {
        for &(m1, v1, m2, v2) in &[(0.0, 1.0, 0.5, 1.0), (0.0, 1.0, 0.0, 2.0), (1.0, 0.5, -0.3, 1.7), (0.2, 3.0, 0.0, 0.4)] {
            assert_relative_eq!(gaussian_tv_exact_1d(m1, v1, m2, v2), tv_quadrature(m1, v1, m2, v2), epsilon = 1e-7);
        }
    }

    #[test]
    fn eps_app_direct_formula() {
        let direct = (10_000f64 / 29.0).ln() * (10.0 * 10_000f64.ln() + 5.0) / 100.0;
        assert_relative_eq!(eps_app(10_000, 29, 10, 5.0), direct, epsilon = 1e-12);
        assert_relative_eq!(eps_app(10_000, 29, 10, 5.0), 5.674, epsilon = 1e-3);
        assert!(eps_app(100_000, 29, 10, 5.0) < eps_app(10_000, 29, 10, 5.0));
    }

    #[test]
    fn bvm_examples() {
        let f = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
        let mle = v(&[0.1, 0.2]);
        let post = GaussianPosterior::new(mle.clone(), f.clone()).unwrap();
        let d = bvm_diagnostics(&post, &mle, &f, FisherSource::TrueParameter, 100, 10, 5.0).unwrap();
        assert!(d.mean_align < 1e-12 && d.precision_align < 1e-12 && d.tv_bound < 1e-12);

        let post = GaussianPosterior::new(mle.clone(), &f * 2.0).unwrap();
        let d = bvm_diagnostics(&post, &mle, &f, FisherSource::TrueParameter, 100, 10, 5.0).unwrap();
        assert_relative_eq!(d.precision_align, 0.5, epsilon = 1e-12);

        assert!(bvm_diagnostics(&post, &mle, &f, FisherSource::MleEstimate, 10, 10, 5.0).is_err());
        assert!(matches!(
            bvm_diagnostics(&post, &mle, &DMatrix::zeros(2, 2), FisherSource::MleEstimate, 20, 10, 5.0),
            Err(BooError::Singular(_))
        ));
    }

    proptest! {
        #[test]
        fn wald_sets_nest(a1 in 0.001f64..0.99, a2 in 0.001f64..0.99, d in proptest::collection::vec(-4.0f64..4.0, 3)) {
            let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
            let c = DVector::zeros(3);
            let prec = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
            let theta = v(&d);
            if wald_set_contains(&c, &prec, hi, &theta).unwrap() {
                prop_assert!(wald_set_contains(&c, &prec, lo, &theta).unwrap());
            }
        }

        #[test]
        fn interval_agrees_with_wald_in_one_dimension(c in -2.0f64..2.0, var in 0.01f64..4.0, th in -8.0f64..8.0, alpha in 0.01f64..0.5) {
            let set = coordinate_intervals(&v(&[c]), &v(&[var]), alpha).unwrap();
            let boundary = (th - c).abs() - set.half_widths[0];
            prop_assume!(boundary.abs() > 1e-9);
            let wald = wald_set_contains(&v(&[c]), &DMatrix::from_element(1, 1, 1.0 / var), alpha, &v(&[th])).unwrap();
            prop_assert_eq!(set.contains(0, th), wald);
        }
    }
}
