//! Small dense linear-algebra helpers over nalgebra for symmetric matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{BooError, Result};

pub fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(BooError::NonFinite(what));
    }
    Cholesky::new(m.clone()).ok_or(BooError::NotPositiveDefinite(what))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m, what)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn log_det_spd(m: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    let chol = cholesky(m, what)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `m += scale · u uᵀ`, touching each entry once.
pub fn add_rank_one(m: &mut DMatrix<f64>, scale: f64, u: &DVector<f64>) {
    let n = u.len();
    for j in 0..n {
        let su = scale * u[j];
        if su == 0.0 {
            continue;
        }
        for i in 0..n {
            m[(i, j)] += su * u[i];
        }
    }
}

/// `(θ)ᵀ M θ` for symmetric `M`.
pub fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

fn eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    SymmetricEigen::new(m.clone())
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = eigen(m);
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    let mut out = &e.eigenvectors * d * e.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(m, |l| l.max(0.0).sqrt())
}

pub fn sym_inv_sqrt(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    cholesky(m, what)?;
    Ok(sym_fn(m, |l| 1.0 / l.sqrt()))
}

pub fn eigenvalues_sorted(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = eigen(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues_sorted(m).first().copied().unwrap_or(0.0)
}

/// Operator 2-norm of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    eigen(m).eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// `‖A − I‖_F`.
pub fn dist_to_identity(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    (m - DMatrix::<f64>::identity(n, n)).norm()
}
