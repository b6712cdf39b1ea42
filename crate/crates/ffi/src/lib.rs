//! C ABI over the `boo-core` streaming estimators.
//!
//! Handles are opaque and owned by the caller between `*_new` and `*_free`.
//! Every fallible call returns a [`BooStatus`]; the message of the most recent
//! failure on the calling thread is available from [`boo_last_error`].
//! Vectors are passed as `(pointer, length)`; matrices are dense `p × p`,
//! row-major.

use std::cell::RefCell;
use std::ffi::CString;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, c_int, size_t};

use boo_core::baselines::{SgdConfig, SgdFamilyEstimator};
use boo_core::inference::coordinate_intervals;
use boo_core::{default_t0, BooConfig, BooError, BooEstimator, LinkFunction, Observation};
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BooStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Non-finite values, indefinite matrices, solver non-convergence.
    Numerical = 4,
    /// Posterior not available yet (still in the warm start).
    NotReady = 5,
    /// The estimator failed earlier and accepts no more data.
    Failed = 6,
    Panic = 7,
}

/// Link codes accepted by the `link` arguments.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BooLink {
    Logistic = 0,
    Poisson = 1,
}

fn link_of(link: c_int) -> Result<LinkFunction, Fail> {
    match link {
        l if l == BooLink::Logistic as c_int => Ok(LinkFunction::Logistic),
        l if l == BooLink::Poisson as c_int => Ok(LinkFunction::Poisson),
        other => Err(Fail(BooStatus::InvalidArgument, format!("unknown link code {other}"))),
    }
}

/// Opaque BOO estimator.
pub struct BooHandle {
    inner: BooEstimator,
}

/// Opaque SGD / averaged-SGD estimator.
pub struct BooSgdHandle {
    inner: SgdFamilyEstimator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &BooError) -> BooStatus {
    match err {
        BooError::DimensionMismatch { .. } => BooStatus::DimensionMismatch,
        BooError::Failed(_) => BooStatus::Failed,
        e if e.is_numerical() => BooStatus::Numerical,
        _ => BooStatus::InvalidArgument,
    }
}

struct Fail(BooStatus, String);

impl From<BooError> for Fail {
    fn from(e: BooError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BooStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BooStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            BooStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(BooStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn slice_mut<'a>(data: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

unsafe fn handle<'a, T>(h: *mut T) -> Result<&'a mut T, Fail> {
    h.as_mut().ok_or_else(|| null("handle"))
}

fn copy_out(src: &DVector<f64>, out: &mut [f64]) -> Result<(), Fail> {
    if out.len() != src.len() {
        return Err(Fail(
            BooStatus::DimensionMismatch,
            format!("output has length {}, expected {}", out.len(), src.len()),
        ));
    }
    out.copy_from_slice(src.as_slice());
    Ok(())
}

fn observation(y: f64, x: &[f64], p: usize) -> Result<Observation, Fail> {
    if x.len() != p {
        return Err(BooError::DimensionMismatch { expected: p, got: x.len() }.into());
    }
    Ok(Observation::from_slice(y, x))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn boo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn boo_status_name(status: c_int) -> *const c_char {
    let s: &'static [u8] = match status {
        0 => b"ok\0",
        1 => b"null pointer\0",
        2 => b"invalid argument\0",
        3 => b"dimension mismatch\0",
        4 => b"numerical failure\0",
        5 => b"posterior not ready\0",
        6 => b"estimator failed\0",
        7 => b"internal panic\0",
        _ => b"unknown status\0",
    };
    s.as_ptr().cast()
}

/// Default warm-start length `⌈M(p ln(p ∨ 3) + x)⌉`; 0 when `p == 0`.
#[no_mangle]
pub extern "C" fn boo_default_t0(p: size_t, x: f64, m: f64) -> size_t {
    if p == 0 || m.is_nan() || m < 0.0 || !x.is_finite() {
        return 0;
    }
    default_t0(p, x, m)
}

/// Creates a BOO estimator. `prior_mean` (length `p`) and `prior_precision`
/// (`p × p`) may be null for `N(0, I)`.
///
/// # Safety
/// Non-null pointers must reference arrays of the stated sizes; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn boo_new(
    link: c_int,
    p: size_t,
    t0: size_t,
    prior_mean: *const f64,
    prior_precision: *const f64,
    out: *mut *mut BooHandle,
) -> BooStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let mut config = BooConfig::new(link_of(link)?, p, t0);
        if !prior_mean.is_null() || !prior_precision.is_null() {
            let mean = if prior_mean.is_null() {
                DVector::zeros(p)
            } else {
                DVector::from_column_slice(slice(prior_mean, p, "prior_mean")?)
            };
            let prec = if prior_precision.is_null() {
                DMatrix::identity(p, p)
            } else {
                DMatrix::from_row_slice(p, p, slice(prior_precision, p * p, "prior_precision")?)
            };
            config = config.with_prior(mean, prec);
        }
        let inner = BooEstimator::new(config)?;
        *out = Box::into_raw(Box::new(BooHandle { inner }));
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`boo_new`] and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn boo_free(h: *mut BooHandle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Consumes one observation `(y, x)` with `x` of length `p`.
///
/// # Safety
/// `h` must be a live handle and `x` must point to `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn boo_ingest(h: *mut BooHandle, y: f64, x: *const f64, p: size_t) -> BooStatus {
    guard(|| {
        let h = handle(h)?;
        let obs = observation(y, slice(x, p, "x")?, h.inner.config().dim())?;
        h.inner.ingest(&obs)?;
        Ok(())
    })
}

/// Consumes `n` observations; `xs` is row-major `n × p`. Stops at the first
/// failure, leaving the earlier observations applied.
///
/// # Safety
/// `ys` must point to `n` doubles and `xs` to `n·p` doubles.
#[no_mangle]
pub unsafe extern "C" fn boo_ingest_many(
    h: *mut BooHandle,
    ys: *const f64,
    xs: *const f64,
    n: size_t,
    p: size_t,
) -> BooStatus {
    guard(|| {
        let h = handle(h)?;
        let ys = slice(ys, n, "ys")?;
        let xs = slice(xs, n * p, "xs")?;
        let dim = h.inner.config().dim();
        for (i, &y) in ys.iter().enumerate() {
            let obs = observation(y, &xs[i * p..(i + 1) * p], dim)?;
            h.inner.ingest(&obs)?;
        }
        Ok(())
    })
}

/// Observations consumed so far; 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn boo_count(h: *const BooHandle) -> size_t {
    h.as_ref().map_or(0, |h| h.inner.t())
}

/// 1 once the warm start is over, 0 otherwise.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn boo_is_online(h: *const BooHandle) -> c_int {
    h.as_ref().map_or(0, |h| c_int::from(h.inner.is_online()))
}

/// Current point estimate (the prior mean during the warm start).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn boo_estimate(h: *const BooHandle, out: *mut f64, len: size_t) -> BooStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        copy_out(h.inner.estimate(), slice_mut(out, len, "out")?)
    })
}

/// Diagonal of `Ωₜ⁻¹`. Returns `NotReady` during the warm start.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn boo_covariance_diag(h: *const BooHandle, out: *mut f64, len: size_t) -> BooStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let post = h.inner.posterior().ok_or_else(|| Fail(BooStatus::NotReady, "still in the warm start".into()))?;
        copy_out(&post.covariance_diag(), slice_mut(out, len, "out")?)
    })
}

/// Coordinate-wise `1 − alpha` credible intervals from the current posterior.
///
/// # Safety
/// `lower` and `upper` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn boo_intervals(
    h: *const BooHandle,
    alpha: f64,
    lower: *mut f64,
    upper: *mut f64,
    len: size_t,
) -> BooStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let post = h.inner.posterior().ok_or_else(|| Fail(BooStatus::NotReady, "still in the warm start".into()))?;
        let set = coordinate_intervals(post.mean(), &post.covariance_diag(), alpha)?;
        let lo = DVector::from_iterator(set.centers.len(), set.centers.iter().zip(&set.half_widths).map(|(c, w)| c - w));
        let hi = DVector::from_iterator(set.centers.len(), set.centers.iter().zip(&set.half_widths).map(|(c, w)| c + w));
        copy_out(&lo, slice_mut(lower, len, "lower")?)?;
        copy_out(&hi, slice_mut(upper, len, "upper")?)
    })
}

/// Creates a plain SGD estimator started at `initial` (null for zero) with
/// step size `step0 · t^(−step_exp)`.
///
/// # Safety
/// `initial` must be null or point to `p` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn boo_sgd_new(
    link: c_int,
    p: size_t,
    initial: *const f64,
    step0: f64,
    step_exp: f64,
    out: *mut *mut BooSgdHandle,
) -> BooStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let start = if initial.is_null() {
            DVector::zeros(p)
        } else {
            DVector::from_column_slice(slice(initial, p, "initial")?)
        };
        let config = SgdConfig::plain(link_of(link)?, start).with_steps(step0, step_exp);
        let inner = SgdFamilyEstimator::new(config)?;
        *out = Box::into_raw(Box::new(BooSgdHandle { inner }));
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`boo_sgd_new`] and not be used afterwards. Null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn boo_sgd_free(h: *mut BooSgdHandle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle and `x` must point to `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn boo_sgd_step(h: *mut BooSgdHandle, y: f64, x: *const f64, p: size_t) -> BooStatus {
    guard(|| {
        let h = handle(h)?;
        let obs = observation(y, slice(x, p, "x")?, h.inner.iterate().len())?;
        h.inner.step(&obs)?;
        Ok(())
    })
}

/// Last SGD iterate.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn boo_sgd_iterate(h: *const BooSgdHandle, out: *mut f64, len: size_t) -> BooStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        copy_out(h.inner.iterate(), slice_mut(out, len, "out")?)
    })
}

/// Running average of the iterates.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn boo_sgd_average(h: *const BooSgdHandle, out: *mut f64, len: size_t) -> BooStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        copy_out(h.inner.average(), slice_mut(out, len, "out")?)
    })
}

/// Per-observation negative log-likelihood `b(xᵀθ) − y xᵀθ`.
///
/// # Safety
/// `x` and `theta` must point to `p` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn boo_glm_loss(
    link: c_int,
    y: f64,
    x: *const f64,
    theta: *const f64,
    p: size_t,
    out: *mut f64,
) -> BooStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let obs = observation(y, slice(x, p, "x")?, p)?;
        let theta = DVector::from_column_slice(slice(theta, p, "theta")?);
        *out = link_of(link)?.loss(&obs, &theta)?;
        Ok(())
    })
}

/// Gradient of [`boo_glm_loss`] in `θ`, written to `out` (length `p`).
///
/// # Safety
/// `x`, `theta` and `out` must point to `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn boo_glm_gradient(
    link: c_int,
    y: f64,
    x: *const f64,
    theta: *const f64,
    p: size_t,
    out: *mut f64,
) -> BooStatus {
    guard(|| {
        let obs = observation(y, slice(x, p, "x")?, p)?;
        let theta = DVector::from_column_slice(slice(theta, p, "theta")?);
        let g = link_of(link)?.gradient(&obs, &theta)?;
        copy_out(&g, slice_mut(out, p, "out")?)
    })
}
