//! C interface to `roipca`.
//!
//! A model is an opaque handle created by [`roipca_model_new`] and released
//! with [`roipca_model_free`]. Every fallible call returns a [`RoipcaStatus`];
//! the text of the last failure on the calling thread is available through
//! [`roipca_last_error`]. Matrices are dense, row-major, one sample per row.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use roipca::{Algorithm, EigvecFormula, Error, MuPolicy, OnlinePcaConfig, Order, SpectralState};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoipcaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InsufficientData = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoipcaAlgorithm {
    /// Only the retained eigenpairs are stored.
    CovarianceFree = 1,
    /// The scatter matrix is stored as well; needed for second order and `mu = star`.
    CovarianceBacked = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoipcaMu {
    Zero = 0,
    Mean = 1,
    Star = 2,
}

/// Model settings. Start from [`roipca_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RoipcaOptions {
    pub algorithm: RoipcaAlgorithm,
    /// 1 or 2.
    pub order: u32,
    /// Nonzero selects the O(md) eigenvector formula.
    pub fast: u32,
    pub mu: RoipcaMu,
    /// Recenter on the running mean every this many samples; 0 never.
    pub recenter_every: usize,
    pub reorthonormalize_every: usize,
}

/// Opaque model handle.
pub struct RoipcaModel {
    state: SpectralState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> RoipcaStatus {
    match e {
        Error::InvalidInput(_) | Error::Config(_) | Error::Parse { .. } | Error::Io(_) => RoipcaStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => RoipcaStatus::DimensionMismatch,
        Error::InsufficientData { .. } => RoipcaStatus::InsufficientData,
        _ => RoipcaStatus::Numerical,
    }
}

/// Runs `f`, turning errors and panics into a status and the thread's error text.
fn guarded(f: impl FnOnce() -> Result<(), (RoipcaStatus, String)>) -> RoipcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RoipcaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RoipcaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RoipcaStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RoipcaStatus, String) {
    (RoipcaStatus::NullPointer, format!("{what} is null"))
}

fn config_from(m: usize, o: &RoipcaOptions) -> Result<OnlinePcaConfig, (RoipcaStatus, String)> {
    let order = Order::from_int(o.order)
        .ok_or_else(|| (RoipcaStatus::InvalidArgument, format!("order must be 1 or 2, got {}", o.order)))?;
    let cfg = OnlinePcaConfig::new(m)
        .with_algorithm(match o.algorithm {
            RoipcaAlgorithm::CovarianceFree => Algorithm::CovarianceFree,
            RoipcaAlgorithm::CovarianceBacked => Algorithm::CovarianceBacked,
        })
        .with_order(order)
        .with_formula(if o.fast != 0 { EigvecFormula::Fast } else { EigvecFormula::Truncated })
        .with_mu(match o.mu {
            RoipcaMu::Zero => MuPolicy::Zero,
            RoipcaMu::Mean => MuPolicy::Mean,
            RoipcaMu::Star => MuPolicy::Star,
        })
        .with_recenter_every((o.recenter_every > 0).then_some(o.recenter_every))
        .with_reorthonormalize_every(o.reorthonormalize_every);
    cfg.validate().map_err(lib_err)?;
    Ok(cfg)
}

/// Default settings: covariance-free, first order, truncated formula, mean `mu`.
#[no_mangle]
pub extern "C" fn roipca_options_default() -> RoipcaOptions {
    let cfg = OnlinePcaConfig::new(1);
    RoipcaOptions {
        algorithm: RoipcaAlgorithm::CovarianceFree,
        order: 1,
        fast: 0,
        mu: RoipcaMu::Mean,
        recenter_every: 0,
        reorthonormalize_every: cfg.reorthonormalize_every,
    }
}

/// Warm-starts a model with `m` components on the `rows × cols` matrix `x0`.
/// `options` may be null for the defaults. On success `*out` owns the model.
///
/// # Safety
/// `x0` must point to `rows * cols` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roipca_model_new(
    x0: *const f64,
    rows: usize,
    cols: usize,
    m: usize,
    options: *const RoipcaOptions,
    out: *mut *mut RoipcaModel,
) -> RoipcaStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if x0.is_null() {
            return Err(null("x0"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| (RoipcaStatus::InvalidArgument, "rows * cols overflows".to_string()))?;
        let opts = if options.is_null() { roipca_options_default() } else { *options };
        let cfg = config_from(m, &opts)?;
        let data = std::slice::from_raw_parts(x0, len);
        let x0 = DMatrix::from_row_slice(rows, cols, data);
        let state = SpectralState::init_from_batch(&x0, cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RoipcaModel { state }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`roipca_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn roipca_model_free(model: *mut RoipcaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Absorbs one sample of length `len` (the model dimension).
///
/// # Safety
/// `model` must be a live handle and `x` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn roipca_model_ingest(model: *mut RoipcaModel, x: *const f64, len: usize) -> RoipcaStatus {
    guarded(|| {
        let model = model.as_mut().ok_or_else(|| null("model"))?;
        if x.is_null() {
            return Err(null("x"));
        }
        let x = DVector::from_column_slice(std::slice::from_raw_parts(x, len));
        model.state.ingest(&x).map(|_| ()).map_err(lib_err)
    })
}

/// Recenters the accumulated data on the running mean.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn roipca_model_recenter(model: *mut RoipcaModel) -> RoipcaStatus {
    guarded(|| {
        let model = model.as_mut().ok_or_else(|| null("model"))?;
        let mean = model.state.running_mean().clone();
        model.state.recenter(&mean).map_err(lib_err)
    })
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn roipca_model_dim(model: *const RoipcaModel) -> usize {
    model.as_ref().map_or(0, |m| m.state.dim())
}

/// Number of components, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn roipca_model_components_count(model: *const RoipcaModel) -> usize {
    model.as_ref().map_or(0, |m| m.state.eigenpairs().count())
}

/// Samples absorbed so far, warm start included.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn roipca_model_samples(model: *const RoipcaModel) -> usize {
    model.as_ref().map_or(0, |m| m.state.n())
}

/// Copies the components out: `values` receives the `m` eigenvalues at
/// covariance scale (descending), `vectors` the `m × dim` row-major matrix of
/// unit eigenvectors. Either buffer may be null to skip it.
///
/// # Safety
/// `model` must be a live handle; non-null buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn roipca_model_components(
    model: *const RoipcaModel,
    values: *mut f64,
    values_len: usize,
    vectors: *mut f64,
    vectors_len: usize,
) -> RoipcaStatus {
    guarded(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let pairs = model.state.components();
        let (m, d) = (pairs.count(), pairs.dim());
        if !values.is_null() {
            if values_len < m {
                return Err((RoipcaStatus::BufferTooSmall, format!("values needs {m} slots, got {values_len}")));
            }
            std::slice::from_raw_parts_mut(values, m).copy_from_slice(pairs.values());
        }
        if !vectors.is_null() {
            if vectors_len < m * d {
                return Err((
                    RoipcaStatus::BufferTooSmall,
                    format!("vectors needs {} slots, got {vectors_len}", m * d),
                ));
            }
            let out = std::slice::from_raw_parts_mut(vectors, m * d);
            for j in 0..m {
                out[j * d..(j + 1) * d].copy_from_slice(pairs.vector(j).as_slice());
            }
        }
        Ok(())
    })
}

/// Copies the calling thread's last error text, NUL-terminated and truncated
/// to `len` bytes, into `buf`. Returns the full length without the NUL, so a
/// call with `len = 0` sizes the buffer.
///
/// # Safety
/// `buf` must be null or hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn roipca_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn roipca_status_message(status: RoipcaStatus) -> *const c_char {
    let s: &'static CStr = match status {
        RoipcaStatus::Ok => c"ok",
        RoipcaStatus::NullPointer => c"null pointer argument",
        RoipcaStatus::InvalidArgument => c"invalid argument",
        RoipcaStatus::DimensionMismatch => c"dimension mismatch",
        RoipcaStatus::InsufficientData => c"insufficient data",
        RoipcaStatus::Numerical => c"numerical failure",
        RoipcaStatus::BufferTooSmall => c"buffer too small",
        RoipcaStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}
