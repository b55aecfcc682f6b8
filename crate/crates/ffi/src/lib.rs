//! C ABI over the phaseline streaming reconstructors.
//!
//! Every object is an opaque handle created by a `phl_*_new` function and
//! released by the matching `phl_*_free`. Every fallible call returns a
//! [`PhlStatus`]; on failure [`phl_last_error`] describes what went wrong on
//! the calling thread. Panics never cross the boundary.
//!
//! Handles are not synchronized: a handle may move between threads but must
//! not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use phaseline::formats::model_from_bytes;
use phaseline::nn::{ConvNetModel, DnnEstimator, Head};
use phaseline::pghi::{GradientParams, HeapIntegrationParams, RtpghiReconstructor};
use phaseline::wls::{WlsConfig, WlsReconstructor};
use phaseline::{Error, StftConfig, WindowKind};

/// Result code of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    Format = 5,
    Io = 6,
    Model = 7,
    Panic = 8,
}

/// Output head of a phase-difference network.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhlHead {
    Bpd = 0,
    Fpd = 1,
}

/// Streaming weighted least-squares reconstructor.
pub struct PhlWls {
    inner: WlsReconstructor,
    bins: Option<usize>,
}

/// Streaming real-time phase-gradient heap integrator.
pub struct PhlRtpghi {
    inner: RtpghiReconstructor,
    bins: usize,
}

/// A loaded phase-difference network.
pub struct PhlModel {
    inner: Arc<ConvNetModel>,
}

/// Streaming network-based phase-difference estimator.
pub struct PhlDnn {
    inner: DnnEstimator<Arc<ConvNetModel>>,
    bins: Option<usize>,
}

struct Failure {
    status: PhlStatus,
    message: String,
}

impl Failure {
    fn new(status: PhlStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidConfig(_)
            | Error::NotInvertible(_)
            | Error::EmptyInput(_)
            | Error::NonFinite(_)
            | Error::InvalidParameter(_) => PhlStatus::InvalidArgument,
            Error::DimensionMismatch { .. } => PhlStatus::DimensionMismatch,
            Error::NotPositiveDefinite { .. } => PhlStatus::NotPositiveDefinite,
            Error::Format(_) => PhlStatus::Format,
            Error::Model(_) => PhlStatus::Model,
            Error::Wav(_) | Error::Io(_) => PhlStatus::Io,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn run(f: impl FnOnce() -> Result<(), Failure>) -> PhlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PhlStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            PhlStatus::Panic
        }
    }
}

fn check_ptr<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(PhlStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    check_ptr(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, expected: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    check_ptr(p, name)?;
    if len != expected {
        return Err(Failure::new(
            PhlStatus::DimensionMismatch,
            format!("{name} holds {len} values, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn state<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    check_ptr(p, name)?;
    Ok(&mut *p)
}

fn check_bins(fixed: &mut Option<usize>, bins: usize) -> Result<(), Failure> {
    if bins == 0 {
        return Err(Failure::new(PhlStatus::InvalidArgument, "frame has no bins"));
    }
    match *fixed {
        Some(b) if b != bins => Err(Failure::new(
            PhlStatus::DimensionMismatch,
            format!("frame has {bins} bins, stream started with {b}"),
        )),
        _ => {
            *fixed = Some(bins);
            Ok(())
        }
    }
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    check_ptr(out, "out")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn phl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn phl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a least-squares reconstructor with compression exponent `p` and
/// frequency weight `gamma0`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn phl_wls_new(p: f64, gamma0: f64, out: *mut *mut PhlWls) -> PhlStatus {
    run(|| {
        let inner = WlsReconstructor::new(WlsConfig { p, gamma0 })?;
        emit(out, PhlWls { inner, bins: None })
    })
}

/// Reconstructs the phase of the next frame.
///
/// `mag` and `phase_out` hold `bins` values, `fpd` holds `bins - 1`. `tpd`
/// holds `bins` values and may be NULL only for the first frame.
///
/// # Safety
/// Every non-null pointer must be valid for the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn phl_wls_push(
    handle: *mut PhlWls,
    mag: *const f64,
    bins: usize,
    tpd: *const f64,
    fpd: *const f64,
    fpd_len: usize,
    phase_out: *mut f64,
    phase_len: usize,
) -> PhlStatus {
    run(|| {
        let h = state(handle, "handle")?;
        check_bins(&mut h.bins, bins)?;
        let mag = input(mag, bins, "mag")?;
        let tpd = if tpd.is_null() {
            None
        } else {
            Some(input(tpd, bins, "tpd")?)
        };
        let fpd = input(fpd, fpd_len, "fpd")?;
        let out = output(phase_out, phase_len, bins, "phase_out")?;
        out.copy_from_slice(&h.inner.push(mag, tpd, fpd)?);
        Ok(())
    })
}

/// Releases a reconstructor. NULL is ignored.
///
/// # Safety
/// `handle` must come from [`phl_wls_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn phl_wls_free(handle: *mut PhlWls) {
    release(handle)
}

/// Creates a real-time heap integrator for a Hann window.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn phl_rtpghi_new(
    window_length: usize,
    hop: usize,
    fft_size: usize,
    tolerance: f64,
    seed: u64,
    out: *mut *mut PhlRtpghi,
) -> PhlStatus {
    run(|| {
        let cfg = StftConfig::new(WindowKind::Hann, window_length, hop, fft_size)?;
        let heap = HeapIntegrationParams {
            relative_tolerance: tolerance,
            rng_seed: seed,
        };
        let inner = RtpghiReconstructor::new(GradientParams::from_config(&cfg), heap)?;
        emit(
            out,
            PhlRtpghi {
                inner,
                bins: fft_size / 2 + 1,
            },
        )
    })
}

/// Reconstructs the phase of the next frame from its magnitude alone.
/// `mag` and `phase_out` hold `fft_size / 2 + 1` values.
///
/// # Safety
/// Pointers must be valid for the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn phl_rtpghi_push(
    handle: *mut PhlRtpghi,
    mag: *const f64,
    bins: usize,
    phase_out: *mut f64,
    phase_len: usize,
) -> PhlStatus {
    run(|| {
        let h = state(handle, "handle")?;
        if bins != h.bins {
            return Err(Failure::new(
                PhlStatus::DimensionMismatch,
                format!("frame has {bins} bins, expected {}", h.bins),
            ));
        }
        let mag = input(mag, bins, "mag")?;
        let out = output(phase_out, phase_len, bins, "phase_out")?;
        let (phase, _) = h.inner.push(mag)?;
        out.copy_from_slice(&phase);
        Ok(())
    })
}

/// Releases an integrator. NULL is ignored.
///
/// # Safety
/// `handle` must come from [`phl_rtpghi_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn phl_rtpghi_free(handle: *mut PhlRtpghi) {
    release(handle)
}

/// Decodes a PDNW model from memory.
///
/// # Safety
/// `bytes` must be valid for `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn phl_model_from_bytes(bytes: *const u8, len: usize, out: *mut *mut PhlModel) -> PhlStatus {
    run(|| {
        check_ptr(bytes, "bytes")?;
        let model = model_from_bytes(std::slice::from_raw_parts(bytes, len))?;
        emit(out, PhlModel { inner: Arc::new(model) })
    })
}

/// Loads a PDNW model from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn phl_model_load(path: *const c_char, out: *mut *mut PhlModel) -> PhlStatus {
    run(|| {
        check_ptr(path, "path")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::new(PhlStatus::InvalidArgument, "path is not valid UTF-8"))?;
        let bytes = std::fs::read(path).map_err(|e| Failure::new(PhlStatus::Io, format!("{path}: {e}")))?;
        let model = model_from_bytes(&bytes)?;
        emit(out, PhlModel { inner: Arc::new(model) })
    })
}

/// Writes the head of `model` to `head`.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn phl_model_head(model: *const PhlModel, head: *mut PhlHead) -> PhlStatus {
    run(|| {
        check_ptr(model, "model")?;
        check_ptr(head, "head")?;
        let model = &*model;
        *head = match model.inner.head {
            Head::Bpd => PhlHead::Bpd,
            Head::Fpd => PhlHead::Fpd,
        };
        Ok(())
    })
}

/// Writes the number of learned parameters of `model` to `count`.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn phl_model_param_count(model: *const PhlModel, count: *mut usize) -> PhlStatus {
    run(|| {
        check_ptr(model, "model")?;
        check_ptr(count, "count")?;
        let model = &*model;
        *count = model.inner.param_count();
        Ok(())
    })
}

/// Releases a model. Estimators created from it stay valid.
///
/// # Safety
/// `model` must come from a `phl_model_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn phl_model_free(model: *mut PhlModel) {
    release(model)
}

/// Creates a streaming estimator from a BPD and an FPD model.
///
/// # Safety
/// Model pointers must be valid handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn phl_dnn_new(
    bpd: *const PhlModel,
    fpd: *const PhlModel,
    hop: usize,
    fft_size: usize,
    out: *mut *mut PhlDnn,
) -> PhlStatus {
    run(|| {
        check_ptr(bpd, "bpd")?;
        check_ptr(fpd, "fpd")?;
        if hop == 0 || fft_size == 0 {
            return Err(Failure::new(
                PhlStatus::InvalidArgument,
                "hop and fft_size must be positive",
            ));
        }
        let (bpd, fpd) = (&*bpd, &*fpd);
        let inner = DnnEstimator::new(bpd.inner.clone(), fpd.inner.clone(), hop, fft_size)?;
        emit(out, PhlDnn { inner, bins: None })
    })
}

/// Estimates the phase differences of the next frame.
///
/// `mag` and `tpd_out` hold `bins` values, `fpd_out` holds `bins - 1`.
/// `has_tpd` is set to false on the first frame, where `tpd_out` is left
/// untouched.
///
/// # Safety
/// Pointers must be valid for the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn phl_dnn_push(
    handle: *mut PhlDnn,
    mag: *const f64,
    bins: usize,
    tpd_out: *mut f64,
    tpd_len: usize,
    fpd_out: *mut f64,
    fpd_len: usize,
    has_tpd: *mut bool,
) -> PhlStatus {
    run(|| {
        let h = state(handle, "handle")?;
        check_bins(&mut h.bins, bins)?;
        let mag = input(mag, bins, "mag")?;
        let tpd_dst = output(tpd_out, tpd_len, bins, "tpd_out")?;
        let fpd_dst = output(fpd_out, fpd_len, bins - 1, "fpd_out")?;
        check_ptr(has_tpd, "has_tpd")?;
        let frame = h.inner.push(mag)?;
        fpd_dst.copy_from_slice(&frame.fpd);
        *has_tpd = match &frame.tpd {
            Some(t) => {
                tpd_dst.copy_from_slice(t);
                true
            }
            None => false,
        };
        Ok(())
    })
}

/// Releases an estimator. NULL is ignored.
///
/// # Safety
/// `handle` must come from [`phl_dnn_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn phl_dnn_free(handle: *mut PhlDnn) {
    release(handle)
}
