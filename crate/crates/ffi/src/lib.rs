//! C ABI over the kdexit inference path and summary scoring.
//!
//! Every fallible function returns a [`KdxStatus`]; on failure a message is
//! available from [`kdx_last_error`] on the same thread until the next call.
//! Models are opaque heap handles owned by the caller once loaded.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kdexit::earlyexit::{route, RoutingPolicy};
use kdexit::eval::{f1_against_reference, select_summary};
use kdexit::model::{load_model, ExitableModel};
use kdexit::Error;

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdxStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Parameter = 3,
    Index = 4,
    Degenerate = 5,
    Config = 6,
    Lifecycle = 7,
    Data = 8,
    Parse = 9,
    Validation = 10,
    Contract = 11,
    Io = 12,
    Utf8 = 13,
    Panic = 14,
}

impl From<&Error> for KdxStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => KdxStatus::Dimension,
            Error::Parameter(_) => KdxStatus::Parameter,
            Error::Index(_) => KdxStatus::Index,
            Error::Degenerate(_) => KdxStatus::Degenerate,
            Error::Config(_) => KdxStatus::Config,
            Error::Lifecycle(_) => KdxStatus::Lifecycle,
            Error::Data(_) => KdxStatus::Data,
            Error::Parse { .. } => KdxStatus::Parse,
            Error::Validation(_) => KdxStatus::Validation,
            Error::Contract(_) => KdxStatus::Contract,
            Error::Io { .. } => KdxStatus::Io,
        }
    }
}

/// Opaque model handle.
pub struct KdxModel {
    inner: ExitableModel,
}

/// Where a routed input left the network.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KdxExitResult {
    /// 1-based exit index.
    pub exit: usize,
    pub blocks: usize,
    pub confidence: f64,
    pub predicted_class: usize,
}

/// Precision, recall and F1 in [0, 1].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KdxPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, records any error or panic, and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), (KdxStatus, String)>) -> KdxStatus {
    set_error(String::new());
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KdxStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            KdxStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (KdxStatus, String) {
    (KdxStatus::from(&e), format!("{}: {e}", e.code()))
}

fn null(what: &str) -> (KdxStatus, String) {
    (KdxStatus::NullPointer, format!("{what} is null"))
}

/// Borrows `len` elements, allowing a null pointer only when `len == 0`.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (KdxStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (KdxStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const KdxModel) -> Result<&'a ExitableModel, (KdxStatus, String)> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

fn copy_probs(src: &[f64], dst: &mut [f64]) -> Result<(), (KdxStatus, String)> {
    if dst.len() != src.len() {
        return Err((
            KdxStatus::Dimension,
            format!("probability buffer holds {} values, model has {} classes", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message for the last failing call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn kdx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model artifact. On success `*out` owns a handle that must be
/// released with [`kdx_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kdx_model_load(path: *const c_char, out: *mut *mut KdxModel) -> KdxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| (KdxStatus::Utf8, format!("path is not UTF-8: {e}")))?;
        let inner = load_model(p).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(KdxModel { inner }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from [`kdx_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn kdx_model_free(model: *mut KdxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of exit heads, including the final one.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn kdx_model_num_exits(model: *const KdxModel, out: *mut usize) -> KdxStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.num_exits();
        Ok(())
    })
}

/// Number of classes K.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn kdx_model_num_classes(model: *const KdxModel, out: *mut usize) -> KdxStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.num_classes();
        Ok(())
    })
}

/// Expected input width.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn kdx_model_input_dim(model: *const KdxModel, out: *mut usize) -> KdxStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.config().input_dim;
        Ok(())
    })
}

/// Full-depth class probabilities of one input, written to `probs`
/// (`num_classes` values).
///
/// # Safety
/// `x` must hold `x_len` doubles and `probs` `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kdx_forward_full(
    model: *const KdxModel,
    x: *const f64,
    x_len: usize,
    probs: *mut f64,
    probs_len: usize,
) -> KdxStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = slice(x, x_len, "x")?;
        let dst = slice_mut(probs, probs_len, "probs")?;
        let d = m.forward_full(x).map_err(lib_err)?;
        copy_probs(d.probs(), dst)
    })
}

/// Routes one input with threshold `tau` (1 disables early exit). The
/// distribution at the taken exit goes to `probs`; `probs` may be null when
/// `probs_len` is 0.
///
/// # Safety
/// As for [`kdx_forward_full`]; `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kdx_route(
    model: *const KdxModel,
    x: *const f64,
    x_len: usize,
    tau: f64,
    probs: *mut f64,
    probs_len: usize,
    result: *mut KdxExitResult,
) -> KdxStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = slice(x, x_len, "x")?;
        let result = result.as_mut().ok_or_else(|| null("result"))?;
        let policy = RoutingPolicy::new(tau).map_err(lib_err)?;
        let t = route(m, x, policy).map_err(lib_err)?;
        if probs_len > 0 {
            copy_probs(t.prediction.probs(), slice_mut(probs, probs_len, "probs")?)?;
        }
        *result = KdxExitResult {
            exit: t.exit,
            blocks: t.blocks_traversed,
            confidence: t.confidence_at_exit(),
            predicted_class: t.predicted_class(),
        };
        Ok(())
    })
}

/// Budgeted summary selection over `n` segments. Writes 1 into
/// `selected[i]` for chosen segments and 0 otherwise; `*count` receives the
/// number chosen.
///
/// # Safety
/// `scores`, `durations` and `selected` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn kdx_select_summary(
    scores: *const f64,
    durations: *const u32,
    n: usize,
    budget_fraction: f64,
    selected: *mut u8,
    count: *mut usize,
) -> KdxStatus {
    guard(|| {
        let scores = slice(scores, n, "scores")?;
        let durations = slice(durations, n, "durations")?;
        let flags = slice_mut(selected, n, "selected")?;
        let count = count.as_mut().ok_or_else(|| null("count"))?;
        let sel = select_summary(scores, durations, budget_fraction).map_err(lib_err)?;
        flags.fill(0);
        for &i in &sel.selected {
            flags[i] = 1;
        }
        *count = sel.selected.len();
        Ok(())
    })
}

/// Duration-weighted precision, recall and F1 of one selection against one
/// reference. Selections are 0/1 flag arrays of length `n`.
///
/// # Safety
/// All arrays must hold `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kdx_f1(
    selected: *const u8,
    reference: *const u8,
    durations: *const u32,
    n: usize,
    out: *mut KdxPrf,
) -> KdxStatus {
    guard(|| {
        let sel = slice(selected, n, "selected")?;
        let refs = slice(reference, n, "reference")?;
        let durations = slice(durations, n, "durations")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let idx = |flags: &[u8]| flags.iter().enumerate().filter(|(_, &f)| f != 0).map(|(i, _)| i).collect::<Vec<_>>();
        let r = f1_against_reference(&idx(sel), &idx(refs), durations).map_err(lib_err)?;
        *out = KdxPrf {
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        };
        Ok(())
    })
}
