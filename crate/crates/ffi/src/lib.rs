//! C ABI over `skd-core`.
//!
//! Conventions:
//! - every fallible function returns an [`SkdStatus`]; on failure a message
//!   is available from [`skd_last_error`] on the same thread;
//! - matrices are dense row-major `double` buffers, with explicit row and
//!   column counts; output buffers are caller-owned and their length (in
//!   elements) is checked;
//! - handles (`SkdModel`, `SkdSimplifier`) are opaque, created by a `_load`
//!   function and released with the matching `_free`;
//! - panics never cross the boundary; they surface as `SKD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use skd_core::autodiff::{softmax_t, Tensor};
use skd_core::distill::{Simplifier, SofteningConfig};
use skd_core::harness::{self, load_checkpoint, Data, ExperimentConfig};
use skd_core::metrics::{average_agreement, topk_accuracy, AgreementInput};
use skd_core::nn::Mlp;
use skd_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Io = 4,
    Config = 5,
    Checkpoint = 6,
    Numeric = 7,
    Data = 8,
    Panic = 9,
    Internal = 10,
}

/// A loaded teacher or student network.
pub struct SkdModel {
    inner: Mlp,
}

/// A loaded learning simplifier.
pub struct SkdSimplifier {
    inner: Simplifier,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(SkdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dimension { .. } | Error::Rank(_) => SkdStatus::Dimension,
            Error::InvalidTemperature(_) | Error::InvalidRate(_) => SkdStatus::InvalidArgument,
            Error::Config(_) | Error::IncompatibleRuns(_) => SkdStatus::Config,
            Error::NonFiniteInput(_) | Error::NonFiniteGradient(_) | Error::NonFiniteLoss { .. } => {
                SkdStatus::Numeric
            }
            Error::Parse { .. } | Error::LabelRange { .. } | Error::EmptyDataset => SkdStatus::Data,
            Error::VersionMismatch { .. } | Error::ShapeMismatch(_) | Error::Malformed(_) => {
                SkdStatus::Checkpoint
            }
            Error::Io { .. } => SkdStatus::Io,
            _ => SkdStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: SkdStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SkdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SkdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SkdStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(SkdStatus::NullPointer, format!("{what} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(SkdStatus::InvalidArgument, format!("{what} is not UTF-8")),
    }
}

unsafe fn matrix_arg(x: *const f64, rows: usize, cols: usize, what: &str) -> Result<Tensor, Failure> {
    if x.is_null() {
        return fail(SkdStatus::NullPointer, format!("{what} is null"));
    }
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(SkdStatus::InvalidArgument, format!("{what}: size overflows")))?;
    let data = std::slice::from_raw_parts(x, n).to_vec();
    Ok(Tensor::new(vec![rows, cols], data)?)
}

unsafe fn write_out(t: &Tensor, out: *mut f64, out_len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return fail(SkdStatus::NullPointer, "output buffer is null");
    }
    if out_len < t.numel() {
        return fail(
            SkdStatus::Dimension,
            format!("output buffer holds {out_len} values, {} needed", t.numel()),
        );
    }
    std::ptr::copy_nonoverlapping(t.data().as_ptr(), out, t.numel());
    Ok(())
}

unsafe fn scalar_out(out: *mut f64, v: f64) -> Result<(), Failure> {
    if out.is_null() {
        return fail(SkdStatus::NullPointer, "output pointer is null");
    }
    *out = v;
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(SkdStatus::NullPointer, format!("{what} handle is null")))
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn skd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn skd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a teacher or student checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skd_model_load(path: *const c_char, out: *mut *mut SkdModel) -> SkdStatus {
    guard(|| {
        if out.is_null() {
            return fail(SkdStatus::NullPointer, "out is null");
        }
        let c = load_checkpoint(&path_arg(path, "path")?)?;
        let model = Box::new(SkdModel { inner: c.to_mlp()? });
        *out = Box::into_raw(model);
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`skd_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn skd_model_free(model: *mut SkdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input width of the model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skd_model_inputs(model: *const SkdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.spec().inputs())
}

/// Number of classes the model predicts, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skd_model_classes(model: *const SkdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.classes())
}

/// Eval-mode logits for `rows × cols` features into `out` (`rows × classes`).
///
/// # Safety
/// `x` must hold `rows * cols` doubles and `out` at least `out_len`.
#[no_mangle]
pub unsafe extern "C" fn skd_model_forward(
    model: *const SkdModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    out_len: usize,
) -> SkdStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let x = matrix_arg(x, rows, cols, "x")?;
        write_out(&m.inner.infer(&x)?, out, out_len)
    })
}

/// Loads a simplifier checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skd_simplifier_load(path: *const c_char, out: *mut *mut SkdSimplifier) -> SkdStatus {
    guard(|| {
        if out.is_null() {
            return fail(SkdStatus::NullPointer, "out is null");
        }
        let c = load_checkpoint(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(SkdSimplifier { inner: c.to_simplifier()? }));
        Ok(())
    })
}

/// Releases a simplifier; null is ignored.
///
/// # Safety
/// `s` must come from [`skd_simplifier_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn skd_simplifier_free(s: *mut SkdSimplifier) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of classes the simplifier works on, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skd_simplifier_classes(s: *const SkdSimplifier) -> usize {
    s.as_ref().map_or(0, |s| s.inner.classes())
}

/// Eval-mode simplified teacher logits `soften(g_t) + Δ`, where softening is
/// `log_softmax(g_t / t_soften)` when `soften` is true and the identity
/// otherwise. The attention simplifier mixes rows, so pass a whole batch.
///
/// # Safety
/// `g_t` must hold `rows * classes` doubles and `out` at least `out_len`.
#[no_mangle]
pub unsafe extern "C" fn skd_simplifier_skd_logits(
    s: *const SkdSimplifier,
    g_t: *const f64,
    rows: usize,
    classes: usize,
    soften: bool,
    t_soften: f64,
    out: *mut f64,
    out_len: usize,
) -> SkdStatus {
    guard(|| {
        let s = handle(s, "simplifier")?;
        let g = matrix_arg(g_t, rows, classes, "g_t")?;
        let cfg = SofteningConfig { enabled: soften, t_soften };
        cfg.validate()?;
        write_out(&s.inner.skd_logits(&g, &cfg)?, out, out_len)
    })
}

/// Eval-mode correction Δ for already-softened logits.
///
/// # Safety
/// `g_soft` must hold `rows * classes` doubles and `out` at least `out_len`.
#[no_mangle]
pub unsafe extern "C" fn skd_simplifier_delta(
    s: *const SkdSimplifier,
    g_soft: *const f64,
    rows: usize,
    classes: usize,
    out: *mut f64,
    out_len: usize,
) -> SkdStatus {
    guard(|| {
        let s = handle(s, "simplifier")?;
        let g = matrix_arg(g_soft, rows, classes, "g_soft")?;
        write_out(&s.inner.delta(&g)?, out, out_len)
    })
}

/// Row-wise `softmax(x / t)`.
///
/// # Safety
/// `x` must hold `rows * cols` doubles and `out` at least `out_len`.
#[no_mangle]
pub unsafe extern "C" fn skd_softmax(
    x: *const f64,
    rows: usize,
    cols: usize,
    t: f64,
    out: *mut f64,
    out_len: usize,
) -> SkdStatus {
    guard(|| {
        let x = matrix_arg(x, rows, cols, "x")?;
        write_out(&softmax_t(&x, t)?, out, out_len)
    })
}

/// Share of rows whose label is among the `k` largest logits.
///
/// # Safety
/// `logits` must hold `rows * cols` doubles and `labels` `rows` entries.
#[no_mangle]
pub unsafe extern "C" fn skd_topk_accuracy(
    logits: *const f64,
    rows: usize,
    cols: usize,
    labels: *const usize,
    k: usize,
    out: *mut f64,
) -> SkdStatus {
    guard(|| {
        let g = matrix_arg(logits, rows, cols, "logits")?;
        if labels.is_null() {
            return fail(SkdStatus::NullPointer, "labels is null");
        }
        let labels = std::slice::from_raw_parts(labels, rows);
        if let Some(&y) = labels.iter().find(|&&y| y >= cols) {
            return fail(SkdStatus::InvalidArgument, format!("label {y} is outside [0, {cols})"));
        }
        scalar_out(out, topk_accuracy(&g, labels, k)?)
    })
}

/// Share of rows where two logit matrices have the same argmax.
///
/// # Safety
/// Both inputs must hold `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn skd_average_agreement(
    a: *const f64,
    b: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> SkdStatus {
    guard(|| {
        let a = matrix_arg(a, rows, cols, "a")?;
        let b = matrix_arg(b, rows, cols, "b")?;
        scalar_out(out, average_agreement(&AgreementInput::from_logits(&a, &b)?))
    })
}

/// Runs a full distillation from a JSON config, as `skd distill` does:
/// resolves (or trains) the teacher, trains every seed, and writes the run
/// record into the output directory. `out_dir` may be null to keep the
/// config's. Mean final top-1 and validation agreement are written to the
/// output pointers when they are non-null.
///
/// # Safety
/// String arguments must be NUL-terminated; output pointers null or writable.
#[no_mangle]
pub unsafe extern "C" fn skd_run_distill(
    config_path: *const c_char,
    out_dir: *const c_char,
    top1_mean: *mut f64,
    agreement_mean: *mut f64,
) -> SkdStatus {
    guard(|| {
        let mut cfg = ExperimentConfig::load(&path_arg(config_path, "config_path")?)?;
        if !out_dir.is_null() {
            cfg.out_dir = path_arg(out_dir, "out_dir")?;
        }
        let data = Data::load(&cfg.data)?;
        let teacher = harness::resolve_teacher(&cfg, &data)?;
        let r = harness::distill(&cfg, &data, &teacher)?;
        harness::save_run(&cfg, &r)?;
        if !top1_mean.is_null() {
            *top1_mean = r.top1.mean;
        }
        if !agreement_mean.is_null() {
            *agreement_mean = r.val_agreement.mean;
        }
        Ok(())
    })
}
