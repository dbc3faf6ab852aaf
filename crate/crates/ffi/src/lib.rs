//! C ABI over `dktlab`.
//!
//! Every function returns a [`DktStatus`]. On failure a message is kept per
//! thread and can be read with [`dkt_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use dktlab::data::{load_model, LoadedModel};
use dktlab::encoding::Interaction;
use dktlab::evaluation::auc_scores;
use dktlab::models::RecurrentState;
use dktlab::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DktStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    UnknownTag = 5,
    OutOfRange = 6,
    BufferTooSmall = 7,
    Model = 8,
    Panic = 99,
}

/// A loaded model. Shared by every session created from it.
pub struct DktModel {
    inner: Arc<LoadedModel>,
}

/// One student's recurrent state.
pub struct DktSession {
    model: Arc<LoadedModel>,
    state: RecurrentState,
    steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> DktStatus {
    match e {
        Error::Io(_) => DktStatus::Io,
        Error::Csv(_)
        | Error::Json(_)
        | Error::Parse { .. }
        | Error::CorruptModel { .. }
        | Error::VersionMismatch { .. }
        | Error::EmptyFile { .. }
        | Error::MissingColumn { .. }
        | Error::BadCorrectness { .. } => DktStatus::Parse,
        Error::UnknownTag { .. } => DktStatus::UnknownTag,
        Error::ExerciseOutOfRange { .. } => DktStatus::OutOfRange,
        Error::ShapeInconsistency(_) | Error::ShapeMismatch { .. } | Error::DimensionMismatch { .. } => {
            DktStatus::Model
        }
        _ => DktStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), (DktStatus, String)>) -> DktStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DktStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            DktStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (DktStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DktStatus, String) {
    (DktStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DktStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DktStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn dkt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dkt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file written by `dktlab train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dkt_model_load(path: *const c_char, out: *mut *mut DktModel) -> DktStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let loaded = load_model(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(DktModel {
            inner: Arc::new(loaded),
        }));
        Ok(())
    })
}

/// Releases a model. Sessions created from it stay valid. NULL is ignored.
///
/// # Safety
/// `model` must come from [`dkt_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dkt_model_free(model: *mut DktModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of exercise tags M.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dkt_model_exercise_count(model: *const DktModel, out: *mut usize) -> DktStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.inner.tracer.exercise_count();
        Ok(())
    })
}

/// Hidden state width.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dkt_model_hidden_dim(model: *const DktModel, out: *mut usize) -> DktStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.inner.tracer.model.hidden_dim();
        Ok(())
    })
}

/// Index of an exercise tag as stored in the model file.
///
/// # Safety
/// `model` must be a live handle, `tag` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dkt_model_tag_index(model: *const DktModel, tag: *const c_char, out: *mut usize) -> DktStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let tag = str_arg(tag, "tag")?;
        *out = m
            .inner
            .tag_names
            .iter()
            .position(|t| t == tag)
            .ok_or_else(|| lib_err(Error::UnknownTag { tag: tag.to_string() }))?;
        Ok(())
    })
}

/// Starts a student with no history.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dkt_session_new(model: *const DktModel, out: *mut *mut DktSession) -> DktStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let model = Arc::clone(&m.inner);
        let state = model.tracer.initial_state();
        *out = Box::into_raw(Box::new(DktSession { model, state, steps: 0 }));
        Ok(())
    })
}

/// Releases a session. NULL is ignored.
///
/// # Safety
/// `session` must come from [`dkt_session_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dkt_session_free(session: *mut DktSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Feeds one answer (`correct` non-zero for a correct answer).
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dkt_session_observe(session: *mut DktSession, exercise: usize, correct: i32) -> DktStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        let next = s
            .model
            .tracer
            .advance(&s.state, Interaction::new(exercise, correct != 0))
            .map_err(lib_err)?;
        s.state = next;
        s.steps += 1;
        Ok(())
    })
}

/// Answers observed so far.
///
/// # Safety
/// `session` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dkt_session_length(session: *const DktSession, out: *mut usize) -> DktStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.steps;
        Ok(())
    })
}

/// Writes the predicted probability of answering each exercise correctly
/// into `out[0..len]`. `len` must be at least the exercise count.
///
/// # Safety
/// `session` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dkt_session_predict(session: *const DktSession, out: *mut f64, len: usize) -> DktStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = s.model.tracer.exercise_count();
        if len < m {
            return Err((DktStatus::BufferTooSmall, format!("buffer holds {len} values, need {m}")));
        }
        let y = s.model.tracer.readout(&s.state);
        std::slice::from_raw_parts_mut(out, m).copy_from_slice(&y);
        Ok(())
    })
}

/// Area under the ROC curve of `scores` against 0/1 `labels`.
///
/// # Safety
/// `labels` and `scores` must each point to `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dkt_auc(labels: *const u8, scores: *const f64, n: usize, out: *mut f64) -> DktStatus {
    guard(|| {
        if labels.is_null() || scores.is_null() {
            return Err(null("labels or scores"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let labels: Vec<bool> = std::slice::from_raw_parts(labels, n).iter().map(|&l| l != 0).collect();
        let scores = std::slice::from_raw_parts(scores, n);
        *out = auc_scores(&labels, scores).map_err(lib_err)?.auc;
        Ok(())
    })
}
