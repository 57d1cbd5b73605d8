//! C ABI over a trained run directory.
//!
//! Every fallible function returns a `SpStatus`; on failure the message is
//! available from `sp_last_error` until the next call on the same thread.
//! Strings returned to the caller must be released with `sp_string_free`,
//! models with `sp_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use scratchpad::decoding::DecodeOptions;
use scratchpad::metrics::attention_entropy;
use scratchpad::pipeline::{step_entropies, Run};
use scratchpad::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Config = 5,
    Checkpoint = 6,
    Runtime = 7,
    Panic = 8,
}

/// Opaque handle to a loaded run.
pub struct SpModel {
    run: Run,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SpStatus {
    match e {
        Error::Io { .. } => SpStatus::Io,
        Error::Config(_) | Error::Json { .. } => SpStatus::Config,
        Error::Checkpoint { .. } => SpStatus::Checkpoint,
        _ => SpStatus::Runtime,
    }
}

/// Run `f`, recording its error message and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (SpStatus, String)>) -> SpStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (SpStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SpStatus, String)> {
    if p.is_null() {
        return Err((SpStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (SpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or "" after a success.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn sp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load the run directory `run_dir` (its final averaged checkpoint).
///
/// # Safety
/// `run_dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_model_open(run_dir: *const c_char, out: *mut *mut SpModel) -> SpStatus {
    guard(|| {
        if out.is_null() {
            return Err((SpStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let dir = read_str(run_dir, "run_dir")?;
        let run = Run::open(Path::new(dir), None).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SpModel { run }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from `sp_model_open` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_model_free(model: *mut SpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of target-side vocabulary entries, reserved ids included; 0 for null.
///
/// # Safety
/// `model` must be null or come from `sp_model_open`.
#[no_mangle]
pub unsafe extern "C" fn sp_model_target_vocab(model: *const SpModel) -> usize {
    model.as_ref().map_or(0, |m| m.run.vocab.target.len())
}

/// Decode a whitespace-tokenised `source`. `beam == 1` is greedy; a
/// `max_len` of 0 uses the run's configured limit. The output tokens are
/// written to `*out_text` as one space-separated string; when
/// `out_mean_entropy` is non-null it receives the mean attention entropy
/// (natural log) over the decoder steps.
///
/// # Safety
/// Pointers must be valid; `source` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sp_decode(
    model: *const SpModel,
    source: *const c_char,
    beam: usize,
    max_len: usize,
    out_text: *mut *mut c_char,
    out_mean_entropy: *mut f64,
) -> SpStatus {
    guard(|| {
        if out_text.is_null() {
            return Err((SpStatus::NullPointer, "out_text is null".into()));
        }
        *out_text = ptr::null_mut();
        let m = model.as_ref().ok_or((SpStatus::NullPointer, "model is null".to_string()))?;
        let src = read_str(source, "source")?;
        let tokens: Vec<String> = src.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err((SpStatus::InvalidArgument, "source has no tokens".into()));
        }
        let mut opts = DecodeOptions { beam, ..m.run.config.decode };
        if max_len > 0 {
            opts.max_len = max_len;
        }
        opts.validate().map_err(|e| (SpStatus::InvalidArgument, e.to_string()))?;
        let ids = m.run.vocab.source.encode(&tokens);
        let hyp = scratchpad::decoding::decode(&m.run.params, &m.run.model, &ids, &opts).map_err(lib_err)?;
        if !out_mean_entropy.is_null() {
            *out_mean_entropy = step_entropies(std::slice::from_ref(&hyp), std::f64::consts::E).map_err(lib_err)?.mean;
        }
        let text = m.run.vocab.target.decode(&hyp.tokens).join(" ");
        *out_text = CString::new(text).map_err(|e| (SpStatus::Runtime, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Shannon entropy (natural log) of a probability vector of length `n`.
///
/// # Safety
/// `p` must point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn sp_attention_entropy(p: *const f64, n: usize, out: *mut f64) -> SpStatus {
    guard(|| {
        if p.is_null() || out.is_null() {
            return Err((SpStatus::NullPointer, "p or out is null".into()));
        }
        let d = std::slice::from_raw_parts(p, n);
        *out = attention_entropy(d).map_err(|e| (SpStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}
