//! C interface to `neuram`.
//!
//! Every fallible function returns a [`NeuramStatus`]; on failure a message is
//! kept per thread and can be read with [`neuram_last_error`]. Artifacts are
//! opaque handles released with [`neuram_artifact_free`]. Panics never cross
//! the boundary; they surface as `NEURAM_STATUS_PANIC`.

use neuram::models;
use neuram::neuram::{train_neuram, Architecture, NeurAMArtifact, SearchConfig, TrainConfig};
use neuram::nn::FitConfig;
use neuram::sensitivity::{global_indices, ArcLength};
use neuram::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuramStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Input outside the model domain or latent interval.
    OutOfDomain = 3,
    UnknownModel = 4,
    Io = 5,
    Parse = 6,
    /// Non-finite values, constant models or degenerate gradients.
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Trained reduction: encoder, decoder and latent surrogate.
pub struct NeuramArtifact {
    inner: NeurAMArtifact,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NeuramStatus {
    match e {
        Error::OutsideDomain { .. } | Error::OutsideLatentInterval { .. } => NeuramStatus::OutOfDomain,
        Error::UnknownModel(_) => NeuramStatus::UnknownModel,
        Error::Io(_) => NeuramStatus::Io,
        Error::Json(_) | Error::Config { .. } => NeuramStatus::Parse,
        Error::NonFiniteTraining { .. }
        | Error::NonFiniteSample { .. }
        | Error::ConstantModel
        | Error::ZeroVariance(_)
        | Error::DegenerateGradient { .. }
        | Error::DegenerateGrid { .. } => NeuramStatus::Numerical,
        Error::Evaluation { source, .. } | Error::Seed { source, .. } => status_of(source),
        _ => NeuramStatus::InvalidArgument,
    }
}

struct Failure(NeuramStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: NeuramStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, records any error message and converts panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NeuramStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NeuramStatus::Ok
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
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            NeuramStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(NeuramStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(NeuramStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(fail(NeuramStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(NeuramStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a>(p: *const NeuramArtifact) -> Result<&'a NeurAMArtifact, Failure> {
    p.as_ref().map(|a| &a.inner).ok_or_else(|| fail(NeuramStatus::NullPointer, "artifact is null"))
}

unsafe fn out_buffer<'a>(p: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(fail(NeuramStatus::NullPointer, "output buffer is null"));
    }
    if len < need {
        return Err(fail(NeuramStatus::BufferTooSmall, format!("output buffer holds {len}, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

fn boxed(a: NeurAMArtifact) -> *mut NeuramArtifact {
    Box::into_raw(Box::new(NeuramArtifact { inner: a }))
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn neuram_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn neuram_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an artifact from a JSON file.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_load(path: *const c_char, out: *mut *mut NeuramArtifact) -> NeuramStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let a = NeurAMArtifact::load(str_arg(path, "path")?)?;
        *out = boxed(a);
        Ok(())
    })
}

/// Parses an artifact from a JSON string.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_from_json(
    json: *const c_char,
    out: *mut *mut NeuramArtifact,
) -> NeuramStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = boxed(NeurAMArtifact::from_json(str_arg(json, "json")?)?);
        Ok(())
    })
}

/// Trains a reduction of a registered benchmark on `n` samples with a fixed
/// architecture of `hidden_layers` x `width` tanh layers per network.
///
/// # Safety
/// `model` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_train(
    model: *const c_char,
    n: usize,
    seed: u64,
    epochs: usize,
    hidden_layers: usize,
    width: usize,
    out: *mut *mut NeuramArtifact,
) -> NeuramStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if epochs == 0 || hidden_layers == 0 || width == 0 {
            return Err(fail(NeuramStatus::InvalidArgument, "epochs, hidden_layers and width must be positive"));
        }
        let m = models::model(str_arg(model, "model")?)?;
        let cfg = TrainConfig {
            seed,
            fit: FitConfig { epochs, ..FitConfig::default() },
            architecture: Architecture::uniform(hidden_layers, width),
            search: SearchConfig::disabled(),
        };
        *out = boxed(train_neuram(&m, n, &cfg)?);
        Ok(())
    })
}

/// Writes an artifact to a JSON file.
///
/// # Safety
/// `artifact` must come from this library; `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_save(artifact: *const NeuramArtifact, path: *const c_char) -> NeuramStatus {
    guard(|| {
        handle(artifact)?.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Releases an artifact. Null is ignored.
///
/// # Safety
/// `artifact` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_free(artifact: *mut NeuramArtifact) {
    if !artifact.is_null() {
        drop(Box::from_raw(artifact));
    }
}

/// Input dimension, or 0 for a null handle.
///
/// # Safety
/// `artifact` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_dim(artifact: *const NeuramArtifact) -> usize {
    artifact.as_ref().map_or(0, |a| a.inner.dim())
}

/// Latent interval `[lo, hi]` spanned by the training encodings.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_latent_interval(
    artifact: *const NeuramArtifact,
    lo: *mut f64,
    hi: *mut f64,
) -> NeuramStatus {
    guard(|| {
        let iv = handle(artifact)?.latent_interval;
        *out_arg(lo, "lo")? = iv.lo;
        *out_arg(hi, "hi")? = iv.hi;
        Ok(())
    })
}

/// Latent coordinate of the raw input `x[0..len]`.
///
/// # Safety
/// `x` must point to `len` doubles; `t` must be valid.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_encode(
    artifact: *const NeuramArtifact,
    x: *const f64,
    len: usize,
    t: *mut f64,
) -> NeuramStatus {
    guard(|| {
        let a = handle(artifact)?;
        let x = slice_arg(x, len, "x")?;
        *out_arg(t, "t")? = a.encode_raw(x)?;
        Ok(())
    })
}

/// Raw manifold point at latent coordinate `t`, written to `out[0..dim]`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_decode(
    artifact: *const NeuramArtifact,
    t: f64,
    out: *mut f64,
    len: usize,
) -> NeuramStatus {
    guard(|| {
        let a = handle(artifact)?;
        if !t.is_finite() {
            return Err(fail(NeuramStatus::InvalidArgument, "t is not finite"));
        }
        out_buffer(out, len, a.dim())?.copy_from_slice(&a.decode_raw(t));
        Ok(())
    })
}

/// Surrogate prediction `S(E(x))` in model units.
///
/// # Safety
/// `x` must point to `len` doubles; `y` must be valid.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_surrogate(
    artifact: *const NeuramArtifact,
    x: *const f64,
    len: usize,
    y: *mut f64,
) -> NeuramStatus {
    guard(|| {
        let a = handle(artifact)?;
        let x = slice_arg(x, len, "x")?;
        *out_arg(y, "y")? = a.surrogate_eval(x)?;
        Ok(())
    })
}

/// Global manifold sensitivity indices on a uniform latent grid, written to
/// `out[0..dim]`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn neuram_artifact_global_indices(
    artifact: *const NeuramArtifact,
    grid_size: usize,
    out: *mut f64,
    len: usize,
) -> NeuramStatus {
    guard(|| {
        let a = handle(artifact)?;
        let buf = out_buffer(out, len, a.dim())?;
        let r = global_indices(a, grid_size, ArcLength::Chord)?;
        buf.copy_from_slice(&r.global);
        Ok(())
    })
}

/// Input dimension of a registered benchmark model.
///
/// # Safety
/// `name` must be a valid C string and `dim` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn neuram_model_dim(name: *const c_char, dim: *mut usize) -> NeuramStatus {
    guard(|| {
        let m = models::model(str_arg(name, "name")?)?;
        *out_arg(dim, "dim")? = m.dim();
        Ok(())
    })
}

/// Evaluates a registered benchmark model at `x[0..len]`.
///
/// # Safety
/// `name` must be a valid C string, `x` must point to `len` doubles and `y`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn neuram_model_eval(
    name: *const c_char,
    x: *const f64,
    len: usize,
    y: *mut f64,
) -> NeuramStatus {
    guard(|| {
        let m = models::model(str_arg(name, "name")?)?;
        let x = slice_arg(x, len, "x")?;
        if len != m.dim() {
            return Err(fail(NeuramStatus::InvalidArgument, format!("{} takes {} inputs, got {len}", m.name, m.dim())));
        }
        *out_arg(y, "y")? = m.eval(x)?;
        Ok(())
    })
}
