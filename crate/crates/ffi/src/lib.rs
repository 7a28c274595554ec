//! C ABI over the captor engine.
//!
//! Every fallible call returns a [`CaptorStatus`]; on failure the message is
//! kept per thread and read back with [`captor_last_error`]. Objects cross the
//! boundary as opaque handles and must be released with their `_free`
//! function. Strings returned to the caller are released with
//! [`captor_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use captor::inference::caption;
use captor::metrics::score_files;
use captor::{load_checkpoint, CaptionModel, DecodeConfig, Error, FeatureGrid, Tensor};

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptorStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Checkpoint = 5,
    Numeric = 6,
    Panic = 7,
}

/// A trained caption model loaded from a checkpoint.
pub struct CaptorModel(CaptionModel);

/// One image's feature grid.
pub struct CaptorFeatureGrid(FeatureGrid);

/// Corpus-level caption scores.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CaptorScores {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub meteor: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    // interior NULs would truncate the message anyway
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> CaptorStatus {
    match e {
        Error::Io { .. } => CaptorStatus::Io,
        Error::Feature { .. } | Error::Format(_) => CaptorStatus::Format,
        Error::CheckpointVersion { .. } | Error::CorruptCheckpoint(_) => CaptorStatus::Checkpoint,
        Error::Numeric(_) => CaptorStatus::Numeric,
        Error::InvalidArgument(_) | Error::Tensor(_) => CaptorStatus::InvalidArgument,
    }
}

struct Fail(CaptorStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CaptorStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(Fail(CaptorStatus::Panic, format!("internal error: {msg}")))
    });
    match res {
        Ok(()) => CaptorStatus::Ok,
        Err(Fail(code, msg)) => {
            set_error(msg);
            code
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CaptorStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    Ok(PathBuf::from(str_arg(p, what)?))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CaptorStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn captor_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next captor call on the same thread.
#[no_mangle]
pub extern "C" fn captor_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn captor_model_load(path: *const c_char, out: *mut *mut CaptorModel) -> CaptorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = load_checkpoint(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CaptorModel(model)));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`captor_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn captor_model_free(model: *mut CaptorModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size, reserved tokens included.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn captor_model_vocab_size(model: *const CaptorModel, out: *mut usize) -> CaptorStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_arg(out, "out")? = m.0.vocab.len();
        Ok(())
    })
}

/// Reads a SAF1 feature file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn captor_grid_load(path: *const c_char, out: *mut *mut CaptorFeatureGrid) -> CaptorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let grid = captor::encoder::load_feature_grid(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CaptorFeatureGrid(grid)));
        Ok(())
    })
}

/// Builds a grid from `locations * channels` row-major floats.
///
/// # Safety
/// `image_id` must be NUL-terminated, `data` must point at
/// `locations * channels` floats and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn captor_grid_from_data(
    image_id: *const c_char,
    data: *const f32,
    locations: usize,
    channels: usize,
    out: *mut *mut CaptorFeatureGrid,
) -> CaptorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let id = str_arg(image_id, "image_id")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let n = locations
            .checked_mul(channels)
            .filter(|&n| n > 0)
            .ok_or_else(|| Fail(CaptorStatus::InvalidArgument, format!("bad grid shape {locations}x{channels}")))?;
        let values = std::slice::from_raw_parts(data, n).iter().map(|&v| f64::from(v)).collect();
        let tensor = Tensor::matrix(locations, channels, values).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(CaptorFeatureGrid(FeatureGrid::new(id, tensor)?)));
        Ok(())
    })
}

/// Releases a grid. NULL is ignored.
///
/// # Safety
/// `grid` must come from a `captor_grid_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn captor_grid_free(grid: *mut CaptorFeatureGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Captions one grid. `beam_width` 1 decodes greedily.
///
/// On success `*out` holds a caption to release with [`captor_string_free`].
/// `log_prob` may be NULL.
///
/// # Safety
/// `model` and `grid` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn captor_caption(
    model: *const CaptorModel,
    grid: *const CaptorFeatureGrid,
    beam_width: usize,
    max_len: usize,
    out: *mut *mut c_char,
    log_prob: *mut f64,
) -> CaptorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let g = grid.as_ref().ok_or_else(|| null("grid"))?;
        let cfg = DecodeConfig { beam_width, max_len, alpha: 0.0 };
        cfg.validate()?;
        let cap = caption(&m.0, &g.0, &cfg)?;
        if let Some(lp) = log_prob.as_mut() {
            *lp = cap.log_prob;
        }
        // tokens never contain NUL, they come from normalized text
        *out = CString::new(cap.text()).expect("caption with NUL").into_raw();
        Ok(())
    })
}

/// Releases a string returned by [`captor_caption`]. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn captor_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Scores a hypothesis file against a references file, both
/// `image_id<TAB>caption` per line.
///
/// # Safety
/// Both paths must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn captor_score_files(
    hyp_path: *const c_char,
    refs_path: *const c_char,
    out: *mut CaptorScores,
) -> CaptorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = score_files(path_arg(hyp_path, "hyp_path")?, path_arg(refs_path, "refs_path")?)?;
        *out = CaptorScores {
            bleu1: r.bleu1,
            bleu2: r.bleu2,
            bleu3: r.bleu3,
            bleu4: r.bleu4,
            rouge_l: r.rouge_l,
            cider: r.cider,
            meteor: r.meteor,
        };
        Ok(())
    })
}
