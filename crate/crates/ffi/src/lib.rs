//! C ABI over the `dann-amc` library.
//!
//! Every fallible entry point returns a [`DannStatus`]; on failure the
//! message is available from [`dann_last_error`] on the same thread. Models
//! are opaque handles created by the `dann_model_load*` functions and
//! released with [`dann_model_free`]. Panics never cross the boundary: they
//! are caught and reported as [`DannStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::OnceLock;

use num_complex::Complex64;

use dann_amc::data::StandardScaler;
use dann_amc::experiment::run::MANIFEST_FILE;
use dann_amc::experiment::{run_experiment, CellStatus, ExperimentConfig, Manifest, RunOptions};
use dann_amc::features::{extract_frame, FeatureSpec};
use dann_amc::models::AnyModel;
use dann_amc::nn::{Checkpoint, Matrix};
use dann_amc::train::{improvement, lambda_at};
use dann_amc::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DannStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Checkpoint = 6,
    Runtime = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A loaded classifier, optionally with the standardization it was trained
/// behind.
pub struct DannModel {
    model: AnyModel,
    scaler: Option<StandardScaler>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> DannStatus {
    match e {
        Error::InvalidArgument(_) | Error::Shape { .. } => DannStatus::InvalidArgument,
        Error::Parse { .. } | Error::UnknownLabel { .. } | Error::Csv(_) | Error::Json(_) => DannStatus::Parse,
        Error::Io(_) | Error::File { .. } => DannStatus::Io,
        Error::Config(_) => DannStatus::Config,
        Error::Checkpoint(_) => DannStatus::Checkpoint,
        Error::State(_) => DannStatus::Runtime,
    }
}

struct Fail(DannStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DannStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> DannStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DannStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DannStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(DannStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dann_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dann_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Adversarial weight at training progress `p` for ramp steepness `gamma`.
#[no_mangle]
pub extern "C" fn dann_lambda_at(p: f64, gamma: f64) -> f64 {
    lambda_at(p, gamma)
}

/// DANN minus baseline accuracy, absolute and relative to the baseline.
/// `percent` receives NaN when the baseline is 0.
///
/// # Safety
/// `absolute` and `percent` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dann_improvement(
    baseline: f64,
    dann: f64,
    absolute: *mut f64,
    percent: *mut f64,
) -> DannStatus {
    guard(|| {
        if absolute.is_null() || percent.is_null() {
            return Err(null("output pointer"));
        }
        let imp = improvement(baseline, dann);
        unsafe {
            *absolute = imp.absolute;
            *percent = imp.percent.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

fn feature_names() -> &'static [CString] {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    NAMES.get_or_init(|| {
        FeatureSpec::all()
            .names()
            .into_iter()
            .map(|n| CString::new(n).expect("feature names have no NUL"))
            .collect()
    })
}

/// Width of the feature vector produced by [`dann_extract_features`].
#[no_mangle]
pub extern "C" fn dann_feature_count() -> usize {
    FeatureSpec::all().dim()
}

/// Name of feature `index`, or NULL when out of range. Static lifetime.
#[no_mangle]
pub extern "C" fn dann_feature_name(index: usize) -> *const c_char {
    feature_names().get(index).map_or(ptr::null(), |s| s.as_ptr())
}

/// Extracts the full feature vector of one frame given as interleaved
/// `re, im` pairs (`2 * n_samples` doubles).
///
/// # Safety
/// `iq` must hold `2 * n_samples` doubles and `out` must be valid for
/// `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn dann_extract_features(
    iq: *const f64,
    n_samples: usize,
    out: *mut f64,
    out_len: usize,
) -> DannStatus {
    guard(|| {
        if iq.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let spec = FeatureSpec::all();
        if out_len < spec.dim() {
            return Err(Fail(
                DannStatus::BufferTooSmall,
                format!("output holds {out_len} values, {} needed", spec.dim()),
            ));
        }
        let raw = unsafe { std::slice::from_raw_parts(iq, 2 * n_samples) };
        let frame: Vec<Complex64> = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let values = extract_frame(&frame, &spec)?;
        unsafe { std::slice::from_raw_parts_mut(out, values.len()) }.copy_from_slice(&values);
        Ok(())
    })
}

fn load_model(ckpt: &Path, scaler: Option<StandardScaler>) -> Result<Box<DannModel>, Fail> {
    let model = AnyModel::from_checkpoint(Checkpoint::load(ckpt)?)?;
    Ok(Box::new(DannModel { model, scaler }))
}

/// Loads a checkpoint. Inputs to [`dann_model_predict`] must already be
/// standardized the way the model was trained.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dann_model_load(path: *const c_char, out: *mut *mut DannModel) -> DannStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { path_arg(path, "path") }?;
        unsafe { *out = Box::into_raw(load_model(&path, None)?) };
        Ok(())
    })
}

/// Loads the baseline (`which = 0`) or DANN (`which = 1`) model of a
/// completed run cell together with its scaler, so raw feature rows can be
/// passed to [`dann_model_predict`].
///
/// # Safety
/// `cell_dir` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dann_model_load_run(
    cell_dir: *const c_char,
    which: c_int,
    out: *mut *mut DannModel,
) -> DannStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = unsafe { path_arg(cell_dir, "cell_dir") }?;
        let file = match which {
            0 => "baseline.ckpt.json",
            1 => "dann.ckpt.json",
            _ => return Err(Fail(DannStatus::InvalidArgument, format!("model selector {which} (0 or 1)"))),
        };
        let manifest = Manifest::load(dir.join(MANIFEST_FILE))?;
        unsafe { *out = Box::into_raw(load_model(&dir.join(file), Some(manifest.scaler))?) };
        Ok(())
    })
}

/// Input width expected by the model, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dann_model_input_dim(model: *const DannModel) -> usize {
    match unsafe { model.as_ref() } {
        Some(m) => match &m.model {
            AnyModel::Baseline(b) => b.trunk.input_dim(),
            AnyModel::Dann(d) => d.extractor.input_dim(),
        },
        None => 0,
    }
}

/// Predicts class indices (0 = BPSK … 4 = 256-QAM) for `rows` row-major
/// feature rows of width `cols`.
///
/// # Safety
/// `model` must be a live handle, `x` must hold `rows * cols` doubles and
/// `labels` must be valid for `rows` writes.
#[no_mangle]
pub unsafe extern "C" fn dann_model_predict(
    model: *mut DannModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    labels: *mut usize,
) -> DannStatus {
    guard(|| {
        let m = unsafe { model.as_mut() }.ok_or_else(|| null("model"))?;
        if x.is_null() || labels.is_null() {
            return Err(null("buffer"));
        }
        let data = unsafe { std::slice::from_raw_parts(x, rows * cols) }.to_vec();
        let mut input = Matrix::from_vec(rows, cols, data)?;
        if let Some(s) = &m.scaler {
            input = s.transform_matrix(&input)?;
        }
        let predicted = m.model.classifier().predict(&input)?;
        unsafe { std::slice::from_raw_parts_mut(labels, rows) }.copy_from_slice(&predicted);
        Ok(())
    })
}

/// Releases a model handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dann_model_free(model: *mut DannModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Runs every cell of the experiment described by a TOML file. `out_dir`
/// overrides the configured output root when non-NULL. Cell counts are
/// written to `completed` and `failed` when those are non-NULL; failed cells
/// return [`DannStatus::Runtime`].
///
/// # Safety
/// String arguments must be NUL-terminated; count pointers must be NULL or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dann_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    deterministic: c_int,
    completed: *mut usize,
    failed: *mut usize,
) -> DannStatus {
    guard(|| {
        let path = unsafe { path_arg(config_path, "config_path") }?;
        let mut cfg = ExperimentConfig::load(&path)?;
        if !out_dir.is_null() {
            cfg.experiment.out_dir = unsafe { path_arg(out_dir, "out_dir") }?;
        }
        cfg.validate()?;
        let rows = run_experiment(
            &cfg,
            RunOptions {
                deterministic: deterministic != 0,
            },
        )?;
        let bad = rows.iter().filter(|r| r.status == CellStatus::Failed).count();
        unsafe {
            if let Some(c) = completed.as_mut() {
                *c = rows.len() - bad;
            }
            if let Some(f) = failed.as_mut() {
                *f = bad;
            }
        }
        if bad > 0 {
            return Err(Fail(DannStatus::Runtime, format!("{bad} of {} cells failed", rows.len())));
        }
        Ok(())
    })
}
