//! C ABI over the `gazeshutter` library.
//!
//! Objects are exposed as opaque handles created by `gs_*_load`/`gs_*_new`
//! functions and released with the matching `gs_*_free`. Every fallible call
//! returns a [`GsStatus`]; on failure [`gs_last_error_message`] describes the
//! error for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gazeshutter::config::{EventParams, SvmParams, WindowParams};
use gazeshutter::dataset::load_recording;
use gazeshutter::features::{extract_features, EYE_FEATURES};
use gazeshutter::scene::{cnn_direct_classify, EMBEDDING_DIM};
use gazeshutter::svm::svm_predict;
use gazeshutter::{Error, FeatureRow, PrivacyClass, Recording, SceneDescriptor, SceneModel, ShutterState, ShutterStatus, SvmModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Data = 5,
    Training = 6,
    Contract = 7,
    Config = 8,
    Utf8 = 9,
    OutOfRange = 10,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsClass {
    NonSensitive = 0,
    Sensitive = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsShutterStatus {
    Open = 0,
    Closed = 1,
}

/// Open-shutter prediction passed to [`gs_shutter_step`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsOpenPrediction {
    /// The shutter is closed; no scene-based prediction exists.
    None = -1,
    NonSensitive = 0,
    Sensitive = 1,
}

pub struct GsRecording(Recording);
pub struct GsFeatureMatrix(Vec<FeatureRow>);
pub struct GsSvmModel(SvmModel);
pub struct GsSceneModel(SceneModel);
pub struct GsShutter(ShutterState);

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

struct Failure(GsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => GsStatus::Io,
            Error::Parse { .. } => GsStatus::Parse,
            Error::Data(_) => GsStatus::Data,
            Error::InvalidArgument(_) => GsStatus::InvalidArgument,
            Error::Training(_) => GsStatus::Training,
            Error::Contract(_) => GsStatus::Contract,
            Error::Config(_) => GsStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: GsStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GsStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(GsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(GsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(GsStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GsStatus::Utf8, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(fail(GsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(GsStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn to_class(c: PrivacyClass) -> GsClass {
    match c {
        PrivacyClass::Sensitive => GsClass::Sensitive,
        PrivacyClass::NonSensitive => GsClass::NonSensitive,
    }
}

fn from_class(c: GsClass) -> PrivacyClass {
    match c {
        GsClass::Sensitive => PrivacyClass::Sensitive,
        GsClass::NonSensitive => PrivacyClass::NonSensitive,
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn gs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of eye-movement features per row.
#[no_mangle]
pub extern "C" fn gs_eye_feature_count() -> usize {
    EYE_FEATURES
}

/// Loads a recording from its manifest.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_recording_load(
    manifest_path: *const c_char,
    validity_threshold: f64,
    out: *mut *mut GsRecording,
) -> GsStatus {
    guard(|| {
        let path = path_arg(manifest_path)?;
        let rec = load_recording(&path, validity_threshold)?;
        write_out(out, Box::into_raw(Box::new(GsRecording(rec))))
    })
}

/// # Safety
/// `rec` must be null or a handle from [`gs_recording_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_recording_free(rec: *mut GsRecording) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// # Safety
/// `rec` must be a live recording handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_recording_sample_count(rec: *const GsRecording, out: *mut usize) -> GsStatus {
    guard(|| write_out(out, handle(rec, "recording")?.0.samples.len()))
}

/// Extracts the per-second feature stream with default parameters.
///
/// # Safety
/// `rec` must be a live recording handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_extract_features(rec: *const GsRecording, out: *mut *mut GsFeatureMatrix) -> GsStatus {
    guard(|| {
        let rec = handle(rec, "recording")?;
        let (_, rows) = extract_features(&rec.0, &EventParams::default(), &WindowParams::default());
        write_out(out, Box::into_raw(Box::new(GsFeatureMatrix(rows))))
    })
}

/// # Safety
/// `m` must be null or a handle from [`gs_extract_features`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_features_free(m: *mut GsFeatureMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of rows (seconds); 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live feature-matrix handle.
#[no_mangle]
pub unsafe extern "C" fn gs_features_rows(m: *const GsFeatureMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.len())
}

/// Copies row `row` into `buf`, which must hold at least
/// [`gs_eye_feature_count`] values, and writes the row's end time to `t_end`.
///
/// # Safety
/// `m` must be a live handle; `buf` must point to `buf_len` writable doubles;
/// `t_end` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gs_features_row(
    m: *const GsFeatureMatrix,
    row: usize,
    buf: *mut f64,
    buf_len: usize,
    t_end: *mut f64,
) -> GsStatus {
    guard(|| {
        let m = handle(m, "feature matrix")?;
        let r = m
            .0
            .get(row)
            .ok_or_else(|| fail(GsStatus::OutOfRange, format!("row {row} of {}", m.0.len())))?;
        if buf.is_null() {
            return Err(fail(GsStatus::NullPointer, "buffer is null"));
        }
        if buf_len < EYE_FEATURES {
            return Err(fail(GsStatus::InvalidArgument, format!("buffer holds {buf_len}, need {EYE_FEATURES}")));
        }
        std::slice::from_raw_parts_mut(buf, EYE_FEATURES).copy_from_slice(r.features.values());
        if !t_end.is_null() {
            t_end.write(r.t_end);
        }
        Ok(())
    })
}

/// Trains an RBF SVM on `rows` (row-major, `n` x `dim`) with standardization.
/// `gamma <= 0` selects `1 / dim`.
///
/// # Safety
/// `x` must point to `n * dim` doubles, `labels` to `n` classes; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_svm_train(
    x: *const f64,
    n: usize,
    dim: usize,
    labels: *const GsClass,
    c: f64,
    gamma: f64,
    out: *mut *mut GsSvmModel,
) -> GsStatus {
    guard(|| {
        if dim == 0 {
            return Err(fail(GsStatus::InvalidArgument, "dimension is 0"));
        }
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| fail(GsStatus::InvalidArgument, "n * dim overflows"))?;
        let values = slice_arg(x, len, "x")?;
        if labels.is_null() {
            return Err(fail(GsStatus::NullPointer, "labels is null"));
        }
        let y: Vec<PrivacyClass> = std::slice::from_raw_parts(labels, n).iter().map(|c| from_class(*c)).collect();
        let rows: Vec<Vec<f64>> = values.chunks(dim).map(<[f64]>::to_vec).collect();
        let params = SvmParams {
            c,
            gamma: (gamma > 0.0).then_some(gamma),
            ..SvmParams::default()
        };
        let model = SvmModel::train(&rows, &y, &params)?;
        write_out(out, Box::into_raw(Box::new(GsSvmModel(model))))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_svm_load(path: *const c_char, out: *mut *mut GsSvmModel) -> GsStatus {
    guard(|| {
        let model = SvmModel::load(&path_arg(path)?)?;
        write_out(out, Box::into_raw(Box::new(GsSvmModel(model))))
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gs_svm_save(model: *const GsSvmModel, path: *const c_char) -> GsStatus {
    guard(|| Ok(handle(model, "model")?.0.save(&path_arg(path)?)?))
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_svm_dim(model: *const GsSvmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Classifies one raw feature vector. `decision` receives the signed
/// decision value; `f >= 0` is sensitive.
///
/// # Safety
/// `x` must point to `len` doubles; `class` and `decision` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gs_svm_predict(
    model: *const GsSvmModel,
    x: *const f64,
    len: usize,
    class: *mut GsClass,
    decision: *mut f64,
) -> GsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let (c, f) = svm_predict(&model.0, slice_arg(x, len, "x")?)?;
        if !class.is_null() {
            class.write(to_class(c));
        }
        if !decision.is_null() {
            decision.write(f);
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_svm_free(model: *mut GsSvmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_scene_load(path: *const c_char, out: *mut *mut GsSceneModel) -> GsStatus {
    guard(|| {
        let model = SceneModel::load(&path_arg(path)?)?;
        write_out(out, Box::into_raw(Box::new(GsSceneModel(model))))
    })
}

/// Direct scene classification. `score` receives the sensitive probability.
///
/// # Safety
/// `descriptor` must point to `len` doubles; `class` and `score` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn gs_scene_predict(
    model: *const GsSceneModel,
    descriptor: *const f64,
    len: usize,
    class: *mut GsClass,
    score: *mut f64,
) -> GsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let d = SceneDescriptor::new(slice_arg(descriptor, len, "descriptor")?.to_vec())?;
        let (c, s) = cnn_direct_classify(&model.0, &d);
        if !class.is_null() {
            class.write(to_class(c));
        }
        if !score.is_null() {
            score.write(s);
        }
        Ok(())
    })
}

/// Writes the 68-value embedding of `descriptor` into `buf`.
///
/// # Safety
/// `descriptor` must point to `len` doubles; `buf` to `buf_len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_scene_embed(
    model: *const GsSceneModel,
    descriptor: *const f64,
    len: usize,
    buf: *mut f64,
    buf_len: usize,
) -> GsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let d = SceneDescriptor::new(slice_arg(descriptor, len, "descriptor")?.to_vec())?;
        if buf.is_null() {
            return Err(fail(GsStatus::NullPointer, "buffer is null"));
        }
        if buf_len < EMBEDDING_DIM {
            return Err(fail(GsStatus::InvalidArgument, format!("buffer holds {buf_len}, need {EMBEDDING_DIM}")));
        }
        std::slice::from_raw_parts_mut(buf, EMBEDDING_DIM).copy_from_slice(&model.0.embed(&d).0);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_scene_free(model: *mut GsSceneModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// A shutter that starts open and stays closed at least `min_close` seconds.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_shutter_new(min_close: u32, out: *mut *mut GsShutter) -> GsStatus {
    guard(|| {
        let s = ShutterState::new(min_close)?;
        write_out(out, Box::into_raw(Box::new(GsShutter(s))))
    })
}

/// # Safety
/// `shutter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_shutter_status(shutter: *const GsShutter) -> GsShutterStatus {
    match shutter.as_ref().map(|s| s.0.status()) {
        Some(ShutterStatus::Closed) => GsShutterStatus::Closed,
        _ => GsShutterStatus::Open,
    }
}

/// Whether [`gs_shutter_step`] at second `t` will use the eye prediction.
///
/// # Safety
/// `shutter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gs_shutter_wants_eye_prediction(shutter: *const GsShutter, t: i64) -> bool {
    shutter.as_ref().is_some_and(|s| s.0.wants_eye_prediction(t))
}

/// Advances one second. `open_prediction` must be `None` exactly when the
/// shutter is closed; `eye_prediction` is read only when the minimum closing
/// interval has elapsed. `predicted` receives the class for second `t`.
///
/// # Safety
/// `shutter` must be a live handle; `predicted` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gs_shutter_step(
    shutter: *mut GsShutter,
    t: i64,
    open_prediction: GsOpenPrediction,
    eye_prediction: GsClass,
    predicted: *mut GsClass,
) -> GsStatus {
    guard(|| {
        let s = handle_mut(shutter, "shutter")?;
        let open = match open_prediction {
            GsOpenPrediction::None => None,
            GsOpenPrediction::NonSensitive => Some(PrivacyClass::NonSensitive),
            GsOpenPrediction::Sensitive => Some(PrivacyClass::Sensitive),
        };
        let (p, _) = s.0.step(t, open, || from_class(eye_prediction))?;
        if !predicted.is_null() {
            predicted.write(to_class(p));
        }
        Ok(())
    })
}

/// # Safety
/// `shutter` must be null or a handle from [`gs_shutter_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_shutter_free(shutter: *mut GsShutter) {
    if !shutter.is_null() {
        drop(Box::from_raw(shutter));
    }
}
