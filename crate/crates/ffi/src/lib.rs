//! C interface to the isomatch matcher.
//!
//! Every fallible function returns an [`IsomatchStatus`]; on failure the
//! message is available from [`isomatch_last_error`] on the same thread.
//! Handles are opaque and must be released with the matching `_free`
//! function. Passing NULL to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use isomatch::error::Error;
use isomatch::features::with_shape_context;
use isomatch::io::{load_model, load_scene, load_template, LegacyDims};
use isomatch::learn::{hamming, infer_higher_order, predict_linear, MatchOptions};
use isomatch::model::{FeatureConfig, WeightModel};
use isomatch::{Assignment, Point2, Scene, TemplateShape};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsomatchStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidModel = 5,
    Internal = 6,
}

/// A point set with image size and optional descriptors.
pub struct IsomatchScene {
    inner: Arc<Scene>,
}

/// An ordered subset of a scene's points.
pub struct IsomatchTemplate {
    inner: TemplateShape,
}

/// Learned weights and feature configuration.
pub struct IsomatchModel {
    inner: WeightModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> IsomatchStatus {
    match e {
        Error::File { .. } | Error::Io(_) => IsomatchStatus::Io,
        Error::Parse { .. } | Error::InconsistentDescriptorDim { .. } | Error::Json(_) | Error::Csv(_) => {
            IsomatchStatus::Parse
        }
        Error::InvalidModel(_) | Error::VersionMismatch { .. } => IsomatchStatus::InvalidModel,
        Error::Internal(_) => IsomatchStatus::Internal,
        _ => IsomatchStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IsomatchStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IsomatchStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is NULL"));
            IsomatchStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            IsomatchStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            IsomatchStatus::Internal
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn legacy(width: f64, height: f64) -> Option<LegacyDims> {
    (width > 0.0 && height > 0.0).then_some(LegacyDims { width, height })
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn isomatch_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn isomatch_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reads a scene file. `width` and `height` give the image size for legacy
/// landmark files without a header; pass 0 otherwise.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn isomatch_scene_load(
    path: *const c_char,
    width: f64,
    height: f64,
    out: *mut *mut IsomatchScene,
) -> IsomatchStatus {
    guard(|| {
        let scene = load_scene(path_arg(path)?, legacy(width, height))?;
        put(out, IsomatchScene { inner: Arc::new(scene) })
    })
}

/// Builds a scene from `n` interleaved `x, y` coordinates.
///
/// # Safety
/// `xy` must point to `2 * n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isomatch_scene_from_points(
    xy: *const f64,
    n: usize,
    width: f64,
    height: f64,
    out: *mut *mut IsomatchScene,
) -> IsomatchStatus {
    guard(|| {
        if xy.is_null() {
            return Err(Fail::Null("xy"));
        }
        let coords = std::slice::from_raw_parts(xy, 2 * n);
        let pts = coords.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect();
        let scene = Scene::new("ffi", pts, None, width, height)?;
        put(out, IsomatchScene { inner: Arc::new(scene) })
    })
}

/// Number of points, or 0 for NULL.
///
/// # Safety
/// `scene` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isomatch_scene_len(scene: *const IsomatchScene) -> usize {
    scene.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `scene` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isomatch_scene_free(scene: *mut IsomatchScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Reads a template file.
///
/// # Safety
/// As for [`isomatch_scene_load`].
#[no_mangle]
pub unsafe extern "C" fn isomatch_template_load(
    path: *const c_char,
    width: f64,
    height: f64,
    out: *mut *mut IsomatchTemplate,
) -> IsomatchStatus {
    guard(|| {
        let t = load_template(path_arg(path)?, legacy(width, height))?;
        put(out, IsomatchTemplate { inner: t })
    })
}

/// Template over `scene` visiting the `n` scene indices in `order`. A NULL
/// `order` selects every point in scene order.
///
/// # Safety
/// `scene` must be a live handle, `order` NULL or `n` indices, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isomatch_template_from_scene(
    scene: *const IsomatchScene,
    order: *const usize,
    n: usize,
    out: *mut *mut IsomatchTemplate,
) -> IsomatchStatus {
    guard(|| {
        let s = non_null(scene, "scene")?;
        let t = if order.is_null() {
            TemplateShape::whole_scene(s.inner.clone())?
        } else {
            TemplateShape::new(s.inner.clone(), std::slice::from_raw_parts(order, n).to_vec())?
        };
        put(out, IsomatchTemplate { inner: t })
    })
}

/// Number of template points, or 0 for NULL.
///
/// # Safety
/// `template` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isomatch_template_len(template: *const IsomatchTemplate) -> usize {
    template.as_ref().map_or(0, |t| t.inner.len())
}

/// # Safety
/// `template` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isomatch_template_free(template: *mut IsomatchTemplate) {
    if !template.is_null() {
        drop(Box::from_raw(template));
    }
}

/// Reads a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn isomatch_model_load(path: *const c_char, out: *mut *mut IsomatchModel) -> IsomatchStatus {
    guard(|| {
        let m = load_model(path_arg(path)?)?;
        put(out, IsomatchModel { inner: m })
    })
}

/// The unlearned model: every feature group, Shape Context descriptors,
/// unit weights and `p` candidates per template point.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isomatch_model_uniform(p: usize, out: *mut *mut IsomatchModel) -> IsomatchStatus {
    guard(|| {
        let fc = FeatureConfig::default();
        let dim = fc.shape_context.map_or(0, |sc| sc.dim());
        let m = WeightModel::uniform(dim, p, fc);
        m.validate()?;
        put(out, IsomatchModel { inner: m })
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isomatch_model_free(model: *mut IsomatchModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Matches `template` into `target`. Writes one target index per template
/// point into `assignment`, which must hold `capacity` entries with
/// `capacity >= isomatch_template_len(template)`. With `linear` set only
/// the unary weights and linear assignment are used.
///
/// # Safety
/// Handles must be live and `assignment` must point to `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn isomatch_match(
    template: *const IsomatchTemplate,
    target: *const IsomatchScene,
    model: *const IsomatchModel,
    linear: bool,
    assignment: *mut usize,
    capacity: usize,
) -> IsomatchStatus {
    guard(|| {
        let t = &non_null(template, "template")?.inner;
        let u = &non_null(target, "target")?.inner;
        let m = &non_null(model, "model")?.inner;
        if assignment.is_null() {
            return Err(Fail::Null("assignment"));
        }
        if capacity < t.len() {
            return Err(Fail::Arg(format!(
                "assignment buffer holds {capacity} entries, template has {}",
                t.len()
            )));
        }
        let sc = m.feature_config.shape_context;
        let describe = |s: &Arc<Scene>| -> Result<Arc<Scene>, Error> {
            match &sc {
                Some(cfg) if !s.has_descriptors() => Ok(Arc::new(with_shape_context(s, cfg)?)),
                _ => Ok(s.clone()),
            }
        };
        let t = t.with_scene(describe(t.scene_arc())?)?;
        let u = describe(u)?;
        let y = if linear {
            predict_linear(&t, &u, &m.theta0)?
        } else {
            infer_higher_order(&t, &u, m, None, &MatchOptions::default())?.assignment
        };
        let out = std::slice::from_raw_parts_mut(assignment, capacity);
        out[..y.len()].copy_from_slice(y.as_slice());
        Ok(())
    })
}

/// Fraction of the `n` entries where `y` and `truth` differ.
///
/// # Safety
/// `y` and `truth` must point to `n` entries and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn isomatch_hamming_loss(
    y: *const usize,
    truth: *const usize,
    n: usize,
    out: *mut f64,
) -> IsomatchStatus {
    guard(|| {
        if y.is_null() || truth.is_null() {
            return Err(Fail::Null("assignment"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        if n == 0 {
            return Err(Fail::Arg("empty assignment".into()));
        }
        let y = Assignment::from_vec_unchecked(std::slice::from_raw_parts(y, n).to_vec());
        let g = Assignment::from_vec_unchecked(std::slice::from_raw_parts(truth, n).to_vec());
        *out = hamming(&y, &g)?;
        Ok(())
    })
}
