//! C ABI over the synesthesia core.
//!
//! Every fallible call returns a [`SynStatus`]; on failure the message is
//! available from [`syn_last_error_message`] on the same thread. Objects
//! cross the boundary as opaque handles that the caller releases with the
//! matching `*_free` function. Strings returned to the caller are released
//! with [`syn_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use synesthesia::audio::{decode_wav, extract_features, FeatureStack};
use synesthesia::canvas::{load_png, save_png, AugmentationSpec, CanvasImage};
use synesthesia::emotion::{map_label_str, speech_emotion, N_EMOTIONS};
use synesthesia::encoders::{load_weight_file, WeightFile};
use synesthesia::objective::{loss_natural_sound, loss_pixel_l2, Models};
use synesthesia::pipeline::paint;
use synesthesia::strokes::{render_plan, PaintingPlan};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid argument, parameter or config.
    Invalid = 2,
    Io = 3,
    Numeric = 4,
    /// Malformed file or mismatched tensor shape.
    Format = 5,
    UnknownLabel = 6,
    Utf8 = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// A painting plan.
pub struct SynPlan(PaintingPlan);
/// An RGB image with channels in [0, 1].
pub struct SynImage(CanvasImage);
/// Per-frame audio features.
pub struct SynFeatures(FeatureStack);
/// A loaded SYNW1 weight file.
pub struct SynWeights(WeightFile);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SynStatus, String);

impl From<synesthesia::Error> for Failure {
    fn from(e: synesthesia::Error) -> Self {
        use synesthesia::Error as E;
        let status = match &e {
            E::Io { .. } => SynStatus::Io,
            E::Numeric(_) => SynStatus::Numeric,
            E::Format(_) => SynStatus::Format,
            E::Mapping { .. } => SynStatus::UnknownLabel,
            E::Param(_) | E::Config(_) => SynStatus::Invalid,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SynStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SynStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SynStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            SynStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SynStatus::Utf8, format!("{what} is not valid UTF-8")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn give<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn give_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s).map_err(|_| Failure(SynStatus::Format, "string contains a nul byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn syn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn syn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn syn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a plan from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn syn_plan_from_json(json: *const c_char, out: *mut *mut SynPlan) -> SynStatus {
    guard(|| {
        let plan = PaintingPlan::from_json(read_str(json, "json")?)?;
        give(out, SynPlan(plan))
    })
}

/// Serializes a plan; free the result with [`syn_string_free`].
///
/// # Safety
/// `plan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn syn_plan_to_json(plan: *const SynPlan, out: *mut *mut c_char) -> SynStatus {
    guard(|| {
        let json = borrow(plan, "plan")?.0.to_json()?;
        give_string(out, json)
    })
}

/// Number of strokes in a plan, 0 for NULL.
///
/// # Safety
/// `plan` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn syn_plan_stroke_count(plan: *const SynPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.strokes.len())
}

/// # Safety
/// `plan` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn syn_plan_free(plan: *mut SynPlan) {
    free(plan)
}

/// Renders a plan into a new image.
///
/// # Safety
/// `plan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn syn_render(plan: *const SynPlan, out: *mut *mut SynImage) -> SynStatus {
    guard(|| {
        let img = render_plan(&borrow(plan, "plan")?.0);
        give(out, SynImage(img))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn syn_image_load_png(path: *const c_char, out: *mut *mut SynImage) -> SynStatus {
    guard(|| {
        let img = load_png(read_str(path, "path")?)?;
        give(out, SynImage(img))
    })
}

/// Writes an 8-bit RGB PNG.
///
/// # Safety
/// `img` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn syn_image_save_png(img: *const SynImage, path: *const c_char) -> SynStatus {
    guard(|| {
        let img = borrow(img, "image")?;
        Ok(save_png(&img.0, read_str(path, "path")?)?)
    })
}

/// # Safety
/// `img` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn syn_image_width(img: *const SynImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.width())
}

/// # Safety
/// `img` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn syn_image_height(img: *const SynImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.height())
}

/// Copies row-major interleaved RGB into `dst`, which must hold exactly
/// `width * height * 3` values.
///
/// # Safety
/// `img` must be a live handle; `dst` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn syn_image_pixels(img: *const SynImage, dst: *mut f64, len: usize) -> SynStatus {
    guard(|| {
        let img = &borrow(img, "image")?.0;
        let need = img.width() * img.height() * 3;
        if len != need {
            return Err(Failure(SynStatus::Invalid, format!("buffer holds {len} values, image needs {need}")));
        }
        if dst.is_null() {
            return Err(null("dst"));
        }
        let dst = std::slice::from_raw_parts_mut(dst, len);
        for (chunk, px) in dst.chunks_exact_mut(3).zip(img.pixels()) {
            chunk.copy_from_slice(px);
        }
        Ok(())
    })
}

/// # Safety
/// `img` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn syn_image_free(img: *mut SynImage) {
    free(img)
}

/// Decodes a WAV file and extracts its features.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn syn_features_from_wav(path: *const c_char, out: *mut *mut SynFeatures) -> SynStatus {
    guard(|| {
        let feats = extract_features(&decode_wav(read_str(path, "path")?)?)?;
        give(out, SynFeatures(feats))
    })
}

/// Number of analysis frames, 0 for NULL.
///
/// # Safety
/// `feats` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn syn_features_frame_count(feats: *const SynFeatures) -> usize {
    feats.as_ref().map_or(0, |f| f.0.n_frames)
}

/// # Safety
/// `feats` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn syn_features_free(feats: *mut SynFeatures) {
    free(feats)
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn syn_weights_load(path: *const c_char, out: *mut *mut SynWeights) -> SynStatus {
    guard(|| {
        let w = load_weight_file(read_str(path, "path")?)?;
        give(out, SynWeights(w))
    })
}

/// # Safety
/// `w` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn syn_weights_free(w: *mut SynWeights) {
    free(w)
}

/// Speech emotion distribution; writes 9 probabilities in canonical order.
///
/// # Safety
/// Handles must be live; `probs` must point to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn syn_speech_emotion(
    feats: *const SynFeatures,
    weights: *const SynWeights,
    probs: *mut f64,
) -> SynStatus {
    guard(|| {
        let d = speech_emotion(&borrow(feats, "features")?.0, &borrow(weights, "weights")?.0)?;
        if probs.is_null() {
            return Err(null("probs"));
        }
        std::slice::from_raw_parts_mut(probs, N_EMOTIONS).copy_from_slice(&d.probs);
        Ok(())
    })
}

/// Maps a dataset label to its canonical emotion index.
///
/// # Safety
/// `dataset` and `label` must be NUL-terminated; `index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn syn_map_label(dataset: *const c_char, label: *const c_char, index: *mut u32) -> SynStatus {
    guard(|| {
        let e = map_label_str(read_str(dataset, "dataset")?, read_str(label, "label")?)?;
        if index.is_null() {
            return Err(null("index"));
        }
        *index = e.index() as u32;
        Ok(())
    })
}

const EMOTION_NAMES: [&CStr; N_EMOTIONS] = [
    c"amusement",
    c"anger",
    c"awe",
    c"contentment",
    c"disgust",
    c"excitement",
    c"fear",
    c"sadness",
    c"something-else",
];

/// Static name of canonical emotion `index`, or NULL when out of range.
#[no_mangle]
pub extern "C" fn syn_emotion_name(index: u32) -> *const c_char {
    EMOTION_NAMES
        .get(index as usize)
        .map_or(std::ptr::null(), |c| c.as_ptr())
}

/// Pixel MSE against `target` and, when `grad` is not NULL, its gradient
/// in the plan's flat parameter order (`grad_len` must equal
/// `10 * strokes + 3`).
///
/// # Safety
/// Handles must be live; `loss` writable; `grad` NULL or `grad_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn syn_loss_pixel_l2(
    plan: *const SynPlan,
    target: *const SynImage,
    loss: *mut f64,
    grad: *mut f64,
    grad_len: usize,
) -> SynStatus {
    guard(|| {
        let plan = &borrow(plan, "plan")?.0;
        let (value, g) = loss_pixel_l2(plan, &borrow(target, "target")?.0)?;
        write_loss(loss, value, grad, grad_len, &g.to_flat())
    })
}

/// Natural-sound loss under the reference encoders of dimension `dim` and
/// seed `seed`, with the default augmentation. Gradient as for
/// [`syn_loss_pixel_l2`].
///
/// # Safety
/// Handles must be live; `loss` writable; `grad` NULL or `grad_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn syn_loss_natural_sound(
    plan: *const SynPlan,
    feats: *const SynFeatures,
    dim: usize,
    seed: u64,
    loss: *mut f64,
    grad: *mut f64,
    grad_len: usize,
) -> SynStatus {
    guard(|| {
        let plan = &borrow(plan, "plan")?.0;
        let models = Models::reference(dim, seed)?;
        let aug = AugmentationSpec::default();
        let (value, g) = loss_natural_sound(plan, &borrow(feats, "features")?.0, &models, &aug)?;
        write_loss(loss, value, grad, grad_len, &g.to_flat())
    })
}

unsafe fn write_loss(loss: *mut f64, value: f64, grad: *mut f64, grad_len: usize, g: &[f64]) -> Result<(), Failure> {
    if loss.is_null() {
        return Err(null("loss"));
    }
    if !grad.is_null() {
        if grad_len != g.len() {
            return Err(Failure(
                SynStatus::Invalid,
                format!("gradient buffer holds {grad_len} values, plan has {}", g.len()),
            ));
        }
        std::slice::from_raw_parts_mut(grad, grad_len).copy_from_slice(g);
    }
    *loss = value;
    Ok(())
}

/// Runs a paint config and writes its artifacts to `out_dir`, or to the
/// config's own output directory when `out_dir` is NULL.
///
/// # Safety
/// `config_path` must be NUL-terminated; `out_dir` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn syn_paint(config_path: *const c_char, out_dir: *const c_char) -> SynStatus {
    guard(|| {
        let cfg = read_str(config_path, "config_path")?;
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(read_str(out_dir, "out_dir")?))
        };
        paint(cfg, dir)?;
        Ok(())
    })
}
