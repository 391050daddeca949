//! C ABI for the tracking toolkit.
//!
//! Conventions: every fallible call returns a `MotStatus`; `MOT_STATUS_OK`
//! means success and anything else leaves a human-readable message in
//! `mot_last_error` for the calling thread. Handles are opaque pointers
//! created and destroyed by this library; the `_free` functions accept null.
//! Array arguments are caller-owned, row-major, and read only for the
//! duration of the call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use motkit::embedder::{embed, extract_crop, CropFeature, EmbedderParams};
use motkit::error::Error;
use motkit::metrics::evaluate_all;
use motkit::mot_io::{frames_to_rows, parse_mot_file};
use motkit::pixmap::RgbImage;
use motkit::tracker::{Tracker, TrackerConfig};
use motkit::types::{BBox, Detection, FrameDetections};
use ndarray::Array2;

/// Result code of a C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was rejected (bad box, bad config, wrong order).
    InvalidArgument = 2,
    /// A file could not be read or written.
    IoError = 3,
    /// A file existed but its contents were malformed.
    ParseError = 4,
    /// An unexpected internal failure; a bug if it is reachable.
    InternalError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> MotStatus {
    match err {
        Error::Io { .. } => MotStatus::IoError,
        Error::Parse { .. } => MotStatus::ParseError,
        Error::Config(_) | Error::Shape(_) | Error::Invalid(_) => MotStatus::InvalidArgument,
    }
}

fn fail(err: &Error) -> MotStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn fail_invalid(message: &str) -> MotStatus {
    set_error(message);
    MotStatus::InvalidArgument
}

fn fail_null(what: &str) -> MotStatus {
    set_error(&format!("{what} must not be null"));
    MotStatus::NullPointer
}

/// Runs `body` with panics converted to `InternalError` so that no unwind
/// ever crosses the C boundary.
fn guarded(body: impl FnOnce() -> MotStatus) -> MotStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            MotStatus::InternalError
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, MotStatus> {
    if ptr.is_null() {
        return Err(fail_null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail_invalid(&format!("{what} is not valid UTF-8")))
}

/// Message of the most recent failure on this thread; empty when the last
/// call succeeded. The pointer stays valid until the next call into this
/// library from the same thread.
#[no_mangle]
pub extern "C" fn mot_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// A loaded appearance model. Create with `mot_embedder_load`, destroy
/// with `mot_embedder_free`.
pub struct MotEmbedder {
    params: EmbedderParams,
}

/// An online tracker bound to a copy of an embedder. Create with
/// `mot_tracker_new`, destroy with `mot_tracker_free`.
pub struct MotTracker {
    tracker: Tracker,
    params: EmbedderParams,
    needs_appearance: bool,
    last_frame: u32,
}

/// Loads an embedder checkpoint (JSON, as written by training) from
/// `checkpoint_path` into a new handle stored in `*out`.
#[no_mangle]
pub unsafe extern "C" fn mot_embedder_load(
    checkpoint_path: *const c_char,
    out: *mut *mut MotEmbedder,
) -> MotStatus {
    guarded(|| {
        if out.is_null() {
            return fail_null("out");
        }
        let path = match str_arg(checkpoint_path, "checkpoint_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match EmbedderParams::load(Path::new(path)) {
            Ok(params) => {
                *out = Box::into_raw(Box::new(MotEmbedder { params }));
                MotStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Embedding dimensionality of a loaded model, or -1 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mot_embedder_dim(embedder: *const MotEmbedder) -> i32 {
    if embedder.is_null() {
        return -1;
    }
    (*embedder).params.config.dim as i32
}

fn boxes_from_raw(boxes: &[f64]) -> Result<Vec<BBox>, Error> {
    boxes
        .chunks_exact(4)
        .map(|b| BBox::new(b[0], b[1], b[2], b[3]))
        .collect()
}

fn crops_for(
    image: &RgbImage,
    boxes: &[BBox],
    params: &EmbedderParams,
) -> Result<Vec<CropFeature>, Error> {
    boxes
        .iter()
        .map(|b| extract_crop(image, b, params.config.patch_w, params.config.patch_h))
        .collect()
}

unsafe fn image_from_raw(rgb: *const u8, width: usize, height: usize) -> Result<RgbImage, MotStatus> {
    if width == 0 || height == 0 {
        return Err(fail_invalid("image dimensions must be positive"));
    }
    if rgb.is_null() {
        return Err(fail_null("rgb"));
    }
    let data = std::slice::from_raw_parts(rgb, width * height * 3).to_vec();
    Ok(RgbImage {
        width,
        height,
        data,
    })
}

/// Embeds `num_boxes` crops of an RGB image (`width*height*3` bytes, rows
/// top to bottom). `boxes` holds `num_boxes * 4` doubles as x, y, width,
/// height per box; `out` receives `num_boxes * dim` doubles, one embedding
/// row per box in input order.
#[no_mangle]
pub unsafe extern "C" fn mot_embedder_embed(
    embedder: *const MotEmbedder,
    rgb: *const u8,
    width: usize,
    height: usize,
    boxes: *const f64,
    num_boxes: usize,
    out: *mut f64,
) -> MotStatus {
    guarded(|| {
        if embedder.is_null() {
            return fail_null("embedder");
        }
        if num_boxes == 0 {
            return MotStatus::Ok;
        }
        if boxes.is_null() {
            return fail_null("boxes");
        }
        if out.is_null() {
            return fail_null("out");
        }
        let image = match image_from_raw(rgb, width, height) {
            Ok(img) => img,
            Err(status) => return status,
        };
        let params = &(*embedder).params;
        let raw = std::slice::from_raw_parts(boxes, num_boxes * 4);
        let embeddings = boxes_from_raw(raw)
            .and_then(|bs| crops_for(&image, &bs, params))
            .and_then(|crops| embed(params, &crops));
        match embeddings {
            Ok(matrix) => {
                let flat: Vec<f64> = matrix.iter().copied().collect();
                std::ptr::copy_nonoverlapping(flat.as_ptr(), out, flat.len());
                MotStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Destroys an embedder handle; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mot_embedder_free(embedder: *mut MotEmbedder) {
    if !embedder.is_null() {
        drop(Box::from_raw(embedder));
    }
}

/// Creates a tracker that embeds its own crops with a copy of `embedder`.
/// `config_toml` may be null for default behavior or a TOML document of
/// tracker settings (thresholds, costs, max age). The handle is stored in
/// `*out` and is independent of the embedder handle's lifetime.
#[no_mangle]
pub unsafe extern "C" fn mot_tracker_new(
    embedder: *const MotEmbedder,
    config_toml: *const c_char,
    out: *mut *mut MotTracker,
) -> MotStatus {
    guarded(|| {
        if out.is_null() {
            return fail_null("out");
        }
        if embedder.is_null() {
            return fail_null("embedder");
        }
        let config = if config_toml.is_null() {
            TrackerConfig::default()
        } else {
            let text = match str_arg(config_toml, "config_toml") {
                Ok(s) => s,
                Err(status) => return status,
            };
            match toml::from_str::<TrackerConfig>(text) {
                Ok(cfg) => cfg,
                Err(e) => return fail_invalid(&format!("invalid tracker config: {e}")),
            }
        };
        let needs_appearance = config.needs_appearance();
        match Tracker::new(config) {
            Ok(tracker) => {
                *out = Box::into_raw(Box::new(MotTracker {
                    tracker,
                    params: (*embedder).params.clone(),
                    needs_appearance,
                    last_frame: 0,
                }));
                MotStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Advances the tracker by one frame. `frame` is 1-based and must be
/// strictly greater than the previous call's. `boxes` holds
/// `num_detections * 4` doubles (x, y, width, height); `confidences` one
/// double per detection in [0, 1]. Output rows are written to `out_rows` as
/// 7 doubles each — frame, track id, x, y, width, height, confidence — and
/// their count to `*out_count`. `out_rows` must hold at least
/// `num_detections * 7` doubles; at most one row is produced per detection.
#[no_mangle]
pub unsafe extern "C" fn mot_tracker_step(
    tracker: *mut MotTracker,
    frame: u32,
    rgb: *const u8,
    width: usize,
    height: usize,
    boxes: *const f64,
    confidences: *const f64,
    num_detections: usize,
    out_rows: *mut f64,
    out_count: *mut usize,
) -> MotStatus {
    guarded(|| {
        if tracker.is_null() {
            return fail_null("tracker");
        }
        if out_count.is_null() {
            return fail_null("out_count");
        }
        *out_count = 0;
        if num_detections > 0 && (boxes.is_null() || confidences.is_null()) {
            return fail_null("boxes/confidences");
        }
        if num_detections > 0 && out_rows.is_null() {
            return fail_null("out_rows");
        }
        let handle = &mut *tracker;
        if frame <= handle.last_frame {
            return fail_invalid(&format!(
                "frame {} not after previous frame {}",
                frame, handle.last_frame
            ));
        }
        let raw_boxes = if num_detections > 0 {
            std::slice::from_raw_parts(boxes, num_detections * 4)
        } else {
            &[]
        };
        let raw_conf = if num_detections > 0 {
            std::slice::from_raw_parts(confidences, num_detections)
        } else {
            &[]
        };
        let built: Result<Vec<Detection>, Error> = boxes_from_raw(raw_boxes).and_then(|bs| {
            bs.into_iter()
                .zip(raw_conf)
                .map(|(bbox, &conf)| Detection::new(frame, bbox, conf))
                .collect()
        });
        let detections = match built {
            Ok(d) => d,
            Err(e) => return fail(&e),
        };
        let frame_dets = match FrameDetections::new(frame, detections) {
            Ok(f) => f,
            Err(e) => return fail(&e),
        };
        let embeddings = if !handle.needs_appearance || num_detections == 0 {
            Ok(Array2::zeros((num_detections, 1)))
        } else {
            match image_from_raw(rgb, width, height) {
                Ok(image) => crops_for(
                    &image,
                    &frame_dets.detections.iter().map(|d| d.bbox).collect::<Vec<_>>(),
                    &handle.params,
                )
                .and_then(|crops| embed(&handle.params, &crops)),
                Err(status) => return status,
            }
        };
        let embeddings = match embeddings {
            Ok(m) => m,
            Err(e) => return fail(&e),
        };
        match handle.tracker.step(&frame_dets, &embeddings) {
            Ok(rows) => {
                for (i, row) in rows.iter().enumerate() {
                    let base = out_rows.add(i * 7);
                    *base = row.frame as f64;
                    *base.add(1) = row.track_id as f64;
                    *base.add(2) = row.bbox.x;
                    *base.add(3) = row.bbox.y;
                    *base.add(4) = row.bbox.width;
                    *base.add(5) = row.bbox.height;
                    *base.add(6) = row.confidence;
                }
                *out_count = rows.len();
                handle.last_frame = frame;
                MotStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of tracks the tracker currently holds (any lifecycle state), or
/// -1 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn mot_tracker_track_count(tracker: *const MotTracker) -> i64 {
    if tracker.is_null() {
        return -1;
    }
    (*tracker).tracker.tracks().len() as i64
}

/// Destroys a tracker handle; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mot_tracker_free(tracker: *mut MotTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Evaluates a result file against a ground-truth file (both in the
/// comma-separated interchange format) and stores a JSON report in
/// `*out_json`: detection/association accuracy, identity measures, and
/// event counts. Free the string with `mot_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mot_evaluate_files(
    gt_path: *const c_char,
    results_path: *const c_char,
    out_json: *mut *mut c_char,
) -> MotStatus {
    guarded(|| {
        if out_json.is_null() {
            return fail_null("out_json");
        }
        let gt = match str_arg(gt_path, "gt_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let hyp = match str_arg(results_path, "results_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let report = parse_mot_file(Path::new(gt))
            .and_then(|g| frames_to_rows(&g))
            .and_then(|g| {
                parse_mot_file(Path::new(hyp))
                    .and_then(|h| frames_to_rows(&h))
                    .map(|h| evaluate_all(&g, &h))
            });
        match report {
            Ok(report) => match serde_json::to_string_pretty(&report) {
                Ok(json) => {
                    let c = CString::new(json).expect("JSON has no nul bytes");
                    *out_json = c.into_raw();
                    MotStatus::Ok
                }
                Err(e) => {
                    set_error(&format!("serialization failed: {e}"));
                    MotStatus::InternalError
                }
            },
            Err(e) => fail(&e),
        }
    })
}

/// Frees a string returned by this library; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mot_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
