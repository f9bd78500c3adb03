//! C ABI over the pipeline's pure operations so other languages can bind:
//! keyword extraction, answer matching, box geometry, and structured step
//! parsing. Structured results cross the boundary as JSON strings; the
//! matcher travels as an opaque handle.
//!
//! Conventions: every function returns a [`CocotStatus`]; out-parameters
//! are written only on `Ok`; strings returned through out-parameters are
//! owned by the caller and must be released with [`cocot_string_free`].

use std::ffi::{c_char, CStr, CString};

use cocot::chains::parse_step_output;
use cocot::eval::{answers_match, extract_core_answer, normalize_answer, MatchConfig};
use cocot::filter::{extract_keywords, is_compound_answer};
use cocot::geometry::{compute_pad_transform, iou};
use cocot::types::BBox;

/// Result code for every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CocotStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseFailed = 4,
    OutOfRange = 5,
    InternalError = 6,
}

fn status_of(err: &cocot::Error) -> CocotStatus {
    match err {
        cocot::Error::Parse { .. } => CocotStatus::ParseFailed,
        cocot::Error::Range { .. } => CocotStatus::OutOfRange,
        cocot::Error::Construction(_) | cocot::Error::Usage(_) | cocot::Error::OutOfBounds(_) => {
            CocotStatus::InvalidArgument
        }
        _ => CocotStatus::InternalError,
    }
}

/// Answer matcher configured once and reused across calls. Opaque.
pub struct CocotMatcher {
    config: MatchConfig,
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, CocotStatus> {
    if ptr.is_null() {
        return Err(CocotStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| CocotStatus::InvalidUtf8)
}

fn write_string(out: *mut *mut c_char, value: String) -> CocotStatus {
    match CString::new(value) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            CocotStatus::Ok
        }
        Err(_) => CocotStatus::InternalError,
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn cocot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Release a string returned through any `out` parameter.
///
/// # Safety
/// `s` must be a pointer previously written by this library and not yet
/// freed; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cocot_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Extract question keywords as a JSON array of strings.
///
/// # Safety
/// `question` must be a valid NUL-terminated string and `out_json` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn cocot_extract_keywords(
    question: *const c_char,
    out_json: *mut *mut c_char,
) -> CocotStatus {
    if out_json.is_null() {
        return CocotStatus::NullPointer;
    }
    let question = match read_str(question) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let keywords = extract_keywords(question);
    match serde_json::to_string(&keywords) {
        Ok(json) => write_string(out_json, json),
        Err(_) => CocotStatus::InternalError,
    }
}

/// True when the answer contains a comma, slash, or standalone "and".
///
/// # Safety
/// `answer` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cocot_is_compound_answer(
    answer: *const c_char,
    out: *mut bool,
) -> CocotStatus {
    if out.is_null() {
        return CocotStatus::NullPointer;
    }
    let answer = match read_str(answer) {
        Ok(s) => s,
        Err(status) => return status,
    };
    *out = is_compound_answer(answer);
    CocotStatus::Ok
}

/// Create a matcher handle; release with [`cocot_matcher_free`].
#[no_mangle]
pub extern "C" fn cocot_matcher_new(
    strip_articles: bool,
    numeric_rel_tol: f64,
    containment_max_gold_tokens: usize,
) -> *mut CocotMatcher {
    let config = MatchConfig { strip_articles, numeric_rel_tol, containment_max_gold_tokens };
    if config.validate().is_err() {
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(CocotMatcher { config }))
}

/// Matcher with the default configuration.
#[no_mangle]
pub extern "C" fn cocot_matcher_default() -> *mut CocotMatcher {
    Box::into_raw(Box::new(CocotMatcher { config: MatchConfig::default() }))
}

/// Release a matcher handle.
///
/// # Safety
/// `matcher` must come from a matcher constructor and not be freed twice;
/// null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cocot_matcher_free(matcher: *mut CocotMatcher) {
    if !matcher.is_null() {
        drop(Box::from_raw(matcher));
    }
}

/// Normalize an answer under the matcher's configuration.
///
/// # Safety
/// All pointers must be valid; `answer` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cocot_normalize_answer(
    matcher: *const CocotMatcher,
    answer: *const c_char,
    out: *mut *mut c_char,
) -> CocotStatus {
    if matcher.is_null() || out.is_null() {
        return CocotStatus::NullPointer;
    }
    let answer = match read_str(answer) {
        Ok(s) => s,
        Err(status) => return status,
    };
    write_string(out, normalize_answer(answer, &(*matcher).config))
}

/// Extract the core answer from a verbose model response.
///
/// # Safety
/// All pointers must be valid; `response` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cocot_extract_core_answer(
    matcher: *const CocotMatcher,
    response: *const c_char,
    out: *mut *mut c_char,
) -> CocotStatus {
    if matcher.is_null() || out.is_null() {
        return CocotStatus::NullPointer;
    }
    let response = match read_str(response) {
        Ok(s) => s,
        Err(status) => return status,
    };
    write_string(out, extract_core_answer(response, &(*matcher).config))
}

/// Does the prediction match any of `n_golds` gold answers?
///
/// # Safety
/// `golds` must point to `n_golds` valid NUL-terminated strings; all other
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cocot_answers_match(
    matcher: *const CocotMatcher,
    prediction: *const c_char,
    golds: *const *const c_char,
    n_golds: usize,
    out: *mut bool,
) -> CocotStatus {
    if matcher.is_null() || out.is_null() || (n_golds > 0 && golds.is_null()) {
        return CocotStatus::NullPointer;
    }
    let prediction = match read_str(prediction) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let mut owned = Vec::with_capacity(n_golds);
    for i in 0..n_golds {
        match read_str(*golds.add(i)) {
            Ok(s) => owned.push(s.to_string()),
            Err(status) => return status,
        }
    }
    *out = answers_match(prediction, &owned, &(*matcher).config);
    CocotStatus::Ok
}

/// Intersection over union of two boxes given as corner coordinates.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cocot_iou(
    ax1: f64,
    ay1: f64,
    ax2: f64,
    ay2: f64,
    bx1: f64,
    by1: f64,
    bx2: f64,
    by2: f64,
    out: *mut f64,
) -> CocotStatus {
    if out.is_null() {
        return CocotStatus::NullPointer;
    }
    let a = match BBox::new(ax1, ay1, ax2, ay2) {
        Ok(b) => b,
        Err(e) => return status_of(&e),
    };
    let b = match BBox::new(bx1, by1, bx2, by2) {
        Ok(b) => b,
        Err(e) => return status_of(&e),
    };
    *out = iou(&a, &b);
    CocotStatus::Ok
}

/// Aspect-preserving square embedding of a `width x height` image.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CocotPadTransform {
    pub scale: f64,
    pub pad_x: i64,
    pub pad_y: i64,
    pub target: i64,
}

/// Compute the crop-and-pad transform for an image.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cocot_compute_pad_transform(
    width: i64,
    height: i64,
    target: i64,
    out: *mut CocotPadTransform,
) -> CocotStatus {
    if out.is_null() {
        return CocotStatus::NullPointer;
    }
    match compute_pad_transform(width, height, target) {
        Ok(t) => {
            *out = CocotPadTransform {
                scale: t.scale,
                pad_x: t.pad_x,
                pad_y: t.pad_y,
                target: t.target,
            };
            CocotStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Parse a structured reasoning step out of raw model text; the step comes
/// back as a JSON object `{region_index, role, reasoning, relation}`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out_json` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn cocot_parse_step_output(
    text: *const c_char,
    region_count: usize,
    out_json: *mut *mut c_char,
) -> CocotStatus {
    if out_json.is_null() {
        return CocotStatus::NullPointer;
    }
    let text = match read_str(text) {
        Ok(s) => s,
        Err(status) => return status,
    };
    match parse_step_output(text, region_count) {
        Ok(step) => match serde_json::to_string(&step) {
            Ok(json) => write_string(out_json, json),
            Err(_) => CocotStatus::InternalError,
        },
        Err(e) => status_of(&e),
    }
}
