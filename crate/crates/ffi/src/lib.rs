//! C ABI over the cntrack engine.
//!
//! A tracker is an opaque `CntTracker*` created by [`cnt_tracker_new`] and
//! released with [`cnt_tracker_free`]. Frames are pushed one at a time as
//! packed RGB8; the first `init_frames` frames only build the background
//! model. After each push the live tracks can be read by index.
//!
//! Every fallible call returns a [`CntStatus`]. On failure a description is
//! kept per thread and can be read with [`cnt_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cntrack::sequence_io::Frame;
use cntrack::{Error, StreamTracker, TrackMode, TrackState, TrackerConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CntStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    DimensionMismatch = 4,
    OutOfRange = 5,
    Internal = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CntMode {
    Normal = 0,
    Graded = 1,
    Coasting = 2,
}

/// One live track. The box is in pixels with a top-left origin.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CntTrackRecord {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub vx: f64,
    pub vy: f64,
    pub confidence: f64,
    pub mode: CntMode,
    pub age: u64,
    pub misses: u64,
}

/// Opaque tracker handle.
pub struct CntTracker {
    inner: StreamTracker,
    frames: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> CntStatus {
    match e {
        Error::Config { .. } | Error::Json(_) => CntStatus::Config,
        Error::DimensionMismatch(_) | Error::FrameSizeMismatch { .. } => CntStatus::DimensionMismatch,
        Error::EmptySupport | Error::ZeroWeight | Error::DegenerateClasses => CntStatus::Internal,
        _ => CntStatus::InvalidArgument,
    }
}

fn fail(status: CntStatus, msg: impl Into<String>) -> CntStatus {
    set_error(msg);
    status
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (CntStatus, String)>) -> CntStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CntStatus::Ok,
        Ok(Err((s, m))) => fail(s, m),
        Err(_) => fail(CntStatus::Panic, "internal panic"),
    }
}

fn lift(e: Error) -> (CntStatus, String) {
    (status_of(&e), e.to_string())
}

fn record(s: &TrackState) -> CntTrackRecord {
    CntTrackRecord {
        id: s.id,
        x: s.bbox.x,
        y: s.bbox.y,
        w: s.bbox.w,
        h: s.bbox.h,
        vx: s.velocity.x,
        vy: s.velocity.y,
        confidence: s.confidence,
        mode: match s.mode {
            TrackMode::Normal => CntMode::Normal,
            TrackMode::Graded => CntMode::Graded,
            TrackMode::Coasting => CntMode::Coasting,
        },
        age: s.age as u64,
        misses: s.misses as u64,
    }
}

/// Create a tracker. `config_json` may be NULL for the defaults, or a JSON
/// object with any subset of the configuration keys.
///
/// # Safety
/// `config_json` must be NULL or a valid NUL-terminated string; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cnt_tracker_new(config_json: *const c_char, out: *mut *mut CntTracker) -> CntStatus {
    if out.is_null() {
        return fail(CntStatus::NullPointer, "out is NULL");
    }
    *out = ptr::null_mut();
    guard(|| {
        let config = if config_json.is_null() {
            TrackerConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|e| (CntStatus::InvalidArgument, format!("config is not UTF-8: {e}")))?;
            TrackerConfig::from_json_str(text).map_err(lift)?
        };
        let inner = StreamTracker::new(config).map_err(lift)?;
        *out = Box::into_raw(Box::new(CntTracker { inner, frames: 0 }));
        Ok(())
    })
}

/// Release a tracker. NULL is ignored.
///
/// # Safety
/// `t` must be NULL or a handle from [`cnt_tracker_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cnt_tracker_free(t: *mut CntTracker) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Push one packed RGB8 frame of `width * height * 3` bytes.
///
/// # Safety
/// `t` must be a live handle and `rgb` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn cnt_tracker_push_frame(
    t: *mut CntTracker,
    rgb: *const u8,
    len: usize,
    width: u32,
    height: u32,
) -> CntStatus {
    if t.is_null() || rgb.is_null() {
        return fail(CntStatus::NullPointer, "tracker or pixel pointer is NULL");
    }
    let t = &mut *t;
    let (w, h) = (width as usize, height as usize);
    let expected = w.checked_mul(h).and_then(|n| n.checked_mul(3));
    if expected != Some(len) || len == 0 {
        return fail(
            CntStatus::InvalidArgument,
            format!("{len} bytes do not hold a {width}x{height} RGB frame"),
        );
    }
    let pixels = std::slice::from_raw_parts(rgb, len).to_vec();
    guard(|| {
        let frame = Frame::new(w, h, pixels, t.frames).map_err(lift)?;
        t.inner.push(frame).map_err(lift)?;
        t.frames += 1;
        Ok(())
    })
}

/// 1 once the background model is built, 0 before, -1 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cnt_tracker_is_bootstrapped(t: *const CntTracker) -> i32 {
    match t.as_ref() {
        Some(t) => t.inner.is_bootstrapped() as i32,
        None => -1,
    }
}

/// Number of live tracks after the last pushed frame.
///
/// # Safety
/// `t` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cnt_tracker_track_count(t: *const CntTracker, out: *mut usize) -> CntStatus {
    if t.is_null() || out.is_null() {
        return fail(CntStatus::NullPointer, "tracker or out is NULL");
    }
    clear_error();
    *out = (*t).inner.tracks().len();
    CntStatus::Ok
}

/// Copy track `index` (in `0..count`) into `out`.
///
/// # Safety
/// `t` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cnt_tracker_get_track(
    t: *const CntTracker,
    index: usize,
    out: *mut CntTrackRecord,
) -> CntStatus {
    if t.is_null() || out.is_null() {
        return fail(CntStatus::NullPointer, "tracker or out is NULL");
    }
    let tracks = (*t).inner.tracks();
    match tracks.get(index) {
        Some(s) => {
            clear_error();
            *out = record(s);
            CntStatus::Ok
        }
        None => fail(
            CntStatus::OutOfRange,
            format!("track index {index} out of range ({} live)", tracks.len()),
        ),
    }
}

/// Description of the last failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cnt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cnt_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
