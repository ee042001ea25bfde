//! C ABI over the memory store, the occupancy planner and the hash embedder.
//!
//! Every function returns an [`LmStatus`]; results come back through out
//! pointers. Handles are opaque and must be released with the matching
//! `*_free`. The message for the most recent failure on the calling thread is
//! available from [`lm_last_error_message`].

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lifemem::episodic::{EpisodicError, EpisodicStore, MemoryQuery, NewEvent, RetrievalConfig};
use lifemem::navigation::{plan, NavError, NavWeights};
use lifemem::providers::{EmbedError, EmbeddingProvider, HashEmbedder};
use lifemem::spatial_grid::{CellState, MapCell, OccupancyMap};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    OutOfBounds = 4,
    NoPath = 5,
    BufferTooSmall = 6,
    Io = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmCellState {
    Unknown = 0,
    Free = 1,
    Obstacle = 2,
}

impl From<CellState> for LmCellState {
    fn from(s: CellState) -> Self {
        match s {
            CellState::Unknown => Self::Unknown,
            CellState::Free => Self::Free,
            CellState::Obstacle => Self::Obstacle,
        }
    }
}

impl From<LmCellState> for CellState {
    fn from(s: LmCellState) -> Self {
        match s {
            LmCellState::Unknown => Self::Unknown,
            LmCellState::Free => Self::Free,
            LmCellState::Obstacle => Self::Obstacle,
        }
    }
}

/// Retrieval query. `image_feature` may be null when `image_len` is 0.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct LmQuery {
    pub time: f64,
    pub location: [f64; 3],
    pub text_feature: *const f64,
    pub text_len: usize,
    pub image_feature: *const f64,
    pub image_len: usize,
    pub k: usize,
}

pub struct LmEmbedder {
    inner: HashEmbedder,
}

pub struct LmStore {
    inner: EpisodicStore,
    config: RetrievalConfig,
}

pub struct LmMap {
    inner: OccupancyMap,
    weights: NavWeights,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(LmStatus, String);

impl Failure {
    fn new(status: LmStatus, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

impl From<EpisodicError> for Failure {
    fn from(e: EpisodicError) -> Self {
        let status = match e {
            EpisodicError::Io(_) => LmStatus::Io,
            _ => LmStatus::InvalidArgument,
        };
        Self(status, e.to_string())
    }
}

impl From<EmbedError> for Failure {
    fn from(e: EmbedError) -> Self {
        Self(LmStatus::InvalidArgument, e.to_string())
    }
}

impl From<NavError> for Failure {
    fn from(e: NavError) -> Self {
        let status = match e {
            NavError::NoPath(_) | NavError::StartBlocked(_) => LmStatus::NoPath,
            NavError::OutOfBounds(_) => LmStatus::OutOfBounds,
            _ => LmStatus::InvalidArgument,
        };
        Self(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LmStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (LmStatus::Ok, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(_) => (LmStatus::Internal, "panic inside lifemem".to_string()),
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(LmStatus::NullPointer, "null handle"))
}

unsafe fn borrow_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(LmStatus::NullPointer, "null handle"))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(LmStatus::NullPointer, format!("null {what}")))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::new(LmStatus::NullPointer, format!("null {what}")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::new(LmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn floats(p: *const f64, len: usize, what: &str) -> Result<Vec<f64>, Failure> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Failure::new(LmStatus::NullPointer, format!("null {what}")));
    }
    Ok(std::slice::from_raw_parts(p, len).to_vec())
}

unsafe fn optional_floats(p: *const f64, len: usize, what: &str) -> Result<Option<Vec<f64>>, Failure> {
    if len == 0 {
        Ok(None)
    } else {
        floats(p, len, what).map(Some)
    }
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Length in bytes of the last error message on this thread, excluding the
/// terminating NUL. Zero after a successful call.
#[no_mangle]
pub extern "C" fn lm_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copy the last error message, NUL-terminated, into `buf`.
///
/// # Safety
/// `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lm_last_error_message(buf: *mut c_char, cap: usize) -> LmStatus {
    if buf.is_null() {
        return LmStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if e.len() + 1 > cap {
            return LmStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), e.len());
        *buf.add(e.len()) = 0;
        LmStatus::Ok
    })
}

// ---------------------------------------------------------------- embedder

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_embedder_new(dim: usize, out: *mut *mut LmEmbedder) -> LmStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        if dim == 0 {
            return Err(Failure::new(LmStatus::InvalidArgument, "dimension must be positive"));
        }
        *slot = Box::into_raw(Box::new(LmEmbedder {
            inner: HashEmbedder::new(dim),
        }));
        Ok(())
    })
}

/// # Safety
/// `embedder` must come from [`lm_embedder_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lm_embedder_free(embedder: *mut LmEmbedder) {
    release(embedder);
}

/// # Safety
/// `embedder` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_embedder_dimension(embedder: *const LmEmbedder, out: *mut usize) -> LmStatus {
    guard(|| {
        *self::out(out, "out")? = borrow(embedder)?.inner.dimension();
        Ok(())
    })
}

/// Unit-norm embedding of `text` into `buf`. On `BufferTooSmall`, `out_len`
/// holds the required length.
///
/// # Safety
/// `text` must be NUL-terminated; `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_embedder_embed_text(
    embedder: *const LmEmbedder,
    text: *const c_char,
    buf: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> LmStatus {
    guard(|| {
        let e = borrow(embedder)?;
        let len = out(out_len, "out_len")?;
        let v = e.inner.embed_text(&string(text, "text")?)?;
        *len = v.len();
        if v.len() > cap {
            return Err(Failure::new(
                LmStatus::BufferTooSmall,
                format!("need {} doubles", v.len()),
            ));
        }
        if buf.is_null() {
            return Err(Failure::new(LmStatus::NullPointer, "null buf"));
        }
        std::ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

// ---------------------------------------------------------------- episodic store

/// Empty store with the given scoring constants.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_store_new(epsilon: f64, recency_tau: f64, out: *mut *mut LmStore) -> LmStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let config = RetrievalConfig { epsilon, recency_tau };
        config.validate()?;
        *slot = Box::into_raw(Box::new(LmStore {
            inner: EpisodicStore::new(),
            config,
        }));
        Ok(())
    })
}

/// # Safety
/// `store` must come from [`lm_store_new`] or [`lm_store_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lm_store_free(store: *mut LmStore) {
    release(store);
}

/// # Safety
/// `store` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_store_len(store: *const LmStore, out: *mut usize) -> LmStatus {
    guard(|| {
        *self::out(out, "out")? = borrow(store)?.inner.len();
        Ok(())
    })
}

/// Record an event. `image_feature` may be null when `image_len` is 0.
///
/// # Safety
/// Strings must be NUL-terminated; feature pointers must hold the stated
/// number of doubles; `location` must hold 3.
#[no_mangle]
pub unsafe extern "C" fn lm_store_record(
    store: *mut LmStore,
    time: f64,
    location: *const f64,
    place: *const c_char,
    text: *const c_char,
    text_feature: *const f64,
    text_len: usize,
    image_feature: *const f64,
    image_len: usize,
    out_id: *mut u64,
) -> LmStatus {
    guard(|| {
        let s = borrow_mut(store)?;
        let id_slot = out(out_id, "out_id")?;
        let loc = floats(location, 3, "location")?;
        let id = s.inner.record(NewEvent {
            time,
            location: [loc[0], loc[1], loc[2]],
            place: string(place, "place")?,
            text: string(text, "text")?,
            text_feature: floats(text_feature, text_len, "text_feature")?,
            image_feature: optional_floats(image_feature, image_len, "image_feature")?,
        })?;
        *id_slot = id;
        Ok(())
    })
}

/// Top-k retrieval. Writes up to `cap` event ids, best first, and the count
/// to `out_count`. Access times of the returned events advance to the query
/// time, so the call mutates the store.
///
/// # Safety
/// `query` must be valid with its feature pointers; `out_ids` must hold
/// `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn lm_store_retrieve(
    store: *mut LmStore,
    query: *const LmQuery,
    out_ids: *mut u64,
    cap: usize,
    out_count: *mut usize,
) -> LmStatus {
    guard(|| {
        let s = borrow_mut(store)?;
        let q = borrow(query)?;
        let count = out(out_count, "out_count")?;
        if q.k > cap {
            *count = q.k;
            return Err(Failure::new(
                LmStatus::BufferTooSmall,
                format!("k = {} exceeds cap {cap}", q.k),
            ));
        }
        if out_ids.is_null() && cap > 0 {
            return Err(Failure::new(LmStatus::NullPointer, "null out_ids"));
        }
        let query = MemoryQuery {
            time: q.time,
            location: q.location,
            text: String::new(),
            text_feature: floats(q.text_feature, q.text_len, "text_feature")?,
            image_feature: optional_floats(q.image_feature, q.image_len, "image_feature")?,
            k: q.k,
        };
        let hits = s.inner.retrieve(&query, &s.config)?;
        let n = hits.len().min(cap);
        for (i, h) in hits.iter().take(n).enumerate() {
            *out_ids.add(i) = h.event.id;
        }
        *count = n;
        Ok(())
    })
}

/// Write the store as JSON lines.
///
/// # Safety
/// `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lm_store_save(store: *const LmStore, path: *const c_char) -> LmStatus {
    guard(|| {
        let s = borrow(store)?;
        let path = string(path, "path")?;
        let f = File::create(&path).map_err(|e| Failure::new(LmStatus::Io, format!("{path}: {e}")))?;
        s.inner.write_jsonl(BufWriter::new(f))?;
        Ok(())
    })
}

/// Read a store written by [`lm_store_save`].
///
/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_store_load(
    path: *const c_char,
    epsilon: f64,
    recency_tau: f64,
    out: *mut *mut LmStore,
) -> LmStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let config = RetrievalConfig { epsilon, recency_tau };
        config.validate()?;
        let path = string(path, "path")?;
        let f = File::open(&path).map_err(|e| Failure::new(LmStatus::Io, format!("{path}: {e}")))?;
        let inner = EpisodicStore::read_jsonl(BufReader::new(f))?;
        *slot = Box::into_raw(Box::new(LmStore { inner, config }));
        Ok(())
    })
}

// ---------------------------------------------------------------- occupancy map

/// All-unknown map with default planner weights.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_map_new(
    width: usize,
    height: usize,
    resolution: f64,
    origin_x: f64,
    origin_y: f64,
    out: *mut *mut LmMap,
) -> LmStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        if width == 0 || height == 0 || !(resolution > 0.0) {
            return Err(Failure::new(
                LmStatus::InvalidArgument,
                "map needs positive size and resolution",
            ));
        }
        *slot = Box::into_raw(Box::new(LmMap {
            inner: OccupancyMap::unknown([origin_x, origin_y], resolution, width, height),
            weights: NavWeights::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `map` must come from [`lm_map_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lm_map_free(map: *mut LmMap) {
    release(map);
}

fn cell_in(map: &OccupancyMap, x: usize, y: usize) -> Result<MapCell, Failure> {
    if x >= map.width() || y >= map.height() {
        return Err(Failure::new(
            LmStatus::OutOfBounds,
            format!("cell ({x},{y}) is outside the map"),
        ));
    }
    Ok(MapCell::new(x, y))
}

/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_map_set_state(map: *mut LmMap, x: usize, y: usize, state: LmCellState) -> LmStatus {
    guard(|| {
        let m = borrow_mut(map)?;
        let c = cell_in(&m.inner, x, y)?;
        m.inner.set(c, state.into());
        Ok(())
    })
}

/// # Safety
/// `map` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lm_map_get_state(map: *const LmMap, x: usize, y: usize, out: *mut LmCellState) -> LmStatus {
    guard(|| {
        let m = borrow(map)?;
        let slot = self::out(out, "out")?;
        *slot = m.inner.state(cell_in(&m.inner, x, y)?).into();
        Ok(())
    })
}

/// Override the planner's per-state base costs and proximity penalty.
/// Obstacles stay impassable.
///
/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_map_set_weights(
    map: *mut LmMap,
    free_cost: f64,
    unknown_cost: f64,
    proximity_coeff: f64,
    proximity_radius: usize,
) -> LmStatus {
    guard(|| {
        let m = borrow_mut(map)?;
        let w = NavWeights {
            free_cost,
            unknown_cost,
            proximity_coeff,
            proximity_radius,
        };
        w.validate()?;
        m.weights = w;
        Ok(())
    })
}

/// Minimum-cost 8-connected path. Waypoints are written as interleaved
/// `x, y` pairs into `out_cells` (room for `cap` pairs); `out_len` receives
/// the number of waypoints, or the required count on `BufferTooSmall`.
///
/// # Safety
/// `out_cells` must hold `2 * cap` entries; other out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_map_plan(
    map: *const LmMap,
    start_x: usize,
    start_y: usize,
    goal_x: usize,
    goal_y: usize,
    out_cells: *mut usize,
    cap: usize,
    out_len: *mut usize,
    out_cost: *mut f64,
) -> LmStatus {
    guard(|| {
        let m = borrow(map)?;
        let len = out(out_len, "out_len")?;
        let cost = out(out_cost, "out_cost")?;
        let start = cell_in(&m.inner, start_x, start_y)?;
        let goal = cell_in(&m.inner, goal_x, goal_y)?;
        let path = plan(&m.inner, start, goal, &m.weights, 0.0)?;
        *len = path.waypoints.len();
        *cost = path.total_cost;
        if path.waypoints.len() > cap {
            return Err(Failure::new(
                LmStatus::BufferTooSmall,
                format!("need room for {} waypoints", path.waypoints.len()),
            ));
        }
        if out_cells.is_null() {
            return Err(Failure::new(LmStatus::NullPointer, "null out_cells"));
        }
        for (i, c) in path.waypoints.iter().enumerate() {
            *out_cells.add(2 * i) = c.x;
            *out_cells.add(2 * i + 1) = c.y;
        }
        Ok(())
    })
}
