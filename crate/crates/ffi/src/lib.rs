//! C ABI over `vstory-core`.
//!
//! Every function returns a [`VsStatus`]; on failure the message is kept per
//! thread and read with [`vs_last_error_message`]. Matrices are row-major
//! `double` arrays. Flow frames are interleaved `(u, v)` pairs, `width *
//! height * 2` values per frame, frames stored back to back. Output buffers
//! are caller-allocated and their lengths are checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vstory_core::coherence::{coherence_matrix, greedy_compose, TwoStreamModel};
use vstory_core::eval::{bradley_terry, PairwisePreferences, BT_MAX_ITERATIONS, BT_TOLERANCE};
use vstory_core::features::{
    clip_motion_feature, dynamics_score, hoof, motion_dim, spp_hoof_frame, ClipFeatures, FlowField, MotionFeature,
};
use vstory_core::formats::read_checkpoint;
use vstory_core::ranker::{greedy_rank, lazy_greedy_rank, StoryGraph};
use vstory_core::Error;

/// Result codes. `VS_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numeric = 3,
    IllPosed = 4,
    Format = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Two trained streams and their fusion weight.
pub struct VsModel {
    inner: TwoStreamModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(VsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) => VsStatus::InvalidInput,
            Error::Numeric(_) => VsStatus::Numeric,
            Error::IllPosed(_) => VsStatus::IllPosed,
            Error::Format { .. } | Error::Json { .. } => VsStatus::Format,
            Error::Io { .. } => VsStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            VsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(VsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn copy_out(dst: &mut [f64], src: &[f64]) -> Result<(), Failure> {
    if dst.len() < src.len() {
        return Err(Failure(
            VsStatus::BufferTooSmall,
            format!("output buffer holds {}, need {}", dst.len(), src.len()),
        ));
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

unsafe fn frames(uv: *const f64, width: usize, height: usize, count: usize) -> Result<Vec<FlowField>, Failure> {
    let per = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(2))
        .ok_or_else(|| Failure(VsStatus::InvalidInput, "frame size overflows".into()))?;
    let all = slice(uv, per * count, "flow")?;
    all.chunks_exact(per.max(1))
        .take(count)
        .map(|f| {
            let v = f.chunks_exact(2).map(|p| [p[0], p[1]]).collect();
            FlowField::new(width, height, v).map_err(Failure::from)
        })
        .collect()
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(VsStatus::InvalidInput, format!("{what} is not UTF-8")))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn vs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Length of the motion feature for `bins` and a `pyramid` x `pyramid` grid.
#[no_mangle]
pub extern "C" fn vs_motion_dim(bins: usize, pyramid: usize) -> usize {
    motion_dim(bins, pyramid)
}

/// Magnitude-weighted orientation histogram of one flow frame into `out[bins]`.
///
/// # Safety
/// `uv` must hold `width * height * 2` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn vs_hoof(
    uv: *const f64,
    width: usize,
    height: usize,
    bins: usize,
    out: *mut f64,
    out_len: usize,
) -> VsStatus {
    guard(|| {
        let f = frames(uv, width, height, 1)?;
        let h = hoof(&f[0], bins)?;
        copy_out(slice_mut(out, out_len, "out")?, h.bins())
    })
}

/// Pyramid HOOF of one frame into `out[vs_motion_dim(bins, pyramid)]`.
///
/// # Safety
/// As for [`vs_hoof`].
#[no_mangle]
pub unsafe extern "C" fn vs_spp_hoof_frame(
    uv: *const f64,
    width: usize,
    height: usize,
    bins: usize,
    pyramid: usize,
    out: *mut f64,
    out_len: usize,
) -> VsStatus {
    guard(|| {
        let f = frames(uv, width, height, 1)?;
        let m = spp_hoof_frame(&f[0], bins, pyramid)?;
        copy_out(slice_mut(out, out_len, "out")?, m.values())
    })
}

/// Clip motion feature: the mean pyramid HOOF over `frame_count` frames.
///
/// # Safety
/// `uv` must hold `frame_count * width * height * 2` values.
#[no_mangle]
pub unsafe extern "C" fn vs_clip_motion_feature(
    uv: *const f64,
    width: usize,
    height: usize,
    frame_count: usize,
    bins: usize,
    pyramid: usize,
    out: *mut f64,
    out_len: usize,
) -> VsStatus {
    guard(|| {
        let f = frames(uv, width, height, frame_count)?;
        let m = clip_motion_feature(&f, bins, pyramid)?;
        copy_out(slice_mut(out, out_len, "out")?, m.values())
    })
}

/// Mean flow magnitude over every pixel of every frame.
///
/// # Safety
/// `uv` as for [`vs_clip_motion_feature`]; `out` points to one double.
#[no_mangle]
pub unsafe extern "C" fn vs_dynamics_score(
    uv: *const f64,
    width: usize,
    height: usize,
    frame_count: usize,
    out: *mut f64,
) -> VsStatus {
    guard(|| {
        let f = frames(uv, width, height, frame_count)?;
        let phi = dynamics_score(&f)?;
        *slice_mut(out, 1, "out")?.first_mut().unwrap() = phi;
        Ok(())
    })
}

/// Loads a model from two checkpoint files. Release it with [`vs_model_free`].
///
/// # Safety
/// Paths must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vs_model_load(
    semantic_path: *const c_char,
    motion_path: *const c_char,
    lambda: f64,
    out: *mut *mut VsModel,
) -> VsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (sem, _) = read_checkpoint(path_arg(semantic_path, "semantic_path")?)?;
        let (mot, _) = read_checkpoint(path_arg(motion_path, "motion_path")?)?;
        let inner = TwoStreamModel::new(sem, mot, lambda)?;
        *out = Box::into_raw(Box::new(VsModel { inner }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`vs_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vs_model_free(model: *mut VsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimensions of the semantic and motion streams.
///
/// # Safety
/// `model` must be live; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vs_model_dims(
    model: *const VsModel,
    semantic_dim: *mut usize,
    motion_dim: *mut usize,
) -> VsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let (s, mo) = m.inner.dims();
        *slice_mut(semantic_dim, 1, "semantic_dim")?.first_mut().unwrap() = s;
        *slice_mut(motion_dim, 1, "motion_dim")?.first_mut().unwrap() = mo;
        Ok(())
    })
}

unsafe fn clips(
    model: &VsModel,
    n: usize,
    semantic: *const f64,
    motion: *const f64,
    dynamics: *const f64,
) -> Result<Vec<ClipFeatures>, Failure> {
    let (ds, dm) = model.inner.dims();
    let sem = slice(semantic, n * ds, "semantic")?;
    let mot = slice(motion, n * dm, "motion")?;
    let phi = slice(dynamics, n, "dynamics")?;
    Ok((0..n)
        .map(|i| ClipFeatures {
            clip_id: i.to_string(),
            semantic: sem[i * ds..(i + 1) * ds].to_vec(),
            motion: MotionFeature::new(mot[i * dm..(i + 1) * dm].to_vec()),
            dynamics: phi[i],
        })
        .collect())
}

/// Two-stream greedy order of `n` clips into `out_order[n]`. `semantic` is
/// `n x semantic_dim`, `motion` is `n x motion_dim` (see [`vs_model_dims`]).
///
/// # Safety
/// Arrays must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn vs_greedy_compose(
    model: *const VsModel,
    n: usize,
    semantic: *const f64,
    motion: *const f64,
    dynamics: *const f64,
    out_order: *mut usize,
) -> VsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = clips(m, n, semantic, motion, dynamics)?;
        let order = greedy_compose(&m.inner, &c)?;
        slice_mut(out_order, n, "out_order")?.copy_from_slice(order.as_slice());
        Ok(())
    })
}

/// Coherence matrix along `rnn_order` into `out[n * n]`: row `j` is the
/// context ending at clip `j`, column `i` the candidate clip `i`.
///
/// # Safety
/// Arrays as for [`vs_greedy_compose`]; `rnn_order` holds `n` indices.
#[no_mangle]
pub unsafe extern "C" fn vs_coherence_matrix(
    model: *const VsModel,
    n: usize,
    semantic: *const f64,
    motion: *const f64,
    dynamics: *const f64,
    rnn_order: *const usize,
    out: *mut f64,
) -> VsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = clips(m, n, semantic, motion, dynamics)?;
        let order = slice(rnn_order, n, "rnn_order")?;
        let cm = coherence_matrix(&m.inner, &c, order)?;
        let dst = slice_mut(out, n * n, "out")?;
        for j in 0..n {
            dst[j * n..(j + 1) * n].copy_from_slice(cm.row(j));
        }
        Ok(())
    })
}

/// Story ranking. `relation[i * n + j]` is `d(v_i, v_j)`, the coherence of
/// clip `i` given clip `j` as context. Writes the order to `out_order[n]` and,
/// when `out_trajectory` is not NULL, the prefix objective values to
/// `out_trajectory[n]`. `lazy` selects cached gain evaluation; both give the
/// same order.
///
/// # Safety
/// Arrays must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn vs_rank(
    relation: *const f64,
    dynamics: *const f64,
    n: usize,
    gamma: f64,
    lazy: bool,
    out_order: *mut usize,
    out_trajectory: *mut f64,
) -> VsStatus {
    guard(|| {
        let rel = slice(relation, n * n, "relation")?;
        let phi = slice(dynamics, n, "dynamics")?;
        let rows = rel.chunks(n.max(1)).take(n).map(<[f64]>::to_vec).collect();
        let g = StoryGraph::new(rows, phi.to_vec(), gamma)?;
        let r = if lazy { lazy_greedy_rank(&g)? } else { greedy_rank(&g)? };
        slice_mut(out_order, n, "out_order")?.copy_from_slice(r.order.as_slice());
        if !out_trajectory.is_null() {
            slice_mut(out_trajectory, n, "out_trajectory")?.copy_from_slice(&r.objective_trajectory);
        }
        Ok(())
    })
}

/// Bradley-Terry scores from `wins[a * n + b]` (times `a` was preferred over
/// `b`) into `out_scores[n]`, normalised to sum 1. `out_smoothed` (nullable)
/// reports whether pseudo-counts were added.
///
/// # Safety
/// Arrays must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn vs_bradley_terry(
    wins: *const u64,
    n: usize,
    out_scores: *mut f64,
    out_smoothed: *mut bool,
) -> VsStatus {
    guard(|| {
        let w = slice(wins, n * n, "wins")?;
        let prefs = PairwisePreferences {
            items: (0..n).map(|i| i.to_string()).collect(),
            wins: w.chunks(n.max(1)).take(n).map(<[u64]>::to_vec).collect(),
        };
        let bt = bradley_terry(&prefs, BT_MAX_ITERATIONS, BT_TOLERANCE)?;
        slice_mut(out_scores, n, "out_scores")?.copy_from_slice(&bt.scores);
        if !out_smoothed.is_null() {
            *out_smoothed = bt.smoothed;
        }
        Ok(())
    })
}
