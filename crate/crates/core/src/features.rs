//! Motion descriptors computed from dense optical flow.
//!
//! A frame's flow is summarised by a histogram of flow orientations weighted
//! by flow magnitude (HOOF). Pooling that histogram over an `M x M` grid of
//! cells plus the whole frame gives the SPP-HOOF vector, and a clip's motion
//! feature is the mean of its frames' SPP-HOOF vectors. The dynamics score of
//! a clip is its mean flow magnitude.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense optical flow for one frame, `(u, v)` displacements in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "flow field must be at least 1x1, got {width}x{height}"
            )));
        }
        if vectors.len() != width * height {
            return Err(Error::invalid(format!(
                "flow field {width}x{height} needs {} vectors, got {}",
                width * height,
                vectors.len()
            )));
        }
        Ok(FlowField { width, height, vectors })
    }

    /// A field where every pixel carries the same displacement.
    pub fn uniform(width: usize, height: usize, uv: [f64; 2]) -> Result<Self> {
        FlowField::new(width, height, vec![uv; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        self.vectors[y * self.width + x]
    }

    /// Every vector multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            vectors: self.vectors.iter().map(|&[u, v]| [u * alpha, v * alpha]).collect(),
        }
    }
}

/// Magnitude-weighted orientation histogram. Sums to 1, or is all zeros when
/// the flow it was built from had no motion at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram(Vec<f64>);

impl Histogram {
    pub fn bins(&self) -> &[f64] {
        &self.0
    }

    pub fn bin_count(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// SPP-HOOF vector of dimension `bins * (pyramid^2 + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionFeature(Vec<f64>);

impl MotionFeature {
    pub fn new(values: Vec<f64>) -> Self {
        MotionFeature(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Expected motion feature dimension for a histogram/pyramid configuration.
pub fn motion_dim(bins: usize, pyramid_m: usize) -> usize {
    bins * (pyramid_m * pyramid_m + 1)
}

/// Per-clip record: ingested semantic descriptor, motion feature and dynamics score.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub clip_id: String,
    pub semantic: Vec<f64>,
    pub motion: MotionFeature,
    pub dynamics: f64,
}

/// Orientation bin of a non-zero flow vector. Bins are half-open over
/// `[0, 2pi)`, so a boundary angle lands in the higher bin and `2pi` wraps to 0.
#[inline]
fn orientation_bin(u: f64, v: f64, bins: usize) -> usize {
    let mut angle = v.atan2(u);
    if angle < 0.0 {
        angle += TAU;
    }
    let idx = (angle / TAU * bins as f64).floor() as usize;
    if idx >= bins {
        0
    } else {
        idx
    }
}

fn accumulate(flow: &FlowField, xs: std::ops::Range<usize>, ys: std::ops::Range<usize>, bins: usize) -> Histogram {
    let mut hist = vec![0.0; bins];
    for y in ys {
        for x in xs.clone() {
            let [u, v] = flow.at(x, y);
            let m = u.hypot(v);
            if m > 0.0 {
                hist[orientation_bin(u, v, bins)] += m;
            }
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|h| *h /= total);
    }
    Histogram(hist)
}

/// Histogram of oriented optical flow over the whole field.
pub fn hoof(flow: &FlowField, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    Ok(accumulate(flow, 0..flow.width, 0..flow.height, bins))
}

/// Cell HOOFs of an `M x M` grid in row-major order, followed by the
/// whole-field HOOF. Cell `(r, c)` spans columns
/// `floor(c*W/M)..floor((c+1)*W/M)` and rows `floor(r*H/M)..floor((r+1)*H/M)`.
pub fn spp_hoof_frame(flow: &FlowField, bins: usize, pyramid_m: usize) -> Result<MotionFeature> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    if pyramid_m == 0 {
        return Err(Error::invalid("pyramid size must be at least 1"));
    }
    if flow.width < pyramid_m || flow.height < pyramid_m {
        return Err(Error::invalid(format!(
            "flow field {}x{} is smaller than the {pyramid_m}x{pyramid_m} pyramid grid",
            flow.width, flow.height
        )));
    }
    let col_edge = |c: usize| c * flow.width / pyramid_m;
    let row_edge = |r: usize| r * flow.height / pyramid_m;

    let mut out = Vec::with_capacity(motion_dim(bins, pyramid_m));
    for r in 0..pyramid_m {
        for c in 0..pyramid_m {
            let cell = accumulate(flow, col_edge(c)..col_edge(c + 1), row_edge(r)..row_edge(r + 1), bins);
            out.extend(cell.into_inner());
        }
    }
    out.extend(hoof(flow, bins)?.into_inner());
    Ok(MotionFeature(out))
}

/// Mean of the per-frame SPP-HOOF vectors of a clip.
pub fn clip_motion_feature(frames: &[FlowField], bins: usize, pyramid_m: usize) -> Result<MotionFeature> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("clip has no flow frames"))?;
    if let Some((k, f)) = frames
        .iter()
        .enumerate()
        .find(|(_, f)| f.width != first.width || f.height != first.height)
    {
        return Err(Error::invalid(format!(
            "frame {k} is {}x{}, expected {}x{}",
            f.width, f.height, first.width, first.height
        )));
    }

    let mut sum = vec![0.0; motion_dim(bins, pyramid_m)];
    for frame in frames {
        let s = spp_hoof_frame(frame, bins, pyramid_m)?;
        sum.iter_mut().zip(s.values()).for_each(|(a, b)| *a += b);
    }
    let l = frames.len() as f64;
    sum.iter_mut().for_each(|a| *a /= l);
    Ok(MotionFeature(sum))
}

/// Mean flow magnitude over every pixel of every frame.
pub fn dynamics_score(frames: &[FlowField]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::invalid("clip has no flow frames"));
    }
    let (total, count) = frames.iter().fold((0.0, 0usize), |(t, n), f| {
        let s: f64 = f.vectors.iter().map(|&[u, v]| u.hypot(v)).sum();
        (t + s, n + f.vectors.len())
    });
    Ok(total / count as f64)
}
