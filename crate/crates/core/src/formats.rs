//! On-disk formats: Middlebury `.flo` flow, raw semantic feature blobs, the
//! corpus manifest, the binary feature store and stream checkpoints.
//!
//! All binary integers and floats are little-endian.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::{ClipFeatures, FlowField, MotionFeature};
use crate::rnn::{RnnParams, TrainConfig};

pub const FLO_TAG: f32 = 202021.25;
pub const STORE_MAGIC: &[u8; 4] = b"VSFS";
pub const STORE_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VSRN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Little-endian cursor over a byte slice.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Cursor { bytes, pos: 0, path }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.path,
                    format!("truncated while reading {what} at byte {}", self.pos),
                )
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.path, format!("{what} length overflows")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn push_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn push_len(out: &mut Vec<u8>, n: usize, what: &str) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::invalid(format!("{what} {n} does not fit in u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

/// Parses a Middlebury `.flo` buffer. `path` is only used in error messages.
pub fn parse_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    let mut cur = Cursor::new(bytes, path);
    let tag = cur.f32("tag")?;
    if tag != FLO_TAG {
        return Err(Error::format(path, format!("bad .flo tag {tag}, expected {FLO_TAG}")));
    }
    let width = cur.i32("width")?;
    let height = cur.i32("height")?;
    if width <= 0 || height <= 0 {
        return Err(Error::format(path, format!("bad .flo size {width}x{height}")));
    }
    let (w, h) = (width as usize, height as usize);
    let data = cur.f32s(w * h * 2, "flow vectors")?;
    cur.finish()?;
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::format(path, "flow contains non-finite values"));
    }
    let vectors = data.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    FlowField::new(w, h, vectors).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    parse_flo(&read_file(path)?, path)
}

pub fn encode_flo(flow: &FlowField) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + flow.vectors().len() * 8);
    out.extend_from_slice(&FLO_TAG.to_le_bytes());
    for d in [flow.width(), flow.height()] {
        let d = i32::try_from(d).map_err(|_| Error::invalid("flow dimension exceeds i32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    push_f32s(&mut out, flow.vectors().iter().flat_map(|&[u, v]| [u, v]));
    Ok(out)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    write_atomic(path, &encode_flo(flow)?)
}

/// Raw `f32` semantic vector of exactly `dim` entries, no header.
pub fn read_semantic(path: &Path, dim: usize) -> Result<Vec<f64>> {
    let bytes = read_file(path)?;
    if bytes.len() != dim * 4 {
        return Err(Error::format(
            path,
            format!(
                "semantic file has {} bytes, expected {} for dimension {dim}",
                bytes.len(),
                dim * 4
            ),
        ));
    }
    let mut cur = Cursor::new(&bytes, path);
    let v = cur.f32s(dim, "semantic vector")?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::format(path, "semantic vector contains non-finite values"));
    }
    Ok(v)
}

pub fn write_semantic(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = Vec::with_capacity(values.len() * 4);
    push_f32s(&mut out, values.iter().copied());
    write_atomic(path, &out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestClip {
    pub id: String,
    pub semantic: PathBuf,
    /// Flow files in frame order.
    pub flows: Vec<PathBuf>,
}

/// Corpus description: clips in temporal order with their input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub clips: Vec<ManifestClip>,
    pub semantic_dim: usize,
}

impl Manifest {
    /// Loads a manifest and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<(Manifest, Vec<u8>)> {
        let bytes = read_file(path)?;
        let mut m: Manifest = serde_json::from_slice(&bytes).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for clip in &mut m.clips {
            clip.semantic = base.join(&clip.semantic);
            for f in &mut clip.flows {
                *f = base.join(&*f);
            }
        }
        m.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok((m, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.semantic_dim == 0 {
            return Err(Error::invalid("semantic_dim must be positive"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for c in &self.clips {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::invalid(format!("duplicate clip id {:?}", c.id)));
            }
            if c.flows.is_empty() {
                return Err(Error::invalid(format!("clip {:?} lists no flow files", c.id)));
            }
        }
        Ok(())
    }
}

/// Resolved configuration plus content digests of the inputs an artifact was
/// built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: PipelineConfig,
    pub inputs: BTreeMap<String, String>,
}

/// Per-clip features of one corpus, in manifest (temporal) order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    pub clips: Vec<ClipFeatures>,
    pub provenance: Provenance,
}

impl FeatureStore {
    pub fn semantic_dim(&self) -> Option<usize> {
        self.clips.first().map(|c| c.semantic.len())
    }

    pub fn motion_dim(&self) -> Option<usize> {
        self.clips.first().map(|c| c.motion.dim())
    }

    /// Layout: magic `VSFS`, version u32, clip count u32, then per clip the id
    /// (u32 length + UTF-8), semantic dim u32 + f32 values, motion dim u32 +
    /// f32 values, and the dynamics score as f64. A u32-length-prefixed JSON
    /// provenance block closes the file.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        push_len(&mut out, self.clips.len(), "clip count")?;
        for c in &self.clips {
            push_len(&mut out, c.clip_id.len(), "id length")?;
            out.extend_from_slice(c.clip_id.as_bytes());
            push_len(&mut out, c.semantic.len(), "semantic dim")?;
            push_f32s(&mut out, c.semantic.iter().copied());
            push_len(&mut out, c.motion.dim(), "motion dim")?;
            push_f32s(&mut out, c.motion.values().iter().copied());
            out.extend_from_slice(&c.dynamics.to_le_bytes());
        }
        let json = serde_json::to_vec(&self.provenance).expect("provenance serializes");
        push_len(&mut out, json.len(), "provenance length")?;
        out.extend_from_slice(&json);
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut cur = Cursor::new(bytes, path);
        if cur.take(4, "magic")? != STORE_MAGIC {
            return Err(Error::format(path, "not a feature store (bad magic)"));
        }
        let version = cur.u32("version")?;
        if version != STORE_VERSION {
            return Err(Error::format(path, format!("unsupported store version {version}")));
        }
        let count = cur.u32("clip count")? as usize;
        let mut clips = Vec::with_capacity(count.min(1 << 16));
        for k in 0..count {
            let id_len = cur.u32("id length")? as usize;
            let clip_id = String::from_utf8(cur.take(id_len, "clip id")?.to_vec())
                .map_err(|_| Error::format(path, format!("clip {k} id is not UTF-8")))?;
            let sd = cur.u32("semantic dim")? as usize;
            let semantic = cur.f32s(sd, "semantic vector")?;
            let md = cur.u32("motion dim")? as usize;
            let motion = MotionFeature::new(cur.f32s(md, "motion vector")?);
            let dynamics = cur.f64("dynamics score")?;
            clips.push(ClipFeatures {
                clip_id,
                semantic,
                motion,
                dynamics,
            });
        }
        let plen = cur.u32("provenance length")? as usize;
        let provenance = serde_json::from_slice(cur.take(plen, "provenance")?).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cur.finish()?;

        if let Some(first) = clips.first() {
            let (sd, md) = (first.semantic.len(), first.motion.dim());
            if let Some(c) = clips.iter().find(|c| c.semantic.len() != sd || c.motion.dim() != md) {
                return Err(Error::format(
                    path,
                    format!("clip {} has mismatched feature dimensions", c.clip_id),
                ));
            }
        }
        Ok(FeatureStore { clips, provenance })
    }

    pub fn read(path: &Path) -> Result<Self> {
        FeatureStore::decode(&read_file(path)?, path)
    }
}

/// JSON metadata block of a checkpoint: the training configuration, with the
/// stream name and input digests alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(default)]
    pub stream: Option<String>,
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

/// Layout: magic `VSRN`, version u32, `D` u32, `H` u32, then `W_I` (H x D),
/// `W_H` (H x H) and `W_O` (D x H) as row-major f32, then a u32-length-prefixed
/// JSON [`CheckpointMeta`].
pub fn encode_checkpoint(params: &RnnParams, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let (d, h) = (params.input_dim(), params.hidden_dim());
    let mut out = Vec::with_capacity(16 + 4 * (2 * d * h + h * h));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    push_len(&mut out, d, "input dim")?;
    push_len(&mut out, h, "hidden dim")?;
    for m in [&params.w_in, &params.w_hh, &params.w_out] {
        push_f32s(&mut out, m.iter().copied());
    }
    let json = serde_json::to_vec(meta).expect("checkpoint metadata serializes");
    push_len(&mut out, json.len(), "metadata length")?;
    out.extend_from_slice(&json);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(RnnParams, CheckpointMeta)> {
    let mut cur = Cursor::new(bytes, path);
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let d = cur.u32("input dim")? as usize;
    let h = cur.u32("hidden dim")? as usize;
    let mut matrix = |rows: usize, cols: usize, what: &str| -> Result<Array2<f64>> {
        let v = cur.f32s(rows * cols, what)?;
        Ok(Array2::from_shape_vec((rows, cols), v).expect("length checked"))
    };
    let w_in = matrix(h, d, "W_I")?;
    let w_hh = matrix(h, h, "W_H")?;
    let w_out = matrix(d, h, "W_O")?;
    let mlen = cur.u32("metadata length")? as usize;
    let meta = serde_json::from_slice(cur.take(mlen, "metadata")?).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    cur.finish()?;
    let params = RnnParams::new(w_in, w_hh, w_out).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((params, meta))
}

pub fn read_checkpoint(path: &Path) -> Result<(RnnParams, CheckpointMeta)> {
    decode_checkpoint(&read_file(path)?, path)
}

/// Rounds weights to the `f32` values a checkpoint would hold.
pub fn quantize(params: &RnnParams) -> RnnParams {
    let q = |m: &Array2<f64>| m.mapv(|x| x as f32 as f64);
    RnnParams {
        w_in: q(&params.w_in),
        w_hh: q(&params.w_hh),
        w_out: q(&params.w_out),
    }
}
