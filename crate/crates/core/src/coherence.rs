//! Two-stream coherence between clips.
//!
//! The semantic and motion streams each score the remaining clips with a
//! softmax; a convex combination of the two probability vectors is the
//! coherence of each candidate following the current prefix.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::features::ClipFeatures;
use crate::rnn::{forward_step, next_clip_probs, RnnParams};

/// Semantic and motion streams plus the fusion weight on the semantic side.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStreamModel {
    pub semantic: RnnParams,
    pub motion: RnnParams,
    lambda: f64,
}

impl TwoStreamModel {
    pub fn new(semantic: RnnParams, motion: RnnParams, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(TwoStreamModel {
            semantic,
            motion,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Input dimensions `(semantic, motion)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.semantic.input_dim(), self.motion.input_dim())
    }

    /// Checks that the streams accept the corpus feature dimensions.
    pub fn check_clips(&self, clips: &[ClipFeatures]) -> Result<()> {
        for clip in clips {
            if clip.semantic.len() != self.semantic.input_dim() {
                return Err(Error::invalid(format!(
                    "semantic stream expects dimension {}, clip {} has {}",
                    self.semantic.input_dim(),
                    clip.clip_id,
                    clip.semantic.len()
                )));
            }
            if clip.motion.dim() != self.motion.input_dim() {
                return Err(Error::invalid(format!(
                    "motion stream expects dimension {}, clip {} has {}",
                    self.motion.input_dim(),
                    clip.clip_id,
                    clip.motion.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Scores for a set of candidate clip indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScores {
    pub candidates: Vec<usize>,
    pub values: Vec<f64>,
}

impl CandidateScores {
    /// Index of the best candidate; ties go to the lowest clip index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (&c, &v) in self.candidates.iter().zip(&self.values) {
            match best {
                Some((bc, bv)) if v < bv || (v == bv && c > bc) => {}
                _ => best = Some((c, v)),
            }
        }
        best.map(|(c, _)| c)
    }
}

/// Per candidate, `lambda * p_semantic + (1 - lambda) * p_motion`.
pub fn fused_coherence(
    p_semantic: &CandidateScores,
    p_motion: &CandidateScores,
    lambda: f64,
) -> Result<CandidateScores> {
    if p_semantic.candidates != p_motion.candidates
        || p_semantic.values.len() != p_semantic.candidates.len()
        || p_motion.values.len() != p_motion.candidates.len()
    {
        return Err(Error::invalid(
            "semantic and motion probabilities cover different candidates",
        ));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let values = p_semantic
        .values
        .iter()
        .zip(&p_motion.values)
        .map(|(f, s)| lambda * f + (1.0 - lambda) * s)
        .collect();
    Ok(CandidateScores {
        candidates: p_semantic.candidates.clone(),
        values,
    })
}

/// Index of the clip with the smallest dynamics score, lowest index on ties.
pub fn select_initial_clip(clips: &[ClipFeatures]) -> Result<usize> {
    argmin_dynamics(clips.iter().map(|c| c.dynamics))
}

pub(crate) fn argmin_dynamics(phi: impl IntoIterator<Item = f64>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in phi.into_iter().enumerate() {
        if p.is_nan() {
            return Err(Error::numeric(format!("dynamics score of clip {i} is NaN")));
        }
        if best.is_none_or(|(_, b)| p < b) {
            best = Some((i, p));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::invalid("no clips to choose from"))
}

/// A permutation of clip indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipOrder(Vec<usize>);

impl ClipOrder {
    pub fn new(order: Vec<usize>, n: usize) -> Result<Self> {
        if order.len() != n {
            return Err(Error::invalid(format!(
                "ordering has {} entries, expected {n}",
                order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!(
                    "ordering {order:?} is not a permutation of 0..{n}"
                )));
            }
        }
        Ok(ClipOrder(order))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

/// Incremental state of both streams along a growing prefix.
struct StreamState<'a> {
    model: &'a TwoStreamModel,
    clips: &'a [ClipFeatures],
    h_sem: Array1<f64>,
    h_mot: Array1<f64>,
    y_sem: Array1<f64>,
    y_mot: Array1<f64>,
}

impl<'a> StreamState<'a> {
    fn new(model: &'a TwoStreamModel, clips: &'a [ClipFeatures]) -> Self {
        StreamState {
            model,
            clips,
            h_sem: Array1::zeros(model.semantic.hidden_dim()),
            h_mot: Array1::zeros(model.motion.hidden_dim()),
            y_sem: Array1::zeros(model.semantic.input_dim()),
            y_mot: Array1::zeros(model.motion.input_dim()),
        }
    }

    fn consume(&mut self, clip: usize) -> Result<()> {
        let c = &self.clips[clip];
        let (h, y) = forward_step(
            &self.model.semantic,
            ArrayView1::from(&c.semantic[..]),
            self.h_sem.view(),
        )?;
        self.h_sem = h;
        self.y_sem = y;
        let (h, y) = forward_step(
            &self.model.motion,
            ArrayView1::from(c.motion.values()),
            self.h_mot.view(),
        )?;
        self.h_mot = h;
        self.y_mot = y;
        Ok(())
    }

    fn scores(&self, candidates: &[usize]) -> Result<CandidateScores> {
        let sem: Vec<&[f64]> = candidates.iter().map(|&i| &self.clips[i].semantic[..]).collect();
        let mot: Vec<&[f64]> = candidates.iter().map(|&i| self.clips[i].motion.values()).collect();
        let p_sem = CandidateScores {
            candidates: candidates.to_vec(),
            values: next_clip_probs(self.y_sem.view(), &sem)?,
        };
        let p_mot = CandidateScores {
            candidates: candidates.to_vec(),
            values: next_clip_probs(self.y_mot.view(), &mot)?,
        };
        fused_coherence(&p_sem, &p_mot, self.model.lambda)
    }
}

/// Baseline composition: start from the calmest clip and repeatedly append the
/// remaining clip with the highest fused coherence.
pub fn greedy_compose(model: &TwoStreamModel, clips: &[ClipFeatures]) -> Result<ClipOrder> {
    let first = select_initial_clip(clips)?;
    model.check_clips(clips)?;
    let n = clips.len();
    let mut order = vec![first];
    let mut remaining: Vec<usize> = (0..n).filter(|&i| i != first).collect();
    let mut state = StreamState::new(model, clips);
    state.consume(first)?;

    while !remaining.is_empty() {
        let scores = state.scores(&remaining)?;
        let next = scores.argmax().expect("remaining is non-empty");
        remaining.retain(|&i| i != next);
        order.push(next);
        if !remaining.is_empty() {
            state.consume(next)?;
        }
    }
    ClipOrder::new(order, n)
}

/// Square matrix of fused coherence. Row `j` holds the probabilities of every
/// other clip following the prefix that ends at clip `j`; the diagonal is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CoherenceMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {r} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("coherence entry {x} is not finite")));
        }
        Ok(CoherenceMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Coherence of `candidate` following the prefix ending at `context`.
    #[inline]
    pub fn get(&self, context: usize, candidate: usize) -> f64 {
        self.data[context * self.n + candidate]
    }

    pub fn row(&self, context: usize) -> &[f64] {
        &self.data[context * self.n..(context + 1) * self.n]
    }

    /// One line per row, comma separated, shortest round-trip decimal form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.n {
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(r, line)| {
                line.split(',')
                    .map(|tok| {
                        tok.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::invalid(format!("row {r}: cannot parse {tok:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        CoherenceMatrix::from_rows(rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CoherenceMatrix::from_csv(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Runs both streams along `rnn_order` and, after each prefix, scores every
/// other clip (selected or not) to fill the row of the prefix's last clip.
pub fn coherence_matrix(
    model: &TwoStreamModel,
    clips: &[ClipFeatures],
    rnn_order: &[usize],
) -> Result<CoherenceMatrix> {
    let n = clips.len();
    let order = ClipOrder::new(rnn_order.to_vec(), n)?;
    model.check_clips(clips)?;
    let mut data = vec![0.0; n * n];
    let mut state = StreamState::new(model, clips);
    for &j in order.as_slice() {
        state.consume(j)?;
        let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
        if others.is_empty() {
            continue;
        }
        let scores = state.scores(&others)?;
        for (&i, &v) in scores.candidates.iter().zip(&scores.values) {
            data[j * n + i] = v;
        }
    }
    Ok(CoherenceMatrix { n, data })
}
