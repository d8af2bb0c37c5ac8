//! End-to-end workflows shared by the CLI and the FFI layer: feature
//! extraction from a manifest, per-stream training, composition and
//! evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coherence::{coherence_matrix, greedy_compose, CoherenceMatrix, TwoStreamModel};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{
    adjacent_pair_scores, bradley_terry, dynamics_report, pairwise_roc, AdjacencyLabels, BtScores, DynamicsReport,
    DynamicsRow, PairwisePreferences, RocCurve, BT_MAX_ITERATIONS, BT_TOLERANCE,
};
use crate::features::{clip_motion_feature, dynamics_score, ClipFeatures, FlowField};
use crate::formats::{read_file, read_flo, read_semantic, sha256_hex, FeatureStore, Manifest, Provenance};
use crate::ranker::{lazy_greedy_rank, objective, StoryGraph};
use crate::rnn::{train, RnnParams, TrainOutcome};

/// Computes every clip's features from the files a manifest points at.
pub fn extract_features(manifest_path: &Path, config: &PipelineConfig) -> Result<FeatureStore> {
    config.validate()?;
    let (manifest, manifest_bytes) = Manifest::load(manifest_path)?;
    let mut data_digest = Sha256::new();
    let mut clips = Vec::with_capacity(manifest.clips.len());

    for entry in &manifest.clips {
        let sem_bytes = read_file(&entry.semantic)?;
        data_digest.update(entry.id.as_bytes());
        data_digest.update(sha256_hex(&sem_bytes).as_bytes());
        let semantic = read_semantic(&entry.semantic, manifest.semantic_dim)?;

        let mut frames: Vec<FlowField> = Vec::with_capacity(entry.flows.len());
        for path in &entry.flows {
            let flow = read_flo(path)?;
            if let Some(first) = frames.first() {
                if (flow.width(), flow.height()) != (first.width(), first.height()) {
                    return Err(Error::format(
                        path,
                        format!(
                            "frame is {}x{}, earlier frames of clip {} are {}x{}",
                            flow.width(),
                            flow.height(),
                            entry.id,
                            first.width(),
                            first.height()
                        ),
                    ));
                }
            }
            data_digest.update(sha256_hex(&read_file(path)?).as_bytes());
            frames.push(flow);
        }
        let motion = clip_motion_feature(&frames, config.bins, config.pyramid)
            .map_err(|e| Error::format(&entry.flows[0], format!("clip {}: {e}", entry.id)))?;
        let dynamics = dynamics_score(&frames)?;
        clips.push(ClipFeatures {
            clip_id: entry.id.clone(),
            semantic,
            motion,
            dynamics,
        });
    }
    info!("extracted features for {} clips", clips.len());

    let inputs = BTreeMap::from([
        ("manifest".to_string(), sha256_hex(&manifest_bytes)),
        ("clip_data".to_string(), hex::encode(data_digest.finalize())),
    ]);
    Ok(FeatureStore {
        clips,
        provenance: Provenance {
            config: config.clone(),
            inputs,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Semantic,
    Motion,
}

impl Stream {
    pub fn features<'a>(&self, clip: &'a ClipFeatures) -> &'a [f64] {
        match self {
            Stream::Semantic => &clip.semantic,
            Stream::Motion => clip.motion.values(),
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stream::Semantic => "semantic",
            Stream::Motion => "motion",
        })
    }
}

/// Trains one stream; each feature store is one video in temporal order.
pub fn train_stream(videos: &[FeatureStore], stream: Stream, config: &PipelineConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let seqs: Vec<Vec<&[f64]>> = videos
        .iter()
        .map(|s| s.clips.iter().map(|c| stream.features(c)).collect())
        .collect();
    train(&seqs, config.hidden, &config.train)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComposeMode {
    /// Greedy two-stream order only.
    Baseline,
    /// Greedy two-stream order rearranged by the story ranker.
    Ranked,
}

/// JSON ordering artifact written by `compose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingArtifact {
    /// Clip ids in composed order.
    pub order: Vec<String>,
    /// `"rnn-baseline"` or `"ranked"`.
    pub source: String,
    /// Objective gain of each appended clip along `order`.
    pub gains: Vec<f64>,
    /// Objective value of each prefix of `order`.
    pub objective_trajectory: Vec<f64>,
    pub gamma: f64,
    /// Clip ids in feature-store order; indexes the coherence matrix.
    pub clip_ids: Vec<String>,
    pub dynamics: Vec<DynamicsRow>,
    pub config: PipelineConfig,
    pub inputs: BTreeMap<String, String>,
}

impl OrderingArtifact {
    /// Order as indices into `clip_ids`.
    pub fn order_indices(&self) -> Result<Vec<usize>> {
        let pos: BTreeMap<&str, usize> = self
            .clip_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        self.order
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("ordered clip {id:?} is not among clip_ids")))
            })
            .collect()
    }

    /// Dynamics scores in `clip_ids` order.
    pub fn phi(&self) -> Result<Vec<f64>> {
        let mut phi = vec![f64::NAN; self.clip_ids.len()];
        let idx = self.order_indices()?;
        if self.dynamics.len() != idx.len() {
            return Err(Error::invalid("dynamics rows do not match the order"));
        }
        for (row, &i) in self.dynamics.iter().zip(&idx) {
            phi[i] = row.phi;
        }
        Ok(phi)
    }
}

#[derive(Debug, Clone)]
pub struct Composition {
    pub artifact: OrderingArtifact,
    /// Computed along the two-stream greedy order.
    pub coherence: CoherenceMatrix,
}

/// Composes a story from a feature store with a pair of trained streams.
pub fn compose(
    store: &FeatureStore,
    semantic: RnnParams,
    motion: RnnParams,
    config: &PipelineConfig,
    mode: ComposeMode,
    inputs: BTreeMap<String, String>,
) -> Result<Composition> {
    config.validate()?;
    let clips = &store.clips;
    if clips.is_empty() {
        return Err(Error::invalid("feature store has no clips"));
    }
    for (stream, params, dim) in [
        (Stream::Semantic, &semantic, store.semantic_dim()),
        (Stream::Motion, &motion, store.motion_dim()),
    ] {
        let dim = dim.unwrap_or(0);
        if params.input_dim() != dim {
            return Err(Error::invalid(format!(
                "{stream} checkpoint expects dimension {}, feature store has {dim}",
                params.input_dim()
            )));
        }
    }
    let model = TwoStreamModel::new(semantic, motion, config.lambda)?;
    let rnn_order = greedy_compose(&model, clips)?;
    let coherence = coherence_matrix(&model, clips, rnn_order.as_slice())?;
    let phi: Vec<f64> = clips.iter().map(|c| c.dynamics).collect();
    let graph = StoryGraph::from_coherence(&coherence, phi.clone(), config.gamma)?;

    let (order, gains, trajectory, source) = match mode {
        ComposeMode::Baseline => {
            let order = rnn_order.into_inner();
            let trajectory = (1..=order.len())
                .map(|k| objective(&order[..k], &graph))
                .collect::<Result<Vec<_>>>()?;
            let gains = trajectory.windows(2).map(|w| w[1] - w[0]).collect();
            (order, gains, trajectory, "rnn-baseline")
        }
        ComposeMode::Ranked => {
            let r = lazy_greedy_rank(&graph)?;
            (r.order.into_inner(), r.gains, r.objective_trajectory, "ranked")
        }
    };

    let ids: Vec<String> = clips.iter().map(|c| c.clip_id.clone()).collect();
    let report = dynamics_report(&order, &ids, &phi)?;
    let artifact = OrderingArtifact {
        order: order.iter().map(|&i| ids[i].clone()).collect(),
        source: source.to_string(),
        gains,
        objective_trajectory: trajectory,
        gamma: config.gamma,
        clip_ids: ids,
        dynamics: report.rows,
        config: config.clone(),
        inputs,
    };
    Ok(Composition { artifact, coherence })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source: String,
    pub dynamics: DynamicsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc: Option<RocCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bradley_terry: Option<BtScores>,
}

/// Dynamics report for an ordering, plus ROC when a coherence matrix and
/// labels are given and Bradley-Terry scores when preferences are given.
pub fn evaluate(
    artifact: &OrderingArtifact,
    coherence: Option<&CoherenceMatrix>,
    labels: Option<&AdjacencyLabels>,
    preferences: Option<&PairwisePreferences>,
) -> Result<EvalReport> {
    let order = artifact.order_indices()?;
    let dynamics = dynamics_report(&order, &artifact.clip_ids, &artifact.phi()?)?;
    let roc = match (coherence, labels) {
        (Some(c), Some(l)) => Some(pairwise_roc(&adjacent_pair_scores(c, &artifact.clip_ids)?, l)?),
        (None, Some(_)) => return Err(Error::invalid("ROC needs the coherence matrix as well as labels")),
        _ => None,
    };
    let bradley_terry = preferences
        .map(|p| bradley_terry(p, BT_MAX_ITERATIONS, BT_TOLERANCE))
        .transpose()?;
    Ok(EvalReport {
        source: artifact.source.clone(),
        dynamics,
        roc,
        bradley_terry,
    })
}
