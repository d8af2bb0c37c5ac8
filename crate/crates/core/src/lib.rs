//! Video-story composition.
//!
//! Clips are described by an ingested semantic descriptor and by motion
//! features computed from dense optical flow ([`features`]). Two recurrent
//! streams, one per descriptor, learn from real videos which clip tends to
//! come next ([`rnn`]); their fused probabilities give pairwise coherence
//! ([`coherence`]). A greedy ranker then rearranges the clips so the story
//! stays coherent while its activity rises ([`ranker`]), and [`eval`] holds
//! the evaluation tools.

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod coherence;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod formats;
pub mod pipeline;
pub mod ranker;
pub mod rnn;
pub mod synth;

pub use coherence::{
    coherence_matrix, fused_coherence, greedy_compose, select_initial_clip, CandidateScores, ClipOrder,
    CoherenceMatrix, TwoStreamModel,
};
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use features::{
    clip_motion_feature, dynamics_score, hoof, spp_hoof_frame, ClipFeatures, FlowField, Histogram, MotionFeature,
};
pub use ranker::{
    activity_dynamics, facility_location, greedy_rank, lazy_greedy_rank, objective, RankResult, StoryGraph,
};
pub use rnn::{
    bptt_gradients, forward_step, next_clip_probs, sequence_log_likelihood, sgd_momentum_step, train, RnnParams,
    TrainConfig,
};
