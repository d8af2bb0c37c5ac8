//! Synthetic corpora with a planted clip order.
//!
//! `n` base clips form a cycle `0 -> 1 -> ... -> n-1 -> 0`. Clip `k` has a
//! semantic vector peaked at coordinate `k` and a motion vector peaked at
//! coordinate `(5k) mod n`, each with uniform noise in `[0, noise)` on every
//! coordinate, and dynamics score `0.5 + 0.1k`. Training videos walk the cycle
//! from a random offset with fresh noise on every clip; the test set holds
//! one noisy copy of each base clip in shuffled order.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{ClipFeatures, MotionFeature};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n_clips: usize,
    pub semantic_dim: usize,
    pub motion_dim: usize,
    pub videos: usize,
    pub video_len: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_clips: 12,
            semantic_dim: 16,
            motion_dim: 100,
            videos: 24,
            video_len: 20,
            noise: 0.25,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub train_videos: Vec<Vec<ClipFeatures>>,
    pub test_clips: Vec<ClipFeatures>,
    /// `successor[i]` is the test-clip index that follows test clip `i` in the cycle.
    pub successor: Vec<usize>,
}

fn peaked(dim: usize, peak: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let base = if d == peak { 1.0 } else { 0.0 };
            base + if noise > 0.0 { rng.random_range(0.0..noise) } else { 0.0 }
        })
        .collect()
}

fn base_clip(spec: &PlantedSpec, k: usize, id: String, rng: &mut ChaCha8Rng) -> ClipFeatures {
    ClipFeatures {
        clip_id: id,
        semantic: peaked(spec.semantic_dim, k, spec.noise, rng),
        motion: MotionFeature::new(peaked(spec.motion_dim, (5 * k) % spec.n_clips, spec.noise, rng)),
        dynamics: 0.5 + 0.1 * k as f64,
    }
}

pub fn planted_cycle(spec: &PlantedSpec) -> Result<PlantedCorpus> {
    let n = spec.n_clips;
    if n < 2 || spec.semantic_dim < n || spec.motion_dim < n {
        return Err(Error::invalid(
            "planted corpus needs n >= 2 and feature dimensions of at least n",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train_videos = (0..spec.videos)
        .map(|v| {
            let offset = rng.random_range(0..n);
            (0..spec.video_len)
                .map(|p| {
                    let k = (offset + p) % n;
                    base_clip(spec, k, format!("v{v}-p{p}-k{k}"), &mut rng)
                })
                .collect()
        })
        .collect();

    let mut cycle_pos: Vec<usize> = (0..n).collect();
    cycle_pos.shuffle(&mut rng);
    let test_clips: Vec<ClipFeatures> = cycle_pos
        .iter()
        .enumerate()
        .map(|(i, &k)| base_clip(spec, k, format!("t{i}-k{k}"), &mut rng))
        .collect();
    let mut index_of = vec![0; n];
    for (i, &k) in cycle_pos.iter().enumerate() {
        index_of[k] = i;
    }
    let successor = cycle_pos.iter().map(|&k| index_of[(k + 1) % n]).collect();
    Ok(PlantedCorpus {
        train_videos,
        test_clips,
        successor,
    })
}

/// Fraction of consecutive pairs in `order` that follow the planted successor.
pub fn successor_accuracy(order: &[usize], successor: &[usize]) -> f64 {
    if order.len() < 2 {
        return 1.0;
    }
    let hits = order.windows(2).filter(|w| successor[w[0]] == w[1]).count();
    hits as f64 / (order.len() - 1) as f64
}
