//! On-disk corpora for tests that drive the pipeline through files.
#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use vstory_core::features::FlowField;
use vstory_core::formats::{write_flo, write_semantic};

pub const FLOW_W: usize = 12;
pub const FLOW_H: usize = 9;

/// Clip `k` moves mostly along angle `TAU * k / n` with speed `0.5 + 0.3 k`.
pub fn clip_flow(k: usize, n: usize, rng: &mut ChaCha8Rng) -> FlowField {
    let angle = TAU * k as f64 / n as f64;
    let speed = 0.5 + 0.3 * k as f64;
    let vectors = (0..FLOW_W * FLOW_H)
        .map(|_| {
            let a = angle + rng.random_range(-0.3..0.3);
            let s = speed * rng.random_range(0.5..1.5);
            [s * a.cos(), s * a.sin()]
        })
        .collect();
    FlowField::new(FLOW_W, FLOW_H, vectors).unwrap()
}

/// Writes `n` clips of `frames` flow files each plus a manifest; returns the manifest path.
pub fn write_corpus(dir: &Path, name: &str, n: usize, frames: usize, semantic_dim: usize, seed: u64) -> PathBuf {
    let root = dir.join(name);
    std::fs::create_dir_all(&root).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clips = Vec::new();
    for k in 0..n {
        let sem: Vec<f64> = (0..semantic_dim)
            .map(|d| if d == k % semantic_dim { 1.0 } else { 0.0 } + rng.random_range(0.0..0.1))
            .collect();
        let sem_path = format!("clip{k}.sem");
        write_semantic(&root.join(&sem_path), &sem).unwrap();
        let mut flows = Vec::new();
        for f in 0..frames {
            let p = format!("clip{k}_{f:02}.flo");
            write_flo(&root.join(&p), &clip_flow(k, n, &mut rng)).unwrap();
            flows.push(p);
        }
        clips.push(json!({"id": format!("{name}-{k}"), "semantic": sem_path, "flows": flows}));
    }
    let manifest = root.join("manifest.json");
    let doc = json!({"clips": clips, "semantic_dim": semantic_dim});
    std::fs::write(&manifest, serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
    manifest
}

pub fn vstory() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_vstory"))
}

/// Runs the binary and panics with its stderr when it fails.
pub fn run_ok(args: &[&str]) {
    let out = vstory().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "vstory {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
