//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero when any fails.
#![allow(clippy::needless_range_loop, clippy::type_complexity)]

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vstory_core::coherence::{greedy_compose, TwoStreamModel};
use vstory_core::config::PipelineConfig;
use vstory_core::eval::{bradley_terry, PairwisePreferences, BT_MAX_ITERATIONS, BT_TOLERANCE};
use vstory_core::features::{clip_motion_feature, dynamics_score, hoof, ClipFeatures, FlowField, MotionFeature};
use vstory_core::formats::{FeatureStore, Provenance};
use vstory_core::pipeline::{compose, ComposeMode};
use vstory_core::ranker::{activity_dynamics, facility_location, greedy_rank, lazy_greedy_rank, objective, StoryGraph};
use vstory_core::rnn::{bptt_gradients, next_clip_probs, sequence_log_likelihood, train, RnnParams, TrainConfig};
use vstory_core::synth::{planted_cycle, successor_accuracy, PlantedSpec};

use common::{run_ok, s, write_corpus};

/// Outcome line detail; a panic or `Err` counts as failure.
type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < budget, || {
        format!("took {:.1}s, budget {}s", t.as_secs_f64(), budget.as_secs())
    })
}

fn random_params(d: usize, h: usize, scale: f64, rng: &mut ChaCha8Rng) -> RnnParams {
    let mut m = |r, c| Array2::from_shape_fn((r, c), |_| rng.random_range(-scale..scale));
    RnnParams::new(m(h, d), m(h, h), m(d, h)).unwrap()
}

fn random_vec(d: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}

/// Smallest |preactivation| anywhere in the forward pass over the prediction steps.
fn min_kink_distance(p: &RnnParams, seq: &[Vec<f64>]) -> f64 {
    let mut h = Array1::<f64>::zeros(p.hidden_dim());
    let mut m = f64::INFINITY;
    for c in &seq[..seq.len() - 1] {
        let pre_h = p.w_in.dot(&Array1::from(c.clone())) + p.w_hh.dot(&h);
        h = pre_h.mapv(|x| x.max(0.0));
        let pre_y = p.w_out.dot(&h);
        m = pre_h.iter().chain(pre_y.iter()).fold(m, |m, x| m.min(x.abs()));
    }
    m
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let (d, hd, t, step) = (5, 5, 4, 1e-5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut done, mut resampled, mut worst) = (0, 0, 0.0f64);
    while done < 100 {
        let p = random_params(d, hd, 1.0, &mut rng);
        let seq: Vec<Vec<f64>> = (0..t).map(|_| random_vec(d, -1.0, 1.0, &mut rng)).collect();
        // central differences are meaningless across a relu kink
        if min_kink_distance(&p, &seq) < 1e-3 {
            resampled += 1;
            continue;
        }
        done += 1;
        let (g, _) = bptt_gradients(&p, &seq).map_err(|e| e.to_string())?;
        let ll = |q: &RnnParams| sequence_log_likelihood(q, &seq).unwrap();
        for which in 0..3 {
            let shape = [&p.w_in, &p.w_hh, &p.w_out][which].dim();
            let analytic = [&g.w_in, &g.w_hh, &g.w_out][which];
            for r in 0..shape.0 {
                for c in 0..shape.1 {
                    let bump = |delta: f64| {
                        let mut q = p.clone();
                        [&mut q.w_in, &mut q.w_hh, &mut q.w_out][which][(r, c)] += delta;
                        ll(&q)
                    };
                    let fd = (bump(step) - bump(-step)) / (2.0 * step);
                    let a = analytic[(r, c)];
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    within_budget(start, Duration::from_secs(30))?;
    Ok(format!(
        "max relative error {worst:.2e} over 100 instances ({resampled} near-kink draws redrawn)"
    ))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_sum = 0.0f64;
    let mut worst_shift = 0.0f64;
    for _ in 0..1000 {
        let d = rng.random_range(1..12usize);
        let k = rng.random_range(1..15usize);
        let scale = [0.1, 1.0, 10.0][rng.random_range(0..3usize)];
        let y = random_vec(d, -scale, scale, &mut rng);
        let cands: Vec<Vec<f64>> = (0..k).map(|_| random_vec(d, -1.0, 1.0, &mut rng)).collect();
        let p = next_clip_probs(Array1::from(y.clone()).view(), &cands).map_err(|e| e.to_string())?;
        ensure(p.iter().all(|x| (0.0..=1.0).contains(x)), || {
            format!("entry outside [0,1]: {p:?}")
        })?;
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());

        // an extra coordinate with y = 1 adds the same constant to every inner product
        let shift = rng.random_range(-50.0..50.0);
        let mut y2 = y.clone();
        y2.push(1.0);
        let shifted: Vec<Vec<f64>> = cands
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.push(shift);
                c
            })
            .collect();
        let q = next_clip_probs(Array1::from(y2).view(), &shifted).map_err(|e| e.to_string())?;
        worst_shift = p.iter().zip(&q).fold(worst_shift, |m, (a, b)| m.max((a - b).abs()));
    }
    ensure(worst_sum <= 1e-9, || format!("sum deviates by {worst_sum:e}"))?;
    ensure(worst_shift <= 1e-9, || {
        format!("shift changes probabilities by {worst_shift:e}")
    })?;
    Ok(format!(
        "1000 inputs, max |sum-1| {worst_sum:.1e}, max shift deviation {worst_shift:.1e}"
    ))
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let spec = PlantedSpec::default();
    let corpus = planted_cycle(&spec).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 200,
        seed: 3,
        ..TrainConfig::default()
    };
    let hidden = PipelineConfig::default().hidden;
    let sem: Vec<Vec<&[f64]>> = corpus
        .train_videos
        .iter()
        .map(|v| v.iter().map(|c| c.semantic.as_slice()).collect())
        .collect();
    let mot: Vec<Vec<&[f64]>> = corpus
        .train_videos
        .iter()
        .map(|v| v.iter().map(|c| c.motion.values()).collect())
        .collect();
    let sem = train(&sem, hidden, &config).map_err(|e| e.to_string())?;
    let mot = train(&mot, hidden, &config).map_err(|e| e.to_string())?;
    let epochs = sem.history.len().max(mot.history.len());
    let model = TwoStreamModel::new(sem.params, mot.params, 0.5).map_err(|e| e.to_string())?;
    let order = greedy_compose(&model, &corpus.test_clips).map_err(|e| e.to_string())?;
    let acc = successor_accuracy(order.as_slice(), &corpus.successor);
    ensure(epochs <= 200, || format!("{epochs} epochs"))?;
    ensure(acc >= 0.8, || {
        format!("recovered {:.1}% of planted successors", 100.0 * acc)
    })?;
    within_budget(start, Duration::from_secs(120))?;
    Ok(format!(
        "{:.1}% of planted successors after {epochs} epochs ({:.1}s)",
        100.0 * acc,
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let d = rng.random_range(1..8usize);
        let h = rng.random_range(1..8usize);
        let p = random_params(d, h, 5.0, &mut rng);
        let seq = vec![random_vec(d, -3.0, 3.0, &mut rng), random_vec(d, -3.0, 3.0, &mut rng)];
        let ll = sequence_log_likelihood(&p, &seq).map_err(|e| e.to_string())?;
        ensure(ll == 0.0, || format!("T=2 log-likelihood {ll:e}"))?;
    }
    Ok("exactly 0 on 200 random weight draws".into())
}

fn criterion_5() -> Check {
    let g = StoryGraph::new(vec![vec![0.0, 0.7], vec![0.3, 0.0]], vec![0.0, 1.0], 0.3).map_err(|e| e.to_string())?;
    let e = |x: vstory_core::Result<f64>| x.map_err(|e| e.to_string());
    let checks = [
        ("F({v1})", e(facility_location(&[0], &g))?, 0.7),
        ("F({v1,v2})", e(facility_location(&[0, 1], &g))?, 0.5),
        ("U({v1,v2})", e(activity_dynamics(&[0, 1], &g))?, 1.0 + (-1.0f64).exp()),
        ("L({v1})", e(objective(&[0], &g))?, 1.0),
        ("L({v1,v2})", e(objective(&[0, 1], &g))?, 0.9104),
    ];
    for (name, got, want) in checks {
        // the printed 0.9104 is rounded to four places
        let tol = if name == "L({v1,v2})" { 5e-5 } else { 1e-9 };
        ensure((got - want).abs() <= tol, || format!("{name} = {got}, expected {want}"))?;
    }
    let exact = 0.5 + 0.3 * (1.0 + (-1.0f64).exp());
    let l2 = objective(&[0, 1], &g).unwrap();
    ensure((l2 - exact).abs() <= 1e-9, || {
        format!("L({{v1,v2}}) = {l2}, exact {exact}")
    })?;
    Ok(format!("F 0.7/0.5, U {:.4}, L 1.0/{l2:.4}", 1.0 + (-1.0f64).exp()))
}

fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> StoryGraph {
    let relation = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { rng.random_range(0.0..1.0) })
                .collect()
        })
        .collect();
    let phi = random_vec(n, 0.0, 3.0, rng);
    let gamma = [0.0, 0.3, 1.0, 5.0][rng.random_range(0..4usize)];
    StoryGraph::new(relation, phi, gamma).unwrap()
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut lazy_evals, mut naive_evals) = (0, 0);
    for i in 0..500 {
        let n = rng.random_range(4..=12usize);
        let g = random_graph(n, &mut rng);
        let a = greedy_rank(&g).map_err(|e| e.to_string())?;
        let b = lazy_greedy_rank(&g).map_err(|e| e.to_string())?;
        ensure(a.order == b.order, || {
            format!("instance {i}: {:?} vs {:?}", a.order, b.order)
        })?;
        naive_evals += a.gain_evaluations;
        lazy_evals += b.gain_evaluations;
    }
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!(
        "500 instances identical; gain evaluations lazy {lazy_evals} vs naive {naive_evals}"
    ))
}

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut brute = 0;
    for i in 0..100 {
        let n = rng.random_range(2..=10usize);
        let c = rng.random_range(0.0..1.0);
        let relation = (0..n)
            .map(|a| (0..n).map(|b| if a == b { 0.0 } else { c }).collect())
            .collect();
        let phi = random_vec(n, 0.0, 4.0, &mut rng);
        let gamma = rng.random_range(0.01..2.0);
        let g = StoryGraph::new(relation, phi.clone(), gamma).unwrap();
        let r = greedy_rank(&g).map_err(|e| e.to_string())?;
        let order = r.order.as_slice();
        ensure(order.windows(2).all(|w| phi[w[0]] <= phi[w[1]]), || {
            format!(
                "instance {i}: phi along order {:?}",
                order.iter().map(|&k| phi[k]).collect::<Vec<_>>()
            )
        })?;
        if n <= 6 {
            brute += 1;
            // every step's choice is the exhaustive gain maximizer
            for step in 1..n {
                let prefix = &order[..step];
                let base = objective(prefix, &g).unwrap();
                let best = (0..n)
                    .filter(|k| !prefix.contains(k))
                    .map(|k| {
                        let mut a = prefix.to_vec();
                        a.push(k);
                        (k, objective(&a, &g).unwrap() - base)
                    })
                    .fold(None::<(usize, f64)>, |m, (k, v)| match m {
                        Some((_, bv)) if bv >= v => m,
                        _ => Some((k, v)),
                    })
                    .unwrap();
                ensure(best.0 == order[step], || {
                    format!("instance {i} step {step}: exhaustive pick {}", best.0)
                })?;
            }
            // and its trajectory dominates every other order's step by step
            for perm in permutations(n).into_iter().filter(|p| p[0] == order[0]) {
                for k in 1..=n {
                    let ours = objective(&order[..k], &g).unwrap();
                    let theirs = objective(&perm[..k], &g).unwrap();
                    ensure(ours >= theirs - 1e-12, || {
                        format!("instance {i}: order {perm:?} beats greedy at prefix {k}")
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "100 instances non-decreasing; {brute} with n <= 6 checked exhaustively"
    ))
}

fn store_with_phi(phi: &[f64], sem_dim: usize, mot_dim: usize, rng: &mut ChaCha8Rng) -> FeatureStore {
    let clips = phi
        .iter()
        .enumerate()
        .map(|(i, &p)| ClipFeatures {
            clip_id: format!("c{i}"),
            semantic: random_vec(sem_dim, 0.0, 1.0, rng),
            motion: MotionFeature::new(random_vec(mot_dim, 0.0, 1.0, rng)),
            dynamics: p,
        })
        .collect();
    FeatureStore {
        clips,
        provenance: Provenance {
            config: PipelineConfig::default(),
            inputs: BTreeMap::new(),
        },
    }
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut with_ties = 0;
    for i in 0..200 {
        let n = rng.random_range(1..=9usize);
        // a small value pool makes ties common
        let phi: Vec<f64> = (0..n).map(|_| rng.random_range(0..4u32) as f64 * 0.5).collect();
        let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let expect = phi.iter().position(|&p| p == min).unwrap();
        if phi.iter().filter(|&&p| p == min).count() > 1 {
            with_ties += 1;
        }
        let store = store_with_phi(&phi, 4, 6, &mut rng);
        let sem = random_params(4, 5, 1.0, &mut rng);
        let mot = random_params(6, 5, 1.0, &mut rng);
        for mode in [ComposeMode::Baseline, ComposeMode::Ranked] {
            let c = compose(
                &store,
                sem.clone(),
                mot.clone(),
                &PipelineConfig::default(),
                mode,
                BTreeMap::new(),
            )
            .map_err(|e| e.to_string())?;
            let first = c.artifact.order_indices().unwrap()[0];
            ensure(first == expect, || {
                format!("instance {i} {mode:?}: first {first}, expected {expect} for {phi:?}")
            })?;
        }
        let g = random_graph(n, &mut rng);
        let g = StoryGraph::new(
            (0..n).map(|a| (0..n).map(|b| g.relation(a, b)).collect()).collect(),
            phi.clone(),
            g.gamma(),
        )
        .unwrap();
        for (name, r) in [("greedy", greedy_rank(&g)), ("lazy", lazy_greedy_rank(&g))] {
            let first = r.map_err(|e| e.to_string())?.order.as_slice()[0];
            ensure(first == expect, || {
                format!("instance {i} {name}: first {first}, expected {expect}")
            })?;
        }
    }
    Ok(format!(
        "200 phi vectors ({with_ties} with tied minima), baseline, ranked, greedy and lazy"
    ))
}

fn criterion_9() -> Check {
    let prefs = |wins: Vec<Vec<u64>>| PairwisePreferences {
        items: (0..wins.len()).map(|i| format!("m{i}")).collect(),
        wins,
    };
    let bt = bradley_terry(&prefs(vec![vec![0, 3], vec![1, 0]]), BT_MAX_ITERATIONS, BT_TOLERANCE)
        .map_err(|e| e.to_string())?;
    ensure(
        (bt.scores[0] - 0.75).abs() <= 1e-6 && (bt.scores[1] - 0.25).abs() <= 1e-6,
        || format!("3-1 scores {:?}", bt.scores),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = rng.random_range(2..7usize);
        let mut w = vec![vec![0u64; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let k = rng.random_range(1..10u64);
                w[a][b] = k;
                w[b][a] = k;
            }
        }
        let s = bradley_terry(&prefs(w), BT_MAX_ITERATIONS, BT_TOLERANCE).map_err(|e| e.to_string())?;
        ensure(s.scores.iter().all(|x| (x - 1.0 / n as f64).abs() <= 1e-6), || {
            format!("symmetric scores {:?}", s.scores)
        })?;
    }
    Ok(format!(
        "3-1 gives ({:.6}, {:.6}); 100 symmetric matrices uniform",
        bt.scores[0], bt.scores[1]
    ))
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_hoof = 0.0f64;
    let mut worst_phi = 0.0f64;
    for _ in 0..50 {
        let (w, h) = (rng.random_range(3..20usize), rng.random_range(3..20usize));
        let frames: Vec<FlowField> = (0..rng.random_range(1..5usize))
            .map(|_| {
                let v = (0..w * h)
                    .map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)])
                    .collect();
                FlowField::new(w, h, v).unwrap()
            })
            .collect();
        let m = clip_motion_feature(&frames, 10, 3).map_err(|e| e.to_string())?;
        ensure(m.dim() == 100, || format!("motion dimension {}", m.dim()))?;
        let phi = dynamics_score(&frames).unwrap();
        for alpha in [0.5, 2.0, 10.0] {
            let scaled: Vec<FlowField> = frames.iter().map(|f| f.scaled(alpha)).collect();
            for (f, g) in frames.iter().zip(&scaled) {
                let a = hoof(f, 10).unwrap();
                let b = hoof(g, 10).unwrap();
                worst_hoof = a
                    .bins()
                    .iter()
                    .zip(b.bins())
                    .fold(worst_hoof, |m, (x, y)| m.max((x - y).abs()));
            }
            let ms = clip_motion_feature(&scaled, 10, 3).unwrap();
            worst_hoof = m
                .values()
                .iter()
                .zip(ms.values())
                .fold(worst_hoof, |mx, (x, y)| mx.max((x - y).abs()));
            worst_phi = worst_phi.max((dynamics_score(&scaled).unwrap() - alpha * phi).abs());
        }
    }
    ensure(worst_hoof <= 1e-9, || {
        format!("HOOF changes by {worst_hoof:e} under scaling")
    })?;
    ensure(worst_phi <= 1e-9, || {
        format!("phi deviates from linear scaling by {worst_phi:e}")
    })?;
    Ok(format!(
        "dimension 100; max HOOF deviation {worst_hoof:.1e}, max phi deviation {worst_phi:.1e}"
    ))
}

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn criterion_11() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let manifests: Vec<_> = (0..3)
        .map(|v| write_corpus(d, &format!("video{v}"), 6, 3, 8, 100 + v))
        .collect();
    let test_manifest = write_corpus(d, "test", 5, 3, 8, 200);
    let cfg = ["--seq-len", "4", "--hidden", "6", "--epochs", "15", "--seed", "11"];
    let mut compared = 0;
    for run in 0..2 {
        let mut stores = Vec::new();
        for (i, m) in manifests.iter().chain([&test_manifest]).enumerate() {
            let out = d.join(format!("store{i}_run{run}.vsfs"));
            run_ok(&[&["features", "--manifest", s(m), "--out", s(&out)][..], &cfg].concat());
            stores.push(out);
        }
        for stream in ["semantic", "motion"] {
            let out = d.join(format!("{stream}_run{run}.ckpt"));
            let mut args = vec!["train", "--stream", stream, "--out", s(&out)];
            for st in &stores[..3] {
                args.extend(["--store", s(st)]);
            }
            args.extend(cfg);
            run_ok(&args);
        }
        for mode in ["baseline", "ranked"] {
            let out = d.join(format!("{mode}_run{run}.json"));
            let sem = d.join(format!("semantic_run{run}.ckpt"));
            let mot = d.join(format!("motion_run{run}.ckpt"));
            run_ok(
                &[
                    &[
                        "compose",
                        "--store",
                        s(&stores[3]),
                        "--semantic",
                        s(&sem),
                        "--motion",
                        s(&mot),
                    ][..],
                    &["--mode", mode, "--out", s(&out)],
                    &cfg,
                ]
                .concat(),
            );
        }
    }
    let mut names: Vec<String> = (0..4).map(|i| format!("store{i}")).collect();
    names.extend(["semantic", "motion"].map(String::from));
    for n in names {
        let ext = if n.starts_with("store") { "vsfs" } else { "ckpt" };
        let (a, b) = (d.join(format!("{n}_run0.{ext}")), d.join(format!("{n}_run1.{ext}")));
        ensure(bytes(&a) == bytes(&b), || format!("{n} differs between runs"))?;
        compared += 1;
    }
    for mode in ["baseline", "ranked"] {
        let (a, b) = (d.join(format!("{mode}_run0.json")), d.join(format!("{mode}_run1.json")));
        // the artifacts embed input digests, which are equal because the inputs are
        ensure(bytes(&a) == bytes(&b), || {
            format!("{mode} ordering differs between runs")
        })?;
        compared += 1;
    }
    Ok(format!("{compared} artifact pairs byte-identical across two CLI runs"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("gradient correctness", criterion_1),
        ("softmax contract", criterion_2),
        ("planted-order recovery", criterion_3),
        ("two-clip likelihood", criterion_4),
        ("objective arithmetic", criterion_5),
        ("lazy greedy equivalence", criterion_6),
        ("rising dynamics", criterion_7),
        ("initialization rule", criterion_8),
        ("Bradley-Terry analytic cases", criterion_9),
        ("feature contract", criterion_10),
        ("determinism", criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {label}: {msg} [{secs:.2}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {label}: {msg} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
