use vstory_core::coherence::{greedy_compose, TwoStreamModel};
use vstory_core::rnn::{train, TrainConfig};
use vstory_core::synth::{planted_cycle, successor_accuracy, PlantedCorpus, PlantedSpec};

fn motion_videos(c: &PlantedCorpus) -> Vec<Vec<&[f64]>> {
    c.train_videos
        .iter()
        .map(|v| v.iter().map(|k| k.motion.values()).collect())
        .collect()
}

fn semantic_videos(c: &PlantedCorpus) -> Vec<Vec<&[f64]>> {
    c.train_videos
        .iter()
        .map(|v| v.iter().map(|k| k.semantic.as_slice()).collect())
        .collect()
}

#[test]
fn likelihood_improves_over_first_epochs() {
    let corpus = planted_cycle(&PlantedSpec::default()).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        seed: 1,
        ..TrainConfig::default()
    };
    for videos in [motion_videos(&corpus), semantic_videos(&corpus)] {
        let out = train(&videos, 100, &cfg).unwrap();
        let first = out.history.first().unwrap().mean_log_likelihood;
        let last = out.history.last().unwrap().mean_log_likelihood;
        assert!(last >= first, "{first} -> {last}");
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let corpus = planted_cycle(&PlantedSpec::default()).unwrap();
    let cfg = |seed| TrainConfig {
        epochs: 5,
        seed,
        ..TrainConfig::default()
    };
    let v = motion_videos(&corpus);
    let a = train(&v, 16, &cfg(5)).unwrap();
    let b = train(&v, 16, &cfg(5)).unwrap();
    let c = train(&v, 16, &cfg(6)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    assert_ne!(a.params, c.params);
}

#[test]
fn planted_successors_recovered_by_two_stream_greedy() {
    let corpus = planted_cycle(&PlantedSpec::default()).unwrap();
    let cfg = TrainConfig {
        seed: 3,
        ..TrainConfig::default()
    };
    let sem = train(&semantic_videos(&corpus), 100, &cfg).unwrap();
    let mot = train(&motion_videos(&corpus), 100, &cfg).unwrap();
    let model = TwoStreamModel::new(sem.params, mot.params, 0.5).unwrap();
    let order = greedy_compose(&model, &corpus.test_clips).unwrap();
    let acc = successor_accuracy(order.as_slice(), &corpus.successor);
    assert!(acc >= 0.8, "accuracy {acc}");
}
