//! Brute-force oracle equivalence and invariance checks for the
//! aggregation strategies.

// Oracles stay as plain index loops on purpose: they must not share
// structure with the code they check.
#![allow(clippy::needless_range_loop, clippy::manual_is_multiple_of)]

use mmcer_core::aggregation::{
    average_logits, average_probs, majority_vote, sliding_window_ensemble, EnsembleInput,
    FramePredictions,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counting oracle: histogram then first class with maximal count.
fn vote_oracle(labels: &[usize], classes: usize) -> usize {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let best = *counts.iter().max().unwrap();
    counts.iter().position(|&c| c == best).unwrap()
}

/// Double-loop oracle for the trailing-window cross-model vote.
fn ensemble_oracle(models: &[Vec<usize>], window: usize, classes: usize) -> Vec<usize> {
    let frames = models[0].len();
    let mut out = Vec::new();
    for t in 0..frames {
        let mut pool = Vec::new();
        let lo = (t + 1).saturating_sub(window);
        for m in models {
            for f in lo..=t {
                pool.push(m[f]);
            }
        }
        out.push(vote_oracle(&pool, classes));
    }
    out
}

#[test]
fn majority_vote_matches_counting_oracle_on_1000_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..1000 {
        let len = rng.random_range(1..40);
        let classes = rng.random_range(2..8);
        let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..classes)).collect();
        assert_eq!(majority_vote(&labels).unwrap(), vote_oracle(&labels, classes));
    }
}

#[test]
fn average_logits_matches_mean_then_argmax_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let frames = rng.random_range(1..20);
        let classes = rng.random_range(2..8);
        let logits: Vec<f32> =
            (0..frames * classes).map(|_| rng.random_range(-5.0f32..5.0)).collect();
        let mut means = vec![0.0f64; classes];
        for t in 0..frames {
            for c in 0..classes {
                means[c] += logits[t * classes + c] as f64;
            }
        }
        let best = means
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0;
        assert_eq!(average_logits(&logits, classes).unwrap(), best);
    }
}

#[test]
fn average_logits_decision_is_shift_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..200 {
        let frames = rng.random_range(1..12);
        let classes = rng.random_range(2..6);
        let logits: Vec<f32> =
            (0..frames * classes).map(|_| rng.random_range(-3.0f32..3.0)).collect();
        let base = average_logits(&logits, classes).unwrap();
        let mut shifted = logits.clone();
        for t in 0..frames {
            let c_t = rng.random_range(-2.0f32..2.0);
            for c in 0..classes {
                shifted[t * classes + c] += c_t;
            }
        }
        assert_eq!(average_logits(&shifted, classes).unwrap(), base);
    }
}

#[test]
fn average_probs_matches_mean_then_argmax_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..1000 {
        let frames = rng.random_range(1..20);
        let classes = rng.random_range(2..8);
        let logits: Vec<f32> =
            (0..frames * classes).map(|_| rng.random_range(-4.0f32..4.0)).collect();
        let p = FramePredictions::from_logits("v", classes, logits).unwrap();
        let mut means = vec![0.0f64; classes];
        for t in 0..frames {
            for c in 0..classes {
                means[c] += p.probs[t * classes + c] as f64;
            }
        }
        let best = means
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0;
        assert_eq!(average_probs(&p.probs, classes).unwrap(), best);
    }
}

#[test]
fn ensemble_matches_double_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..200 {
        let frames = 25;
        let classes = rng.random_range(2..7);
        let n_models = rng.random_range(1..5);
        let window = rng.random_range(1..12);
        let label_sets: Vec<Vec<usize>> = (0..n_models)
            .map(|_| (0..frames).map(|_| rng.random_range(0..classes)).collect())
            .collect();
        let preds: Vec<FramePredictions> = label_sets
            .iter()
            .map(|labels| {
                let mut logits = vec![0.0f32; frames * classes];
                for (t, &l) in labels.iter().enumerate() {
                    logits[t * classes + l] = 1.0;
                }
                FramePredictions::from_logits("v", classes, logits).unwrap()
            })
            .collect();
        let input = EnsembleInput::new(preds).unwrap();
        assert_eq!(
            sliding_window_ensemble(&input, window).unwrap(),
            ensemble_oracle(&label_sets, window, classes)
        );
    }
}

#[test]
fn video_level_methods_are_frame_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    for _ in 0..100 {
        let frames = rng.random_range(2..15);
        let classes = 4;
        let logits: Vec<f32> =
            (0..frames * classes).map(|_| rng.random_range(-3.0f32..3.0)).collect();
        let p = FramePredictions::from_logits("v", classes, logits.clone()).unwrap();

        let mut order: Vec<usize> = (0..frames).collect();
        order.shuffle(&mut rng);
        let mut shuffled_logits = Vec::with_capacity(logits.len());
        for &t in &order {
            shuffled_logits.extend_from_slice(&logits[t * classes..(t + 1) * classes]);
        }
        let q = FramePredictions::from_logits("v", classes, shuffled_logits).unwrap();

        assert_eq!(majority_vote(&p.labels).unwrap(), majority_vote(&q.labels).unwrap());
        assert_eq!(
            average_logits(&p.logits, classes).unwrap(),
            average_logits(&q.logits, classes).unwrap()
        );
    }
}

#[test]
fn sliding_window_ensemble_is_not_permutation_invariant() {
    // Window 2, labels [0, 0, 1, 1, 1]: the run of 1s wins late frames.
    // Reversed, those 1s sit at the start, so frame outputs differ.
    let make = |labels: &[usize]| {
        let classes = 2;
        let mut logits = vec![0.0f32; labels.len() * classes];
        for (t, &l) in labels.iter().enumerate() {
            logits[t * classes + l] = 1.0;
        }
        FramePredictions::from_logits("v", classes, logits).unwrap()
    };
    let forward = make(&[0, 0, 1, 1, 1]);
    let reversed = make(&[1, 1, 1, 0, 0]);
    let out_f =
        sliding_window_ensemble(&EnsembleInput::new(vec![forward]).unwrap(), 2).unwrap();
    let mut out_r =
        sliding_window_ensemble(&EnsembleInput::new(vec![reversed]).unwrap(), 2).unwrap();
    out_r.reverse();
    assert_ne!(out_f, out_r);
}
