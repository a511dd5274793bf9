//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use ps8net::data::{synthetic_dataset, ProteinRecord, SyntheticSpec};
use ps8net::labels::{NOSEQ, NUM_CLASSES};
use ps8net::model::Ps8Config;
use ps8net::train::TrainConfig;
use rand::Rng;

/// A random B×T×8 probability instance with at least one real residue.
pub struct Instance {
    pub probs: Vec<f32>,
    pub labels: Vec<u8>,
    pub mask: Vec<bool>,
}

pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let b = rng.random_range(1..=4);
    let t = rng.random_range(1..=16);
    let rows = b * t;
    // Coarse values so ties show up regularly.
    let probs = (0..rows * NUM_CLASSES).map(|_| rng.random_range(0..5) as f32 / 4.0).collect();
    let mut mask: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.7)).collect();
    if !mask.iter().any(|&m| m) {
        mask[rng.random_range(0..rows)] = true;
    }
    let labels = mask
        .iter()
        .map(|&m| if m { rng.random_range(0..NUM_CLASSES as u8) } else { NOSEQ })
        .collect();
    Instance { probs, labels, mask }
}

/// Counts by explicit loops: first maximal class wins.
pub fn brute_confusion(inst: &Instance) -> [[u64; NUM_CLASSES]; NUM_CLASSES] {
    let mut m = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for r in 0..inst.mask.len() {
        if !inst.mask[r] {
            continue;
        }
        let mut best = 0;
        for c in 0..NUM_CLASSES {
            if inst.probs[r * NUM_CLASSES + c] > inst.probs[r * NUM_CLASSES + best] {
                best = c;
            }
        }
        m[inst.labels[r] as usize][best] += 1;
    }
    m
}

pub fn brute_q8(inst: &Instance) -> f64 {
    let m = brute_confusion(inst);
    let mut correct = 0u64;
    let mut total = 0u64;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            total += v;
            if i == j {
                correct += v;
            }
        }
    }
    correct as f64 / total as f64
}

/// Parameter after one Adam step from zero moments: `p − lr·g/(|g|+ε)`.
pub fn adam_first_step(p: f64, g: f64, lr: f64, eps: f64) -> f64 {
    p - lr * g / (g.abs() + eps)
}

/// Memorization fixture: eight synthetic proteins, scale-0.125 widths, no dropout.
pub fn memorization_setup(epochs: usize) -> (Vec<ProteinRecord>, Vec<usize>, Ps8Config, TrainConfig) {
    let data = synthetic_dataset(&SyntheticSpec {
        count: 8,
        seed: 1,
        ..SyntheticSpec::default()
    });
    let model = Ps8Config {
        module_dropout: 0.0,
        dense_dropout: 0.0,
        ..Ps8Config::default().scaled(0.125)
    };
    let mut train = TrainConfig {
        epochs,
        batch_size: 2,
        eval_batch_size: 8,
        lr: 1e-3,
        seed: 1,
        ..TrainConfig::default()
    };
    train.scheduler.patience = 1000;
    (data.records, (0..8).collect(), model, train)
}

/// A network small enough for many short training runs.
pub fn tiny_setup(count: usize, window: usize) -> (Vec<ProteinRecord>, Ps8Config) {
    let data = synthetic_dataset(&SyntheticSpec {
        count,
        window,
        min_len: window / 2,
        max_len: window,
        seed: 5,
        ..SyntheticSpec::default()
    });
    let model = Ps8Config {
        front_width: 6,
        module_widths: vec![4, 4],
        skip2_width: 4,
        dense_widths: vec![6, 6],
        ..Ps8Config::default()
    };
    (data.records, model)
}
