//! Synthetic proteins for running the pipeline without the public matrices.
//!
//! Every generated set shares one hidden rule: the structure label of a residue
//! is the argmax of class scores summed over its ±2 neighbourhood, plus a class
//! bias that skews the label frequencies towards L, H and E the way real data
//! is skewed. Profiles are noisy logistic images of the one-hot rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::record::{Dataset, ProteinRecord, SEQ_LEN};
use crate::labels::{LabelOrder, NOSEQ, NUM_CLASSES};
use crate::model::BLOCK_WIDTH;

const RULE_SEED: u64 = 0x5053_384e_4554;
const RULE_RADIUS: usize = 2;
/// Added to the class scores, in default label order (L B E G I H S T).
const CLASS_BIAS: [f64; NUM_CLASSES] = [1.2, -1.2, 0.7, -0.6, -2.0, 1.0, 0.0, 0.2];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub name: String,
    pub count: usize,
    pub window: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            name: "synthetic".into(),
            count: 64,
            window: SEQ_LEN,
            min_len: 40,
            max_len: 300,
            seed: 0,
        }
    }
}

struct Rule {
    weights: Vec<f64>,
}

impl Rule {
    fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(RULE_SEED);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let n = (2 * RULE_RADIUS + 1) * BLOCK_WIDTH * NUM_CLASSES;
        Rule {
            weights: (0..n).map(|_| normal.sample(&mut rng)).collect(),
        }
    }

    fn label(&self, residues: &[usize], t: usize) -> u8 {
        let mut scores = CLASS_BIAS;
        for d in 0..=2 * RULE_RADIUS {
            let Some(pos) = (t + d).checked_sub(RULE_RADIUS) else { continue };
            let Some(&r) = residues.get(pos) else { continue };
            let w = &self.weights[(d * BLOCK_WIDTH + r) * NUM_CLASSES..][..NUM_CLASSES];
            for (s, v) in scores.iter_mut().zip(w) {
                *s += v;
            }
        }
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        best as u8
    }
}

pub fn synthetic_dataset(spec: &SyntheticSpec) -> Dataset {
    assert!(
        1 <= spec.min_len && spec.min_len <= spec.max_len && spec.max_len <= spec.window,
        "synthetic lengths must satisfy 1 <= min_len <= max_len <= window"
    );
    let rule = Rule::new();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, 0.8).expect("finite spread");
    let records = (0..spec.count)
        .map(|index| {
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let residues: Vec<usize> = (0..len)
                .map(|_| {
                    // the unknown symbol (last index) is rare
                    if rng.random::<f64>() < 0.01 {
                        BLOCK_WIDTH - 1
                    } else {
                        rng.random_range(0..BLOCK_WIDTH - 1)
                    }
                })
                .collect();
            let mut onehot = vec![0f32; spec.window * BLOCK_WIDTH];
            let mut profile = vec![0f32; spec.window * BLOCK_WIDTH];
            let mut labels = vec![NOSEQ; spec.window];
            for (t, &r) in residues.iter().enumerate() {
                onehot[t * BLOCK_WIDTH + r] = 1.0;
                for a in 0..BLOCK_WIDTH {
                    let z: f64 = if a == r { 1.5 } else { -1.5 } + noise.sample(&mut rng);
                    profile[t * BLOCK_WIDTH + a] = (1.0 / (1.0 + (-z).exp())) as f32;
                }
                labels[t] = rule.label(&residues, t);
            }
            ProteinRecord::new(onehot, profile, labels, index).expect("generator emits valid records")
        })
        .collect();
    Dataset {
        name: spec.name.clone(),
        labels: LabelOrder::default(),
        records,
    }
}
