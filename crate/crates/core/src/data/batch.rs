use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::record::ProteinRecord;
use crate::error::{Error, Result};
use crate::model::{BLOCK_WIDTH, INPUT_WIDTH};
use crate::tensor::Tensor;

/// Network input plus flattened targets for a group of proteins.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `B×T×42`: one-hot block then profile block.
    pub features: Tensor<f32>,
    /// `B·T` labels, position-major within each protein.
    pub labels: Vec<u8>,
    pub mask: Vec<bool>,
    /// Record indices, in batch order.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// Number of real residues.
    pub fn residues(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Groups `split` into batches of `batch_size`, shuffled by `seed` when asked.
/// The last batch may be short.
pub fn plan_batches(split: &[usize], batch_size: usize, seed: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if split.is_empty() {
        return Err(Error::invalid("cannot batch an empty split"));
    }
    let mut order = split.to_vec();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Stacks the given records into one batch.
pub fn assemble(records: &[ProteinRecord], indices: &[usize]) -> Result<Batch> {
    let first = indices
        .first()
        .map(|&i| &records[i])
        .ok_or_else(|| Error::invalid("cannot assemble an empty batch"))?;
    let window = first.window();
    let mut features = Vec::with_capacity(indices.len() * window * INPUT_WIDTH);
    let mut labels = Vec::with_capacity(indices.len() * window);
    let mut mask = Vec::with_capacity(indices.len() * window);
    for &i in indices {
        let rec = &records[i];
        if rec.window() != window {
            return Err(Error::shape(format!(
                "record {i} has window {}, batch uses {window}",
                rec.window()
            )));
        }
        for t in 0..window {
            features.extend_from_slice(&rec.seq_onehot[t * BLOCK_WIDTH..(t + 1) * BLOCK_WIDTH]);
            features.extend_from_slice(&rec.profile[t * BLOCK_WIDTH..(t + 1) * BLOCK_WIDTH]);
        }
        labels.extend_from_slice(&rec.labels);
        mask.extend_from_slice(&rec.mask);
    }
    Ok(Batch {
        features: Tensor::new([indices.len(), window, INPUT_WIDTH], features)?,
        labels,
        mask,
        indices: indices.to_vec(),
    })
}

/// Lazily assembled batches over `split`.
pub fn make_batches<'a>(
    records: &'a [ProteinRecord],
    split: &[usize],
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Result<impl Iterator<Item = Result<Batch>> + 'a> {
    let plan = plan_batches(split, batch_size, seed, shuffle)?;
    Ok(plan.into_iter().map(move |idx| assemble(records, &idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_division() {
        let split: Vec<usize> = (0..5600).collect();
        let plan = plan_batches(&split, 64, 3, true).unwrap();
        assert_eq!(plan.len(), 88);
        assert!(plan[..87].iter().all(|b| b.len() == 64));
        assert_eq!(plan[87].len(), 32);
    }

    #[test]
    fn unshuffled_keeps_order() {
        let split = vec![9, 4, 7, 1, 3];
        let plan = plan_batches(&split, 2, 0, false).unwrap();
        assert_eq!(plan, vec![vec![9, 4], vec![7, 1], vec![3]]);
    }

    #[test]
    fn shuffle_is_seeded() {
        let split: Vec<usize> = (0..50).collect();
        let a = plan_batches(&split, 8, 11, true).unwrap();
        assert_eq!(a, plan_batches(&split, 8, 11, true).unwrap());
        assert_ne!(a, plan_batches(&split, 8, 12, true).unwrap());
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, split);
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(plan_batches(&[], 4, 0, false).is_err());
        assert!(plan_batches(&[1], 0, 0, false).is_err());
    }
}
