use crate::error::{Error, Result};
use crate::labels::{LabelOrder, NOSEQ, NUM_CLASSES};
use crate::model::BLOCK_WIDTH;

/// Fixed protein window of the CullPDB-family matrices.
pub const SEQ_LEN: usize = 700;

/// One protein in the fixed-window, masked layout.
///
/// `seq_onehot` and `profile` are `T×21` row-major; `labels` and `mask` have `T` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ProteinRecord {
    pub seq_onehot: Vec<f32>,
    pub profile: Vec<f32>,
    pub labels: Vec<u8>,
    pub mask: Vec<bool>,
}

impl ProteinRecord {
    /// Builds a record and checks every invariant; `index` only labels the error.
    pub fn new(seq_onehot: Vec<f32>, profile: Vec<f32>, labels: Vec<u8>, index: usize) -> Result<Self> {
        let mask = labels.iter().map(|&l| l != NOSEQ).collect();
        let rec = ProteinRecord {
            seq_onehot,
            profile,
            labels,
            mask,
        };
        rec.validate(index)?;
        Ok(rec)
    }

    pub fn window(&self) -> usize {
        self.labels.len()
    }

    /// Number of real residues.
    pub fn length(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let fail = |reason: String| Err(Error::Validation { protein: index, reason });
        let t = self.labels.len();
        if t == 0 {
            return fail("empty window".into());
        }
        if self.mask.len() != t || self.seq_onehot.len() != t * BLOCK_WIDTH || self.profile.len() != t * BLOCK_WIDTH {
            return fail(format!(
                "inconsistent block sizes for window {t}: onehot {}, profile {}, mask {}",
                self.seq_onehot.len(),
                self.profile.len(),
                self.mask.len()
            ));
        }
        let real = self.length();
        if self.mask[..real].iter().any(|&m| !m) {
            return fail("mask is not a prefix: padding precedes a real residue".into());
        }
        for pos in 0..t {
            let onehot = &self.seq_onehot[pos * BLOCK_WIDTH..(pos + 1) * BLOCK_WIDTH];
            let profile = &self.profile[pos * BLOCK_WIDTH..(pos + 1) * BLOCK_WIDTH];
            let label = self.labels[pos];
            if self.mask[pos] != (label != NOSEQ) {
                return fail(format!("position {pos}: mask disagrees with label {label}"));
            }
            if self.mask[pos] {
                if label as usize >= NUM_CLASSES {
                    return fail(format!("position {pos}: label {label} out of range"));
                }
                let ones = onehot.iter().filter(|&&v| v == 1.0).count();
                let zeros = onehot.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || zeros != BLOCK_WIDTH - 1 {
                    return fail(format!("position {pos}: residue row is not one-hot"));
                }
                if let Some(v) = profile.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return fail(format!("position {pos}: profile value {v} outside [0, 1]"));
                }
            } else if onehot.iter().chain(profile).any(|&v| v != 0.0) {
                return fail(format!("position {pos}: padded row has non-zero features"));
            }
        }
        Ok(())
    }

    /// Residue index (0..21) of each real position.
    pub fn residues(&self) -> Vec<usize> {
        self.seq_onehot
            .chunks_exact(BLOCK_WIDTH)
            .take(self.length())
            .map(|row| row.iter().position(|&v| v == 1.0).expect("validated one-hot"))
            .collect()
    }
}

/// A named, labelled collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub labels: LabelOrder,
    pub records: Vec<ProteinRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Identifier used in prediction output.
    pub fn protein_id(&self, index: usize) -> String {
        format!("{}_{index}", self.name)
    }

    /// A dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            labels: self.labels,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

/// Element-wise `1 / (1 + e^{-x})`, for raw PSI-BLAST scores.
///
/// The public matrices already carry rescaled profiles; applying this to
/// them a second time would distort the features.
pub fn logistic_rescale<S: crate::Scalar>(x: &crate::Tensor<S>) -> crate::Tensor<S> {
    let data = x.data().iter().map(|&v| S::one() / (S::one() + (-v).exp())).collect();
    crate::Tensor::new(x.shape().to_vec(), data).expect("same shape")
}
