use std::fmt;

use crate::error::{Error, Result};
use crate::labels::{LabelOrder, NUM_CLASSES};
use crate::scalar::Scalar;

/// Index of the largest entry; ties go to the lowest index and NaN never wins.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] || (row[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

/// Counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion(pub [[u64; NUM_CLASSES]; NUM_CLASSES]);

impl Confusion {
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.0[c][c]).sum()
    }

    /// `trace / total`; `None` when empty.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.correct() as f64 / total as f64)
    }

    /// Per-class recall; `None` for classes absent from the truth.
    pub fn recall(&self) -> [Option<f64>; NUM_CLASSES] {
        std::array::from_fn(|c| {
            let row: u64 = self.0[c].iter().sum();
            (row > 0).then(|| self.0[c][c] as f64 / row as f64)
        })
    }

    /// Frequency of the most common true class.
    pub fn majority_baseline(&self) -> Option<f64> {
        let total = self.total();
        let best = self.0.iter().map(|row| row.iter().sum::<u64>()).max().unwrap_or(0);
        (total > 0).then(|| best as f64 / total as f64)
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Counts over the masked-in rows of `probs` (`N×8` flattened).
    pub fn accumulate<S: Scalar>(&mut self, probs: &[S], labels: &[u8], mask: &[bool]) -> Result<()> {
        check_lengths(probs.len(), labels.len(), mask.len())?;
        for ((row, &label), &m) in probs.chunks_exact(NUM_CLASSES).zip(labels).zip(mask) {
            if !m {
                continue;
            }
            let label = label as usize;
            if label >= NUM_CLASSES {
                return Err(Error::invalid(format!("label {label} on a masked-in position")));
            }
            self.0[label][argmax(row)] += 1;
        }
        Ok(())
    }
}

fn check_lengths(probs: usize, labels: usize, mask: usize) -> Result<()> {
    if probs != labels * NUM_CLASSES || mask != labels {
        return Err(Error::shape(format!(
            "probabilities ({probs}) must be {NUM_CLASSES}× labels ({labels}) and mask ({mask}) must match labels"
        )));
    }
    Ok(())
}

pub fn confusion<S: Scalar>(probs: &[S], labels: &[u8], mask: &[bool]) -> Result<Confusion> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::invalid("confusion needs at least one masked-in residue"));
    }
    let mut c = Confusion::default();
    c.accumulate(probs, labels, mask)?;
    Ok(c)
}

/// Fraction of masked-in positions whose argmax matches the label.
pub fn q8_accuracy<S: Scalar>(probs: &[S], labels: &[u8], mask: &[bool]) -> Result<f64> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::invalid("Q8 accuracy needs at least one masked-in residue"));
    }
    check_lengths(probs.len(), labels.len(), mask.len())?;
    let mut correct = 0u64;
    let mut total = 0u64;
    for ((row, &label), &m) in probs.chunks_exact(NUM_CLASSES).zip(labels).zip(mask) {
        if m {
            total += 1;
            correct += (argmax(row) == label as usize) as u64;
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Summary of one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub checkpoint: String,
    pub labels: LabelOrder,
    pub confusion: Confusion,
    pub loss: f64,
}

impl EvalReport {
    pub fn q8(&self) -> f64 {
        self.confusion.accuracy().unwrap_or(0.0)
    }

    pub fn residues(&self) -> u64 {
        self.confusion.total()
    }

    pub fn recall(&self) -> [Option<f64>; NUM_CLASSES] {
        self.confusion.recall()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset     {}", self.dataset)?;
        writeln!(f, "checkpoint  {}", self.checkpoint)?;
        writeln!(f, "residues    {}", self.residues())?;
        writeln!(f, "loss        {:.6}", self.loss)?;
        writeln!(f, "Q8          {:.4}", self.q8())?;
        writeln!(f)?;
        write!(f, "true\\pred")?;
        for c in 0..NUM_CLASSES {
            write!(f, "{:>8}", self.labels.letter(c))?;
        }
        writeln!(f, "{:>9}", "recall")?;
        let recall = self.recall();
        for (c, row) in self.confusion.0.iter().enumerate() {
            write!(f, "{:<9}", self.labels.letter(c))?;
            for v in row {
                write!(f, "{v:>8}")?;
            }
            match recall[c] {
                Some(r) => writeln!(f, "{r:>9.4}")?,
                None => writeln!(f, "{:>9}", "-")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_low() {
        assert_eq!(argmax(&[0.2f32, 0.4, 0.4, 0.0]), 1);
        assert_eq!(argmax(&[f32::NAN, 0.1, 0.1]), 1);
        assert_eq!(argmax(&[0.5f64; 8]), 0);
    }

    #[test]
    fn half_correct() {
        let mut probs = vec![0.0f32; 10 * 8];
        let mut labels = vec![0u8; 10];
        for i in 0..10 {
            labels[i] = (i % 8) as u8;
            let pred = if i < 5 { labels[i] as usize } else { (labels[i] as usize + 1) % 8 };
            probs[i * 8 + pred] = 1.0;
        }
        let mask = vec![true; 10];
        assert_eq!(q8_accuracy(&probs, &labels, &mask).unwrap(), 0.5);
        let c = confusion(&probs, &labels, &mask).unwrap();
        assert_eq!((c.correct(), c.total()), (5, 10));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let probs = vec![0.125f32; 16];
        assert!(q8_accuracy(&probs, &[0, 1], &[false, false]).is_err());
        assert!(confusion(&probs, &[0, 1], &[false, false]).is_err());
    }
}
