use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Contributions, Op, Tape, Var};
use crate::tensor::Tensor;

/// Floor applied to probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

impl<S: Scalar> Tape<S> {
    /// Softmax along the last axis, with the row maximum subtracted first.
    pub fn softmax_rows(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let (_, cols) = x.as_rows();
        let mut out = Vec::with_capacity(x.numel());
        for row in x.data().chunks_exact(cols) {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let start = out.len();
            let mut total = S::zero();
            for &v in row {
                let e = (v - max).exp();
                total = total + e;
                out.push(e);
            }
            out[start..].iter_mut().for_each(|e| *e = *e / total);
        }
        let value = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Softmax { input })
    }

    /// Mean of `-ln p[label]` over rows whose mask entry is set.
    ///
    /// `labels` and `mask` hold one entry per row of `probs` (all axes but the last).
    /// Labels at masked-out rows are never read.
    pub fn masked_cross_entropy(&mut self, probs: Var, labels: &[u8], mask: &[bool]) -> Result<Var> {
        let p = self.value(probs);
        let (rows, classes) = p.as_rows();
        if labels.len() != rows || mask.len() != rows {
            return Err(Error::shape(format!(
                "cross-entropy over {rows} rows got {} labels and {} mask entries",
                labels.len(),
                mask.len()
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::invalid("cross-entropy mask selects no positions"));
        }
        let floor = S::from_f64_lossy(PROB_FLOOR);
        let mut total = S::zero();
        for (r, row) in p.data().chunks_exact(classes).enumerate() {
            if !mask[r] {
                continue;
            }
            let label = labels[r] as usize;
            if label >= classes {
                return Err(Error::invalid(format!("label {label} at row {r} exceeds {classes} classes")));
            }
            total = total - row[label].max(floor).ln();
        }
        let loss = total / S::from_f64_lossy(count as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MaskedCrossEntropy {
                probs,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
            },
        ))
    }
}

pub(crate) fn softmax_backward<S: Scalar>(tape: &Tape<S>, out: Var, input: Var, grad: &[S]) -> Contributions<S> {
    let y = tape.value(out);
    let (_, cols) = y.as_rows();
    let mut dx = Vec::with_capacity(y.numel());
    for (yr, gr) in y.data().chunks_exact(cols).zip(grad.chunks_exact(cols)) {
        let dot: S = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        dx.extend(yr.iter().zip(gr).map(|(&a, &b)| a * (b - dot)));
    }
    vec![(input, dx)]
}

pub(crate) fn cross_entropy_backward<S: Scalar>(
    tape: &Tape<S>,
    probs: Var,
    labels: &[u8],
    mask: &[bool],
    grad: &[S],
) -> Contributions<S> {
    let p = tape.value(probs);
    let (_, classes) = p.as_rows();
    let count = mask.iter().filter(|&&m| m).count();
    let scale = grad[0] / S::from_f64_lossy(count as f64);
    let floor = S::from_f64_lossy(PROB_FLOOR);
    let mut dp = vec![S::zero(); p.numel()];
    for (r, row) in p.data().chunks_exact(classes).enumerate() {
        if mask[r] {
            let label = labels[r] as usize;
            let q = row[label];
            if q > floor {
                dp[r * classes + label] = -scale / q;
            }
        }
    }
    vec![(probs, dp)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn softmax(values: &[f64], cols: usize) -> Vec<f64> {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new([values.len() / cols, cols], values.to_vec()).unwrap());
        let y = tape.softmax_rows(x);
        tape.data(y).to_vec()
    }

    #[test]
    fn equal_row_is_uniform() {
        for p in softmax(&[0.7; 8], 8) {
            assert!((p - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_pair() {
        let p = softmax(&[1.0f64.ln(), 3.0f64.ln()], 2);
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn shift_invariance_in_f32() {
        let row = [0.3f32, -1.2, 2.0, 0.0, 0.5, 1.5, -0.7, 0.9];
        let shifted: Vec<f32> = row.iter().map(|v| v + 100.0).collect();
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::new([1, 8], row.to_vec()).unwrap());
        let b = tape.constant(Tensor::new([1, 8], shifted).unwrap());
        let pa = tape.softmax_rows(a);
        let pb = tape.softmax_rows(b);
        for (x, y) in tape.data(pa).iter().zip(tape.data(pb)) {
            assert!((x - y).abs() < 1e-6);
        }
        let total: f32 = tape.data(pa).iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let p = softmax(&[1e4, -1e4, 0.0], 3);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-15);
    }

    fn ce(probs: Vec<f64>, labels: &[u8], mask: &[bool]) -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::new([labels.len(), 8], probs).unwrap());
        let l = tape.masked_cross_entropy(p, labels, mask)?;
        Ok(tape.data(l)[0])
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let mut probs = vec![0.0; 16];
        probs[3] = 1.0;
        probs[8 + 6] = 1.0;
        assert_eq!(ce(probs, &[3, 6], &[true, true]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_prediction_is_ln8() {
        let loss = ce(vec![0.125; 24], &[0, 4, 7], &[true; 3]).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-12);
        assert!((loss - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn masked_garbage_is_ignored() {
        let mut probs = vec![0.0; 16];
        probs[2] = 1.0;
        probs[8] = 1.0; // masked row predicts class 0 for label 5
        let loss = ce(probs, &[2, 5], &[true, false]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let mut probs = vec![0.0; 8];
        probs[0] = 1.0;
        let loss = ce(probs, &[1], &[true]).unwrap();
        assert!((loss - (-(PROB_FLOOR.ln()))).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_is_an_error() {
        assert!(ce(vec![0.125; 16], &[0, 1], &[false, false]).is_err());
    }
}
