use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Contributions, Mode, Op, Tape, Var};
use crate::tensor::Tensor;

impl<S: Scalar> Tape<S> {
    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Relu { input })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape(format!(
                "add requires identical shapes, got {:?} and {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    /// Inverted dropout. Infer mode and `rate == 0` return `input` itself.
    pub fn dropout(&mut self, input: Var, rate: f64, seed: u64, mode: Mode) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        if mode == Mode::Infer || rate == 0.0 {
            return Ok(input);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = self.value(input);
        let keep: Vec<bool> = (0..x.numel()).map(|_| rng.random::<f64>() >= rate).collect();
        let scale = S::from_f64_lossy(1.0 / (1.0 - rate));
        let data = x
            .data()
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v * scale } else { S::zero() })
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Dropout { input, keep, scale }))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.data(input).iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum { input })
    }

    /// `Σ input ⊙ weights` for fixed weights; used as a probe loss.
    pub fn weighted_sum(&mut self, input: Var, weights: Vec<S>) -> Result<Var> {
        let x = self.data(input);
        if weights.len() != x.len() {
            return Err(Error::shape(format!(
                "weighted_sum expects {} weights, got {}",
                x.len(),
                weights.len()
            )));
        }
        let total = x.iter().zip(&weights).map(|(&a, &w)| a * w).sum();
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { input, weights }))
    }
}

pub(crate) fn relu_backward<S: Scalar>(tape: &Tape<S>, out: Var, input: Var, grad: &[S]) -> Contributions<S> {
    // derivative at exactly zero is taken as zero
    let y = tape.data(out);
    let dx = y
        .iter()
        .zip(grad)
        .map(|(&v, &g)| if v > S::zero() { g } else { S::zero() })
        .collect();
    vec![(input, dx)]
}

pub(crate) fn dropout_backward<S: Scalar>(input: Var, keep: &[bool], scale: S, grad: &[S]) -> Contributions<S> {
    let dx = grad
        .iter()
        .zip(keep)
        .map(|(&g, &k)| if k { g * scale } else { S::zero() })
        .collect();
    vec![(input, dx)]
}
