//! Batch normalization over every axis but the last.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Contributions, Mode, Op, Tape, Var};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormSettings {
    pub epsilon: f64,
    /// Weight kept by the running statistics on each update.
    pub momentum: f64,
}

impl Default for BatchNormSettings {
    fn default() -> Self {
        BatchNormSettings {
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }
}

/// Per-channel running mean and variance used in infer mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

impl<S: Scalar> RunningStats<S> {
    pub fn fresh(channels: usize) -> Self {
        RunningStats {
            mean: vec![S::zero(); channels],
            var: vec![S::one(); channels],
        }
    }
}

impl<S: Scalar> Tape<S> {
    /// Returns the normalized value and, in train mode, the updated running statistics.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &RunningStats<S>,
        mode: Mode,
        settings: BatchNormSettings,
    ) -> Result<(Var, Option<RunningStats<S>>)> {
        let x = self.value(input);
        let (rows, channels) = x.as_rows();
        if x.rank() < 2 {
            return Err(Error::shape(format!("batch_norm needs rank ≥ 2, got {:?}", x.shape())));
        }
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [channels] {
                return Err(Error::shape(format!(
                    "batch_norm {name} must be [{channels}], got {:?}",
                    self.shape(v)
                )));
            }
        }
        if running.mean.len() != channels || running.var.len() != channels {
            return Err(Error::shape(format!("running statistics do not cover {channels} channels")));
        }
        let eps = settings.epsilon;

        let (mean, var, updated) = match mode {
            Mode::Train => {
                if rows < 2 {
                    return Err(Error::invalid(format!(
                        "train-mode batch_norm needs at least 2 samples per channel, got {rows}"
                    )));
                }
                let mut sum = vec![0.0f64; channels];
                for row in x.data().chunks_exact(channels) {
                    sum.iter_mut().zip(row).for_each(|(s, v)| *s += v.to_f64_lossy());
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / rows as f64).collect();
                let mut sq = vec![0.0f64; channels];
                for row in x.data().chunks_exact(channels) {
                    for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                        let d = v.to_f64_lossy() - m;
                        *s += d * d;
                    }
                }
                let var: Vec<f64> = sq.iter().map(|s| s / rows as f64).collect();
                let keep = settings.momentum;
                let unbias = rows as f64 / (rows as f64 - 1.0);
                let updated = RunningStats {
                    mean: running
                        .mean
                        .iter()
                        .zip(&mean)
                        .map(|(r, m)| S::from_f64_lossy(keep * r.to_f64_lossy() + (1.0 - keep) * m))
                        .collect(),
                    var: running
                        .var
                        .iter()
                        .zip(&var)
                        .map(|(r, v)| S::from_f64_lossy(keep * r.to_f64_lossy() + (1.0 - keep) * v * unbias))
                        .collect(),
                };
                (mean, var, Some(updated))
            }
            Mode::Infer => (
                running.mean.iter().map(|v| v.to_f64_lossy()).collect(),
                running.var.iter().map(|v| v.to_f64_lossy()).collect(),
                None,
            ),
        };

        let mean_s: Vec<S> = mean.iter().map(|&m| S::from_f64_lossy(m)).collect();
        let inv_std: Vec<S> = var.iter().map(|&v| S::from_f64_lossy(1.0 / (v + eps).sqrt())).collect();
        let g = self.data(gamma);
        let b = self.data(beta);
        let mut out = Vec::with_capacity(x.numel());
        for row in x.data().chunks_exact(channels) {
            for c in 0..channels {
                out.push(g[c] * ((row[c] - mean_s[c]) * inv_std[c]) + b[c]);
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let var_out = self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                mean: mean_s,
                inv_std,
                batch_stats: mode == Mode::Train,
            },
        );
        Ok((var_out, updated))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<S: Scalar>(
    tape: &Tape<S>,
    input: Var,
    gamma: Var,
    beta: Var,
    mean: &[S],
    inv_std: &[S],
    batch_stats: bool,
    grad: &[S],
) -> Contributions<S> {
    let x = tape.data(input);
    let g = tape.data(gamma);
    let channels = mean.len();
    let rows = x.len() / channels;

    let mut sum_dy = vec![S::zero(); channels];
    let mut sum_dy_xhat = vec![S::zero(); channels];
    for (row, dy) in x.chunks_exact(channels).zip(grad.chunks_exact(channels)) {
        for c in 0..channels {
            let xhat = (row[c] - mean[c]) * inv_std[c];
            sum_dy[c] = sum_dy[c] + dy[c];
            sum_dy_xhat[c] = sum_dy_xhat[c] + dy[c] * xhat;
        }
    }

    let mut out = Vec::with_capacity(3);
    if tape.requires_grad(input) {
        let mut dx = Vec::with_capacity(x.len());
        if batch_stats {
            let n = S::from_f64_lossy(rows as f64);
            for (row, dy) in x.chunks_exact(channels).zip(grad.chunks_exact(channels)) {
                for c in 0..channels {
                    let xhat = (row[c] - mean[c]) * inv_std[c];
                    dx.push(g[c] * inv_std[c] / n * (n * dy[c] - sum_dy[c] - xhat * sum_dy_xhat[c]));
                }
            }
        } else {
            for dy in grad.chunks_exact(channels) {
                for c in 0..channels {
                    dx.push(dy[c] * g[c] * inv_std[c]);
                }
            }
        }
        out.push((input, dx));
    }
    if tape.requires_grad(gamma) {
        out.push((gamma, sum_dy_xhat));
    }
    if tape.requires_grad(beta) {
        out.push((beta, sum_dy));
    }
    out
}
