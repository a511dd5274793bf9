//! Central-difference verification of tape gradients, in double precision.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub mod suite;

pub use suite::{layer_suite, LayerCheck};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Step reduction applied when a probe pair straddles a ReLU kink.
const KINK_SHRINK: f64 = 100.0;
const KINK_RETRIES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Input and element index of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
    /// Coordinates whose `±step` probes changed some ReLU's sign and were re-probed
    /// with a smaller step.
    pub kink_crossings: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare tape gradients against central differences for every element of every input.
///
/// Central differences are only meaningful on a single linear piece of every ReLU.
/// When the `±step` probes land on different pieces than the base point, the
/// coordinate is probed again with the step divided by 100 (at most twice) and
/// counted in [`GradCheckReport::kink_crossings`].
///
/// `build` receives the inputs as gradient-carrying leaves and must return a scalar.
pub fn grad_check<F>(inputs: &[Tensor<f64>], step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let coords = inputs.iter().map(|t| (0..t.numel()).collect()).collect();
    check_coords(inputs, step, &build, coords)
}

/// Like [`grad_check`] but probing at most `per_input` seeded random elements of each input.
pub fn grad_check_sampled<F>(inputs: &[Tensor<f64>], step: f64, per_input: usize, seed: u64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = inputs
        .iter()
        .map(|t| {
            if t.numel() <= per_input {
                (0..t.numel()).collect()
            } else {
                let mut picks = sample(&mut rng, t.numel(), per_input).into_vec();
                picks.sort_unstable();
                picks
            }
        })
        .collect();
    check_coords(inputs, step, &build, coords)
}

struct Probe {
    value: f64,
    grads: Vec<Vec<f64>>,
    pattern: Vec<bool>,
}

fn evaluate<F>(inputs: &[Tensor<f64>], build: &F, with_grad: bool) -> Result<Probe>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| {
            let leaf = t.clone().with_requires_grad(with_grad);
            tape.leaf(leaf)
        })
        .collect();
    let loss = build(&mut tape, &vars)?;
    let value = tape.value(loss);
    if value.numel() != 1 {
        return Err(Error::NonScalarLoss(value.shape().to_vec()));
    }
    let value = value.data()[0];
    let pattern = tape.relu_pattern();
    if !with_grad {
        return Ok(Probe {
            value,
            grads: Vec::new(),
            pattern,
        });
    }
    tape.backward(loss)?;
    let grads = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    Ok(Probe { value, grads, pattern })
}

fn check_coords<F>(inputs: &[Tensor<f64>], step: f64, build: &F, coords: Vec<Vec<usize>>) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let base = evaluate(inputs, build, true)?;
    let mut point = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
        kink_crossings: 0,
    };
    for (i, idxs) in coords.iter().enumerate() {
        for &j in idxs {
            let original = point[i].data()[j];
            let mut h = step;
            let mut numeric;
            let mut attempt = 0;
            loop {
                point[i].data_mut()[j] = original + h;
                let plus = evaluate(&point, build, false)?;
                point[i].data_mut()[j] = original - h;
                let minus = evaluate(&point, build, false)?;
                point[i].data_mut()[j] = original;
                numeric = (plus.value - minus.value) / (2.0 * h);
                let smooth = plus.pattern == base.pattern && minus.pattern == base.pattern;
                if smooth || attempt == KINK_RETRIES {
                    break;
                }
                if attempt == 0 {
                    report.kink_crossings += 1;
                }
                attempt += 1;
                h /= KINK_SHRINK;
            }
            let err = relative_error(base.grads[i][j], numeric);
            report.checked += 1;
            if err > report.max_rel_error || !err.is_finite() {
                report.max_rel_error = err;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-12) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn relu_sum_passes() {
        let x = Tensor::<f64>::new([3], vec![0.5, -1.0, 2.0]).unwrap();
        let report = grad_check(&[x], DEFAULT_STEP, |tape, v| {
            let y = tape.relu(v[0]);
            Ok(tape.sum(y))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-9);
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn probes_straddling_a_kink_are_retried() {
        let x = Tensor::<f64>::new([2], vec![5e-4, 1.0]).unwrap();
        let report = grad_check(&[x], DEFAULT_STEP, |tape, v| {
            let y = tape.relu(v[0]);
            Ok(tape.sum(y))
        })
        .unwrap();
        assert_eq!(report.kink_crossings, 1);
        assert!(report.max_rel_error < 1e-9);
    }

    #[test]
    fn rejects_non_positive_step() {
        let x = Tensor::<f64>::zeros([1]);
        assert!(grad_check(&[x], 0.0, |tape, v| Ok(tape.sum(v[0]))).is_err());
    }
}
