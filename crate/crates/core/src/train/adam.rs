use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments for each parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S: Scalar = f32> {
    pub settings: AdamSettings,
    pub step: u64,
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &[Tensor<S>], settings: AdamSettings) -> Self {
        AdamState {
            settings,
            step: 0,
            m: params.iter().map(|p| vec![S::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![S::zero(); p.numel()]).collect(),
        }
    }
}

/// One bias-corrected Adam update of every parameter.
///
/// `grads[i]` of `None` means the parameter received no gradient and is treated as zero.
/// Nothing is modified when any gradient is non-finite.
pub fn adam_step<S: Scalar>(
    params: &mut [Tensor<S>],
    names: &[String],
    grads: &[Option<&[S]>],
    state: &mut AdamState<S>,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != names.len() {
        return Err(Error::shape(format!(
            "{} parameters, {} names, {} gradients, {} moment buffers",
            params.len(),
            names.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::invalid(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    for ((p, g), name) in params.iter().zip(grads).zip(names) {
        if let Some(g) = g {
            if g.len() != p.numel() {
                return Err(Error::shape(format!("gradient of {name} has {} entries, parameter {}", g.len(), p.numel())));
            }
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {name} at index {pos} is {}",
                    g[pos].to_f64_lossy()
                )));
            }
        }
    }

    let AdamSettings { beta1, beta2, epsilon } = state.settings;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (S::from_f64_lossy(beta1), S::from_f64_lossy(beta2));
    let (c1, c2) = (S::one() - b1, S::one() - b2);
    let correction1 = S::from_f64_lossy(1.0 - beta1.powi(t));
    let correction2 = S::from_f64_lossy(1.0 - beta2.powi(t));
    let (lr, eps) = (S::from_f64_lossy(lr), S::from_f64_lossy(epsilon));

    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let data = p.data_mut();
        match grads[i] {
            Some(g) => {
                for j in 0..data.len() {
                    m[j] = b1 * m[j] + c1 * g[j];
                    v[j] = b2 * v[j] + c2 * g[j] * g[j];
                    let m_hat = m[j] / correction1;
                    let v_hat = v[j] / correction2;
                    data[j] = data[j] - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            None => {
                for j in 0..data.len() {
                    m[j] = b1 * m[j];
                    v[j] = b2 * v[j];
                    let m_hat = m[j] / correction1;
                    let v_hat = v[j] / correction2;
                    data[j] = data[j] - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = vec![Tensor::<f64>::from_f64([3], &[1.0, -2.0, 0.5]).unwrap()];
        let before = params.clone();
        let mut state = AdamState::new(&params, AdamSettings::default());
        let g = [0.0; 3];
        adam_step(&mut params, &names(1), &[Some(&g)], &mut state, 2e-4).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut params = vec![Tensor::<f32>::zeros([2]), Tensor::<f32>::zeros([2])];
        let mut state = AdamState::new(&params, AdamSettings::default());
        let ok = [0.0f32; 2];
        let bad = [0.0, f32::NAN];
        let err = adam_step(&mut params, &names(2), &[Some(&ok), Some(&bad)], &mut state, 1e-3).unwrap_err();
        assert!(err.to_string().contains("p1"), "{err}");
        assert_eq!(state.step, 0);
    }
}
