//! Length-preserving 1-D convolution over channel-last sequences.
//!
//! A kernel of width `L` sees the input padded with `L / 2` zeros at the head
//! and `(L - 1) / 2` zeros at the tail, so every output has the input's length.

use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar, View};
use crate::tape::{Contributions, Op, Tape, Var};
use crate::tensor::Tensor;

/// Zeros inserted before the first position.
pub fn head_padding(width: usize) -> usize {
    width / 2
}

/// Zeros appended after the last position.
pub fn tail_padding(width: usize) -> usize {
    (width - 1) / 2
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    batch: usize,
    len: usize,
    cin: usize,
    cout: usize,
    width: usize,
}

impl ConvDims {
    fn infer(input: &[usize], kernel: &[usize], bias: &[usize]) -> Result<Self> {
        let (batch, len, cin) = match *input {
            [t, c] => (1, t, c),
            [b, t, c] => (b, t, c),
            _ => {
                return Err(Error::shape(format!(
                    "conv1d input must be T×C or B×T×C, got {input:?}"
                )))
            }
        };
        let [cout, width, kcin] = *kernel else {
            return Err(Error::shape(format!("conv1d kernel must be Cout×L×Cin, got {kernel:?}")));
        };
        if kcin != cin {
            return Err(Error::shape(format!(
                "conv1d input has {cin} channels but kernel expects {kcin}"
            )));
        }
        if bias != [cout] {
            return Err(Error::shape(format!("conv1d bias must be [{cout}], got {bias:?}")));
        }
        Ok(ConvDims {
            batch,
            len,
            cin,
            cout,
            width,
        })
    }

    /// For kernel tap `j`: first output row, first input row, and row count.
    fn tap_rows(&self, j: usize) -> (usize, usize, usize) {
        let head = head_padding(self.width);
        // output t reads input s = t + j - head
        let t0 = head.saturating_sub(j);
        let s0 = (t0 + j) - head;
        let t1 = (self.len + head).saturating_sub(j).min(self.len);
        (t0, s0, t1.saturating_sub(t0))
    }
}

pub(crate) fn conv1d_forward<S: Scalar>(
    x: &[S],
    kernel: &[S],
    bias: &[S],
    d: ConvDims,
) -> Vec<S> {
    let mut out = vec![S::zero(); d.batch * d.len * d.cout];
    for row in out.chunks_exact_mut(d.cout) {
        row.copy_from_slice(bias);
    }
    for b in 0..d.batch {
        let xb = b * d.len * d.cin;
        let ob = b * d.len * d.cout;
        for j in 0..d.width {
            let (t0, s0, rows) = d.tap_rows(j);
            // out[t, k] += x[s, c] * kernel[k, j, c]
            gemm(
                rows,
                d.cin,
                d.cout,
                x,
                View::new(xb + s0 * d.cin, d.cin, 1),
                kernel,
                View::new(j * d.cin, 1, d.width * d.cin),
                S::one(),
                &mut out,
                View::new(ob + t0 * d.cout, d.cout, 1),
            );
        }
    }
    out
}

impl<S: Scalar> Tape<S> {
    /// `out[t, k] = Σ_{j,c} kernel[k, j, c] · padded[t + j, c] + bias[k]`; no activation.
    pub fn conv1d_same(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let d = ConvDims::infer(self.shape(input), self.shape(kernel), self.shape(bias))?;
        let out = conv1d_forward(self.data(input), self.data(kernel), self.data(bias), d);
        let mut shape = self.shape(input).to_vec();
        *shape.last_mut().unwrap() = d.cout;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Conv1d { input, kernel, bias }))
    }
}

pub(crate) fn backward<S: Scalar>(
    tape: &Tape<S>,
    input: Var,
    kernel: Var,
    bias: Var,
    grad: &[S],
) -> Result<Contributions<S>> {
    let d = ConvDims::infer(tape.shape(input), tape.shape(kernel), tape.shape(bias))?;
    let x = tape.data(input);
    let w = tape.data(kernel);
    let mut out = Vec::with_capacity(3);

    if tape.requires_grad(input) {
        let mut dx = vec![S::zero(); x.len()];
        for b in 0..d.batch {
            let xb = b * d.len * d.cin;
            let ob = b * d.len * d.cout;
            for j in 0..d.width {
                let (t0, s0, rows) = d.tap_rows(j);
                // dx[s, c] += dout[t, k] * kernel[k, j, c]
                gemm(
                    rows,
                    d.cout,
                    d.cin,
                    grad,
                    View::new(ob + t0 * d.cout, d.cout, 1),
                    w,
                    View::new(j * d.cin, d.width * d.cin, 1),
                    S::one(),
                    &mut dx,
                    View::new(xb + s0 * d.cin, d.cin, 1),
                );
            }
        }
        out.push((input, dx));
    }

    if tape.requires_grad(kernel) {
        let mut dw = vec![S::zero(); w.len()];
        for b in 0..d.batch {
            let xb = b * d.len * d.cin;
            let ob = b * d.len * d.cout;
            for j in 0..d.width {
                let (t0, s0, rows) = d.tap_rows(j);
                // dkernel[k, j, c] += dout[t, k] * x[s, c]
                gemm(
                    d.cout,
                    rows,
                    d.cin,
                    grad,
                    View::new(ob + t0 * d.cout, 1, d.cout),
                    x,
                    View::new(xb + s0 * d.cin, d.cin, 1),
                    S::one(),
                    &mut dw,
                    View::new(j * d.cin, d.width * d.cin, 1),
                );
            }
        }
        out.push((kernel, dw));
    }

    if tape.requires_grad(bias) {
        let mut db = vec![S::zero(); d.cout];
        for row in grad.chunks_exact(d.cout) {
            db.iter_mut().zip(row).for_each(|(a, &g)| *a = *a + g);
        }
        out.push((bias, db));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(x: &[f64], t: usize, cin: usize, k: &[f64], cout: usize, l: usize) -> Vec<f64> {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new([t, cin], x.to_vec()).unwrap());
        let k = tape.constant(Tensor::new([cout, l, cin], k.to_vec()).unwrap());
        let b = tape.constant(Tensor::zeros([cout]));
        let y = tape.conv1d_same(x, k, b).unwrap();
        tape.data(y).to_vec()
    }

    /// Sliding window over an explicitly zero-padded copy of the sequence.
    fn naive(x: &[f64], t: usize, cin: usize, k: &[f64], cout: usize, l: usize) -> Vec<f64> {
        let head = l / 2;
        let tail = (l - 1) / 2;
        let mut padded = vec![0.0; (head + t + tail) * cin];
        padded[head * cin..(head + t) * cin].copy_from_slice(x);
        let mut out = vec![0.0; t * cout];
        for p in 0..t {
            for o in 0..cout {
                let mut acc = 0.0;
                for j in 0..l {
                    for c in 0..cin {
                        acc += k[o * l * cin + j * cin + c] * padded[(p + j) * cin + c];
                    }
                }
                out[p * cout + o] = acc;
            }
        }
        out
    }

    #[test]
    fn padding_split() {
        assert_eq!((head_padding(1), tail_padding(1)), (0, 0));
        assert_eq!((head_padding(3), tail_padding(3)), (1, 1));
        assert_eq!((head_padding(5), tail_padding(5)), (2, 2));
        assert_eq!((head_padding(11), tail_padding(11)), (5, 5));
        assert_eq!((head_padding(4), tail_padding(4)), (2, 1));
    }

    #[test]
    fn window_sum_example() {
        let y = conv(&[1.0, 2.0, 3.0, 4.0], 4, 1, &[1.0, 1.0, 1.0], 1, 3);
        assert_eq!(y, vec![3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn identity_kernel() {
        let x = [0.5, -1.0, 2.0, 3.5, 7.0];
        assert_eq!(conv(&x, 5, 1, &[1.0], 1, 1), x.to_vec());
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros([6, 3]));
        let k = tape.constant(Tensor::full([2, 5, 3], 0.7));
        let b = tape.constant(Tensor::new([2], vec![0.0, 0.0]).unwrap());
        let y = tape.conv1d_same(x, k, b).unwrap();
        assert!(tape.data(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_naive_multichannel() {
        let (t, cin, cout) = (7, 3, 2);
        for l in [1, 2, 3, 4, 5, 11] {
            let x: Vec<f64> = (0..t * cin).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
            let k: Vec<f64> = (0..cout * l * cin).map(|i| ((i * 5 % 13) as f64) * 0.1 - 0.6).collect();
            let got = conv(&x, t, cin, &k, cout, l);
            let want = naive(&x, t, cin, &k, cout, l);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "L={l}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn kernel_wider_than_sequence() {
        let x = [1.0, 2.0];
        let k: Vec<f64> = (0..11).map(|v| v as f64).collect();
        assert_eq!(conv(&x, 2, 1, &k, 1, 11), naive(&x, 2, 1, &k, 1, 11));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros([4, 3]));
        let k = tape.constant(Tensor::zeros([2, 3, 2]));
        let b = tape.constant(Tensor::zeros([2]));
        let err = tape.conv1d_same(x, k, b).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn batched_equals_per_sample() {
        let (t, cin, cout, l) = (5, 2, 3, 3);
        let x: Vec<f64> = (0..2 * t * cin).map(|i| (i as f64).sin()).collect();
        let k: Vec<f64> = (0..cout * l * cin).map(|i| (i as f64).cos()).collect();
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::new([2, t, cin], x.clone()).unwrap());
        let kv = tape.constant(Tensor::new([cout, l, cin], k.clone()).unwrap());
        let bv = tape.constant(Tensor::zeros([cout]));
        let y = tape.conv1d_same(xv, kv, bv).unwrap();
        let y = tape.data(y);
        for b in 0..2 {
            let single = naive(&x[b * t * cin..(b + 1) * t * cin], t, cin, &k, cout, l);
            for (g, w) in y[b * t * cout..(b + 1) * t * cout].iter().zip(&single) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }
}
