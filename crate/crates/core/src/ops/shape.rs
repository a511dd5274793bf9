use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Contributions, Op, Tape, Var};
use crate::tensor::Tensor;

impl<S: Scalar> Tape<S> {
    /// Concatenate along the last (channel) axis, in list order.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_channels needs at least one part"));
        };
        if parts.len() == 1 {
            return Ok(first);
        }
        let lead = leading(self.shape(first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let shape = self.shape(p);
            if leading(shape)? != lead {
                return Err(Error::shape(format!(
                    "concat_channels parts disagree on leading dims: {:?} vs {:?}",
                    self.shape(first),
                    shape
                )));
            }
            widths.push(*shape.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.data(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat { parts: parts.to_vec() }))
    }

    /// Channels `start..start + len` of the last axis.
    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let width = *shape.last().ok_or_else(|| Error::shape("slice of a rank-0 tensor"))?;
        if len == 0 || start + len > width {
            return Err(Error::shape(format!(
                "channel slice {start}..{} outside width {width}",
                start + len
            )));
        }
        if start == 0 && len == width {
            return Ok(input);
        }
        let data = self
            .data(input)
            .chunks_exact(width)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = len;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::SliceChannels { input, start }))
    }
}

fn leading(shape: &[usize]) -> Result<&[usize]> {
    match shape.split_last() {
        Some((_, lead)) if !lead.is_empty() => Ok(lead),
        _ => Err(Error::shape(format!("expected at least rank 2, got {shape:?}"))),
    }
}

pub(crate) fn concat_backward<S: Scalar>(tape: &Tape<S>, parts: &[Var], grad: &[S]) -> Contributions<S> {
    let widths: Vec<usize> = parts.iter().map(|&p| *tape.shape(p).last().unwrap()).collect();
    let total: usize = widths.iter().sum();
    let rows = grad.len() / total;
    let mut out = Vec::with_capacity(parts.len());
    let mut offset = 0;
    for (&p, &w) in parts.iter().zip(&widths) {
        if tape.requires_grad(p) {
            let mut g = Vec::with_capacity(rows * w);
            for r in 0..rows {
                g.extend_from_slice(&grad[r * total + offset..r * total + offset + w]);
            }
            out.push((p, g));
        }
        offset += w;
    }
    out
}

pub(crate) fn slice_backward<S: Scalar>(tape: &Tape<S>, input: Var, start: usize, grad: &[S]) -> Contributions<S> {
    let width = *tape.shape(input).last().unwrap();
    let numel = tape.value(input).numel();
    let len = grad.len() / (numel / width);
    let mut dx = vec![S::zero(); numel];
    for (row, g) in dx.chunks_exact_mut(width).zip(grad.chunks_exact(len)) {
        row[start..start + len].copy_from_slice(g);
    }
    vec![(input, dx)]
}
