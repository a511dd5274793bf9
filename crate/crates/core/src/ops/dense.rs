use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar, View};
use crate::tape::{Contributions, Op, Tape, Var};
use crate::tensor::Tensor;

impl<S: Scalar> Tape<S> {
    /// Position-wise `x · weight + bias` over the last axis.
    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let (rows, cin) = x.as_rows();
        let [wi, cout] = *self.shape(weight) else {
            return Err(Error::shape(format!("affine weight must be Cin×Cout, got {:?}", self.shape(weight))));
        };
        if wi != cin {
            return Err(Error::shape(format!("affine input has {cin} features but weight expects {wi}")));
        }
        if self.shape(bias) != [cout] {
            return Err(Error::shape(format!("affine bias must be [{cout}], got {:?}", self.shape(bias))));
        }
        let mut out = Vec::with_capacity(rows * cout);
        for _ in 0..rows {
            out.extend_from_slice(self.data(bias));
        }
        gemm(
            rows,
            cin,
            cout,
            x.data(),
            View::new(0, cin, 1),
            self.data(weight),
            View::new(0, cout, 1),
            S::one(),
            &mut out,
            View::new(0, cout, 1),
        );
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = cout;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Affine { input, weight, bias }))
    }

    /// Row lookup of a one-hot matrix into `table`; all-zero rows map to zeros.
    ///
    /// Gradients flow into `table` only; the one-hot input is treated as data.
    pub fn embed(&mut self, onehot: Var, table: Var) -> Result<Var> {
        let x = self.value(onehot);
        let (rows, vocab) = x.as_rows();
        let [tv, dim] = *self.shape(table) else {
            return Err(Error::shape(format!("embedding table must be V×D, got {:?}", self.shape(table))));
        };
        if tv != vocab {
            return Err(Error::shape(format!("one-hot width {vocab} does not match table rows {tv}")));
        }
        let mut picks = Vec::with_capacity(rows);
        for (r, row) in x.data().chunks_exact(vocab).enumerate() {
            let mut hit = None;
            for (i, &v) in row.iter().enumerate() {
                if v != S::zero() {
                    if hit.is_some() {
                        return Err(Error::invalid(format!("one-hot row {r} has more than one nonzero entry")));
                    }
                    hit = Some(i);
                }
            }
            picks.push(hit);
        }
        let emb = self.data(table);
        let mut out = vec![S::zero(); rows * dim];
        for (dst, pick) in out.chunks_exact_mut(dim).zip(&picks) {
            if let Some(i) = pick {
                dst.copy_from_slice(&emb[i * dim..(i + 1) * dim]);
            }
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = dim;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Embed { table, rows: picks }))
    }
}

pub(crate) fn affine_backward<S: Scalar>(
    tape: &Tape<S>,
    input: Var,
    weight: Var,
    bias: Var,
    grad: &[S],
) -> Contributions<S> {
    let x = tape.data(input);
    let w = tape.data(weight);
    let (rows, cin) = tape.value(input).as_rows();
    let cout = tape.shape(weight)[1];
    let mut out = Vec::with_capacity(3);
    if tape.requires_grad(input) {
        let mut dx = vec![S::zero(); x.len()];
        gemm(
            rows,
            cout,
            cin,
            grad,
            View::new(0, cout, 1),
            w,
            View::new(0, 1, cout),
            S::zero(),
            &mut dx,
            View::new(0, cin, 1),
        );
        out.push((input, dx));
    }
    if tape.requires_grad(weight) {
        let mut dw = vec![S::zero(); w.len()];
        gemm(
            cin,
            rows,
            cout,
            x,
            View::new(0, 1, cin),
            grad,
            View::new(0, cout, 1),
            S::zero(),
            &mut dw,
            View::new(0, cout, 1),
        );
        out.push((weight, dw));
    }
    if tape.requires_grad(bias) {
        let mut db = vec![S::zero(); cout];
        for row in grad.chunks_exact(cout) {
            db.iter_mut().zip(row).for_each(|(a, &g)| *a = *a + g);
        }
        out.push((bias, db));
    }
    out
}

pub(crate) fn embed_backward<S: Scalar>(tape: &Tape<S>, table: Var, rows: &[Option<usize>], grad: &[S]) -> Contributions<S> {
    let [_, dim] = *tape.shape(table) else { unreachable!() };
    let mut dt = vec![S::zero(); tape.value(table).numel()];
    for (g, pick) in grad.chunks_exact(dim).zip(rows) {
        if let Some(i) = pick {
            dt[i * dim..(i + 1) * dim].iter_mut().zip(g).for_each(|(a, &v)| *a = *a + v);
        }
    }
    vec![(table, dt)]
}
