//! Fused multi-head scaled dot-product attention.
//!
//! Rows are laid out as `batch × seq` blocks; each head owns a contiguous
//! column slice of width `dim / heads`.

use crate::error::{Result, TensorError};
use crate::tape::{Op, Var};
use crate::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionSpec {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
    /// Position `t` attends only to positions `<= t`.
    pub causal: bool,
}

impl AttentionSpec {
    fn head_dim(&self, dim: usize) -> usize {
        dim / self.heads
    }
}

pub(crate) fn forward<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    spec: &AttentionSpec,
) -> (Tensor<T>, Vec<T>) {
    let dim = q.cols();
    let dk = spec.head_dim(dim);
    let scale = T::one() / T::from_f64(dk as f64).sqrt();
    let s = spec.seq;
    let mut out = vec![T::zero(); q.len()];
    let mut probs = vec![T::zero(); spec.batch * spec.heads * s * s];
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    for b in 0..spec.batch {
        for h in 0..spec.heads {
            let col = h * dk;
            let pbase = (b * spec.heads + h) * s * s;
            for i in 0..s {
                let qi = &qd[(b * s + i) * dim + col..][..dk];
                let span = if spec.causal { i + 1 } else { s };
                let prow = &mut probs[pbase + i * s..pbase + i * s + span];
                let mut max = T::neg_infinity();
                for (j, p) in prow.iter_mut().enumerate() {
                    let kj = &kd[(b * s + j) * dim + col..][..dk];
                    let dot: T = qi.iter().zip(kj).map(|(a, b)| *a * *b).sum();
                    *p = dot * scale;
                    max = max.max(*p);
                }
                let mut z = T::zero();
                for p in prow.iter_mut() {
                    *p = (*p - max).exp();
                    z = z + *p;
                }
                let orow = &mut out[(b * s + i) * dim + col..][..dk];
                for (j, p) in prow.iter_mut().enumerate() {
                    *p = *p / z;
                    let vj = &vd[(b * s + j) * dim + col..][..dk];
                    for (o, vv) in orow.iter_mut().zip(vj) {
                        *o = *o + *p * *vv;
                    }
                }
            }
        }
    }
    (
        Tensor::new(q.shape().to_vec(), out).expect("same shape as q"),
        probs,
    )
}

pub(crate) fn backward<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    probs: &[T],
    spec: &AttentionSpec,
    g: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let dim = q.cols();
    let dk = spec.head_dim(dim);
    let scale = T::one() / T::from_f64(dk as f64).sqrt();
    let s = spec.seq;
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut dq = vec![T::zero(); q.len()];
    let mut dkv = vec![T::zero(); k.len()];
    let mut dv = vec![T::zero(); v.len()];
    let mut ds = vec![T::zero(); s];
    for b in 0..spec.batch {
        for h in 0..spec.heads {
            let col = h * dk;
            let pbase = (b * spec.heads + h) * s * s;
            for i in 0..s {
                let span = if spec.causal { i + 1 } else { s };
                let prow = &probs[pbase + i * s..pbase + i * s + span];
                let gi = &g[(b * s + i) * dim + col..][..dk];
                let mut dot = T::zero();
                for (j, p) in prow.iter().enumerate() {
                    let row = (b * s + j) * dim + col;
                    let vj = &vd[row..row + dk];
                    let dp: T = gi.iter().zip(vj).map(|(a, b)| *a * *b).sum();
                    ds[j] = dp;
                    dot = dot + *p * dp;
                    for (d, gg) in dv[row..row + dk].iter_mut().zip(gi) {
                        *d = *d + *p * *gg;
                    }
                }
                let qrow = (b * s + i) * dim + col;
                for (j, p) in prow.iter().enumerate() {
                    let dsj = *p * (ds[j] - dot) * scale;
                    let krow = (b * s + j) * dim + col;
                    for c in 0..dk {
                        dq[qrow + c] = dq[qrow + c] + dsj * kd[krow + c];
                        dkv[krow + c] = dkv[krow + c] + dsj * qd[qrow + c];
                    }
                }
            }
        }
    }
    (dq, dkv, dv)
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Multi-head attention over already-projected queries, keys and values,
    /// returning the concatenated head outputs.
    pub fn attention(
        self,
        k: Var<'t, T>,
        v: Var<'t, T>,
        spec: AttentionSpec,
    ) -> Result<Var<'t, T>> {
        let (qv, kv, vv) = (self.value(), k.value(), v.value());
        if qv.shape() != kv.shape() || qv.shape() != vv.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "attention",
                left: qv.shape().to_vec(),
                right: kv.shape().to_vec(),
            });
        }
        if spec.heads == 0 || qv.cols() % spec.heads != 0 || qv.rows() != spec.batch * spec.seq {
            return Err(TensorError::Contract {
                op: "attention",
                detail: format!(
                    "{:?} incompatible with {} heads over {}×{} rows",
                    qv.shape(),
                    spec.heads,
                    spec.batch,
                    spec.seq
                ),
            });
        }
        let (out, probs) = forward(&qv, &kv, &vv, &spec);
        let op = Op::Attention {
            q: self.id,
            k: k.id,
            v: v.id,
            spec,
            probs,
        };
        Ok(self.tape.push(out, op, &[self.id, k.id, v.id]))
    }
}
