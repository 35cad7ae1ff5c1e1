//! Differentiable operations on [`Var`].

use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::scalar::{gemm, MatView};
use crate::tape::{Op, Tape, Var};
use crate::{Scalar, Tensor};

/// Elementwise activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

fn mismatch(op: &'static str, a: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn with_shape<T: Scalar>(shape: &[usize], data: Vec<T>) -> Tensor<T> {
    Tensor::new(shape.to_vec(), data).expect("output shape matches data")
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    /// `[..×k] · [k×n] -> [..×n]`; leading axes of `self` are folded into rows.
    pub fn matmul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), rhs.value());
        if b.shape().len() != 2 || a.cols() != b.shape()[0] {
            return Err(mismatch("matmul", &a, &b));
        }
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            MatView::new(a.data(), k),
            MatView::new(b.data(), n),
            &mut out,
            n,
            false,
        );
        let mut shape = a.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let op = Op::MatMul {
            a: self.id,
            b: rhs.id,
        };
        Ok(self
            .tape
            .push(with_shape(&shape, out), op, &[self.id, rhs.id]))
    }

    fn zip_same(
        self,
        rhs: Var<'t, T>,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), rhs.value());
        if a.shape() != b.shape() {
            return Err(mismatch(name, &a, &b));
        }
        let out = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self
            .tape
            .push(with_shape(a.shape(), out), op, &[self.id, rhs.id]))
    }

    pub fn add(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        self.zip_same(
            rhs,
            "add",
            |x, y| x + y,
            Op::Add {
                a: self.id,
                b: rhs.id,
            },
        )
    }

    pub fn sub(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        self.zip_same(
            rhs,
            "sub",
            |x, y| x - y,
            Op::Sub {
                a: self.id,
                b: rhs.id,
            },
        )
    }

    pub fn mul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        self.zip_same(
            rhs,
            "mul",
            |x, y| x * y,
            Op::Mul {
                a: self.id,
                b: rhs.id,
            },
        )
    }

    /// Adds `rhs` tiled over `self`; `rhs.len()` must divide `self.len()` and
    /// match its trailing extents (a bias row, or a `seq × dim` table over a batch).
    pub fn add_broadcast(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), rhs.value());
        if a.len() % b.len() != 0 || b.cols() != a.cols() {
            return Err(mismatch("add_broadcast", &a, &b));
        }
        let n = b.len();
        let out = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| *x + b.data()[i % n])
            .collect();
        let op = Op::AddBroadcast {
            a: self.id,
            b: rhs.id,
        };
        Ok(self
            .tape
            .push(with_shape(a.shape(), out), op, &[self.id, rhs.id]))
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        let a = self.value();
        let out = a.data().iter().map(|x| *x * c).collect();
        self.tape.push(
            with_shape(a.shape(), out),
            Op::Scale { a: self.id, c },
            &[self.id],
        )
    }

    pub fn pointwise(self, kind: Activation) -> Var<'t, T> {
        let a = self.value();
        let (f, op): (fn(T) -> T, _) = match kind {
            Activation::Sigmoid => (
                |x| T::one() / (T::one() + (-x).exp()),
                Op::Sigmoid { a: self.id },
            ),
            Activation::Tanh => (|x| x.tanh(), Op::Tanh { a: self.id }),
            Activation::Relu => (|x| x.max(T::zero()), Op::Relu { a: self.id }),
        };
        let out = a.data().iter().map(|x| f(*x)).collect();
        self.tape.push(with_shape(a.shape(), out), op, &[self.id])
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        self.pointwise(Activation::Sigmoid)
    }

    pub fn tanh(self) -> Var<'t, T> {
        self.pointwise(Activation::Tanh)
    }

    pub fn relu(self) -> Var<'t, T> {
        self.pointwise(Activation::Relu)
    }

    pub fn sum(self) -> Var<'t, T> {
        let total = self.value().data().iter().copied().sum();
        self.tape
            .push(Tensor::scalar(total), Op::Sum { a: self.id }, &[self.id])
    }

    /// `Σ wᵢ·xᵢ` with constant weights.
    pub fn weighted_sum(self, weights: Vec<T>) -> Result<Var<'t, T>> {
        let a = self.value();
        if weights.len() != a.len() {
            return Err(TensorError::Contract {
                op: "weighted_sum",
                detail: format!("{} weights for {} values", weights.len(), a.len()),
            });
        }
        let total = a.data().iter().zip(&weights).map(|(x, w)| *x * *w).sum();
        let op = Op::WeightedSum {
            a: self.id,
            weights,
        };
        Ok(self.tape.push(Tensor::scalar(total), op, &[self.id]))
    }

    /// Elementwise Huber penalty with threshold `delta`.
    pub fn huber(self, delta: T) -> Var<'t, T> {
        let a = self.value();
        let half = T::from_f64(0.5);
        let out = a
            .data()
            .iter()
            .map(|x| {
                if x.abs() <= delta {
                    half * *x * *x
                } else {
                    delta * (x.abs() - half * delta)
                }
            })
            .collect();
        self.tape.push(
            with_shape(a.shape(), out),
            Op::Huber { a: self.id, delta },
            &[self.id],
        )
    }

    /// Normalizes each last-axis slice to zero mean and unit variance, then
    /// applies `gain` and `bias`.
    pub fn layer_norm(self, gain: Var<'t, T>, bias: Var<'t, T>, eps: T) -> Result<Var<'t, T>> {
        let (x, g, b) = (self.value(), gain.value(), bias.value());
        let width = x.cols();
        if g.shape() != [width] || b.shape() != [width] {
            return Err(mismatch("layer_norm", &x, &g));
        }
        let n = T::from_f64(width as f64);
        let mut xhat = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(x.rows());
        let mut out = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
            let s = T::one() / (var + eps).sqrt();
            inv_std.push(s);
            for (j, v) in row.iter().enumerate() {
                let h = (*v - mean) * s;
                xhat.push(h);
                out.push(h * g.data()[j] + b.data()[j]);
            }
        }
        let op = Op::LayerNorm {
            x: self.id,
            gain: gain.id,
            bias: bias.id,
            xhat,
            inv_std,
        };
        Ok(self
            .tape
            .push(with_shape(x.shape(), out), op, &[self.id, gain.id, bias.id]))
    }

    /// Softmax over the last axis. Entries with `keep[i] == false` are
    /// excluded from the normalization and come out as exactly zero.
    pub fn softmax_last_dim(self, keep: Option<&[bool]>) -> Result<Var<'t, T>> {
        let x = self.value();
        if let Some(k) = keep {
            if k.len() != x.len() {
                return Err(TensorError::Contract {
                    op: "softmax_last_dim",
                    detail: format!("mask of {} entries for {:?}", k.len(), x.shape()),
                });
            }
        }
        let width = x.cols();
        let mut out = vec![T::zero(); x.len()];
        for r in 0..x.rows() {
            let span = r * width..(r + 1) * width;
            let kept = |j: usize| keep.is_none_or(|k| k[span.start + j]);
            let max = (0..width)
                .filter(|&j| kept(j))
                .map(|j| x.data()[span.start + j])
                .fold(None, |m: Option<T>, v| Some(m.map_or(v, |m| m.max(v))))
                .ok_or(TensorError::DegenerateMask { slice: r })?;
            let mut z = T::zero();
            for j in (0..width).filter(|&j| kept(j)) {
                let e = (x.data()[span.start + j] - max).exp();
                out[span.start + j] = e;
                z = z + e;
            }
            for v in &mut out[span] {
                *v = *v / z;
            }
        }
        Ok(self.tape.push(
            with_shape(x.shape(), out),
            Op::Softmax { a: self.id },
            &[self.id],
        ))
    }

    pub fn slice_cols(self, start: usize, width: usize) -> Result<Var<'t, T>> {
        let a = self.value();
        let cols = a.cols();
        if width == 0 || start + width > cols {
            return Err(TensorError::Contract {
                op: "slice_cols",
                detail: format!("columns {start}..{} of {:?}", start + width, a.shape()),
            });
        }
        let out = (0..a.rows())
            .flat_map(|r| a.row(r)[start..start + width].iter().copied())
            .collect();
        let op = Op::SliceCols { a: self.id, start };
        Ok(self
            .tape
            .push(with_shape(&[a.rows(), width], out), op, &[self.id]))
    }

    /// Rows `start..start+count` of the matrix view of `self`.
    pub fn slice_rows(self, start: usize, count: usize) -> Result<Var<'t, T>> {
        let a = self.value();
        let cols = a.cols();
        if count == 0 || start + count > a.rows() {
            return Err(TensorError::Contract {
                op: "slice_rows",
                detail: format!("rows {start}..{} of {:?}", start + count, a.shape()),
            });
        }
        let out = a.data()[start * cols..(start + count) * cols].to_vec();
        let op = Op::SliceRows { a: self.id, start };
        Ok(self
            .tape
            .push(with_shape(&[count, cols], out), op, &[self.id]))
    }

    /// Picks column `index[r]` from each row `r`, giving a `[rows]` vector.
    pub fn gather_cols(self, index: &[usize]) -> Result<Var<'t, T>> {
        let a = self.value();
        if index.len() != a.rows() || index.iter().any(|&c| c >= a.cols()) {
            return Err(TensorError::Contract {
                op: "gather_cols",
                detail: format!("{} indices into {:?}", index.len(), a.shape()),
            });
        }
        let out = index
            .iter()
            .enumerate()
            .map(|(r, &c)| a.row(r)[c])
            .collect();
        let op = Op::GatherCols {
            a: self.id,
            index: index.to_vec(),
        };
        Ok(self
            .tape
            .push(with_shape(&[index.len()], out), op, &[self.id]))
    }

    pub fn transpose(self) -> Result<Var<'t, T>> {
        let a = self.value();
        if a.shape().len() != 2 {
            return Err(TensorError::Contract {
                op: "transpose",
                detail: format!("expected a matrix, got {:?}", a.shape()),
            });
        }
        let (r, c) = (a.rows(), a.cols());
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = a.data()[i * c + j];
            }
        }
        Ok(self.tape.push(
            with_shape(&[c, r], out),
            Op::Transpose { a: self.id },
            &[self.id],
        ))
    }
}

impl<T: Scalar> Tape<T> {
    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let first = values.first().ok_or(TensorError::Contract {
            op: "concat_cols",
            detail: "no inputs".into(),
        })?;
        let rows = first.rows();
        if let Some(bad) = values.iter().find(|v| v.rows() != rows) {
            return Err(mismatch("concat_cols", first, bad));
        }
        let total: usize = values.iter().map(|v| v.cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                out.extend_from_slice(v.row(r));
            }
        }
        let ids: Vec<_> = parts.iter().map(|p| p.id).collect();
        let op = Op::ConcatCols {
            parts: ids
                .iter()
                .copied()
                .zip(values.iter().map(|v| v.cols()))
                .collect(),
        };
        Ok(self.push(with_shape(&[rows, total], out), op, &ids))
    }
}
