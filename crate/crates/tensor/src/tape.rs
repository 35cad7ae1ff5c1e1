//! Reverse-mode differentiation tape.
//!
//! Every operation applied to a [`Var`] appends one node holding its output
//! value and enough saved state to run its backward rule. Nodes are only ever
//! appended, so the node list is topologically ordered by construction and a
//! single reverse sweep visits each node once.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::attention::{self, AttentionSpec};
use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamSet};
use crate::recurrent::{self, ScanCache, ScanSpec};
use crate::scalar::{gemm, MatView};
use crate::{Scalar, Tensor};

pub(crate) type NodeId = usize;

pub(crate) enum Op<T> {
    Leaf,
    MatMul {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    AddBroadcast {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        a: NodeId,
        c: T,
    },
    Sigmoid {
        a: NodeId,
    },
    Tanh {
        a: NodeId,
    },
    Relu {
        a: NodeId,
    },
    Sum {
        a: NodeId,
    },
    WeightedSum {
        a: NodeId,
        weights: Vec<T>,
    },
    Huber {
        a: NodeId,
        delta: T,
    },
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Softmax {
        a: NodeId,
    },
    ConcatCols {
        parts: Vec<(NodeId, usize)>,
    },
    SliceCols {
        a: NodeId,
        start: usize,
    },
    SliceRows {
        a: NodeId,
        start: usize,
    },
    GatherCols {
        a: NodeId,
        index: Vec<usize>,
    },
    Transpose {
        a: NodeId,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        spec: AttentionSpec,
        probs: Vec<T>,
    },
    Recurrent {
        x: NodeId,
        wx: NodeId,
        wh: NodeId,
        bx: NodeId,
        bh: NodeId,
        spec: ScanSpec,
        cache: ScanCache<T>,
    },
}

pub(crate) struct Node<T> {
    pub value: Rc<Tensor<T>>,
    pub op: Op<T>,
    pub requires_grad: bool,
    pub param: Option<ParamId>,
}

/// Records operations for one forward/backward pass.
///
/// A tape is single-use: after [`Tape::backward`] it refuses a second sweep.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T: Scalar> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: NodeId,
}

impl<T: Scalar> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T: Scalar> Copy for Var<'_, T> {}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives a gradient.
    pub fn var(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, true, None)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, false, None)
    }

    /// Records a parameter; its gradient is reported under `id` by [`Gradients::params`].
    pub fn param(&self, set: &ParamSet<T>, id: ParamId) -> Var<'_, T> {
        self.push_leaf(set.value(id).clone(), true, Some(id))
    }

    /// Records a parameter as a constant (no gradient), e.g. for target networks.
    pub fn frozen_param(&self, set: &ParamSet<T>, id: ParamId) -> Var<'_, T> {
        self.push_leaf(set.value(id).clone(), false, None)
    }

    fn push_leaf(
        &self,
        value: Tensor<T>,
        requires_grad: bool,
        param: Option<ParamId>,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            requires_grad,
            param,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn push(&self, value: Tensor<T>, op: Op<T>, inputs: &[NodeId]) -> Var<'_, T> {
        debug_assert!(value.is_finite(), "non-finite output: {value:?}");
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|&i| nodes[i].requires_grad);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
            param: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn value(&self, id: NodeId) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Propagates d(loss)/d(node) to every node reachable from `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        if self.consumed.replace(true) {
            return Err(TensorError::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: root.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![T::one()]);
        let mut leaves = Vec::new();
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if let Op::Leaf = node.op {
                leaves.push((id, node.param, g));
                continue;
            }
            backprop(&nodes, id, &g, &mut grads);
        }
        Ok(Gradients { leaves })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    leaves: Vec<(NodeId, Option<ParamId>, Vec<T>)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a leaf, `None` if it did not influence the loss.
    pub fn wrt(&self, var: Var<'_, T>) -> Option<&[T]> {
        self.leaves
            .iter()
            .find(|(id, _, _)| *id == var.id)
            .map(|(_, _, g)| g.as_slice())
    }

    /// Gradients of parameter leaves, in tape order.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &[T])> {
        self.leaves
            .iter()
            .filter_map(|(_, p, g)| p.map(|p| (p, g.as_slice())))
    }
}

fn accumulate<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    id: NodeId,
    f: impl FnOnce(&mut [T]),
) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![T::zero(); nodes[id].value.len()]);
    f(slot);
}

fn add_into<T: Scalar>(dst: &mut [T], src: impl Iterator<Item = T>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

fn backprop<T: Scalar>(nodes: &[Node<T>], id: NodeId, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            accumulate(nodes, grads, *a, |da| {
                gemm(
                    m,
                    n,
                    k,
                    MatView::new(g, n),
                    MatView::new(bv.data(), n).t(),
                    da,
                    k,
                    true,
                )
            });
            accumulate(nodes, grads, *b, |db| {
                gemm(
                    k,
                    m,
                    n,
                    MatView::new(av.data(), k).t(),
                    MatView::new(g, n),
                    db,
                    n,
                    true,
                )
            });
        }
        Op::Add { a, b } => {
            accumulate(nodes, grads, *a, |d| add_into(d, g.iter().copied()));
            accumulate(nodes, grads, *b, |d| add_into(d, g.iter().copied()));
        }
        Op::Sub { a, b } => {
            accumulate(nodes, grads, *a, |d| add_into(d, g.iter().copied()));
            accumulate(nodes, grads, *b, |d| add_into(d, g.iter().map(|v| -*v)));
        }
        Op::Mul { a, b } => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            accumulate(nodes, grads, *a, |d| {
                add_into(d, g.iter().zip(bv.data()).map(|(g, b)| *g * *b))
            });
            accumulate(nodes, grads, *b, |d| {
                add_into(d, g.iter().zip(av.data()).map(|(g, a)| *g * *a))
            });
        }
        Op::AddBroadcast { a, b } => {
            accumulate(nodes, grads, *a, |d| add_into(d, g.iter().copied()));
            accumulate(nodes, grads, *b, |d| {
                let n = d.len();
                for (i, gi) in g.iter().enumerate() {
                    d[i % n] = d[i % n] + *gi;
                }
            });
        }
        Op::Scale { a, c } => {
            accumulate(nodes, grads, *a, |d| add_into(d, g.iter().map(|v| *v * *c)));
        }
        Op::Sigmoid { a } => accumulate(nodes, grads, *a, |d| {
            add_into(
                d,
                g.iter()
                    .zip(out.data())
                    .map(|(g, y)| *g * *y * (T::one() - *y)),
            )
        }),
        Op::Tanh { a } => accumulate(nodes, grads, *a, |d| {
            add_into(
                d,
                g.iter()
                    .zip(out.data())
                    .map(|(g, y)| *g * (T::one() - *y * *y)),
            )
        }),
        Op::Relu { a } => accumulate(nodes, grads, *a, |d| {
            add_into(
                d,
                g.iter()
                    .zip(out.data())
                    .map(|(g, y)| if *y > T::zero() { *g } else { T::zero() }),
            )
        }),
        Op::Sum { a } => accumulate(nodes, grads, *a, |d| {
            for v in d.iter_mut() {
                *v = *v + g[0];
            }
        }),
        Op::WeightedSum { a, weights } => accumulate(nodes, grads, *a, |d| {
            add_into(d, weights.iter().map(|w| *w * g[0]))
        }),
        Op::Huber { a, delta } => {
            let av = &nodes[*a].value;
            accumulate(nodes, grads, *a, |d| {
                add_into(
                    d,
                    g.iter().zip(av.data()).map(|(g, x)| {
                        let slope = if x.abs() <= *delta {
                            *x
                        } else {
                            delta.copysign(*x)
                        };
                        *g * slope
                    }),
                )
            })
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let gv = &nodes[*gain].value;
            let width = gv.len();
            let n = T::from_f64(width as f64);
            accumulate(nodes, grads, *x, |dx| {
                for (r, s) in inv_std.iter().enumerate() {
                    let span = r * width..(r + 1) * width;
                    let gr = &g[span.clone()];
                    let xh = &xhat[span.clone()];
                    let mut sum_d = T::zero();
                    let mut sum_dx = T::zero();
                    for j in 0..width {
                        let dxh = gr[j] * gv.data()[j];
                        sum_d = sum_d + dxh;
                        sum_dx = sum_dx + dxh * xh[j];
                    }
                    let scale = *s / n;
                    for j in 0..width {
                        let dxh = gr[j] * gv.data()[j];
                        dx[span.start + j] =
                            dx[span.start + j] + scale * (n * dxh - sum_d - xh[j] * sum_dx);
                    }
                }
            });
            accumulate(nodes, grads, *gain, |dg| {
                for (i, (gi, xh)) in g.iter().zip(xhat).enumerate() {
                    dg[i % width] = dg[i % width] + *gi * *xh;
                }
            });
            accumulate(nodes, grads, *bias, |db| {
                for (i, gi) in g.iter().enumerate() {
                    db[i % width] = db[i % width] + *gi;
                }
            });
        }
        Op::Softmax { a } => {
            let width = out.cols();
            accumulate(nodes, grads, *a, |d| {
                for r in 0..out.rows() {
                    let span = r * width..(r + 1) * width;
                    let y = &out.data()[span.clone()];
                    let gr = &g[span.clone()];
                    let dot: T = y.iter().zip(gr).map(|(y, g)| *y * *g).sum();
                    for j in 0..width {
                        d[span.start + j] = d[span.start + j] + y[j] * (gr[j] - dot);
                    }
                }
            });
        }
        Op::ConcatCols { parts } => {
            let total = out.cols();
            let rows = out.rows();
            let mut offset = 0;
            for &(pid, w) in parts {
                accumulate(nodes, grads, pid, |d| {
                    for r in 0..rows {
                        add_into(
                            &mut d[r * w..(r + 1) * w],
                            g[r * total + offset..r * total + offset + w]
                                .iter()
                                .copied(),
                        );
                    }
                });
                offset += w;
            }
        }
        Op::SliceCols { a, start } => {
            let src_cols = nodes[*a].value.cols();
            let w = out.cols();
            accumulate(nodes, grads, *a, |d| {
                for r in 0..out.rows() {
                    let base = r * src_cols + start;
                    add_into(
                        &mut d[base..base + w],
                        g[r * w..(r + 1) * w].iter().copied(),
                    );
                }
            });
        }
        Op::SliceRows { a, start } => {
            let cols = out.cols();
            accumulate(nodes, grads, *a, |d| {
                add_into(
                    &mut d[start * cols..start * cols + g.len()],
                    g.iter().copied(),
                )
            });
        }
        Op::GatherCols { a, index } => {
            let cols = nodes[*a].value.cols();
            accumulate(nodes, grads, *a, |d| {
                for (r, (&c, gi)) in index.iter().zip(g).enumerate() {
                    d[r * cols + c] = d[r * cols + c] + *gi;
                }
            });
        }
        Op::Transpose { a } => {
            let (r, c) = (out.rows(), out.cols());
            accumulate(nodes, grads, *a, |d| {
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] = d[j * r + i] + g[i * c + j];
                    }
                }
            });
        }
        Op::Attention {
            q,
            k,
            v,
            spec,
            probs,
        } => {
            let (dq, dk, dv) = attention::backward(
                &nodes[*q].value,
                &nodes[*k].value,
                &nodes[*v].value,
                probs,
                spec,
                g,
            );
            accumulate(nodes, grads, *q, |d| add_into(d, dq.into_iter()));
            accumulate(nodes, grads, *k, |d| add_into(d, dk.into_iter()));
            accumulate(nodes, grads, *v, |d| add_into(d, dv.into_iter()));
        }
        Op::Recurrent {
            x,
            wx,
            wh,
            bx,
            bh,
            spec,
            cache,
        } => {
            let gr = recurrent::backward(
                &nodes[*x].value,
                &nodes[*wx].value,
                &nodes[*wh].value,
                spec,
                cache,
                g,
            );
            accumulate(nodes, grads, *x, |d| add_into(d, gr.x.into_iter()));
            accumulate(nodes, grads, *wx, |d| add_into(d, gr.wx.into_iter()));
            accumulate(nodes, grads, *wh, |d| add_into(d, gr.wh.into_iter()));
            // both biases enter the same pre-activation
            accumulate(nodes, grads, *bx, |d| add_into(d, gr.bias.iter().copied()));
            accumulate(nodes, grads, *bh, |d| add_into(d, gr.bias.into_iter()));
        }
    }
}
