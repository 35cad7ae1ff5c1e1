//! Fused recurrent scans (vanilla tanh RNN, GRU, LSTM) with hand-written
//! backpropagation through time.
//!
//! Weights follow the `x·W` convention: `wx` is `input × gates·hidden`,
//! `wh` is `hidden × gates·hidden`, and gate blocks are contiguous column
//! ranges in the order r,z,n (GRU) or i,f,g,o (LSTM).
//!
//! The GRU candidate applies the reset gate before the hidden projection,
//! `n = tanh(Wx_n·x + Wh_n·(r∘h) + b)`, and blends as `h' = (1−z)∘h + z∘n`.

use crate::error::{Result, TensorError};
use crate::scalar::{gemm, MatView};
use crate::tape::{Op, Var};
use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Rnn,
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanSpec {
    pub kind: CellKind,
    pub hidden: usize,
    /// Run from the last valid position back to position 0.
    pub reverse: bool,
    pub batch: usize,
    pub seq: usize,
    /// Number of leading (non-pad) positions in each sequence.
    pub valid_lens: Vec<usize>,
}

impl ScanSpec {
    fn position(&self, b: usize, step: usize) -> usize {
        if self.reverse {
            self.valid_lens[b] - 1 - step
        } else {
            step
        }
    }
}

pub(crate) struct ScanCache<T> {
    /// Hidden state entering each step, `seq × batch × hidden`.
    h_prev: Vec<T>,
    /// Post-activation gate values, `seq × batch × gates·hidden`.
    gates: Vec<T>,
    /// LSTM only: cell state entering each step and `tanh` of the new cell.
    c_prev: Vec<T>,
    c_tanh: Vec<T>,
}

pub(crate) struct ScanGrads<T> {
    pub x: Vec<T>,
    pub wx: Vec<T>,
    pub wh: Vec<T>,
    pub bias: Vec<T>,
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub(crate) fn forward<T: Scalar>(
    x: &Tensor<T>,
    wx: &Tensor<T>,
    wh: &Tensor<T>,
    bx: &Tensor<T>,
    bh: &Tensor<T>,
    spec: &ScanSpec,
) -> (Tensor<T>, ScanCache<T>) {
    let (nb, s, h) = (spec.batch, spec.seq, spec.hidden);
    let gh = spec.kind.gates() * h;
    let input = x.cols();
    let rows = nb * s;

    let mut xw = vec![T::zero(); rows * gh];
    gemm(
        rows,
        input,
        gh,
        MatView::new(x.data(), input),
        MatView::new(wx.data(), gh),
        &mut xw,
        gh,
        false,
    );
    for row in xw.chunks_mut(gh) {
        for ((v, a), b) in row.iter_mut().zip(bx.data()).zip(bh.data()) {
            *v = *v + *a + *b;
        }
    }

    let lstm = spec.kind == CellKind::Lstm;
    let mut cache = ScanCache {
        h_prev: vec![T::zero(); s * nb * h],
        gates: vec![T::zero(); s * nb * gh],
        c_prev: if lstm {
            vec![T::zero(); s * nb * h]
        } else {
            Vec::new()
        },
        c_tanh: if lstm {
            vec![T::zero(); s * nb * h]
        } else {
            Vec::new()
        },
    };
    let mut out = vec![T::zero(); rows * h];
    let mut state = vec![T::zero(); nb * h];
    let mut cell = vec![T::zero(); if lstm { nb * h } else { 0 }];
    let mut pre = vec![T::zero(); nb * gh];
    let mut rh = vec![T::zero(); nb * h];
    let whd = wh.data();

    for step in 0..s {
        let active: Vec<bool> = spec.valid_lens.iter().map(|&l| step < l).collect();
        if !active.iter().any(|a| *a) {
            break;
        }
        cache.h_prev[step * nb * h..(step + 1) * nb * h].copy_from_slice(&state);
        if lstm {
            cache.c_prev[step * nb * h..(step + 1) * nb * h].copy_from_slice(&cell);
        }
        // Recurrent projection for all gates (GRU: only r and z here).
        let direct = if spec.kind == CellKind::Gru {
            2 * h
        } else {
            gh
        };
        gemm(
            nb,
            h,
            direct,
            MatView::new(&state, h),
            MatView::new(whd, gh),
            &mut pre,
            gh,
            false,
        );
        for b in 0..nb {
            if !active[b] {
                continue;
            }
            let row = b * s + spec.position(b, step);
            for (p, a) in pre[b * gh..b * gh + direct].iter_mut().zip(&xw[row * gh..]) {
                *p = *p + *a;
            }
        }
        let gates = &mut cache.gates[step * nb * gh..(step + 1) * nb * gh];
        match spec.kind {
            CellKind::Rnn => {
                for b in (0..nb).filter(|&b| active[b]) {
                    for j in 0..h {
                        let v = pre[b * gh + j].tanh();
                        gates[b * gh + j] = v;
                        state[b * h + j] = v;
                    }
                }
            }
            CellKind::Gru => {
                for b in (0..nb).filter(|&b| active[b]) {
                    for j in 0..2 * h {
                        gates[b * gh + j] = sigmoid(pre[b * gh + j]);
                    }
                    for j in 0..h {
                        rh[b * h + j] = gates[b * gh + j] * state[b * h + j];
                    }
                }
                gemm(
                    nb,
                    h,
                    h,
                    MatView::new(&rh, h),
                    MatView::new(&whd[2 * h..], gh),
                    &mut pre[2 * h..],
                    gh,
                    false,
                );
                for b in (0..nb).filter(|&b| active[b]) {
                    let row = b * s + spec.position(b, step);
                    for j in 0..h {
                        let n = (pre[b * gh + 2 * h + j] + xw[row * gh + 2 * h + j]).tanh();
                        gates[b * gh + 2 * h + j] = n;
                        let z = gates[b * gh + h + j];
                        let hp = state[b * h + j];
                        state[b * h + j] = (T::one() - z) * hp + z * n;
                    }
                }
            }
            CellKind::Lstm => {
                let c_tanh = &mut cache.c_tanh[step * nb * h..(step + 1) * nb * h];
                for b in (0..nb).filter(|&b| active[b]) {
                    for j in 0..h {
                        let base = b * gh;
                        let i = sigmoid(pre[base + j]);
                        let f = sigmoid(pre[base + h + j]);
                        let g = pre[base + 2 * h + j].tanh();
                        let o = sigmoid(pre[base + 3 * h + j]);
                        gates[base + j] = i;
                        gates[base + h + j] = f;
                        gates[base + 2 * h + j] = g;
                        gates[base + 3 * h + j] = o;
                        let c = f * cell[b * h + j] + i * g;
                        cell[b * h + j] = c;
                        let tc = c.tanh();
                        c_tanh[b * h + j] = tc;
                        state[b * h + j] = o * tc;
                    }
                }
            }
        }
        for b in (0..nb).filter(|&b| active[b]) {
            let row = b * s + spec.position(b, step);
            out[row * h..(row + 1) * h].copy_from_slice(&state[b * h..(b + 1) * h]);
        }
    }
    (
        Tensor::new([rows, h], out).expect("scan output shape"),
        cache,
    )
}

pub(crate) fn backward<T: Scalar>(
    x: &Tensor<T>,
    wx: &Tensor<T>,
    wh: &Tensor<T>,
    spec: &ScanSpec,
    cache: &ScanCache<T>,
    g: &[T],
) -> ScanGrads<T> {
    let (nb, s, h) = (spec.batch, spec.seq, spec.hidden);
    let gh = spec.kind.gates() * h;
    let input = x.cols();
    let rows = nb * s;
    let whd = wh.data();

    let mut dxw = vec![T::zero(); rows * gh];
    let mut dwh = vec![T::zero(); h * gh];
    let mut carry = vec![T::zero(); nb * h];
    let mut carry_c = vec![T::zero(); nb * h];
    let mut dpre = vec![T::zero(); nb * gh];
    let mut dh_prev = vec![T::zero(); nb * h];
    let mut rh = vec![T::zero(); nb * h];
    let mut drh = vec![T::zero(); nb * h];

    for step in (0..s).rev() {
        let active: Vec<bool> = spec.valid_lens.iter().map(|&l| step < l).collect();
        if !active.iter().any(|a| *a) {
            continue;
        }
        let h_prev = &cache.h_prev[step * nb * h..(step + 1) * nb * h];
        let gates = &cache.gates[step * nb * gh..(step + 1) * nb * gh];
        dpre.iter_mut().for_each(|v| *v = T::zero());
        dh_prev.iter_mut().for_each(|v| *v = T::zero());
        for b in 0..nb {
            if !active[b] {
                continue;
            }
            let row = b * s + spec.position(b, step);
            for j in 0..h {
                let dh = carry[b * h + j] + g[row * h + j];
                let base = b * gh;
                match spec.kind {
                    CellKind::Rnn => {
                        let y = gates[base + j];
                        dpre[base + j] = dh * (T::one() - y * y);
                    }
                    CellKind::Gru => {
                        let z = gates[base + h + j];
                        let n = gates[base + 2 * h + j];
                        let hp = h_prev[b * h + j];
                        dh_prev[b * h + j] = dh * (T::one() - z);
                        dpre[base + h + j] = dh * (n - hp) * z * (T::one() - z);
                        dpre[base + 2 * h + j] = dh * z * (T::one() - n * n);
                        rh[b * h + j] = gates[base + j] * hp;
                    }
                    CellKind::Lstm => {
                        let i = gates[base + j];
                        let f = gates[base + h + j];
                        let gg = gates[base + 2 * h + j];
                        let o = gates[base + 3 * h + j];
                        let tc = cache.c_tanh[step * nb * h + b * h + j];
                        let cp = cache.c_prev[step * nb * h + b * h + j];
                        let dc = carry_c[b * h + j] + dh * o * (T::one() - tc * tc);
                        dpre[base + j] = dc * gg * i * (T::one() - i);
                        dpre[base + h + j] = dc * cp * f * (T::one() - f);
                        dpre[base + 2 * h + j] = dc * i * (T::one() - gg * gg);
                        dpre[base + 3 * h + j] = dh * tc * o * (T::one() - o);
                        carry_c[b * h + j] = dc * f;
                    }
                }
            }
        }
        if spec.kind == CellKind::Gru {
            // Candidate path: pre_n = xw_n + (r∘h)·Wh_n.
            gemm(
                nb,
                h,
                h,
                MatView::new(&dpre[2 * h..], gh),
                MatView::new(&whd[2 * h..], gh).t(),
                &mut drh,
                h,
                false,
            );
            gemm(
                h,
                nb,
                h,
                MatView::new(&rh, h).t(),
                MatView::new(&dpre[2 * h..], gh),
                &mut dwh[2 * h..],
                gh,
                true,
            );
            for b in (0..nb).filter(|&b| active[b]) {
                for j in 0..h {
                    let r = gates[b * gh + j];
                    let d = drh[b * h + j];
                    dh_prev[b * h + j] = dh_prev[b * h + j] + d * r;
                    dpre[b * gh + j] = d * h_prev[b * h + j] * r * (T::one() - r);
                }
            }
        }
        let direct = if spec.kind == CellKind::Gru {
            2 * h
        } else {
            gh
        };
        gemm(
            nb,
            direct,
            h,
            MatView::new(&dpre, gh),
            MatView::new(whd, gh).t(),
            &mut dh_prev,
            h,
            true,
        );
        gemm(
            h,
            nb,
            direct,
            MatView::new(h_prev, h).t(),
            MatView::new(&dpre, gh),
            &mut dwh,
            gh,
            true,
        );
        for b in 0..nb {
            if !active[b] {
                dh_prev[b * h..(b + 1) * h]
                    .iter_mut()
                    .for_each(|v| *v = T::zero());
                continue;
            }
            let row = b * s + spec.position(b, step);
            dxw[row * gh..(row + 1) * gh].copy_from_slice(&dpre[b * gh..(b + 1) * gh]);
        }
        std::mem::swap(&mut carry, &mut dh_prev);
    }

    let mut dx = vec![T::zero(); rows * input];
    gemm(
        rows,
        gh,
        input,
        MatView::new(&dxw, gh),
        MatView::new(wx.data(), gh).t(),
        &mut dx,
        input,
        false,
    );
    let mut dwx = vec![T::zero(); input * gh];
    gemm(
        input,
        rows,
        gh,
        MatView::new(x.data(), input).t(),
        MatView::new(&dxw, gh),
        &mut dwx,
        gh,
        false,
    );
    let mut bias = vec![T::zero(); gh];
    for row in dxw.chunks(gh) {
        for (b, d) in bias.iter_mut().zip(row) {
            *b = *b + *d;
        }
    }
    ScanGrads {
        x: dx,
        wx: dwx,
        wh: dwh,
        bias,
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Runs a recurrent layer over `batch × seq` rows of `self`, emitting the
    /// hidden state at every valid position and zeros at pad positions.
    pub fn recurrent_scan(
        self,
        wx: Var<'t, T>,
        wh: Var<'t, T>,
        bx: Var<'t, T>,
        bh: Var<'t, T>,
        spec: ScanSpec,
    ) -> Result<Var<'t, T>> {
        let (xv, wxv, whv, bxv, bhv) =
            (self.value(), wx.value(), wh.value(), bx.value(), bh.value());
        let gh = spec.kind.gates() * spec.hidden;
        let expect = |t: &Tensor<T>, shape: &[usize], what: &str| -> Result<()> {
            if t.shape() != shape {
                return Err(TensorError::Contract {
                    op: "recurrent_scan",
                    detail: format!("{what} has shape {:?}, expected {shape:?}", t.shape()),
                });
            }
            Ok(())
        };
        expect(&wxv, &[xv.cols(), gh], "input weights")?;
        expect(&whv, &[spec.hidden, gh], "hidden weights")?;
        expect(&bxv, &[gh], "input bias")?;
        expect(&bhv, &[gh], "hidden bias")?;
        if xv.rows() != spec.batch * spec.seq
            || spec.valid_lens.len() != spec.batch
            || spec.valid_lens.iter().any(|&l| l > spec.seq)
        {
            return Err(TensorError::Contract {
                op: "recurrent_scan",
                detail: format!(
                    "{} rows do not match batch {} × seq {} with valid lengths {:?}",
                    xv.rows(),
                    spec.batch,
                    spec.seq,
                    spec.valid_lens
                ),
            });
        }
        let (out, cache) = forward(&xv, &wxv, &whv, &bxv, &bhv, &spec);
        let op = Op::Recurrent {
            x: self.id,
            wx: wx.id,
            wh: wh.id,
            bx: bx.id,
            bh: bh.id,
            spec,
            cache,
        };
        Ok(self
            .tape
            .push(out, op, &[self.id, wx.id, wh.id, bx.id, bh.id]))
    }
}
