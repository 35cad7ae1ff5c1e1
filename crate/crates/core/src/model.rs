//! The Q-network: observation embedding plus learned positions, a stack of
//! post-norm encoder blocks with causal self-attention and a pluggable
//! sublayer, and a linear Q head evaluated at every timestep.

use dbgfqn_tensor::{
    AttentionSpec, CellKind, ParamId, ParamSet, Scalar, ScanSpec, Tape, Tensor, Var,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{EncoderConfig, SublayerVariant};
use crate::count::ParameterReport;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const POSITION_INIT_STD: f64 = 0.02;

#[derive(Clone, Debug)]
struct Direction {
    wx: ParamId,
    wh: ParamId,
    bx: ParamId,
    bh: ParamId,
}

#[derive(Clone, Debug)]
enum Sublayer {
    Ffn(Vec<(ParamId, ParamId)>),
    Recurrent {
        kind: CellKind,
        dirs: Vec<Direction>,
    },
}

#[derive(Clone, Debug)]
struct Block {
    attn: [ParamId; 8],
    ln1: (ParamId, ParamId),
    sublayer: Sublayer,
    ln2: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
struct Ids {
    embed: (ParamId, ParamId),
    pos: ParamId,
    blocks: Vec<Block>,
    head: ParamId,
}

/// Shapes of every parameter tensor, in allocation order.
pub fn parameter_shapes(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let (d, h) = (cfg.embed_dim, cfg.recurrent_hidden);
    let mut out = vec![
        ("embed.weight".to_string(), vec![cfg.obs_width, d]),
        ("embed.bias".to_string(), vec![d]),
        ("pos_embed".to_string(), vec![cfg.context_length, d]),
    ];
    for l in 0..cfg.encoder_layers {
        let p = |s: &str| format!("block{l}.{s}");
        for m in ["q", "k", "v", "out"] {
            out.push((p(&format!("attn.w{m}")), vec![d, d]));
            out.push((p(&format!("attn.b{m}")), vec![d]));
        }
        out.push((p("ln1.gain"), vec![d]));
        out.push((p("ln1.bias"), vec![d]));
        match cfg.sublayer_variant {
            SublayerVariant::Ffn { layers, expansion } => {
                let widths: Vec<usize> = match expansion {
                    None => vec![d, d],
                    Some(e) => std::iter::once(d)
                        .chain(std::iter::repeat(e * d).take(layers))
                        .chain([d])
                        .collect(),
                };
                for (i, w) in widths.windows(2).enumerate() {
                    out.push((p(&format!("ffn.{i}.weight")), vec![w[0], w[1]]));
                    out.push((p(&format!("ffn.{i}.bias")), vec![w[1]]));
                }
            }
            v => {
                let g = v.cell().expect("recurrent variant").gates() * h;
                let dirs: &[&str] = if v.bidirectional() {
                    &["fwd", "bwd"]
                } else {
                    &["fwd"]
                };
                for dir in dirs {
                    out.push((p(&format!("rec.{dir}.wx")), vec![d, g]));
                    out.push((p(&format!("rec.{dir}.wh")), vec![h, g]));
                    out.push((p(&format!("rec.{dir}.bx")), vec![g]));
                    out.push((p(&format!("rec.{dir}.bh")), vec![g]));
                }
            }
        }
        out.push((p("ln2.gain"), vec![d]));
        out.push((p("ln2.bias"), vec![d]));
    }
    out.push(("head.weight".to_string(), vec![d, cfg.action_count]));
    out
}

fn resolve(cfg: &EncoderConfig, params: &ParamSet<impl Scalar>) -> Result<Ids> {
    let id = |name: String| {
        params
            .id(&name)
            .ok_or_else(|| Error::Config(format!("parameter `{name}` is missing")))
    };
    let mut blocks = Vec::new();
    for l in 0..cfg.encoder_layers {
        let p = |s: &str| format!("block{l}.{s}");
        let mut attn = Vec::new();
        for m in ["q", "k", "v", "out"] {
            attn.push(id(p(&format!("attn.w{m}")))?);
            attn.push(id(p(&format!("attn.b{m}")))?);
        }
        let sublayer = match cfg.sublayer_variant {
            SublayerVariant::Ffn { layers, expansion } => {
                let n = if expansion.is_some() { layers + 1 } else { 1 };
                Sublayer::Ffn(
                    (0..n)
                        .map(|i| {
                            Ok((
                                id(p(&format!("ffn.{i}.weight")))?,
                                id(p(&format!("ffn.{i}.bias")))?,
                            ))
                        })
                        .collect::<Result<_>>()?,
                )
            }
            v => {
                let dirs: &[&str] = if v.bidirectional() {
                    &["fwd", "bwd"]
                } else {
                    &["fwd"]
                };
                Sublayer::Recurrent {
                    kind: v.cell().expect("recurrent variant"),
                    dirs: dirs
                        .iter()
                        .map(|dir| {
                            Ok(Direction {
                                wx: id(p(&format!("rec.{dir}.wx")))?,
                                wh: id(p(&format!("rec.{dir}.wh")))?,
                                bx: id(p(&format!("rec.{dir}.bx")))?,
                                bh: id(p(&format!("rec.{dir}.bh")))?,
                            })
                        })
                        .collect::<Result<_>>()?,
                }
            }
        };
        blocks.push(Block {
            attn: attn.try_into().expect("eight attention tensors"),
            ln1: (id(p("ln1.gain"))?, id(p("ln1.bias"))?),
            sublayer,
            ln2: (id(p("ln2.gain"))?, id(p("ln2.bias"))?),
        });
    }
    Ok(Ids {
        embed: (id("embed.weight".into())?, id("embed.bias".into())?),
        pos: id("pos_embed".into())?,
        blocks,
        head: id("head.weight".into())?,
    })
}

#[derive(Clone, Debug)]
pub struct QNetwork<T: Scalar = f32> {
    config: EncoderConfig,
    params: ParamSet<T>,
    ids: Ids,
}

/// One GRU step from `h` written with primitive tape ops.
pub fn gru_cell<'t, T: Scalar>(
    x: Var<'t, T>,
    h: Var<'t, T>,
    wx: Var<'t, T>,
    wh: Var<'t, T>,
    bx: Var<'t, T>,
    bh: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let hidden = h.shape()[h.shape().len() - 1];
    let xw = x.matmul(wx)?.add_broadcast(bx)?.add_broadcast(bh)?;
    let gate = |i: usize, input: Var<'t, T>| -> Result<Var<'t, T>> {
        Ok(xw
            .slice_cols(i * hidden, hidden)?
            .add(input.matmul(wh.slice_cols(i * hidden, hidden)?)?)?)
    };
    let r = gate(0, h)?.sigmoid();
    let z = gate(1, h)?.sigmoid();
    let n = gate(2, r.mul(h)?)?.tanh();
    Ok(h.add(z.mul(n.sub(h)?)?)?)
}

impl<T: Scalar> QNetwork<T> {
    /// Weights uniform in ±1/sqrt(fan_in), zero biases, unit norm gains and
    /// positions drawn from N(0, 0.02²).
    pub fn new(config: EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let normal = Normal::new(0.0, POSITION_INIT_STD).expect("finite std");
        let mut params = ParamSet::new();
        for (name, shape) in parameter_shapes(&config) {
            let len: usize = shape.iter().product();
            let data: Vec<T> = if name == "pos_embed" {
                (0..len).map(|_| T::from_f64(normal.sample(rng))).collect()
            } else if name.ends_with(".gain") {
                vec![T::one(); len]
            } else if shape.len() == 2 {
                let bound = 1.0 / (shape[0] as f64).sqrt();
                (0..len)
                    .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
                    .collect()
            } else {
                vec![T::zero(); len]
            };
            params.add(name, Tensor::new(shape, data)?);
        }
        Self::from_params(config, params)
    }

    /// Wraps an existing parameter set, checking names and shapes.
    pub fn from_params(config: EncoderConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let expected = parameter_shapes(&config);
        if expected.len() != params.len() {
            return Err(Error::Config(format!(
                "config expects {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let id = params
                .id(name)
                .ok_or_else(|| Error::Config(format!("parameter `{name}` is missing")))?;
            if params.value(id).shape() != shape.as_slice() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    params.value(id).shape()
                )));
            }
        }
        let ids = resolve(&config, &params)?;
        Ok(QNetwork {
            config,
            params,
            ids,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> QNetwork<U> {
        QNetwork {
            config: self.config,
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    /// Counts of the tensors actually allocated, grouped by submodule.
    pub fn allocated_report(&self) -> ParameterReport {
        let mut report = ParameterReport::default();
        for (_, p) in self.params.iter() {
            report.add(crate::count::submodule_of(&p.name), p.value.len());
        }
        report
    }

    /// Hard copy of all parameters from `other`.
    pub fn copy_from(&mut self, other: &QNetwork<T>) -> Result<()> {
        if self.config != other.config {
            return Err(Error::Config(
                "cannot copy parameters between different encoder configs".into(),
            ));
        }
        Ok(self.params.copy_from(&other.params)?)
    }

    fn load<'t>(&self, tape: &'t Tape<T>, id: ParamId, trainable: bool) -> Var<'t, T> {
        if trainable {
            tape.param(&self.params, id)
        } else {
            tape.frozen_param(&self.params, id)
        }
    }

    /// Q-values for every position of a right-padded batch.
    ///
    /// `obs` holds `valid_lens.len()` windows of `seq ≤ context_length` rows
    /// each. Returns `[batch·seq, action_count]`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape<T>,
        obs: Var<'t, T>,
        valid_lens: &[usize],
        trainable: bool,
    ) -> Result<Var<'t, T>> {
        let x = self.encode(tape, obs, valid_lens, trainable)?;
        Ok(x.matmul(self.load(tape, self.ids.head, trainable))?)
    }

    /// Final encoder output, `[batch·seq, embed_dim]`.
    pub fn encode<'t>(
        &self,
        tape: &'t Tape<T>,
        obs: Var<'t, T>,
        valid_lens: &[usize],
        trainable: bool,
    ) -> Result<Var<'t, T>> {
        let mut x = self.embed(tape, obs, valid_lens, trainable)?;
        for l in 0..self.ids.blocks.len() {
            x = self.encoder_block(tape, x, l, valid_lens, trainable)?;
        }
        Ok(x)
    }

    fn window_len(&self, rows: usize, valid_lens: &[usize]) -> Result<usize> {
        let batch = valid_lens.len();
        if batch == 0 || rows % batch != 0 {
            return Err(Error::Config(format!(
                "{rows} rows cannot split into {batch} windows"
            )));
        }
        let seq = rows / batch;
        if seq > self.config.context_length || valid_lens.iter().any(|&l| l == 0 || l > seq) {
            return Err(Error::Config(format!(
                "window length {seq} with valid lengths {valid_lens:?} exceeds context {} or has empty windows",
                self.config.context_length
            )));
        }
        Ok(seq)
    }

    /// `obs·W_φ + b_φ` plus the positional row of each timestep.
    pub fn embed<'t>(
        &self,
        tape: &'t Tape<T>,
        obs: Var<'t, T>,
        valid_lens: &[usize],
        trainable: bool,
    ) -> Result<Var<'t, T>> {
        let shape = obs.shape();
        if shape.len() != 2 || shape[1] != self.config.obs_width {
            return Err(Error::ObsWidthMismatch {
                env: *shape.last().unwrap_or(&0),
                encoder: self.config.obs_width,
            });
        }
        let seq = self.window_len(shape[0], valid_lens)?;
        let p = |id| self.load(tape, id, trainable);
        let pos = p(self.ids.pos).slice_rows(0, seq)?;
        Ok(obs
            .matmul(p(self.ids.embed.0))?
            .add_broadcast(p(self.ids.embed.1))?
            .add_broadcast(pos)?)
    }

    /// Causal multi-head self-attention of block `l`, after the output
    /// projection.
    pub fn attention<'t>(
        &self,
        tape: &'t Tape<T>,
        x: Var<'t, T>,
        l: usize,
        valid_lens: &[usize],
        trainable: bool,
    ) -> Result<Var<'t, T>> {
        let seq = self.window_len(x.shape()[0], valid_lens)?;
        let p = |id| self.load(tape, id, trainable);
        let a = &self.ids.blocks[l].attn;
        let q = x.matmul(p(a[0]))?.add_broadcast(p(a[1]))?;
        let k = x.matmul(p(a[2]))?.add_broadcast(p(a[3]))?;
        let v = x.matmul(p(a[4]))?.add_broadcast(p(a[5]))?;
        let spec = AttentionSpec {
            batch: valid_lens.len(),
            seq,
            heads: self.config.heads,
            causal: true,
        };
        Ok(q.attention(k, v, spec)?
            .matmul(p(a[6]))?
            .add_broadcast(p(a[7]))?)
    }

    /// The feed-forward or recurrent sublayer of block `l`, before its ReLU.
    /// Recurrent outputs are zero at padding rows.
    pub fn sublayer<'t>(
        &self,
        tape: &'t Tape<T>,
        x: Var<'t, T>,
        l: usize,
        valid_lens: &[usize],
        trainable: bool,
    ) -> Result<Var<'t, T>> {
        let seq = self.window_len(x.shape()[0], valid_lens)?;
        let p = |id| self.load(tape, id, trainable);
        match &self.ids.blocks[l].sublayer {
            Sublayer::Ffn(layers) => {
                let mut h = x;
                for (i, (w, b)) in layers.iter().enumerate() {
                    h = h.matmul(p(*w))?.add_broadcast(p(*b))?;
                    if i + 1 < layers.len() {
                        h = h.relu();
                    }
                }
                Ok(h)
            }
            Sublayer::Recurrent { kind, dirs } => {
                let outs = dirs
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        let spec = ScanSpec {
                            kind: *kind,
                            hidden: self.config.recurrent_hidden,
                            reverse: i == 1,
                            batch: valid_lens.len(),
                            seq,
                            valid_lens: valid_lens.to_vec(),
                        };
                        x.recurrent_scan(p(d.wx), p(d.wh), p(d.bx), p(d.bh), spec)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                if outs.len() == 1 {
                    Ok(outs[0])
                } else {
                    Ok(tape.concat_cols(&outs)?)
                }
            }
        }
    }

    /// `L1 = LN(x + relu(attn(x)))`, then `LN(L1 + relu(sublayer(L1)))`.
    pub fn encoder_block<'t>(
        &self,
        tape: &'t Tape<T>,
        x: Var<'t, T>,
        l: usize,
        valid_lens: &[usize],
        trainable: bool,
    ) -> Result<Var<'t, T>> {
        let p = |id| self.load(tape, id, trainable);
        let block = &self.ids.blocks[l];
        let eps = T::from_f64(LAYER_NORM_EPS);
        let attn = self.attention(tape, x, l, valid_lens, trainable)?;
        let l1 = x
            .add(attn.relu())?
            .layer_norm(p(block.ln1.0), p(block.ln1.1), eps)?;
        let sub = self.sublayer(tape, l1, l, valid_lens, trainable)?;
        Ok(l1
            .add(sub.relu())?
            .layer_norm(p(block.ln2.0), p(block.ln2.1), eps)?)
    }

    /// Q-values without recording gradients, `[batch·seq, action_count]`.
    pub fn q_values(&self, obs: Tensor<T>, valid_lens: &[usize]) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let x = tape.constant(obs);
        let q = self.forward(&tape, x, valid_lens, false)?;
        Ok((*q.value()).clone())
    }

    /// Q-values at the newest observation of an episode history, using the
    /// last `context_length` observations as context.
    pub fn act_values(&self, history: &[Vec<f32>]) -> Result<Vec<T>> {
        let k = self.config.context_length.min(history.len());
        if k == 0 {
            return Err(Error::Config("cannot act on an empty history".into()));
        }
        let window = &history[history.len() - k..];
        let w = self.config.obs_width;
        let mut data = Vec::with_capacity(k * w);
        for obs in window {
            if obs.len() != w {
                return Err(Error::ObsWidthMismatch {
                    env: obs.len(),
                    encoder: w,
                });
            }
            data.extend(obs.iter().map(|v| T::from_f64(*v as f64)));
        }
        let q = self.q_values(Tensor::new([k, w], data)?, &[k])?;
        Ok(q.row(k - 1).to_vec())
    }
}

/// Greedy action; ties go to the lowest index.
pub fn select_action<T: Scalar>(q: &[T]) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::EmptyQ);
    }
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    Ok(best)
}
