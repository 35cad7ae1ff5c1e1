#![allow(dead_code)]

use dbgfqn::config::{EncoderConfig, SublayerVariant};
use dbgfqn::QNetwork;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ALL_SUBLAYERS: [SublayerVariant; 8] = [
    SublayerVariant::Ffn {
        layers: 1,
        expansion: None,
    },
    SublayerVariant::Ffn {
        layers: 2,
        expansion: Some(4),
    },
    SublayerVariant::Rnn,
    SublayerVariant::Lstm,
    SublayerVariant::Gru,
    SublayerVariant::BiRnn,
    SublayerVariant::BiLstm,
    SublayerVariant::BiGru,
];

/// D=8, two heads, one block, context 4, three observation features and
/// two actions.
pub fn tiny(sublayer: SublayerVariant) -> EncoderConfig {
    EncoderConfig {
        heads: 2,
        encoder_layers: 1,
        context_length: 4,
        ..EncoderConfig::with_sublayer(sublayer, 8, 3, 2)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn network(cfg: EncoderConfig, seed: u64) -> QNetwork<f64> {
    QNetwork::new(cfg, &mut rng(seed)).unwrap()
}

pub fn param(net: &QNetwork<f64>, name: &str) -> (Vec<usize>, Vec<f64>) {
    let p = net.params();
    let v = p.value(p.id(name).unwrap_or_else(|| panic!("no parameter {name}")));
    (v.shape().to_vec(), v.data().to_vec())
}

pub fn set_param(net: &mut QNetwork<f64>, name: &str, f: impl Fn(usize) -> f64) {
    let p = net.params_mut();
    let id = p.id(name).unwrap();
    for (i, v) in p.value_mut(id).data_mut().iter_mut().enumerate() {
        *v = f(i);
    }
}

type Rows = Vec<Vec<f64>>;

/// `x·W + b` with W stored row-major `[in, out]`.
fn linear(x: &Rows, w: &(Vec<usize>, Vec<f64>), b: Option<&(Vec<usize>, Vec<f64>)>) -> Rows {
    let (n_in, n_out) = (w.0[0], w.0[1]);
    x.iter()
        .map(|row| {
            (0..n_out)
                .map(|j| {
                    let mut s = b.map_or(0.0, |b| b.1[j]);
                    for i in 0..n_in {
                        s += row[i] * w.1[i * n_out + j];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn layer_norm(x: &Rows, gain: &[f64], bias: &[f64]) -> Rows {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + 1e-5).sqrt();
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) * inv * gain[i] + bias[i])
                .collect()
        })
        .collect()
}

fn add_relu(x: &Rows, y: &Rows) -> Rows {
    x.iter()
        .zip(y)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v.max(0.0)).collect())
        .collect()
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn dot_col(x: &[f64], w: &[f64], cols: usize, col: usize) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, v)| v * w[i * cols + col])
        .sum()
}

/// One recurrent cell step. Gate blocks r,z,n (GRU) or i,f,g,o (LSTM).
pub fn cell_step(
    kind: SublayerVariant,
    x: &[f64],
    h: &[f64],
    c: &[f64],
    wx: &[f64],
    wh: &[f64],
    b: &[f64],
    hidden: usize,
) -> (Vec<f64>, Vec<f64>) {
    let gates = kind.cell().unwrap().gates();
    let g = gates * hidden;
    let pre = |col: usize, hin: &[f64]| dot_col(x, wx, g, col) + dot_col(hin, wh, g, col) + b[col];
    match gates {
        1 => ((0..hidden).map(|j| pre(j, h).tanh()).collect(), vec![]),
        3 => {
            let r: Vec<f64> = (0..hidden).map(|j| sigmoid(pre(j, h))).collect();
            let z: Vec<f64> = (0..hidden).map(|j| sigmoid(pre(hidden + j, h))).collect();
            let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
            let n: Vec<f64> = (0..hidden)
                .map(|j| pre(2 * hidden + j, &rh).tanh())
                .collect();
            (
                (0..hidden)
                    .map(|j| (1.0 - z[j]) * h[j] + z[j] * n[j])
                    .collect(),
                vec![],
            )
        }
        _ => {
            let i: Vec<f64> = (0..hidden).map(|j| sigmoid(pre(j, h))).collect();
            let f: Vec<f64> = (0..hidden).map(|j| sigmoid(pre(hidden + j, h))).collect();
            let gg: Vec<f64> = (0..hidden).map(|j| pre(2 * hidden + j, h).tanh()).collect();
            let o: Vec<f64> = (0..hidden)
                .map(|j| sigmoid(pre(3 * hidden + j, h)))
                .collect();
            let c2: Vec<f64> = (0..hidden).map(|j| f[j] * c[j] + i[j] * gg[j]).collect();
            ((0..hidden).map(|j| o[j] * c2[j].tanh()).collect(), c2)
        }
    }
}

fn scan(
    kind: SublayerVariant,
    x: &Rows,
    valid: usize,
    net: &QNetwork<f64>,
    prefix: &str,
    reverse: bool,
) -> Rows {
    let hidden = net.config().recurrent_hidden;
    let wx = param(net, &format!("{prefix}.wx")).1;
    let wh = param(net, &format!("{prefix}.wh")).1;
    let bx = param(net, &format!("{prefix}.bx")).1;
    let bh = param(net, &format!("{prefix}.bh")).1;
    let b: Vec<f64> = bx.iter().zip(&bh).map(|(a, b)| a + b).collect();
    let mut out = vec![vec![0.0; hidden]; x.len()];
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    let order: Vec<usize> = if reverse {
        (0..valid).rev().collect()
    } else {
        (0..valid).collect()
    };
    for t in order {
        let (h2, c2) = cell_step(kind, &x[t], &h, &c, &wx, &wh, &b, hidden);
        h = h2;
        if !c2.is_empty() {
            c = c2;
        }
        out[t] = h.clone();
    }
    out
}

/// Q-values at every position of one window, computed without the tape.
pub fn reference_q(net: &QNetwork<f64>, obs: &Rows, valid: usize) -> Rows {
    let cfg = *net.config();
    let (d, heads) = (cfg.embed_dim, cfg.heads);
    let dh = d / heads;
    let pos = param(net, "pos_embed").1;
    let mut x = linear(
        obs,
        &param(net, "embed.weight"),
        Some(&param(net, "embed.bias")),
    );
    for (t, row) in x.iter_mut().enumerate() {
        for j in 0..d {
            row[j] += pos[t * d + j];
        }
    }
    for l in 0..cfg.encoder_layers {
        let p = |s: &str| param(net, &format!("block{l}.{s}"));
        let q = linear(&x, &p("attn.wq"), Some(&p("attn.bq")));
        let k = linear(&x, &p("attn.wk"), Some(&p("attn.bk")));
        let v = linear(&x, &p("attn.wv"), Some(&p("attn.bv")));
        let mut heads_out = vec![vec![0.0; d]; x.len()];
        for hd in 0..heads {
            let cols = hd * dh..(hd + 1) * dh;
            for t in 0..x.len() {
                let scores: Vec<f64> = (0..=t)
                    .map(|s| {
                        cols.clone().map(|c| q[t][c] * k[s][c]).sum::<f64>() / (dh as f64).sqrt()
                    })
                    .collect();
                let m = scores.iter().copied().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in cols.clone() {
                    heads_out[t][c] = (0..=t).map(|s| e[s] / z * v[s][c]).sum();
                }
            }
        }
        let attn = linear(&heads_out, &p("attn.wout"), Some(&p("attn.bout")));
        let l1 = layer_norm(&add_relu(&x, &attn), &p("ln1.gain").1, &p("ln1.bias").1);
        let sub = match cfg.sublayer_variant {
            SublayerVariant::Ffn { layers, expansion } => {
                let n = if expansion.is_some() { layers + 1 } else { 1 };
                let mut h = l1.clone();
                for i in 0..n {
                    h = linear(
                        &h,
                        &p(&format!("ffn.{i}.weight")),
                        Some(&p(&format!("ffn.{i}.bias"))),
                    );
                    if i + 1 < n {
                        h = h
                            .into_iter()
                            .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
                            .collect();
                    }
                }
                h
            }
            kind => {
                let fwd = scan(kind, &l1, valid, net, &format!("block{l}.rec.fwd"), false);
                if kind.bidirectional() {
                    let bwd = scan(kind, &l1, valid, net, &format!("block{l}.rec.bwd"), true);
                    fwd.into_iter()
                        .zip(bwd)
                        .map(|(a, b)| [a, b].concat())
                        .collect()
                } else {
                    fwd
                }
            }
        };
        x = layer_norm(&add_relu(&l1, &sub), &p("ln2.gain").1, &p("ln2.bias").1);
    }
    linear(&x, &param(net, "head.weight"), None)
}
