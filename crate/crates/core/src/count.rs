//! Closed-form parameter counts, itemized per submodule.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::{EncoderConfig, SublayerVariant};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParameterReport {
    /// Submodule name to scalar count, in first-seen order.
    pub items: Vec<(String, usize)>,
}

impl ParameterReport {
    pub fn add(&mut self, submodule: impl Into<String>, count: usize) {
        let name = submodule.into();
        match self.items.iter_mut().find(|(n, _)| *n == name) {
            Some((_, c)) => *c += count,
            None => self.items.push((name, count)),
        }
    }

    pub fn total(&self) -> usize {
        self.items.iter().map(|(_, c)| c).sum()
    }

    pub fn get(&self, submodule: &str) -> usize {
        self.items
            .iter()
            .find(|(n, _)| n == submodule)
            .map_or(0, |(_, c)| *c)
    }

    /// Totals per submodule kind with the block index dropped
    /// (`attention`, `sublayer`, ...).
    pub fn by_kind(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (name, c) in &self.items {
            let kind = name.split_once('.').map_or(name.as_str(), |(_, k)| k);
            *out.entry(kind.to_string()).or_default() += c;
        }
        out
    }
}

/// Submodule a parameter tensor belongs to, e.g. `block1.attn.wq` →
/// `block1.attention`.
pub fn submodule_of(param: &str) -> String {
    let mut parts = param.split('.');
    let first = parts.next().unwrap_or_default();
    if !first.starts_with("block") {
        return match first {
            "embed" => "embedding".into(),
            "pos_embed" => "positional".into(),
            other => other.into(),
        };
    }
    let kind = match parts.next().unwrap_or_default() {
        "attn" => "attention",
        "ln1" => "norm1",
        "ln2" => "norm2",
        _ => "sublayer",
    };
    format!("{first}.{kind}")
}

pub fn sublayer_count(cfg: &EncoderConfig) -> usize {
    let (d, h) = (cfg.embed_dim, cfg.recurrent_hidden);
    match cfg.sublayer_variant {
        SublayerVariant::Ffn {
            expansion: None, ..
        } => d * d + d,
        SublayerVariant::Ffn {
            layers,
            expansion: Some(e),
        } => {
            let w = e * d;
            (d * w + w) + (layers - 1) * (w * w + w) + (w * d + d)
        }
        v => {
            let gates = v.cell().expect("recurrent variant").gates();
            let dirs = if v.bidirectional() { 2 } else { 1 };
            dirs * gates * (d * h + h * h + 2 * h)
        }
    }
}

/// Exact number of learnable scalars, derived from the config alone.
pub fn parameter_count(cfg: &EncoderConfig) -> ParameterReport {
    let d = cfg.embed_dim;
    let mut r = ParameterReport::default();
    r.add("embedding", cfg.obs_width * d + d);
    r.add("positional", cfg.context_length * d);
    for l in 0..cfg.encoder_layers {
        r.add(format!("block{l}.attention"), 4 * (d * d + d));
        r.add(format!("block{l}.norm1"), 2 * d);
        r.add(format!("block{l}.sublayer"), sublayer_count(cfg));
        r.add(format!("block{l}.norm2"), 2 * d);
    }
    r.add("head", d * cfg.action_count);
    r
}
