use std::path::Path;

use serde::Serialize;

use crate::config::{EncoderConfig, SublayerVariant};
use crate::count::{parameter_count, ParameterReport};
use crate::error::{csv_err, Result};

/// The sublayer used as the reduction baseline: one hidden layer at 4× width.
pub const FFN_BASELINE: SublayerVariant = SublayerVariant::Ffn {
    layers: 1,
    expansion: Some(4),
};

/// Ablation columns in display order: FFN sublayers at 1×, 2× and 3× width,
/// then the recurrent variants.
pub fn ablation_models() -> Vec<(String, SublayerVariant)> {
    let mut out: Vec<(String, SublayerVariant)> = (1..=3)
        .map(|n| {
            (
                format!("dtqn{n}"),
                SublayerVariant::Ffn {
                    layers: 1,
                    expansion: Some(n),
                },
            )
        })
        .collect();
    out.extend([
        ("drfqn".to_string(), SublayerVariant::Rnn),
        ("dlfqn".to_string(), SublayerVariant::Lstm),
        ("dgfqn".to_string(), SublayerVariant::Gru),
        ("dbrfqn".to_string(), SublayerVariant::BiRnn),
        ("dblfqn".to_string(), SublayerVariant::BiLstm),
        ("dbgfqn".to_string(), SublayerVariant::BiGru),
        ("dtqn_4x".to_string(), FFN_BASELINE),
    ]);
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamRow {
    pub model: String,
    pub submodule: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterTable {
    pub models: Vec<(String, EncoderConfig, ParameterReport)>,
}

impl ParameterTable {
    pub fn total(&self, model: &str) -> Option<usize> {
        self.models
            .iter()
            .find(|(m, ..)| m == model)
            .map(|(.., r)| r.total())
    }

    /// `1 - bigru / ffn_4x`, when both are present.
    pub fn reduction(&self) -> Option<f64> {
        Some(1.0 - self.total("dbgfqn")? as f64 / self.total("dtqn_4x")? as f64)
    }

    /// Per-submodule rows followed by a `total` row for every model.
    pub fn rows(&self) -> Vec<ParamRow> {
        let mut rows = Vec::new();
        for (model, _, report) in &self.models {
            for (sub, count) in &report.items {
                rows.push(ParamRow {
                    model: model.clone(),
                    submodule: sub.clone(),
                    count: *count,
                });
            }
            rows.push(ParamRow {
                model: model.clone(),
                submodule: "total".into(),
                count: report.total(),
            });
        }
        rows
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        for row in self.rows() {
            w.serialize(row).map_err(csv_err(path))?;
        }
        if let Some(r) = self.reduction() {
            w.serialize(ParamRow {
                model: "dbgfqn_vs_dtqn_4x".into(),
                submodule: "reduction_permille".into(),
                count: (r * 1000.0).round().max(0.0) as usize,
            })
            .map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| csv_err(path)(e.into()))
    }
}

/// Parameter counts for each model, sharing everything but the sublayer
/// with `base`.
pub fn report_parameters(
    base: &EncoderConfig,
    models: &[(String, SublayerVariant)],
) -> ParameterTable {
    ParameterTable {
        models: models
            .iter()
            .map(|(name, sub)| {
                let cfg = EncoderConfig::with_sublayer(
                    *sub,
                    base.embed_dim,
                    base.obs_width,
                    base.action_count,
                );
                let cfg = EncoderConfig {
                    heads: base.heads,
                    encoder_layers: base.encoder_layers,
                    context_length: base.context_length,
                    ..cfg
                };
                (name.clone(), cfg, parameter_count(&cfg))
            })
            .collect(),
    }
}

/// Our count set against an externally published total for one model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AlignedCount {
    pub model: String,
    pub published: usize,
    pub ours: usize,
    pub sublayers: usize,
    /// `published - ours`.
    pub residual: i64,
}

/// Lines up `published` totals with `table`. Models missing from the table
/// are skipped.
pub fn align(table: &ParameterTable, published: &[(&str, usize)]) -> Vec<AlignedCount> {
    published
        .iter()
        .filter_map(|(model, count)| {
            let (_, cfg, report) = table.models.iter().find(|(m, ..)| m == model)?;
            let sublayers = (0..cfg.encoder_layers)
                .map(|l| report.get(&format!("block{l}.sublayer")))
                .sum();
            Some(AlignedCount {
                model: model.to_string(),
                published: *count,
                ours: report.total(),
                sublayers,
                residual: *count as i64 - report.total() as i64,
            })
        })
        .collect()
}

/// The residual shared by every aligned model, if there is exactly one.
pub fn constant_residual(aligned: &[AlignedCount]) -> Option<i64> {
    let first = aligned.first()?.residual;
    aligned.iter().all(|a| a.residual == first).then_some(first)
}
