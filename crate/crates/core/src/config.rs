//! Model, training and experiment configuration, serialized as TOML.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use dbgfqn_envs::{EnvSpec, PomdpEnv};
use dbgfqn_tensor::CellKind;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, Error, Result};

/// The component following self-attention in every encoder block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SublayerVariant {
    /// `layers` stages of `Linear(·, expansion·D) + ReLU` then a linear back
    /// to `D`; without an expansion, a single `D → D` linear.
    Ffn {
        layers: usize,
        expansion: Option<usize>,
    },
    Rnn,
    Lstm,
    Gru,
    BiRnn,
    BiLstm,
    BiGru,
}

impl SublayerVariant {
    pub fn cell(self) -> Option<CellKind> {
        match self {
            SublayerVariant::Ffn { .. } => None,
            SublayerVariant::Rnn | SublayerVariant::BiRnn => Some(CellKind::Rnn),
            SublayerVariant::Lstm | SublayerVariant::BiLstm => Some(CellKind::Lstm),
            SublayerVariant::Gru | SublayerVariant::BiGru => Some(CellKind::Gru),
        }
    }

    pub fn bidirectional(self) -> bool {
        matches!(
            self,
            SublayerVariant::BiRnn | SublayerVariant::BiLstm | SublayerVariant::BiGru
        )
    }

    /// Whether Q at position t depends only on observations up to t.
    pub fn is_causal(self) -> bool {
        !self.bidirectional()
    }
}

/// Named models from the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Dtqn,
    Drfqn,
    Dlfqn,
    Dgfqn,
    Dbrfqn,
    Dblfqn,
    Dbgfqn,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Dtqn,
        Variant::Drfqn,
        Variant::Dlfqn,
        Variant::Dgfqn,
        Variant::Dbrfqn,
        Variant::Dblfqn,
        Variant::Dbgfqn,
    ];

    /// Sublayer for this model; `ffn_layers` only affects DTQN, which uses
    /// the 4× expansion of the baseline.
    pub fn sublayer(self, ffn_layers: usize) -> SublayerVariant {
        match self {
            Variant::Dtqn => SublayerVariant::Ffn {
                layers: ffn_layers,
                expansion: Some(4),
            },
            Variant::Drfqn => SublayerVariant::Rnn,
            Variant::Dlfqn => SublayerVariant::Lstm,
            Variant::Dgfqn => SublayerVariant::Gru,
            Variant::Dbrfqn => SublayerVariant::BiRnn,
            Variant::Dblfqn => SublayerVariant::BiLstm,
            Variant::Dbgfqn => SublayerVariant::BiGru,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dtqn => "dtqn",
            Variant::Drfqn => "drfqn",
            Variant::Dlfqn => "dlfqn",
            Variant::Dgfqn => "dgfqn",
            Variant::Dbrfqn => "dbrfqn",
            Variant::Dblfqn => "dblfqn",
            Variant::Dbgfqn => "dbgfqn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}; expected one of dtqn, drfqn, dlfqn, dgfqn, dbrfqn, dblfqn, dbgfqn")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub context_length: usize,
    pub sublayer_variant: SublayerVariant,
    /// Hidden width of each recurrent direction; unused by FFN sublayers.
    pub recurrent_hidden: usize,
    pub obs_width: usize,
    pub action_count: usize,
}

impl EncoderConfig {
    /// Defaults for `variant`: 8 heads, 2 layers, context 50, and a
    /// recurrent width that keeps the sublayer output at `embed_dim`.
    pub fn for_variant(
        variant: Variant,
        embed_dim: usize,
        obs_width: usize,
        action_count: usize,
    ) -> Self {
        Self::with_sublayer(variant.sublayer(1), embed_dim, obs_width, action_count)
    }

    pub fn with_sublayer(
        sublayer: SublayerVariant,
        embed_dim: usize,
        obs_width: usize,
        action_count: usize,
    ) -> Self {
        let recurrent_hidden = if sublayer.bidirectional() {
            embed_dim / 2
        } else {
            embed_dim
        };
        EncoderConfig {
            embed_dim,
            heads: 8,
            encoder_layers: 2,
            context_length: 50,
            sublayer_variant: sublayer,
            recurrent_hidden,
            obs_width,
            action_count,
        }
    }

    /// Default embedding width for an environment: 64 for Car Flag, 128
    /// elsewhere.
    pub fn default_embed_dim(env: &EnvSpec) -> usize {
        match env {
            EnvSpec::CarFlag => 64,
            _ => 128,
        }
    }

    pub fn for_env(variant: Variant, env: &EnvSpec) -> Result<Self> {
        let e = env.build()?;
        Ok(Self::for_variant(
            variant,
            Self::default_embed_dim(env),
            e.obs_width(),
            e.action_count(),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let positive = [
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("encoder_layers", self.encoder_layers),
            ("context_length", self.context_length),
            ("obs_width", self.obs_width),
            ("action_count", self.action_count),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if self.embed_dim % self.heads != 0 {
            return bad(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            ));
        }
        match self.sublayer_variant {
            SublayerVariant::Ffn { layers, expansion } => {
                if expansion.is_none() && layers != 1 {
                    return bad(format!(
                        "an FFN without expansion is a single linear, got layers = {layers}"
                    ));
                }
                if layers == 0 || expansion == Some(0) {
                    return bad("FFN layers and expansion must be positive".into());
                }
            }
            v if v.bidirectional() => {
                if 2 * self.recurrent_hidden != self.embed_dim {
                    return bad(format!(
                        "bidirectional sublayers need 2 * recurrent_hidden == embed_dim, got 2 * {} != {}",
                        self.recurrent_hidden, self.embed_dim
                    ));
                }
            }
            _ => {
                if self.recurrent_hidden != self.embed_dim {
                    return bad(format!(
                        "unidirectional sublayers need recurrent_hidden == embed_dim, got {} != {}",
                        self.recurrent_hidden, self.embed_dim
                    ));
                }
            }
        }
        Ok(())
    }

    /// Checks that an environment produces what this network consumes.
    pub fn check_env(&self, env: &impl PomdpEnv) -> Result<()> {
        if env.obs_width() != self.obs_width {
            return Err(Error::ObsWidthMismatch {
                env: env.obs_width(),
                encoder: self.obs_width,
            });
        }
        if env.action_count() != self.action_count {
            return Err(Error::ActionCountMismatch {
                env: env.action_count(),
                encoder: self.action_count,
            });
        }
        Ok(())
    }
}

/// Which timesteps of a sampled window contribute to the TD loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossPositions {
    /// Every valid timestep, as in per-timestep context training.
    #[default]
    AllValid,
    /// Only the last valid timestep, where bidirectional sublayers see no
    /// future observations.
    LastOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub target_sync_period: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub buffer_capacity: usize,
    /// Steps of uniform exploration before the first update.
    pub warmup_steps: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `total_steps` over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Environment steps per optimization step.
    pub train_every: u64,
    pub grad_clip: Option<f64>,
    pub huber: bool,
    pub loss_positions: LossPositions,
    pub success_window: usize,
    /// Greedy evaluation cadence in steps; none disables it.
    pub eval_every: Option<u64>,
    pub eval_episodes: usize,
    pub checkpoint_every: Option<u64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 2_000_000,
            target_sync_period: 10_000,
            lr: 3e-4,
            batch_size: 32,
            gamma: 0.99,
            buffer_capacity: 500_000,
            warmup_steps: 1_000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.1,
            train_every: 1,
            grad_clip: Some(1.0),
            huber: false,
            loss_positions: LossPositions::AllValid,
            success_window: 100,
            eval_every: None,
            eval_episodes: 10,
            checkpoint_every: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.target_sync_period == 0
            || self.batch_size == 0
            || self.buffer_capacity == 0
            || self.train_every == 0
            || self.success_window == 0
        {
            return bad("target_sync_period, batch_size, buffer_capacity, train_every and success_window must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.epsilon_start)
            || !unit(self.epsilon_end)
            || !unit(self.epsilon_decay_fraction)
        {
            return bad("epsilon_start, epsilon_end and epsilon_decay_fraction must lie in [0, 1]");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive when set");
        }
        if self.eval_every == Some(0) || self.checkpoint_every == Some(0) {
            return bad("eval_every and checkpoint_every must be positive when set");
        }
        Ok(())
    }

    /// Exploration rate at `step`.
    pub fn epsilon(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return 1.0;
        }
        let decay = (self.epsilon_decay_fraction * self.total_steps as f64).max(1.0);
        let frac = step as f64 / decay;
        if frac >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Everything needed to run one experiment over several seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub deterministic: bool,
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    /// Full-size defaults for `variant` on `env`: 2M steps, context 50, 8 heads.
    pub fn new(env: &str, variant: Variant) -> Result<Self> {
        let spec: EnvSpec = env.parse()?;
        Ok(ExperimentConfig {
            env: spec.to_string(),
            seeds: default_seeds(),
            deterministic: false,
            encoder: EncoderConfig::for_env(variant, &spec)?,
            train: TrainConfig::default(),
        })
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        Ok(self.env.parse()?)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.encoder.check_env(&self.env_spec()?.build()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| format_err(path, e))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config is always representable as TOML")
    }
}
