use std::collections::VecDeque;
use std::path::Path;

use dbgfqn_envs::{Env, EnvSpec, PomdpEnv};
use dbgfqn_tensor::{AdamConfig, Archive, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{EncoderConfig, ExperimentConfig, TrainConfig};
use crate::error::{format_err, io_err, Error, Result};
use crate::harness::metrics::MetricsRecord;
use crate::model::{select_action, QNetwork};
use crate::rl::buffer::ReplayBuffer;
use crate::rl::dqn::{explore_or_greedy, sync_target, train_step, Optimizer};

const CHECKPOINT_FORMAT: u32 = 1;
const EVAL_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Greedy evaluation on fresh episodes, separate from the training stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub global_step: u64,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome {
    /// Set when this step ended an episode.
    pub episode: Option<MetricsRecord>,
    pub eval: Option<EvalRecord>,
    pub loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Progress {
    global_step: u64,
    episode_index: u64,
    episode_return: f64,
    /// The newest `context_length` observations of the open episode.
    history: Vec<Vec<f32>>,
    recent_successes: VecDeque<bool>,
    loss_ema: Option<f64>,
    updates: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointState {
    format: u32,
    env_spec: EnvSpec,
    encoder: EncoderConfig,
    train: TrainConfig,
    env: Env,
    rng: ChaCha8Rng,
    adam_step: u64,
    progress: Progress,
}

/// The training loop for one seed: owns the environment, both networks,
/// the optimizer, the replay buffer and the random stream.
pub struct Trainer {
    env_spec: EnvSpec,
    encoder: EncoderConfig,
    train: TrainConfig,
    env: Env,
    online: QNetwork<f32>,
    target: QNetwork<f32>,
    opt: Optimizer<f32>,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    progress: Progress,
}

fn adam_config(train: &TrainConfig) -> AdamConfig {
    AdamConfig {
        lr: train.lr,
        ..AdamConfig::default()
    }
}

impl Trainer {
    pub fn new(env_spec: EnvSpec, encoder: EncoderConfig, train: TrainConfig) -> Result<Self> {
        train.validate()?;
        let env = env_spec.build()?;
        encoder.check_env(&env)?;
        let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
        let online = QNetwork::new(encoder, &mut rng)?;
        let target = online.clone();
        let opt = Optimizer::new(adam_config(&train), online.params());
        let buffer = ReplayBuffer::new(train.buffer_capacity, encoder.obs_width);
        Ok(Trainer {
            env_spec,
            encoder,
            train,
            env,
            online,
            target,
            opt,
            buffer,
            rng,
            progress: Progress::default(),
        })
    }

    /// A trainer for one seed of an experiment.
    pub fn for_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let train = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        Trainer::new(cfg.env_spec()?, cfg.encoder, train)
    }

    pub fn global_step(&self) -> u64 {
        self.progress.global_step
    }

    pub fn episode_index(&self) -> u64 {
        self.progress.episode_index
    }

    pub fn is_finished(&self) -> bool {
        self.progress.global_step >= self.train.total_steps
    }

    pub fn online(&self) -> &QNetwork<f32> {
        &self.online
    }

    pub fn target(&self) -> &QNetwork<f32> {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        &self.encoder
    }

    pub fn running_success_rate(&self) -> f64 {
        let s = &self.progress.recent_successes;
        if s.is_empty() {
            0.0
        } else {
            s.iter().filter(|v| **v).count() as f64 / s.len() as f64
        }
    }

    /// One environment step, plus an update, a target sync and a greedy
    /// evaluation when their schedules fall on this step.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let k = self.encoder.context_length;
        let p = &mut self.progress;
        if p.history.is_empty() {
            let seed: u64 = self.rng.gen();
            p.history.push(self.env.reset(seed));
            p.episode_return = 0.0;
        }
        let epsilon = self.train.epsilon(p.global_step);
        let online = &self.online;
        let history = &p.history;
        let action = explore_or_greedy(self.encoder.action_count, epsilon, &mut self.rng, || {
            online.act_values(history)
        })?;
        let s = self.env.step(action)?;
        let obs = p.history.last().expect("open episode");
        self.buffer
            .record_step(obs, action, s.reward, s.done, &s.obs);
        p.episode_return += s.reward as f64;
        p.global_step += 1;

        let mut out = StepOutcome::default();
        if p.global_step > self.train.warmup_steps && p.global_step % self.train.train_every == 0 {
            let loss = train_step(
                &mut self.online,
                &self.target,
                &self.buffer,
                &mut self.opt,
                &self.train,
                &mut self.rng,
            )?;
            p.loss_ema = Some(match p.loss_ema {
                None => loss,
                Some(m) => 0.99 * m + 0.01 * loss,
            });
            p.updates += 1;
            out.loss = Some(loss);
        }
        if p.global_step % self.train.target_sync_period == 0 {
            sync_target(&self.online, &mut self.target)?;
        }

        if s.done {
            p.recent_successes.push_back(s.success);
            if p.recent_successes.len() > self.train.success_window {
                p.recent_successes.pop_front();
            }
            p.history.clear();
            let record = MetricsRecord {
                global_step: p.global_step,
                episode_index: p.episode_index,
                episode_return: p.episode_return,
                success: s.success,
                running_success_rate: 0.0,
                epsilon,
                loss: p.loss_ema,
            };
            p.episode_index += 1;
            out.episode = Some(MetricsRecord {
                running_success_rate: self.running_success_rate(),
                ..record
            });
        } else {
            p.history.push(s.obs);
            if p.history.len() > k {
                p.history.remove(0);
            }
        }

        let step = self.progress.global_step;
        if self.train.eval_every.is_some_and(|n| step % n == 0) {
            out.eval = Some(self.evaluate_greedy(self.train.eval_episodes)?);
        }
        Ok(out)
    }

    /// Greedy episodes on a separate environment and random stream; the
    /// training state is untouched.
    pub fn evaluate_greedy(&self, episodes: usize) -> Result<EvalRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.train.seed ^ EVAL_STREAM);
        rng.set_stream(self.progress.global_step);
        let mut env = self.env_spec.build()?;
        let k = self.encoder.context_length;
        let (mut wins, mut total) = (0usize, 0.0);
        for _ in 0..episodes {
            let mut history = vec![env.reset(rng.gen())];
            loop {
                let a = select_action(&self.online.act_values(&history)?)?;
                let s = env.step(a)?;
                total += s.reward as f64;
                if s.done {
                    wins += s.success as usize;
                    break;
                }
                history.push(s.obs);
                if history.len() > k {
                    history.remove(0);
                }
            }
        }
        let n = episodes.max(1) as f64;
        Ok(EvalRecord {
            global_step: self.progress.global_step,
            episodes,
            success_rate: wins as f64 / n,
            mean_return: total / n,
        })
    }

    /// Writes everything needed to continue bit-exactly into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Archive::from_params(self.online.params()).save(dir.join("online.bin"))?;
        Archive::from_params(self.target.params()).save(dir.join("target.bin"))?;
        let mut moments = Archive::new();
        for (i, (_, p)) in self.online.params().iter().enumerate() {
            let shape = p.value.shape().to_vec();
            moments.insert(
                format!("m.{}", p.name),
                Tensor::new(shape.clone(), self.opt.first[i].clone())?,
            );
            moments.insert(
                format!("v.{}", p.name),
                Tensor::new(shape, self.opt.second[i].clone())?,
            );
        }
        moments.save(dir.join("optimizer.bin"))?;
        self.buffer.save(dir)?;
        let state = CheckpointState {
            format: CHECKPOINT_FORMAT,
            env_spec: self.env_spec.clone(),
            encoder: self.encoder,
            train: self.train.clone(),
            env: self.env.clone(),
            rng: self.rng.clone(),
            adam_step: self.opt.step,
            progress: self.progress.clone(),
        };
        let path = dir.join("state.json");
        let json = serde_json::to_vec_pretty(&state).map_err(|e| format_err(&path, e))?;
        std::fs::write(&path, json).map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("state.json");
        let text = std::fs::read(&path).map_err(io_err(&path))?;
        let state: CheckpointState =
            serde_json::from_slice(&text).map_err(|e| format_err(&path, e))?;
        if state.format != CHECKPOINT_FORMAT {
            return Err(format_err(
                &path,
                format!("unsupported checkpoint format {}", state.format),
            ));
        }
        let mut scratch = ChaCha8Rng::seed_from_u64(0);
        let mut online = QNetwork::new(state.encoder, &mut scratch)?;
        let mut target = online.clone();
        Archive::load(dir.join("online.bin"))?.load_into(online.params_mut())?;
        Archive::load(dir.join("target.bin"))?.load_into(target.params_mut())?;
        let mut opt = Optimizer::new(adam_config(&state.train), online.params());
        opt.step = state.adam_step;
        let moments_path = dir.join("optimizer.bin");
        let moments = Archive::<f32>::load(&moments_path)?;
        for (i, (_, p)) in online.params().iter().enumerate() {
            for (prefix, dst) in [("m", &mut opt.first[i]), ("v", &mut opt.second[i])] {
                let t = moments
                    .get(&format!("{prefix}.{}", p.name))
                    .filter(|t| t.shape() == p.value.shape())
                    .ok_or_else(|| {
                        format_err(
                            &moments_path,
                            format!("missing or misshapen moment for `{}`", p.name),
                        )
                    })?;
                dst.copy_from_slice(t.data());
            }
        }
        let buffer = ReplayBuffer::load(dir)?;
        if buffer.obs_width() != state.encoder.obs_width {
            return Err(Error::ObsWidthMismatch {
                env: buffer.obs_width(),
                encoder: state.encoder.obs_width,
            });
        }
        Ok(Trainer {
            env_spec: state.env_spec,
            encoder: state.encoder,
            train: state.train,
            env: state.env,
            online,
            target,
            opt,
            buffer,
            rng: state.rng,
            progress: state.progress,
        })
    }
}
