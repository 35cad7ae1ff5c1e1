use std::collections::VecDeque;
use std::path::Path;

use dbgfqn_tensor::{Archive, Scalar, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Episode {
    /// `steps + 1` observations, flattened; step `i` moves from row `i` to
    /// row `i + 1`.
    #[serde(skip)]
    obs: Vec<f32>,
    actions: Vec<usize>,
    rewards: Vec<f32>,
    dones: Vec<bool>,
    closed: bool,
}

impl Episode {
    fn steps(&self) -> usize {
        self.actions.len()
    }
}

/// Per-episode step storage with a fixed capacity in steps. When full, the
/// oldest step of the oldest episode is dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_width: usize,
    episodes: VecDeque<Episode>,
    len: usize,
}

/// A batch of right-padded windows: rows `>= valid_lens[b]` of window `b`
/// are padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub batch: usize,
    /// Rows per window, the longest valid length in the batch.
    pub seq: usize,
    pub obs_width: usize,
    /// `[batch·seq, obs_width]`
    pub obs: Vec<f32>,
    /// `obs` shifted one step forward.
    pub next_obs: Vec<f32>,
    /// `[batch·seq]`, zero at padding.
    pub actions: Vec<usize>,
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    pub valid_lens: Vec<usize>,
}

impl Batch {
    pub fn is_valid(&self, b: usize, t: usize) -> bool {
        t < self.valid_lens[b]
    }

    pub fn obs_tensor<T: Scalar>(&self) -> Tensor<T> {
        to_tensor(&self.obs, self.batch * self.seq, self.obs_width)
    }

    pub fn next_obs_tensor<T: Scalar>(&self) -> Tensor<T> {
        to_tensor(&self.next_obs, self.batch * self.seq, self.obs_width)
    }

    /// The same windows padded out to `seq` rows.
    pub fn padded_to(&self, seq: usize) -> Batch {
        assert!(seq >= self.seq, "cannot shrink a batch");
        let w = self.obs_width;
        let mut out = Batch {
            batch: self.batch,
            seq,
            obs_width: w,
            obs: vec![0.0; self.batch * seq * w],
            next_obs: vec![0.0; self.batch * seq * w],
            actions: vec![0; self.batch * seq],
            rewards: vec![0.0; self.batch * seq],
            dones: vec![false; self.batch * seq],
            valid_lens: self.valid_lens.clone(),
        };
        for b in 0..self.batch {
            let (src, dst) = (b * self.seq, b * seq);
            out.obs[dst * w..(dst + self.seq) * w]
                .copy_from_slice(&self.obs[src * w..(src + self.seq) * w]);
            out.next_obs[dst * w..(dst + self.seq) * w]
                .copy_from_slice(&self.next_obs[src * w..(src + self.seq) * w]);
            out.actions[dst..dst + self.seq].copy_from_slice(&self.actions[src..src + self.seq]);
            out.rewards[dst..dst + self.seq].copy_from_slice(&self.rewards[src..src + self.seq]);
            out.dones[dst..dst + self.seq].copy_from_slice(&self.dones[src..src + self.seq]);
        }
        out
    }
}

fn to_tensor<T: Scalar>(data: &[f32], rows: usize, cols: usize) -> Tensor<T> {
    Tensor::new(
        [rows, cols],
        data.iter().map(|v| T::from_f64(*v as f64)).collect(),
    )
    .expect("batch shape")
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_width: usize) -> Self {
        assert!(
            capacity > 0 && obs_width > 0,
            "capacity and obs_width must be positive"
        );
        ReplayBuffer {
            capacity,
            obs_width,
            episodes: VecDeque::new(),
            len: 0,
        }
    }

    /// Number of stored steps.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_width(&self) -> usize {
        self.obs_width
    }

    /// Stored step counts per episode, oldest first.
    pub fn episode_lengths(&self) -> Vec<usize> {
        self.episodes.iter().map(Episode::steps).collect()
    }

    /// Observations of stored episode `e` as rows, including the final next
    /// observation.
    pub fn episode_obs(&self, e: usize) -> Vec<&[f32]> {
        self.episodes[e].obs.chunks(self.obs_width).collect()
    }

    /// Appends one transition. `obs` opens a new episode when none is open
    /// and is otherwise expected to equal the previous `next_obs`; `done`
    /// closes the episode.
    pub fn record_step(
        &mut self,
        obs: &[f32],
        action: usize,
        reward: f32,
        done: bool,
        next_obs: &[f32],
    ) {
        assert_eq!(obs.len(), self.obs_width, "observation width");
        assert_eq!(next_obs.len(), self.obs_width, "observation width");
        if self.episodes.back().map_or(true, |e| e.closed) {
            self.episodes.push_back(Episode {
                obs: obs.to_vec(),
                ..Episode::default()
            });
        }
        let ep = self.episodes.back_mut().expect("open episode");
        ep.obs.extend_from_slice(next_obs);
        ep.actions.push(action);
        ep.rewards.push(reward);
        ep.dones.push(done);
        ep.closed = done;
        self.len += 1;
        while self.len > self.capacity {
            self.evict_oldest();
        }
    }

    fn evict_oldest(&mut self) {
        let w = self.obs_width;
        let ep = self.episodes.front_mut().expect("non-empty buffer");
        ep.obs.drain(..w);
        ep.actions.remove(0);
        ep.rewards.remove(0);
        ep.dones.remove(0);
        self.len -= 1;
        if ep.steps() == 0 {
            self.episodes.pop_front();
        }
    }

    /// Samples `batch_size` windows of at most `context` steps: an episode
    /// uniformly among the stored ones, then a window end uniformly among its
    /// steps.
    pub fn sample_batch(
        &self,
        rng: &mut impl Rng,
        batch_size: usize,
        context: usize,
    ) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if batch_size == 0 || context == 0 {
            return Err(Error::Config(
                "batch_size and context must be positive".into(),
            ));
        }
        let windows: Vec<(usize, usize, usize)> = (0..batch_size)
            .map(|_| {
                let e = rng.gen_range(0..self.episodes.len());
                let end = rng.gen_range(1..=self.episodes[e].steps());
                (e, end.saturating_sub(context), end)
            })
            .collect();
        let seq = windows
            .iter()
            .map(|(_, s, e)| e - s)
            .max()
            .expect("non-empty batch");
        let w = self.obs_width;
        let mut batch = Batch {
            batch: batch_size,
            seq,
            obs_width: w,
            obs: vec![0.0; batch_size * seq * w],
            next_obs: vec![0.0; batch_size * seq * w],
            actions: vec![0; batch_size * seq],
            rewards: vec![0.0; batch_size * seq],
            dones: vec![false; batch_size * seq],
            valid_lens: Vec::with_capacity(batch_size),
        };
        for (b, &(e, start, end)) in windows.iter().enumerate() {
            let ep = &self.episodes[e];
            let n = end - start;
            let row = b * seq;
            batch.obs[row * w..(row + n) * w].copy_from_slice(&ep.obs[start * w..end * w]);
            batch.next_obs[row * w..(row + n) * w]
                .copy_from_slice(&ep.obs[(start + 1) * w..(end + 1) * w]);
            batch.actions[row..row + n].copy_from_slice(&ep.actions[start..end]);
            batch.rewards[row..row + n].copy_from_slice(&ep.rewards[start..end]);
            batch.dones[row..row + n].copy_from_slice(&ep.dones[start..end]);
            batch.valid_lens.push(n);
        }
        Ok(batch)
    }

    /// Writes `buffer.json` (layout) and `buffer.bin` (observations).
    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = dir.join("buffer.json");
        let json = serde_json::to_vec(self).map_err(|e| format_err(&meta, e))?;
        std::fs::write(&meta, json).map_err(io_err(&meta))?;
        let obs: Vec<f32> = self
            .episodes
            .iter()
            .flat_map(|e| e.obs.iter().copied())
            .collect();
        let rows = obs.len() / self.obs_width;
        let mut archive = Archive::new();
        archive.insert("obs", Tensor::new([rows, self.obs_width], obs)?);
        archive.save(dir.join("buffer.bin"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = dir.join("buffer.json");
        let text = std::fs::read(&meta).map_err(io_err(&meta))?;
        let mut buf: ReplayBuffer =
            serde_json::from_slice(&text).map_err(|e| format_err(&meta, e))?;
        let bin = dir.join("buffer.bin");
        let archive = Archive::<f32>::load(&bin)?;
        let obs = archive
            .get("obs")
            .ok_or_else(|| format_err(&bin, "missing `obs` tensor"))?;
        let w = buf.obs_width;
        let expected: usize = buf.episodes.iter().map(|e| e.steps() + 1).sum();
        if obs.shape() != [expected, w] {
            return Err(format_err(
                &bin,
                format!(
                    "observation table {:?} does not match layout [{expected}, {w}]",
                    obs.shape()
                ),
            ));
        }
        let mut offset = 0;
        for ep in &mut buf.episodes {
            let n = (ep.steps() + 1) * w;
            ep.obs = obs.data()[offset..offset + n].to_vec();
            offset += n;
        }
        if buf.len != buf.episodes.iter().map(Episode::steps).sum::<usize>() {
            return Err(format_err(
                &meta,
                "step count does not match stored episodes",
            ));
        }
        Ok(buf)
    }
}
