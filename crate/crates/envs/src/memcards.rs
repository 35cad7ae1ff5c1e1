//! Memory Cards: each step reveals one hidden card and the agent must name
//! the position of its partner.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{EnvError, Observation, PomdpEnv, Result, Step};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryCardsConfig {
    pub pairs: usize,
    pub max_steps: usize,
}

impl Default for MemoryCardsConfig {
    fn default() -> Self {
        MemoryCardsConfig {
            pairs: 5,
            max_steps: 50,
        }
    }
}

impl MemoryCardsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs < 1 || self.max_steps < 1 {
            return Err(EnvError::Config(format!(
                "memory cards needs at least one pair and one step, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Success probability of a policy that guesses uniformly at random.
    ///
    /// Every guess is right with probability 1/(2P) regardless of history, so
    /// the episode succeeds iff P of the first T guesses are right.
    pub fn random_policy_success(&self) -> f64 {
        let (p, t) = (self.pairs, self.max_steps);
        let q = 1.0 / (2 * p) as f64;
        // dist[j] = probability of j correct guesses so far (capped at p)
        let mut dist = vec![0.0; p + 1];
        dist[0] = 1.0;
        for _ in 0..t {
            let mut next = vec![0.0; p + 1];
            next[p] = dist[p];
            for j in 0..p {
                next[j] += dist[j] * (1.0 - q);
                next[j + 1] += dist[j] * q;
            }
            dist = next;
        }
        dist[p]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryCards {
    config: MemoryCardsConfig,
    rng: ChaCha8Rng,
    values: Vec<usize>,
    solved: Vec<bool>,
    revealed: usize,
    steps: usize,
    done: bool,
}

impl MemoryCards {
    pub fn new(config: MemoryCardsConfig) -> Result<Self> {
        config.validate()?;
        let mut env = MemoryCards {
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
            values: Vec::new(),
            solved: Vec::new(),
            revealed: 0,
            steps: 0,
            done: false,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> MemoryCardsConfig {
        self.config
    }

    /// Hidden value of the card at each position.
    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn revealed(&self) -> usize {
        self.revealed
    }

    pub fn solved(&self) -> &[bool] {
        &self.solved
    }

    pub fn partner(&self, position: usize) -> usize {
        let v = self.values[position];
        (0..self.values.len())
            .find(|&i| i != position && self.values[i] == v)
            .expect("every value appears exactly twice")
    }

    fn reveal(&mut self) {
        let open: Vec<usize> = (0..self.values.len())
            .filter(|&i| !self.solved[i])
            .collect();
        self.revealed = open[self.rng.gen_range(0..open.len())];
    }

    pub fn observe(&self) -> Observation {
        let cards = 2 * self.config.pairs;
        let mut obs = vec![0.0; cards + self.config.pairs];
        obs[self.revealed] = 1.0;
        obs[cards + self.values[self.revealed]] = 1.0;
        obs
    }
}

impl PomdpEnv for MemoryCards {
    fn obs_width(&self) -> usize {
        3 * self.config.pairs
    }

    fn action_count(&self) -> usize {
        2 * self.config.pairs
    }

    fn max_episode_steps(&self) -> usize {
        self.config.max_steps
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let p = self.config.pairs;
        self.values = (0..2 * p).map(|i| i / 2).collect();
        self.values.shuffle(&mut self.rng);
        self.solved = vec![false; 2 * p];
        self.steps = 0;
        self.done = false;
        self.reveal();
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let count = self.action_count();
        if action >= count {
            return Err(EnvError::InvalidAction { action, count });
        }
        let correct = action == self.partner(self.revealed);
        if correct {
            self.solved[action] = true;
            self.solved[self.revealed] = true;
        }
        self.steps += 1;
        let success = self.solved.iter().all(|s| *s);
        self.done = success || self.steps >= self.config.max_steps;
        if !self.done {
            self.reveal();
        }
        Ok(Step {
            obs: self.observe(),
            reward: if correct { 1.0 } else { -1.0 },
            done: self.done,
            success,
        })
    }

    fn describe(&self) -> String {
        let solved: String = self
            .solved
            .iter()
            .map(|s| if *s { '1' } else { '0' })
            .collect();
        format!(
            "revealed={} value={} solved={}",
            self.revealed, self.values[self.revealed], solved
        )
    }
}
