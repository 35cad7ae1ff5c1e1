//! A car on a line must visit the oracle zone near the origin to learn which
//! end of the track is the finish.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{EnvError, Observation, PomdpEnv, Result, Step};

pub const ACCEL: f64 = 0.01;
pub const V_MAX: f64 = 0.07;
pub const X_MAX: f64 = 1.1;
pub const FINISH: f64 = 1.0;
pub const ORACLE_HALF_WIDTH: f64 = 0.2;
pub const MAX_STEPS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarFlag {
    x: f64,
    v: f64,
    goal_side: i8,
    steps: usize,
    done: bool,
}

impl Default for CarFlag {
    fn default() -> Self {
        let mut env = CarFlag {
            x: 0.0,
            v: 0.0,
            goal_side: 1,
            steps: 0,
            done: false,
        };
        env.reset(0);
        env
    }
}

impl CarFlag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Places the car directly, starting a fresh episode clock.
    pub fn set_state(&mut self, x: f64, v: f64, goal_side: i8) {
        assert!(goal_side == 1 || goal_side == -1, "goal_side must be ±1");
        self.x = x.clamp(-X_MAX, X_MAX);
        self.v = v.clamp(-V_MAX, V_MAX);
        self.goal_side = goal_side;
        self.steps = 0;
        self.done = false;
    }

    pub fn position(&self) -> f64 {
        self.x
    }

    pub fn velocity(&self) -> f64 {
        self.v
    }

    pub fn goal_side(&self) -> i8 {
        self.goal_side
    }

    pub fn observe(&self) -> Observation {
        let hint = if self.x.abs() <= ORACLE_HALF_WIDTH {
            self.goal_side as f32
        } else {
            0.0
        };
        vec![self.x as f32, self.v as f32, hint]
    }
}

impl PomdpEnv for CarFlag {
    fn obs_width(&self) -> usize {
        3
    }

    fn action_count(&self) -> usize {
        3
    }

    fn max_episode_steps(&self) -> usize {
        MAX_STEPS
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goal_side = if rng.gen_bool(0.5) { 1 } else { -1 };
        let x = rng.gen_range(-0.8..0.8);
        self.set_state(x, 0.0, goal_side);
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if action >= 3 {
            return Err(EnvError::InvalidAction { action, count: 3 });
        }
        let dir = action as f64 - 1.0;
        self.v = (self.v + ACCEL * dir).clamp(-V_MAX, V_MAX);
        self.x = (self.x + self.v).clamp(-X_MAX, X_MAX);
        self.steps += 1;
        let along = self.x * self.goal_side as f64;
        let success = along >= FINISH;
        self.done = success || along <= -FINISH || self.steps >= MAX_STEPS;
        Ok(Step {
            obs: self.observe(),
            reward: if success { 1.0 } else { 0.0 },
            done: self.done,
            success,
        })
    }

    fn describe(&self) -> String {
        format!("x={:.4} v={:.4} goal={}", self.x, self.v, self.goal_side)
    }
}

/// Drives toward the oracle zone until the hint appears, then floors it
/// toward the indicated finish.
#[derive(Clone, Debug, Default)]
pub struct ScriptedCarFlag {
    side: Option<f32>,
}

impl ScriptedCarFlag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn act(&mut self, obs: &[f32]) -> usize {
        if obs[2] != 0.0 {
            self.side = Some(obs[2]);
        }
        let toward = match self.side {
            Some(side) => side,
            None => -obs[0],
        };
        if toward > 0.0 {
            2
        } else {
            0
        }
    }
}
