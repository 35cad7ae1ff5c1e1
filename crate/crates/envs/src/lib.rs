//! Partially observable episodic environments behind one interface.
//!
//! ```
//! use dbgfqn_envs::{EnvSpec, PomdpEnv};
//!
//! let mut env = "gv-memory-5x5".parse::<EnvSpec>().unwrap().build().unwrap();
//! let obs = env.reset(7);
//! assert_eq!(obs.len(), env.obs_width());
//! let step = env.step(2).unwrap();
//! assert!(!step.done);
//! ```

pub mod carflag;
mod error;
pub mod grid;
pub mod memcards;
mod spec;
mod trajectory;

pub use carflag::{CarFlag, ScriptedCarFlag};
pub use error::{EnvError, Result};
pub use grid::{hallucinate_rooms, Cell, GridConfig, GridWorld, Heading, Layout, Pose};
pub use memcards::{MemoryCards, MemoryCardsConfig};
pub use spec::{Env, EnvSpec, DEFAULT_HALLUCINATED_ROOMS};
pub use trajectory::{read_trajectory, record_episode, write_trajectory, TrajectoryRow};

pub type Observation = Vec<f32>;

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Observation,
    pub reward: f32,
    pub done: bool,
    pub success: bool,
}

pub trait PomdpEnv {
    fn obs_width(&self) -> usize;
    fn action_count(&self) -> usize;
    fn max_episode_steps(&self) -> usize;
    /// Starts a fresh episode whose randomness derives entirely from `seed`.
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, action: usize) -> Result<Step>;
    /// One-line description of the hidden state, for trajectory logs.
    fn describe(&self) -> String;
}
