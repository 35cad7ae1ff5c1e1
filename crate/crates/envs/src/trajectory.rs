use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{EnvError, Observation, PomdpEnv, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    /// Hidden state before the action, as given by [`PomdpEnv::describe`].
    pub state: String,
    pub action: usize,
    pub reward: f32,
    pub done: bool,
    pub success: bool,
}

/// Plays one episode from `seed` with `policy`, recording every step.
pub fn record_episode<E: PomdpEnv + ?Sized>(
    env: &mut E,
    seed: u64,
    mut policy: impl FnMut(&Observation) -> usize,
) -> Result<Vec<TrajectoryRow>> {
    let mut obs = env.reset(seed);
    let mut rows = Vec::new();
    loop {
        let state = env.describe();
        let action = policy(&obs);
        let step = env.step(action)?;
        rows.push(TrajectoryRow {
            step: rows.len(),
            state,
            action,
            reward: step.reward,
            done: step.done,
            success: step.success,
        });
        if step.done {
            return Ok(rows);
        }
        obs = step.obs;
    }
}

pub fn write_trajectory(path: impl AsRef<Path>, rows: &[TrajectoryRow]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| EnvError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| EnvError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRow>> {
    let path = path.as_ref();
    let csv_err = |source| EnvError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}
