use dbgfqn_tensor::{AdamState, Scalar, Tape, Tensor, Var};
use rand::Rng;

use crate::config::{LossPositions, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{select_action, QNetwork};
use crate::rl::buffer::{Batch, ReplayBuffer};

/// Adam moments for the online network.
pub type Optimizer<T = f32> = AdamState<T>;

/// One-step targets `r + gamma·max_a Q_target(next, a)` for every row of the
/// batch, with the bootstrap dropped on terminal steps and zero at padding.
pub fn td_targets<T: Scalar>(batch: &Batch, target: &QNetwork<T>, gamma: f64) -> Result<Vec<T>> {
    let q_next = target.q_values(batch.next_obs_tensor(), &batch.valid_lens)?;
    let gamma = T::from_f64(gamma);
    let mut y = vec![T::zero(); batch.batch * batch.seq];
    for b in 0..batch.batch {
        for t in 0..batch.valid_lens[b] {
            let i = b * batch.seq + t;
            let r = T::from_f64(batch.rewards[i] as f64);
            y[i] = if batch.dones[i] {
                r
            } else {
                let row = q_next.row(i);
                let best = row
                    .iter()
                    .copied()
                    .fold(row[0], |m, v| if v > m { v } else { m });
                r + gamma * best
            };
        }
    }
    Ok(y)
}

/// Per-row loss weights: equal weights summing to one over the selected
/// rows, zero elsewhere.
pub fn loss_weights<T: Scalar>(batch: &Batch, positions: LossPositions) -> Vec<T> {
    let mut mask = vec![false; batch.batch * batch.seq];
    for (b, &len) in batch.valid_lens.iter().enumerate() {
        let rows = match positions {
            LossPositions::AllValid => 0..len,
            LossPositions::LastOnly => len - 1..len,
        };
        for t in rows {
            mask[b * batch.seq + t] = true;
        }
    }
    let n = mask.iter().filter(|m| **m).count().max(1);
    let w = T::one() / T::from_f64(n as f64);
    mask.into_iter()
        .map(|m| if m { w } else { T::zero() })
        .collect()
}

/// Mean squared (or Huber) TD error of the online network's Q at the taken
/// actions.
pub fn td_loss<'t, T: Scalar>(
    tape: &'t Tape<T>,
    online: &QNetwork<T>,
    batch: &Batch,
    targets: &[T],
    positions: LossPositions,
    huber: bool,
) -> Result<Var<'t, T>> {
    let q = online.forward(
        tape,
        tape.constant(batch.obs_tensor()),
        &batch.valid_lens,
        true,
    )?;
    let q_sa = q.gather_cols(&batch.actions)?;
    let y = tape.constant(Tensor::new([targets.len()], targets.to_vec())?);
    let diff = q_sa.sub(y)?;
    let per_row = if huber {
        diff.huber(T::one())
    } else {
        diff.mul(diff)?
    };
    Ok(per_row.weighted_sum(loss_weights(batch, positions))?)
}

/// Samples a batch, takes one clipped Adam step on the online network and
/// returns the loss before the update.
pub fn train_step<T: Scalar>(
    online: &mut QNetwork<T>,
    target: &QNetwork<T>,
    buffer: &ReplayBuffer,
    opt: &mut Optimizer<T>,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let batch = buffer.sample_batch(rng, cfg.batch_size, online.config().context_length)?;
    let targets = td_targets(&batch, target, cfg.gamma)?;
    let tape = Tape::new();
    let loss = td_loss(
        &tape,
        online,
        &batch,
        &targets,
        cfg.loss_positions,
        cfg.huber,
    )?;
    let value = loss.value().data()[0].as_f64();
    let grads = tape.backward(loss)?;
    let params = online.params_mut();
    params.accumulate(&grads);
    if let Some(c) = cfg.grad_clip {
        params.clip_grad_norm(T::from_f64(c));
    }
    opt.step(params)?;
    Ok(value)
}

/// A uniformly random action with probability `epsilon`, else the greedy one.
pub fn epsilon_greedy<T: Scalar>(q: &[T], epsilon: f64, rng: &mut impl Rng) -> Result<usize> {
    explore_or_greedy(q.len(), epsilon, rng, || Ok(q.to_vec()))
}

/// [`epsilon_greedy`] with the Q-values computed only when exploiting.
/// Draws the same random numbers either way.
pub(crate) fn explore_or_greedy<T: Scalar>(
    actions: usize,
    epsilon: f64,
    rng: &mut impl Rng,
    q: impl FnOnce() -> Result<Vec<T>>,
) -> Result<usize> {
    if actions == 0 {
        return Err(Error::EmptyQ);
    }
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..actions))
    } else {
        select_action(&q()?)
    }
}

/// Hard copy of every online parameter into the target network.
pub fn sync_target<T: Scalar>(online: &QNetwork<T>, target: &mut QNetwork<T>) -> Result<()> {
    target.copy_from(online)
}
