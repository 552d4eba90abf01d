use rand::Rng;

use super::{compute_rtg, Dataset};
use crate::error::{Error, Result};

/// A context window of `K` slots starting at step `start` of one trajectory.
///
/// When fewer than `K` steps remain before the episode ends, the real steps
/// are right-aligned and the leading slots are zero padding with
/// `mask == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTrajectory {
    pub traj_index: usize,
    pub start: usize,
    pub rtg_window: Vec<f64>,
    pub state_window: Vec<Vec<f64>>,
    pub action_targets: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    /// Return of the whole source trajectory, not the RTG at `start`.
    pub source_return: f64,
}

impl SubTrajectory {
    pub fn context_len(&self) -> usize {
        self.mask.len()
    }

    pub fn num_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Number of leading padding slots.
    pub fn padding(&self) -> usize {
        self.context_len() - self.num_valid()
    }

    /// Trajectory time index held in `slot`, if the slot is real.
    pub fn step_of_slot(&self, slot: usize) -> Option<usize> {
        let pad = self.padding();
        (slot >= pad && slot < self.context_len()).then(|| self.start + slot - pad)
    }
}

pub fn subtrajectory_at(
    dataset: &Dataset,
    traj_index: usize,
    start: usize,
    context: usize,
) -> Result<SubTrajectory> {
    if context == 0 {
        return Err(Error::Config("context length must be at least 1".into()));
    }
    let traj = dataset
        .trajectories
        .get(traj_index)
        .ok_or(Error::EmptyDataset)?;
    if start >= traj.len() {
        return Err(Error::Config(format!(
            "start {start} outside trajectory of length {}",
            traj.len()
        )));
    }
    let rtg = compute_rtg(traj);
    let n_real = context.min(traj.len() - start);
    let pad = context - n_real;
    let mut sub = SubTrajectory {
        traj_index,
        start,
        rtg_window: vec![0.0; context],
        state_window: vec![vec![0.0; dataset.state_dim]; context],
        action_targets: vec![vec![0.0; dataset.action_dim]; context],
        mask: vec![false; context],
        source_return: traj.total_return(),
    };
    for k in 0..n_real {
        let slot = pad + k;
        let t = start + k;
        sub.rtg_window[slot] = rtg[t];
        sub.state_window[slot].clone_from(&traj.states[t]);
        sub.action_targets[slot].clone_from(&traj.actions[t]);
        sub.mask[slot] = true;
    }
    Ok(sub)
}

/// Uniform trajectory, then uniform start step within it.
pub fn sample_subtrajectory<R: Rng + ?Sized>(
    dataset: &Dataset,
    context: usize,
    rng: &mut R,
) -> Result<SubTrajectory> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let i = rng.random_range(0..dataset.trajectories.len());
    let t = rng.random_range(0..dataset.trajectories[i].len());
    subtrajectory_at(dataset, i, t, context)
}
