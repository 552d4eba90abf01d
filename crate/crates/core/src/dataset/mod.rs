//! Offline trajectory data.

mod io;
mod spread;
mod window;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{decode_dataset, encode_dataset, load, save, DATASET_MAGIC, DATASET_VERSION};
pub use spread::{action_spread, StateQuantizer};
pub use window::{sample_subtrajectory, subtrajectory_at, SubTrajectory};

/// One episode: `L + 1` states, `L` actions and rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub terminal: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Undiscounted return.
    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    fn validate(&self, state_dim: usize, action_dim: usize) -> Result<()> {
        let l = self.len();
        if l == 0 {
            return Err(Error::Malformed("trajectory with no steps".into()));
        }
        if self.states.len() != l + 1 || self.actions.len() != l {
            return Err(Error::Malformed(format!(
                "trajectory has {} states, {} actions, {} rewards",
                self.states.len(),
                self.actions.len(),
                l
            )));
        }
        if self.states.iter().any(|s| s.len() != state_dim)
            || self.actions.iter().any(|a| a.len() != action_dim)
        {
            return Err(Error::Malformed("trajectory vector width mismatch".into()));
        }
        Ok(())
    }
}

/// Return-to-go: `rtg[t] = sum of rewards[t..]`, so `rtg[0]` is the return.
pub fn compute_rtg(traj: &Trajectory) -> Vec<f64> {
    let mut rtg = vec![0.0; traj.len()];
    let mut acc = 0.0;
    for t in (0..traj.len()).rev() {
        acc += traj.rewards[t];
        rtg[t] = acc;
    }
    rtg
}

/// A single `(s, a, r, s', done)` sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<'a> {
    pub state: &'a [f64],
    pub action: &'a [f64],
    pub reward: f64,
    pub next_state: &'a [f64],
    /// True only for the last step of a trajectory that ended in a terminal
    /// state; time-limit truncations still bootstrap.
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub state_dim: usize,
    pub action_dim: usize,
    pub r_star: f64,
    pub meta: BTreeMap<String, String>,
}

impl Dataset {
    /// Builds a dataset whose `r_star` is the best trajectory return.
    pub fn new(
        trajectories: Vec<Trajectory>,
        state_dim: usize,
        action_dim: usize,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut ds = Self {
            trajectories,
            state_dim,
            action_dim,
            r_star: f64::NEG_INFINITY,
            meta,
        };
        ds.validate()?;
        ds.r_star = ds.max_return();
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.trajectories {
            t.validate(self.state_dim, self.action_dim)?;
        }
        Ok(())
    }

    pub fn with_r_star(mut self, r_star: f64) -> Self {
        self.r_star = r_star;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn max_return(&self) -> f64 {
        self.returns().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn returns(&self) -> impl Iterator<Item = f64> + '_ {
        self.trajectories.iter().map(Trajectory::total_return)
    }

    pub fn mean_return(&self) -> f64 {
        self.returns().sum::<f64>() / self.trajectories.len() as f64
    }

    /// All transitions in trajectory order.
    pub fn transitions(&self) -> Vec<Transition<'_>> {
        let mut out = Vec::with_capacity(self.num_transitions());
        for traj in &self.trajectories {
            let l = traj.len();
            for t in 0..l {
                out.push(Transition {
                    state: &traj.states[t],
                    action: &traj.actions[t],
                    reward: traj.rewards[t],
                    next_state: &traj.states[t + 1],
                    done: traj.terminal && t + 1 == l,
                });
            }
        }
        out
    }

    /// Every in-sample `(state, action)` pair in trajectory order.
    pub fn state_actions(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        self.trajectories.iter().flat_map(|traj| {
            traj.actions
                .iter()
                .enumerate()
                .map(move |(t, a)| (traj.states[t].as_slice(), a.as_slice()))
        })
    }

    /// Concatenation of `self` with itself `copies` times.
    pub fn repeated(&self, copies: usize) -> Self {
        let mut out = self.clone();
        out.trajectories = (0..copies)
            .flat_map(|_| self.trajectories.iter().cloned())
            .collect();
        out
    }
}
