//! Deterministic toy environments and scripted data collection.

mod behavior;
mod reach;
mod stitch;

use rand::RngCore;

use crate::error::{Error, Result};

pub use behavior::{reach_rollout, BehaviorPolicy, Quality};
pub use reach::Reach2D;
pub use stitch::{grid_dataset, Cell, GridAction, GridState, StitchGrid};

/// Result of applying one action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Reached an absorbing state. Time limits are enforced by the caller.
    pub terminal: bool,
}

/// Vector-observation view of an environment used by rollouts.
pub trait Environment: Send + Sync {
    fn id(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn reset(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn step(&self, state: &[f64], action: &[f64]) -> Result<StepOutcome>;
    /// Maps a raw policy output to an executable action.
    fn decode_action(&self, state: &[f64], raw: &[f64]) -> Vec<f64>;
    /// Per-dimension `(lo, hi)` box covering every reachable state.
    fn state_range(&self) -> Vec<(f64, f64)>;
    /// Per-dimension `(lo, hi)` action box.
    fn action_range(&self) -> Vec<(f64, f64)>;
    /// State used as the conditioner of goal-conditioned evaluation.
    fn goal(&self) -> Vec<f64>;
    /// Uniformly random executable action.
    fn random_action(&self, state: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
}

pub const ENV_IDS: [&str; 2] = [StitchGrid::ID, Reach2D::ID];

/// Looks an environment up by its registry id.
pub fn make_env(id: &str) -> Result<Box<dyn Environment>> {
    match id {
        StitchGrid::ID => Ok(Box::new(StitchGrid)),
        Reach2D::ID => Ok(Box::new(Reach2D)),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_known_ids() {
        for id in ENV_IDS {
            assert_eq!(make_env(id).unwrap().id(), id);
        }
        assert!(matches!(make_env("cartpole"), Err(Error::UnknownEnv(_))));
    }
}
