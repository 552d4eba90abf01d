//! Point mass on `[-1, 1]^2` that should reach the origin.

use rand::{Rng, RngCore};

use super::{Environment, StepOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct Reach2D;

impl Reach2D {
    pub const ID: &'static str = "reach2d";
    pub const HORIZON: usize = 30;
    pub const STEP_SIZE: f64 = 0.1;
    pub const START_RING: (f64, f64) = (0.8, 1.0);

    /// Uniform (by area) on the ring `0.8 <= |p| <= 1.0`.
    pub fn sample_start<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
        let (r0, r1) = Self::START_RING;
        let radius = rng.random_range(r0 * r0..=r1 * r1).sqrt();
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        [radius * angle.cos(), radius * angle.sin()]
    }

    pub fn clip_action(a: &[f64]) -> [f64; 2] {
        [a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)]
    }

    /// `p' = clip(p + 0.1 a)` and `r = -|p'|`.
    pub fn dynamics(p: [f64; 2], a: [f64; 2]) -> ([f64; 2], f64) {
        let a = Self::clip_action(&a);
        let next = [
            (p[0] + Self::STEP_SIZE * a[0]).clamp(-1.0, 1.0),
            (p[1] + Self::STEP_SIZE * a[1]).clamp(-1.0, 1.0),
        ];
        (next, -next[0].hypot(next[1]))
    }
}

impl Environment for Reach2D {
    fn id(&self) -> &str {
        Self::ID
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        Self::HORIZON
    }

    fn reset(&self, mut rng: &mut dyn RngCore) -> Vec<f64> {
        Self::sample_start(&mut rng).to_vec()
    }

    fn step(&self, state: &[f64], action: &[f64]) -> Result<StepOutcome> {
        for (got, context) in [
            (state.len(), "reach2d state"),
            (action.len(), "reach2d action"),
        ] {
            if got != 2 {
                return Err(Error::DimensionMismatch {
                    expected: 2,
                    got,
                    context,
                });
            }
        }
        let (next, reward) = Self::dynamics([state[0], state[1]], [action[0], action[1]]);
        Ok(StepOutcome {
            next_state: next.to_vec(),
            reward,
            terminal: false,
        })
    }

    fn decode_action(&self, _state: &[f64], raw: &[f64]) -> Vec<f64> {
        Self::clip_action(raw).to_vec()
    }

    fn state_range(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); 2]
    }

    fn action_range(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); 2]
    }

    fn goal(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn random_action(&self, _state: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn start_states_lie_on_the_ring() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let p = Reach2D::sample_start(&mut rng);
            let r = p[0].hypot(p[1]);
            assert!((0.8..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn dynamics_clip_and_reward_bounds() {
        let (p, r) = Reach2D::dynamics([0.95, -0.95], [5.0, -5.0]);
        assert_eq!(p, [1.0, -1.0]);
        assert!((r + 2f64.sqrt()).abs() < 1e-15);
        let (p, r) = Reach2D::dynamics([0.05, 0.0], [-0.5, 0.0]);
        assert_eq!(p, [0.0, 0.0]);
        assert_eq!(r, 0.0);
    }
}
