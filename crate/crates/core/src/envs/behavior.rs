use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Reach2D;
use crate::dataset::{Dataset, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Expert,
    Medium,
    Mixture,
}

impl Quality {
    pub fn as_str(self) -> &'static str {
        match self {
            Quality::Expert => "expert",
            Quality::Medium => "medium",
            Quality::Mixture => "mixture",
        }
    }
}

/// Scripted Reach2D data collector.
///
/// The mean action is a unit step toward the origin, `-p / max(|p|, 0.1)`,
/// perturbed by isotropic Gaussian noise and clipped to the action box. A
/// mixture collects `round(mixture_ratio * n)` expert episodes followed by
/// medium ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPolicy {
    pub quality: Quality,
    pub noise_scale: f64,
    pub mixture_ratio: f64,
}

impl BehaviorPolicy {
    pub const EXPERT_SIGMA: f64 = 0.05;
    pub const MEDIUM_SIGMA: f64 = 0.4;

    pub fn expert() -> Self {
        Self {
            quality: Quality::Expert,
            noise_scale: Self::EXPERT_SIGMA,
            mixture_ratio: 1.0,
        }
    }

    pub fn medium() -> Self {
        Self {
            quality: Quality::Medium,
            noise_scale: Self::MEDIUM_SIGMA,
            mixture_ratio: 0.0,
        }
    }

    /// Expert fraction `ratio`; noise scales come from the two components.
    pub fn mixture(ratio: f64) -> Self {
        Self {
            quality: Quality::Mixture,
            noise_scale: f64::NAN,
            mixture_ratio: ratio.clamp(0.0, 1.0),
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_scale = sigma;
        self
    }

    pub fn mean_action(p: [f64; 2]) -> [f64; 2] {
        let scale = p[0].hypot(p[1]).max(0.1);
        [-p[0] / scale, -p[1] / scale]
    }

    /// Noisy, clipped action from one pure component.
    fn act<R: Rng + ?Sized>(sigma: f64, p: [f64; 2], rng: &mut R) -> [f64; 2] {
        let mean = Self::mean_action(p);
        if sigma == 0.0 {
            return Reach2D::clip_action(&mean);
        }
        let noise = Normal::new(0.0, sigma).expect("finite sigma");
        Reach2D::clip_action(&[mean[0] + noise.sample(rng), mean[1] + noise.sample(rng)])
    }

    /// Runs one episode of the pure component with noise `sigma`.
    pub fn episode<R: Rng + ?Sized>(sigma: f64, start: [f64; 2], rng: &mut R) -> Trajectory {
        let mut p = start;
        let mut states = vec![p.to_vec()];
        let mut actions = Vec::with_capacity(Reach2D::HORIZON);
        let mut rewards = Vec::with_capacity(Reach2D::HORIZON);
        for _ in 0..Reach2D::HORIZON {
            let a = Self::act(sigma, p, rng);
            let (next, r) = Reach2D::dynamics(p, a);
            actions.push(a.to_vec());
            rewards.push(r);
            states.push(next.to_vec());
            p = next;
        }
        Trajectory {
            states,
            actions,
            rewards,
            terminal: false,
        }
    }
}

/// Collects `n_traj` Reach2D episodes with `policy`.
pub fn reach_rollout(policy: &BehaviorPolicy, n_traj: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_expert = match policy.quality {
        Quality::Expert => n_traj,
        Quality::Medium => 0,
        Quality::Mixture => (policy.mixture_ratio * n_traj as f64).round() as usize,
    };
    let sigma_for = |i: usize| match policy.quality {
        Quality::Mixture if i < n_expert => BehaviorPolicy::EXPERT_SIGMA,
        Quality::Mixture => BehaviorPolicy::MEDIUM_SIGMA,
        _ => policy.noise_scale,
    };
    let trajectories = (0..n_traj)
        .map(|i| {
            let start = Reach2D::sample_start(&mut rng);
            BehaviorPolicy::episode(sigma_for(i), start, &mut rng)
        })
        .collect();
    let mut meta = BTreeMap::new();
    meta.insert("env".to_string(), Reach2D::ID.to_string());
    meta.insert("quality".to_string(), policy.quality.as_str().to_string());
    meta.insert("seed".to_string(), seed.to_string());
    match policy.quality {
        Quality::Mixture => {
            meta.insert("n_expert".to_string(), n_expert.to_string());
            meta.insert(
                "sigma_expert".to_string(),
                BehaviorPolicy::EXPERT_SIGMA.to_string(),
            );
            meta.insert(
                "sigma_medium".to_string(),
                BehaviorPolicy::MEDIUM_SIGMA.to_string(),
            );
        }
        _ => {
            meta.insert("sigma".to_string(), policy.noise_scale.to_string());
        }
    }
    Dataset::new(trajectories, 2, 2, meta).expect("rollouts are well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_expert_contracts_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = BehaviorPolicy::episode(0.0, [0.9, 0.0], &mut rng);
        let norms: Vec<f64> = traj.states.iter().map(|s| s[0].hypot(s[1])).collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(norms[0] > *norms.last().unwrap());
        assert_eq!(*norms.last().unwrap(), 0.0);
    }

    #[test]
    fn rollouts_are_reproducible() {
        let a = reach_rollout(&BehaviorPolicy::medium(), 5, 42);
        let b = reach_rollout(&BehaviorPolicy::medium(), 5, 42);
        assert_eq!(a, b);
        assert!(a.trajectories.iter().all(|t| t.len() == Reach2D::HORIZON));
        assert_eq!(a.meta["quality"], "medium");
    }

    #[test]
    fn actions_stay_in_the_box() {
        let ds = reach_rollout(&BehaviorPolicy::medium().with_noise(3.0), 10, 1);
        assert!(ds
            .state_actions()
            .all(|(_, a)| a.iter().all(|x| (-1.0..=1.0).contains(x))));
    }

    #[test]
    fn mixture_counts_expert_episodes() {
        let ds = reach_rollout(&BehaviorPolicy::mixture(0.25), 100, 3);
        assert_eq!(ds.meta["n_expert"], "25");
        assert_eq!(ds.trajectories.len(), 100);
    }
}
