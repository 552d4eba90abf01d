//! Rollouts, normalized scores and checkpoint running averages.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{make_env, BehaviorPolicy, Environment, Reach2D, StitchGrid};
use crate::error::{Error, Result};
use crate::policy::{Conditioning, Policy};

/// What the policy is conditioned on at the start of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Rtg(f64),
    Goal(Vec<f64>),
}

impl Target {
    fn mode(&self) -> Conditioning {
        match self {
            Target::Rtg(_) => Conditioning::Rtg,
            Target::Goal(_) => Conditioning::Subgoal,
        }
    }
}

/// `m * base` for non-negative bases, `base / m` otherwise, so that a larger
/// multiplier always asks for more return.
pub fn scaled_target(base: f64, multiplier: f64) -> f64 {
    if base >= 0.0 {
        multiplier * base
    } else {
        base / multiplier
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub total_return: f64,
    /// `T + 1` states including the start state.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Conditioner fed at each of the `T` decisions.
    pub conditioners: Vec<Vec<f64>>,
}

/// Runs one greedy episode. In return-to-go mode the conditioner starts at
/// the target and is decreased by every observed reward.
pub fn rollout_policy(
    policy: &Policy,
    env: &dyn Environment,
    target: &Target,
    seed: u64,
) -> Result<Rollout> {
    let spec = &policy.spec;
    if target.mode() != spec.mode {
        return Err(Error::Config(format!(
            "target {:?} does not match a {:?}-conditioned policy",
            target, spec.mode
        )));
    }
    for (expected, got, context) in [
        (spec.state_dim, env.state_dim(), "policy state width"),
        (spec.action_dim, env.action_dim(), "policy action width"),
    ] {
        if expected != got {
            return Err(Error::DimensionMismatch {
                expected,
                got,
                context,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(&mut rng);
    let mut cond = match target {
        Target::Rtg(r) => vec![*r],
        Target::Goal(g) => g.clone(),
    };
    let mut out = Rollout {
        total_return: 0.0,
        states: vec![state.clone()],
        actions: Vec::new(),
        rewards: Vec::new(),
        conditioners: Vec::new(),
    };
    for _ in 0..env.horizon() {
        out.conditioners.push(cond.clone());
        let from = out.conditioners.len().saturating_sub(spec.context);
        let recent: Vec<(&[f64], &[f64])> = (from..out.conditioners.len())
            .map(|i| (out.conditioners[i].as_slice(), out.states[i].as_slice()))
            .collect();
        let raw = policy.act(&recent)?;
        let action = env.decode_action(&state, &raw);
        let step = env.step(&state, &action)?;
        out.total_return += step.reward;
        out.rewards.push(step.reward);
        out.actions.push(action);
        out.states.push(step.next_state.clone());
        if let Target::Rtg(_) = target {
            cond[0] -= step.reward;
        }
        state = step.next_state;
        if step.terminal {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub random: f64,
    pub expert: f64,
    pub provenance: String,
}

/// Per-environment reference returns for normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreRegistry {
    pub entries: BTreeMap<String, RegistryEntry>,
}

const BUILTIN_REGISTRY: &str = include_str!("../data/registry.json");

impl ScoreRegistry {
    /// The committed registry file.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_REGISTRY).expect("committed registry parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let reg: Self = serde_json::from_str(text)?;
        for (id, e) in &reg.entries {
            if !(e.expert > e.random) {
                return Err(Error::Config(format!(
                    "registry entry {id}: expert {} not above random {}",
                    e.expert, e.random
                )));
            }
        }
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, env_id: &str) -> Result<&RegistryEntry> {
        self.entries
            .get(env_id)
            .ok_or_else(|| Error::UnknownEnv(env_id.to_string()))
    }

    /// `100 * (raw - random) / (expert - random)`.
    pub fn normalized_score(&self, raw: f64, env_id: &str) -> Result<f64> {
        let e = self.get(env_id)?;
        Ok(100.0 * (raw - e.random) / (e.expert - e.random))
    }

    /// Recomputes every entry: the random reference averages `episodes`
    /// uniformly random episodes; the expert reference uses the noiseless
    /// scripted expert.
    pub fn generate(episodes: usize, seed: u64) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for id in crate::envs::ENV_IDS {
            let env = make_env(id)?;
            let random = mean_return(env.as_ref(), episodes, seed, |env, s, rng| {
                env.random_action(s, rng)
            })?;
            let expert = match id {
                StitchGrid::ID => StitchGrid::q_table()[0]
                    .iter()
                    .filter(|((c, _), _)| *c == crate::envs::Cell::S1)
                    .map(|(_, &q)| q)
                    .fold(f64::NEG_INFINITY, f64::max),
                _ => mean_return(env.as_ref(), episodes, seed, |_, s, _| {
                    BehaviorPolicy::mean_action([s[0], s[1]]).to_vec()
                })?,
            };
            let provenance = format!(
                "random: mean of {episodes} uniform-random episodes (seed {seed}); expert: {}",
                match id {
                    Reach2D::ID => format!(
                        "noiseless scripted expert, mean of {episodes} episodes (seed {seed})"
                    ),
                    _ => "optimal return by backward induction".to_string(),
                }
            );
            entries.insert(
                id.to_string(),
                RegistryEntry {
                    random,
                    expert,
                    provenance,
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mean_return(
    env: &dyn Environment,
    episodes: usize,
    seed: u64,
    act: impl Fn(&dyn Environment, &[f64], &mut ChaCha8Rng) -> Vec<f64>,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset(&mut rng);
        for _ in 0..env.horizon() {
            let a = act(env, &s, &mut rng);
            let out = env.step(&s, &a)?;
            total += out.reward;
            s = out.next_state;
            if out.terminal {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes_per_checkpoint: usize,
    pub checkpoint_interval: usize,
    pub running_window: usize,
    pub seeds: Vec<u64>,
    /// Multiples of the best dataset return used as initial targets.
    pub multipliers: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes_per_checkpoint: 10,
            checkpoint_interval: 1000,
            running_window: 10,
            seeds: (0..5).collect(),
            multipliers: vec![1.0, 2.0],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_checkpoint == 0
            || self.checkpoint_interval == 0
            || self.running_window == 0
        {
            return Err(Error::Config(
                "episodes, checkpoint interval and running window must be positive".into(),
            ));
        }
        if self.seeds.is_empty() || self.multipliers.is_empty() {
            return Err(Error::Config(
                "at least one seed and one multiplier required".into(),
            ));
        }
        if self.multipliers.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config("multipliers must be positive".into()));
        }
        Ok(())
    }
}

/// Trailing mean over at most `window` entries, one value per position.
pub fn running_average(scores: &[f64], window: usize) -> Vec<f64> {
    (0..scores.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &scores[lo..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (episode as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// One row of a visited-state dump.
#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub episode: usize,
    pub step: usize,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// `None` for goal-conditioned evaluation.
    pub multiplier: Option<f64>,
    pub target: Target,
    /// Mean raw return per checkpoint.
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub running: Vec<f64>,
    pub final_score: f64,
    /// States visited at the last checkpoint.
    #[serde(skip)]
    pub visits: Vec<Visit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub curves: Vec<Curve>,
}

/// Evaluates a sequence of checkpoints of one training run.
///
/// Episode `e` starts from the same state at every checkpoint.
pub fn evaluate_run(
    checkpoints: &[Policy],
    env: &dyn Environment,
    base_return: f64,
    config: &EvalConfig,
    registry: &ScoreRegistry,
    seed: u64,
) -> Result<SeedReport> {
    config.validate()?;
    if checkpoints.len() < config.running_window {
        return Err(Error::MissingCheckpoints {
            needed: config.running_window,
            have: checkpoints.len(),
        });
    }
    let mode = checkpoints[0].spec.mode;
    let targets: Vec<(Option<f64>, Target)> = match mode {
        Conditioning::Rtg => config
            .multipliers
            .iter()
            .map(|&m| (Some(m), Target::Rtg(scaled_target(base_return, m))))
            .collect(),
        Conditioning::Subgoal => vec![(None, Target::Goal(env.goal()))],
    };
    let mut curves = Vec::with_capacity(targets.len());
    for (multiplier, target) in targets {
        let mut raw = Vec::with_capacity(checkpoints.len());
        let mut visits = Vec::new();
        for (ci, policy) in checkpoints.iter().enumerate() {
            let rollouts = (0..config.episodes_per_checkpoint)
                .into_par_iter()
                .map(|e| rollout_policy(policy, env, &target, episode_seed(seed, e)))
                .collect::<Result<Vec<_>>>()?;
            raw.push(rollouts.iter().map(|r| r.total_return).sum::<f64>() / rollouts.len() as f64);
            if ci + 1 == checkpoints.len() {
                for (episode, r) in rollouts.into_iter().enumerate() {
                    visits.extend(r.states.into_iter().enumerate().map(|(step, state)| Visit {
                        episode,
                        step,
                        state,
                    }));
                }
            }
        }
        let normalized = raw
            .iter()
            .map(|&r| registry.normalized_score(r, env.id()))
            .collect::<Result<Vec<_>>>()?;
        let running = running_average(&normalized, config.running_window);
        let final_score = *running.last().expect("at least one checkpoint");
        curves.push(Curve {
            multiplier,
            target,
            raw,
            normalized,
            running,
            final_score,
            visits,
        });
    }
    Ok(SeedReport { seed, curves })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env_id: String,
    pub per_seed: Vec<SeedReport>,
    /// Mean over seeds of each curve's final score, in curve order.
    pub final_scores: Vec<f64>,
    pub best_multiplier: Option<f64>,
    pub best_score: f64,
}

impl EvalReport {
    /// Aggregates per-seed reports that share the same target list.
    pub fn summarize(env_id: &str, per_seed: Vec<SeedReport>) -> Result<Self> {
        let first = per_seed
            .first()
            .ok_or_else(|| Error::Config("no seeds evaluated".into()))?;
        let n_curves = first.curves.len();
        if per_seed.iter().any(|s| s.curves.len() != n_curves) {
            return Err(Error::Config("seed reports disagree on targets".into()));
        }
        let final_scores: Vec<f64> = (0..n_curves)
            .map(|c| {
                per_seed
                    .iter()
                    .map(|s| s.curves[c].final_score)
                    .sum::<f64>()
                    / per_seed.len() as f64
            })
            .collect();
        let (best_idx, best_score) =
            final_scores
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
                );
        Ok(Self {
            env_id: env_id.to_string(),
            best_multiplier: first.curves[best_idx].multiplier,
            final_scores,
            best_score,
            per_seed,
        })
    }
}

/// Writes `episode,step,s0,s1,...`.
pub fn write_visits_csv<W: Write>(visits: &[Visit], state_dim: usize, mut out: W) -> Result<()> {
    let mut header = vec!["episode".to_string(), "step".to_string()];
    header.extend((0..state_dim).map(|i| format!("s{i}")));
    writeln!(out, "{}", header.join(","))?;
    for v in visits {
        let mut row = vec![v.episode.to_string(), v.step.to_string()];
        row.extend(v.state.iter().map(|x| x.to_string()));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_targets_ask_for_more() {
        assert_eq!(scaled_target(6.0, 2.0), 12.0);
        assert_eq!(scaled_target(-10.0, 2.0), -5.0);
        assert_eq!(scaled_target(-10.0, 1.0), -10.0);
    }

    #[test]
    fn running_average_windows() {
        assert_eq!(
            running_average(&[1.0, 3.0, 5.0, 7.0], 2),
            vec![1.0, 2.0, 4.0, 6.0]
        );
        assert_eq!(running_average(&[4.0; 12], 10), vec![4.0; 12]);
    }

    #[test]
    fn normalization_endpoints() {
        let reg = ScoreRegistry::builtin();
        for id in crate::envs::ENV_IDS {
            let e = reg.get(id).unwrap().clone();
            assert_eq!(reg.normalized_score(e.random, id).unwrap(), 0.0);
            assert!((reg.normalized_score(e.expert, id).unwrap() - 100.0).abs() < 1e-12);
            let mid = 0.5 * (e.random + e.expert);
            assert!((reg.normalized_score(mid, id).unwrap() - 50.0).abs() < 1e-9);
        }
        assert!(matches!(
            reg.normalized_score(0.0, "hopper"),
            Err(Error::UnknownEnv(_))
        ));
    }

    #[test]
    fn inverted_registry_rejected() {
        let bad = r#"{"x": {"random": 5.0, "expert": 1.0, "provenance": ""}}"#;
        assert!(ScoreRegistry::from_json(bad).is_err());
    }
}
