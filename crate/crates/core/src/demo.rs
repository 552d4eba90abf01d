//! End-to-end stitching reproduction on the two-trajectory grid dataset.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::envs::{grid_dataset, Cell, GridAction, StitchGrid};
use crate::error::{Error, Result};
use crate::eval::{rollout_policy, Target};
use crate::iql::{train_iql, IqlArtifacts, IqlConfig};
use crate::policy::{train_policy, Baseline, Policy, VcsConfig};

/// Tolerance on the learned `Q(s1, .)` values.
pub const Q_TOLERANCE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub cell: String,
    pub action: String,
    pub learned: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub target_rtg: f64,
    pub total_return: f64,
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub baseline: String,
    pub outcomes: Vec<TargetOutcome>,
}

impl BaselineOutcome {
    pub fn return_at(&self, target: f64) -> Option<f64> {
        self.outcomes
            .iter()
            .find(|o| o.target_rtg == target)
            .map(|o| o.total_return)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub q_values: Vec<QEntry>,
    pub baselines: Vec<BaselineOutcome>,
    pub passed: bool,
}

impl SeedOutcome {
    pub fn q(&self, cell: Cell, action: GridAction) -> Option<f64> {
        self.q_values
            .iter()
            .find(|e| e.cell == cell.to_string() && e.action == action.to_string())
            .map(|e| e.learned)
    }

    pub fn baseline(&self, label: &str) -> Option<&BaselineOutcome> {
        self.baselines.iter().find(|b| b.baseline == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchReport {
    /// Rollout targets: the purple return, the optimum, and twice the purple return.
    pub targets: Vec<f64>,
    pub seeds: Vec<SeedOutcome>,
    pub failures: usize,
}

pub const BEHAVIOR_RETURN: f64 = 6.0;
pub const OPTIMAL_RETURN: f64 = 7.0;

/// Trains the critic and the three policies for each seed and checks the
/// stitching outcome: critic within tolerance of the exact `Q(s1, .)`,
/// `rcsl_only` reproducing the best trajectory (6) and both value-aided
/// policies reaching the optimum (7).
pub fn stitch_demo(cfg: &RunConfig, seeds: &[u64]) -> Result<StitchReport> {
    if cfg.env != StitchGrid::ID {
        return Err(Error::Config(format!(
            "stitch demo needs env {:?}",
            StitchGrid::ID
        )));
    }
    let targets = vec![BEHAVIOR_RETURN, OPTIMAL_RETURN, 2.0 * BEHAVIOR_RETURN];
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        out.push(run_seed(cfg, seed, &targets)?);
    }
    Ok(StitchReport {
        failures: out.iter().filter(|s| !s.passed).count(),
        targets,
        seeds: out,
    })
}

/// Critic plus one trained policy per baseline.
pub struct StitchRun {
    pub critic: IqlArtifacts,
    pub policies: Vec<(Baseline, Policy)>,
}

pub fn train_stitch_run(cfg: &RunConfig, seed: u64) -> Result<StitchRun> {
    let ds = grid_dataset();
    let critic = train_iql(
        &ds,
        &IqlConfig {
            seed,
            ..cfg.iql.clone()
        },
    )?;
    let pcfg = VcsConfig {
        seed,
        checkpoint_every: 0,
        ..cfg.policy.clone()
    };
    let policies = [Baseline::RcslOnly, Baseline::Vcs, Baseline::QGreedy]
        .into_iter()
        .map(|b| Ok((b, train_policy(&ds, &critic.ensemble, &pcfg, b)?.policy)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StitchRun { critic, policies })
}

fn run_seed(cfg: &RunConfig, seed: u64, targets: &[f64]) -> Result<SeedOutcome> {
    let run = train_stitch_run(cfg, seed)?;
    let exact = &StitchGrid::q_table()[0];
    let mut q_values = Vec::new();
    for cell in Cell::ALL {
        for action in StitchGrid::available(cell) {
            q_values.push(QEntry {
                cell: cell.to_string(),
                action: action.to_string(),
                learned: run
                    .critic
                    .ensemble
                    .min_q(&cell.one_hot(), &action.one_hot())?,
                exact: exact[&(cell, action)],
            });
        }
    }
    let mut baselines = Vec::new();
    for (b, policy) in &run.policies {
        let outcomes = targets
            .iter()
            .map(|&t| {
                let r = rollout_policy(policy, &StitchGrid, &Target::Rtg(t), seed)?;
                let path = r
                    .actions
                    .iter()
                    .map(|a| {
                        GridAction::ALL
                            .into_iter()
                            .find(|g| g.one_hot() == *a)
                            .map_or_else(|| "?".to_string(), |g| g.to_string())
                    })
                    .collect();
                Ok(TargetOutcome {
                    target_rtg: t,
                    total_return: r.total_return,
                    path,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        baselines.push(BaselineOutcome {
            baseline: b.label(),
            outcomes,
        });
    }
    let mut outcome = SeedOutcome {
        seed,
        q_values,
        baselines,
        passed: false,
    };
    let q_ok = |a, want: f64| {
        outcome
            .q(Cell::S1, a)
            .is_some_and(|q| (q - want).abs() <= Q_TOLERANCE)
    };
    let ret = |label: &str, target: f64| outcome.baseline(label).and_then(|b| b.return_at(target));
    outcome.passed = q_ok(GridAction::Up, OPTIMAL_RETURN)
        && q_ok(GridAction::Right, BEHAVIOR_RETURN)
        && ret("rcsl_only", BEHAVIOR_RETURN) == Some(BEHAVIOR_RETURN)
        && ret("vcs", OPTIMAL_RETURN) == Some(OPTIMAL_RETURN)
        && ret("q_greedy", OPTIMAL_RETURN) == Some(OPTIMAL_RETURN);
    Ok(outcome)
}
