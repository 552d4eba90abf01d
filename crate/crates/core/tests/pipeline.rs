//! End-to-end behaviour of value pretraining, policy training and evaluation
//! on small fixtures.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcs_core::artifacts::sha256_hex;
use vcs_core::dataset::{
    action_spread, compute_rtg, encode_dataset, subtrajectory_at, StateQuantizer,
};
use vcs_core::envs::{
    grid_dataset, reach_rollout, BehaviorPolicy, Cell, GridAction, StepOutcome, StitchGrid,
};
use vcs_core::error::Result;
use vcs_core::eval::{
    evaluate_run, rollout_policy, Curve, EvalConfig, EvalReport, ScoreRegistry, SeedReport, Target,
};
use vcs_core::iql::{train_iql, IqlArtifacts};
use vcs_core::nn::encode_params;
use vcs_core::policy::{
    make_conditioner, q_normalizer, train_policy, Baseline, Conditioning, OutputHead,
};
use vcs_core::{Environment, Policy, PolicySpec, RunConfig};

fn grid_critic(seed: u64) -> IqlArtifacts {
    let cfg = RunConfig::preset(StitchGrid::ID).unwrap();
    train_iql(&grid_dataset(), &vcs_core::IqlConfig { seed, ..cfg.iql }).unwrap()
}

fn q(art: &IqlArtifacts, cell: Cell, action: GridAction) -> f64 {
    art.ensemble
        .min_q(&cell.one_hot(), &action.one_hot())
        .unwrap()
}

#[test]
fn grid_pretraining_recovers_the_stitched_values() {
    let art = grid_critic(0);
    assert!((q(&art, Cell::S1, GridAction::Up) - 7.0).abs() < 0.15);
    assert!((q(&art, Cell::S1, GridAction::Right) - 6.0).abs() < 0.15);
    assert!((q(&art, Cell::S2, GridAction::Right) - 4.0).abs() < 0.15);
    let greedy = StitchGrid::available(Cell::S1)
        .into_iter()
        .max_by(|a, b| q(&art, Cell::S1, *a).total_cmp(&q(&art, Cell::S1, *b)))
        .unwrap();
    assert_eq!(greedy, GridAction::Up);
    let qbar = q_normalizer(&grid_dataset(), &art.ensemble).unwrap();
    assert!((2.0..=7.0).contains(&qbar), "{qbar}");
}

#[test]
fn policy_training_leaves_the_critic_untouched_and_reruns_identically() {
    let ds = grid_dataset();
    let art = grid_critic(1);
    let frozen = art.ensemble.clone();
    let cfg = RunConfig::preset(StitchGrid::ID).unwrap();
    let policy_cfg = vcs_core::VcsConfig {
        steps: 200,
        ..cfg.policy
    };
    let a = train_policy(&ds, &art.ensemble, &policy_cfg, Baseline::Vcs).unwrap();
    assert_eq!(art.ensemble, frozen);
    let b = train_policy(&ds, &art.ensemble, &policy_cfg, Baseline::Vcs).unwrap();
    let hash = |p: &Policy| sha256_hex(&encode_params(&p.net).unwrap());
    assert_eq!(hash(&a.policy), hash(&b.policy));
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.checkpoints.len(), 200 / policy_cfg.checkpoint_every);
    let c = train_policy(
        &ds,
        &art.ensemble,
        &vcs_core::VcsConfig {
            seed: 9,
            ..policy_cfg
        },
        Baseline::Vcs,
    )
    .unwrap();
    assert_ne!(hash(&a.policy), hash(&c.policy));
}

#[test]
fn reruns_of_data_collection_and_pretraining_hash_identically() {
    let a = reach_rollout(&BehaviorPolicy::medium(), 4, 11);
    let b = reach_rollout(&BehaviorPolicy::medium(), 4, 11);
    assert_eq!(
        sha256_hex(&encode_dataset(&a).unwrap()),
        sha256_hex(&encode_dataset(&b).unwrap())
    );
    let x = grid_critic(2);
    let y = grid_critic(2);
    assert_eq!(
        sha256_hex(&encode_params(&x.ensemble.q1).unwrap()),
        sha256_hex(&encode_params(&y.ensemble.q1).unwrap())
    );
}

#[test]
fn grid_fixture_windows_and_conditioners() {
    let ds = grid_dataset();
    let purple = &ds.trajectories[0];
    assert_eq!(compute_rtg(purple), vec![6.0, 5.0, 4.0]);
    assert_eq!(compute_rtg(&ds.trajectories[1]), vec![5.0, 2.0, 1.0]);
    let sub = subtrajectory_at(&ds, 0, 2, 1).unwrap();
    assert_eq!(sub.rtg_window, vec![4.0]);
    assert_eq!(sub.state_window, vec![Cell::S2.one_hot()]);
    assert_eq!(sub.action_targets, vec![GridAction::Right.one_hot()]);
    assert_eq!(sub.source_return, 6.0);
    let long = subtrajectory_at(&ds, 0, 0, 5).unwrap();
    assert_eq!(long.mask, vec![false, false, true, true, true]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cond = make_conditioner(Conditioning::Rtg, purple, 0, 3, &mut rng).unwrap();
    assert_eq!(cond, vec![vec![6.0], vec![5.0], vec![4.0]]);
    let last = make_conditioner(Conditioning::Subgoal, purple, 2, 1, &mut rng).unwrap();
    assert_eq!(last, vec![Cell::Term.one_hot()]);
    let draws = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..8)
            .map(|_| make_conditioner(Conditioning::Subgoal, purple, 0, 2, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(draws(4), draws(4));
}

#[test]
fn expert_reach_data_is_more_concentrated() {
    let sq = StateQuantizer::new(20, vec![(-1.0, 1.0); 2]);
    for seed in 0..3 {
        let e = reach_rollout(&BehaviorPolicy::expert(), 50, seed);
        let m = reach_rollout(&BehaviorPolicy::medium(), 50, seed);
        assert!(action_spread(&e, &sq) < action_spread(&m, &sq));
        assert!(e.mean_return() > m.mean_return());
    }
}

/// One-dimensional environment paying `reward` every step for `horizon` steps.
struct Constant {
    horizon: usize,
    reward: f64,
}

impl Environment for Constant {
    fn id(&self) -> &str {
        "constant"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn reset(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![(rng.next_u32() % 7) as f64]
    }
    fn step(&self, state: &[f64], _: &[f64]) -> Result<StepOutcome> {
        Ok(StepOutcome {
            next_state: vec![state[0] + 1.0],
            reward: self.reward,
            terminal: false,
        })
    }
    fn decode_action(&self, _: &[f64], raw: &[f64]) -> Vec<f64> {
        raw.to_vec()
    }
    fn state_range(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 100.0)]
    }
    fn action_range(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0)]
    }
    fn goal(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn random_action(&self, _: &[f64], _: &mut dyn RngCore) -> Vec<f64> {
        vec![0.0]
    }
}

fn stub_policy(seed: u64) -> Policy {
    Policy::init(
        PolicySpec {
            context: 2,
            mode: Conditioning::Rtg,
            hidden: vec![4],
            head: OutputHead::Linear,
            state_dim: 1,
            action_dim: 1,
            rtg_scale: 1.0,
        },
        seed,
    )
    .unwrap()
}

#[test]
fn zero_horizon_rollout_visits_only_the_start() {
    let env = Constant {
        horizon: 0,
        reward: 5.0,
    };
    let r = rollout_policy(&stub_policy(0), &env, &Target::Rtg(3.0), 0).unwrap();
    assert_eq!(r.total_return, 0.0);
    assert_eq!(r.states.len(), 1);
}

#[test]
fn rollout_conditioner_telescopes() {
    let env = Constant {
        horizon: 6,
        reward: 1.5,
    };
    let r = rollout_policy(&stub_policy(1), &env, &Target::Rtg(10.0), 3).unwrap();
    assert_eq!(r.total_return, 9.0);
    for t in 0..r.rewards.len() {
        let spent: f64 = r.rewards[..t].iter().sum();
        assert_eq!(r.conditioners[t], vec![10.0 - spent]);
    }
}

#[test]
fn constant_scores_are_reported_unchanged() {
    let registry = ScoreRegistry::from_json(
        r#"{"constant": {"random": 0.0, "expert": 100.0, "provenance": "unit scale"}}"#,
    )
    .unwrap();
    let env = Constant {
        horizon: 4,
        reward: 10.0,
    };
    let checkpoints: Vec<Policy> = (0..5).map(stub_policy).collect();
    let config = EvalConfig {
        episodes_per_checkpoint: 3,
        checkpoint_interval: 1,
        running_window: 3,
        seeds: vec![0],
        multipliers: vec![1.0, 2.0],
    };
    let report = evaluate_run(&checkpoints, &env, 40.0, &config, &registry, 0).unwrap();
    for curve in &report.curves {
        assert!(curve.running.iter().all(|&s| s == 40.0));
        assert_eq!(curve.final_score, 40.0);
    }
    let too_short = EvalConfig {
        running_window: 6,
        ..config
    };
    assert!(evaluate_run(&checkpoints, &env, 40.0, &too_short, &registry, 0).is_err());
}

#[test]
fn the_best_multiplier_is_reported() {
    let curve = |m: f64, score: f64| Curve {
        multiplier: Some(m),
        target: Target::Rtg(m),
        raw: vec![score],
        normalized: vec![score],
        running: vec![score],
        final_score: score,
        visits: Vec::new(),
    };
    let seeds = (0..3)
        .map(|seed| SeedReport {
            seed,
            curves: vec![curve(1.0, 6.0), curve(2.0, 7.0)],
        })
        .collect();
    let report = EvalReport::summarize("constant", seeds).unwrap();
    assert_eq!(report.best_score, 7.0);
    assert_eq!(report.best_multiplier, Some(2.0));
    assert_eq!(report.final_scores, vec![6.0, 7.0]);
}

#[test]
fn duplicated_meta_free_datasets_round_trip() {
    let ds = vcs_core::Dataset::new(grid_dataset().trajectories, 5, 4, BTreeMap::new()).unwrap();
    let bytes = encode_dataset(&ds).unwrap();
    assert_eq!(vcs_core::dataset::decode_dataset(&bytes).unwrap(), ds);
}

#[test]
fn dataset_and_parameter_files_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.vcsd");
    let ds = grid_dataset();
    vcs_core::dataset::save(&ds, &path).unwrap();
    assert_eq!(vcs_core::dataset::load(&path).unwrap(), ds);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        vcs_core::dataset::load(&path),
        Err(vcs_core::Error::UnsupportedVersion { found: 2, .. })
    ));
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        vcs_core::dataset::load(&path),
        Err(vcs_core::Error::BadMagic { .. })
    ));

    let net = grid_critic(3).ensemble.q1;
    let p = dir.path().join("q1.vcsp");
    vcs_core::nn::write_params(&net, &p).unwrap();
    let back: vcs_core::nn::Network<f64> = vcs_core::nn::read_params(&p).unwrap();
    assert_eq!(encode_params(&back).unwrap(), encode_params(&net).unwrap());
}
