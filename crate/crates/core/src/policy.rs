//! Return-weighted value-aided conditional policy.
//!
//! The policy is a feed-forward network over a window of `K` (conditioner,
//! state) slots plus their validity mask. For each real step `j` of a
//! training window it predicts `a_{t+j}` from the steps `t..=t+j` and pays
//!
//! ```text
//! |a_{t+j} - pi|^2  -  (w(R) / |Qbar|) * min(Q1, Q2)(s_{t+j}, pi)
//! ```
//!
//! where `R` is the return of the whole source trajectory and `Qbar` the
//! dataset-mean critic value. The critic is never updated here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::critic::QEnsemble;
use crate::dataset::{compute_rtg, sample_subtrajectory, Dataset, SubTrajectory, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{adam_step, backward_accumulate, forward, AdamState, LrSchedule, NetSpec, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Return-to-go tokens.
    #[default]
    Rtg,
    /// A future state of the same trajectory, broadcast over the window.
    Subgoal,
}

/// Map from the network's last layer to the action fed to loss and env.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    #[default]
    Linear,
    /// A point on the probability simplex, for one-hot action spaces.
    Softmax,
}

impl OutputHead {
    pub fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            OutputHead::Linear => z.to_vec(),
            OutputHead::Softmax => {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
                let sum: f64 = e.iter().sum();
                e.into_iter().map(|v| v / sum).collect()
            }
        }
    }

    /// Pulls a gradient on the head output back to the pre-head values.
    pub fn backprop(self, out: &[f64], grad: &[f64]) -> Vec<f64> {
        match self {
            OutputHead::Linear => grad.to_vec(),
            OutputHead::Softmax => {
                let dot: f64 = out.iter().zip(grad).map(|(p, g)| p * g).sum();
                out.iter().zip(grad).map(|(p, g)| p * (g - dot)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub context: usize,
    pub mode: Conditioning,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub head: OutputHead,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Return-to-go inputs are divided by this.
    pub rtg_scale: f64,
}

impl PolicySpec {
    pub fn cond_dim(&self) -> usize {
        match self.mode {
            Conditioning::Rtg => 1,
            Conditioning::Subgoal => self.state_dim,
        }
    }

    /// `K * (cond_dim + state_dim) + K`.
    pub fn input_dim(&self) -> usize {
        self.context * (self.cond_dim() + self.state_dim) + self.context
    }

    pub fn net_spec(&self) -> Result<NetSpec> {
        if self.context == 0 {
            return Err(Error::Config("context length must be at least 1".into()));
        }
        NetSpec::mlp(self.input_dim(), &self.hidden, self.action_dim)
    }

    /// Builds the network input from up to `K` most recent `(conditioner,
    /// state)` entries, oldest first. Missing leading slots are zero with a
    /// zero mask bit.
    pub fn encode(&self, recent: &[(&[f64], &[f64])]) -> Vec<f64> {
        let k = self.context;
        let width = self.cond_dim() + self.state_dim;
        let mut x = vec![0.0; self.input_dim()];
        let used = &recent[recent.len().saturating_sub(k)..];
        let pad = k - used.len();
        for (i, (cond, state)) in used.iter().enumerate() {
            let slot = pad + i;
            let base = slot * width;
            for (d, &c) in cond.iter().enumerate() {
                x[base + d] = match self.mode {
                    Conditioning::Rtg => c / self.rtg_scale,
                    Conditioning::Subgoal => c,
                };
            }
            x[base + self.cond_dim()..base + width].copy_from_slice(state);
            x[k * width + slot] = 1.0;
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub spec: PolicySpec,
    pub net: Network<f64>,
}

impl Policy {
    pub fn init(spec: PolicySpec, seed: u64) -> Result<Self> {
        let net = Network::init(spec.net_spec()?, seed);
        Ok(Self { spec, net })
    }

    /// Raw (unclipped) action for the given history window.
    pub fn act(&self, recent: &[(&[f64], &[f64])]) -> Result<Vec<f64>> {
        Ok(self
            .spec
            .head
            .apply(&self.net.predict(&self.spec.encode(recent))?))
    }
}

/// `w(R) = max(lambda * (r_star - R), floor)`, floor 0 when unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VcsWeightFn {
    pub lambda: f64,
    pub r_star: f64,
    pub floor: Option<f64>,
}

impl VcsWeightFn {
    pub fn weight(&self, ret: f64) -> f64 {
        vcs_weight(ret, self)
    }
}

pub fn vcs_weight(ret: f64, f: &VcsWeightFn) -> f64 {
    (f.lambda * (f.r_star - ret)).max(f.floor.unwrap_or(0.0))
}

/// Training objective variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Behavior cloning plus return-weighted value aid.
    Vcs,
    /// Behavior cloning only (`w = 0`).
    RcslOnly,
    /// Value aid only, unit weight.
    QGreedy,
    /// Behavior cloning plus value aid with a fixed weight.
    ConstantW(f64),
}

impl Baseline {
    pub fn label(&self) -> String {
        match self {
            Baseline::Vcs => "vcs".into(),
            Baseline::RcslOnly => "rcsl_only".into(),
            Baseline::QGreedy => "q_greedy".into(),
            Baseline::ConstantW(c) => format!("constant_w_{c}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vcs" => Ok(Baseline::Vcs),
            "rcsl_only" => Ok(Baseline::RcslOnly),
            "q_greedy" => Ok(Baseline::QGreedy),
            other => other
                .strip_prefix("constant_w")
                .map(|c| c.trim_start_matches(['_', ':', '=']))
                .and_then(|c| c.parse::<f64>().ok())
                .map(Baseline::ConstantW)
                .ok_or_else(|| Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

/// Per-sample loss coefficients: `bc * |a - pi|^2 - weight / |Qbar| * Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub bc: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub baseline: Baseline,
    pub weight_fn: VcsWeightFn,
}

impl Objective {
    pub fn terms(&self, source_return: f64) -> LossTerms {
        match self.baseline {
            Baseline::Vcs => LossTerms {
                bc: 1.0,
                weight: self.weight_fn.weight(source_return),
            },
            Baseline::RcslOnly => LossTerms {
                bc: 1.0,
                weight: 0.0,
            },
            Baseline::QGreedy => LossTerms {
                bc: 0.0,
                weight: 1.0,
            },
            Baseline::ConstantW(c) => LossTerms { bc: 1.0, weight: c },
        }
    }
}

/// A sampled window with conditioners aligned to its slots.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow {
    pub sub: SubTrajectory,
    pub conditioners: Vec<Vec<f64>>,
}

/// Conditioners for the real steps `t..min(t + K, L)`.
///
/// Return-to-go mode yields `rtg[t..]`; subgoal mode draws one state index
/// uniformly from `t+1..=L` and repeats that state.
pub fn make_conditioner<R: Rng + ?Sized>(
    mode: Conditioning,
    traj: &Trajectory,
    t: usize,
    context: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if t >= traj.len() {
        return Err(Error::Config(format!(
            "step {t} outside trajectory of length {}",
            traj.len()
        )));
    }
    let n = context.min(traj.len() - t);
    Ok(match mode {
        Conditioning::Rtg => compute_rtg(traj)[t..t + n]
            .iter()
            .map(|&r| vec![r])
            .collect(),
        Conditioning::Subgoal => {
            let g = rng.random_range(t + 1..=traj.len());
            vec![traj.states[g].clone(); n]
        }
    })
}

impl TrainingWindow {
    pub fn new<R: Rng + ?Sized>(
        dataset: &Dataset,
        sub: SubTrajectory,
        mode: Conditioning,
        rng: &mut R,
    ) -> Result<Self> {
        let traj = &dataset.trajectories[sub.traj_index];
        let real = make_conditioner(mode, traj, sub.start, sub.context_len(), rng)?;
        let cond_dim = real.first().map_or(0, Vec::len);
        let pad = sub.padding();
        let mut conditioners = vec![vec![0.0; cond_dim]; pad];
        conditioners.extend(real);
        Ok(Self { sub, conditioners })
    }

    /// Network input predicting the action in `slot`: slots `0..=slot`
    /// right-aligned in a `K`-slot window.
    fn input_for(&self, spec: &PolicySpec, slot: usize) -> Vec<f64> {
        let first_real = self.sub.padding();
        let recent: Vec<(&[f64], &[f64])> = (first_real..=slot)
            .map(|i| {
                (
                    self.conditioners[i].as_slice(),
                    self.sub.state_window[i].as_slice(),
                )
            })
            .collect();
        spec.encode(&recent)
    }
}

/// Mean of `min(Q1, Q2)` over every in-sample pair.
pub fn q_normalizer(dataset: &Dataset, critic: &QEnsemble) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (s, a) in dataset.state_actions() {
        sum += critic.min_q(s, a)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(sum / n as f64)
}

/// Batch loss and its gradient with respect to the policy parameters.
///
/// Each window contributes the mean over its real steps; the batch loss is
/// the mean over windows. Padded steps carry neither term.
pub fn vcs_loss(
    policy: &Policy,
    batch: &[TrainingWindow],
    critic: &QEnsemble,
    objective: &Objective,
    q_normalizer: f64,
) -> Result<(f64, Vec<f64>)> {
    if q_normalizer == 0.0 || !q_normalizer.is_finite() {
        return Err(Error::ZeroNormalizer);
    }
    let scale = q_normalizer.abs();
    let net = &policy.net;
    let mut grad = vec![0.0; net.params.len()];
    let mut loss = 0.0;
    let b = batch.len() as f64;
    for window in batch {
        let terms = objective.terms(window.sub.source_return);
        let aid = terms.weight / scale;
        let n_valid = window.sub.num_valid() as f64;
        for slot in window.sub.padding()..window.sub.context_len() {
            let x = window.input_for(&policy.spec, slot);
            let (z, cache) = forward(&net.params, &net.spec, &x)?;
            let pi = policy.spec.head.apply(&z);
            let target = &window.sub.action_targets[slot];
            let mut out_grad = vec![0.0; pi.len()];
            let mut step_loss = 0.0;
            if terms.bc != 0.0 {
                for (k, (&p, &a)) in pi.iter().zip(target).enumerate() {
                    step_loss += terms.bc * (a - p) * (a - p);
                    out_grad[k] += terms.bc * 2.0 * (p - a);
                }
            }
            if aid != 0.0 {
                let state = &window.sub.state_window[slot];
                let (q, dq) = critic.min_q_action_gradient(state, &pi)?;
                step_loss -= aid * q;
                for (g, d) in out_grad.iter_mut().zip(dq) {
                    *g -= aid * d;
                }
            }
            let w = 1.0 / (n_valid * b);
            loss += w * step_loss;
            let mut out_grad = policy.spec.head.backprop(&pi, &out_grad);
            for g in &mut out_grad {
                *g *= w;
            }
            backward_accumulate(&net.params, &net.spec, &cache, &out_grad, &mut grad)?;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            what: "non-finite policy loss".into(),
        });
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VcsConfig {
    pub context: usize,
    pub mode: Conditioning,
    pub hidden: Vec<usize>,
    pub head: OutputHead,
    pub rtg_scale: f64,
    pub lambda: f64,
    pub floor: Option<f64>,
    /// Overrides the dataset's `r_star` in the weight function.
    pub r_star: Option<f64>,
    pub steps: usize,
    pub lr: f64,
    pub warmup_steps: u64,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Evaluation targets as multiples of the best dataset return.
    pub target_multipliers: Vec<f64>,
    pub seed: u64,
    pub log_every: usize,
    /// Keep a policy snapshot every this many steps (0 disables).
    pub checkpoint_every: usize,
}

impl Default for VcsConfig {
    fn default() -> Self {
        Self {
            context: 1,
            mode: Conditioning::Rtg,
            hidden: vec![256, 256],
            head: OutputHead::Linear,
            rtg_scale: 1.0,
            lambda: 1.0,
            floor: None,
            r_star: None,
            steps: 10_000,
            lr: 3e-4,
            warmup_steps: 10_000,
            batch_size: 256,
            weight_decay: 1e-4,
            target_multipliers: vec![1.0, 2.0],
            seed: 0,
            log_every: 100,
            checkpoint_every: 0,
        }
    }
}

impl VcsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context == 0 || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Config(
                "context, batch_size and log_every must be positive".into(),
            ));
        }
        if !(self.lambda > 0.0) || !(self.lr > 0.0) || !(self.rtg_scale > 0.0) {
            return Err(Error::Config(
                "lambda, lr and rtg_scale must be positive".into(),
            ));
        }
        if self.floor.is_some_and(|f| f < 0.0) {
            return Err(Error::Config("weight floor must be non-negative".into()));
        }
        Ok(())
    }

    pub fn policy_spec(&self, dataset: &Dataset) -> PolicySpec {
        PolicySpec {
            context: self.context,
            mode: self.mode,
            hidden: self.hidden.clone(),
            head: self.head,
            state_dim: dataset.state_dim,
            action_dim: dataset.action_dim,
            rtg_scale: self.rtg_scale,
        }
    }

    pub fn weight_fn(&self, dataset: &Dataset) -> VcsWeightFn {
        VcsWeightFn {
            lambda: self.lambda,
            r_star: self.r_star.unwrap_or(dataset.r_star),
            floor: self.floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyLossRecord {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArtifacts {
    pub policy: Policy,
    pub q_normalizer: f64,
    pub loss_history: Vec<PolicyLossRecord>,
    /// `(steps completed, snapshot)` every `checkpoint_every` steps.
    pub checkpoints: Vec<(usize, Policy)>,
}

/// Trains a policy against a frozen critic; deterministic given `config.seed`.
pub fn train_policy(
    dataset: &Dataset,
    critic: &QEnsemble,
    config: &VcsConfig,
    baseline: Baseline,
) -> Result<PolicyArtifacts> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let objective = Objective {
        baseline,
        weight_fn: config.weight_fn(dataset),
    };
    let q_bar = q_normalizer(dataset, critic)?;
    let mut policy = Policy::init(config.policy_spec(dataset), config.seed)?;
    let mut adam = AdamState::new(policy.net.params.len());
    let schedule = LrSchedule {
        base_lr: config.lr,
        warmup_steps: config.warmup_steps,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5_eed0_f7c5);
    let mut history = Vec::new();
    let mut checkpoints = Vec::new();
    for step in 0..config.steps {
        let batch = (0..config.batch_size)
            .map(|_| {
                let sub = sample_subtrajectory(dataset, config.context, &mut rng)?;
                TrainingWindow::new(dataset, sub, config.mode, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let (loss, grad) =
            vcs_loss(&policy, &batch, critic, &objective, q_bar).map_err(|e| match e {
                Error::Divergence { what, .. } => Error::Divergence { step, what },
                other => other,
            })?;
        adam_step(
            &mut policy.net.params,
            &grad,
            &mut adam,
            schedule.lr(step as u64),
            config.weight_decay,
        )
        .map_err(|e| match e {
            Error::Divergence { what, .. } => Error::Divergence { step, what },
            other => other,
        })?;
        if step % config.log_every == 0 || step + 1 == config.steps {
            history.push(PolicyLossRecord { step, loss });
        }
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
            checkpoints.push((step + 1, policy.clone()));
        }
    }
    Ok(PolicyArtifacts {
        policy,
        q_normalizer: q_bar,
        loss_history: history,
        checkpoints,
    })
}
