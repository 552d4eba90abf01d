//! In-sample value pretraining with expectile regression.
//!
//! Each iteration fits `V(s)` to an upper expectile of the target critics'
//! `min(Q1, Q2)(s, a)` over dataset actions, regresses both online critics
//! toward `r + gamma * (1 - done) * V(s')`, then Polyak-averages the targets.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::critic::{CriticEncoding, QEnsemble};
use crate::dataset::{Dataset, Transition};
use crate::error::{Error, Result};
use crate::nn::{adam_step, backward_accumulate, forward, AdamState, NetSpec, Network};

/// `|eta - 1(u < 0)| * u^2`.
pub fn expectile_loss(u: f64, eta: f64) -> f64 {
    expectile_weight(u, eta) * u * u
}

/// Asymmetric weight `|eta - 1(u < 0)|`.
pub fn expectile_weight(u: f64, eta: f64) -> f64 {
    if u < 0.0 {
        1.0 - eta
    } else {
        eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IqlConfig {
    pub expectile: f64,
    pub discount: f64,
    pub target_rate: f64,
    pub lr: f64,
    /// Transitions per step, drawn without replacement (the whole dataset
    /// when it has fewer).
    pub batch_size: usize,
    pub steps: usize,
    pub hidden: Vec<usize>,
    pub encoding: CriticEncoding,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for IqlConfig {
    fn default() -> Self {
        Self {
            expectile: 0.7,
            discount: 0.99,
            target_rate: 5e-3,
            lr: 3e-4,
            batch_size: 256,
            steps: 10_000,
            hidden: vec![256, 256],
            encoding: CriticEncoding::Concat,
            seed: 0,
            log_every: 100,
        }
    }
}

impl IqlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.expectile) {
            return Err(Error::Config(format!(
                "expectile {} outside [0.5, 1)",
                self.expectile
            )));
        }
        if !(0.0..=1.0).contains(&self.target_rate) {
            return Err(Error::Config(format!(
                "target rate {} outside [0, 1]",
                self.target_rate
            )));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Config(
                "lr, batch_size and log_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub v_loss: f64,
    pub q_loss: f64,
}

/// Frozen output of value pretraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqlArtifacts {
    pub ensemble: QEnsemble,
    pub value: Network<f64>,
    pub loss_history: Vec<LossRecord>,
}

/// One Adam step on the mean expectile loss of
/// `min(Q1_target, Q2_target)(s, a) - V(s)` over `batch`.
pub fn v_step(
    value: &mut Network<f64>,
    adam: &mut AdamState<f64>,
    ensemble: &QEnsemble,
    batch: &[Transition<'_>],
    eta: f64,
    lr: f64,
) -> Result<f64> {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; value.params.len()];
    let mut loss = 0.0;
    for tr in batch {
        let target = ensemble.target_min_q(tr.state, tr.action)?;
        let (v, cache) = forward(&value.params, &value.spec, tr.state)?;
        let u = target - v[0];
        let w = expectile_weight(u, eta);
        loss += w * u * u / n;
        // d/dV of w (target - V)^2
        backward_accumulate(
            &value.params,
            &value.spec,
            &cache,
            &[-2.0 * w * u / n],
            &mut grad,
        )?;
    }
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: adam.step_count as usize,
            what: "non-finite value loss".into(),
        });
    }
    adam_step(&mut value.params, &grad, adam, lr, 0.0)?;
    Ok(loss)
}

/// One Adam step for each online critic on the squared error to
/// `r + gamma * (1 - done) * V(s')`. Returns the mean of the two losses.
pub fn q_step(
    ensemble: &mut QEnsemble,
    adams: &mut [AdamState<f64>; 2],
    value: &Network<f64>,
    batch: &[Transition<'_>],
    gamma: f64,
    lr: f64,
) -> Result<f64> {
    let n = batch.len() as f64;
    let targets = batch
        .iter()
        .map(|tr| {
            Ok(if tr.done {
                tr.reward
            } else {
                tr.reward + gamma * value.scalar(tr.next_state)?
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let inputs: Vec<Vec<f64>> = batch
        .iter()
        .map(|tr| ensemble.encode(tr.state, tr.action))
        .collect();
    let mut total = 0.0;
    for (net, adam) in [&mut ensemble.q1, &mut ensemble.q2]
        .into_iter()
        .zip(adams.iter_mut())
    {
        let mut grad = vec![0.0; net.params.len()];
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(&targets) {
            let (q, cache) = forward(&net.params, &net.spec, x)?;
            let err = q[0] - y;
            loss += err * err / n;
            backward_accumulate(&net.params, &net.spec, &cache, &[2.0 * err / n], &mut grad)?;
        }
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step: adam.step_count as usize,
                what: "non-finite critic loss".into(),
            });
        }
        adam_step(&mut net.params, &grad, adam, lr, 0.0)?;
        total += loss / 2.0;
    }
    Ok(total)
}

fn sample_batch<'a, R: Rng>(
    transitions: &[Transition<'a>],
    batch_size: usize,
    rng: &mut R,
) -> Vec<Transition<'a>> {
    if batch_size >= transitions.len() {
        return transitions.to_vec();
    }
    index::sample(rng, transitions.len(), batch_size)
        .into_iter()
        .map(|i| transitions[i].clone())
        .collect()
}

/// Full pretraining loop; deterministic given `config.seed`.
pub fn train_iql(dataset: &Dataset, config: &IqlConfig) -> Result<IqlArtifacts> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let transitions = dataset.transitions();
    let mut ensemble = QEnsemble::new(
        config.encoding,
        dataset.state_dim,
        dataset.action_dim,
        &config.hidden,
        config.seed.wrapping_mul(3),
    )?;
    let mut value = Network::init(
        NetSpec::mlp(dataset.state_dim, &config.hidden, 1)?,
        config.seed.wrapping_mul(3).wrapping_add(2),
    );
    let mut v_adam = AdamState::new(value.params.len());
    let mut q_adams = [
        AdamState::new(ensemble.q1.params.len()),
        AdamState::new(ensemble.q2.params.len()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x1a1_5eed);
    let mut history = Vec::new();
    for step in 0..config.steps {
        let with_step = |e: Error| match e {
            Error::Divergence { what, .. } => Error::Divergence { step, what },
            other => other,
        };
        let batch = sample_batch(&transitions, config.batch_size, &mut rng);
        let v_loss = v_step(
            &mut value,
            &mut v_adam,
            &ensemble,
            &batch,
            config.expectile,
            config.lr,
        )
        .map_err(with_step)?;
        let q_loss = q_step(
            &mut ensemble,
            &mut q_adams,
            &value,
            &batch,
            config.discount,
            config.lr,
        )
        .map_err(with_step)?;
        ensemble.sync_targets(config.target_rate)?;
        if step % config.log_every == 0 || step + 1 == config.steps {
            history.push(LossRecord {
                step,
                v_loss,
                q_loss,
            });
        }
    }
    Ok(IqlArtifacts {
        ensemble,
        value,
        loss_history: history,
    })
}
