//! Double-Q critic ensemble and the mapping from `(state, action)` to
//! critic input features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{polyak_update, NetSpec, Network};
use crate::scalar::Scalar;

/// How a `(state, action)` pair is presented to a critic network.
///
/// Every encoding is linear in the action for a fixed state, so the
/// critic's input gradient maps back onto the action exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticEncoding {
    /// `[s; a]`.
    #[default]
    Concat,
    /// `vec(s a^T)`: entry `i * action_dim + k` is `s_i * a_k`. With one-hot
    /// states and actions this is a tabular indicator of the pair.
    StateOuterAction,
    /// `s` alone: an action-blind baseline whose kernel rows are all ones.
    StateOnly,
}

impl CriticEncoding {
    pub fn input_dim(self, state_dim: usize, action_dim: usize) -> usize {
        match self {
            CriticEncoding::Concat => state_dim + action_dim,
            CriticEncoding::StateOuterAction => state_dim * action_dim,
            CriticEncoding::StateOnly => state_dim,
        }
    }

    pub fn encode<T: Scalar>(self, state: &[T], action: &[T]) -> Vec<T> {
        match self {
            CriticEncoding::Concat => state.iter().chain(action).copied().collect(),
            CriticEncoding::StateOuterAction => state
                .iter()
                .flat_map(|&s| action.iter().map(move |&a| s * a))
                .collect(),
            CriticEncoding::StateOnly => state.to_vec(),
        }
    }

    /// Pulls a gradient with respect to the encoded input back onto the action.
    pub fn action_gradient<T: Scalar>(
        self,
        state: &[T],
        action_dim: usize,
        input_grad: &[T],
    ) -> Vec<T> {
        match self {
            CriticEncoding::Concat => input_grad[state.len()..].to_vec(),
            CriticEncoding::StateOuterAction => (0..action_dim)
                .map(|k| {
                    state
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| s * input_grad[i * action_dim + k])
                        .sum()
                })
                .collect(),
            CriticEncoding::StateOnly => vec![T::zero(); action_dim],
        }
    }
}

/// A single critic network together with its input encoding.
#[derive(Debug, Clone, Copy)]
pub struct CriticView<'a, T> {
    pub net: &'a Network<T>,
    pub encoding: CriticEncoding,
    pub action_dim: usize,
}

impl<'a, T: Scalar> CriticView<'a, T> {
    pub fn value(&self, state: &[T], action: &[T]) -> Result<T> {
        self.net.scalar(&self.encoding.encode(state, action))
    }

    /// `Q(s, a)` and `grad_theta Q(s, a)`.
    pub fn param_gradient(&self, state: &[T], action: &[T]) -> Result<(T, Vec<T>)> {
        let (q, g) = self
            .net
            .scalar_with_gradient(&self.encoding.encode(state, action))?;
        Ok((q, g.wrt_params))
    }

    /// `Q(s, a)` and `grad_a Q(s, a)`.
    pub fn action_gradient(&self, state: &[T], action: &[T]) -> Result<(T, Vec<T>)> {
        let (q, g) = self
            .net
            .scalar_with_gradient(&self.encoding.encode(state, action))?;
        Ok((
            q,
            self.encoding
                .action_gradient(state, self.action_dim, &g.wrt_input),
        ))
    }
}

/// Two online critics and their Polyak-averaged targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEnsemble {
    pub encoding: CriticEncoding,
    pub state_dim: usize,
    pub action_dim: usize,
    pub q1: Network<f64>,
    pub q2: Network<f64>,
    pub q1_target: Network<f64>,
    pub q2_target: Network<f64>,
}

impl QEnsemble {
    /// Targets start as exact copies of the online critics.
    pub fn new(
        encoding: CriticEncoding,
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let spec = NetSpec::mlp(encoding.input_dim(state_dim, action_dim), hidden, 1)?;
        let q1 = Network::init(spec.clone(), seed);
        let q2 = Network::init(spec, seed.wrapping_add(1));
        Ok(Self {
            encoding,
            state_dim,
            action_dim,
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.q1.spec
    }

    pub fn view<'a>(&self, net: &'a Network<f64>) -> CriticView<'a, f64> {
        CriticView {
            net,
            encoding: self.encoding,
            action_dim: self.action_dim,
        }
    }

    pub fn q1_view(&self) -> CriticView<'_, f64> {
        self.view(&self.q1)
    }

    pub fn encode(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        self.encoding.encode(state, action)
    }

    fn check(&self, state: &[f64], action: &[f64]) -> Result<()> {
        if state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim + self.action_dim,
                got: state.len() + action.len(),
                context: "critic (state, action)",
            });
        }
        Ok(())
    }

    /// `min(Q1, Q2)` of the online critics.
    pub fn min_q(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.check(state, action)?;
        let x = self.encode(state, action);
        Ok(self.q1.scalar(&x)?.min(self.q2.scalar(&x)?))
    }

    /// `min(Q1_target, Q2_target)`.
    pub fn target_min_q(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.check(state, action)?;
        let x = self.encode(state, action);
        Ok(self.q1_target.scalar(&x)?.min(self.q2_target.scalar(&x)?))
    }

    /// `min(Q1, Q2)` and its action gradient, taken through the smaller
    /// critic (`Q1` on ties).
    pub fn min_q_action_gradient(&self, state: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(state, action)?;
        let x = self.encode(state, action);
        let q1 = self.q1.scalar(&x)?;
        let q2 = self.q2.scalar(&x)?;
        let net = if q2 < q1 { &self.q2 } else { &self.q1 };
        self.view(net).action_gradient(state, action)
    }

    pub fn sync_targets(&mut self, chi: f64) -> Result<()> {
        polyak_update(&mut self.q1_target.params, &self.q1.params, chi)?;
        polyak_update(&mut self.q2_target.params, &self.q2.params, chi)
    }
}
