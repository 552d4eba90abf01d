//! Value-aided conditional supervised learning on toy offline RL problems.
//!
//! The numeric core ([`nn`], [`ntk`], [`critic::CriticView`]) is generic over
//! [`Scalar`]; the training pipeline runs in `f64` and the aliases below name
//! its concrete types.

pub mod artifacts;
mod binio;
pub mod config;
pub mod critic;
pub mod dataset;
pub mod demo;
pub mod envs;
pub mod error;
pub mod eval;
pub mod iql;
pub mod nn;
pub mod ntk;
pub mod policy;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ParamSet = nn::Params<f64>;
pub type Mlp = nn::Network<f64>;
pub type MlpGradient = nn::Gradient<f64>;
pub type Adam = nn::AdamState<f64>;
pub type Critic<'a> = critic::CriticView<'a, f64>;
pub type Mrr = ntk::MrrReport<f64>;

pub use config::RunConfig;
pub use critic::{CriticEncoding, QEnsemble};
pub use dataset::{Dataset, SubTrajectory, Trajectory};
pub use envs::{make_env, Environment};
pub use eval::{EvalConfig, ScoreRegistry};
pub use iql::{train_iql, IqlConfig};
pub use nn::NetSpec;
pub use ntk::{omrr, ActionQuantizer, OmrrReport};
pub use policy::{train_policy, Baseline, Policy, PolicySpec, VcsConfig, VcsWeightFn};
