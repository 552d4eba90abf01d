//! Whole-run configuration with per-environment presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::critic::CriticEncoding;
use crate::envs::{Reach2D, StitchGrid, ENV_IDS};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::iql::IqlConfig;
use crate::policy::{OutputHead, VcsConfig};

/// Settings of the kernel and spread probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Grid points per action dimension.
    pub action_bins: usize,
    /// Bins per state dimension for spread and the densest-cell reference.
    pub state_bins: usize,
    pub n_pairs: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            action_bins: 11,
            state_bins: 20,
            n_pairs: 200,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    pub iql: IqlConfig,
    pub policy: VcsConfig,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults tuned for `env`.
    pub fn preset(env: &str) -> Result<Self> {
        let mut cfg = Self {
            env: env.to_string(),
            iql: IqlConfig::default(),
            policy: VcsConfig::default(),
            eval: EvalConfig::default(),
            probe: ProbeConfig::default(),
            output_dir: None,
        };
        match env {
            StitchGrid::ID => {
                cfg.iql = IqlConfig {
                    expectile: 0.99,
                    discount: StitchGrid::DISCOUNT,
                    lr: 1e-2,
                    steps: 20_000,
                    hidden: vec![],
                    encoding: CriticEncoding::StateOuterAction,
                    ..IqlConfig::default()
                };
                cfg.policy = VcsConfig {
                    hidden: vec![32, 32],
                    head: OutputHead::Softmax,
                    lambda: 20.0,
                    steps: 2_000,
                    lr: 1e-3,
                    warmup_steps: 100,
                    batch_size: 16,
                    weight_decay: 0.0,
                    ..VcsConfig::default()
                };
                cfg.eval = EvalConfig {
                    episodes_per_checkpoint: 1,
                    checkpoint_interval: 200,
                    running_window: 1,
                    ..EvalConfig::default()
                };
            }
            Reach2D::ID => {
                cfg.iql = IqlConfig {
                    hidden: vec![128, 128],
                    steps: 1_000,
                    lr: 1e-3,
                    batch_size: 128,
                    ..IqlConfig::default()
                };
                cfg.policy = VcsConfig {
                    hidden: vec![64, 64],
                    steps: 3_000,
                    lr: 1e-3,
                    warmup_steps: 300,
                    batch_size: 64,
                    rtg_scale: 10.0,
                    ..VcsConfig::default()
                };
                cfg.eval = EvalConfig {
                    checkpoint_interval: 150,
                    ..EvalConfig::default()
                };
            }
            other => return Err(Error::UnknownEnv(other.to_string())),
        }
        cfg.policy.checkpoint_every = cfg.eval.checkpoint_interval;
        Ok(cfg)
    }

    /// Overlays a JSON document on the preset of its `env` (default
    /// `reach2d`). Unknown keys at any level are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        if !user.is_object() {
            return Err(Error::Config("run config must be a JSON object".into()));
        }
        let env = match user.get("env") {
            None => Reach2D::ID,
            Some(Value::String(s)) => s.as_str(),
            Some(_) => return Err(Error::Config("env must be a string".into())),
        };
        if !ENV_IDS.contains(&env) {
            return Err(Error::UnknownEnv(env.to_string()));
        }
        let mut merged = serde_json::to_value(Self::preset(env)?)?;
        merge(&mut merged, user);
        let mut cfg: Self =
            serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.policy.checkpoint_every = cfg.eval.checkpoint_interval;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.iql.validate()?;
        self.policy.validate()?;
        self.eval.validate()?;
        if self.probe.action_bins < 2 || self.probe.state_bins == 0 || self.probe.n_pairs == 0 {
            return Err(Error::Config(
                "probe needs >= 2 action bins, >= 1 state bin and >= 1 pair".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Recursively overwrites `base` with `over`; objects merge key by key,
/// everything else is replaced.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
