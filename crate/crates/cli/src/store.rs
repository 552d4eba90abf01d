//! On-disk layout of critic and policy artifact directories.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vcs_core::artifacts::sha256_file;
use vcs_core::nn::{read_params, write_params};
use vcs_core::policy::{Baseline, Policy, PolicySpec};
use vcs_core::{CriticEncoding, Error, QEnsemble, Result};

/// Parses an artifact sidecar; a bad document is a file-format error.
fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

const CRITIC_NETS: [&str; 4] = ["q1", "q2", "q1_target", "q2_target"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticMeta {
    pub encoding: CriticEncoding,
    pub state_dim: usize,
    pub action_dim: usize,
}

pub fn save_critic(ens: &QEnsemble, dir: &Path) -> Result<()> {
    let nets = [&ens.q1, &ens.q2, &ens.q1_target, &ens.q2_target];
    for (name, net) in CRITIC_NETS.iter().zip(nets) {
        write_params(net, dir.join(format!("{name}.vcsp")))?;
    }
    let meta = CriticMeta {
        encoding: ens.encoding,
        state_dim: ens.state_dim,
        action_dim: ens.action_dim,
    };
    std::fs::write(
        dir.join("critic.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

pub fn load_critic(dir: &Path) -> Result<QEnsemble> {
    let meta: CriticMeta = read_json(&dir.join("critic.json"))?;
    let mut nets = CRITIC_NETS
        .iter()
        .map(|name| read_params::<f64>(dir.join(format!("{name}.vcsp"))))
        .collect::<Result<Vec<_>>>()?;
    let expected = meta.encoding.input_dim(meta.state_dim, meta.action_dim);
    for net in &nets {
        if net.spec.input_dim() != expected || net.spec.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected,
                got: net.spec.input_dim(),
                context: "critic input width",
            });
        }
    }
    let q2_target = nets.pop().expect("four nets");
    let q1_target = nets.pop().expect("four nets");
    let q2 = nets.pop().expect("four nets");
    let q1 = nets.pop().expect("four nets");
    Ok(QEnsemble {
        encoding: meta.encoding,
        state_dim: meta.state_dim,
        action_dim: meta.action_dim,
        q1,
        q2,
        q1_target,
        q2_target,
    })
}

/// Sidecar of a trained policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub spec: PolicySpec,
    pub baseline: Baseline,
    pub lambda: f64,
    pub floor: Option<f64>,
    pub r_star: f64,
    /// Best dataset return; evaluation targets are multiples of it.
    pub base_return: f64,
    pub multipliers: Vec<f64>,
    pub q_normalizer: f64,
    pub seed: u64,
    pub env: String,
    pub critic_sha256: String,
    /// Checkpoint file names in training order.
    pub checkpoints: Vec<String>,
}

pub fn critic_hash(dir: &Path) -> Result<String> {
    sha256_file(dir.join("q1.vcsp"))
}

pub fn load_policy(dir: &Path) -> Result<(PolicyMeta, Policy, Vec<Policy>)> {
    let meta: PolicyMeta = read_json(&dir.join("policy.json"))?;
    let load = |name: &str| -> Result<Policy> {
        let net = read_params::<f64>(dir.join(name))?;
        let expected = meta.spec.net_spec()?;
        if net.spec != expected {
            return Err(Error::DimensionMismatch {
                expected: expected.num_params(),
                got: net.spec.num_params(),
                context: "policy network layout",
            });
        }
        Ok(Policy {
            spec: meta.spec.clone(),
            net,
        })
    };
    let policy = load("policy.vcsp")?;
    let checkpoints = meta
        .checkpoints
        .iter()
        .map(|c| load(c))
        .collect::<Result<Vec<_>>>()?;
    Ok((meta, policy, checkpoints))
}
