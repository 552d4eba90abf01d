//! `VCSD` version 1 dataset files (all little-endian):
//!
//! ```text
//! "VCSD" | version u32 | state_dim u32 | action_dim u32 | n_traj u32 | r_star f64
//! meta: count u32, then (len u32, key bytes, len u32, value bytes) per entry
//! per trajectory: L u32 | terminal u8 | states f64[(L+1)*sd] | actions f64[L*ad] | rewards f64[L]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Dataset, Trajectory};
use crate::binio::{len_u32, put_f64, put_str, put_u32, Reader};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"VCSD";
pub const DATASET_VERSION: u32 = 1;

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(&DATASET_MAGIC);
    put_u32(&mut out, DATASET_VERSION);
    put_u32(&mut out, len_u32(ds.state_dim, "state_dim")?);
    put_u32(&mut out, len_u32(ds.action_dim, "action_dim")?);
    put_u32(
        &mut out,
        len_u32(ds.trajectories.len(), "trajectory count")?,
    );
    put_f64(&mut out, ds.r_star);
    put_u32(&mut out, len_u32(ds.meta.len(), "meta count")?);
    for (k, v) in &ds.meta {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    for traj in &ds.trajectories {
        put_u32(&mut out, len_u32(traj.len(), "trajectory length")?);
        out.push(u8::from(traj.terminal));
        for x in traj.states.iter().chain(&traj.actions).flatten() {
            put_f64(&mut out, *x);
        }
        for &r in &traj.rewards {
            put_f64(&mut out, r);
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: DATASET_VERSION,
        });
    }
    let state_dim = r.u32("state_dim")? as usize;
    let action_dim = r.u32("action_dim")? as usize;
    let n_traj = r.u32("trajectory count")? as usize;
    let r_star = r.f64("r_star")?;
    let n_meta = r.u32("meta count")? as usize;
    let mut meta = BTreeMap::new();
    for _ in 0..n_meta {
        let k = r.string("meta key")?;
        let v = r.string("meta value")?;
        meta.insert(k, v);
    }
    let chunk = |flat: Vec<f64>, width: usize| -> Vec<Vec<f64>> {
        if width == 0 {
            return vec![Vec::new(); flat.len()];
        }
        flat.chunks(width).map(<[f64]>::to_vec).collect()
    };
    let mut trajectories = Vec::with_capacity(n_traj.min(1 << 16));
    for _ in 0..n_traj {
        let len = r.u32("trajectory length")? as usize;
        let terminal = match r.u8("terminal flag")? {
            0 => false,
            1 => true,
            b => return Err(Error::Malformed(format!("terminal flag {b}"))),
        };
        let states = r.f64s((len + 1) * state_dim, "states")?;
        let actions = r.f64s(len * action_dim, "actions")?;
        let rewards = r.f64s(len, "rewards")?;
        let mut states = chunk(states, state_dim);
        let mut actions = chunk(actions, action_dim);
        // zero-width vectors still need one entry per step
        states.resize(len + 1, Vec::new());
        actions.resize(len, Vec::new());
        trajectories.push(Trajectory {
            states,
            actions,
            rewards,
            terminal,
        });
    }
    r.finish()?;
    let ds = Dataset {
        trajectories,
        state_dim,
        action_dim,
        r_star,
        meta,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let mut meta = BTreeMap::new();
        meta.insert("env".to_string(), "unit".to_string());
        Dataset::new(
            vec![Trajectory {
                states: vec![vec![0.1, -0.0], vec![f64::MIN_POSITIVE, 3.0]],
                actions: vec![vec![1.0 / 3.0]],
                rewards: vec![-2.5],
                terminal: true,
            }],
            2,
            1,
            meta,
        )
        .unwrap()
    }

    #[test]
    fn header_is_bit_exact() {
        let bytes = encode_dataset(&small()).unwrap();
        assert_eq!(&bytes[0..4], b"VCSD");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1u32.to_le_bytes());
        assert_eq!(&bytes[20..28], &(-2.5f64).to_le_bytes());
        // meta, then L = 1 and terminal = 1
        let meta_len = 4 + (4 + 3) + (4 + 4);
        assert_eq!(&bytes[28 + meta_len..32 + meta_len], &1u32.to_le_bytes());
        assert_eq!(bytes[32 + meta_len], 1);
        let payload = (2 * 2 + 1 + 1) * 8;
        assert_eq!(bytes.len(), 33 + meta_len + payload);
    }

    #[test]
    fn distinct_errors_for_magic_version_truncation() {
        let good = encode_dataset(&small()).unwrap();
        let mut bad = good.clone();
        bad[3] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::BadMagic { .. })));
        let mut v2 = good.clone();
        v2[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            decode_dataset(&v2),
            Err(Error::UnsupportedVersion {
                found: 2,
                supported: 1
            })
        ));
        assert!(matches!(
            decode_dataset(&good[..good.len() - 1]),
            Err(Error::Truncated(_))
        ));
    }
}
