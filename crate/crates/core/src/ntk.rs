//! Empirical neural tangent kernel diagnostics for critics.
//!
//! `k(s', a', s, a) = grad_theta Q(s', a') . grad_theta Q(s, a)`. Row ratios
//! divide `|k|` by the reference pair's own squared gradient norm; a critic
//! whose ratios are near 1 everywhere moves every action's value together
//! when trained on one.

use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critic::CriticView;
use crate::dataset::{Dataset, StateQuantizer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn ntk<T: Scalar>(
    critic: &CriticView<'_, T>,
    s_bar: &[T],
    a_bar: &[T],
    s: &[T],
    a: &[T],
) -> Result<T> {
    let (_, g_bar) = critic.param_gradient(s_bar, a_bar)?;
    let (_, g) = critic.param_gradient(s, a)?;
    Ok(dot(&g_bar, &g))
}

/// `|k(s', a', s, a)| / |grad_theta Q(s, a)|^2`.
pub fn normalized_ntk<T: Scalar>(
    critic: &CriticView<'_, T>,
    s_bar: &[T],
    a_bar: &[T],
    s: &[T],
    a: &[T],
) -> Result<T> {
    let (_, g_bar) = critic.param_gradient(s_bar, a_bar)?;
    let (_, g) = critic.param_gradient(s, a)?;
    let norm2 = dot(&g, &g);
    if norm2 == T::zero() {
        return Err(Error::DegenerateReference);
    }
    Ok(dot(&g_bar, &g).abs() / norm2)
}

/// Gram matrix over `pairs` with entry `(i, j) = k(s_j, a_j, s_i, a_i)`.
pub fn gram_matrix<T: Scalar>(
    critic: &CriticView<'_, T>,
    pairs: &[(Vec<T>, Vec<T>)],
) -> Result<Vec<Vec<T>>> {
    let grads = pairs
        .iter()
        .map(|(s, a)| critic.param_gradient(s, a).map(|(_, g)| g))
        .collect::<Result<Vec<_>>>()?;
    Ok(grads
        .iter()
        .map(|gi| grads.iter().map(|gj| dot(gj, gi)).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrrReport<T> {
    pub value: T,
    /// Reference pairs with a zero parameter gradient.
    pub skipped: usize,
}

/// Mean row ratio over the full product `states x actions`.
pub fn mrr<T: Scalar>(
    critic: &CriticView<'_, T>,
    states: &[Vec<T>],
    actions: &[Vec<T>],
) -> Result<MrrReport<T>> {
    let pairs: Vec<(Vec<T>, Vec<T>)> = states
        .iter()
        .flat_map(|s| actions.iter().map(move |a| (s.clone(), a.clone())))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Config("MRR needs at least two pairs".into()));
    }
    let gram = gram_matrix(critic, &pairs)?;
    let mut total = T::zero();
    let mut used = 0usize;
    for (i, row) in gram.iter().enumerate() {
        let norm2 = row[i];
        if norm2 == T::zero() {
            continue;
        }
        let off: T = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &k)| k.abs() / norm2)
            .sum();
        total += off / T::of((pairs.len() - 1) as f64);
        used += 1;
    }
    let value = if used == 0 {
        T::nan()
    } else {
        total / T::of(used as f64)
    };
    Ok(MrrReport {
        value,
        skipped: pairs.len() - used,
    })
}

/// Finite set of contrastive actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActionQuantizer {
    /// Bin centers of `bins` equal-width bins per dimension.
    Uniform {
        bins: usize,
        ranges: Vec<(f64, f64)>,
    },
    /// An explicit action list, e.g. the one-hot actions of a discrete env.
    Discrete { actions: Vec<Vec<f64>> },
}

impl ActionQuantizer {
    pub fn uniform(bins: usize, ranges: Vec<(f64, f64)>) -> Self {
        assert!(bins >= 1, "at least one bin");
        ActionQuantizer::Uniform { bins, ranges }
    }

    pub fn bins(&self) -> usize {
        match self {
            ActionQuantizer::Uniform { bins, .. } => *bins,
            ActionQuantizer::Discrete { actions } => actions.len(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ActionQuantizer::Uniform { bins, ranges } => bins.pow(ranges.len() as u32),
            ActionQuantizer::Discrete { actions } => actions.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points, last dimension varying fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            ActionQuantizer::Discrete { actions } => actions.clone(),
            ActionQuantizer::Uniform { bins, ranges } => {
                let centers: Vec<Vec<f64>> = ranges
                    .iter()
                    .map(|&(lo, hi)| {
                        let w = (hi - lo) / *bins as f64;
                        (0..*bins).map(|i| lo + (i as f64 + 0.5) * w).collect()
                    })
                    .collect();
                (0..self.len())
                    .map(|mut flat| {
                        let mut p = vec![0.0; ranges.len()];
                        for d in (0..ranges.len()).rev() {
                            p[d] = centers[d][flat % bins];
                            flat /= bins;
                        }
                        p
                    })
                    .collect()
            }
        }
    }

    /// Index of the grid point whose bin contains `action`.
    pub fn nearest(&self, action: &[f64]) -> usize {
        match self {
            ActionQuantizer::Uniform { bins, ranges } => {
                action.iter().zip(ranges).fold(0, |flat, (&x, &(lo, hi))| {
                    let f = ((x - lo) / (hi - lo) * *bins as f64).floor();
                    let i = (f.max(0.0) as usize).min(bins - 1);
                    flat * bins + i
                })
            }
            ActionQuantizer::Discrete { actions } => {
                let d2 = |p: &Vec<f64>| -> f64 {
                    p.iter().zip(action).map(|(x, y)| (x - y) * (x - y)).sum()
                };
                (0..actions.len())
                    .min_by(|&i, &j| d2(&actions[i]).total_cmp(&d2(&actions[j])))
                    .unwrap_or(0)
            }
        }
    }

    pub fn snap(&self, action: &[f64]) -> Vec<f64> {
        self.points().swap_remove(self.nearest(action))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmrrReport {
    pub estimate: f64,
    pub n_pairs: usize,
    pub skipped: usize,
    pub bins: usize,
    pub seed: u64,
    pub critic: String,
    pub quantizer: ActionQuantizer,
    /// Row ratio of every non-degenerate sampled pair, in sampling order.
    pub per_pair_ratios: Vec<f64>,
    /// Dataset index of every sampled pair, in sampling order.
    pub pair_indices: Vec<usize>,
}

/// Row ratio of one in-sample pair against every grid action except the one
/// whose bin contains `action`. `None` for a degenerate reference.
pub fn row_ratio(
    critic: &CriticView<'_, f64>,
    state: &[f64],
    action: &[f64],
    grid: &[Vec<f64>],
    exclude: usize,
) -> Result<Option<f64>> {
    let (_, g) = critic.param_gradient(state, action)?;
    let norm2 = dot(&g, &g);
    if norm2 == 0.0 {
        return Ok(None);
    }
    let mut sum = 0.0;
    for (j, a_bar) in grid.iter().enumerate() {
        if j == exclude {
            continue;
        }
        let (_, g_bar) = critic.param_gradient(state, a_bar)?;
        sum += dot(&g_bar, &g).abs() / norm2;
    }
    Ok(Some(sum / (grid.len() - 1) as f64))
}

/// Sampled offline mean row ratio.
///
/// Draws `n_pairs` distinct in-sample pairs (all of them, in dataset order,
/// when `n_pairs >= |D|`) and averages their row ratios against the grid.
pub fn omrr(
    critic: &CriticView<'_, f64>,
    dataset: &Dataset,
    quantizer: &ActionQuantizer,
    n_pairs: usize,
    seed: u64,
) -> Result<OmrrReport> {
    if n_pairs == 0 {
        return Err(Error::Config("n_pairs must be at least 1".into()));
    }
    if quantizer.len() < 2 {
        return Err(Error::Config(
            "action grid needs at least two points".into(),
        ));
    }
    let pairs: Vec<(&[f64], &[f64])> = dataset.state_actions().collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let picked: Vec<usize> = if n_pairs >= pairs.len() {
        (0..pairs.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, pairs.len(), n_pairs).into_vec()
    };
    let grid = quantizer.points();
    let ratios = picked
        .par_iter()
        .map(|&i| {
            let (s, a) = pairs[i];
            row_ratio(critic, s, a, &grid, quantizer.nearest(a))
        })
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<f64> = ratios.iter().flatten().copied().collect();
    let estimate = if kept.is_empty() {
        f64::NAN
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    };
    Ok(OmrrReport {
        estimate,
        n_pairs: picked.len(),
        skipped: picked.len() - kept.len(),
        bins: quantizer.bins(),
        seed,
        critic: "q1".to_string(),
        quantizer: quantizer.clone(),
        per_pair_ratios: kept,
        pair_indices: picked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub action: Vec<f64>,
    pub q_value: f64,
    pub normalized_ntk: f64,
}

/// `Q(s, a')` and the normalized kernel against `a_ref` for every grid action.
pub fn ntk_profile(
    critic: &CriticView<'_, f64>,
    state: &[f64],
    a_ref: &[f64],
    quantizer: &ActionQuantizer,
) -> Result<Vec<ProfileRow>> {
    let (_, g_ref) = critic.param_gradient(state, a_ref)?;
    let norm2 = dot(&g_ref, &g_ref);
    if norm2 == 0.0 {
        return Err(Error::DegenerateReference);
    }
    quantizer
        .points()
        .into_par_iter()
        .map(|a| {
            let (q, g) = critic.param_gradient(state, &a)?;
            Ok(ProfileRow {
                normalized_ntk: dot(&g, &g_ref).abs() / norm2,
                q_value: q,
                action: a,
            })
        })
        .collect()
}

/// Profile taken at the most populated state cell of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensestProfile {
    pub state: Vec<f64>,
    /// Grid action closest to the mean dataset action in that cell.
    pub a_ref: Vec<f64>,
    pub rows: Vec<ProfileRow>,
}

/// Profiles `critic` at the centre of the densest cell of `dataset`.
pub fn densest_state_profile(
    critic: &CriticView<'_, f64>,
    dataset: &Dataset,
    states: &StateQuantizer,
    actions: &ActionQuantizer,
) -> Result<DensestProfile> {
    let (cell, in_cell) = states.densest_cell(dataset).ok_or(Error::EmptyDataset)?;
    let state = states.center(&cell);
    let n = in_cell.len() as f64;
    let mean: Vec<f64> = (0..dataset.action_dim)
        .map(|k| in_cell.iter().map(|a| a[k]).sum::<f64>() / n)
        .collect();
    let a_ref = actions.snap(&mean);
    let rows = ntk_profile(critic, &state, &a_ref, actions)?;
    Ok(DensestProfile { state, a_ref, rows })
}

/// `max - min` of the normalized kernel over a profile.
pub fn profile_range(rows: &[ProfileRow]) -> f64 {
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.normalized_ntk), hi.max(r.normalized_ntk))
        });
    hi - lo
}

/// CSV with header `a0,...,a{d-1},q_value,normalized_ntk`.
pub fn write_profile_csv<W: Write>(rows: &[ProfileRow], mut out: W) -> Result<()> {
    let dims = rows.first().map_or(0, |r| r.action.len());
    let mut header: Vec<String> = (0..dims).map(|d| format!("a{d}")).collect();
    header.push("q_value".into());
    header.push("normalized_ntk".into());
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let mut fields: Vec<String> = r.action.iter().map(|x| format!("{x}")).collect();
        fields.push(format!("{}", r.q_value));
        fields.push(format!("{}", r.normalized_ntk));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
