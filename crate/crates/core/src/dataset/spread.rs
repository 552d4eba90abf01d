use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Dataset;

/// Uniform per-dimension binning of a box-shaped state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateQuantizer {
    pub bins: usize,
    pub ranges: Vec<(f64, f64)>,
}

impl StateQuantizer {
    pub fn new(bins: usize, ranges: Vec<(f64, f64)>) -> Self {
        assert!(bins >= 1, "at least one bin");
        Self { bins, ranges }
    }

    /// Bin index per dimension; values outside the range land in the edge bins.
    pub fn cell(&self, state: &[f64]) -> Vec<usize> {
        state
            .iter()
            .zip(&self.ranges)
            .map(|(&x, &(lo, hi))| {
                let f = (x - lo) / (hi - lo) * self.bins as f64;
                (f.floor().max(0.0) as usize).min(self.bins - 1)
            })
            .collect()
    }

    pub fn center(&self, cell: &[usize]) -> Vec<f64> {
        cell.iter()
            .zip(&self.ranges)
            .map(|(&i, &(lo, hi))| lo + (i as f64 + 0.5) * (hi - lo) / self.bins as f64)
            .collect()
    }

    /// In-sample actions grouped by state cell; actions within a cell are
    /// sorted so downstream sums do not depend on trajectory order.
    pub fn group_actions(&self, dataset: &Dataset) -> BTreeMap<Vec<usize>, Vec<Vec<f64>>> {
        let mut cells: BTreeMap<Vec<usize>, Vec<Vec<f64>>> = BTreeMap::new();
        for (s, a) in dataset.state_actions() {
            cells.entry(self.cell(s)).or_default().push(a.to_vec());
        }
        for actions in cells.values_mut() {
            actions.sort_by(|x, y| {
                x.iter()
                    .zip(y)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        }
        cells
    }

    /// The cell holding the most in-sample actions (lowest index on ties).
    pub fn densest_cell(&self, dataset: &Dataset) -> Option<(Vec<usize>, Vec<Vec<f64>>)> {
        self.group_actions(dataset).into_iter().fold(
            None,
            |best: Option<(Vec<usize>, Vec<Vec<f64>>)>, (cell, acts)| match best {
                Some(b) if b.1.len() >= acts.len() => Some(b),
                _ => Some((cell, acts)),
            },
        )
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Average action spread: mean over occupied state cells of the mean L2
/// distance between in-sample actions of that cell.
///
/// Only pairs of differing actions enter a cell's mean, so a cell whose
/// actions are all identical (including a single action) contributes 0.
pub fn action_spread(dataset: &Dataset, quantizer: &StateQuantizer) -> f64 {
    let cells = quantizer.group_actions(dataset);
    if cells.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for actions in cells.values() {
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..actions.len() {
            for j in (i + 1)..actions.len() {
                if actions[i] != actions[j] {
                    sum += distance(&actions[i], &actions[j]);
                    pairs += 1;
                }
            }
        }
        if pairs > 0 {
            total += sum / pairs as f64;
        }
    }
    total / cells.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Trajectory;

    fn one_cell(actions: &[[f64; 2]]) -> Dataset {
        let traj = Trajectory {
            states: vec![vec![0.05, 0.05]; actions.len() + 1],
            actions: actions.iter().map(|a| a.to_vec()).collect(),
            rewards: vec![0.0; actions.len()],
            terminal: false,
        };
        Dataset::new(vec![traj], 2, 2, Default::default()).unwrap()
    }

    fn q() -> StateQuantizer {
        StateQuantizer::new(20, vec![(-1.0, 1.0); 2])
    }

    #[test]
    fn identical_actions_have_zero_spread() {
        assert_eq!(action_spread(&one_cell(&[[0.3, 0.1]; 4]), &q()), 0.0);
    }

    #[test]
    fn two_action_cell_excludes_self_pairs() {
        assert_eq!(
            action_spread(&one_cell(&[[0.0, 0.0], [1.0, 0.0]]), &q()),
            1.0
        );
    }

    #[test]
    fn quantizer_cells_and_centers() {
        let q = q();
        assert_eq!(q.cell(&[-1.0, 0.999]), vec![0, 19]);
        assert_eq!(q.cell(&[0.0, 1.0]), vec![10, 19]);
        assert_eq!(q.cell(&[-7.0, 7.0]), vec![0, 19]);
        let c = q.center(&[10, 0]);
        assert!((c[0] - 0.05).abs() < 1e-15 && (c[1] + 0.95).abs() < 1e-15);
    }
}
