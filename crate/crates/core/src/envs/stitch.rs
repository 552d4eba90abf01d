//! Three-step stitching gridworld.
//!
//! Two logged trajectories cross at `s2`:
//!
//! ```text
//! purple  s1 -RIGHT(1)-> s3 -UPLEFT(1)-> s2 -RIGHT(4)-> TERM       return 6
//! orange  s1 -UP(3)----> s2 -DOWNRIGHT(1)-> s6 -RIGHT(1)-> TERM    return 5
//! ```
//!
//! Taking `UP` then `RIGHT` stitches the two and earns 7.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::IndexedRandom;
use rand::RngCore;

use super::{Environment, StepOutcome};
use crate::dataset::{Dataset, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    S1,
    S2,
    S3,
    S6,
    Term,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridAction {
    Up,
    Right,
    UpLeft,
    DownRight,
}

impl Cell {
    pub const ALL: [Cell; 5] = [Cell::S1, Cell::S2, Cell::S3, Cell::S6, Cell::Term];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; Self::ALL.len()];
        v[self.index()] = 1.0;
        v
    }

    /// Inverse of [`Cell::one_hot`] (argmax of the vector).
    pub fn from_vector(v: &[f64]) -> Option<Cell> {
        if v.len() != Self::ALL.len() {
            return None;
        }
        let i = argmax(v.iter().copied())?;
        Some(Self::ALL[i])
    }
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::Up,
        GridAction::Right,
        GridAction::UpLeft,
        GridAction::DownRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; Self::ALL.len()];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Cell::S1 => "s1",
            Cell::S2 => "s2",
            Cell::S3 => "s3",
            Cell::S6 => "s6",
            Cell::Term => "TERM",
        };
        f.write_str(s)
    }
}

impl fmt::Display for GridAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GridAction::Up => "UP",
            GridAction::Right => "RIGHT",
            GridAction::UpLeft => "UPLEFT",
            GridAction::DownRight => "DOWNRIGHT",
        };
        f.write_str(s)
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    values
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// Position in an episode: the cell and the number of steps taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridState {
    pub cell: Cell,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StitchGrid;

impl StitchGrid {
    pub const ID: &'static str = "stitch-grid";
    pub const HORIZON: usize = 3;
    pub const DISCOUNT: f64 = 1.0;

    /// The canonical transition table: `(next cell, reward)`.
    pub fn transition(cell: Cell, action: GridAction) -> Option<(Cell, f64)> {
        use Cell::*;
        use GridAction::*;
        match (cell, action) {
            (S1, Up) => Some((S2, 3.0)),
            (S1, Right) => Some((S3, 1.0)),
            (S2, Right) => Some((Term, 4.0)),
            (S2, DownRight) => Some((S6, 1.0)),
            (S3, UpLeft) => Some((S2, 1.0)),
            (S6, Right) => Some((Term, 1.0)),
            _ => None,
        }
    }

    pub fn available(cell: Cell) -> Vec<GridAction> {
        GridAction::ALL
            .into_iter()
            .filter(|&a| Self::transition(cell, a).is_some())
            .collect()
    }

    pub fn reset() -> GridState {
        GridState {
            cell: Cell::S1,
            t: 0,
        }
    }

    /// Returns `(next, reward, done)`; done on reaching `TERM` or the horizon.
    pub fn step(state: GridState, action: GridAction) -> Result<(GridState, f64, bool)> {
        let (next, reward) =
            Self::transition(state.cell, action).ok_or_else(|| Error::InvalidAction {
                state: state.cell.to_string(),
                action: action.to_string(),
            })?;
        let next = GridState {
            cell: next,
            t: state.t + 1,
        };
        let done = next.cell == Cell::Term || next.t >= Self::HORIZON;
        Ok((next, reward, done))
    }

    /// Exact action values by backward induction over the horizon.
    ///
    /// Entry `[t][cell][action]` is `None` for unavailable actions.
    pub fn q_table() -> Vec<BTreeMap<(Cell, GridAction), f64>> {
        let h = Self::HORIZON;
        let mut v_next: BTreeMap<Cell, f64> = Cell::ALL.iter().map(|&c| (c, 0.0)).collect();
        let mut tables = vec![BTreeMap::new(); h];
        for t in (0..h).rev() {
            let mut q = BTreeMap::new();
            for cell in Cell::ALL {
                for a in GridAction::ALL {
                    if let Some((next, r)) = Self::transition(cell, a) {
                        let cont = if next == Cell::Term {
                            0.0
                        } else {
                            v_next[&next]
                        };
                        q.insert((cell, a), r + Self::DISCOUNT * cont);
                    }
                }
            }
            let v: BTreeMap<Cell, f64> = Cell::ALL
                .iter()
                .map(|&c| {
                    let best = Self::available(c)
                        .iter()
                        .map(|&a| q[&(c, a)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    (c, if best.is_finite() { best } else { 0.0 })
                })
                .collect();
            tables[t] = q;
            v_next = v;
        }
        tables
    }
}

impl Environment for StitchGrid {
    fn id(&self) -> &str {
        Self::ID
    }

    fn state_dim(&self) -> usize {
        Cell::ALL.len()
    }

    fn action_dim(&self) -> usize {
        GridAction::ALL.len()
    }

    fn horizon(&self) -> usize {
        Self::HORIZON
    }

    fn reset(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        Cell::S1.one_hot()
    }

    fn step(&self, state: &[f64], action: &[f64]) -> Result<StepOutcome> {
        let cell = Cell::from_vector(state).ok_or_else(|| Error::DimensionMismatch {
            expected: Cell::ALL.len(),
            got: state.len(),
            context: "grid state",
        })?;
        if action.len() != GridAction::ALL.len() {
            return Err(Error::DimensionMismatch {
                expected: GridAction::ALL.len(),
                got: action.len(),
                context: "grid action",
            });
        }
        let a = GridAction::ALL[argmax(action.iter().copied()).expect("non-empty")];
        let (next, reward) = Self::transition(cell, a).ok_or_else(|| Error::InvalidAction {
            state: cell.to_string(),
            action: a.to_string(),
        })?;
        Ok(StepOutcome {
            next_state: next.one_hot(),
            reward,
            terminal: next == Cell::Term,
        })
    }

    /// Greedy choice among the actions available in `state`.
    fn decode_action(&self, state: &[f64], raw: &[f64]) -> Vec<f64> {
        let available = Cell::from_vector(state)
            .map(Self::available)
            .unwrap_or_default();
        let best = available
            .iter()
            .copied()
            .fold(None, |best: Option<GridAction>, a| match best {
                Some(b) if raw[b.index()] >= raw[a.index()] => Some(b),
                _ => Some(a),
            });
        match best {
            Some(a) => a.one_hot(),
            None => vec![0.0; GridAction::ALL.len()],
        }
    }

    fn state_range(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); Cell::ALL.len()]
    }

    fn action_range(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); GridAction::ALL.len()]
    }

    fn goal(&self) -> Vec<f64> {
        Cell::Term.one_hot()
    }

    fn random_action(&self, state: &[f64], mut rng: &mut dyn RngCore) -> Vec<f64> {
        let available = Cell::from_vector(state)
            .map(Self::available)
            .unwrap_or_default();
        match available.choose(&mut rng) {
            Some(a) => a.one_hot(),
            None => vec![0.0; GridAction::ALL.len()],
        }
    }
}

/// The fixed two-trajectory dataset, with `r_star = 7`.
pub fn grid_dataset() -> Dataset {
    use Cell::*;
    use GridAction::*;
    let build = |path: &[(Cell, GridAction)]| {
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut cell = path[0].0;
        for &(c, a) in path {
            debug_assert_eq!(c, cell);
            let (next, r) = StitchGrid::transition(c, a).expect("dataset uses valid moves");
            states.push(c.one_hot());
            actions.push(a.one_hot());
            rewards.push(r);
            cell = next;
        }
        states.push(cell.one_hot());
        Trajectory {
            states,
            actions,
            rewards,
            terminal: cell == Term,
        }
    };
    let purple = build(&[(S1, Right), (S3, UpLeft), (S2, Right)]);
    let orange = build(&[(S1, Up), (S2, DownRight), (S6, Right)]);
    let mut meta = BTreeMap::new();
    meta.insert("env".to_string(), StitchGrid::ID.to_string());
    meta.insert("quality".to_string(), "fixed".to_string());
    Dataset::new(
        vec![purple, orange],
        Cell::ALL.len(),
        GridAction::ALL.len(),
        meta,
    )
    .expect("fixture is well formed")
    .with_r_star(7.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_transitions() {
        let s1 = StitchGrid::reset();
        let (s2, r, done) = StitchGrid::step(s1, GridAction::Up).unwrap();
        assert_eq!((s2.cell, r, done), (Cell::S2, 3.0, false));
        let (end, r, done) = StitchGrid::step(s2, GridAction::Right).unwrap();
        assert_eq!((end.cell, r, done), (Cell::Term, 4.0, true));
        let (s3, r, done) = StitchGrid::step(s1, GridAction::Right).unwrap();
        assert_eq!((s3.cell, r, done), (Cell::S3, 1.0, false));
    }

    #[test]
    fn unavailable_action_is_an_error() {
        assert!(matches!(
            StitchGrid::step(StitchGrid::reset(), GridAction::DownRight),
            Err(Error::InvalidAction { .. })
        ));
    }

    #[test]
    fn horizon_ends_the_episode() {
        let mut s = StitchGrid::reset();
        let mut done = false;
        for a in [GridAction::Right, GridAction::UpLeft, GridAction::DownRight] {
            let out = StitchGrid::step(s, a).unwrap();
            s = out.0;
            done = out.2;
        }
        assert_eq!(s.cell, Cell::S6);
        assert!(done);
    }

    #[test]
    fn dataset_fixture() {
        let ds = grid_dataset();
        let returns: Vec<f64> = ds.returns().collect();
        assert_eq!(returns, vec![6.0, 5.0]);
        assert_eq!(ds.num_transitions(), 6);
        assert_eq!(ds.r_star, 7.0);
        let at_s2: Vec<GridAction> = ds
            .state_actions()
            .filter(|(s, _)| Cell::from_vector(s) == Some(Cell::S2))
            .map(|(_, a)| GridAction::ALL[a.iter().position(|&x| x == 1.0).unwrap()])
            .collect();
        assert_eq!(at_s2, vec![GridAction::Right, GridAction::DownRight]);
    }

    #[test]
    fn decode_picks_best_available() {
        let env = StitchGrid;
        // DOWNRIGHT scores highest but is unavailable in s1.
        let a = env.decode_action(&Cell::S1.one_hot(), &[0.2, 0.1, -1.0, 9.0]);
        assert_eq!(a, GridAction::Up.one_hot());
    }
}
