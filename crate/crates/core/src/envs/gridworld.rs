//! Four-state grid-world used to show how guidance favours rare actions.
//!
//! The agent starts in state 0, moves straight to state 1, turns right into
//! state 2 with probability `p_right` (otherwise goes straight into state 3),
//! and moves straight once more. Every rollout visits exactly three states.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::DemoDataset;
use crate::error::{Error, Result};

pub const GRID_OBS_DIM: usize = 4;
pub const GRID_ACTION_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Left = 0,
    Straight = 1,
    Right = 2,
}

impl Move {
    pub const ALL: [Move; 3] = [Move::Left, Move::Straight, Move::Right];

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self as usize] = 1.0;
        v
    }
}

/// Decodes a continuous action vector by argmax (first index on ties).
pub fn decode_move(a: &[f64]) -> Move {
    match crate::samplers::argmax_first(a) {
        Some(0) => Move::Left,
        Some(2) => Move::Right,
        _ => Move::Straight,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    pub p_right: f64,
}

impl Default for GridWorldSpec {
    fn default() -> Self {
        Self { p_right: 0.1 }
    }
}

impl GridWorldSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_right > 0.0 && self.p_right < 1.0) {
            return Err(Error::config("gridworld.p_right", format!("must lie in (0, 1), got {}", self.p_right)));
        }
        Ok(())
    }

    /// Demonstrator policy `p(move | state)`.
    pub fn policy(&self, state: usize) -> [f64; 3] {
        match state {
            1 => [0.0, 1.0 - self.p_right, self.p_right],
            _ => [0.0, 1.0, 0.0],
        }
    }
}

/// Exact marginals and posteriors of the demonstration distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPosteriors {
    /// `p(o_i)` over the four states, counting each visited state once per rollout step.
    pub p_obs: [f64; 4],
    /// Marginal `p(a)` over left, straight, right.
    pub p_action: [f64; 3],
    /// `p(o_1 | a)`; `None` for moves the demonstrator never takes.
    pub p_o1_given: [Option<f64>; 3],
}

/// Bayes' rule over the rollout's state-visitation table.
pub fn gridworld_exact_posteriors(spec: &GridWorldSpec) -> Result<GridPosteriors> {
    spec.validate()?;
    let p = spec.p_right;
    let third = 1.0 / 3.0;
    let p_obs = [third, third, third * p, third * (1.0 - p)];
    let mut p_action = [0.0; 3];
    let mut joint_o1 = [0.0; 3];
    for (s, &ps) in p_obs.iter().enumerate() {
        for (m, pm) in spec.policy(s).into_iter().enumerate() {
            p_action[m] += pm * ps;
            if s == 1 {
                joint_o1[m] = pm * ps;
            }
        }
    }
    let mut p_o1_given = [None; 3];
    for m in 0..3 {
        if p_action[m] > 0.0 {
            p_o1_given[m] = Some(joint_o1[m] / p_action[m]);
        }
    }
    Ok(GridPosteriors {
        p_obs,
        p_action,
        p_o1_given,
    })
}

/// One demonstration rollout as `(state, move)` pairs.
pub fn rollout<R: Rng + ?Sized>(spec: &GridWorldSpec, rng: &mut R) -> [(usize, Move); 3] {
    let turn = rng.gen::<f64>() < spec.p_right;
    let (m1, terminal) = if turn { (Move::Right, 2) } else { (Move::Straight, 3) };
    [(0, Move::Straight), (1, m1), (terminal, Move::Straight)]
}

/// Three rows per rollout: one-hot state observations and one-hot move targets.
pub fn generate_gridworld_dataset<R: Rng + ?Sized>(spec: &GridWorldSpec, n_rollouts: usize, rng: &mut R) -> Result<DemoDataset> {
    if n_rollouts == 0 {
        return Err(Error::config("data.n", "need at least one rollout"));
    }
    if !(0.0..=1.0).contains(&spec.p_right) {
        return Err(Error::config("gridworld.p_right", "must lie in [0, 1]"));
    }
    let rows = 3 * n_rollouts;
    let mut obs = Array2::zeros((rows, GRID_OBS_DIM));
    let mut act = Array2::zeros((rows, GRID_ACTION_DIM));
    let mut r = 0;
    for _ in 0..n_rollouts {
        for (s, m) in rollout(spec, rng) {
            obs[[r, s]] = 1.0;
            act[[r, m as usize]] = 1.0;
            r += 1;
        }
    }
    DemoDataset::new(obs, act)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn posteriors_at_default_setting() {
        let p = gridworld_exact_posteriors(&GridWorldSpec { p_right: 0.1 }).unwrap();
        assert_eq!(p.p_o1_given[Move::Right as usize], Some(1.0));
        let straight = p.p_o1_given[Move::Straight as usize].unwrap();
        assert!((straight - 0.9 / 2.9).abs() < 1e-12);
        assert!((straight - 0.31).abs() < 0.005);
        assert_eq!(p.p_o1_given[Move::Left as usize], None);
    }

    #[test]
    fn posteriors_match_closed_form() {
        for pr in [0.01, 0.1, 0.25, 0.5, 0.9] {
            let p = gridworld_exact_posteriors(&GridWorldSpec { p_right: pr }).unwrap();
            let third = 1.0 / 3.0;
            assert!((p.p_obs[0] - third).abs() < 1e-15);
            assert!((p.p_obs[1] - third).abs() < 1e-15);
            assert!((p.p_obs[2] - pr / 3.0).abs() < 1e-15);
            assert!((p.p_obs[3] - (1.0 - pr) / 3.0).abs() < 1e-15);
            assert!((p.p_action[2] - pr / 3.0).abs() < 1e-15);
            let want = (1.0 - pr) / (2.0 + (1.0 - pr));
            assert!((p.p_o1_given[1].unwrap() - want).abs() < 1e-12);
            for v in p.p_o1_given.iter().flatten() {
                assert!((0.0..=1.0).contains(v));
            }
            assert!((p.p_action.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let half = gridworld_exact_posteriors(&GridWorldSpec { p_right: 0.5 }).unwrap();
        assert!((half.p_o1_given[1].unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_p_right_rejected_for_posteriors() {
        assert!(gridworld_exact_posteriors(&GridWorldSpec { p_right: 0.0 }).is_err());
        assert!(gridworld_exact_posteriors(&GridWorldSpec { p_right: 1.0 }).is_err());
    }

    #[test]
    fn never_turning_ends_in_state_three() {
        let spec = GridWorldSpec { p_right: 0.0 };
        let mut rng = seeded(1);
        for _ in 0..1000 {
            let r = rollout(&spec, &mut rng);
            assert_eq!(r[2].0, 3);
        }
        let ds = generate_gridworld_dataset(&spec, 10, &mut rng).unwrap();
        assert_eq!(ds.len(), 30);
    }

    #[test]
    fn right_turn_frequency() {
        let spec = GridWorldSpec::default();
        let ds = generate_gridworld_dataset(&spec, 10_000, &mut seeded(33)).unwrap();
        assert_eq!(ds.len(), 30_000);
        let mut at_one = 0;
        let mut right = 0;
        for i in 0..ds.len() {
            if ds.observation(i)[1] == 1.0 {
                at_one += 1;
                if decode_move(ds.action(i)) == Move::Right {
                    right += 1;
                }
            }
        }
        assert_eq!(at_one, 10_000);
        let f = right as f64 / at_one as f64;
        assert!((0.09..=0.11).contains(&f), "right-turn frequency {f}");
    }
}
