//! Enumerable deterministic chain MDP with exact dynamic-programming values,
//! used to check the critics against closed-form fixed points.
//!
//! States `0..n` are one-hot encoded in the leading policy-input columns.
//! Action `-0.5` (normalized, first component) moves left, `+0.5` moves
//! right; both clamp at the ends of the chain.

use ndarray::{array, Array1, Array2};

use crate::approx::{Activation, Layer, Network};
use crate::batch::TrainBatch;
use crate::features::{Actor, POLICY_INPUT_DIM};

pub const LEFT: f64 = -0.5;
pub const RIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chain {
    pub states: usize,
    /// Entering this state costs 1.
    pub unsafe_state: Option<usize>,
    /// Entering this state yields reward 1 and ends the episode.
    pub goal_state: Option<usize>,
}

impl Chain {
    pub fn step(&self, s: usize, right: bool) -> usize {
        if right {
            (s + 1).min(self.states - 1)
        } else {
            s.saturating_sub(1)
        }
    }

    fn cost(&self, s2: usize) -> f64 {
        f64::from(u8::from(self.unsafe_state == Some(s2)))
    }

    fn reward(&self, s2: usize) -> f64 {
        f64::from(u8::from(self.goal_state == Some(s2)))
    }

    /// Every `(state, action)` pair once, in state-major order with the left
    /// action first.
    pub fn pairs(&self) -> Vec<(usize, bool)> {
        (0..self.states).flat_map(|s| [(s, false), (s, true)]).collect()
    }

    /// One row per `(state, action)` pair.
    pub fn batch(&self) -> TrainBatch {
        assert!(self.states <= POLICY_INPUT_DIM, "chain longer than the one-hot encoding");
        let pairs = self.pairs();
        let n = pairs.len();
        let one_hot = |f: &dyn Fn(usize) -> usize| Array2::from_shape_fn((n, POLICY_INPUT_DIM), |(i, j)| f64::from(u8::from(j == f(i))));
        let next: Vec<usize> = pairs.iter().map(|&(s, r)| self.step(s, r)).collect();
        TrainBatch {
            inputs: one_hot(&|i| pairs[i].0),
            next_inputs: one_hot(&|i| next[i]),
            actions: Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 && pairs[i].1 { RIGHT } else if j == 0 { LEFT } else { 0.0 }),
            rewards: next.iter().map(|&s2| self.reward(s2)).collect(),
            costs: next.iter().map(|&s2| self.cost(s2)).collect(),
            terminal: Array1::zeros(n),
            horizon_gaps: vec![0; n],
        }
    }

    /// Fixed point of `Q_C(s,a) = c' + (1 - c') gamma Q_C(s', right)`: the
    /// cost recursion bootstrapped with the always-right policy.
    pub fn cost_fixed_point(&self, gamma: f64) -> Vec<[f64; 2]> {
        self.iterate(gamma, |q, s2| q[s2][1], true)
    }

    /// Optimal goal values `Q(s,a) = r + gamma (1 - r) max_a' Q(s', a')` by
    /// value iteration.
    pub fn goal_value_iteration(&self, gamma: f64) -> Vec<[f64; 2]> {
        self.iterate(gamma, |q, s2| q[s2][0].max(q[s2][1]), false)
    }

    fn iterate(&self, gamma: f64, next_value: impl Fn(&[[f64; 2]], usize) -> f64, cost_side: bool) -> Vec<[f64; 2]> {
        let mut q = vec![[0.0; 2]; self.states];
        // gamma^k shrinks the residual below 1e-12 well before this many sweeps
        for _ in 0..5000 {
            let prev = q.clone();
            for (s, row) in q.iter_mut().enumerate() {
                for (k, right) in [false, true].into_iter().enumerate() {
                    let s2 = self.step(s, right);
                    let signal = if cost_side { self.cost(s2) } else { self.reward(s2) };
                    row[k] = signal + (1.0 - signal) * gamma * next_value(&prev, s2);
                }
            }
        }
        q
    }

    /// Oracle value for every row of [`Chain::batch`].
    pub fn flatten(values: &[[f64; 2]]) -> Vec<f64> {
        values.iter().flat_map(|r| [r[0], r[1]]).collect()
    }
}

/// Actor that outputs the normalized action `(a, 0)` for every input.
pub fn constant_actor(a: f64, action_max: f64) -> Actor {
    Actor {
        network: Network {
            layers: vec![Layer {
                weight: Array2::zeros((POLICY_INPUT_DIM, 2)),
                bias: array![a.atanh(), 0.0],
                activation: Activation::Tanh,
            }],
        },
        action_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_fixed_point_by_hand() {
        let chain = Chain {
            states: 5,
            unsafe_state: Some(3),
            goal_state: None,
        };
        let q = chain.cost_fixed_point(0.9);
        // from 2, right enters 3 at once; from 1, one safe step first
        assert_eq!(q[2][1], 1.0);
        assert!((q[1][1] - 0.9).abs() < 1e-12);
        assert!((q[0][1] - 0.81).abs() < 1e-12);
        assert!((q[0][0] - 0.9 * 0.81).abs() < 1e-12);
        // 4 -> 4 stays safe forever under "right"
        assert!(q[4][1].abs() < 1e-12);
        assert_eq!(q[4][0], 1.0);
    }

    #[test]
    fn goal_values_by_hand() {
        let chain = Chain {
            states: 5,
            unsafe_state: None,
            goal_state: Some(4),
        };
        let q = chain.goal_value_iteration(0.9);
        assert_eq!(q[3][1], 1.0);
        assert!((q[0][1] - 0.729).abs() < 1e-12);
        assert!((q[0][0] - 0.6561).abs() < 1e-12);
        assert_eq!(q[4][1], 1.0);
        let b = chain.batch();
        assert_eq!(b.len(), 10);
        assert_eq!(b.rewards.sum(), 2.0);
    }

    #[test]
    fn constant_actor_outputs_its_action() {
        let a = constant_actor(RIGHT, 0.05);
        let out = a.normalized(Chain { states: 3, unsafe_state: None, goal_state: None }.batch().inputs.view()).unwrap();
        assert!(out.column(0).iter().all(|&v| (v - RIGHT).abs() < 1e-12));
    }
}
