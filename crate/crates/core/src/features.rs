//! Network input layouts and the deterministic actor wrapper.
//!
//! Policies see `[obs (10), goal (2), goal - phi(obs) (2), center - phi(obs) (2)]`.
//! Critics see the same vector followed by the action normalized by
//! `action_max`, so every network works in `[-1, 1]` action units.

use ndarray::{s, Array2, ArrayView2};

use crate::approx::{Activation, NetConfig, Network};
use crate::env::{phi_obs, Vec2, ACTION_DIM, OBS_DIM};
use crate::error::Result;
use crate::rng::Rng;

pub const POLICY_INPUT_DIM: usize = OBS_DIM + 6;
pub const CRITIC_INPUT_DIM: usize = POLICY_INPUT_DIM + ACTION_DIM;

pub fn write_policy_input(row: &mut [f64], obs: &[f64], goal: Vec2) {
    let ag = phi_obs(obs);
    row[..OBS_DIM].copy_from_slice(&obs[..OBS_DIM]);
    row[OBS_DIM] = goal.x();
    row[OBS_DIM + 1] = goal.y();
    row[OBS_DIM + 2] = goal.x() - ag.x();
    row[OBS_DIM + 3] = goal.y() - ag.y();
    row[OBS_DIM + 4] = obs[6] - ag.x();
    row[OBS_DIM + 5] = obs[7] - ag.y();
}

pub fn policy_inputs<'a>(rows: impl ExactSizeIterator<Item = (&'a [f64], Vec2)>) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), POLICY_INPUT_DIM));
    for (mut row, (obs, goal)) in out.rows_mut().into_iter().zip(rows) {
        write_policy_input(row.as_slice_mut().expect("standard layout"), obs, goal);
    }
    out
}

/// Critic inputs from policy inputs and normalized actions.
pub fn critic_inputs(policy_inputs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    let n = policy_inputs.nrows();
    debug_assert_eq!(actions.dim(), (n, ACTION_DIM));
    let mut out = Array2::zeros((n, CRITIC_INPUT_DIM));
    out.slice_mut(s![.., ..POLICY_INPUT_DIM]).assign(&policy_inputs);
    out.slice_mut(s![.., POLICY_INPUT_DIM..]).assign(&actions);
    out
}

/// Actions in environment units to normalized rows.
pub fn normalized_actions(actions: impl ExactSizeIterator<Item = Vec2>, action_max: f64) -> Array2<f64> {
    let mut out = Array2::zeros((actions.len(), ACTION_DIM));
    for (mut row, a) in out.rows_mut().into_iter().zip(actions) {
        row[0] = a.x() / action_max;
        row[1] = a.y() / action_max;
    }
    out
}

pub fn new_critic(net: &NetConfig, rng: &mut Rng) -> Network {
    Network::new(&net.dims(CRITIC_INPUT_DIM, 1), Activation::Relu, Activation::Identity, rng)
}

/// Deterministic policy: a tanh-output network in normalized action units,
/// scaled by `action_max` when acting in the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub network: Network,
    pub action_max: f64,
}

impl Actor {
    pub fn new(net: &NetConfig, action_max: f64, rng: &mut Rng) -> Self {
        Actor {
            network: Network::new(&net.dims(POLICY_INPUT_DIM, ACTION_DIM), Activation::Relu, Activation::Tanh, rng),
            action_max,
        }
    }

    /// Normalized actions for a batch of policy inputs.
    pub fn normalized(&self, policy_inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.network.forward_batch(policy_inputs)
    }

    pub fn act(&self, obs: &[f64], goal: Vec2) -> Result<Vec2> {
        let mut row = [0.0; POLICY_INPUT_DIM];
        write_policy_input(&mut row, obs, goal);
        let out = self.network.forward(&row)?;
        Ok(Vec2::new(out[0], out[1]) * self.action_max)
    }
}
