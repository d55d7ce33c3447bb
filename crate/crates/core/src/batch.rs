use ndarray::{Array1, Array2};

use crate::data::RelabeledSample;
use crate::features::{normalized_actions, policy_inputs};

/// Dense view of a relabeled minibatch, ready for network passes.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    /// Policy inputs for `(s_t, g)`.
    pub inputs: Array2<f64>,
    /// Policy inputs for `(s_{t+1}, g)`.
    pub next_inputs: Array2<f64>,
    /// Dataset actions in normalized units.
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub costs: Array1<f64>,
    pub terminal: Array1<f64>,
    pub horizon_gaps: Vec<usize>,
}

impl TrainBatch {
    pub fn from_samples(samples: &[RelabeledSample], action_max: f64) -> Self {
        let f = |v: &dyn Fn(&RelabeledSample) -> f64| samples.iter().map(v).collect::<Array1<f64>>();
        TrainBatch {
            inputs: policy_inputs(samples.iter().map(|s| (s.state.as_slice(), s.goal))),
            next_inputs: policy_inputs(samples.iter().map(|s| (s.next_state.as_slice(), s.goal))),
            actions: normalized_actions(samples.iter().map(|s| s.action), action_max),
            rewards: f(&|s| f64::from(s.reward)),
            costs: f(&|s| f64::from(s.cost)),
            terminal: f(&|s| f64::from(u8::from(s.terminal))),
            horizon_gaps: samples.iter().map(|s| s.horizon_gap).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
