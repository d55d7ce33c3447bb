//! Offline datasets: trajectories, generation, mixing, hindsight relabeling,
//! return-based filtering and cost shaping.

mod io;
mod pipeline;
mod relabel;
mod rollout;

pub use io::{load, save, FORMAT_VERSION};
pub use pipeline::{filter_expert, filter_recovery, mix, shape_costs, shape_dataset_costs};
pub use relabel::{relabel_sample, sample_batch, RelabeledSample};
pub use rollout::{expert_action, rollout, rollout_expert, rollout_random, ExpertPlanner};

use serde::{Deserialize, Serialize};

use crate::env::{phi_obs, EnvConfig, Goal, ObstacleBox, Vec2};

pub const DEFAULT_GAMMA: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Expert,
    Random,
}

/// Borrowed view of one environment step inside a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<'a> {
    pub state: &'a [f64],
    pub action: Vec2,
    pub reward: u8,
    pub cost: u8,
    pub next_state: &'a [f64],
}

/// A fixed-horizon episode. `states` holds `T + 1` observations; the other
/// per-step vectors hold `T` entries. Costs and rewards are evaluated on the
/// successor state of each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub provenance: Provenance,
    pub goal: Vec2,
    pub tolerance: f64,
    pub obstacle: ObstacleBox,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec2>,
    pub rewards: Vec<u8>,
    pub costs: Vec<u8>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn goal(&self) -> Goal {
        Goal {
            target: self.goal,
            tolerance: self.tolerance,
        }
    }

    pub fn transition(&self, t: usize) -> Transition<'_> {
        Transition {
            state: &self.states[t],
            action: self.actions[t],
            reward: self.rewards[t],
            cost: self.costs[t],
            next_state: &self.states[t + 1],
        }
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition<'_>> {
        (0..self.len()).map(|t| self.transition(t))
    }

    /// Discounted return `sum_t gamma^t r_t`.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        discounted_sum(&self.rewards, gamma)
    }

    /// Discounted cost return `sum_t gamma^t c_t`.
    pub fn discounted_cost(&self, gamma: f64) -> f64 {
        discounted_sum(&self.costs, gamma)
    }

    pub fn cost_return(&self) -> f64 {
        self.costs.iter().map(|&c| f64::from(c)).sum()
    }

    pub fn succeeded(&self) -> bool {
        self.rewards.last() == Some(&1)
    }

    pub fn final_achieved(&self) -> Vec2 {
        phi_obs(self.states.last().expect("trajectory has states"))
    }
}

pub fn discounted_sum(values: &[u8], gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut g = 1.0;
    for &v in values {
        acc += g * f64::from(v);
        g *= gamma;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub env_config: EnvConfig,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(env_config: EnvConfig) -> Self {
        Dataset {
            env_config,
            trajectories: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn stats(&self, gamma: f64) -> DatasetStats {
        let n = self.trajectories.len();
        let mean = |f: &dyn Fn(&Trajectory) -> f64| {
            if n == 0 {
                0.0
            } else {
                self.trajectories.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let mut warnings = Vec::new();
        if n == 0 {
            warnings.push("dataset is empty".to_string());
        }
        DatasetStats {
            trajectories: n,
            transitions: self.transition_count(),
            mean_return: mean(&|t| t.discounted_return(gamma)),
            mean_cost_return: mean(&|t| t.discounted_cost(gamma)),
            success_rate: mean(&|t| f64::from(u8::from(t.succeeded()))),
            mean_undiscounted_cost: mean(&|t| t.cost_return()),
            expert_fraction: mean(&|t| f64::from(u8::from(t.provenance == Provenance::Expert))),
            warnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub trajectories: usize,
    pub transitions: usize,
    /// Mean discounted return R(tau).
    pub mean_return: f64,
    /// Mean discounted cost return C(tau).
    pub mean_cost_return: f64,
    /// Fraction of trajectories whose final step is rewarded.
    pub success_rate: f64,
    pub mean_undiscounted_cost: f64,
    pub expert_fraction: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "trajectories={} transitions={} success_rate={} mean_return={:.4} mean_cost_return={:.4} cost_per_episode={:.4} expert_fraction={:.3}",
            self.trajectories,
            self.transitions,
            self.success_rate,
            self.mean_return,
            self.mean_cost_return,
            self.mean_undiscounted_cost,
            self.expert_fraction
        )
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_sums() {
        assert!((discounted_sum(&[0, 0, 1], 0.98) - 0.9604).abs() < 1e-12);
        assert_eq!(discounted_sum(&[], 0.98), 0.0);
        let t = testing::synthetic(&[0, 1, 1], &[1, 1, 0], Provenance::Expert);
        assert!((t.discounted_return(0.5) - 0.75).abs() < 1e-12);
        assert!((t.discounted_cost(0.5) - 1.5).abs() < 1e-12);
        assert_eq!(t.cost_return(), 2.0);
        assert!(t.succeeded());
    }

    #[test]
    fn stats_of_small_dataset() {
        let mut d = Dataset::new(EnvConfig::reach2d());
        d.trajectories.push(testing::synthetic(&[0, 1], &[0, 0], Provenance::Expert));
        d.trajectories.push(testing::synthetic(&[0, 0], &[1, 1], Provenance::Random));
        let s = d.stats(0.5);
        assert_eq!(s.trajectories, 2);
        assert_eq!(s.transitions, 4);
        assert!((s.mean_return - 0.25).abs() < 1e-12);
        assert!((s.mean_cost_return - 0.75).abs() < 1e-12);
        assert_eq!(s.expert_fraction, 0.5);
        assert_eq!(s.success_rate, 0.5);
        assert!(s.warnings.is_empty());
        assert_eq!(Dataset::new(EnvConfig::reach2d()).stats(0.98).warnings.len(), 1);
    }
}
