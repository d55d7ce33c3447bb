//! The composed agent: the goal policy acts unless the cost critic predicts
//! that its action exceeds the constraint limit, in which case the recovery
//! policy takes over. Also episode evaluation and paired run comparison.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::approx::Network;
use crate::critic::q_values;
use crate::data::discounted_sum;
use crate::env::{self, phi, EnvConfig, Goal, Vec2};
use crate::error::{Error, Result};
use crate::features::{policy_inputs, Actor};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Goal,
    Recovery,
}

/// Recovery side of the agent: the fallback policy and the cost critic that gates it.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryModule {
    pub policy: Actor,
    pub cost_q: Network,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbslAgent {
    pub goal_policy: Actor,
    pub recovery: Option<RecoveryModule>,
    pub limit: f64,
    pub switching: bool,
}

/// Batched decision output; actions are in normalized units.
pub struct BatchDecision {
    pub actions: Array2<f64>,
    pub decisions: Vec<Decision>,
    /// `Q_C(s, pi_g(s))`, when a cost critic is present.
    pub goal_action_cost: Option<Array1<f64>>,
}

impl RbslAgent {
    pub fn goal_only(goal_policy: Actor) -> Self {
        RbslAgent {
            goal_policy,
            recovery: None,
            limit: f64::INFINITY,
            switching: false,
        }
    }

    pub fn with_recovery(goal_policy: Actor, recovery_policy: Actor, cost_q: Network, limit: f64) -> Result<Self> {
        if !(limit > 0.0) {
            return Err(Error::Config(format!("constraint limit must be > 0, got {limit}")));
        }
        if recovery_policy.network.input_dim() != goal_policy.network.input_dim() {
            return Err(Error::Shape {
                expected: goal_policy.network.input_dim(),
                actual: recovery_policy.network.input_dim(),
            });
        }
        Ok(RbslAgent {
            goal_policy,
            recovery: Some(RecoveryModule {
                policy: recovery_policy,
                cost_q,
            }),
            limit,
            switching: true,
        })
    }

    pub fn switching_active(&self) -> bool {
        self.switching && self.recovery.is_some()
    }

    pub fn act_batch(&self, inputs: ArrayView2<f64>) -> Result<BatchDecision> {
        let mut actions = self.goal_policy.normalized(inputs)?;
        let n = actions.nrows();
        let mut decisions = vec![Decision::Goal; n];
        let Some(rec) = self.recovery.as_ref() else {
            return Ok(BatchDecision {
                actions,
                decisions,
                goal_action_cost: None,
            });
        };
        let qc = q_values(&rec.cost_q, inputs, actions.view())?;
        if self.switching {
            let unsafe_rows: Vec<usize> = (0..n).filter(|&i| !(qc[i] <= self.limit)).collect();
            if !unsafe_rows.is_empty() {
                let sub = inputs.select(ndarray::Axis(0), &unsafe_rows);
                let rec_actions = rec.policy.normalized(sub.view())?;
                for (k, &i) in unsafe_rows.iter().enumerate() {
                    actions.row_mut(i).assign(&rec_actions.row(k));
                    decisions[i] = Decision::Recovery;
                }
            }
        }
        Ok(BatchDecision {
            actions,
            decisions,
            goal_action_cost: Some(qc),
        })
    }

    /// Single-state decision; the action is in environment units.
    pub fn act(&self, obs: &[f64], goal: Vec2) -> Result<(Vec2, Decision)> {
        let inputs = policy_inputs(std::iter::once((obs, goal)));
        let out = self.act_batch(inputs.view())?;
        let a = Vec2::new(out.actions[[0, 0]], out.actions[[0, 1]]) * self.goal_policy.action_max;
        Ok((a, out.decisions[0]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub goal: Vec2,
    /// `T + 1` observations.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec2>,
    pub rewards: Vec<u8>,
    pub costs: Vec<u8>,
    pub decisions: Vec<Decision>,
    pub final_distance: f64,
}

impl EpisodeRecord {
    pub fn success(&self) -> bool {
        self.rewards.last() == Some(&1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub episodes: usize,
    pub success_rate: f64,
    pub discounted_return: f64,
    /// Mean undiscounted sum of raw per-step costs.
    pub cost_return: f64,
    pub cost_return_discounted: f64,
    pub recovery_activation_rate: f64,
}

impl RunMetrics {
    pub fn from_records(records: &[EpisodeRecord], seed: u64, gamma: f64) -> Self {
        let n = records.len().max(1) as f64;
        let steps: usize = records.iter().map(|r| r.decisions.len()).sum();
        let recovery_steps = records
            .iter()
            .flat_map(|r| &r.decisions)
            .filter(|&&d| d == Decision::Recovery)
            .count();
        RunMetrics {
            seed,
            episodes: records.len(),
            success_rate: records.iter().filter(|r| r.success()).count() as f64 / n,
            discounted_return: records.iter().map(|r| discounted_sum(&r.rewards, gamma)).sum::<f64>() / n,
            cost_return: records.iter().map(|r| r.costs.iter().map(|&c| f64::from(c)).sum::<f64>()).sum::<f64>() / n,
            cost_return_discounted: records.iter().map(|r| discounted_sum(&r.costs, gamma)).sum::<f64>() / n,
            recovery_activation_rate: if steps == 0 { 0.0 } else { recovery_steps as f64 / steps as f64 },
        }
    }
}

/// Runs `episodes` fixed-horizon episodes in lockstep. Episode `i` is reset
/// with `derive_seed(seed, i)`, so results depend only on (agent, config, seed).
pub fn evaluate(agent: &RbslAgent, config: &EnvConfig, episodes: usize, seed: u64, gamma: f64) -> Result<(RunMetrics, Vec<EpisodeRecord>)> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut states = Vec::with_capacity(episodes);
    let mut goals: Vec<Goal> = Vec::with_capacity(episodes);
    for i in 0..episodes as u64 {
        let (s, g) = env::reset(config, derive_seed(seed, i))?;
        states.push(s);
        goals.push(g);
    }
    let mut records: Vec<EpisodeRecord> = states
        .iter()
        .zip(&goals)
        .map(|(s, g)| EpisodeRecord {
            goal: g.target,
            states: vec![s.observation().to_vec()],
            actions: Vec::with_capacity(config.horizon),
            rewards: Vec::with_capacity(config.horizon),
            costs: Vec::with_capacity(config.horizon),
            decisions: Vec::with_capacity(config.horizon),
            final_distance: 0.0,
        })
        .collect();

    for _ in 0..config.horizon {
        let inputs = policy_inputs(records.iter().zip(&goals).map(|(r, g)| (r.states.last().unwrap().as_slice(), g.target)));
        let out = agent.act_batch(inputs.view())?;
        for (i, rec) in records.iter_mut().enumerate() {
            let a = Vec2::new(out.actions[[i, 0]], out.actions[[i, 1]]) * agent.goal_policy.action_max;
            let step = env::step(config, &states[i], a, &goals[i]);
            states[i] = step.state;
            rec.states.push(step.state.observation().to_vec());
            rec.actions.push(a);
            rec.rewards.push(step.reward);
            rec.costs.push(step.cost);
            rec.decisions.push(out.decisions[i]);
        }
    }
    for (rec, (s, g)) in records.iter_mut().zip(states.iter().zip(&goals)) {
        rec.final_distance = phi(s).distance(g.target);
    }
    Ok((RunMetrics::from_records(&records, seed, gamma), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation, as reported over seeds.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub seed: u64,
    pub success_rate_diff: f64,
    pub cost_return_diff: f64,
}

/// Paired differences `a - b` per seed plus their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<PairedRow>,
    pub success_rate_diff: MeanStd,
    pub cost_return_diff: MeanStd,
}

pub fn compare_runs(a: &[RunMetrics], b: &[RunMetrics]) -> Result<ComparisonReport> {
    let seeds = |m: &[RunMetrics]| m.iter().map(|r| r.seed).collect::<Vec<_>>();
    if seeds(a) != seeds(b) || a.iter().zip(b).any(|(x, y)| x.episodes != y.episodes) {
        return Err(Error::SeedMismatch(seeds(a), seeds(b)));
    }
    let rows: Vec<PairedRow> = a
        .iter()
        .zip(b)
        .map(|(x, y)| PairedRow {
            seed: x.seed,
            success_rate_diff: x.success_rate - y.success_rate,
            cost_return_diff: x.cost_return - y.cost_return,
        })
        .collect();
    Ok(ComparisonReport {
        success_rate_diff: MeanStd::of(&rows.iter().map(|r| r.success_rate_diff).collect::<Vec<_>>()),
        cost_return_diff: MeanStd::of(&rows.iter().map(|r| r.cost_return_diff).collect::<Vec<_>>()),
        rows,
    })
}
