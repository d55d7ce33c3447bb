//! Recovery side: the cost critic `Q_C`, the recovery critic `Q_r` with its
//! zero-target penalty on sampled unseen actions, and the recovery policy
//! trained on the Lagrangian `Q_r - lambda Q_C`.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agent::RunMetrics;
use crate::approx::{Adam, Gradients, NetConfig, Network, TargetTracker};
use crate::batch::TrainBatch;
use crate::critic::{action_gradient, q_values, regression, regression_weighted};
use crate::data::{sample_batch, shape_dataset_costs, Dataset, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::features::{critic_inputs, new_critic, Actor, CRITIC_INPUT_DIM, POLICY_INPUT_DIM};
use crate::goal::validate_net;
use crate::rng::{derive_seed, seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub prev_error: f64,
    pub prev_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryTrainConfig {
    pub gamma: f64,
    /// Initial Lagrange multiplier.
    pub lambda: f64,
    /// Constraint limit `l` on `Q_C`; also the switching threshold.
    pub limit: f64,
    pub n_neg: usize,
    pub temperature: f64,
    /// Weight `beta` of the negative-action penalty.
    pub neg_weight: f64,
    /// Exclusion radius around the dataset action, in normalized action units.
    pub exclusion_radius: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub seed: u64,
    pub pid: Option<PidGains>,
    pub p_relabel: f64,
    pub net: NetConfig,
}

impl Default for RecoveryTrainConfig {
    fn default() -> Self {
        RecoveryTrainConfig {
            gamma: DEFAULT_GAMMA,
            lambda: 10.0,
            limit: DEFAULT_LIMIT,
            n_neg: 10,
            temperature: 1.0,
            neg_weight: 0.5,
            exclusion_radius: 0.2,
            batch_size: 256,
            epochs: 100,
            steps_per_epoch: 100,
            seed: 0,
            pid: None,
            p_relabel: 0.8,
            net: NetConfig::default(),
        }
    }
}

/// Default switching threshold. `Q_C` is a discounted probability of
/// reaching the unsafe set and never exceeds 1, so the limit must lie below 1
/// to ever trigger recovery.
pub const DEFAULT_LIMIT: f64 = 0.8;

impl RecoveryTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("recovery.gamma must be in (0,1), got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("recovery.lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.limit > 0.0) {
            return bad(format!("recovery.limit must be > 0, got {}", self.limit));
        }
        if self.n_neg == 0 {
            return bad("recovery.n_neg must be >= 1".into());
        }
        if !(self.temperature > 0.0) {
            return bad(format!("recovery.temperature must be > 0, got {}", self.temperature));
        }
        if !(self.neg_weight >= 0.0) {
            return bad(format!("recovery.neg_weight must be >= 0, got {}", self.neg_weight));
        }
        if !(self.exclusion_radius >= 0.0) {
            return bad(format!("recovery.exclusion_radius must be >= 0, got {}", self.exclusion_radius));
        }
        if !(0.0..=1.0).contains(&self.p_relabel) {
            return bad(format!("recovery.p_relabel must be in [0,1], got {}", self.p_relabel));
        }
        if self.batch_size == 0 {
            return bad("recovery.batch_size must be >= 1".into());
        }
        if let Some(g) = self.pid {
            if ![g.kp, g.ki, g.kd].iter().all(|v| v.is_finite()) {
                return bad("recovery.pid gains must be finite".into());
            }
        }
        validate_net(&self.net, "recovery")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryLearner {
    pub policy: Actor,
    pub policy_opt: Adam,
    pub qr: Network,
    pub qr_opt: Adam,
    pub qr_target: TargetTracker,
    pub qc: Network,
    pub qc_opt: Adam,
    pub qc_target: TargetTracker,
    pub lambda: f64,
    pub pid_state: PidState,
}

impl RecoveryLearner {
    pub fn new(cfg: &RecoveryTrainConfig, action_max: f64, rng: &mut Rng) -> Result<Self> {
        let net = &cfg.net;
        let policy = Actor::new(net, action_max, rng);
        let qr = new_critic(net, rng);
        let qc = new_critic(net, rng);
        Ok(RecoveryLearner {
            policy_opt: Adam::new(&policy.network, net.adam),
            qr_opt: Adam::new(&qr, net.adam),
            qr_target: TargetTracker::new(&qr, net.polyak)?,
            qc_opt: Adam::new(&qc, net.adam),
            qc_target: TargetTracker::new(&qc, net.polyak)?,
            policy,
            qr,
            qc,
            lambda: cfg.lambda,
            pid_state: PidState::default(),
        })
    }
}

/// `y = c + (1 - c) gamma Q_C_target(s', pi_g(s'))`, and `y = c` on the last step.
pub fn q_c_targets(qc_target: &Network, goal_policy: &Actor, batch: &TrainBatch, gamma: f64) -> Result<Array1<f64>> {
    let boot_actions = goal_policy.normalized(batch.next_inputs.view())?;
    let next = q_values(qc_target, batch.next_inputs.view(), boot_actions.view())?;
    let keep = (1.0 - &batch.costs) * (1.0 - &batch.terminal) * gamma;
    Ok(&batch.costs + &(keep * next))
}

pub fn q_c_update(learner: &mut RecoveryLearner, goal_policy: &Actor, batch: &TrainBatch, gamma: f64) -> Result<f64> {
    let y = q_c_targets(&learner.qc_target.shadow, goal_policy, batch, gamma)?;
    let x = critic_inputs(batch.inputs.view(), batch.actions.view());
    let (loss, grads) = regression(&learner.qc, x.view(), y.view(), "cost critic loss")?;
    learner.qc_opt.step(&mut learner.qc, &grads);
    Ok(loss)
}

/// Numerically stable `softmax(values / temperature)`.
pub fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Negative actions drawn for one minibatch, in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeActionBatch {
    pub candidates: Vec<Vec<[f64; 2]>>,
    pub probabilities: Vec<Vec<f64>>,
    pub chosen: Array2<f64>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Candidate set for one sample: `n_neg` uniform draws from the action box
/// outside the exclusion ball, each slot retried up to 10 times. If every
/// slot fails, the farthest draw seen is returned on its own.
pub fn draw_candidates(dataset_action: [f64; 2], n_neg: usize, exclusion: f64, rng: &mut Rng) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n_neg);
    let mut farthest = (f64::NEG_INFINITY, [0.0; 2]);
    for _ in 0..n_neg {
        for _ in 0..10 {
            let c = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let d = dist(c, dataset_action);
            if d > farthest.0 {
                farthest = (d, c);
            }
            if d > exclusion {
                out.push(c);
                break;
            }
        }
    }
    if out.is_empty() {
        out.push(farthest.1);
    }
    out
}

fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn sample_negative_actions(qr: &Network, batch: &TrainBatch, cfg: &RecoveryTrainConfig, rng: &mut Rng) -> Result<NegativeActionBatch> {
    let n = batch.len();
    let candidates: Vec<Vec<[f64; 2]>> = (0..n)
        .map(|i| {
            let a = [batch.actions[[i, 0]], batch.actions[[i, 1]]];
            draw_candidates(a, cfg.n_neg, cfg.exclusion_radius, rng)
        })
        .collect();
    let rows: usize = candidates.iter().map(Vec::len).sum();
    let mut x = Array2::zeros((rows, CRITIC_INPUT_DIM));
    let mut r = 0;
    for (i, cs) in candidates.iter().enumerate() {
        for c in cs {
            let mut row = x.row_mut(r);
            row.slice_mut(ndarray::s![..POLICY_INPUT_DIM]).assign(&batch.inputs.row(i));
            row[POLICY_INPUT_DIM] = c[0];
            row[POLICY_INPUT_DIM + 1] = c[1];
            r += 1;
        }
    }
    let q = qr.forward_batch(x.view())?;
    let mut chosen = Array2::zeros((n, 2));
    let mut probabilities = Vec::with_capacity(n);
    let mut r = 0;
    for (i, cs) in candidates.iter().enumerate() {
        let vals: Vec<f64> = (r..r + cs.len()).map(|k| q[[k, 0]]).collect();
        r += cs.len();
        let p = softmax(&vals, cfg.temperature);
        let k = sample_index(&p, rng);
        chosen[[i, 0]] = cs[k][0];
        chosen[[i, 1]] = cs[k][1];
        probabilities.push(p);
    }
    Ok(NegativeActionBatch {
        candidates,
        probabilities,
        chosen,
    })
}

/// `y = r + gamma (1 - r) Q_r_target(s', pi_r(s'))`.
pub fn q_r_targets(qr_target: &Network, policy: &Actor, batch: &TrainBatch, gamma: f64) -> Result<Array1<f64>> {
    let next_actions = policy.normalized(batch.next_inputs.view())?;
    let next = q_values(qr_target, batch.next_inputs.view(), next_actions.view())?;
    Ok(&batch.rewards + &((1.0 - &batch.rewards) * next * gamma))
}

/// Loss `mean (Q_r(s,a) - y)^2 + beta mean Q_r(s,a')^2` and its gradient.
pub fn q_r_objective(qr: &Network, y: &Array1<f64>, batch: &TrainBatch, negatives: &Array2<f64>, beta: f64) -> Result<(f64, Gradients)> {
    let n = batch.len();
    let x_data = critic_inputs(batch.inputs.view(), batch.actions.view());
    if beta == 0.0 {
        return regression(qr, x_data.view(), y.view(), "recovery critic loss");
    }
    let x_neg = critic_inputs(batch.inputs.view(), negatives.view());
    let x = concatenate(Axis(0), &[x_data.view(), x_neg.view()]).expect("matching widths");
    let targets = concatenate(Axis(0), &[y.view(), Array1::zeros(n).view()]).expect("1-d");
    let inv = 1.0 / n as f64;
    let coeffs = Array1::from_shape_fn(2 * n, |i| if i < n { inv } else { beta * inv });
    regression_weighted(qr, x.view(), targets.view(), Some(coeffs.view()), "recovery critic loss")
}

pub fn q_r_update(learner: &mut RecoveryLearner, batch: &TrainBatch, negatives: &NegativeActionBatch, cfg: &RecoveryTrainConfig) -> Result<f64> {
    let y = q_r_targets(&learner.qr_target.shadow, &learner.policy, batch, cfg.gamma)?;
    let (loss, grads) = q_r_objective(&learner.qr, &y, batch, &negatives.chosen, cfg.neg_weight)?;
    learner.qr_opt.step(&mut learner.qr, &grads);
    Ok(loss)
}

/// Loss `-mean [Q_r(s, pi_r(s)) - lambda Q_C(s, pi_r(s))]`; gradients reach
/// the policy only through the action input of both critics.
pub fn recovery_policy_objective(policy: &Actor, qr: &Network, qc: &Network, batch: &TrainBatch, lambda: f64) -> Result<(f64, Gradients)> {
    let n = batch.len() as f64;
    let tape = policy.network.forward_tape(batch.inputs.view())?;
    let pi = tape.output();
    let (vr, dr) = action_gradient(qr, batch.inputs.view(), pi.view())?;
    let (vc, dc) = action_gradient(qc, batch.inputs.view(), pi.view())?;
    let per = &vr - &(&vc * lambda);
    if let Some(index) = per.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "recovery policy loss",
            index,
        });
    }
    let loss = -per.sum() / n;
    let d_pi = (dc * lambda - dr) / n;
    let (grads, _) = policy.network.backward(&tape, d_pi, true);
    Ok((loss, grads.expect("requested")))
}

pub fn recovery_policy_update(learner: &mut RecoveryLearner, batch: &TrainBatch) -> Result<f64> {
    let (loss, grads) = recovery_policy_objective(&learner.policy, &learner.qr, &learner.qc, batch, learner.lambda)?;
    learner.policy_opt.step(&mut learner.policy.network, &grads);
    Ok(loss)
}

/// Incremental PID step on `e = mean_qc - limit`; `lambda` never goes below 0.
pub fn update_lambda_pid(lambda: f64, mean_qc: f64, limit: f64, state: &mut PidState, gains: PidGains) -> f64 {
    let e = mean_qc - limit;
    let de = e - state.prev_error;
    let d2e = de - state.prev_delta;
    state.prev_error = e;
    state.prev_delta = de;
    (lambda + gains.kp * de + gains.ki * e + gains.kd * d2e).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEpochMetrics {
    pub epoch: usize,
    pub qc_loss: f64,
    pub qr_loss: f64,
    pub recovery_policy_loss: f64,
    pub lambda: f64,
    /// Mean `Q_C(s, pi_r(s))` over the epoch's batches.
    pub mean_qc: f64,
    /// Fraction of batch states where `Q_C(s, pi_g(s)) > limit`.
    pub fraction_batch_above_l: f64,
    pub success_rate: Option<f64>,
    pub discounted_return: Option<f64>,
    pub cost_return: Option<f64>,
}

struct StepStats {
    qc_loss: f64,
    qr_loss: f64,
    policy_loss: f64,
    mean_qc: f64,
    above: f64,
}

fn train_step(learner: &mut RecoveryLearner, goal_policy: &Actor, batch: &TrainBatch, cfg: &RecoveryTrainConfig, rng: &mut Rng) -> Result<StepStats> {
    let negatives = sample_negative_actions(&learner.qr, batch, cfg, rng)?;
    let qr_loss = q_r_update(learner, batch, &negatives, cfg)?;
    let qc_loss = q_c_update(learner, goal_policy, batch, cfg.gamma)?;
    let policy_loss = recovery_policy_update(learner, batch)?;

    let pi_r = learner.policy.normalized(batch.inputs.view())?;
    let mean_qc = q_values(&learner.qc, batch.inputs.view(), pi_r.view())?.mean().unwrap_or(0.0);
    let pi_g = goal_policy.normalized(batch.inputs.view())?;
    let qc_g = q_values(&learner.qc, batch.inputs.view(), pi_g.view())?;
    let above = qc_g.iter().filter(|&&v| v > cfg.limit).count() as f64 / batch.len().max(1) as f64;
    if let Some(gains) = cfg.pid {
        learner.lambda = update_lambda_pid(learner.lambda, mean_qc, cfg.limit, &mut learner.pid_state, gains);
    }
    learner.qr_target.update(&learner.qr);
    learner.qc_target.update(&learner.qc);
    Ok(StepStats {
        qc_loss,
        qr_loss,
        policy_loss,
        mean_qc,
        above,
    })
}

/// Trains on the recovery set `d_rec` (costs are shaped here). An empty set
/// yields the untrained learner and no metrics; callers should then disable
/// switching.
pub fn train_recovery<F>(d_rec: &Dataset, goal_policy: &Actor, cfg: &RecoveryTrainConfig, mut on_epoch: F) -> Result<(RecoveryLearner, Vec<RecoveryEpochMetrics>)>
where
    F: FnMut(&RecoveryLearner, usize) -> Result<Option<RunMetrics>>,
{
    cfg.validate()?;
    let action_max = d_rec.env_config.action_max;
    let mut learner = RecoveryLearner::new(cfg, action_max, &mut seeded(derive_seed(cfg.seed, 11)))?;
    if d_rec.is_empty() {
        log::warn!("recovery set is empty; recovery policy left untrained");
        return Ok((learner, Vec::new()));
    }
    let shaped = shape_dataset_costs(d_rec);
    let mut batch_rng = seeded(derive_seed(cfg.seed, 12));
    let mut neg_rng = seeded(derive_seed(cfg.seed, 13));
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut acc = [0.0; 5];
        for _ in 0..cfg.steps_per_epoch {
            let samples = sample_batch(&shaped, cfg.batch_size, cfg.p_relabel, &mut batch_rng);
            let batch = TrainBatch::from_samples(&samples, action_max);
            let s = train_step(&mut learner, goal_policy, &batch, cfg, &mut neg_rng)?;
            for (a, v) in acc.iter_mut().zip([s.qc_loss, s.qr_loss, s.policy_loss, s.mean_qc, s.above]) {
                *a += v;
            }
        }
        let steps = cfg.steps_per_epoch.max(1) as f64;
        let eval = on_epoch(&learner, epoch)?;
        let m = RecoveryEpochMetrics {
            epoch,
            qc_loss: acc[0] / steps,
            qr_loss: acc[1] / steps,
            recovery_policy_loss: acc[2] / steps,
            lambda: learner.lambda,
            mean_qc: acc[3] / steps,
            fraction_batch_above_l: acc[4] / steps,
            success_rate: eval.as_ref().map(|e| e.success_rate),
            discounted_return: eval.as_ref().map(|e| e.discounted_return),
            cost_return: eval.as_ref().map(|e| e.cost_return),
        };
        log::info!(
            "recovery epoch {epoch}: qc_loss {:.5} qr_loss {:.5} pi_loss {:.4} above_l {:.3}",
            m.qc_loss,
            m.qr_loss,
            m.recovery_policy_loss,
            m.fraction_batch_above_l
        );
        history.push(m);
    }
    Ok((learner, history))
}
