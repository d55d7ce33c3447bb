//! Goal-conditioned policy and critic training: advantage-weighted
//! regression onto relabeled dataset actions plus a normalized
//! Q-maximization term.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::agent::RunMetrics;
use crate::approx::{Adam, Gradients, NetConfig, Network, TargetTracker};
use crate::batch::TrainBatch;
use crate::critic::{action_gradient, q_values, regression};
use crate::data::{sample_batch, Dataset, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::features::{critic_inputs, new_critic, Actor};
use crate::rng::{derive_seed, seeded, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoalTrainConfig {
    pub gamma: f64,
    /// Upper clip `M` on `exp(A)`.
    pub adv_clip: f64,
    /// Weight factor for samples at or below the advantage percentile.
    pub eps_weight: f64,
    /// Percentile `K` in (0, 100) of the batch advantages.
    pub percentile: f64,
    /// `alpha` of the normalized Q term; 0 disables it.
    pub bc_q_alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub seed: u64,
    pub p_relabel: f64,
    pub net: NetConfig,
}

impl Default for GoalTrainConfig {
    fn default() -> Self {
        GoalTrainConfig {
            gamma: DEFAULT_GAMMA,
            adv_clip: 10.0,
            eps_weight: 0.05,
            percentile: 80.0,
            bc_q_alpha: 2.5,
            batch_size: 256,
            epochs: 100,
            steps_per_epoch: 100,
            seed: 0,
            p_relabel: 0.8,
            net: NetConfig::default(),
        }
    }
}

impl GoalTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("goal.gamma must be in (0,1), got {}", self.gamma));
        }
        if !(self.adv_clip > 0.0) {
            return bad(format!("goal.adv_clip must be > 0, got {}", self.adv_clip));
        }
        if !(self.eps_weight > 0.0 && self.eps_weight < 1.0) {
            return bad(format!("goal.eps_weight must be in (0,1), got {}", self.eps_weight));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return bad(format!("goal.percentile must be in (0,100), got {}", self.percentile));
        }
        if !(self.bc_q_alpha >= 0.0 && self.bc_q_alpha.is_finite()) {
            return bad(format!("goal.bc_q_alpha must be >= 0, got {}", self.bc_q_alpha));
        }
        if !(0.0..=1.0).contains(&self.p_relabel) {
            return bad(format!("goal.p_relabel must be in [0,1], got {}", self.p_relabel));
        }
        if self.batch_size == 0 {
            return bad("goal.batch_size must be >= 1".into());
        }
        validate_net(&self.net, "goal")
    }
}

pub(crate) fn validate_net(net: &NetConfig, who: &str) -> Result<()> {
    if net.hidden.iter().any(|&h| h == 0) {
        return Err(Error::Config(format!("{who}.net.hidden sizes must be >= 1")));
    }
    if !(net.adam.lr > 0.0) || !(0.0..1.0).contains(&net.adam.beta1) || !(0.0..1.0).contains(&net.adam.beta2) || !(net.adam.eps > 0.0) {
        return Err(Error::Config(format!("{who}.net.adam has out-of-range values")));
    }
    if !(0.0..=1.0).contains(&net.polyak) {
        return Err(Error::Config(format!("{who}.net.polyak must be in [0,1]")));
    }
    Ok(())
}

/// Advantages, the resulting sample weights and the percentile threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageBatch {
    pub advantages: Array1<f64>,
    pub weights: Array1<f64>,
    pub threshold: f64,
}

/// Networks and optimizer state of the goal side.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalLearner {
    pub policy: Actor,
    pub policy_opt: Adam,
    pub q: Network,
    pub q_opt: Adam,
    pub q_target: TargetTracker,
}

impl GoalLearner {
    pub fn new(net: &NetConfig, action_max: f64, rng: &mut Rng) -> Result<Self> {
        let policy = Actor::new(net, action_max, rng);
        let q = new_critic(net, rng);
        Ok(GoalLearner {
            policy_opt: Adam::new(&policy.network, net.adam),
            q_opt: Adam::new(&q, net.adam),
            q_target: TargetTracker::new(&q, net.polyak)?,
            policy,
            q,
        })
    }
}

/// `y = r + gamma (1 - r) Q_target(s', pi(s'))`: success is absorbing.
pub fn q_g_targets(q_target: &Network, policy: &Actor, batch: &TrainBatch, gamma: f64) -> Result<Array1<f64>> {
    let next_actions = policy.normalized(batch.next_inputs.view())?;
    let next_q = q_values(q_target, batch.next_inputs.view(), next_actions.view())?;
    Ok(&batch.rewards + &((1.0 - &batch.rewards) * next_q * gamma))
}

/// One step on the mean squared TD error; returns the pre-step loss.
pub fn q_g_update(learner: &mut GoalLearner, batch: &TrainBatch, gamma: f64) -> Result<f64> {
    let y = q_g_targets(&learner.q_target.shadow, &learner.policy, batch, gamma)?;
    let x = critic_inputs(batch.inputs.view(), batch.actions.view());
    let (loss, grads) = regression(&learner.q, x.view(), y.view(), "goal critic loss")?;
    learner.q_opt.step(&mut learner.q, &grads);
    Ok(loss)
}

/// `A = r + gamma (1 - r) Q(s', pi(s')) - Q(s, pi(s))`.
pub fn advantages(q: &Network, policy: &Actor, batch: &TrainBatch, gamma: f64) -> Result<Array1<f64>> {
    let boot = q_g_targets(q, policy, batch, gamma)?;
    let actions = policy.normalized(batch.inputs.view())?;
    Ok(boot - q_values(q, batch.inputs.view(), actions.view())?)
}

/// Linearly interpolated `k`-th percentile (`k` in [0, 100]).
pub fn percentile(values: &[f64], k: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty batch");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (k / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// `w = gamma^gap * min(exp(A), M) * (1 if A > threshold else eps_w)`.
pub fn sample_weight(advantage: f64, horizon_gap: usize, threshold: f64, cfg: &GoalTrainConfig) -> f64 {
    let discount = cfg.gamma.powi(horizon_gap as i32);
    let clipped = advantage.exp().min(cfg.adv_clip);
    let indicator = if advantage > threshold { 1.0 } else { cfg.eps_weight };
    discount * clipped * indicator
}

pub fn wgcsl_weights(advantages: Array1<f64>, horizon_gaps: &[usize], cfg: &GoalTrainConfig) -> AdvantageBatch {
    assert_eq!(advantages.len(), horizon_gaps.len());
    let threshold = percentile(advantages.as_slice().expect("contiguous"), cfg.percentile);
    let weights = advantages
        .iter()
        .zip(horizon_gaps)
        .map(|(&a, &gap)| sample_weight(a, gap, threshold, cfg))
        .collect();
    AdvantageBatch {
        advantages,
        weights,
        threshold,
    }
}

/// Scale of the Q term: `alpha / mean |Q(s, a_data)|`, or 0 when the mean is
/// too small to normalize by.
pub fn q_term_scale(q: &Network, batch: &TrainBatch, alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let data_q = q_values(q, batch.inputs.view(), batch.actions.view())?;
    Ok(normalized_alpha(alpha, data_q.mapv(f64::abs).mean().unwrap_or(0.0)))
}

pub fn normalized_alpha(alpha: f64, mean_abs_q: f64) -> f64 {
    if mean_abs_q < 1e-6 {
        0.0
    } else {
        alpha / mean_abs_q
    }
}

/// Policy loss `mean w |pi(s) - a|^2 - alpha' mean Q(s, pi(s))` (actions in
/// normalized units) and its gradient with respect to the policy parameters.
/// `alpha_prime` is treated as a constant.
pub fn policy_objective(policy: &Actor, q: &Network, batch: &TrainBatch, weights: &Array1<f64>, alpha_prime: f64) -> Result<(f64, Gradients)> {
    let n = batch.len() as f64;
    let tape = policy.network.forward_tape(batch.inputs.view())?;
    let pi = tape.output();
    let diff = pi - &batch.actions;
    let sq = diff.mapv(|v| v * v).sum_axis(Axis(1));
    let mut loss = (&sq * weights).sum() / n;
    let mut d_pi: Array2<f64> = &diff * &weights.view().insert_axis(Axis(1)) * (2.0 / n);
    if alpha_prime != 0.0 {
        let (qv, dq) = action_gradient(q, batch.inputs.view(), pi.view())?;
        loss -= alpha_prime * qv.sum() / n;
        d_pi.scaled_add(-alpha_prime / n, &dq);
    }
    if !loss.is_finite() {
        let index = sq.iter().zip(weights).position(|(s, w)| !(s * w).is_finite()).unwrap_or(0);
        return Err(Error::NonFinite {
            context: "goal policy loss",
            index,
        });
    }
    let (grads, _) = policy.network.backward(&tape, d_pi, true);
    Ok((loss, grads.expect("requested")))
}

/// One step on the policy objective; returns the pre-step loss.
pub fn policy_update(learner: &mut GoalLearner, batch: &TrainBatch, weights: &Array1<f64>, alpha: f64) -> Result<f64> {
    let alpha_prime = q_term_scale(&learner.q, batch, alpha)?;
    let (loss, grads) = policy_objective(&learner.policy, &learner.q, batch, weights, alpha_prime)?;
    learner.policy_opt.step(&mut learner.policy.network, &grads);
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalEpochMetrics {
    pub epoch: usize,
    pub q_loss: f64,
    pub policy_loss: f64,
    pub mean_weight: f64,
    pub threshold: f64,
    pub success_rate: Option<f64>,
    pub discounted_return: Option<f64>,
    pub cost_return: Option<f64>,
}

/// One full gradient step: critic, weights, policy, target.
pub fn train_step(learner: &mut GoalLearner, batch: &TrainBatch, cfg: &GoalTrainConfig) -> Result<(f64, f64, AdvantageBatch)> {
    let q_loss = q_g_update(learner, batch, cfg.gamma)?;
    let adv = advantages(&learner.q, &learner.policy, batch, cfg.gamma)?;
    let weights = wgcsl_weights(adv, &batch.horizon_gaps, cfg);
    let policy_loss = policy_update(learner, batch, &weights.weights, cfg.bc_q_alpha)?;
    learner.q_target.update(&learner.q);
    Ok((q_loss, policy_loss, weights))
}

/// Trains from freshly initialized networks. `on_epoch` runs after every
/// epoch and may return evaluation metrics to record alongside the losses.
pub fn train_goal_policy<F>(dataset: &Dataset, cfg: &GoalTrainConfig, mut on_epoch: F) -> Result<(GoalLearner, Vec<GoalEpochMetrics>)>
where
    F: FnMut(&GoalLearner, usize) -> Result<Option<RunMetrics>>,
{
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("goal training needs a nonempty dataset".into()));
    }
    let action_max = dataset.env_config.action_max;
    let mut learner = GoalLearner::new(&cfg.net, action_max, &mut seeded(derive_seed(cfg.seed, 1)))?;
    let mut rng = seeded(derive_seed(cfg.seed, 2));
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (mut q_sum, mut p_sum, mut w_sum, mut t_sum) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..cfg.steps_per_epoch {
            let samples = sample_batch(dataset, cfg.batch_size, cfg.p_relabel, &mut rng);
            let batch = TrainBatch::from_samples(&samples, action_max);
            let (q_loss, policy_loss, w) = train_step(&mut learner, &batch, cfg)?;
            q_sum += q_loss;
            p_sum += policy_loss;
            w_sum += w.weights.mean().unwrap_or(0.0);
            t_sum += w.threshold;
        }
        let steps = cfg.steps_per_epoch.max(1) as f64;
        let eval = on_epoch(&learner, epoch)?;
        let m = GoalEpochMetrics {
            epoch,
            q_loss: q_sum / steps,
            policy_loss: p_sum / steps,
            mean_weight: w_sum / steps,
            threshold: t_sum / steps,
            success_rate: eval.as_ref().map(|e| e.success_rate),
            discounted_return: eval.as_ref().map(|e| e.discounted_return),
            cost_return: eval.as_ref().map(|e| e.cost_return),
        };
        log::info!(
            "goal epoch {epoch}: q_loss {:.5} policy_loss {:.5} mean_w {:.3}",
            m.q_loss,
            m.policy_loss,
            m.mean_weight
        );
        history.push(m);
    }
    Ok((learner, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain;
    use crate::features::POLICY_INPUT_DIM;
    use ndarray::array;

    pub(crate) fn small_net() -> NetConfig {
        NetConfig {
            hidden: vec![32, 32],
            ..Default::default()
        }
    }

    /// Batch over states encoded one-hot in the first policy-input columns.
    fn chain_batch(states: &[usize], actions: &[f64], next: &[usize], rewards: &[f64]) -> TrainBatch {
        let n = states.len();
        let one_hot = |s: &[usize]| Array2::from_shape_fn((n, POLICY_INPUT_DIM), |(i, j)| if j == s[i] { 1.0 } else { 0.0 });
        TrainBatch {
            inputs: one_hot(states),
            next_inputs: one_hot(next),
            actions: Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { actions[i] } else { 0.0 }),
            rewards: Array1::from(rewards.to_vec()),
            costs: Array1::zeros(n),
            terminal: Array1::zeros(n),
            horizon_gaps: vec![0; n],
        }
    }

    fn constant_actor(a: f64) -> Actor {
        chain::constant_actor(a, 0.05)
    }

    fn cfg() -> GoalTrainConfig {
        GoalTrainConfig {
            net: small_net(),
            ..Default::default()
        }
    }

    #[test]
    fn hand_computed_weight_value() {
        let w = sample_weight(0.3, 2, 0.1, &cfg());
        assert!((w - 0.9604 * 0.3f64.exp()).abs() < 1e-12);
        assert!((w - 1.2965).abs() < 1e-3);
        assert_eq!(sample_weight(0.1, 0, 0.1, &cfg()), 0.1f64.exp() * 0.05);
        assert_eq!(sample_weight(50.0, 0, 0.0, &cfg()), 10.0);
    }

    #[test]
    fn alpha_normalization() {
        assert_eq!(normalized_alpha(2.5, 2.0), 1.25);
        assert_eq!(normalized_alpha(2.5, 1e-7), 0.0);
    }

    #[test]
    fn percentile_matches_interpolation() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert!((percentile(&v, 80.0) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn reward_one_targets_are_one_and_zero_gamma_targets_are_rewards() {
        let mut rng = seeded(0);
        let learner = GoalLearner::new(&small_net(), 0.05, &mut rng).unwrap();
        let b = chain_batch(&[0, 1, 2], &[0.5, -0.5, 0.5], &[1, 0, 3], &[1.0, 1.0, 1.0]);
        let y = q_g_targets(&learner.q, &learner.policy, &b, 0.98).unwrap();
        assert!(y.iter().all(|&v| v == 1.0));
        let b = chain_batch(&[0, 1, 2], &[0.5, -0.5, 0.5], &[1, 0, 3], &[0.0, 1.0, 0.0]);
        let y = q_g_targets(&learner.q, &learner.policy, &b, 0.0).unwrap();
        assert_eq!(y, array![0.0, 1.0, 0.0]);
        let a = advantages(&learner.q, &learner.policy, &b, 0.0).unwrap();
        let pi = learner.policy.normalized(b.inputs.view()).unwrap();
        let q_pi = q_values(&learner.q, b.inputs.view(), pi.view()).unwrap();
        assert!((a[1] - (1.0 - q_pi[1])).abs() < 1e-12);
    }

    #[test]
    fn two_state_chain_converges_to_fixed_point() {
        // State 0 --right--> state 1 (goal reached, r = 1); "left" stays in 0.
        let gamma = 0.9;
        let b = chain_batch(&[0, 0, 1, 1], &[0.5, -0.5, 0.5, -0.5], &[1, 0, 1, 0], &[1.0, 0.0, 1.0, 0.0]);
        let mut rng = seeded(1);
        let mut learner = GoalLearner::new(
            &NetConfig {
                polyak: 0.9,
                ..small_net()
            },
            0.05,
            &mut rng,
        )
        .unwrap();
        learner.policy = constant_actor(0.5);
        for _ in 0..3000 {
            q_g_update(&mut learner, &b, gamma).unwrap();
            learner.q_target.update(&learner.q);
        }
        let q = q_values(&learner.q, b.inputs.view(), b.actions.view()).unwrap();
        let oracle = [1.0, gamma, 1.0, gamma];
        for (v, o) in q.iter().zip(oracle) {
            assert!((v - o).abs() < 1e-2, "{q} vs {oracle:?}");
        }
        // The optimal action carries the larger advantage in every state.
        let adv_b = chain_batch(&[0, 0, 1, 1], &[0.5, -0.5, 0.5, -0.5], &[1, 0, 1, 0], &[1.0, 0.0, 1.0, 0.0]);
        let adv = advantages(&learner.q, &learner.policy, &adv_b, gamma).unwrap();
        assert!(adv[0] > adv[1] && adv[2] > adv[3], "{adv}");
    }

    #[test]
    fn weights_are_positive_bounded_and_split_at_percentile() {
        let c = cfg();
        let adv = Array1::from_shape_fn(100, |i| ((i * 37) % 100) as f64 / 25.0 - 2.0);
        let gaps: Vec<usize> = (0..100).map(|i| i % 7).collect();
        let w = wgcsl_weights(adv.clone(), &gaps, &c);
        assert!(w.weights.iter().all(|&v| v > 0.0 && v <= c.adv_clip));
        let above = adv.iter().filter(|&&a| a > w.threshold).count();
        let expected = ((1.0 - c.percentile / 100.0) * 100.0).ceil() as usize;
        assert!(above.abs_diff(expected) <= 1, "{above} vs {expected}");
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let mut rng = seeded(3);
        let learner = GoalLearner::new(&NetConfig { hidden: vec![8], ..Default::default() }, 0.05, &mut rng).unwrap();
        let b = chain_batch(&[0, 1, 2, 3], &[0.5, -0.3, 0.1, 0.9], &[1, 2, 3, 4], &[0.0, 0.0, 1.0, 0.0]);
        let w = array![0.5, 1.0, 0.05, 2.0];
        for alpha_prime in [0.0, 1.3] {
            let (_, g) = policy_objective(&learner.policy, &learner.q, &b, &w, alpha_prime).unwrap();
            let h = 1e-6;
            let mut probe = learner.policy.clone();
            for li in 0..probe.network.layers.len() {
                for k in 0..probe.network.layers[li].bias.len() {
                    let orig = probe.network.layers[li].bias[k];
                    probe.network.layers[li].bias[k] = orig + h;
                    let up = policy_objective(&probe, &learner.q, &b, &w, alpha_prime).unwrap().0;
                    probe.network.layers[li].bias[k] = orig - h;
                    let dn = policy_objective(&probe, &learner.q, &b, &w, alpha_prime).unwrap().0;
                    probe.network.layers[li].bias[k] = orig;
                    let fd = (up - dn) / (2.0 * h);
                    assert!((fd - g.layers[li].1[k]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn behavior_cloning_limit() {
        // alpha = 0 and unit weights: the loss is the mean squared action error.
        let mut rng = seeded(4);
        let mut learner = GoalLearner::new(&small_net(), 0.05, &mut rng).unwrap();
        let b = chain_batch(&[0, 0, 1], &[0.2, 0.6, -0.4], &[0, 0, 1], &[0.0; 3]);
        let w = Array1::ones(3);
        let pi = learner.policy.normalized(b.inputs.view()).unwrap();
        let mse = (&pi - &b.actions).mapv(|v| v * v).sum() / 3.0;
        let loss = policy_update(&mut learner, &b, &w, 0.0).unwrap();
        assert!((loss - mse).abs() < 1e-12);
        for _ in 0..2000 {
            policy_update(&mut learner, &b, &w, 0.0).unwrap();
        }
        let pi = learner.policy.normalized(b.inputs.view()).unwrap();
        // Conditional mean of the two actions seen in state 0.
        assert!((pi[[0, 0]] - 0.4).abs() < 1e-2 && (pi[[2, 0]] + 0.4).abs() < 1e-2, "{pi}");
    }

    #[test]
    fn q_term_direction_is_scale_invariant() {
        let mut rng = seeded(5);
        let learner = GoalLearner::new(&NetConfig { hidden: vec![8], ..Default::default() }, 0.05, &mut rng).unwrap();
        let b = chain_batch(&[0, 1, 2], &[0.5, -0.3, 0.1], &[1, 2, 3], &[0.0; 3]);
        let zero = Array1::zeros(3);
        let mut scaled = learner.q.clone();
        let last = scaled.layers.last_mut().unwrap();
        last.weight *= 7.0;
        last.bias *= 7.0;
        let g1 = policy_objective(&learner.policy, &learner.q, &b, &zero, q_term_scale(&learner.q, &b, 2.5).unwrap()).unwrap().1;
        let g2 = policy_objective(&learner.policy, &scaled, &b, &zero, q_term_scale(&scaled, &b, 2.5).unwrap()).unwrap().1;
        for (x, y) in g1.iter().zip(g2.iter()) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn zero_epochs_return_initial_networks() {
        let ds = crate::data::Dataset {
            env_config: crate::env::EnvConfig::reach2d(),
            trajectories: vec![crate::data::testing::synthetic(&[0, 1], &[0, 0], crate::data::Provenance::Expert)],
        };
        let c = GoalTrainConfig { epochs: 0, ..cfg() };
        let (l, m) = train_goal_policy(&ds, &c, |_, _| Ok(None)).unwrap();
        let fresh = GoalLearner::new(&c.net, 0.05, &mut seeded(derive_seed(c.seed, 1))).unwrap();
        assert_eq!(l, fresh);
        assert!(m.is_empty());
        let c = GoalTrainConfig { epochs: 2, steps_per_epoch: 3, batch_size: 8, ..cfg() };
        let a = train_goal_policy(&ds, &c, |_, _| Ok(None)).unwrap();
        let b = train_goal_policy(&ds, &c, |_, _| Ok(None)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 2);
    }
}
