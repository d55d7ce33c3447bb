use rand::Rng as _;

use super::{Dataset, Trajectory};
use crate::env::{cost_of_obs, phi_obs, reward_for, Goal, Vec2};
use crate::rng::Rng;

/// One transition paired with a (possibly hindsight-relabeled) goal.
#[derive(Debug, Clone, PartialEq)]
pub struct RelabeledSample {
    pub state: Vec<f64>,
    pub action: Vec2,
    pub goal: Vec2,
    pub reward: u8,
    pub next_state: Vec<f64>,
    /// `t' - t`; zero when the original goal is kept.
    pub horizon_gap: usize,
    pub cost: u8,
    /// Last step of the trajectory.
    pub terminal: bool,
}

/// Hindsight relabeling of step `t`. Trajectories ending inside the unsafe
/// area keep their original goal and reward; otherwise, with probability
/// `p_relabel`, the goal becomes `phi(s_t')` for `t'` uniform in `{t..=T}`
/// and the reward is recomputed on the successor state.
pub fn relabel_sample(traj: &Trajectory, t: usize, p_relabel: f64, rng: &mut Rng) -> RelabeledSample {
    let horizon = traj.len();
    assert!(t < horizon, "step {t} outside trajectory of length {horizon}");
    let tr = traj.transition(t);
    let ends_safe = cost_of_obs(traj.states.last().expect("non-empty"), &traj.obstacle) == 0;
    let (goal, reward, horizon_gap) = if ends_safe && rng.random_bool(p_relabel) {
        let t_future = rng.random_range(t..=horizon);
        let g = phi_obs(&traj.states[t_future]);
        let goal = Goal {
            target: g,
            tolerance: traj.tolerance,
        };
        (g, reward_for(phi_obs(tr.next_state), &goal), t_future - t)
    } else {
        (traj.goal, tr.reward, 0)
    };
    RelabeledSample {
        state: tr.state.to_vec(),
        action: tr.action,
        goal,
        reward,
        next_state: tr.next_state.to_vec(),
        horizon_gap,
        cost: tr.cost,
        terminal: t + 1 == horizon,
    }
}

/// Uniform minibatch over all transitions of `dataset`, relabeled.
pub fn sample_batch(dataset: &Dataset, batch_size: usize, p_relabel: f64, rng: &mut Rng) -> Vec<RelabeledSample> {
    assert!(!dataset.is_empty(), "cannot sample from an empty dataset");
    (0..batch_size)
        .map(|_| {
            let traj = &dataset.trajectories[rng.random_range(0..dataset.len())];
            let t = rng.random_range(0..traj.len());
            relabel_sample(traj, t, p_relabel, rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testing::synthetic;
    use crate::data::Provenance;
    use crate::rng::seeded;

    #[test]
    fn next_state_goal_is_rewarded() {
        let traj = synthetic(&[0; 5], &[0; 5], Provenance::Random);
        let mut rng = seeded(0);
        let mut seen = false;
        for _ in 0..200 {
            let s = relabel_sample(&traj, 2, 1.0, &mut rng);
            if s.horizon_gap == 1 {
                assert_eq!(s.goal, phi_obs(&traj.states[3]));
                assert_eq!(s.reward, 1);
                seen = true;
            }
        }
        assert!(seen);
    }

    #[test]
    fn unsafe_ending_keeps_original_goal() {
        let mut traj = synthetic(&[0, 0, 0, 1], &[0, 0, 1, 1], Provenance::Expert);
        // Park the final state in the obstacle center.
        let last = traj.states.len() - 1;
        traj.states[last][0..4].copy_from_slice(&[0.5, 0.5, 0.5, 0.5]);
        let mut rng = seeded(3);
        for t in 0..4 {
            for _ in 0..50 {
                let s = relabel_sample(&traj, t, 1.0, &mut rng);
                assert_eq!((s.goal, s.reward, s.horizon_gap), (traj.goal, traj.rewards[t], 0));
                assert_eq!(s.state[6..10], [0.5, 0.5, 0.1, 0.1]);
            }
        }
    }

    #[test]
    fn p_relabel_zero_keeps_goal() {
        let traj = synthetic(&[0, 1, 0], &[0; 3], Provenance::Expert);
        let mut rng = seeded(1);
        let s = relabel_sample(&traj, 1, 0.0, &mut rng);
        assert_eq!((s.goal, s.reward, s.horizon_gap, s.terminal), (traj.goal, 1, 0, false));
        assert!(relabel_sample(&traj, 2, 0.0, &mut rng).terminal);
    }

    #[test]
    fn horizon_gap_is_uniform() {
        // Pearson chi-square against uniform over {0..=50}; 50 dof, the
        // 0.999 quantile is about 86.7.
        let traj = synthetic(&[0; 50], &[0; 50], Provenance::Random);
        let mut rng = seeded(42);
        let n = 100_000;
        let mut counts = [0usize; 51];
        for _ in 0..n {
            counts[relabel_sample(&traj, 0, 1.0, &mut rng).horizon_gap] += 1;
        }
        let expected = n as f64 / 51.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 86.7, "chi2 = {chi2}");
        let sigma = (expected * (1.0 - 1.0 / 51.0)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - expected).abs() < 4.0 * sigma));
    }
}
