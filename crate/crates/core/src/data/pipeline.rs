use rand::seq::SliceRandom;

use super::{Dataset, Trajectory};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::rng;

/// Draws `floor(expert_fraction * total)` expert trajectories and fills the
/// rest with random ones, then shuffles. Trajectories are copied unmodified.
pub fn mix(expert: &Dataset, random: &Dataset, expert_fraction: f64, total: usize, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&expert_fraction) {
        return Err(Error::Mixture(format!("expert fraction {expert_fraction} outside [0,1]")));
    }
    // the generation seed differs between files by design
    let same_env = EnvConfig {
        seed: expert.env_config.seed,
        ..random.env_config.clone()
    } == expert.env_config;
    if !same_env {
        return Err(Error::Mixture("expert and random datasets come from different env configs".into()));
    }
    let n_expert = (expert_fraction * total as f64 + 1e-9).floor() as usize;
    let n_random = total - n_expert;
    if n_expert > expert.len() || n_random > random.len() {
        return Err(Error::Mixture(format!(
            "need {n_expert} expert + {n_random} random trajectories, have {} + {}",
            expert.len(),
            random.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut trajectories: Vec<Trajectory> = expert.trajectories[..n_expert]
        .iter()
        .chain(&random.trajectories[..n_random])
        .cloned()
        .collect();
    trajectories.shuffle(&mut rng);
    Ok(Dataset {
        env_config: expert.env_config.clone(),
        trajectories,
    })
}

fn keep(dataset: &Dataset, what: &str, pred: impl Fn(&Trajectory) -> bool) -> Dataset {
    let out = Dataset {
        env_config: dataset.env_config.clone(),
        trajectories: dataset.trajectories.iter().filter(|t| pred(t)).cloned().collect(),
    };
    if out.is_empty() {
        log::warn!("{what} filter left no trajectories (input had {})", dataset.len());
    }
    out
}

/// Keeps trajectories with positive discounted return.
pub fn filter_expert(dataset: &Dataset, gamma: f64) -> Dataset {
    keep(dataset, "expert", |t| t.discounted_return(gamma) > 0.0)
}

/// Keeps trajectories with positive discounted cost return.
pub fn filter_recovery(expert: &Dataset, gamma: f64) -> Dataset {
    keep(expert, "recovery", |t| t.discounted_cost(gamma) > 0.0)
}

/// Zeroes the cost of every violating step whose successor step is safe.
/// The last step has no successor and is left as is.
pub fn shape_costs(traj: &Trajectory) -> Trajectory {
    let mut shaped = traj.clone();
    for t in 0..traj.costs.len().saturating_sub(1) {
        if traj.costs[t] == 1 && traj.costs[t + 1] == 0 {
            shaped.costs[t] = 0;
        }
    }
    shaped
}

pub fn shape_dataset_costs(dataset: &Dataset) -> Dataset {
    Dataset {
        env_config: dataset.env_config.clone(),
        trajectories: dataset.trajectories.iter().map(shape_costs).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testing::synthetic;
    use crate::data::Provenance;
    use crate::env::EnvConfig;

    fn dataset(ts: Vec<Trajectory>) -> Dataset {
        Dataset {
            env_config: EnvConfig::reach2d(),
            trajectories: ts,
        }
    }

    fn pool(n: usize, p: Provenance) -> Dataset {
        dataset((0..n).map(|i| synthetic(&[0, (i % 2) as u8], &[0, 0], p)).collect())
    }

    #[test]
    fn mix_fractions() {
        let (e, r) = (pool(100, Provenance::Expert), pool(100, Provenance::Random));
        let count = |d: &Dataset| d.trajectories.iter().filter(|t| t.provenance == Provenance::Expert).count();
        let all = mix(&e, &r, 1.0, 100, 0).unwrap();
        assert_eq!((all.len(), count(&all)), (100, 100));
        let none = mix(&e, &r, 0.0, 100, 0).unwrap();
        assert_eq!((none.len(), count(&none)), (100, 0));
        let half = mix(&e, &r, 0.5, 100, 0).unwrap();
        assert_eq!((half.len(), count(&half)), (100, 50));
        let odd = mix(&e, &r, 0.3, 7, 0).unwrap();
        assert_eq!((odd.len(), count(&odd)), (7, 2));
        assert_eq!(half, mix(&e, &r, 0.5, 100, 0).unwrap());
    }

    #[test]
    fn mix_errors() {
        let (e, r) = (pool(10, Provenance::Expert), pool(10, Provenance::Random));
        assert!(matches!(mix(&e, &r, 0.9, 20, 0), Err(Error::Mixture(_))));
        assert!(matches!(mix(&e, &r, 1.5, 5, 0), Err(Error::Mixture(_))));
        let mut other = r.clone();
        other.env_config.horizon = 2;
        assert!(matches!(mix(&e, &other, 0.5, 4, 0), Err(Error::Mixture(_))));
    }

    #[test]
    fn filter_examples() {
        let d = dataset(vec![
            synthetic(&[1, 0, 0], &[0, 0, 0], Provenance::Expert),
            synthetic(&[0, 1, 0], &[1, 1, 0], Provenance::Expert),
            synthetic(&[0, 0, 0], &[0, 1, 0], Provenance::Random),
        ]);
        let de = filter_expert(&d, 0.98);
        assert_eq!(de.trajectories, d.trajectories[..2].to_vec());
        assert_eq!(filter_expert(&de, 0.98), de);
        let drec = filter_recovery(&de, 0.98);
        assert_eq!(drec.trajectories, vec![d.trajectories[1].clone()]);
    }

    #[test]
    fn all_failures_filter_to_empty() {
        let d = dataset(vec![synthetic(&[0, 0], &[1, 0], Provenance::Random)]);
        assert!(filter_expert(&d, 0.98).is_empty());
    }

    #[test]
    fn shaping_examples() {
        let shaped = |c: &[u8]| shape_costs(&synthetic(&vec![0; c.len()], c, Provenance::Expert)).costs;
        assert_eq!(shaped(&[0, 1, 1, 0]), vec![0, 1, 0, 0]);
        assert_eq!(shaped(&[0, 0, 0, 0]), vec![0, 0, 0, 0]);
        assert_eq!(shaped(&[1, 1]), vec![1, 1]);
        assert_eq!(shaped(&[1, 0, 1, 0, 1]), vec![0, 0, 0, 0, 1]);
        assert_eq!(shaped(&[]), Vec::<u8>::new());
    }
}
