use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Provenance, Trajectory};
use crate::env::{self, phi, EnvConfig, EnvState, Goal, ObstacleBox, Variant, Vec2, Workspace};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, Rng};

/// Scripted stand-in for a trained expert: a geometric detour planner around
/// the inflated obstacle plus Gaussian action noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertPlanner {
    /// Outward offset of the detour waypoint from the inflated-box corner.
    /// Negative values cut into the inflation band (down to the bare box),
    /// giving an expert that avoids collisions but not the safety margin.
    pub margin: f64,
    /// When set, each episode draws its margin uniformly from
    /// `[margin, margin_max]`, giving a spread of detour depths.
    pub margin_max: Option<f64>,
    pub noise_std: f64,
}

impl Default for ExpertPlanner {
    fn default() -> Self {
        ExpertPlanner {
            margin: 0.02,
            margin_max: None,
            noise_std: 0.01,
        }
    }
}

const CORNER_CLEARANCE: f64 = 0.01;

/// Next point the goal entity should head for: the target itself when the
/// straight path is clear, otherwise the first corner on the shortest path
/// through the visibility graph of the detour corners. Corners closer than
/// `min_hop` count as already reached; corners outside the workspace are
/// unreachable.
fn waypoint(from: Vec2, target: Vec2, obstacle: &ObstacleBox, workspace: &Workspace, margin: f64, min_hop: f64) -> Vec2 {
    // Plan around the inflated box grown by `margin` (shrunk if negative),
    // with corners kept slightly outside the planning box.
    let plan = ObstacleBox {
        inflation: (obstacle.inflation + margin - CORNER_CLEARANCE).max(0.0),
        ..*obstacle
    };
    let obstacle = &plan;
    if !obstacle.intersects_segment(from, target) {
        return target;
    }
    // Nodes: 0 = from, 1..=4 = corners, 5 = target.
    let corners = obstacle.detour_corners(CORNER_CLEARANCE);
    let mut nodes = vec![from];
    nodes.extend(corners);
    nodes.push(target);
    // A corner within `min_hop` is where the entity already stands: it joins
    // the start as a zero-distance source.
    let at = |i: usize| i == 0 || ((1..=4).contains(&i) && from.distance(nodes[i]) < min_hop);
    let n = nodes.len();
    let mut dist: Vec<f64> = (0..n).map(|i| if at(i) { 0.0 } else { f64::INFINITY }).collect();
    let mut first_hop = vec![None; n];
    let mut done = vec![false; n];
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) else {
            break;
        };
        done[u] = true;
        for v in (0..n).filter(|&v| !done[v] && !at(v) && workspace.contains(nodes[v])) {
            if obstacle.intersects_segment(nodes[u], nodes[v]) {
                continue;
            }
            let d = dist[u] + nodes[u].distance(nodes[v]);
            if d < dist[v] {
                dist[v] = d;
                first_hop[v] = if at(u) { Some(v) } else { first_hop[u] };
            }
        }
    }
    match first_hop[n - 1] {
        Some(i) => nodes[i],
        // Start inside the detour ring: head for the nearest corner not yet reached.
        None => (1..=4)
            .filter(|&i| !at(i) && workspace.contains(nodes[i]))
            .min_by(|&a, &b| from.distance(nodes[a]).total_cmp(&from.distance(nodes[b])))
            .map_or(target, |i| nodes[i]),
    }
}

/// Noise-free expert action for the current state.
pub fn expert_action(config: &EnvConfig, state: &EnvState, goal: &Goal, margin: f64) -> Vec2 {
    let a_max = config.action_max;
    let entity = phi(state);
    let wp = waypoint(entity, goal.target, &state.obstacle, &config.workspace, margin, 0.5 * a_max);
    match config.variant {
        Variant::Reach2D => (wp - entity).clamp_norm(a_max),
        Variant::Push2D => push_action(config, state, wp),
    }
}

fn push_action(config: &EnvConfig, state: &EnvState, wp: Vec2) -> Vec2 {
    let a_max = config.action_max;
    let r_c = config.contact_radius;
    let obj = state.object_pos;
    let agent = state.agent_pos;
    let to_wp = wp - obj;
    let dist = to_wp.norm();
    if dist < 1e-9 {
        return Vec2::ZERO;
    }
    let d = to_wp * (1.0 / dist);
    let rel = agent - obj;
    let along = rel.dot(d);
    let lateral = (rel - d * along).norm();
    if along < -0.5 * r_c && lateral < 0.25 * r_c {
        // Lined up behind the object: advance, never past its center in one step.
        let push = dist.min(0.75 * r_c);
        return (obj - d * r_c + d * push - agent).clamp_norm(a_max);
    }
    let pre = obj - d * (r_c + 0.02);
    let normal = Vec2::new(-d.y(), d.x());
    let side = if rel.dot(normal) >= 0.0 { 1.0 } else { -1.0 };
    let dest = if segment_point_distance(agent, pre, obj) < 1.2 * r_c {
        obj + normal * (side * (r_c + 0.03)) - d * 0.01
    } else {
        pre
    };
    (dest - agent).clamp_norm(a_max)
}

fn segment_point_distance(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 < 1e-18 {
        return a.distance(p);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (a + ab * t).distance(p)
}

/// Runs one fixed-horizon episode with an arbitrary controller.
pub fn rollout<F>(config: &EnvConfig, episode_seed: u64, provenance: Provenance, mut controller: F) -> Result<Trajectory>
where
    F: FnMut(&EnvState, &Goal, &mut Rng) -> Vec2,
{
    let (mut state, goal) = env::reset(config, episode_seed)?;
    let mut rng = rng::seeded(derive_seed(episode_seed, 0xAC7));
    let horizon = config.horizon;
    let mut traj = Trajectory {
        provenance,
        goal: goal.target,
        tolerance: goal.tolerance,
        obstacle: state.obstacle,
        states: Vec::with_capacity(horizon + 1),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        costs: Vec::with_capacity(horizon),
    };
    traj.states.push(state.observation().to_vec());
    for _ in 0..horizon {
        let action = controller(&state, &goal, &mut rng)
            .map(|v| v.clamp(-config.action_max, config.action_max));
        let out = env::step(config, &state, action, &goal);
        traj.actions.push(action);
        traj.rewards.push(out.reward);
        traj.costs.push(out.cost);
        traj.states.push(out.state.observation().to_vec());
        state = out.state;
    }
    Ok(traj)
}

fn check_episodes(episodes: usize) -> Result<()> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be >= 1".into()));
    }
    Ok(())
}

/// Uniform random policy over the action box.
pub fn rollout_random(config: &EnvConfig, episodes: usize, seed: u64) -> Result<Vec<Trajectory>> {
    check_episodes(episodes)?;
    let a = config.action_max;
    (0..episodes as u64)
        .map(|i| {
            rollout(config, derive_seed(seed, i), Provenance::Random, |_, _, rng| {
                Vec2::new(rng.random_range(-a..=a), rng.random_range(-a..=a))
            })
        })
        .collect()
}

pub fn rollout_expert(
    config: &EnvConfig,
    episodes: usize,
    planner: ExpertPlanner,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    check_episodes(episodes)?;
    if !(planner.noise_std >= 0.0) {
        return Err(Error::Config(format!("noise_std must be >= 0, got {}", planner.noise_std)));
    }
    if !(planner.margin >= -config.inflation) {
        return Err(Error::Config(format!(
            "planner margin {} would cut into the bare obstacle (inflation {})",
            planner.margin, config.inflation
        )));
    }
    if let Some(hi) = planner.margin_max {
        if !(hi >= planner.margin) {
            return Err(Error::Config(format!("margin_max {hi} is below margin {}", planner.margin)));
        }
    }
    let noise = Normal::new(0.0, planner.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    (0..episodes as u64)
        .map(|i| {
            let episode_seed = derive_seed(seed, i);
            let margin = match planner.margin_max {
                Some(hi) => rng::seeded(derive_seed(episode_seed, 0x3A4)).random_range(planner.margin..=hi),
                None => planner.margin,
            };
            rollout(config, episode_seed, Provenance::Expert, |s, g, rng| {
                let a = expert_action(config, s, g, margin);
                if planner.noise_std > 0.0 {
                    a + Vec2::new(noise.sample(rng), noise.sample(rng))
                } else {
                    a
                }
            })
        })
        .collect()
}
