//! Kinematic goal-reaching environments with a single box obstacle.
//!
//! Two variants share the same observation layout:
//!
//! ```text
//! [agent_x, agent_y, object_x, object_y, rel_x, rel_y, center_x, center_y, half_x, half_y]
//! ```
//!
//! where `rel = object - agent`. In `Reach2D` the object coincides with the
//! agent, so `obs[2..4]` is always the achieved goal `phi(s)` and the entity
//! whose position drives the cost.

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const OBS_DIM: usize = 10;
pub const ACTION_DIM: usize = 2;
pub const GOAL_DIM: usize = 2;

const MAX_RESET_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vec2(pub [f64; 2]);

impl Vec2 {
    pub const ZERO: Vec2 = Vec2([0.0, 0.0]);

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2([x, y])
    }

    pub fn x(self) -> f64 {
        self.0[0]
    }

    pub fn y(self) -> f64 {
        self.0[1]
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1]
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Vec2 {
        Vec2([f(self.0[0]), f(self.0[1])])
    }

    /// Rescales to at most `max_norm` in Euclidean length.
    pub fn clamp_norm(self, max_norm: f64) -> Vec2 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self * (max_norm / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn from_slice(s: &[f64]) -> Vec2 {
        Vec2([s[0], s[1]])
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2([self.0[0] * k, self.0[1] * k])
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2([-self.0[0], -self.0[1]])
    }
}

/// Axis-aligned hazard region. The unsafe set is the closed box with
/// per-axis half-size `half_extents + inflation` around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleBox {
    pub center: Vec2,
    pub half_extents: Vec2,
    pub inflation: f64,
}

impl ObstacleBox {
    pub fn new(center: Vec2, half_extents: Vec2, inflation: f64) -> Result<Self> {
        let b = ObstacleBox {
            center,
            half_extents,
            inflation,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_extents.x() > 0.0 && self.half_extents.y() > 0.0) {
            return Err(Error::Config(format!(
                "obstacle half_extents must be positive, got {:?}",
                self.half_extents.0
            )));
        }
        if !(self.inflation >= 0.0) || !self.center.is_finite() {
            return Err(Error::Config(format!(
                "obstacle inflation must be >= 0 and center finite, got {} / {:?}",
                self.inflation, self.center.0
            )));
        }
        Ok(())
    }

    pub fn inflated_half_extents(&self) -> Vec2 {
        self.half_extents.map(|h| h + self.inflation)
    }

    /// Closed-set membership test on the inflated box.
    pub fn contains(&self, p: Vec2) -> bool {
        let h = self.inflated_half_extents();
        (p.x() - self.center.x()).abs() <= h.x() && (p.y() - self.center.y()).abs() <= h.y()
    }

    /// Whether the closed segment `a -> b` touches the inflated box (slab clipping).
    pub fn intersects_segment(&self, a: Vec2, b: Vec2) -> bool {
        let h = self.inflated_half_extents();
        let lo = self.center - h;
        let hi = self.center + h;
        let d = b - a;
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        for axis in 0..2 {
            let (p, dv) = (a.0[axis], d.0[axis]);
            if dv.abs() < 1e-15 {
                if p < lo.0[axis] || p > hi.0[axis] {
                    return false;
                }
            } else {
                let mut ta = (lo.0[axis] - p) / dv;
                let mut tb = (hi.0[axis] - p) / dv;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    /// Corners of the inflated box, each pushed diagonally outward by `margin`.
    pub fn detour_corners(&self, margin: f64) -> [Vec2; 4] {
        let h = self.inflated_half_extents().map(|v| v + margin);
        let c = self.center;
        [
            c + Vec2::new(-h.x(), -h.y()),
            c + Vec2::new(h.x(), -h.y()),
            c + Vec2::new(h.x(), h.y()),
            c + Vec2::new(-h.x(), h.y()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Reach2D,
    Push2D,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reach2d" => Ok(Variant::Reach2D),
            "push2d" => Ok(Variant::Push2D),
            other => Err(Error::Config(format!("unknown env variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub low: Vec2,
    pub high: Vec2,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            low: Vec2::new(0.0, 0.0),
            high: Vec2::new(1.0, 1.0),
        }
    }
}

impl Workspace {
    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x().clamp(self.low.x(), self.high.x()),
            p.y().clamp(self.low.y(), self.high.y()),
        )
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (self.low.x()..=self.high.x()).contains(&p.x())
            && (self.low.y()..=self.high.y()).contains(&p.y())
    }

    fn sample_inset(&self, inset: f64, rng: &mut rng::Rng) -> Vec2 {
        Vec2::new(
            rng.random_range(self.low.x() + inset..=self.high.x() - inset),
            rng.random_range(self.low.y() + inset..=self.high.y() - inset),
        )
    }

    fn contains_inset(&self, p: Vec2, inset: f64) -> bool {
        p.x() >= self.low.x() + inset
            && p.x() <= self.high.x() - inset
            && p.y() >= self.low.y() + inset
            && p.y() <= self.high.y() - inset
    }
}

/// Environment configuration. Serialized as a flat JSON object; fields
/// beyond the core set have defaults so minimal configs stay valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub variant: Variant,
    pub horizon: usize,
    pub action_max: f64,
    pub goal_tolerance: f64,
    pub inflation: f64,
    #[serde(default)]
    pub workspace: Workspace,
    #[serde(default)]
    pub seed: u64,
    /// Probability that the start-to-goal segment crosses the inflated obstacle.
    #[serde(default = "default_p_block")]
    pub p_block: f64,
    /// Push2D: agent-object contact radius.
    #[serde(default = "default_contact_radius")]
    pub contact_radius: f64,
    /// Uniform range for each obstacle half-extent.
    #[serde(default = "default_half_extent_range")]
    pub half_extent_range: [f64; 2],
    /// Uniform range for the start-to-goal distance of the goal entity.
    #[serde(default = "default_goal_distance_range")]
    pub goal_distance_range: [f64; 2],
    /// Minimum per-axis clearance of start and goal from the inflated obstacle.
    #[serde(default = "default_clearance")]
    pub clearance: f64,
}

fn default_p_block() -> f64 {
    0.7
}
fn default_contact_radius() -> f64 {
    0.04
}
fn default_half_extent_range() -> [f64; 2] {
    [0.06, 0.1]
}
fn default_goal_distance_range() -> [f64; 2] {
    [0.45, 0.75]
}
fn default_clearance() -> f64 {
    0.05
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::reach2d()
    }
}

impl EnvConfig {
    pub fn reach2d() -> Self {
        EnvConfig {
            variant: Variant::Reach2D,
            horizon: 50,
            action_max: 0.05,
            goal_tolerance: 0.05,
            inflation: 0.05,
            workspace: Workspace::default(),
            seed: 0,
            p_block: default_p_block(),
            contact_radius: default_contact_radius(),
            half_extent_range: default_half_extent_range(),
            goal_distance_range: default_goal_distance_range(),
            clearance: default_clearance(),
        }
    }

    pub fn push2d() -> Self {
        EnvConfig {
            variant: Variant::Push2D,
            ..EnvConfig::reach2d()
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Reach2D => EnvConfig::reach2d(),
            Variant::Push2D => EnvConfig::push2d(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon < 1 {
            return bad("horizon must be >= 1".into());
        }
        if !(self.action_max > 0.0) {
            return bad(format!("action_max must be > 0, got {}", self.action_max));
        }
        if !(self.goal_tolerance > 0.0) || !(self.inflation > 0.0) {
            return bad("goal_tolerance and inflation must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.p_block) {
            return bad(format!("p_block must lie in [0,1], got {}", self.p_block));
        }
        let ws = &self.workspace;
        if !(ws.high.x() > ws.low.x() && ws.high.y() > ws.low.y()) {
            return bad("workspace high must exceed low on both axes".into());
        }
        let [h0, h1] = self.half_extent_range;
        if !(h0 > 0.0 && h1 >= h0) {
            return bad("half_extent_range must be positive and ordered".into());
        }
        let [d0, d1] = self.goal_distance_range;
        if !(d0 > 0.0 && d1 >= d0) {
            return bad("goal_distance_range must be positive and ordered".into());
        }
        if !(self.contact_radius > 0.0) || !(self.clearance >= 0.0) {
            return bad("contact_radius must be > 0 and clearance >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub target: Vec2,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub variant: Variant,
    pub agent_pos: Vec2,
    pub object_pos: Vec2,
    pub obstacle: ObstacleBox,
    pub step_index: usize,
}

impl EnvState {
    pub fn observation(&self) -> [f64; OBS_DIM] {
        let rel = self.object_pos - self.agent_pos;
        [
            self.agent_pos.x(),
            self.agent_pos.y(),
            self.object_pos.x(),
            self.object_pos.y(),
            rel.x(),
            rel.y(),
            self.obstacle.center.x(),
            self.obstacle.center.y(),
            self.obstacle.half_extents.x(),
            self.obstacle.half_extents.y(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: u8,
    pub cost: u8,
    pub done: bool,
}

/// State-to-goal mapping.
pub fn phi(state: &EnvState) -> Vec2 {
    match state.variant {
        Variant::Reach2D => state.agent_pos,
        Variant::Push2D => state.object_pos,
    }
}

/// Achieved goal read straight off an observation vector.
pub fn phi_obs(obs: &[f64]) -> Vec2 {
    Vec2::new(obs[2], obs[3])
}

pub fn cost_of(state: &EnvState) -> u8 {
    u8::from(state.obstacle.contains(phi(state)))
}

/// Cost of an observation given the (inflated) obstacle it was generated with.
pub fn cost_of_obs(obs: &[f64], obstacle: &ObstacleBox) -> u8 {
    u8::from(obstacle.contains(phi_obs(obs)))
}

pub fn reward_for(achieved: Vec2, goal: &Goal) -> u8 {
    u8::from(achieved.distance(goal.target) <= goal.tolerance)
}

/// Samples an initial state and goal. Start, goal, and obstacle are drawn so
/// that with probability `p_block` the start-to-goal segment of the goal
/// entity crosses the inflated obstacle.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<(EnvState, Goal)> {
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let ws = config.workspace;
    let blocked = rng.random_bool(config.p_block);
    let inset = config.goal_tolerance;
    let [h_lo, h_hi] = config.half_extent_range;
    let [d_lo, d_hi] = config.goal_distance_range;

    // Pushed objects need room on every side for the agent to get behind them.
    let start_inset = match config.variant {
        Variant::Reach2D => inset,
        Variant::Push2D => inset.max(2.5 * config.contact_radius),
    };

    for _ in 0..MAX_RESET_ATTEMPTS {
        let start = ws.sample_inset(start_inset, &mut rng);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let dist = rng.random_range(d_lo..=d_hi);
        let target = start + Vec2::new(angle.cos(), angle.sin()) * dist;
        if !ws.contains_inset(target, inset) {
            continue;
        }
        let half = Vec2::new(rng.random_range(h_lo..=h_hi), rng.random_range(h_lo..=h_hi));
        let center = if blocked {
            let along = start + (target - start) * rng.random_range(0.35..=0.65);
            let dir = (target - start) * (1.0 / dist);
            let normal = Vec2::new(-dir.y(), dir.x());
            let offset = rng.random_range(-0.5..=0.5) * half.x().min(half.y());
            along + normal * offset
        } else {
            Vec2::new(
                rng.random_range(ws.low.x() + half.x()..=ws.high.x() - half.x()),
                rng.random_range(ws.low.y() + half.y()..=ws.high.y() - half.y()),
            )
        };
        let obstacle = ObstacleBox::new(center, half, config.inflation)?;
        let clear = ObstacleBox {
            inflation: config.inflation + config.clearance,
            ..obstacle
        };
        if clear.contains(start) || clear.contains(target) {
            continue;
        }
        if obstacle.intersects_segment(start, target) != blocked {
            continue;
        }

        let agent_pos = match config.variant {
            Variant::Reach2D => start,
            Variant::Push2D => {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let r = rng.random_range(2.0 * config.contact_radius..=3.5 * config.contact_radius);
                let p = start + Vec2::new(a.cos(), a.sin()) * r;
                if !ws.contains(p) {
                    continue;
                }
                p
            }
        };
        let state = EnvState {
            variant: config.variant,
            agent_pos,
            object_pos: start,
            obstacle,
            step_index: 0,
        };
        let goal = Goal {
            target,
            tolerance: config.goal_tolerance,
        };
        return Ok((state, goal));
    }
    Err(Error::Config(format!(
        "reset rejection sampling exceeded {MAX_RESET_ATTEMPTS} attempts; workspace too crowded"
    )))
}

/// Advances one step. Actions are clipped per component to `[-action_max, action_max]`.
pub fn step(config: &EnvConfig, state: &EnvState, action: Vec2, goal: &Goal) -> StepOutcome {
    let a = action.map(|v| {
        if v.is_nan() {
            0.0
        } else {
            v.clamp(-config.action_max, config.action_max)
        }
    });
    let ws = config.workspace;
    let agent_pos = ws.clamp(state.agent_pos + a);
    let object_pos = match state.variant {
        Variant::Reach2D => agent_pos,
        Variant::Push2D => {
            let gap = state.object_pos - agent_pos;
            let d = gap.norm();
            if d < config.contact_radius {
                let dir = if d > 1e-12 {
                    gap * (1.0 / d)
                } else if a.norm() > 0.0 {
                    a * (1.0 / a.norm())
                } else {
                    Vec2::new(1.0, 0.0)
                };
                ws.clamp(agent_pos + dir * config.contact_radius)
            } else {
                state.object_pos
            }
        }
    };
    let next = EnvState {
        agent_pos,
        object_pos,
        step_index: state.step_index + 1,
        ..*state
    };
    StepOutcome {
        reward: reward_for(phi(&next), goal),
        cost: cost_of(&next),
        done: next.step_index >= config.horizon,
        state: next,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reach_state(pos: Vec2, obstacle: ObstacleBox) -> EnvState {
        EnvState {
            variant: Variant::Reach2D,
            agent_pos: pos,
            object_pos: pos,
            obstacle,
            step_index: 0,
        }
    }

    fn unit_box() -> ObstacleBox {
        ObstacleBox::new(Vec2::new(0.5, 0.5), Vec2::new(0.1, 0.1), 0.05).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = EnvConfig::reach2d();
        assert_eq!(reset(&cfg, 7).unwrap(), reset(&cfg, 7).unwrap());
        assert_ne!(reset(&cfg, 7).unwrap().1, reset(&cfg, 8).unwrap().1);
    }

    /// Independent of the slab test: dense sampling along the segment.
    fn segment_hits_box_by_sampling(b: &ObstacleBox, a: Vec2, c: Vec2) -> bool {
        (0..=4000).any(|i| b.contains(a + (c - a) * (i as f64 / 4000.0)))
    }

    #[test]
    fn p_block_one_always_blocks() {
        let cfg = EnvConfig {
            p_block: 1.0,
            ..EnvConfig::reach2d()
        };
        for seed in 0..300 {
            let (s, g) = reset(&cfg, seed).unwrap();
            assert!(s.obstacle.intersects_segment(phi(&s), g.target), "seed {seed}");
            assert!(segment_hits_box_by_sampling(&s.obstacle, phi(&s), g.target));
        }
    }

    #[test]
    fn p_block_zero_never_blocks() {
        let cfg = EnvConfig {
            p_block: 0.0,
            ..EnvConfig::reach2d()
        };
        let blocked = (0..1000)
            .filter(|&seed| {
                let (s, g) = reset(&cfg, seed).unwrap();
                segment_hits_box_by_sampling(&s.obstacle, phi(&s), g.target)
            })
            .count();
        assert_eq!(blocked, 0);
    }

    #[test]
    fn start_and_goal_are_safe_and_in_workspace() {
        for cfg in [EnvConfig::reach2d(), EnvConfig::push2d()] {
            for seed in 0..300 {
                let (s, g) = reset(&cfg, seed).unwrap();
                assert_eq!(cost_of(&s), 0);
                assert!(!s.obstacle.contains(g.target));
                assert!(cfg.workspace.contains(s.agent_pos));
                assert!(cfg.workspace.contains(s.object_pos));
                assert!(cfg.workspace.contains(g.target));
            }
        }
    }

    #[test]
    fn crowded_workspace_is_a_config_error() {
        let cfg = EnvConfig {
            half_extent_range: [0.45, 0.5],
            ..EnvConfig::reach2d()
        };
        assert!(matches!(reset(&cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn zero_action_keeps_position() {
        let cfg = EnvConfig::reach2d();
        let (s, g) = reset(&cfg, 3).unwrap();
        let out = step(&cfg, &s, Vec2::ZERO, &g);
        assert_eq!(out.state.agent_pos, s.agent_pos);
        assert_eq!(out.cost, cost_of(&s));
        assert_eq!(out.reward, reward_for(phi(&s), &g));
    }

    #[test]
    fn in_bounds_addition() {
        let cfg = EnvConfig {
            action_max: 0.25,
            ..EnvConfig::reach2d()
        };
        let far = ObstacleBox::new(Vec2::new(0.9, 0.9), Vec2::new(0.05, 0.05), 0.05).unwrap();
        let s = reach_state(Vec2::new(0.1, 0.5), far);
        let g = Goal {
            target: Vec2::new(0.3, 0.5),
            tolerance: 0.05,
        };
        let out = step(&cfg, &s, Vec2::new(0.2, 0.0), &g);
        assert!((out.state.agent_pos.x() - 0.3).abs() < 1e-12);
        assert_eq!(out.state.agent_pos.y(), 0.5);
        assert_eq!(out.reward, 1);
    }

    #[test]
    fn actions_are_clipped_and_positions_stay_in_workspace() {
        let cfg = EnvConfig::reach2d();
        let s = reach_state(Vec2::new(0.01, 0.99), unit_box());
        let g = Goal {
            target: Vec2::new(0.5, 0.5),
            tolerance: 0.05,
        };
        let out = step(&cfg, &s, Vec2::new(-3.0, 3.0), &g);
        assert_eq!(out.state.agent_pos, Vec2::new(0.0, 1.0));
        let out = step(&cfg, &s, Vec2::new(1.0, -1.0), &g);
        assert!((out.state.agent_pos.x() - 0.06).abs() < 1e-12);
        assert!((out.state.agent_pos.y() - 0.94).abs() < 1e-12);
    }

    #[test]
    fn reward_at_goal() {
        let cfg = EnvConfig::reach2d();
        let s = reach_state(Vec2::new(0.2, 0.2), unit_box());
        for tol in [1e-9, 0.01, 0.3] {
            let g = Goal {
                target: Vec2::new(0.2, 0.2),
                tolerance: tol,
            };
            assert_eq!(step(&cfg, &s, Vec2::ZERO, &g).reward, 1);
        }
    }

    #[test]
    fn reward_matches_distance_on_grid() {
        let cfg = EnvConfig::reach2d();
        let g = Goal {
            target: Vec2::new(0.52, 0.31),
            tolerance: 0.05,
        };
        let mut hits = 0;
        for i in 0..50 {
            for j in 0..50 {
                let p = Vec2::new(i as f64 / 49.0, j as f64 / 49.0);
                let s = reach_state(p, unit_box());
                let r = step(&cfg, &s, Vec2::ZERO, &g).reward;
                let d2 = (p.x() - 0.52).powi(2) + (p.y() - 0.31).powi(2);
                assert_eq!(r == 1, d2 <= 0.05 * 0.05, "{p:?}");
                hits += r as usize;
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn cost_examples() {
        let b = unit_box();
        assert_eq!(cost_of(&reach_state(b.center, b)), 1);
        assert_eq!(cost_of(&reach_state(Vec2::new(0.64, 0.5), b)), 1);
        assert_eq!(cost_of(&reach_state(Vec2::new(0.9, 0.9), b)), 0);
        assert_eq!(cost_of(&reach_state(Vec2::new(0.66, 0.5), b)), 0);
    }

    #[test]
    fn cost_boundary_is_closed() {
        // Dyadic values so the boundary is exactly representable.
        let b = ObstacleBox::new(Vec2::new(0.5, 0.5), Vec2::new(0.125, 0.125), 0.0625).unwrap();
        assert_eq!(cost_of(&reach_state(Vec2::new(0.6875, 0.3125), b)), 1);
        assert_eq!(cost_of(&reach_state(Vec2::new(0.6875 + 1e-9, 0.5), b)), 0);
    }

    #[test]
    fn push_cost_follows_object() {
        let b = unit_box();
        let s = EnvState {
            variant: Variant::Push2D,
            agent_pos: b.center,
            object_pos: Vec2::new(0.9, 0.9),
            obstacle: b,
            step_index: 0,
        };
        assert_eq!(cost_of(&s), 0);
        assert_eq!(phi(&s), Vec2::new(0.9, 0.9));
    }

    #[test]
    fn phi_projections() {
        let b = unit_box();
        let r = reach_state(Vec2::new(0.2, 0.3), b);
        assert_eq!(phi(&r), Vec2::new(0.2, 0.3));
        assert_eq!(phi_obs(&r.observation()), Vec2::new(0.2, 0.3));
        let p = EnvState {
            variant: Variant::Push2D,
            agent_pos: Vec2::new(0.3, 0.3),
            object_pos: Vec2::new(0.7, 0.1),
            obstacle: b,
            step_index: 0,
        };
        assert_eq!(phi(&p), Vec2::new(0.7, 0.1));
        assert_eq!(phi_obs(&p.observation()), Vec2::new(0.7, 0.1));
    }

    #[test]
    fn push_contact_displaces_object() {
        let cfg = EnvConfig::push2d();
        let far = ObstacleBox::new(Vec2::new(0.9, 0.9), Vec2::new(0.05, 0.05), 0.05).unwrap();
        let s = EnvState {
            variant: Variant::Push2D,
            agent_pos: Vec2::new(0.40, 0.5),
            object_pos: Vec2::new(0.45, 0.5),
            obstacle: far,
            step_index: 0,
        };
        let g = Goal {
            target: Vec2::new(0.8, 0.5),
            tolerance: 0.05,
        };
        let out = step(&cfg, &s, Vec2::new(0.03, 0.0), &g);
        assert!((out.state.agent_pos.x() - 0.43).abs() < 1e-12);
        assert!((out.state.object_pos.x() - 0.47).abs() < 1e-12);
        assert_eq!(out.state.object_pos.y(), 0.5);
        // No contact: object stays put.
        let out = step(&cfg, &s, Vec2::new(-0.03, 0.0), &g);
        assert_eq!(out.state.object_pos, s.object_pos);
    }

    #[test]
    fn horizon_terminates_episode() {
        let cfg = EnvConfig {
            horizon: 3,
            ..EnvConfig::reach2d()
        };
        let (mut s, g) = reset(&cfg, 0).unwrap();
        let mut dones = vec![];
        for _ in 0..3 {
            let out = step(&cfg, &s, Vec2::new(0.01, 0.0), &g);
            dones.push(out.done);
            s = out.state;
        }
        assert_eq!(dones, vec![false, false, true]);
    }

    #[test]
    fn segment_intersection() {
        let b = unit_box();
        assert!(b.intersects_segment(Vec2::new(0.1, 0.5), Vec2::new(0.9, 0.5)));
        assert!(!b.intersects_segment(Vec2::new(0.1, 0.1), Vec2::new(0.9, 0.1)));
        assert!(!b.intersects_segment(Vec2::new(0.1, 0.5), Vec2::new(0.3, 0.5)));
        assert!(b.intersects_segment(Vec2::new(0.5, 0.1), Vec2::new(0.5, 0.9)));
        assert!(b.intersects_segment(b.center, b.center));
    }

    #[test]
    fn config_json_field_names() {
        let cfg = EnvConfig::reach2d();
        let v = serde_json::to_value(&cfg).unwrap();
        for k in ["variant", "horizon", "action_max", "goal_tolerance", "inflation", "workspace", "seed"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
        assert_eq!(v["variant"], "reach2d");
        let minimal = r#"{"variant":"push2d","horizon":50,"action_max":0.05,"goal_tolerance":0.05,"inflation":0.05}"#;
        let parsed: EnvConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed, EnvConfig::push2d());
    }
}
