//! Proposal backends: sources of per-rollout anchors and goals.
//!
//! Everything downstream only sees the [`Proposer`] trait, so a learned
//! trajectory predictor can be dropped in behind it.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{headings_along, AgentState, Proposal, SceneContext, Trajectory, Vec2};
use crate::seed::rng_from_seed;

/// What a single proposal draw is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProposalRequest {
    pub horizon: usize,
    /// Index of the rollout within one planning step.
    pub rollout_index: usize,
    pub seed: u64,
}

pub trait Proposer: Send + Sync {
    /// Draws a joint proposal. `histories[i]` ends with agent `i`'s current
    /// state; the returned anchors start one step after it.
    fn propose(
        &self,
        context: &SceneContext,
        histories: &[Vec<AgentState>],
        request: &ProposalRequest,
    ) -> Result<Proposal>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProposerKind {
    ConstantVelocity,
    GoalDirected,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposerConfig {
    pub kind: ProposerKind,
    pub position_noise_sigma: f64,
    pub goal_jitter_sigma: f64,
    pub speed_scale_range: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_path: Option<PathBuf>,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        Self {
            kind: ProposerKind::GoalDirected,
            position_noise_sigma: 0.3,
            goal_jitter_sigma: 3.0,
            speed_scale_range: (0.6, 1.2),
            replay_path: None,
        }
    }
}

impl ProposerConfig {
    pub fn constant_velocity(position_noise_sigma: f64) -> Self {
        Self {
            kind: ProposerKind::ConstantVelocity,
            position_noise_sigma,
            goal_jitter_sigma: 0.0,
            speed_scale_range: (1.0, 1.0),
            replay_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.speed_scale_range;
        let sig_ok = |s: f64| s.is_finite() && s >= 0.0;
        if !(sig_ok(self.position_noise_sigma) && sig_ok(self.goal_jitter_sigma)) {
            return Err(Error::InvalidInput("proposer sigmas must be finite and >= 0".into()));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "speed_scale_range must satisfy 0 < min <= max, got ({lo}, {hi})"
            )));
        }
        if self.kind == ProposerKind::Replay && self.replay_path.is_none() {
            return Err(Error::InvalidInput("replay proposer needs replay_path".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Proposer>> {
        self.validate()?;
        Ok(match self.kind {
            ProposerKind::ConstantVelocity => Box::new(ConstantVelocity {
                position_noise_sigma: self.position_noise_sigma,
            }),
            ProposerKind::GoalDirected => Box::new(GoalDirected {
                position_noise_sigma: self.position_noise_sigma,
                goal_jitter_sigma: self.goal_jitter_sigma,
                speed_scale_range: self.speed_scale_range,
            }),
            ProposerKind::Replay => {
                let path = self.replay_path.as_ref().expect("validated");
                Box::new(Replay::new(crate::scenario_io::load_proposals(path)?))
            }
        })
    }
}

fn check_histories(context: &SceneContext, histories: &[Vec<AgentState>], horizon: usize) -> Result<()> {
    if horizon < 2 {
        return Err(Error::InvalidInput(format!(
            "proposal horizon must be >= 2, got {horizon}"
        )));
    }
    if histories.len() != context.num_agents() {
        return Err(Error::ContractViolation(format!(
            "{} histories for {} agents",
            histories.len(),
            context.num_agents()
        )));
    }
    if let Some(i) = histories.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!("history of agent {i} is empty")));
    }
    Ok(())
}

fn gaussian(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated"))
}

/// Anchors from noisy positions, with the last one doubling as the goal.
fn finish_agent(
    start: Vec2,
    mut positions: Vec<Vec2>,
    noise: Option<&Normal<f64>>,
    rng: &mut impl Rng,
    dt: f64,
) -> Result<(Trajectory, Vec2)> {
    if let Some(n) = noise {
        for p in &mut positions {
            p.x += n.sample(rng);
            p.y += n.sample(rng);
        }
    }
    let goal = *positions.last().expect("horizon >= 2");
    Ok((Trajectory::from_positions(start, &positions, dt)?, goal))
}

fn assemble(parts: Vec<(Trajectory, Vec2)>) -> Proposal {
    let (anchors, goals) = parts.into_iter().unzip();
    Proposal { anchors, goals }
}

/// Linear extrapolation of each agent's current velocity plus i.i.d.
/// Gaussian position noise.
#[derive(Debug, Clone)]
pub struct ConstantVelocity {
    pub position_noise_sigma: f64,
}

impl Proposer for ConstantVelocity {
    fn propose(
        &self,
        context: &SceneContext,
        histories: &[Vec<AgentState>],
        request: &ProposalRequest,
    ) -> Result<Proposal> {
        check_histories(context, histories, request.horizon)?;
        let mut rng = rng_from_seed(request.seed);
        let noise = gaussian(self.position_noise_sigma);
        let dt = context.dt();
        let parts = histories
            .iter()
            .map(|h| {
                let cur = h.last().expect("checked");
                let (p0, v) = (cur.position(), cur.velocity());
                let positions = (1..=request.horizon).map(|t| p0 + v * (dt * t as f64)).collect();
                finish_agent(p0, positions, noise.as_ref(), &mut rng, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(assemble(parts))
    }
}

/// Constant-speed travel toward a jittered intent point, along a circular
/// arc tangent to the current heading when the target lies ahead and a
/// straight line otherwise. Agents stop once they reach the target.
#[derive(Debug, Clone)]
pub struct GoalDirected {
    pub position_noise_sigma: f64,
    pub goal_jitter_sigma: f64,
    pub speed_scale_range: (f64, f64),
}

impl Proposer for GoalDirected {
    fn propose(
        &self,
        context: &SceneContext,
        histories: &[Vec<AgentState>],
        request: &ProposalRequest,
    ) -> Result<Proposal> {
        check_histories(context, histories, request.horizon)?;
        let mut rng = rng_from_seed(request.seed);
        let noise = gaussian(self.position_noise_sigma);
        let jitter = gaussian(self.goal_jitter_sigma);
        let dt = context.dt();
        let horizon_time = dt * request.horizon as f64;
        let (lo, hi) = self.speed_scale_range;
        let parts = histories
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let cur = h.last().expect("checked");
                let p0 = cur.position();
                let heading = current_heading(context, i, h);
                let mut target = context.intent(i).unwrap_or(p0 + cur.velocity() * horizon_time);
                if let Some(j) = &jitter {
                    target.x += j.sample(&mut rng);
                    target.y += j.sample(&mut rng);
                }
                let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let speed = cur.speed() * scale;
                let path = PathToGoal::new(p0, heading, target);
                let positions = (1..=request.horizon).map(|t| path.at(speed * dt * t as f64)).collect();
                finish_agent(p0, positions, noise.as_ref(), &mut rng, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(assemble(parts))
    }
}

fn current_heading(context: &SceneContext, agent: usize, history: &[AgentState]) -> f64 {
    headings_along(history, context.fallback_heading(agent))
        .last()
        .copied()
        .unwrap_or(0.0)
}

/// Arc-length parametrized path from a start pose to a target point.
#[derive(Debug, Clone, Copy)]
struct PathToGoal {
    start: Vec2,
    heading: f64,
    target: Vec2,
    /// Signed curvature; zero for a straight segment.
    curvature: f64,
    length: f64,
}

impl PathToGoal {
    fn new(start: Vec2, heading: f64, target: Vec2) -> Self {
        let d = target - start;
        let dist = d.norm();
        let dir = Vec2::new(heading.cos(), heading.sin());
        let cross = dir.x * d.y - dir.y * d.x;
        let dot = dir.dot(&d);
        if dist < 1e-9 || dot <= 0.0 || cross.abs() < 1e-9 * dist {
            return Self {
                start,
                heading: d.y.atan2(d.x),
                target,
                curvature: 0.0,
                length: dist,
            };
        }
        // Circle tangent to `dir` at `start` through `target`.
        let curvature = 2.0 * cross / (dist * dist);
        let turn = 2.0 * cross.atan2(dot);
        Self {
            start,
            heading,
            target,
            curvature,
            length: (turn / curvature).abs(),
        }
    }

    fn at(&self, s: f64) -> Vec2 {
        if s >= self.length {
            return self.target;
        }
        if self.curvature == 0.0 {
            return self.start + Vec2::new(self.heading.cos(), self.heading.sin()) * s;
        }
        let k = self.curvature;
        let h1 = self.heading + k * s;
        self.start + Vec2::new((h1.sin() - self.heading.sin()) / k, (self.heading.cos() - h1.cos()) / k)
    }
}

/// Serves stored proposals, the `j`-th rollout getting the `j`-th record.
#[derive(Debug, Clone)]
pub struct Replay {
    proposals: Vec<Proposal>,
}

impl Replay {
    pub fn new(proposals: Vec<Proposal>) -> Self {
        Self { proposals }
    }
}

impl Proposer for Replay {
    fn propose(
        &self,
        context: &SceneContext,
        histories: &[Vec<AgentState>],
        request: &ProposalRequest,
    ) -> Result<Proposal> {
        check_histories(context, histories, request.horizon)?;
        let stored = self.proposals.get(request.rollout_index).ok_or_else(|| {
            Error::InvalidInput(format!(
                "replay exhausted: rollout {} requested, {} stored",
                request.rollout_index,
                self.proposals.len()
            ))
        })?;
        if stored.anchors.len() != context.num_agents() {
            return Err(Error::InvalidInput(format!(
                "replayed proposal has {} agents, scene has {}",
                stored.anchors.len(),
                context.num_agents()
            )));
        }
        let mut out = stored.clone();
        for a in &mut out.anchors {
            if a.len() < request.horizon {
                return Err(Error::InvalidInput(format!(
                    "replayed anchors cover {} steps, horizon is {}",
                    a.len(),
                    request.horizon
                )));
            }
            a.states.truncate(request.horizon);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AgentGeometry, SceneAgent};

    fn ctx(states: &[AgentState], intents: &[Option<Vec2>]) -> SceneContext {
        let agents = states
            .iter()
            .zip(intents)
            .enumerate()
            .map(|(i, (s, g))| SceneAgent {
                geometry: AgentGeometry::with_default_extent(format!("a{i}")),
                history: vec![*s],
                intent: *g,
            })
            .collect();
        SceneContext::new(0.1, agents, vec![], vec![]).unwrap()
    }

    fn req(horizon: usize, seed: u64) -> ProposalRequest {
        ProposalRequest {
            horizon,
            rollout_index: 0,
            seed,
        }
    }

    #[test]
    fn constant_velocity_exact() {
        let c = ctx(&[AgentState::new(0.0, 0.0, 1.0, 0.0)], &[None]);
        let p = ConstantVelocity {
            position_noise_sigma: 0.0,
        }
        .propose(&c, c.histories(), &req(3, 1))
        .unwrap();
        let xs: Vec<f64> = p.anchors[0].states.iter().map(|s| s.x).collect();
        for (x, e) in xs.iter().zip([0.1, 0.2, 0.3]) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!(p.anchors[0]
            .states
            .iter()
            .all(|s| s.y == 0.0 && (s.vx - 1.0).abs() < 1e-12));
        assert!((p.goals[0] - Vec2::new(0.3, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn stationary_agent_stays_put() {
        let c = ctx(&[AgentState::new(2.0, -1.0, 0.0, 0.0)], &[None]);
        for prop in [
            ProposerConfig::constant_velocity(0.0).build().unwrap(),
            ProposerConfig {
                position_noise_sigma: 0.0,
                goal_jitter_sigma: 0.0,
                ..Default::default()
            }
            .build()
            .unwrap(),
        ] {
            let p = prop.propose(&c, c.histories(), &req(5, 9)).unwrap();
            assert!(p.anchors[0].states.iter().all(|s| s.position() == Vec2::new(2.0, -1.0)));
        }
    }

    #[test]
    fn noise_is_unbiased() {
        let c = ctx(&[AgentState::new(0.0, 0.0, 1.0, 0.0)], &[None]);
        let sigma = 0.5;
        let prop = ConstantVelocity {
            position_noise_sigma: sigma,
        };
        let draws = 10_000;
        let mut sum = 0.0;
        for seed in 0..draws {
            let p = prop.propose(&c, c.histories(), &req(2, seed)).unwrap();
            sum += p.anchors[0].states[0].x - 0.1;
        }
        let mean = sum / draws as f64;
        assert!(mean.abs() < 3.0 * sigma / 100.0, "mean {mean}");
    }

    #[test]
    fn seeds_control_diversity() {
        let c = ctx(
            &[AgentState::new(0.0, 0.0, 5.0, 0.0), AgentState::new(0.0, 4.0, 5.0, 0.0)],
            &[Some(Vec2::new(40.0, 0.0)), None],
        );
        let prop = ProposerConfig::default().build().unwrap();
        let a = prop.propose(&c, c.histories(), &req(10, 1)).unwrap();
        let b = prop.propose(&c, c.histories(), &req(10, 1)).unwrap();
        let d = prop.propose(&c, c.histories(), &req(10, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
        assert!(a.validate(2, 10).is_ok());
    }

    #[test]
    fn arc_reaches_target_and_starts_tangent() {
        let path = PathToGoal::new(Vec2::zeros(), 0.0, Vec2::new(10.0, 4.0));
        assert!(path.curvature > 0.0);
        assert!((path.at(path.length) - Vec2::new(10.0, 4.0)).norm() < 1e-12);
        // The closed-form arc, not the clamp, lands on the target.
        let just_before = path.at(path.length * (1.0 - 1e-12));
        assert!((just_before - Vec2::new(10.0, 4.0)).norm() < 1e-9);
        let early = path.at(1e-3);
        assert!(early.y.abs() < 1e-5 && (early.x - 1e-3).abs() < 1e-8);
        // Points are equally spaced in arc length, so chords are shorter than steps.
        let a = path.at(1.0);
        assert!((a.norm() - 1.0).abs() < 1e-2 && a.norm() <= 1.0);
    }

    #[test]
    fn replay_serves_indexed_records_and_errors_when_exhausted() {
        let c = ctx(&[AgentState::new(0.0, 0.0, 1.0, 0.0)], &[None]);
        let stored = ConstantVelocity {
            position_noise_sigma: 0.2,
        }
        .propose(&c, c.histories(), &req(6, 4))
        .unwrap();
        let replay = Replay::new(vec![stored.clone()]);
        let p = replay.propose(&c, c.histories(), &req(4, 0)).unwrap();
        assert_eq!(p.anchors[0].states[..], stored.anchors[0].states[..4]);
        let err = replay
            .propose(
                &c,
                c.histories(),
                &ProposalRequest {
                    horizon: 4,
                    rollout_index: 1,
                    seed: 0,
                },
            )
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        assert!(replay.propose(&c, c.histories(), &req(7, 0)).is_err());
    }

    #[test]
    fn config_validation() {
        let c = ProposerConfig {
            speed_scale_range: (0.0, 1.0),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ProposerConfig {
            kind: ProposerKind::Replay,
            ..Default::default()
        };
        assert!(c.build().is_err());
    }
}
