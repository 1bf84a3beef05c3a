//! Small synthetic scenes: head-on encounters, crossings, merges and
//! parked agents.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ScenarioAgent, ScenarioFile, SCENARIO_SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::geometry::AgentState;
use crate::seed::{derive_seed, rng_from_seed, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    HeadOn,
    Crossing,
    Merge,
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    /// Used by `crossing` (2 or 4) and `stationary` (any >= 1).
    pub num_agents: usize,
    pub speed: f64,
    /// Initial distance between the head-on pair, and approach distance for
    /// the other layouts.
    pub separation: f64,
    pub road_half_width: f64,
    /// Crossing agents after the first start this much further out.
    pub crossing_offset: f64,
    /// Uniform jitter applied to start positions (m) and, relatively, speeds.
    pub jitter: f64,
    pub history_len: usize,
    pub future_steps: usize,
    pub dt: f64,
    pub length: f64,
    pub width: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            num_agents: 2,
            speed: 8.0,
            separation: 50.0,
            road_half_width: 6.0,
            crossing_offset: 15.0,
            jitter: 0.5,
            history_len: 11,
            future_steps: 80,
            dt: 0.1,
            length: 4.8,
            width: 2.0,
        }
    }
}

impl GeneratorParams {
    fn validate(&self, kind: ScenarioKind) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let ok = pos(self.speed)
            && pos(self.separation)
            && pos(self.road_half_width)
            && pos(self.dt)
            && pos(self.width)
            && self.length >= self.width
            && self.jitter >= 0.0
            && self.crossing_offset >= 0.0
            && self.history_len >= 1;
        if !ok {
            return Err(Error::InvalidInput(format!("invalid generator parameters: {self:?}")));
        }
        match kind {
            ScenarioKind::Crossing if !matches!(self.num_agents, 2 | 4) => {
                Err(Error::InvalidInput("crossing supports 2 or 4 agents".into()))
            }
            ScenarioKind::Stationary if self.num_agents == 0 => {
                Err(Error::InvalidInput("stationary needs >= 1 agent".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Constant-velocity history ending at `(x, y)`.
fn cv_history(x: f64, y: f64, vx: f64, vy: f64, len: usize, dt: f64) -> Vec<AgentState> {
    (0..len)
        .map(|k| {
            let back = (len - 1 - k) as f64 * dt;
            AgentState::new(x - vx * back, y - vy * back, vx, vy)
        })
        .collect()
}

fn cv_future(s: &AgentState, steps: usize, dt: f64) -> Vec<AgentState> {
    (1..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            AgentState::new(s.x + s.vx * t, s.y + s.vy * t, s.vx, s.vy)
        })
        .collect()
}

/// Constant forward speed with a smooth lateral shift of `offset` completed
/// after `shift_steps`, measured along the left normal of the motion.
fn shifted_future(s: &AgentState, offset: f64, shift_steps: usize, steps: usize, dt: f64) -> Vec<AgentState> {
    let speed = s.speed();
    let (ux, uy) = (s.vx / speed, s.vy / speed);
    let (lx, ly) = (-uy, ux);
    let dur = shift_steps as f64 * dt;
    (1..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            let (lat, lat_rate) = if t < dur {
                let phase = std::f64::consts::PI * t / dur;
                (
                    0.5 * offset * (1.0 - phase.cos()),
                    0.5 * offset * phase.sin() * std::f64::consts::PI / dur,
                )
            } else {
                (offset, 0.0)
            };
            AgentState::new(
                s.x + ux * speed * t + lx * lat,
                s.y + uy * speed * t + ly * lat,
                s.vx + lx * lat_rate,
                s.vy + ly * lat_rate,
            )
        })
        .collect()
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

struct Builder {
    params: GeneratorParams,
    agents: Vec<ScenarioAgent>,
}

impl Builder {
    fn add(&mut self, current: AgentState, intent_horizon: Option<f64>, future: Vec<AgentState>) {
        let p = &self.params;
        let history = cv_history(current.x, current.y, current.vx, current.vy, p.history_len, p.dt);
        let intent = intent_horizon.map(|h| [current.x + current.vx * h, current.y + current.vy * h]);
        self.agents.push(ScenarioAgent {
            id: format!("agent_{}", self.agents.len()),
            length: p.length,
            width: p.width,
            history,
            intent,
            logged_future: Some(future),
        });
    }
}

/// Deterministic scene of the requested layout for `seed`. Logged futures
/// cover `future_steps` steps.
pub fn generate_scenario(kind: ScenarioKind, params: &GeneratorParams, seed: u64) -> Result<ScenarioFile> {
    params.validate(kind)?;
    let mut rng = rng_from_seed(derive_seed(seed, Purpose::Scenario, kind as u64));
    let p = params.clone();
    let mut jit = |scale: f64| {
        if p.jitter > 0.0 {
            rng.random_range(-p.jitter..=p.jitter) * scale
        } else {
            0.0
        }
    };
    let (dt, steps) = (p.dt, p.future_steps);
    let horizon_time = steps as f64 * dt;
    let reach = p.separation + p.speed * horizon_time + 20.0;
    let w = p.road_half_width;
    let mut b = Builder {
        params: p.clone(),
        agents: Vec::new(),
    };
    let (road_edges, drivable_regions) = match kind {
        ScenarioKind::HeadOn => {
            // Same centerline, opposite directions. Logged play-out swerves
            // each agent to its own right.
            let half = 0.5 * p.separation;
            let a = AgentState::new(-half + jit(1.0), 0.0, p.speed * (1.0 + jit(0.05)), 0.0);
            let c = AgentState::new(half + jit(1.0), 0.0, -p.speed * (1.0 + jit(0.05)), 0.0);
            let shift = (30).min(steps.max(1));
            b.add(a, Some(horizon_time), shifted_future(&a, -0.5 * w, shift, steps, dt));
            b.add(c, Some(horizon_time), shifted_future(&c, -0.5 * w, shift, steps, dt));
            (
                vec![vec![[-reach, -w], [reach, -w]], vec![[-reach, w], [reach, w]]],
                vec![rect(-reach, -w, reach, w)],
            )
        }
        ScenarioKind::Crossing => {
            let lane = 0.5 * w;
            // (start direction unit vector, lane offset normal)
            let approaches: [([f64; 2], [f64; 2]); 4] = [
                ([1.0, 0.0], [0.0, -lane]),
                ([0.0, 1.0], [lane, 0.0]),
                ([-1.0, 0.0], [0.0, lane]),
                ([0.0, -1.0], [-lane, 0.0]),
            ];
            for (idx, (dir, off)) in approaches.iter().take(p.num_agents).enumerate() {
                let dist = p.separation + idx as f64 * p.crossing_offset + jit(1.0);
                let speed = p.speed * (1.0 + jit(0.05));
                let s = AgentState::new(
                    off[0] - dir[0] * dist,
                    off[1] - dir[1] * dist,
                    dir[0] * speed,
                    dir[1] * speed,
                );
                b.add(s, Some(horizon_time), cv_future(&s, steps, dt));
            }
            let corners = |sx: f64, sy: f64| vec![[sx * reach, sy * w], [sx * w, sy * w], [sx * w, sy * reach]];
            let edges = vec![
                corners(1.0, 1.0),
                corners(-1.0, 1.0),
                corners(-1.0, -1.0),
                corners(1.0, -1.0),
            ];
            let cross = vec![
                [reach, -w],
                [reach, w],
                [w, w],
                [w, reach],
                [-w, reach],
                [-w, w],
                [-reach, w],
                [-reach, -w],
                [-w, -w],
                [-w, -reach],
                [w, -reach],
                [w, -w],
            ];
            (edges, vec![cross])
        }
        ScenarioKind::Merge => {
            // Two lanes; the left agent starts behind and merges right.
            let lane = 0.5 * w;
            let main = AgentState::new(jit(1.0), -lane, p.speed, 0.0);
            let merging = AgentState::new(-15.0 + jit(1.0), lane, p.speed * 0.9, 0.0);
            b.add(main, Some(horizon_time), cv_future(&main, steps, dt));
            let shift = (40).min(steps.max(1));
            b.add(
                merging,
                Some(horizon_time),
                shifted_future(&merging, -w, shift, steps, dt),
            );
            if let Some(i) = b.agents[1].intent.as_mut() {
                i[1] = -lane;
            }
            (
                vec![vec![[-reach, -w], [reach, -w]], vec![[-reach, w], [reach, w]]],
                vec![rect(-reach, -w, reach, w)],
            )
        }
        ScenarioKind::Stationary => {
            let spacing = p.length + 3.0;
            for idx in 0..p.num_agents {
                let s = AgentState::new(idx as f64 * spacing + jit(0.5), 0.0, 0.0, 0.0);
                b.add(s, None, cv_future(&s, steps, dt));
            }
            let len = p.num_agents as f64 * spacing + 20.0;
            (
                vec![vec![[-20.0, -w], [len, -w]], vec![[-20.0, w], [len, w]]],
                vec![rect(-20.0, -w, len, w)],
            )
        }
    };
    Ok(ScenarioFile {
        schema_version: SCENARIO_SCHEMA_VERSION,
        dt,
        agents: b.agents,
        road_edges,
        drivable_regions,
    })
}
