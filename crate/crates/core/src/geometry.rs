//! Domain types and planar geometry shared by the rest of the crate.

use nalgebra::{Rotation2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Speeds at or below this are treated as stationary for heading purposes.
pub const EPSILON_SPEED: f64 = 1e-3;

pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_LENGTH: f64 = 4.8;
pub const DEFAULT_WIDTH: f64 = 2.0;

/// Maximum spacing between road-edge sample points after densification.
pub const ROAD_EDGE_SPACING: f64 = 0.5;

/// Planar position and velocity of one agent at one timestep.
///
/// Serialized compactly as `[x, y, vx, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl From<[f64; 4]> for AgentState {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<AgentState> for [f64; 4] {
    fn from(s: AgentState) -> Self {
        [s.x, s.y, s.vx, s.vy]
    }
}

impl AgentState {
    pub const fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }

    pub fn with_position(self, p: Vec2) -> Self {
        Self { x: p.x, y: p.y, ..self }
    }
}

/// Footprint of an agent. `length` runs along the heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentGeometry {
    pub agent_id: String,
    pub length: f64,
    pub width: f64,
}

impl AgentGeometry {
    pub fn new(agent_id: impl Into<String>, length: f64, width: f64) -> Result<Self> {
        let agent_id = agent_id.into();
        if !(width.is_finite() && length.is_finite() && width > 0.0 && length >= width) {
            return Err(Error::InvalidInput(format!(
                "agent {agent_id}: need length >= width > 0, got length={length} width={width}"
            )));
        }
        Ok(Self {
            agent_id,
            length,
            width,
        })
    }

    pub fn with_default_extent(agent_id: impl Into<String>) -> Self {
        Self {
            agent_id: agent_id.into(),
            length: DEFAULT_LENGTH,
            width: DEFAULT_WIDTH,
        }
    }
}

/// Fixed-rate sequence of states for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<AgentState>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(states: Vec<AgentState>, dt: f64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidInput("trajectory must have at least one state".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("trajectory dt must be > 0, got {dt}")));
        }
        Ok(Self { states, dt })
    }

    /// Builds a trajectory from positions only. Velocities are backward
    /// differences, with `start` as the position preceding the first sample.
    pub fn from_positions(start: Vec2, positions: &[Vec2], dt: f64) -> Result<Self> {
        let mut prev = start;
        let states = positions
            .iter()
            .map(|p| {
                let v = (p - prev) / dt;
                prev = *p;
                AgentState::new(p.x, p.y, v.x, v.y)
            })
            .collect();
        Self::new(states, dt)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &AgentState {
        self.states.last().expect("trajectory is non-empty")
    }
}

/// Velocity direction, or `fallback` for (near-)stationary states.
pub fn heading_of(state: &AgentState, fallback: f64) -> f64 {
    if state.speed() > EPSILON_SPEED {
        state.vy.atan2(state.vx)
    } else {
        fallback
    }
}

/// Headings along a sequence, carrying the last above-threshold heading
/// through stationary stretches.
pub fn headings_along(states: &[AgentState], fallback: f64) -> Vec<f64> {
    let mut current = fallback;
    states
        .iter()
        .map(|s| {
            current = heading_of(s, current);
            current
        })
        .collect()
}

/// Heading at the end of a history, or 0 if the agent never moved.
pub fn final_heading(history: &[AgentState]) -> f64 {
    headings_along(history, 0.0).last().copied().unwrap_or(0.0)
}

/// The 9 collision checking points of an agent's box: 4 corners, 4 edge
/// midpoints, then the center.
pub fn oriented_box_points(state: &AgentState, geom: &AgentGeometry, fallback_heading: f64) -> [Vec2; 9] {
    box_points_with_heading(state.position(), heading_of(state, fallback_heading), geom)
}

pub(crate) fn box_points_with_heading(center: Vec2, heading: f64, geom: &AgentGeometry) -> [Vec2; 9] {
    let rot = Rotation2::new(heading);
    let hl = 0.5 * geom.length;
    let hw = 0.5 * geom.width;
    let local = [
        Vec2::new(hl, hw),
        Vec2::new(hl, -hw),
        Vec2::new(-hl, -hw),
        Vec2::new(-hl, hw),
        Vec2::new(hl, 0.0),
        Vec2::new(0.0, -hw),
        Vec2::new(-hl, 0.0),
        Vec2::new(0.0, hw),
    ];
    let mut out = [center; 9];
    for (o, l) in out.iter_mut().zip(local.iter()) {
        *o = center + rot * l;
    }
    out
}

/// Resamples a polyline so consecutive points are at most `max_spacing` apart.
/// Original vertices are kept.
pub fn densify(points: &[Vec2], max_spacing: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(points.len());
    if let Some(first) = points.first() {
        out.push(*first);
    }
    for w in points.windows(2) {
        let seg = w[1] - w[0];
        let n = (seg.norm() / max_spacing).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(w[0] + seg * (k as f64 / n as f64));
        }
    }
    out
}

/// Even-odd point-in-polygon test. The polygon is implicitly closed.
pub fn point_in_polygon(p: Vec2, polygon: &[Vec2]) -> bool {
    let mut inside = false;
    let n = polygon.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Per-agent input when building a [`SceneContext`].
#[derive(Debug, Clone)]
pub struct SceneAgent {
    pub geometry: AgentGeometry,
    pub history: Vec<AgentState>,
    pub intent: Option<Vec2>,
}

/// Static world plus logged past. Holds no logged future, so nothing driven
/// from a context can condition on it.
#[derive(Debug, Clone)]
pub struct SceneContext {
    dt: f64,
    agents: Vec<AgentGeometry>,
    histories: Vec<Vec<AgentState>>,
    intents: Vec<Option<Vec2>>,
    road_edges: Vec<Vec<Vec2>>,
    drivable_regions: Vec<Vec<Vec2>>,
    edge_points: Vec<Vec2>,
    fallback_headings: Vec<f64>,
}

impl SceneContext {
    /// `drivable_regions` are closed polygons whose union is on-road; an empty
    /// list disables the offroad check.
    pub fn new(
        dt: f64,
        agents: Vec<SceneAgent>,
        road_edges: Vec<Vec<Vec2>>,
        drivable_regions: Vec<Vec<Vec2>>,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
        }
        for (i, a) in agents.iter().enumerate() {
            AgentGeometry::new(a.geometry.agent_id.clone(), a.geometry.length, a.geometry.width)?;
            if a.history.is_empty() {
                return Err(Error::InvalidInput(format!("agents[{i}].history is empty")));
            }
            if let Some(k) = a.history.iter().position(|s| !s.is_finite()) {
                return Err(Error::InvalidInput(format!("agents[{i}].history[{k}] is not finite")));
            }
            if a.intent.is_some_and(|p| !(p.x.is_finite() && p.y.is_finite())) {
                return Err(Error::InvalidInput(format!("agents[{i}].intent is not finite")));
            }
        }
        for (e, edge) in road_edges.iter().enumerate() {
            if edge.len() < 2 {
                return Err(Error::InvalidInput(format!("road_edges[{e}] has fewer than 2 points")));
            }
            if edge.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
                return Err(Error::InvalidInput(format!("road_edges[{e}] has a non-finite point")));
            }
        }
        for (r, region) in drivable_regions.iter().enumerate() {
            if region.len() < 3 {
                return Err(Error::InvalidInput(format!(
                    "drivable_regions[{r}] has fewer than 3 points"
                )));
            }
        }
        let edge_points = road_edges.iter().flat_map(|e| densify(e, ROAD_EDGE_SPACING)).collect();
        let fallback_headings = agents.iter().map(|a| final_heading(&a.history)).collect();
        let (agents, rest): (Vec<_>, Vec<_>) = agents.into_iter().map(|a| (a.geometry, (a.history, a.intent))).unzip();
        let (histories, intents) = rest.into_iter().unzip();
        Ok(Self {
            dt,
            agents,
            histories,
            intents,
            road_edges,
            drivable_regions,
            edge_points,
            fallback_headings,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentGeometry] {
        &self.agents
    }

    pub fn histories(&self) -> &[Vec<AgentState>] {
        &self.histories
    }

    pub fn intent(&self, agent: usize) -> Option<Vec2> {
        self.intents[agent]
    }

    pub fn road_edges(&self) -> &[Vec<Vec2>] {
        &self.road_edges
    }

    pub fn drivable_regions(&self) -> &[Vec<Vec2>] {
        &self.drivable_regions
    }

    /// Road-edge points after densification.
    pub fn edge_points(&self) -> &[Vec2] {
        &self.edge_points
    }

    /// Heading used for an agent while it is stationary at the start.
    pub fn fallback_heading(&self, agent: usize) -> f64 {
        self.fallback_headings[agent]
    }

    pub fn is_drivable(&self, p: Vec2) -> bool {
        self.drivable_regions.is_empty() || self.drivable_regions.iter().any(|r| point_in_polygon(p, r))
    }
}

/// Anchors and goals for all agents of one joint rollout, in scene order.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub anchors: Vec<Trajectory>,
    pub goals: Vec<Vec2>,
}

impl Proposal {
    pub fn validate(&self, num_agents: usize, horizon: usize) -> Result<()> {
        if self.anchors.len() != num_agents || self.goals.len() != num_agents {
            return Err(Error::ContractViolation(format!(
                "proposal covers {} anchors / {} goals for {num_agents} agents",
                self.anchors.len(),
                self.goals.len()
            )));
        }
        if let Some(i) = self.anchors.iter().position(|a| a.len() != horizon) {
            return Err(Error::ContractViolation(format!(
                "anchor trajectory {i} has length {} (horizon {horizon})",
                self.anchors[i].len()
            )));
        }
        Ok(())
    }
}
