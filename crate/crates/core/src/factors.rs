//! Residuals and energies of the joint trajectory model.
//!
//! Four residual factors (motion, goal, linear motion, velocity change) are
//! linear in the state and enter the energy as `weight * |r|^2`. The obstacle
//! and collision factors are max-of-Gaussian scores and enter as
//! `weight * value`.

use nalgebra::{Matrix2x4, Rotation2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    box_points_with_heading, heading_of, headings_along, AgentGeometry, AgentState, SceneContext, Trajectory, Vec2,
};

/// Per-factor weights. Defaults weight velocity change at 2.0 and everything
/// else at 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorWeights {
    pub motion: f64,
    pub goal: f64,
    pub linear: f64,
    pub angular: f64,
    pub obstacle: f64,
    pub collision: f64,
}

impl Default for FactorWeights {
    fn default() -> Self {
        Self {
            motion: 1.0,
            goal: 1.0,
            linear: 1.0,
            angular: 2.0,
            obstacle: 1.0,
            collision: 1.0,
        }
    }
}

impl FactorWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.motion,
            self.goal,
            self.linear,
            self.angular,
            self.obstacle,
            self.collision,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "factor weights must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            motion: self.motion * k,
            goal: self.goal * k,
            linear: self.linear * k,
            angular: self.angular * k,
            obstacle: self.obstacle * k,
            collision: self.collision * k,
        }
    }
}

/// Anisotropic Gaussian bump in an agent's body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianFieldParams {
    pub sigma_longitudinal: f64,
    pub sigma_lateral: f64,
    pub amplitude: f64,
}

impl GaussianFieldParams {
    pub fn new(sigma_longitudinal: f64, sigma_lateral: f64, amplitude: f64) -> Result<Self> {
        let p = Self {
            sigma_longitudinal,
            sigma_lateral,
            amplitude,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.sigma_longitudinal) && ok(self.sigma_lateral) && ok(self.amplitude)) {
            return Err(Error::InvalidInput(format!(
                "Gaussian field parameters must be > 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// Half the agent's length and width as standard deviations.
    pub fn from_extent(geom: &AgentGeometry, amplitude: f64) -> Self {
        Self {
            sigma_longitudinal: 0.5 * geom.length,
            sigma_lateral: 0.5 * geom.width,
            amplitude,
        }
    }
}

/// How each agent's field parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FieldModel {
    /// Sigmas follow the agent's footprint.
    AgentExtent { amplitude: f64 },
    /// Same parameters for every agent.
    Fixed(GaussianFieldParams),
}

impl Default for FieldModel {
    fn default() -> Self {
        FieldModel::AgentExtent { amplitude: 1.0 }
    }
}

impl FieldModel {
    pub fn params_for(&self, geom: &AgentGeometry) -> GaussianFieldParams {
        match *self {
            FieldModel::AgentExtent { amplitude } => GaussianFieldParams::from_extent(geom, amplitude),
            FieldModel::Fixed(p) => p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FieldModel::AgentExtent { amplitude } if !(amplitude.is_finite() && *amplitude > 0.0) => Err(
                Error::InvalidInput(format!("field amplitude must be > 0, got {amplitude}")),
            ),
            FieldModel::AgentExtent { .. } => Ok(()),
            FieldModel::Fixed(p) => p.validate(),
        }
    }
}

pub fn residual_motion(s: &AgentState, anchor: &AgentState) -> Vec2 {
    s.position() - anchor.position()
}

pub fn residual_goal(s_final: &AgentState, goal: Vec2) -> Vec2 {
    s_final.position() - goal
}

/// Deviation of `s_next` from constant-velocity motion out of `s`.
pub fn residual_linear(s: &AgentState, s_next: &AgentState, dt: f64) -> Vec2 {
    s_next.position() - (s.position() + s.velocity() * dt)
}

pub fn residual_angular(s: &AgentState, s_next: &AgentState) -> Vec2 {
    s.velocity() - s_next.velocity()
}

/// d(residual_motion)/d(s); the goal residual has the same Jacobian.
pub fn jacobian_motion() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// (d/ds, d/ds_next) of the linear-motion residual.
pub fn jacobian_linear(dt: f64) -> (Matrix2x4<f64>, Matrix2x4<f64>) {
    (
        Matrix2x4::new(-1.0, 0.0, -dt, 0.0, 0.0, -1.0, 0.0, -dt),
        Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
    )
}

/// (d/ds, d/ds_next) of the velocity-change residual.
pub fn jacobian_angular() -> (Matrix2x4<f64>, Matrix2x4<f64>) {
    (
        Matrix2x4::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
        Matrix2x4::new(0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0),
    )
}

/// Squared Mahalanobis distance of `query` from a field centered on `center`
/// with the given heading.
fn field_distance_sq(query: Vec2, center: Vec2, heading: f64, params: &GaussianFieldParams) -> f64 {
    let local = Rotation2::new(-heading) * (query - center);
    let u = local.x / params.sigma_longitudinal;
    let v = local.y / params.sigma_lateral;
    u * u + v * v
}

fn field_value(distance_sq: f64, params: &GaussianFieldParams) -> f64 {
    params.amplitude * (-0.5 * distance_sq).exp()
}

/// Field of agent `s` evaluated at `query`.
pub fn gaussian_field(query: Vec2, s: &AgentState, params: &GaussianFieldParams, fallback_heading: f64) -> f64 {
    let d2 = field_distance_sq(query, s.position(), heading_of(s, fallback_heading), params);
    field_value(d2, params)
}

/// Largest field value over `points`, or 0 for an empty set.
fn max_field(points: &[Vec2], center: Vec2, heading: f64, params: &GaussianFieldParams) -> f64 {
    // The field decreases monotonically in distance, so one exp suffices.
    points
        .iter()
        .map(|p| field_distance_sq(*p, center, heading, params))
        .min_by(f64::total_cmp)
        .map_or(0.0, |d2| field_value(d2, params))
}

/// Obstacle score: strongest field response at any (densified) road-edge point.
pub fn energy_obstacle(
    s: &AgentState,
    edge_points: &[Vec2],
    params: &GaussianFieldParams,
    fallback_heading: f64,
) -> f64 {
    max_field(edge_points, s.position(), heading_of(s, fallback_heading), params)
}

/// Collision score of `s` against `other`: field of `s` maximized over the 9
/// box points of `other`. Not symmetric.
pub fn energy_collision(
    s: &AgentState,
    params: &GaussianFieldParams,
    fallback_heading: f64,
    other: &AgentState,
    other_geom: &AgentGeometry,
    other_fallback_heading: f64,
) -> f64 {
    let ccp = box_points_with_heading(other.position(), heading_of(other, other_fallback_heading), other_geom);
    max_field(&ccp, s.position(), heading_of(s, fallback_heading), params)
}

/// Weighted per-factor subtotals of one agent's smoothing energy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoothingBreakdown {
    pub motion: f64,
    pub goal: f64,
    pub linear: f64,
    pub angular: f64,
}

impl SmoothingBreakdown {
    pub fn total(&self) -> f64 {
        self.motion + self.goal + self.linear + self.angular
    }
}

pub(crate) fn check_lengths(traj: &Trajectory, anchors: &Trajectory) -> Result<()> {
    if traj.len() != anchors.len() {
        return Err(Error::ContractViolation(format!(
            "trajectory length {} != anchor length {}",
            traj.len(),
            anchors.len()
        )));
    }
    if traj.len() < 2 {
        return Err(Error::ContractViolation(format!(
            "horizon must be >= 2, got {}",
            traj.len()
        )));
    }
    Ok(())
}

/// Motion terms cover steps 1..F-1; the goal term takes the final step.
/// `include_goal = false` drops the goal term entirely.
pub fn smoothing_breakdown(
    traj: &Trajectory,
    anchors: &Trajectory,
    goal: Vec2,
    weights: &FactorWeights,
    include_goal: bool,
) -> Result<SmoothingBreakdown> {
    check_lengths(traj, anchors)?;
    let s = &traj.states;
    let f = s.len();
    let mut out = SmoothingBreakdown::default();
    for (st, a) in s[..f - 1].iter().zip(&anchors.states) {
        out.motion += residual_motion(st, a).norm_squared();
    }
    if include_goal {
        out.goal = residual_goal(&s[f - 1], goal).norm_squared();
    }
    for w in s.windows(2) {
        out.linear += residual_linear(&w[0], &w[1], traj.dt).norm_squared();
        out.angular += residual_angular(&w[0], &w[1]).norm_squared();
    }
    out.motion *= weights.motion;
    out.goal *= weights.goal;
    out.linear *= weights.linear;
    out.angular *= weights.angular;
    Ok(out)
}

pub fn smoothing_energy(
    traj: &Trajectory,
    anchors: &Trajectory,
    goal: Vec2,
    weights: &FactorWeights,
    include_goal: bool,
) -> Result<f64> {
    smoothing_breakdown(traj, anchors, goal, weights, include_goal).map(|b| b.total())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionBreakdown {
    pub obstacle: f64,
    pub collision: f64,
}

impl InteractionBreakdown {
    pub fn total(&self) -> f64 {
        self.obstacle + self.collision
    }
}

/// Obstacle scores summed over agents and steps plus collision scores summed
/// over ordered agent pairs and steps, each weighted.
///
/// `fallback_headings[i]` seeds agent `i`'s heading while it is stationary.
pub fn interaction_breakdown(
    joint: &[Trajectory],
    context: &SceneContext,
    fallback_headings: &[f64],
    weights: &FactorWeights,
    field: &FieldModel,
) -> Result<InteractionBreakdown> {
    let n = joint.len();
    if n != context.num_agents() || fallback_headings.len() != n {
        return Err(Error::ContractViolation(format!(
            "{n} trajectories, {} fallback headings for {} agents",
            fallback_headings.len(),
            context.num_agents()
        )));
    }
    let Some(f) = joint.first().map(Trajectory::len) else {
        return Ok(InteractionBreakdown::default());
    };
    if joint.iter().any(|t| t.len() != f) {
        return Err(Error::ContractViolation("joint trajectories differ in length".into()));
    }
    let geoms = context.agents();
    let params: Vec<_> = geoms.iter().map(|g| field.params_for(g)).collect();
    let headings: Vec<Vec<f64>> = joint
        .iter()
        .zip(fallback_headings)
        .map(|(t, h)| headings_along(&t.states, *h))
        .collect();

    let mut out = InteractionBreakdown::default();
    let edges = context.edge_points();
    for t in 0..f {
        let ccps: Vec<[Vec2; 9]> = (0..n)
            .map(|j| box_points_with_heading(joint[j].states[t].position(), headings[j][t], &geoms[j]))
            .collect();
        for i in 0..n {
            let center = joint[i].states[t].position();
            let heading = headings[i][t];
            if !edges.is_empty() {
                out.obstacle += max_field(edges, center, heading, &params[i]);
            }
            for (j, ccp) in ccps.iter().enumerate() {
                if i != j {
                    out.collision += max_field(ccp, center, heading, &params[i]);
                }
            }
        }
    }
    out.obstacle *= weights.obstacle;
    out.collision *= weights.collision;
    Ok(out)
}

pub fn interaction_energy(
    joint: &[Trajectory],
    context: &SceneContext,
    fallback_headings: &[f64],
    weights: &FactorWeights,
    field: &FieldModel,
) -> Result<f64> {
    interaction_breakdown(joint, context, fallback_headings, weights, field).map(|b| b.total())
}
