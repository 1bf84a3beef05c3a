//! Evaluates each factor on a small two-agent scene and prints the weighted
//! subtotals.

use mps_sim::factors::{
    gaussian_field, interaction_breakdown, residual_angular, residual_linear, smoothing_breakdown, FactorWeights,
    FieldModel, GaussianFieldParams,
};
use mps_sim::{AgentGeometry, AgentState, SceneAgent, SceneContext, Trajectory, Vec2};

fn main() -> mps_sim::Result<()> {
    let dt = 0.1;
    let a = AgentState::new(0.0, 0.0, 10.0, 0.0);
    let b = AgentState::new(1.1, 0.2, 10.0, 1.0);
    println!("linear residual  {:?}", residual_linear(&a, &b, dt).as_slice());
    println!("angular residual {:?}", residual_angular(&a, &b).as_slice());

    let geom = AgentGeometry::with_default_extent("ego");
    let field = GaussianFieldParams::from_extent(&geom, 1.0);
    for q in [Vec2::new(0.0, 0.0), Vec2::new(2.4, 0.0), Vec2::new(0.0, 1.0)] {
        println!(
            "field at ({:.1}, {:.1}) = {:.4}",
            q.x,
            q.y,
            gaussian_field(q, &a, &field, 0.0)
        );
    }

    // Anchors along a straight line; the trajectory drifts sideways.
    let anchors = Trajectory::new((0..10).map(|t| AgentState::new(t as f64, 0.0, 10.0, 0.0)).collect(), dt)?;
    let drifted = Trajectory::new(
        (0..10)
            .map(|t| AgentState::new(t as f64, 0.05 * t as f64, 10.0, 0.5))
            .collect(),
        dt,
    )?;
    let weights = FactorWeights::default();
    let s = smoothing_breakdown(&drifted, &anchors, Vec2::new(9.0, 0.0), &weights, true)?;
    println!("smoothing: {s:?} total {:.4}", s.total());

    let history = |y: f64, vx: f64| vec![AgentState::new(0.0, y, vx, 0.0)];
    let agents = vec![
        SceneAgent {
            geometry: geom.clone(),
            history: history(0.0, 10.0),
            intent: None,
        },
        SceneAgent {
            geometry: AgentGeometry::with_default_extent("other"),
            history: history(2.5, 10.0),
            intent: None,
        },
    ];
    let edge = vec![Vec2::new(-5.0, -2.0), Vec2::new(20.0, -2.0)];
    let ctx = SceneContext::new(dt, agents, vec![edge], vec![])?;
    let other = Trajectory::new((0..10).map(|t| AgentState::new(t as f64, 2.5, 10.0, 0.0)).collect(), dt)?;
    let inter = interaction_breakdown(&[anchors, other], &ctx, &[0.0, 0.0], &weights, &FieldModel::default())?;
    println!("interaction: {inter:?}");
    Ok(())
}
