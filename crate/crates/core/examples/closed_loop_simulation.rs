//! Closed-loop simulation of a four-way crossing, written to a rollout file
//! and summarized with the desk-scale metrics.
//!
//! ```bash
//! cargo run --release --example closed_loop_simulation -- /tmp/crossing.json
//! ```

use mps_sim::proposer::ProposerConfig;
use mps_sim::rollout::MpsParams;
use mps_sim::scenario_io::{
    compute_metrics, generate_scenario, save_rollouts, GeneratorParams, RolloutFormat, ScenarioKind,
};
use mps_sim::simulation::{simulate, SimParams};

fn main() -> mps_sim::Result<()> {
    let scene = generate_scenario(
        ScenarioKind::Crossing,
        &GeneratorParams {
            num_agents: 4,
            ..GeneratorParams::default()
        },
        0,
    )?;
    let ctx = scene.context()?;
    let proposer_cfg = ProposerConfig::default();
    let proposer = proposer_cfg.build()?;
    let params = SimParams {
        num_samples: 8,
        total_steps: 60,
        master_seed: 7,
        mps: MpsParams {
            num_rollouts: 24,
            ..MpsParams::default()
        },
    };
    let output = simulate(&ctx, proposer.as_ref(), &params)?;
    let logged = scene.logged_future();
    let report = compute_metrics(&output, &ctx, logged.as_deref())?;
    println!(
        "collision {:.4}  offroad {:.4}  speed {:.2}±{:.2}  minADE {:.3}",
        report.collision_rate,
        report.offroad_rate,
        report.speed.mean,
        report.speed.std,
        report.min_ade.unwrap_or(f64::NAN)
    );
    if let Some(path) = std::env::args().nth(1) {
        save_rollouts(&path, &ctx, &params, &proposer_cfg, &output, RolloutFormat::Json)?;
        println!("wrote {path}");
    }
    Ok(())
}
