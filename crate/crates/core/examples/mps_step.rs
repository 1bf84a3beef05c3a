//! One planning step on a generated head-on scene: every rollout's energy
//! split, and the committed chunk.

use mps_sim::proposer::ProposerConfig;
use mps_sim::rollout::{mps_step, MpsParams};
use mps_sim::scenario_io::{generate_scenario, GeneratorParams, ScenarioKind};

fn main() -> mps_sim::Result<()> {
    let ctx = generate_scenario(ScenarioKind::HeadOn, &GeneratorParams::default(), 1)?.context()?;
    let proposer = ProposerConfig::default().build()?;
    let params = MpsParams {
        num_rollouts: 12,
        horizon: 40,
        ..MpsParams::default()
    };
    let outcome = mps_step(&ctx, ctx.histories(), proposer.as_ref(), &params, 42)?;
    println!(
        "{:>3} {:>10} {:>10} {:>10} {:>10}",
        "j", "smoothing", "obstacle", "collision", "energy"
    );
    for (j, r) in outcome.rollouts.iter().enumerate() {
        println!(
            "{j:>3} {:>10.4} {:>10.4} {:>10.4} {:>10.4}{}",
            r.smoothing_total(),
            r.interaction.obstacle,
            r.interaction.collision,
            r.energy,
            if j == outcome.selected { "  <- selected" } else { "" }
        );
    }
    for (i, states) in outcome.chunk.iter().enumerate() {
        let last = states.last().unwrap();
        println!(
            "agent {i}: {} states, ends at ({:.2}, {:.2})",
            states.len(),
            last.x,
            last.y
        );
    }
    Ok(())
}
