//! Drives a planning step from pre-recorded proposals instead of a sampler.

use mps_sim::proposer::{ConstantVelocity, ProposalRequest, Proposer, Replay};
use mps_sim::rollout::{mps_step, MpsParams};
use mps_sim::scenario_io::{
    generate_scenario, load_proposals, GeneratorParams, ProposalSection, ProposalsFile, ScenarioKind,
};

fn main() -> mps_sim::Result<()> {
    let ctx = generate_scenario(ScenarioKind::Merge, &GeneratorParams::default(), 2)?.context()?;
    let sampler = ConstantVelocity {
        position_noise_sigma: 0.5,
    };
    let horizon = 30;
    let recorded = (0..4)
        .map(|j| {
            let request = ProposalRequest {
                horizon,
                rollout_index: j,
                seed: 100 + j as u64,
            };
            sampler.propose(&ctx, ctx.histories(), &request)
        })
        .collect::<mps_sim::Result<Vec<_>>>()?;
    let path = std::env::temp_dir().join("mps-sim-proposals.json");
    ProposalsFile::new(ProposalSection::from_proposals(ctx.dt(), &recorded)).save(&path)?;

    let replay = Replay::new(load_proposals(&path)?);
    let params = MpsParams {
        num_rollouts: recorded.len(),
        horizon,
        ..MpsParams::default()
    };
    let outcome = mps_step(&ctx, ctx.histories(), &replay, &params, 0)?;
    for (j, r) in outcome.rollouts.iter().enumerate() {
        println!("rollout {j}: energy {:.4}", r.energy);
    }
    println!("selected {}", outcome.selected);
    Ok(())
}
