//! Writes each generated scenario kind to disk, reloads it and checks the
//! canonical text is unchanged. Also round-trips a rollout file through the
//! binary layout.

use mps_sim::proposer::ProposerConfig;
use mps_sim::rollout::MpsParams;
use mps_sim::scenario_io::{
    generate_scenario, GeneratorParams, RolloutFile, RolloutFormat, ScenarioFile, ScenarioKind,
};
use mps_sim::simulation::{simulate, SimParams};

fn main() -> mps_sim::Result<()> {
    let dir = std::env::temp_dir().join("mps-sim-roundtrip");
    std::fs::create_dir_all(&dir).map_err(|e| mps_sim::Error::InvalidInput(e.to_string()))?;
    for kind in [
        ScenarioKind::HeadOn,
        ScenarioKind::Crossing,
        ScenarioKind::Merge,
        ScenarioKind::Stationary,
    ] {
        let scene = generate_scenario(kind, &GeneratorParams::default(), 5)?;
        let path = dir.join(format!("{kind:?}.json"));
        scene.save(&path)?;
        let back = ScenarioFile::load(&path)?;
        println!("{kind:?}: {} agents, identical = {}", back.agents.len(), back == scene);
    }

    let scene = generate_scenario(ScenarioKind::Merge, &GeneratorParams::default(), 5)?;
    let ctx = scene.context()?;
    let proposer = ProposerConfig::default();
    let params = SimParams {
        num_samples: 2,
        total_steps: 20,
        master_seed: 1,
        mps: MpsParams {
            num_rollouts: 6,
            ..MpsParams::default()
        },
    };
    let output = simulate(&ctx, proposer.build()?.as_ref(), &params)?;
    let file = RolloutFile::new(&ctx, &params, &proposer, &output);
    let path = dir.join("rollouts.bin");
    file.save(&path, RolloutFormat::Binary)?;
    let back = RolloutFile::load(&path)?;
    let bits_equal = back
        .samples
        .iter()
        .flatten()
        .flatten()
        .zip(file.samples.iter().flatten().flatten())
        .all(|(a, b)| <[f64; 4]>::from(*a).map(f64::to_bits) == <[f64; 4]>::from(*b).map(f64::to_bits));
    println!(
        "binary rollouts: identical = {}, bit-exact states = {bits_equal}",
        back == file
    );
    Ok(())
}
