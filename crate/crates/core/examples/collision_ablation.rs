//! Softmin selection against uniform-random selection on a suite of
//! head-on scenes.
//!
//! ```bash
//! cargo run --release --example collision_ablation -- 0.05
//! ```

use mps_sim::proposer::ProposerConfig;
use mps_sim::rollout::{MpsParams, Selection};
use mps_sim::scenario_io::{compute_metrics, generate_scenario, GeneratorParams, ScenarioKind};
use mps_sim::simulation::{simulate, SimParams};

fn suite_collision_rate(selection: Selection, temperature: f64, seeds: u64) -> mps_sim::Result<f64> {
    let proposer = ProposerConfig::default().build()?;
    let mut total = 0.0;
    for seed in 0..seeds {
        let ctx = generate_scenario(ScenarioKind::HeadOn, &GeneratorParams::default(), seed)?.context()?;
        let params = SimParams {
            num_samples: 8,
            total_steps: 40,
            master_seed: seed,
            mps: MpsParams {
                num_rollouts: 16,
                softmin_temperature: temperature,
                selection,
                ..MpsParams::default()
            },
        };
        let out = simulate(&ctx, proposer.as_ref(), &params)?;
        total += compute_metrics(&out, &ctx, None)?.collision_rate;
    }
    Ok(total / seeds as f64)
}

fn main() -> mps_sim::Result<()> {
    let temperature = std::env::args()
        .nth(1)
        .map_or(0.05, |s| s.parse().expect("temperature"));
    let softmin = suite_collision_rate(Selection::Softmin, temperature, 20)?;
    let uniform = suite_collision_rate(Selection::UniformRandom, temperature, 20)?;
    println!("temperature {temperature}");
    println!("softmin  collision_rate {softmin:.4}");
    println!("uniform  collision_rate {uniform:.4}");
    println!("relative reduction {:.1}%", 100.0 * (1.0 - softmin / uniform));
    Ok(())
}
