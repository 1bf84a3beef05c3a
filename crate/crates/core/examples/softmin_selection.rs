//! Softmin probabilities against empirical selection frequencies.

use mps_sim::rollout::{softmin_probabilities, softmin_sample};

fn main() -> mps_sim::Result<()> {
    let energies = [0.0, 3f64.ln(), 1.0, 2.5];
    let draws = 100_000u64;
    for tau in [0.25, 1.0, 4.0] {
        let p = softmin_probabilities(&energies, tau)?;
        let mut counts = vec![0u64; energies.len()];
        for s in 0..draws {
            counts[softmin_sample(&energies, tau, s)?] += 1;
        }
        println!("tau {tau}");
        for (j, (p, c)) in p.iter().zip(&counts).enumerate() {
            println!(
                "  E={:.3}  p={p:.4}  observed={:.4}",
                energies[j],
                *c as f64 / draws as f64
            );
        }
    }
    Ok(())
}
