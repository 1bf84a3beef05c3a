//! Smooths a noisy anchor sequence with damped Gauss-Newton and prints the
//! energy after every iteration.

use mps_sim::factors::{smoothing_breakdown, FactorWeights};
use mps_sim::seed::rng_from_seed;
use mps_sim::solver::{smooth_trajectory, SolverParams};
use mps_sim::{Trajectory, Vec2};
use rand_distr::{Distribution, Normal};

fn main() -> mps_sim::Result<()> {
    let dt = 0.1;
    let mut rng = rng_from_seed(11);
    let noise = Normal::new(0.0, 0.4).unwrap();
    let positions: Vec<Vec2> = (1..=30)
        .map(|t| {
            let x = t as f64 * 0.8;
            Vec2::new(x + noise.sample(&mut rng), 0.02 * x * x + noise.sample(&mut rng))
        })
        .collect();
    let anchors = Trajectory::from_positions(Vec2::zeros(), &positions, dt)?;
    let goal = *positions.last().unwrap();
    let weights = FactorWeights::default();

    let (smoothed, report) = smooth_trajectory(&anchors, &anchors, goal, &weights, true, &SolverParams::default())?;
    for (i, e) in report.energy_history.iter().enumerate() {
        println!("iter {i:2}  energy {e:.6}");
    }
    println!(
        "termination {:?} after {} iterations",
        report.termination, report.iterations
    );
    println!(
        "before {:?}",
        smoothing_breakdown(&anchors, &anchors, goal, &weights, true)?
    );
    println!(
        "after  {:?}",
        smoothing_breakdown(&smoothed, &anchors, goal, &weights, true)?
    );
    Ok(())
}
