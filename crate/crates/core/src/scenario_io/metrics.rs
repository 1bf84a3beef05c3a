use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::obb::OrientedBox;
use crate::error::{Error, Result};
use crate::geometry::{headings_along, AgentState, SceneContext};
use crate::simulation::SimulationOutput;

const SPEED_BIN_WIDTH: f64 = 2.0;
const SPEED_BINS: usize = 20;
const ACCEL_BIN_WIDTH: f64 = 1.0;
const ACCEL_BINS: usize = 20;

/// Mean, population standard deviation and a fixed-edge histogram. Values
/// past the last edge land in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub mean: f64,
    pub std: f64,
    pub histogram_edges: Vec<f64>,
    pub histogram_counts: Vec<u64>,
}

impl Distribution {
    fn from_values(values: &[f64], bin_width: f64, bins: usize) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut counts = vec![0u64; bins];
        for v in values {
            let b = ((v / bin_width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self {
            mean,
            std: var.sqrt(),
            histogram_edges: (0..=bins).map(|b| b as f64 * bin_width).collect(),
            histogram_counts: counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_samples: usize,
    pub num_agents: usize,
    pub num_steps: usize,
    /// Fraction of (sample, agent, step) whose box overlaps another agent's.
    pub collision_rate: f64,
    /// Fraction of (sample, agent, step) with the center outside every
    /// drivable region; 0 when the scenario declares none.
    pub offroad_rate: f64,
    pub speed: Distribution,
    /// Magnitude of the velocity change per second between consecutive states.
    pub acceleration: Distribution,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_ade: Option<f64>,
}

/// Smallest per-sample mean displacement from the logged future.
pub fn min_ade(output: &SimulationOutput, logged_future: Option<&[Vec<AgentState>]>) -> Result<f64> {
    let logged = logged_future.ok_or_else(|| Error::InvalidInput("minADE needs a logged future".into()))?;
    let (n, t) = (output.num_agents(), output.num_steps());
    if logged.len() != n {
        return Err(Error::ContractViolation(format!(
            "logged future has {} agents, output has {n}",
            logged.len()
        )));
    }
    if let Some(i) = logged.iter().position(|l| l.len() < t) {
        return Err(Error::ContractViolation(format!(
            "logged future of agent {i} has {} steps, output has {t}",
            logged[i].len()
        )));
    }
    let count = (n * t).max(1) as f64;
    Ok(output
        .samples
        .iter()
        .map(|sample| {
            sample
                .iter()
                .zip(logged)
                .flat_map(|(sim, log)| sim.iter().zip(log).map(|(a, b)| (a.position() - b.position()).norm()))
                .sum::<f64>()
                / count
        })
        .fold(f64::INFINITY, f64::min))
}

/// Collision, offroad and kinematic statistics over all samples. minADE is
/// included when `logged_future` is given.
pub fn compute_metrics(
    output: &SimulationOutput,
    context: &SceneContext,
    logged_future: Option<&[Vec<AgentState>]>,
) -> Result<MetricsReport> {
    output.validate()?;
    let (k, n, t) = (output.num_samples(), output.num_agents(), output.num_steps());
    if n != context.num_agents() {
        return Err(Error::ContractViolation(format!(
            "output has {n} agents, scenario has {}",
            context.num_agents()
        )));
    }
    let dt = context.dt();
    let geoms = context.agents();
    let last_logged: Vec<AgentState> = context
        .histories()
        .iter()
        .map(|h| *h.last().expect("non-empty"))
        .collect();
    let initial_headings: Vec<f64> = (0..n)
        .map(|i| {
            headings_along(&context.histories()[i], context.fallback_heading(i))
                .last()
                .copied()
                .unwrap_or(0.0)
        })
        .collect();

    struct Tally {
        collisions: u64,
        offroad: u64,
        speeds: Vec<f64>,
        accels: Vec<f64>,
    }
    let tallies: Vec<Tally> = output
        .samples
        .par_iter()
        .map(|sample| {
            let headings: Vec<Vec<f64>> = sample
                .iter()
                .zip(&initial_headings)
                .map(|(traj, h)| headings_along(traj, *h))
                .collect();
            let mut tally = Tally {
                collisions: 0,
                offroad: 0,
                speeds: Vec::with_capacity(n * t),
                accels: Vec::with_capacity(n * t),
            };
            for step in 0..t {
                let boxes: Vec<OrientedBox> = (0..n)
                    .map(|i| OrientedBox::new(sample[i][step].position(), headings[i][step], &geoms[i]))
                    .collect();
                for i in 0..n {
                    if (0..n).any(|j| j != i && boxes[i].overlaps(&boxes[j])) {
                        tally.collisions += 1;
                    }
                    let s = &sample[i][step];
                    if !context.is_drivable(s.position()) {
                        tally.offroad += 1;
                    }
                    tally.speeds.push(s.speed());
                    let prev = if step == 0 {
                        &last_logged[i]
                    } else {
                        &sample[i][step - 1]
                    };
                    tally.accels.push((s.velocity() - prev.velocity()).norm() / dt);
                }
            }
            tally
        })
        .collect();

    let total = (k * n * t).max(1) as f64;
    let collisions: u64 = tallies.iter().map(|x| x.collisions).sum();
    let offroad: u64 = tallies.iter().map(|x| x.offroad).sum();
    let speeds: Vec<f64> = tallies.iter().flat_map(|x| x.speeds.iter().copied()).collect();
    let accels: Vec<f64> = tallies.iter().flat_map(|x| x.accels.iter().copied()).collect();
    let min_ade = logged_future.map(|l| min_ade(output, Some(l))).transpose()?;
    Ok(MetricsReport {
        num_samples: k,
        num_agents: n,
        num_steps: t,
        collision_rate: collisions as f64 / total,
        offroad_rate: offroad as f64 / total,
        speed: Distribution::from_values(&speeds, SPEED_BIN_WIDTH, SPEED_BINS),
        acceleration: Distribution::from_values(&accels, ACCEL_BIN_WIDTH, ACCEL_BINS),
        min_ade,
    })
}
