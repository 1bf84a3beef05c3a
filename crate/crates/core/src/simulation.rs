//! Closed-loop simulation: `K` independent samples, each advanced chunk by
//! chunk with a fresh planning step conditioned only on what has been
//! simulated so far.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AgentState, SceneContext};
use crate::proposer::Proposer;
use crate::rollout::{mps_step, MpsOutcome, MpsParams};
use crate::seed::{derive_seed, Purpose};

/// Most recent states handed to the proposer (1 s at 10 Hz plus the current frame).
pub const HISTORY_WINDOW: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub num_samples: usize,
    pub total_steps: usize,
    pub master_seed: u64,
    pub mps: MpsParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            num_samples: 32,
            total_steps: 80,
            master_seed: 0,
            mps: MpsParams::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 || self.total_steps == 0 {
            return Err(Error::InvalidInput(format!(
                "need num_samples >= 1 and total_steps >= 1, got {} and {}",
                self.num_samples, self.total_steps
            )));
        }
        self.mps.validate()
    }
}

/// Record of one planning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub sample: usize,
    pub step: usize,
    /// Index of the first simulated state this step committed.
    pub start: usize,
    pub horizon: usize,
    pub chunk: usize,
    pub seed: u64,
    pub selected: usize,
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    /// Indexed `[sample][agent][step]`.
    pub samples: Vec<Vec<Vec<AgentState>>>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl SimulationOutput {
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn num_agents(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn num_steps(&self) -> usize {
        self.samples.first().and_then(|s| s.first()).map_or(0, Vec::len)
    }

    /// Checks the `K x N x T` shape and that every state is finite.
    pub fn validate(&self) -> Result<()> {
        let (n, t) = (self.num_agents(), self.num_steps());
        for (k, sample) in self.samples.iter().enumerate() {
            if sample.len() != n {
                return Err(Error::ContractViolation(format!(
                    "sample {k} has {} agents, expected {n}",
                    sample.len()
                )));
            }
            for (i, traj) in sample.iter().enumerate() {
                if traj.len() != t {
                    return Err(Error::ContractViolation(format!(
                        "sample {k} agent {i} has {} steps, expected {t}",
                        traj.len()
                    )));
                }
                if let Some(s) = traj.iter().position(|x| !x.is_finite()) {
                    return Err(Error::Numerical(format!("sample {k} agent {i} step {s} is not finite")));
                }
            }
        }
        Ok(())
    }
}

/// Logged histories as the initial conditioning window.
pub fn init_trajectory(context: &SceneContext) -> Result<Vec<Vec<AgentState>>> {
    let h = context.histories();
    if let Some(i) = h.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!("agent {i} has no history")));
    }
    Ok(h.to_vec())
}

/// Planning horizon and committed chunk when `remaining` steps are left.
pub fn plan_shape(mps: &MpsParams, remaining: usize) -> (usize, usize) {
    let horizon = mps.horizon.min(remaining).max(2);
    (horizon, mps.chunk_size.min(remaining))
}

fn simulate_sample(
    context: &SceneContext,
    proposer: &dyn Proposer,
    params: &SimParams,
    k: usize,
) -> Result<(Vec<Vec<AgentState>>, Vec<StepDiagnostics>)> {
    let seed = derive_seed(params.master_seed, Purpose::Sample, k as u64);
    let mut past = init_trajectory(context)?;
    let n = past.len();
    let t_total = params.total_steps;
    let mut out = vec![Vec::with_capacity(t_total); n];
    let mut diags = Vec::new();
    let mut produced = 0;
    let mut step = 0;
    while produced < t_total {
        let (horizon, chunk) = plan_shape(&params.mps, t_total - produced);
        let mps = MpsParams {
            horizon,
            chunk_size: chunk,
            ..params.mps.clone()
        };
        let window: Vec<Vec<AgentState>> = past
            .iter()
            .map(|h| h[h.len().saturating_sub(HISTORY_WINDOW)..].to_vec())
            .collect();
        let step_seed = derive_seed(seed, Purpose::MpsStep, step as u64);
        let outcome = mps_step(context, &window, proposer, &mps, step_seed).map_err(|e| Error::Simulation {
            sample: k,
            step: produced,
            source: Box::new(e),
        })?;
        for (i, states) in outcome.chunk.iter().enumerate() {
            past[i].extend_from_slice(states);
            out[i].extend_from_slice(states);
        }
        diags.push(StepDiagnostics {
            sample: k,
            step,
            start: produced,
            horizon,
            chunk,
            seed: step_seed,
            selected: outcome.selected,
            energies: outcome.energies(),
        });
        produced += chunk;
        step += 1;
    }
    Ok((out, diags))
}

/// Repeats the planning step described by `diag` against a stored sample,
/// rebuilding its conditioning window from the logged history and the states
/// committed before `diag.start`. With the original inputs the energies match
/// `diag.energies` exactly.
pub fn rerun_step(
    context: &SceneContext,
    proposer: &dyn Proposer,
    params: &SimParams,
    sample: &[Vec<AgentState>],
    diag: &StepDiagnostics,
) -> Result<MpsOutcome> {
    if sample.len() != context.num_agents() {
        return Err(Error::ContractViolation(format!(
            "sample has {} agents, scenario has {}",
            sample.len(),
            context.num_agents()
        )));
    }
    if let Some(i) = sample.iter().position(|s| s.len() < diag.start) {
        return Err(Error::ContractViolation(format!(
            "agent {i} has fewer than {} simulated states",
            diag.start
        )));
    }
    let window: Vec<Vec<AgentState>> = init_trajectory(context)?
        .into_iter()
        .zip(sample)
        .map(|(mut h, s)| {
            h.extend_from_slice(&s[..diag.start]);
            h[h.len().saturating_sub(HISTORY_WINDOW)..].to_vec()
        })
        .collect();
    let mps = MpsParams {
        horizon: diag.horizon,
        chunk_size: diag.chunk,
        ..params.mps.clone()
    };
    mps_step(context, &window, proposer, &mps, diag.seed)
}

/// Runs `K` closed-loop samples of `T` steps each. Samples run in parallel;
/// results depend only on the inputs and `master_seed`.
pub fn simulate(context: &SceneContext, proposer: &dyn Proposer, params: &SimParams) -> Result<SimulationOutput> {
    params.validate()?;
    let per_sample = (0..params.num_samples)
        .into_par_iter()
        .map(|k| simulate_sample(context, proposer, params, k))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(per_sample.len());
    let mut diagnostics = Vec::new();
    for (s, d) in per_sample {
        samples.push(s);
        diagnostics.extend(d);
    }
    let output = SimulationOutput { samples, diagnostics };
    output.validate()?;
    Ok(output)
}
