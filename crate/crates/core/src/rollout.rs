//! One model-predictive planning step: sample `J` joint proposals, smooth
//! each agent, score the frozen joint rollouts, pick one by softmin and
//! commit its leading chunk.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{
    interaction_breakdown, smoothing_breakdown, FactorWeights, FieldModel, InteractionBreakdown, SmoothingBreakdown,
};
use crate::geometry::{headings_along, AgentState, Proposal, SceneContext, Trajectory};
use crate::proposer::{ProposalRequest, Proposer};
use crate::seed::{derive_seed, rng_from_seed, Purpose};
use crate::solver::{smooth_trajectory, SolveReport, SolverParams};

/// How the committed rollout is chosen among the `J` candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Softmin,
    /// Ignores energies; the ablation baseline.
    UniformRandom,
}

/// Terms that make up a rollout's selection energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EnergyComposition {
    #[default]
    SmoothingPlusInteraction,
    InteractionOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpsParams {
    pub num_rollouts: usize,
    pub horizon: usize,
    pub chunk_size: usize,
    pub softmin_temperature: f64,
    /// Divide energies by `N * F` before the softmin.
    pub normalize_energy: bool,
    pub selection: Selection,
    pub energy: EnergyComposition,
    /// Keep the goal term in the Gauss-Newton stage.
    pub include_goal: bool,
    pub weights: FactorWeights,
    pub solver: SolverParams,
    pub field: FieldModel,
}

impl Default for MpsParams {
    fn default() -> Self {
        Self {
            num_rollouts: 60,
            horizon: 80,
            chunk_size: 10,
            softmin_temperature: 1.0,
            normalize_energy: true,
            selection: Selection::Softmin,
            energy: EnergyComposition::SmoothingPlusInteraction,
            include_goal: true,
            weights: FactorWeights::default(),
            solver: SolverParams::default(),
            field: FieldModel::default(),
        }
    }
}

impl MpsParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_rollouts == 0 {
            return Err(Error::InvalidInput("num_rollouts must be >= 1".into()));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidInput(format!(
                "horizon must be >= 2, got {}",
                self.horizon
            )));
        }
        if self.chunk_size == 0 || self.chunk_size > self.horizon {
            return Err(Error::InvalidInput(format!(
                "chunk_size must be in 1..={}, got {}",
                self.horizon, self.chunk_size
            )));
        }
        if !(self.softmin_temperature.is_finite() && self.softmin_temperature > 0.0) {
            return Err(Error::InvalidInput(format!(
                "softmin_temperature must be > 0, got {}",
                self.softmin_temperature
            )));
        }
        self.weights.validate()?;
        self.solver.validate()?;
        self.field.validate()
    }
}

/// One smoothed and scored joint rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub proposal: Proposal,
    pub trajectories: Vec<Trajectory>,
    /// Selection energy before any normalization.
    pub energy: f64,
    pub smoothing: Vec<SmoothingBreakdown>,
    pub interaction: InteractionBreakdown,
    pub smoothing_reports: Vec<SolveReport>,
}

impl RolloutResult {
    pub fn smoothing_total(&self) -> f64 {
        self.smoothing.iter().map(SmoothingBreakdown::total).sum()
    }
}

#[derive(Debug, Clone)]
pub struct MpsOutcome {
    /// `chunk[i]` holds the committed states of agent `i`.
    pub chunk: Vec<Vec<AgentState>>,
    pub selected: usize,
    pub rollouts: Vec<RolloutResult>,
}

impl MpsOutcome {
    pub fn energies(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.energy).collect()
    }
}

/// Normalized softmin weights `exp(-E_j / T)`, shifted by the minimum energy.
pub fn softmin_probabilities(energies: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(Error::InvalidInput("softmin over an empty energy list".into()));
    }
    if let Some(j) = energies.iter().position(|e| !e.is_finite()) {
        return Err(Error::InvalidInput(format!("energy {j} is {}", energies[j])));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidInput(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-(e - min) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Draws an index with probability proportional to `exp(-E_j / T)`.
pub fn softmin_sample(energies: &[f64], temperature: f64, seed: u64) -> Result<usize> {
    let p = softmin_probabilities(energies, temperature)?;
    let dist = WeightedIndex::new(&p).map_err(|e| Error::Numerical(format!("softmin weights: {e}")))?;
    Ok(dist.sample(&mut rng_from_seed(seed)))
}

/// Heading each agent carries into the planning horizon.
pub(crate) fn current_headings(context: &SceneContext, histories: &[Vec<AgentState>]) -> Vec<f64> {
    histories
        .iter()
        .enumerate()
        .map(|(i, h)| {
            headings_along(h, context.fallback_heading(i))
                .last()
                .copied()
                .unwrap_or_else(|| context.fallback_heading(i))
        })
        .collect()
}

/// Smooths every agent of one proposal and scores the joint result.
pub fn evaluate_rollout(
    context: &SceneContext,
    proposal: Proposal,
    fallback_headings: &[f64],
    params: &MpsParams,
) -> Result<RolloutResult> {
    proposal.validate(context.num_agents(), params.horizon)?;
    let solved = proposal
        .anchors
        .iter()
        .zip(&proposal.goals)
        .map(|(anchors, goal)| {
            smooth_trajectory(
                anchors,
                anchors,
                *goal,
                &params.weights,
                params.include_goal,
                &params.solver,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let (trajectories, smoothing_reports): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    rescore(
        context,
        proposal,
        trajectories,
        smoothing_reports,
        fallback_headings,
        params,
    )
}

/// Scores frozen trajectories from scratch.
fn rescore(
    context: &SceneContext,
    proposal: Proposal,
    trajectories: Vec<Trajectory>,
    smoothing_reports: Vec<SolveReport>,
    fallback_headings: &[f64],
    params: &MpsParams,
) -> Result<RolloutResult> {
    let smoothing = trajectories
        .iter()
        .zip(proposal.anchors.iter().zip(&proposal.goals))
        .map(|(t, (a, g))| smoothing_breakdown(t, a, *g, &params.weights, params.include_goal))
        .collect::<Result<Vec<_>>>()?;
    let interaction = interaction_breakdown(
        &trajectories,
        context,
        fallback_headings,
        &params.weights,
        &params.field,
    )?;
    let mut energy = interaction.total();
    if params.energy == EnergyComposition::SmoothingPlusInteraction {
        energy += smoothing.iter().map(SmoothingBreakdown::total).sum::<f64>();
    }
    Ok(RolloutResult {
        proposal,
        trajectories,
        energy,
        smoothing,
        interaction,
        smoothing_reports,
    })
}

/// Recomputes a rollout's selection energy from its stored trajectories.
pub fn recompute_energy(
    context: &SceneContext,
    rollout: &RolloutResult,
    fallback_headings: &[f64],
    params: &MpsParams,
) -> Result<f64> {
    rescore(
        context,
        rollout.proposal.clone(),
        rollout.trajectories.clone(),
        Vec::new(),
        fallback_headings,
        params,
    )
    .map(|r| r.energy)
}

/// Picks the committed rollout. Rollouts with non-finite energy are never
/// chosen.
fn select(energies: &[f64], num_agents: usize, params: &MpsParams, seed: u64) -> Result<usize> {
    let candidates: Vec<usize> = (0..energies.len()).filter(|&j| energies[j].is_finite()).collect();
    if candidates.is_empty() {
        return Err(Error::Numerical("every rollout has a non-finite energy".into()));
    }
    let seed = derive_seed(seed, Purpose::Selection, 0);
    let pick = match params.selection {
        Selection::Softmin => {
            let scale = if params.normalize_energy {
                1.0 / (num_agents.max(1) * params.horizon) as f64
            } else {
                1.0
            };
            let e: Vec<f64> = candidates.iter().map(|&j| energies[j] * scale).collect();
            softmin_sample(&e, params.softmin_temperature, seed)?
        }
        Selection::UniformRandom => rng_from_seed(seed).random_range(0..candidates.len()),
    };
    Ok(candidates[pick])
}

/// One planning step. `histories[i]` ends with agent `i`'s current state.
///
/// Rollout `j` draws its proposal with a seed derived from `(seed, j)`, so
/// the outcome does not depend on how rollouts are scheduled.
pub fn mps_step(
    context: &SceneContext,
    histories: &[Vec<AgentState>],
    proposer: &dyn Proposer,
    params: &MpsParams,
    seed: u64,
) -> Result<MpsOutcome> {
    params.validate()?;
    if histories.len() != context.num_agents() {
        return Err(Error::ContractViolation(format!(
            "{} histories for {} agents",
            histories.len(),
            context.num_agents()
        )));
    }
    if let Some(i) = histories.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!("history of agent {i} is empty")));
    }
    let fallback = current_headings(context, histories);
    let rollouts = (0..params.num_rollouts)
        .into_par_iter()
        .map(|j| {
            let request = ProposalRequest {
                horizon: params.horizon,
                rollout_index: j,
                seed: derive_seed(seed, Purpose::Rollout, j as u64),
            };
            let proposal = proposer.propose(context, histories, &request)?;
            evaluate_rollout(context, proposal, &fallback, params)
        })
        .collect::<Result<Vec<_>>>()?;
    let energies: Vec<f64> = rollouts.iter().map(|r| r.energy).collect();
    let selected = select(&energies, context.num_agents(), params, seed)?;
    let chunk = rollouts[selected]
        .trajectories
        .iter()
        .map(|t| t.states[..params.chunk_size].to_vec())
        .collect();
    Ok(MpsOutcome {
        chunk,
        selected,
        rollouts,
    })
}
