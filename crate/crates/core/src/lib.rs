//! Closed-loop multi-agent trajectory simulation.
//!
//! Each simulation step samples `J` joint proposals, smooths every agent's
//! trajectory with damped Gauss-Newton against its anchors and physics
//! priors, scores the frozen joint rollouts with road-edge and inter-agent
//! Gaussian-field penalties, and commits the first chunk of a softmin-sampled
//! rollout before replanning.

pub mod cli;
pub mod error;
pub mod factors;
pub mod geometry;
pub mod proposer;
pub mod rollout;
pub mod scenario_io;
pub mod seed;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{AgentGeometry, AgentState, Proposal, SceneAgent, SceneContext, Trajectory, Vec2};
