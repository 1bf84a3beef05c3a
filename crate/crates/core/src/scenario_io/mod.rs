//! Scenario and rollout files, desk-scale metrics and synthetic scenarios.
//!
//! Both file kinds are JSON with a `schema_version` field; floats are written
//! in shortest round-trip form and parsed exactly. Rollout files can also be
//! stored in a binary layout (JSON header plus raw little-endian `f64`
//! states). See `docs/formats.md` for the field reference.

mod generate;
mod metrics;
mod obb;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use generate::{generate_scenario, GeneratorParams, ScenarioKind};
pub use metrics::{compute_metrics, min_ade, Distribution, MetricsReport};
pub use obb::OrientedBox;

use crate::error::{Error, Result};
use crate::geometry::{
    AgentGeometry, AgentState, Proposal, SceneAgent, SceneContext, Trajectory, Vec2, DEFAULT_DT, DEFAULT_LENGTH,
    DEFAULT_WIDTH,
};
use crate::proposer::ProposerConfig;
use crate::simulation::{SimParams, SimulationOutput, StepDiagnostics};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const ROLLOUT_SCHEMA_VERSION: u32 = 1;

const BINARY_MAGIC: &[u8; 8] = b"MPSROLL\0";

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_length() -> f64 {
    DEFAULT_LENGTH
}

fn default_width() -> f64 {
    DEFAULT_WIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioAgent {
    pub id: String,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    /// Logged past, oldest first; the last entry is the current state.
    pub history: Vec<AgentState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<[f64; 2]>,
    /// Logged states after the current one, used only for evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logged_future: Option<Vec<AgentState>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub agents: Vec<ScenarioAgent>,
    #[serde(default)]
    pub road_edges: Vec<Vec<[f64; 2]>>,
    /// Closed polygons whose union is the drivable area.
    #[serde(default)]
    pub drivable_regions: Vec<Vec<[f64; 2]>>,
}

fn to_points(poly: &[[f64; 2]]) -> Vec<Vec2> {
    poly.iter().map(|p| Vec2::new(p[0], p[1])).collect()
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses JSON into `T`, checking `schema_version` first so that version
/// mismatches are reported as such.
fn parse_versioned<T: DeserializeOwned>(text: &str, path: &Path, expected: u32) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(path, e.to_string()))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| parse_error(path, "missing field `schema_version`"))?
        .as_u64()
        .ok_or_else(|| parse_error(path, "schema_version: expected an unsigned integer"))?;
    if version != expected as u64 {
        return Err(Error::SchemaVersion {
            found: version.min(u32::MAX as u64) as u32,
            expected,
        });
    }
    // Re-parse from text so error messages keep line and column numbers.
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        parse_error(path, format!("{field}: {}", e.into_inner()))
    })
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl ScenarioFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let file: Self = parse_versioned(text, path, SCENARIO_SCHEMA_VERSION)?;
        file.validate().map_err(|m| parse_error(path, m))?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_text(path)?, path)
    }

    /// Canonical text form: pretty JSON with defaults filled in.
    pub fn to_canonical_string(&self) -> String {
        to_pretty_json(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), self.to_canonical_string().as_bytes())
    }

    /// Returns a message naming the first offending field.
    fn validate(&self) -> std::result::Result<(), String> {
        let finite = |v: f64| v.is_finite();
        if !(finite(self.dt) && self.dt > 0.0) {
            return Err(format!("dt: must be > 0, got {}", self.dt));
        }
        if self.agents.is_empty() {
            return Err("agents: at least one agent is required".into());
        }
        let mut future_len = None;
        for (i, a) in self.agents.iter().enumerate() {
            if !(finite(a.width) && finite(a.length) && a.width > 0.0 && a.length >= a.width) {
                return Err(format!(
                    "agents[{i}].length/width: need length >= width > 0, got {} x {}",
                    a.length, a.width
                ));
            }
            if a.history.is_empty() {
                return Err(format!("agents[{i}].history: must not be empty"));
            }
            if let Some(k) = a.history.iter().position(|s| !s.is_finite()) {
                return Err(format!("agents[{i}].history[{k}]: non-finite value"));
            }
            if a.intent.is_some_and(|p| !(finite(p[0]) && finite(p[1]))) {
                return Err(format!("agents[{i}].intent: non-finite value"));
            }
            if let Some(f) = &a.logged_future {
                if let Some(k) = f.iter().position(|s| !s.is_finite()) {
                    return Err(format!("agents[{i}].logged_future[{k}]: non-finite value"));
                }
                if *future_len.get_or_insert(f.len()) != f.len() {
                    return Err(format!("agents[{i}].logged_future: length differs from other agents"));
                }
            }
        }
        if future_len.is_some() && self.agents.iter().any(|a| a.logged_future.is_none()) {
            return Err("logged_future: present for some agents but not all".into());
        }
        for (e, edge) in self.road_edges.iter().enumerate() {
            if edge.len() < 2 {
                return Err(format!("road_edges[{e}]: needs at least 2 points"));
            }
            if edge.iter().any(|p| !(finite(p[0]) && finite(p[1]))) {
                return Err(format!("road_edges[{e}]: non-finite point"));
            }
        }
        for (r, region) in self.drivable_regions.iter().enumerate() {
            if region.len() < 3 {
                return Err(format!("drivable_regions[{r}]: needs at least 3 points"));
            }
            if region.iter().any(|p| !(finite(p[0]) && finite(p[1]))) {
                return Err(format!("drivable_regions[{r}]: non-finite point"));
            }
        }
        Ok(())
    }

    pub fn context(&self) -> Result<SceneContext> {
        let agents = self
            .agents
            .iter()
            .map(|a| {
                Ok(SceneAgent {
                    geometry: AgentGeometry::new(a.id.clone(), a.length, a.width)?,
                    history: a.history.clone(),
                    intent: a.intent.map(|p| Vec2::new(p[0], p[1])),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SceneContext::new(
            self.dt,
            agents,
            self.road_edges.iter().map(|e| to_points(e)).collect(),
            self.drivable_regions.iter().map(|r| to_points(r)).collect(),
        )
    }

    /// Per-agent logged futures, when the scenario carries them.
    pub fn logged_future(&self) -> Option<Vec<Vec<AgentState>>> {
        self.agents.iter().map(|a| a.logged_future.clone()).collect()
    }
}

/// Loads a scenario as a simulation context plus its logged future, if any.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<(SceneContext, Option<Vec<Vec<AgentState>>>)> {
    let file = ScenarioFile::load(path)?;
    Ok((file.context()?, file.logged_future()))
}

/// Serialized form of one joint proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRecord {
    pub anchors: Vec<Vec<AgentState>>,
    pub goals: Vec<[f64; 2]>,
}

impl ProposalRecord {
    pub fn from_proposal(p: &Proposal) -> Self {
        Self {
            anchors: p.anchors.iter().map(|a| a.states.clone()).collect(),
            goals: p.goals.iter().map(|g| [g.x, g.y]).collect(),
        }
    }

    pub fn to_proposal(&self, dt: f64) -> Result<Proposal> {
        if self.anchors.len() != self.goals.len() {
            return Err(Error::InvalidInput(format!(
                "proposal record has {} anchor sets and {} goals",
                self.anchors.len(),
                self.goals.len()
            )));
        }
        Ok(Proposal {
            anchors: self
                .anchors
                .iter()
                .map(|a| Trajectory::new(a.clone(), dt))
                .collect::<Result<_>>()?,
            goals: self.goals.iter().map(|g| Vec2::new(g[0], g[1])).collect(),
        })
    }
}

/// Stored proposals, replayable by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSection {
    pub dt: f64,
    pub records: Vec<ProposalRecord>,
}

impl ProposalSection {
    pub fn from_proposals(dt: f64, proposals: &[Proposal]) -> Self {
        Self {
            dt,
            records: proposals.iter().map(ProposalRecord::from_proposal).collect(),
        }
    }
}

/// Standalone proposals file. Rollout files carry the same `proposals` key,
/// so either can feed the replay backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalsFile {
    pub schema_version: u32,
    pub proposals: ProposalSection,
}

impl ProposalsFile {
    pub fn new(proposals: ProposalSection) -> Self {
        Self {
            schema_version: ROLLOUT_SCHEMA_VERSION,
            proposals,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), to_pretty_json(self).as_bytes())
    }
}

/// Reads the proposals section of a proposals or (text) rollout file.
pub fn load_proposals(path: impl AsRef<Path>) -> Result<Vec<Proposal>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    // Lenient on other keys so rollout files are accepted too.
    #[derive(Deserialize)]
    struct Only {
        proposals: Option<ProposalSection>,
    }
    let only: Only = parse_versioned(&text, path, ROLLOUT_SCHEMA_VERSION)?;
    let section = only
        .proposals
        .ok_or_else(|| parse_error(path, "proposals: section missing"))?;
    section.records.iter().map(|r| r.to_proposal(section.dt)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSummary {
    pub agent_ids: Vec<String>,
    pub dt: f64,
}

impl ScenarioSummary {
    pub fn of(context: &SceneContext) -> Self {
        Self {
            agent_ids: context.agents().iter().map(|a| a.agent_id.clone()).collect(),
            dt: context.dt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RolloutFormat {
    #[default]
    Json,
    Binary,
}

/// Simulation output with the full parameter echo needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutFile {
    pub schema_version: u32,
    pub scenario: ScenarioSummary,
    pub params: SimParams,
    pub proposer: ProposerConfig,
    /// Indexed `[sample][agent][step]`.
    pub samples: Vec<Vec<Vec<AgentState>>>,
    #[serde(default)]
    pub diagnostics: Vec<StepDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposals: Option<ProposalSection>,
}

#[derive(Serialize, Deserialize)]
struct BinaryHeader {
    dims: [u64; 3],
    file: RolloutFile,
}

impl RolloutFile {
    pub fn new(
        context: &SceneContext,
        params: &SimParams,
        proposer: &ProposerConfig,
        output: &SimulationOutput,
    ) -> Self {
        Self {
            schema_version: ROLLOUT_SCHEMA_VERSION,
            scenario: ScenarioSummary::of(context),
            params: params.clone(),
            proposer: proposer.clone(),
            samples: output.samples.clone(),
            diagnostics: output.diagnostics.clone(),
            proposals: None,
        }
    }

    pub fn output(&self) -> SimulationOutput {
        SimulationOutput {
            samples: self.samples.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn to_canonical_string(&self) -> String {
        to_pretty_json(self)
    }

    /// Binary layout: magic, `u64` header length, JSON header (everything
    /// except the states), then `K * N * T * 4` little-endian `f64`s.
    pub fn to_binary(&self) -> Vec<u8> {
        let output = self.output();
        let dims = [output.num_samples(), output.num_agents(), output.num_steps()].map(|d| d as u64);
        let header = BinaryHeader {
            dims,
            file: RolloutFile {
                samples: Vec::new(),
                ..self.clone()
            },
        };
        let header = serde_json::to_vec(&header).expect("serializable");
        let mut out = Vec::with_capacity(16 + header.len() + 32 * dims.iter().product::<u64>() as usize);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for s in self.samples.iter().flatten().flatten() {
            for v in <[f64; 4]>::from(*s) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    fn from_binary(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |m: &str| parse_error(path, m.to_string());
        let len_bytes = bytes.get(8..16).ok_or_else(|| err("truncated binary header"))?;
        let header_len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
        let header_bytes = bytes
            .get(16..16usize.saturating_add(header_len))
            .ok_or_else(|| err("truncated binary header"))?;
        let header_text = std::str::from_utf8(header_bytes).map_err(|_| err("binary header is not UTF-8"))?;
        let value: serde_json::Value =
            serde_json::from_str(header_text).map_err(|e| parse_error(path, e.to_string()))?;
        let version = value.pointer("/file/schema_version").and_then(|v| v.as_u64());
        if version != Some(ROLLOUT_SCHEMA_VERSION as u64) {
            return Err(Error::SchemaVersion {
                found: version.unwrap_or(0) as u32,
                expected: ROLLOUT_SCHEMA_VERSION,
            });
        }
        let header: BinaryHeader = serde_json::from_value(value).map_err(|e| parse_error(path, e.to_string()))?;
        let [k, n, t] = header.dims.map(|d| d as usize);
        let body = &bytes[16 + header_len..];
        if body.len() != k * n * t * 32 {
            return Err(err("binary body size does not match dims"));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut next_state = || {
            AgentState::new(
                values.next().unwrap(),
                values.next().unwrap(),
                values.next().unwrap(),
                values.next().unwrap(),
            )
        };
        let samples = (0..k)
            .map(|_| (0..n).map(|_| (0..t).map(|_| next_state()).collect()).collect())
            .collect();
        Ok(RolloutFile { samples, ..header.file })
    }

    pub fn parse_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let file = if bytes.starts_with(BINARY_MAGIC) {
            Self::from_binary(bytes, path)?
        } else {
            let text =
                std::str::from_utf8(bytes).map_err(|_| parse_error(path, "rollout file is neither JSON nor binary"))?;
            parse_versioned(text, path, ROLLOUT_SCHEMA_VERSION)?
        };
        file.output().validate().map_err(|e| parse_error(path, e.to_string()))?;
        Ok(file)
    }

    /// Reads either layout, detected from the leading bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse_bytes(&bytes, path)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: RolloutFormat) -> Result<()> {
        let bytes = match format {
            RolloutFormat::Json => self.to_canonical_string().into_bytes(),
            RolloutFormat::Binary => self.to_binary(),
        };
        write_bytes(path.as_ref(), &bytes)
    }
}

/// Writes simulation output with its parameter echo.
pub fn save_rollouts(
    path: impl AsRef<Path>,
    context: &SceneContext,
    params: &SimParams,
    proposer: &ProposerConfig,
    output: &SimulationOutput,
    format: RolloutFormat,
) -> Result<()> {
    RolloutFile::new(context, params, proposer, output).save(path, format)
}
