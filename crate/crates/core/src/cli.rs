//! Command-line front end: `simulate`, `metrics`, `gen-scenario`, `inspect`.
//!
//! Exit codes: 0 success, 1 usage (bad flags or parameter values, missing
//! paths), 2 input data (malformed files, shape mismatches, missing logged
//! future), 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::proposer::{ProposerConfig, ProposerKind};
use crate::rollout::{EnergyComposition, Selection};
use crate::scenario_io::{
    compute_metrics, generate_scenario, GeneratorParams, RolloutFile, RolloutFormat, ScenarioFile, ScenarioKind,
    ROLLOUT_SCHEMA_VERSION, SCENARIO_SCHEMA_VERSION,
};
use crate::simulation::{rerun_step, simulate, SimParams, SimulationOutput};

pub const OUT_DIR_ENV: &str = "MPS_SIM_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "mps-sim-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mps-sim", version, about = "Closed-loop multi-agent trajectory simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the closed-loop simulation on a scenario and write a rollout file.
    Simulate(SimulateArgs),
    /// Compute collision, offroad, kinematic and minADE metrics for a rollout file.
    Metrics(MetricsArgs),
    /// Write a synthetic scenario.
    GenScenario(GenArgs),
    /// Re-run one stored planning step and print per-rollout factor energies.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// TOML file with `[sim]` and `[proposer]` tables; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of samples.
    #[arg(long = "K", visible_alias = "samples")]
    k: Option<usize>,
    /// Simulated steps per sample.
    #[arg(long = "T", visible_alias = "steps")]
    t: Option<usize>,
    /// Rollouts per planning step.
    #[arg(long = "J", visible_alias = "rollouts")]
    j: Option<usize>,
    #[arg(long)]
    chunk: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_enum)]
    selection: Option<Selection>,
    #[arg(long, value_enum)]
    energy: Option<EnergyComposition>,
    #[arg(long, value_enum)]
    proposer: Option<ProposerKind>,
    /// Proposal file for the replay proposer.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write positions.csv and energies.csv.
    #[arg(long)]
    plot_data: bool,
    /// Write rollouts.bin instead of rollouts.json.
    #[arg(long)]
    binary: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    rollouts: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: ScenarioKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    future_steps: Option<usize>,
    /// Output file; defaults to `<out>/<kind>_<seed>.json`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    rollouts: PathBuf,
    #[arg(long, default_value_t = 0)]
    sample: usize,
    /// Planning step index within the sample.
    #[arg(long, default_value_t = 0)]
    step: usize,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    sim: SimParams,
    proposer: ProposerConfig,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} file not found: {}", path.display())))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Runs `f` on a dedicated pool when a thread count is given.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(usage("--threads must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| usage(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    scenario_schema_version: u32,
    rollout_schema_version: u32,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<&'a SimParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    proposer: Option<&'a ProposerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl<'a> Manifest<'a> {
    fn new(command: &'a str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            scenario_schema_version: SCENARIO_SCHEMA_VERSION,
            rollout_schema_version: ROLLOUT_SCHEMA_VERSION,
            inputs: Vec::new(),
            outputs: Vec::new(),
            params: None,
            proposer: None,
            seed: None,
        }
    }

    fn write(&self, dir: &Path) -> CliResult<()> {
        write_file(&dir.join("manifest.json"), pretty(self).as_bytes())
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    require_file(path, "config")?;
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let cfg: ConfigFile = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

/// Simulation and proposer parameters after applying config and flags.
fn resolve_params(args: &SimulateArgs) -> CliResult<(SimParams, ProposerConfig)> {
    let ConfigFile {
        sim: mut p,
        mut proposer,
    } = load_config(args.config.as_deref())?;
    if let Some(v) = args.seed {
        p.master_seed = v;
    }
    if let Some(v) = args.k {
        p.num_samples = v;
    }
    if let Some(v) = args.t {
        p.total_steps = v;
    }
    if let Some(v) = args.j {
        p.mps.num_rollouts = v;
    }
    if let Some(v) = args.chunk {
        p.mps.chunk_size = v;
    }
    if let Some(v) = args.horizon {
        p.mps.horizon = v;
    }
    if let Some(v) = args.temperature {
        p.mps.softmin_temperature = v;
    }
    if let Some(v) = args.selection {
        p.mps.selection = v;
    }
    if let Some(v) = args.energy {
        p.mps.energy = v;
    }
    if let Some(v) = args.proposer {
        proposer.kind = v;
    }
    if let Some(v) = &args.replay {
        require_file(v, "replay")?;
        proposer.replay_path = Some(v.clone());
        if args.proposer.is_none() {
            proposer.kind = ProposerKind::Replay;
        }
    }
    p.validate().map_err(|e| usage(e.to_string()))?;
    proposer.validate().map_err(|e| usage(e.to_string()))?;
    Ok((p, proposer))
}

fn write_plot_data(dir: &Path, output: &SimulationOutput) -> CliResult<Vec<PathBuf>> {
    let csv_err = |path: &Path, e: csv::Error| -> Failure {
        Error::Io {
            path: path.to_path_buf(),
            source: e.into(),
        }
        .into()
    };
    let positions = dir.join("positions.csv");
    let mut w = csv::Writer::from_path(&positions).map_err(|e| csv_err(&positions, e))?;
    w.write_record(["sample", "agent", "step", "x", "y", "vx", "vy"])
        .map_err(|e| csv_err(&positions, e))?;
    for (k, sample) in output.samples.iter().enumerate() {
        for (i, traj) in sample.iter().enumerate() {
            for (t, s) in traj.iter().enumerate() {
                w.serialize((k, i, t, s.x, s.y, s.vx, s.vy))
                    .map_err(|e| csv_err(&positions, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&positions, e))?;

    let energies = dir.join("energies.csv");
    let mut w = csv::Writer::from_path(&energies).map_err(|e| csv_err(&energies, e))?;
    w.write_record(["sample", "step", "start", "rollout", "energy", "selected"])
        .map_err(|e| csv_err(&energies, e))?;
    for d in &output.diagnostics {
        for (j, e) in d.energies.iter().enumerate() {
            w.serialize((d.sample, d.step, d.start, j, e, u8::from(j == d.selected)))
                .map_err(|e| csv_err(&energies, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&energies, e))?;
    Ok(vec![positions, energies])
}

fn run_simulate(args: SimulateArgs) -> CliResult<()> {
    require_file(&args.scenario, "scenario")?;
    let (params, proposer_cfg) = resolve_params(&args)?;
    let scenario = ScenarioFile::load(&args.scenario)?;
    let context = scenario.context()?;
    let proposer = proposer_cfg.build()?;
    let output = with_threads(args.threads, || simulate(&context, proposer.as_ref(), &params))??;

    let dir = &args.out.out;
    create_dir(dir)?;
    let (name, format) = if args.binary {
        ("rollouts.bin", RolloutFormat::Binary)
    } else {
        ("rollouts.json", RolloutFormat::Json)
    };
    let rollout_path = dir.join(name);
    RolloutFile::new(&context, &params, &proposer_cfg, &output).save(&rollout_path, format)?;
    let mut outputs = vec![rollout_path];
    if args.plot_data {
        outputs.extend(write_plot_data(dir, &output)?);
    }
    let mut inputs = vec![display(&args.scenario)];
    inputs.extend(args.config.as_deref().map(display));
    inputs.extend(proposer_cfg.replay_path.as_deref().map(display));
    Manifest {
        inputs,
        outputs: outputs.iter().map(|p| display(p)).collect(),
        params: Some(&params),
        proposer: Some(&proposer_cfg),
        seed: Some(params.master_seed),
        ..Manifest::new("simulate")
    }
    .write(dir)?;
    println!(
        "simulated {} samples x {} agents x {} steps -> {}",
        output.num_samples(),
        output.num_agents(),
        output.num_steps(),
        outputs[0].display()
    );
    Ok(())
}

fn load_pair(scenario: &Path, rollouts: &Path) -> CliResult<(ScenarioFile, RolloutFile)> {
    require_file(scenario, "scenario")?;
    require_file(rollouts, "rollout")?;
    let scenario = ScenarioFile::load(scenario)?;
    let rollouts = RolloutFile::load(rollouts)?;
    let ids: Vec<&str> = scenario.agents.iter().map(|a| a.id.as_str()).collect();
    if ids != rollouts.scenario.agent_ids {
        return Err(Error::ContractViolation(format!(
            "rollout file agents {:?} do not match scenario agents {ids:?}",
            rollouts.scenario.agent_ids
        ))
        .into());
    }
    Ok((scenario, rollouts))
}

fn run_metrics(args: MetricsArgs) -> CliResult<()> {
    let (scenario, rollouts) = load_pair(&args.scenario, &args.rollouts)?;
    let context = scenario.context()?;
    let logged = scenario.logged_future();
    let output = rollouts.output();
    let report = with_threads(args.threads, || compute_metrics(&output, &context, logged.as_deref()))??;
    let text = pretty(&report);
    print!("{text}");
    let dir = &args.out.out;
    create_dir(dir)?;
    let path = dir.join("metrics.json");
    write_file(&path, text.as_bytes())?;
    Manifest {
        inputs: vec![display(&args.scenario), display(&args.rollouts)],
        outputs: vec![display(&path)],
        ..Manifest::new("metrics")
    }
    .write(dir)
}

fn run_gen(args: GenArgs) -> CliResult<()> {
    let defaults = GeneratorParams::default();
    let num_agents = args.agents.unwrap_or(match args.kind {
        ScenarioKind::Stationary => 3,
        _ => defaults.num_agents,
    });
    let params = GeneratorParams {
        num_agents,
        speed: args.speed.unwrap_or(defaults.speed),
        separation: args.separation.unwrap_or(defaults.separation),
        jitter: args.jitter.unwrap_or(defaults.jitter),
        future_steps: args.future_steps.unwrap_or(defaults.future_steps),
        ..defaults
    };
    let file = generate_scenario(args.kind, &params, args.seed)?;
    let kind = serde_json::to_value(args.kind).expect("serializable");
    let (path, dir) = match args.output {
        Some(p) => {
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).map(Path::to_path_buf);
            (p, dir.unwrap_or_else(|| PathBuf::from(".")))
        }
        None => {
            let dir = args.out.out.clone();
            (
                dir.join(format!("{}_{}.json", kind.as_str().unwrap_or("scenario"), args.seed)),
                dir,
            )
        }
    };
    create_dir(&dir)?;
    file.save(&path)?;
    Manifest {
        outputs: vec![display(&path)],
        seed: Some(args.seed),
        ..Manifest::new("gen-scenario")
    }
    .write(&dir)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_inspect(args: InspectArgs) -> CliResult<()> {
    let (scenario, rollouts) = load_pair(&args.scenario, &args.rollouts)?;
    let context = scenario.context()?;
    let diag = rollouts
        .diagnostics
        .iter()
        .find(|d| d.sample == args.sample && d.step == args.step)
        .ok_or_else(|| {
            Failure::from(Error::InvalidInput(format!(
                "no planning step {} for sample {} in {}",
                args.step,
                args.sample,
                args.rollouts.display()
            )))
        })?;
    let proposer = rollouts.proposer.build()?;
    let sample = &rollouts.samples[diag.sample];
    let outcome = with_threads(args.threads, || {
        rerun_step(&context, proposer.as_ref(), &rollouts.params, sample, diag)
    })??;
    println!(
        "sample {} step {} start {} horizon {} chunk {} selected {}",
        diag.sample, diag.step, diag.start, diag.horizon, diag.chunk, diag.selected
    );
    println!(
        "{:>4} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}  stored",
        "j", "motion", "goal", "linear", "angular", "obstacle", "collision", "energy"
    );
    for (j, r) in outcome.rollouts.iter().enumerate() {
        let sum = |f: fn(&crate::factors::SmoothingBreakdown) -> f64| r.smoothing.iter().map(f).sum::<f64>();
        let stored = diag.energies.get(j).copied().unwrap_or(f64::NAN);
        let marker = if j == diag.selected { " *" } else { "" };
        println!(
            "{j:>4} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6e}  {}{marker}",
            sum(|b| b.motion),
            sum(|b| b.goal),
            sum(|b| b.linear),
            sum(|b| b.angular),
            r.interaction.obstacle,
            r.interaction.collision,
            r.energy,
            if stored == r.energy { "match" } else { "DIFFERS" },
        );
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code; diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Metrics(a) => run_metrics(a),
        Command::GenScenario(a) => run_gen(a),
        Command::Inspect(a) => run_inspect(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
