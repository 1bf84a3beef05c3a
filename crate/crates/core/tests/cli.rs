mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;
use mps_sim::scenario_io::{MetricsReport, RolloutFile, ScenarioFile};
use serde_json::Value;

fn mps(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mps-sim"));
    cmd.args(args).env_remove("MPS_SIM_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("MPS_SIM_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("scenario_head_on.json");
    let mut files = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = dir.path().join(run);
        let o = mps(
            &[
                "simulate",
                "--scenario",
                s(&scenario),
                "--seed",
                "7",
                "--K",
                "2",
                "--T",
                "15",
                "--J",
                "5",
                "--threads",
                threads,
                "--out",
                s(&out),
            ],
            None,
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(out.join("rollouts.json")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn loop_arithmetic_shows_in_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("scenario_head_on.json");
    let o = mps(
        &[
            "simulate",
            "--scenario",
            s(&scenario),
            "--K",
            "2",
            "--T",
            "20",
            "--chunk",
            "10",
            "--J",
            "3",
        ],
        Some(dir.path()),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let file = RolloutFile::load(dir.path().join("rollouts.json")).unwrap();
    assert_eq!(file.diagnostics.len(), 4);
    for k in 0..2 {
        let steps: Vec<usize> = file
            .diagnostics
            .iter()
            .filter(|d| d.sample == k)
            .map(|d| d.start)
            .collect();
        assert_eq!(steps, vec![0, 10]);
    }
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["params"], serde_json::to_value(&file.params).unwrap());
    assert_eq!(manifest["rollout_schema_version"], 1);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[sim]\nnum_samples = 3\ntotal_steps = 12\n[sim.mps]\nnum_rollouts = 4\nsoftmin_temperature = 0.5\n",
    )
    .unwrap();
    let scenario = fixture("scenario_two_agents.json");
    let out = dir.path().join("o");
    let o = mps(
        &[
            "simulate",
            "--scenario",
            s(&scenario),
            "--config",
            s(&cfg),
            "--K",
            "2",
            "--out",
            s(&out),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let file = RolloutFile::load(out.join("rollouts.json")).unwrap();
    assert_eq!(file.params.num_samples, 2);
    assert_eq!(file.params.total_steps, 12);
    assert_eq!(file.params.mps.num_rollouts, 4);
    assert_eq!(file.params.mps.softmin_temperature, 0.5);
    assert_eq!(file.params.mps.chunk_size, 10);
}

#[test]
fn plot_data_and_binary_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("scenario_head_on.json");
    let o = mps(
        &[
            "simulate",
            "--scenario",
            s(&scenario),
            "--K",
            "1",
            "--T",
            "10",
            "--J",
            "3",
            "--plot-data",
            "--binary",
            "--out",
            s(dir.path()),
        ],
        None,
    );
    assert_eq!(code(&o), 0);
    let positions = std::fs::read_to_string(dir.path().join("positions.csv")).unwrap();
    assert_eq!(positions.lines().count(), 1 + 2 * 10);
    let energies = std::fs::read_to_string(dir.path().join("energies.csv")).unwrap();
    assert_eq!(energies.lines().count(), 1 + 3);
    assert_eq!(energies.lines().skip(1).filter(|l| l.ends_with(",1")).count(), 1);
    assert!(RolloutFile::load(dir.path().join("rollouts.bin")).is_ok());
}

#[test]
fn metrics_report_min_ade_zero_for_logged_rollout() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = ScenarioFile::load(fixture("scenario_head_on.json")).unwrap();
    let mut file = RolloutFile::load(fixture("rollouts_head_on.json")).unwrap();
    let t = file.samples[0][0].len();
    file.samples = vec![scenario
        .logged_future()
        .unwrap()
        .into_iter()
        .map(|l| l[..t].to_vec())
        .collect()];
    file.diagnostics.clear();
    let rollouts = dir.path().join("logged.json");
    file.save(&rollouts, Default::default()).unwrap();
    let o = mps(
        &[
            "metrics",
            "--scenario",
            s(&fixture("scenario_head_on.json")),
            "--rollouts",
            s(&rollouts),
            "--out",
            s(dir.path()),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: MetricsReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report.min_ade, Some(0.0));
    let written = std::fs::read(dir.path().join("metrics.json")).unwrap();
    assert_eq!(written, o.stdout);
}

#[test]
fn softmin_and_uniform_reports_for_the_ablation_pair() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("scenario_head_on.json");
    let mut reports = Vec::new();
    for sel in ["softmin", "uniform-random"] {
        let out = dir.path().join(sel);
        let o = mps(
            &[
                "simulate",
                "--scenario",
                s(&scenario),
                "--K",
                "2",
                "--T",
                "20",
                "--J",
                "6",
                "--selection",
                sel,
                "--out",
                s(&out),
            ],
            None,
        );
        assert_eq!(code(&o), 0);
        let o = mps(
            &[
                "metrics",
                "--scenario",
                s(&scenario),
                "--rollouts",
                s(&out.join("rollouts.json")),
                "--out",
                s(&out),
            ],
            None,
        );
        assert_eq!(code(&o), 0);
        reports.push(serde_json::from_slice::<MetricsReport>(&o.stdout).unwrap());
    }
    assert!(reports.iter().all(|r| (0.0..=1.0).contains(&r.collision_rate)));
}

#[test]
fn gen_scenario_uses_the_env_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = mps(
        &["gen-scenario", "--kind", "crossing", "--agents", "4", "--seed", "5"],
        Some(dir.path()),
    );
    assert_eq!(code(&o), 0);
    let file = ScenarioFile::load(dir.path().join("crossing_5.json")).unwrap();
    assert_eq!(file.agents.len(), 4);
    assert!(dir.path().join("manifest.json").is_file());
}

#[test]
fn inspect_prints_every_factor() {
    let o = mps(
        &[
            "inspect",
            "--scenario",
            s(&fixture("scenario_head_on.json")),
            "--rollouts",
            s(&fixture("rollouts_head_on.json")),
            "--step",
            "1",
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    for col in ["motion", "goal", "linear", "angular", "obstacle", "collision"] {
        assert!(text.contains(col));
    }
    assert_eq!(text.matches("match").count(), 4);
    assert!(!text.contains("DIFFERS"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let scenario = fixture("scenario_head_on.json");
    let rollouts = fixture("rollouts_head_on.json");
    // Usage: unknown flag, missing file, bad parameter value.
    assert_eq!(code(&mps(&["simulate", "--bogus"], None)), 1);
    assert_eq!(
        code(&mps(
            &[
                "metrics",
                "--scenario",
                "missing.json",
                "--rollouts",
                s(&rollouts),
                "--out",
                s(out)
            ],
            None
        )),
        1
    );
    assert_eq!(
        code(&mps(
            &["simulate", "--scenario", s(&scenario), "--J", "0", "--out", s(out)],
            None
        )),
        1
    );
    // Input data: malformed file, wrong schema, mismatched scenario.
    let bad = fixture("scenario_bad_field.json");
    assert_eq!(
        code(&mps(&["simulate", "--scenario", s(&bad), "--out", s(out)], None)),
        2
    );
    let old = fixture("scenario_bad_version.json");
    assert_eq!(
        code(&mps(&["simulate", "--scenario", s(&old), "--out", s(out)], None)),
        2
    );
    let other = fixture("scenario_minimal.json");
    assert_eq!(
        code(&mps(
            &[
                "metrics",
                "--scenario",
                s(&other),
                "--rollouts",
                s(&rollouts),
                "--out",
                s(out)
            ],
            None
        )),
        2
    );
    assert_eq!(code(&mps(&["--help"], None)), 0);
}

#[test]
fn numerical_failure_exits_with_three() {
    // A proposal that is finite but overflows every energy to infinity.
    let dir = tempfile::tempdir().unwrap();
    let proposals = dir.path().join("p.json");
    let huge = 1e200;
    let text = format!(
        r#"{{"schema_version": 1, "proposals": {{"dt": 0.1, "records": [{{"anchors": [[[0.0, 0.0, 0.0, 0.0], [{huge}, 0.0, 0.0, 0.0]]], "goals": [[0.0, 0.0]]}}]}}}}"#
    );
    std::fs::write(&proposals, text).unwrap();
    let o = mps(
        &[
            "simulate",
            "--scenario",
            s(&fixture("scenario_minimal.json")),
            "--replay",
            s(&proposals),
            "--K",
            "1",
            "--T",
            "1",
            "--J",
            "1",
            "--out",
            s(dir.path()),
        ],
        None,
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
