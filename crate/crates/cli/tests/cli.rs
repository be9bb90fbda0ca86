use std::path::Path;
use std::process::Command;

use qpronto_cli::config::{GuessSpec, WeightSpec};
use qpronto_cli::output::{ITERATION_COLUMNS, ITERATIONS_FILE, REPORT_FILE, TRAJECTORY_FILE};
use qpronto_cli::*;

const PRESET: &str = "qubit_pi_pulse";

fn preset_text() -> &'static str {
    preset_source(PRESET).unwrap()
}

fn small_preset(steps: usize) -> ProblemConfig {
    let mut cfg = load_preset(PRESET).unwrap();
    cfg.grid.steps = steps;
    cfg
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn preset_carries_benchmark_values() {
    let cfg = load_preset(PRESET).unwrap();
    assert_eq!(cfg.system.dimension, 2);
    // H₀ = −(ω/2)σ_z with ω = 1, H₁ = σ_x
    assert_eq!(cfg.system.drift.re, vec![vec![-0.5, 0.0], vec![0.0, 0.5]]);
    assert_eq!(cfg.system.controls[0].hamiltonian.re, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    assert_eq!(cfg.grid.horizon, 5.0);
    assert_eq!(
        cfg.input_weight,
        WeightSpec::BlackmanFlanked { width: 0.6, epsilon: 1e-6 }
    );
    assert_eq!(
        cfg.initial_guess,
        GuessSpec::BlackmanFlanked { amplitude: 0.2, width: 0.6 }
    );
    assert_eq!(cfg.solver.tol, 1e-2);
    assert_eq!((cfg.solver.alpha, cfg.solver.beta, cfg.solver.delta), (0.4, 0.7, 0.6));
}

#[test]
fn non_hermitian_drift_is_rejected() {
    let text = preset_text().replace(
        "drift = { re = [[-0.5, 0.0], [0.0, 0.5]]",
        "drift = { re = [[-0.5, 0.3], [0.0, 0.5]]",
    );
    let err = parse_config(&text).unwrap_err();
    assert_eq!(err.field(), Some("system.drift"));
    let msg = err.to_string();
    assert!(msg.contains("system.drift") && msg.contains("Hermitian"), "{msg}");
    let line = text.lines().position(|l| l.starts_with("drift =")).unwrap() + 1;
    assert!(msg.starts_with(&format!("line {line}:")), "{msg}");
}

#[test]
fn unnormalized_ket_is_rejected() {
    let text = preset_text().replace(
        "initial = { re = [1.0, 0.0]",
        "initial = { re = [1.0, 1.0]",
    );
    let err = parse_config(&text).unwrap_err();
    assert_eq!(err.field(), Some("states.initial"));
    assert!(err.to_string().contains("normalized"));
}

#[test]
fn schema_and_syntax_errors() {
    let text = preset_text().replace("schema_version = 1", "schema_version = 7");
    assert!(matches!(
        parse_config(&text),
        Err(ConfigError::Schema { found: 7, expected: 1 })
    ));
    let text = preset_text().replace("schema_version = 1\n", "");
    assert!(matches!(parse_config(&text), Err(ConfigError::Parse(_))));
    let text = preset_text().replace("steps = 5000", "steps = 5000\nstride = 2");
    let err = parse_config(&text).unwrap_err();
    assert!(err.to_string().contains("stride"), "{err}");
    let text = preset_text().replace("steps = 5000", "steps = 4999");
    assert_eq!(parse_config(&text).unwrap_err().field(), Some("grid.steps"));
}

#[test]
fn bad_tabulated_profiles() {
    let text = preset_text().replace(
        "kind = \"blackman_flanked\"\nwidth = 0.6\nepsilon = 1e-6",
        "kind = \"tabulated\"\nsamples = [[0.0, 1.0], [4.0, 1.0]]",
    );
    let err = parse_config(&text).unwrap_err();
    assert_eq!(err.field(), Some("input_weight.samples"));
    assert!(err.to_string().contains("cover"));
}

#[test]
fn describe_mentions_dimensions_and_defaults() {
    let text = describe(&load_preset(PRESET).unwrap());
    for needle in ["n=2", "T=5", "N=5000", "P_λ = 0", "tol=1e-2"] {
        assert!(text.contains(needle), "missing {needle:?} in\n{text}");
    }
}

#[test]
fn describe_echoes_tabulated_sample_count() {
    let mut cfg = load_preset(PRESET).unwrap();
    cfg.input_weight = WeightSpec::Tabulated {
        samples: vec![[0.0, 2.0], [2.5, 1.0], [5.0, 2.0]],
    };
    cfg.forbidden.push(qpronto_cli::config::ForbiddenSpec {
        state: qpronto_cli::config::KetSpec::basis(2, 0),
        weight: 0.1,
    });
    cfg.validate().unwrap();
    let text = describe(&cfg);
    assert!(text.contains("tabulated, 3 samples"), "{text}");
    assert!(!text.contains("P_λ = 0"), "{text}");
}

#[test]
fn effective_config_round_trips() {
    let cfg = load_preset(PRESET).unwrap();
    assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn output_schema_is_pinned() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&small_preset(400), dir.path(), |_| {}).unwrap();
    assert_eq!(header(&out.iterations_path), ITERATION_COLUMNS.join(","));
    assert_eq!(header(&out.iterations_path), "index,cost,dg,gamma,step_kind,backtracks,infidelity");
    assert_eq!(header(&out.trajectory_path), "t,u1,P0,P1,re0,re1,im0,im1");
    let rows = std::fs::read_to_string(&out.iterations_path).unwrap().lines().count() - 1;
    assert_eq!(rows, out.report.iterations.len());
    let traj = std::fs::read_to_string(&out.trajectory_path).unwrap();
    assert_eq!(traj.lines().count(), 402);
    let summary: RunSummary =
        toml::from_str(&std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(summary.termination, out.report.termination.as_str());
    assert_eq!(summary.final_cost, out.report.final_cost);
    // populations sum to one on every row
    for line in traj.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[2] + v[3] - 1.0).abs() < 1e-8);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_preset(400);
    run(&cfg, a.path(), |_| {}).unwrap();
    run(&cfg, b.path(), |_| {}).unwrap();
    for f in [ITERATIONS_FILE, TRAJECTORY_FILE] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn observer_sees_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    let out = run(&small_preset(400), dir.path(), |r| seen.push(r.index)).unwrap();
    assert_eq!(seen, (0..out.report.iterations.len()).collect::<Vec<_>>());
}

#[test]
fn tabulated_guess_runs() {
    let mut cfg = small_preset(200);
    cfg.initial_guess = GuessSpec::Tabulated {
        samples: vec![vec![0.0, 0.0], vec![1.0, 0.3], vec![4.0, 0.3], vec![5.0, 0.0]],
    };
    cfg.validate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg, dir.path(), |_| {}).unwrap();
    for w in out.report.iterations.windows(2) {
        assert!(w[1].cost < w[0].cost);
    }
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qpronto"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let status = binary()
        .args(["--quiet", "describe", "--preset", PRESET])
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(String::from_utf8_lossy(&status.stdout).contains("n=2"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, preset_text().replace("initial = { re = [1.0, 0.0]", "initial = { re = [1.0, 1.0]")).unwrap();
    let out = dir.path().join("out");
    let status = binary()
        .args(["--quiet", "run", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_CONFIG));

    let capped = dir.path().join("capped.toml");
    std::fs::write(&capped, preset_text().replace("max_iters = 50", "max_iters = 1")).unwrap();
    let status = binary()
        .args(["--quiet", "run", "--grid", "200", "--tol", "1e-9", "--config"])
        .arg(&capped)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_MAX_ITERS));
    let effective = load_config(&out.join("effective_config.toml")).unwrap();
    assert_eq!(effective.grid.steps, 200);
    assert_eq!(effective.solver.tol, 1e-9);

    let status = binary()
        .args(["--quiet", "run", "--preset", PRESET, "--grid", "400", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_CONVERGED));

    let status = binary()
        .args(["--quiet", "run", "--preset", "nope", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_CONFIG));
}
