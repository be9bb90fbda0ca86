//! Command-line front end: problem files, built-in presets, and result
//! files for the qpronto solver.

pub mod config;
pub mod output;
pub mod problem;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qpronto::solver::solve_with_observer;
use qpronto::{IterationRecord, SolveReport, Termination};

pub use config::{load_config, parse_config, ConfigError, ProblemConfig};
pub use output::RunSummary;
pub use problem::Problem;

/// Built-in problems, by name.
pub const PRESETS: &[(&str, &str)] = &[(
    "qubit_pi_pulse",
    include_str!("../presets/qubit_pi_pulse.toml"),
)];

pub fn preset_source(name: &str) -> Result<&'static str, ConfigError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| *src)
        .ok_or_else(|| ConfigError::UnknownPreset {
            name: name.to_string(),
            available: PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
        })
}

pub fn load_preset(name: &str) -> Result<ProblemConfig, ConfigError> {
    parse_config(preset_source(name)?)
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub grid: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ProblemConfig) -> Result<(), ConfigError> {
        if let Some(tol) = self.tol {
            cfg.solver.tol = tol;
        }
        if let Some(steps) = self.grid {
            cfg.grid.steps = steps;
        }
        cfg.validate()
    }
}

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_STALLED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

pub fn exit_code(termination: Termination) -> i32 {
    match termination {
        Termination::Converged => EXIT_CONVERGED,
        Termination::MaxIters => EXIT_MAX_ITERS,
        Termination::LineSearchStalled => EXIT_STALLED,
    }
}

fn describe_weight(w: &config::WeightSpec) -> String {
    use config::WeightSpec::*;
    match w {
        Constant { value } => format!("constant theta = {value}"),
        BlackmanFlanked { width, epsilon } => {
            format!("Blackman-flanked, width = {width}, epsilon = {epsilon:e}")
        }
        Tabulated { samples } => format!("tabulated, {} samples", samples.len()),
    }
}

fn describe_guess(g: &config::GuessSpec) -> String {
    use config::GuessSpec::*;
    match g {
        Constant { value } => format!("constant u = {value}"),
        BlackmanFlanked { amplitude, width } => {
            format!("Blackman-flanked, amplitude = {amplitude}, width = {width}")
        }
        Tabulated { samples } => format!("tabulated, {} samples", samples.len()),
    }
}

/// Human-readable summary of a problem.
pub fn describe(cfg: &ProblemConfig) -> String {
    let mut s = String::new();
    let n = cfg.system.dimension;
    let m = cfg.system.controls.len();
    if let Some(name) = &cfg.name {
        let _ = writeln!(s, "problem: {name}");
    }
    let _ = writeln!(s, "levels: n={n} (real state length {})", 2 * n);
    let _ = writeln!(s, "controls: m={m}");
    for (i, c) in cfg.system.controls.iter().enumerate() {
        let coupling = match &c.coupling {
            config::CouplingSpec::Linear => "f(u) = u".to_string(),
            config::CouplingSpec::Polynomial { coefficients } => {
                format!("polynomial, coefficients {coefficients:?}")
            }
        };
        let _ = writeln!(s, "  control {}: {coupling}", i + 1);
    }
    let _ = writeln!(
        s,
        "horizon: T={}, grid: N={} (dt = {})",
        cfg.grid.horizon,
        cfg.grid.steps,
        cfg.grid.horizon / cfg.grid.steps as f64
    );
    if cfg.forbidden.is_empty() {
        let _ = writeln!(s, "transient penalty: P_λ = 0");
    } else {
        for f in &cfg.forbidden {
            let _ = writeln!(s, "transient penalty: weight {} on state re={:?} im={:?}", f.weight, f.state.re, f.state.im);
        }
    }
    let _ = writeln!(s, "input weight: {}", describe_weight(&cfg.input_weight));
    let _ = writeln!(s, "initial guess: {}", describe_guess(&cfg.initial_guess));
    let sv = &cfg.solver;
    let _ = writeln!(
        s,
        "solver: tol={:e}, alpha={}, beta={}, delta={}, max_iters={}, max_backtracks={}",
        sv.tol, sv.alpha, sv.beta, sv.delta, sv.max_iters, sv.max_backtracks
    );
    s
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver error: {0}")]
    Solver(#[from] qpronto::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

pub struct RunOutputs {
    pub report: SolveReport,
    pub summary: RunSummary,
    pub iterations_path: PathBuf,
    pub trajectory_path: PathBuf,
    pub report_path: PathBuf,
    pub config_path: PathBuf,
}

/// Solves `cfg`, writing all result files into `out_dir`. `observer` sees
/// each iteration record as it is produced.
pub fn run(
    cfg: &ProblemConfig,
    out_dir: &Path,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<RunOutputs, RunError> {
    let problem = Problem::from_config(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let config_path = output::write_atomic(
        out_dir,
        output::EFFECTIVE_CONFIG_FILE,
        cfg.to_toml().as_bytes(),
    )?;

    let started = Instant::now();
    let mut log = output::IterationLog::create(out_dir)?;
    let mut log_error = None;
    let report = solve_with_observer(
        &problem.system,
        &problem.cost,
        &problem.initial_state,
        &problem.guess,
        &problem.solver,
        |rec| {
            if log_error.is_none() {
                if let Err(e) = log.push(rec) {
                    log_error = Some(e);
                }
            }
            observer(rec);
        },
    )?;
    let wall = started.elapsed().as_secs_f64();
    if let Some(e) = log_error {
        return Err(e.into());
    }
    let iterations_path = log.commit()?;
    let trajectory_path = output::write_trajectory(out_dir, &report.final_trajectory)?;
    let infidelity = problem.cost.infidelity(report.final_trajectory.final_state());
    let summary = RunSummary::new(&report, infidelity, wall);
    let report_path = output::write_report(out_dir, &summary)?;
    Ok(RunOutputs {
        report,
        summary,
        iterations_path,
        trajectory_path,
        report_path,
        config_path,
    })
}
