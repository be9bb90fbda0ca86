use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qpronto_cli::{
    describe, exit_code, load_config, load_preset, run, ConfigError, Overrides, ProblemConfig,
    EXIT_CONFIG,
};

#[derive(Parser)]
#[command(name = "qpronto", version, about = "Newton-type optimal control of closed quantum systems")]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and write results.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Exit tolerance on -Dg.
        #[arg(long)]
        tol: Option<f64>,
        /// Number of grid steps (even).
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Print a summary of a problem.
    Describe {
        #[command(flatten)]
        source: Source,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Problem file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in problem name.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ProblemConfig, ConfigError> {
        match (&self.config, &self.preset) {
            (Some(path), _) => load_config(path),
            (None, Some(name)) => load_preset(name),
            (None, None) => unreachable!("clap enforces one source"),
        }
    }
}

fn config_failure(e: ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Describe { source } => match source.load() {
            Ok(cfg) => {
                print!("{}", describe(&cfg));
                ExitCode::SUCCESS
            }
            Err(e) => config_failure(e),
        },
        Command::Run { source, out, tol, grid } => {
            let mut cfg = match source.load() {
                Ok(cfg) => cfg,
                Err(e) => return config_failure(e),
            };
            if let Err(e) = (Overrides { tol, grid }).apply(&mut cfg) {
                return config_failure(e);
            }
            let quiet = cli.quiet;
            let result = run(&cfg, &out, |r| {
                if !quiet {
                    eprintln!(
                        "iter {:>3}  cost {:.6e}  Dg {:.3e}  gamma {:.4}  {:<12} infidelity {:.4e}",
                        r.index,
                        r.cost,
                        r.dg,
                        r.gamma,
                        r.step_kind.as_str(),
                        r.infidelity
                    );
                }
            });
            match result {
                Ok(outputs) => {
                    let s = &outputs.summary;
                    if !quiet {
                        eprintln!(
                            "{} after {} iterations: cost {:.6e}, infidelity {:.4e}, {:.2}s",
                            s.termination, s.iterations, s.final_cost, s.final_infidelity, s.wall_time_seconds
                        );
                        eprintln!("results in {}", out.display());
                    }
                    ExitCode::from(exit_code(outputs.report.termination) as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
