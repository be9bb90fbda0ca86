//! Result files. Each file is written to a temporary sibling and renamed
//! into place once complete.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use qpronto::embedding::extract_state;
use qpronto::{IterationRecord, SolveReport, Trajectory};

pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.toml";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

pub const ITERATION_COLUMNS: [&str; 7] = [
    "index",
    "cost",
    "dg",
    "gamma",
    "step_kind",
    "backtracks",
    "infidelity",
];

/// A file being written in `dir`; invisible under its final name until
/// [`AtomicFile::commit`].
pub struct AtomicFile {
    tmp: NamedTempFile,
    dest: PathBuf,
}

impl AtomicFile {
    pub fn create(dir: &Path, name: &str) -> std::io::Result<Self> {
        Ok(Self {
            tmp: NamedTempFile::new_in(dir)?,
            dest: dir.join(name),
        })
    }

    pub fn writer(&mut self) -> &mut File {
        self.tmp.as_file_mut()
    }

    pub fn commit(self) -> std::io::Result<PathBuf> {
        self.tmp.as_file().sync_all()?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            self.tmp
                .as_file()
                .set_permissions(std::fs::Permissions::from_mode(0o644))?;
        }
        self.tmp.persist(&self.dest).map_err(|e| e.error)?;
        Ok(self.dest)
    }
}

pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> std::io::Result<PathBuf> {
    let mut f = AtomicFile::create(dir, name)?;
    f.writer().write_all(contents)?;
    f.commit()
}

// headers are written explicitly so they appear even for empty files
fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

#[derive(Serialize)]
struct IterationRow<'a> {
    index: usize,
    cost: f64,
    dg: f64,
    gamma: f64,
    step_kind: &'a str,
    backtracks: usize,
    infidelity: f64,
}

/// Streams iteration records as CSV rows, flushing after each one.
pub struct IterationLog {
    file: AtomicFile,
    csv: csv::Writer<File>,
}

impl IterationLog {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        let mut file = AtomicFile::create(dir, ITERATIONS_FILE)?;
        let mut csv = csv_writer(file.writer().try_clone()?);
        csv.write_record(ITERATION_COLUMNS)?;
        csv.flush()?;
        Ok(Self { file, csv })
    }

    pub fn push(&mut self, r: &IterationRecord) -> std::io::Result<()> {
        self.csv.serialize(IterationRow {
            index: r.index,
            cost: r.cost,
            dg: r.dg,
            gamma: r.gamma,
            step_kind: r.step_kind.as_str(),
            backtracks: r.backtracks,
            infidelity: r.infidelity,
        })?;
        self.csv.flush()
    }

    pub fn commit(mut self) -> std::io::Result<PathBuf> {
        self.csv.flush()?;
        drop(self.csv);
        self.file.commit()
    }
}

/// Header of the trajectory file for `n` levels and `m` controls.
pub fn trajectory_columns(n: usize, m: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=m).map(|j| format!("u{j}")));
    cols.extend((0..n).map(|i| format!("P{i}")));
    cols.extend((0..n).map(|i| format!("re{i}")));
    cols.extend((0..n).map(|i| format!("im{i}")));
    cols
}

pub fn write_trajectory(dir: &Path, xi: &Trajectory) -> std::io::Result<PathBuf> {
    let n = xi.x.first().len() / 2;
    let m = xi.u.first().len();
    let mut file = AtomicFile::create(dir, TRAJECTORY_FILE)?;
    {
        let mut csv = csv_writer(BufWriter::new(file.writer()));
        csv.write_record(trajectory_columns(n, m))?;
        for (k, t) in xi.grid().times().enumerate() {
            let x = xi.x.at_node(k);
            let pops = extract_state(x)
                .map_err(|e| std::io::Error::other(e.to_string()))?
                .populations();
            let row: Vec<f64> = std::iter::once(t)
                .chain(xi.u.at_node(k).iter().copied())
                .chain(pops.iter().copied())
                .chain(x.iter().copied())
                .collect();
            csv.serialize(row)?;
        }
        csv.flush()?;
    }
    file.commit()
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub termination: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    pub final_infidelity: f64,
    pub max_abs_control: f64,
    pub newton_steps: usize,
    pub quasi_newton_steps: usize,
    pub wall_time_seconds: f64,
}

impl RunSummary {
    pub fn new(report: &SolveReport, final_infidelity: f64, wall_time_seconds: f64) -> Self {
        use qpronto::StepKind;
        let taken = |kind| {
            report
                .iterations
                .iter()
                .filter(|r| r.step_kind == kind && r.gamma > 0.0)
                .count()
        };
        Self {
            termination: report.termination.as_str().to_string(),
            converged: report.converged,
            iterations: report.iterations.len(),
            final_cost: report.final_cost,
            final_infidelity,
            max_abs_control: report
                .final_control()
                .values()
                .iter()
                .flat_map(|u| u.iter())
                .fold(0.0, |a: f64, v| a.max(v.abs())),
            newton_steps: taken(StepKind::Newton),
            quasi_newton_steps: taken(StepKind::QuasiNewton),
            wall_time_seconds,
        }
    }
}

pub fn write_report(dir: &Path, summary: &RunSummary) -> std::io::Result<PathBuf> {
    let text = toml::to_string(summary).map_err(std::io::Error::other)?;
    write_atomic(dir, REPORT_FILE, text.as_bytes())
}
