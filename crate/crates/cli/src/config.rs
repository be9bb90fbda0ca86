//! Problem description files.
//!
//! A problem is a TOML document with an explicit `schema_version`. Complex
//! matrices and kets are written as separate `re`/`im` arrays; time profiles
//! are tagged by `kind`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use qpronto::embedding::hermitian_defect;
use qpronto::{ComplexKet, SolverConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Amplitudes and operators may deviate from unit norm / Hermiticity by this much.
pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported schema_version {found} (expected {expected})")]
    Schema { found: u32, expected: u32 },
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
    #[error("unknown preset {name:?} (available: {available})")]
    UnknownPreset { name: String, available: String },
}

impl ConfigError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.to_string(),
            line: None,
            message: message.into(),
        }
    }

    /// Name of the offending field, for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }

    fn anchored(self, source: &str) -> Self {
        match self {
            Self::Invalid { field, line: None, message } => {
                let line = locate(source, &field);
                Self::Invalid { field, line, message }
            }
            other => other,
        }
    }
}

/// Best-effort line lookup for a dotted field path: the last segment that
/// appears as a key or table header.
fn locate(source: &str, field: &str) -> Option<usize> {
    let segments: Vec<&str> = field
        .split('.')
        .map(|s| s.split('[').next().unwrap_or(s))
        .collect();
    for seg in segments.iter().rev() {
        for (i, line) in source.lines().enumerate() {
            let l = line.trim_start();
            let is_key = l
                .strip_prefix(seg)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false);
            let is_header = l.starts_with('[')
                && l.trim_matches(|c| c == '[' || c == ']').rsplit('.').next() == Some(seg);
            if is_key || is_header {
                return Some(i + 1);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrix {
    pub fn from_matrix(m: &DMatrix<Complex64>) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            re: rows(|c| c.re),
            im: rows(|c| c.im),
        }
    }

    fn to_matrix(&self, field: &str, n: usize) -> Result<DMatrix<Complex64>, ConfigError> {
        for (part, rows) in [("re", &self.re), ("im", &self.im)] {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(ConfigError::invalid(
                    field,
                    format!("{part} must be a {n}x{n} array"),
                ));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(ConfigError::invalid(field, format!("{part} has non-finite entries")));
            }
        }
        Ok(DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(self.re[i][j], self.im[i][j])
        }))
    }

    fn hermitian(&self, field: &str, n: usize) -> Result<DMatrix<Complex64>, ConfigError> {
        let m = self.to_matrix(field, n)?;
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL {
            return Err(ConfigError::invalid(
                field,
                format!("matrix is not Hermitian (max |H - H^dagger| = {defect:e})"),
            ));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KetSpec {
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Vec<f64>,
}

impl KetSpec {
    pub fn basis(n: usize, k: usize) -> Self {
        let mut re = vec![0.0; n];
        re[k] = 1.0;
        Self { re, im: vec![0.0; n] }
    }

    fn to_ket(&self, field: &str, n: usize) -> Result<ComplexKet, ConfigError> {
        let im = if self.im.is_empty() { vec![0.0; n] } else { self.im.clone() };
        if self.re.len() != n || im.len() != n {
            return Err(ConfigError::invalid(field, format!("expected {n} amplitudes")));
        }
        let ket = ComplexKet::new(DVector::from_iterator(
            n,
            self.re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)),
        ));
        let norm = ket.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(ConfigError::invalid(
                field,
                format!("ket must be normalized, has norm {norm}"),
            ));
        }
        Ok(ket)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingSpec {
    Linear,
    /// `f(u) = Σ cₖ uᵏ`.
    Polynomial { coefficients: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub hamiltonian: ComplexMatrix,
    pub coupling: CouplingSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub dimension: usize,
    pub drift: ComplexMatrix,
    pub controls: Vec<ControlSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesSpec {
    pub initial: KetSpec,
    pub target: KetSpec,
}

/// Transient penalty `w |χ⟩⟨χ|` on a state to avoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForbiddenSpec {
    pub state: KetSpec,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
}

/// Scalar input weight `θ(t)`, applied as `θ(t)·I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Constant { value: f64 },
    BlackmanFlanked { width: f64, epsilon: f64 },
    /// `(t, θ)` pairs, linearly interpolated.
    Tabulated { samples: Vec<[f64; 2]> },
}

/// Initial control guess, shared by every control channel unless tabulated
/// with one column per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuessSpec {
    Constant { value: f64 },
    BlackmanFlanked { amplitude: f64, width: f64 },
    /// Rows `[t, u₁, …, u_m]`, linearly interpolated.
    Tabulated { samples: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            tol: d.tol,
            alpha: d.alpha,
            beta: d.beta,
            delta: d.delta,
            max_iters: d.max_iters,
            max_backtracks: d.max_backtracks,
        }
    }
}

impl From<SolverSpec> for SolverConfig {
    fn from(s: SolverSpec) -> Self {
        SolverConfig {
            tol: s.tol,
            alpha: s.alpha,
            beta: s.beta,
            delta: s.delta,
            max_iters: s.max_iters,
            max_backtracks: s.max_backtracks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub system: SystemSpec,
    pub states: StatesSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forbidden: Vec<ForbiddenSpec>,
    pub grid: GridSpec,
    pub input_weight: WeightSpec,
    pub initial_guess: GuessSpec,
    #[serde(default)]
    pub solver: SolverSpec,
}

/// Parsed and validated pieces, ready for the solver.
pub(crate) struct Validated {
    pub drift: DMatrix<Complex64>,
    pub controls: Vec<(DMatrix<Complex64>, CouplingSpec)>,
    pub initial: ComplexKet,
    pub target: ComplexKet,
    pub forbidden: Vec<(ComplexKet, f64)>,
}

fn check_profile(
    field: &str,
    times: impl Iterator<Item = f64>,
    horizon: f64,
) -> Result<(), ConfigError> {
    let times: Vec<f64> = times.collect();
    if times.len() < 2 {
        return Err(ConfigError::invalid(field, "needs at least two samples"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ConfigError::invalid(field, "sample times must be strictly increasing"));
    }
    if times[0] > 0.0 || times[times.len() - 1] < horizon {
        return Err(ConfigError::invalid(
            field,
            format!("samples must cover [0, {horizon}]"),
        ));
    }
    Ok(())
}

fn check_width(field: &str, width: f64, horizon: f64) -> Result<(), ConfigError> {
    if !(width > 0.0 && width <= horizon) {
        return Err(ConfigError::invalid(
            field,
            format!("width must lie in (0, {horizon}], got {width}"),
        ));
    }
    Ok(())
}

impl ProblemConfig {
    pub(crate) fn validated(&self) -> Result<Validated, ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let n = self.system.dimension;
        if n == 0 {
            return Err(ConfigError::invalid("system.dimension", "must be at least 1"));
        }
        let drift = self.system.drift.hermitian("system.drift", n)?;
        if self.system.controls.is_empty() {
            return Err(ConfigError::invalid("system.controls", "at least one control is required"));
        }
        let mut controls = Vec::new();
        for (i, c) in self.system.controls.iter().enumerate() {
            let field = format!("system.controls[{i}].hamiltonian");
            let h = c.hamiltonian.hermitian(&field, n)?;
            if let CouplingSpec::Polynomial { coefficients } = &c.coupling {
                if coefficients.is_empty() || coefficients.iter().any(|v| !v.is_finite()) {
                    return Err(ConfigError::invalid(
                        &format!("system.controls[{i}].coupling"),
                        "coefficients must be a non-empty list of finite numbers",
                    ));
                }
            }
            controls.push((h, c.coupling.clone()));
        }
        let initial = self.states.initial.to_ket("states.initial", n)?;
        let target = self.states.target.to_ket("states.target", n)?;
        let mut forbidden = Vec::new();
        for (i, f) in self.forbidden.iter().enumerate() {
            let ket = f.state.to_ket(&format!("forbidden[{i}].state"), n)?;
            if !(f.weight >= 0.0 && f.weight.is_finite()) {
                return Err(ConfigError::invalid(
                    &format!("forbidden[{i}].weight"),
                    "must be finite and nonnegative",
                ));
            }
            forbidden.push((ket, f.weight));
        }

        let GridSpec { horizon, steps } = self.grid;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ConfigError::invalid("grid.horizon", "must be positive"));
        }
        if steps < 2 || steps % 2 != 0 {
            return Err(ConfigError::invalid("grid.steps", "must be an even number of at least 2"));
        }

        match &self.input_weight {
            WeightSpec::Constant { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(ConfigError::invalid("input_weight.value", "must be positive"));
                }
            }
            WeightSpec::BlackmanFlanked { width, epsilon } => {
                check_width("input_weight.width", *width, horizon)?;
                if !(*epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(ConfigError::invalid("input_weight.epsilon", "must be positive"));
                }
            }
            WeightSpec::Tabulated { samples } => {
                check_profile("input_weight.samples", samples.iter().map(|s| s[0]), horizon)?;
                if samples.iter().any(|s| !(s[1] > 0.0 && s[1].is_finite())) {
                    return Err(ConfigError::invalid(
                        "input_weight.samples",
                        "weights must be positive",
                    ));
                }
            }
        }

        let m = controls.len();
        match &self.initial_guess {
            GuessSpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(ConfigError::invalid("initial_guess.value", "must be finite"));
                }
            }
            GuessSpec::BlackmanFlanked { amplitude, width } => {
                check_width("initial_guess.width", *width, horizon)?;
                if !amplitude.is_finite() {
                    return Err(ConfigError::invalid("initial_guess.amplitude", "must be finite"));
                }
            }
            GuessSpec::Tabulated { samples } => {
                if samples.iter().any(|s| s.len() != m + 1) {
                    return Err(ConfigError::invalid(
                        "initial_guess.samples",
                        format!("each row must be [t, u1..u{m}]"),
                    ));
                }
                if samples.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(ConfigError::invalid("initial_guess.samples", "must be finite"));
                }
                check_profile("initial_guess.samples", samples.iter().map(|s| s[0]), horizon)?;
            }
        }

        SolverConfig::from(self.solver)
            .validate()
            .map_err(|e| ConfigError::invalid("solver", e.to_string()))?;

        Ok(Validated {
            drift,
            controls,
            initial,
            target,
            forbidden,
        })
    }

    /// Checks every invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validated().map(|_| ())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }
}

/// Parses and validates a problem description.
pub fn parse_config(source: &str) -> Result<ProblemConfig, ConfigError> {
    let cfg: ProblemConfig =
        toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate().map_err(|e| e.anchored(source))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let source = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&source)
}
