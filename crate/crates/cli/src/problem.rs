//! Turns a validated [`ProblemConfig`] into solver inputs.

use nalgebra::DVector;

use qpronto::embedding::embed_state;
use qpronto::model::{blackman_flank, blackman_flanked_weight};
use qpronto::{
    CostSpec, CouplingFunction, InputWeight, QuantumSystem, RealState, SampledSignal,
    SolverConfig, TimeGrid,
};

use crate::config::{ConfigError, CouplingSpec, GuessSpec, ProblemConfig, WeightSpec};

pub struct Problem {
    pub system: QuantumSystem,
    pub cost: CostSpec,
    pub initial_state: RealState,
    pub guess: SampledSignal<DVector<f64>>,
    pub solver: SolverConfig,
}

/// Piecewise-linear interpolation through `(times[k], values[k])`; `times`
/// is strictly increasing and covers `t`.
fn lerp_table(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
    let (t0, t1) = (times[k - 1], times[k]);
    let (v0, v1) = (values[k - 1], values[k]);
    v0 + (t - t0) / (t1 - t0) * (v1 - v0)
}

fn weight(spec: &WeightSpec, m: usize, horizon: f64) -> InputWeight {
    match spec.clone() {
        WeightSpec::Constant { value } => InputWeight::constant(m, value),
        WeightSpec::BlackmanFlanked { width, epsilon } => InputWeight::scalar(m, move |t| {
            blackman_flanked_weight(t, horizon, width, epsilon)
        }),
        WeightSpec::Tabulated { samples } => {
            let (ts, vs): (Vec<f64>, Vec<f64>) = samples.iter().map(|s| (s[0], s[1])).unzip();
            InputWeight::scalar(m, move |t| lerp_table(&ts, &vs, t))
        }
    }
}

fn guess(spec: &GuessSpec, m: usize, grid: TimeGrid) -> SampledSignal<DVector<f64>> {
    let horizon = grid.horizon();
    match spec {
        GuessSpec::Constant { value } => SampledSignal::from_fn(grid, |_| DVector::from_element(m, *value)),
        GuessSpec::BlackmanFlanked { amplitude, width } => SampledSignal::from_fn(grid, |t| {
            DVector::from_element(m, amplitude * blackman_flank(t, horizon, *width))
        }),
        GuessSpec::Tabulated { samples } => {
            let ts: Vec<f64> = samples.iter().map(|r| r[0]).collect();
            let cols: Vec<Vec<f64>> = (1..=m)
                .map(|j| samples.iter().map(|r| r[j]).collect())
                .collect();
            SampledSignal::from_fn(grid, |t| {
                DVector::from_iterator(m, cols.iter().map(|c| lerp_table(&ts, c, t)))
            })
        }
    }
}

fn coupling(spec: &CouplingSpec) -> CouplingFunction {
    match spec {
        CouplingSpec::Linear => CouplingFunction::Linear,
        CouplingSpec::Polynomial { coefficients } => CouplingFunction::Polynomial(coefficients.clone()),
    }
}

impl Problem {
    pub fn from_config(cfg: &ProblemConfig) -> Result<Self, ConfigError> {
        let v = cfg.validated()?;
        let core_err = |field: &str, e: qpronto::Error| ConfigError::Invalid {
            field: field.to_string(),
            line: None,
            message: e.to_string(),
        };
        let m = v.controls.len();
        let system = QuantumSystem::from_hamiltonians(
            &v.drift,
            v.controls.iter().map(|(h, c)| (h.clone(), coupling(c))).collect(),
        )
        .map_err(|e| core_err("system", e))?;
        let grid = TimeGrid::new(cfg.grid.horizon, cfg.grid.steps).map_err(|e| core_err("grid", e))?;
        let cost = CostSpec::state_transfer(
            &v.target,
            &v.forbidden,
            weight(&cfg.input_weight, m, grid.horizon()),
        )
        .map_err(|e| core_err("forbidden", e))?;
        Ok(Self {
            system,
            cost,
            initial_state: embed_state(&v.initial),
            guess: guess(&cfg.initial_guess, m, grid),
            solver: cfg.solver.into(),
        })
    }
}
