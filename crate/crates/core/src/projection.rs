//! The projection operator: control signal → dynamically consistent
//! trajectory, its cost, and the costate.

use nalgebra::DVector;

use crate::embedding::RealState;
use crate::error::{Error, Result};
use crate::model::{CostSpec, QuantumSystem};
use crate::odegrid::{integrate_backward, integrate_forward, simpson, SampledSignal, TimeGrid};

/// Norm tolerance for the initial state.
pub const INITIAL_NORM_TOL: f64 = 1e-12;

/// State and control signals on a shared grid with `ẋ = H(u)x`.
///
/// Alongside the node samples the trajectory keeps the state on the refined
/// grid (nodes plus RK4 half-step times), filled in by cubic Hermite
/// interpolation from `x` and `ẋ` at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: SampledSignal<DVector<f64>>,
    pub u: SampledSignal<DVector<f64>>,
    fine_x: SampledSignal<DVector<f64>>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        self.x.grid()
    }

    /// State on the refined grid.
    pub fn fine_state(&self) -> &SampledSignal<DVector<f64>> {
        &self.fine_x
    }

    /// Control on the refined grid (linear between nodes).
    pub fn fine_control(&self) -> SampledSignal<DVector<f64>> {
        let fine = self.grid().refined();
        SampledSignal::from_fn(fine, |t| {
            self.u.interpolate(t).expect("refined grid lies inside the base grid")
        })
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.x.last()
    }
}

/// Fills in midpoints of a node signal with cubic Hermite interpolation,
/// given the derivative at every node. Returns a signal on the refined grid.
pub(crate) fn hermite_refine(
    y: &SampledSignal<DVector<f64>>,
    dy: &[DVector<f64>],
) -> SampledSignal<DVector<f64>> {
    let grid = *y.grid();
    let dt = grid.dt();
    let mut values = Vec::with_capacity(2 * grid.steps() + 1);
    for k in 0..grid.steps() {
        let (y0, y1) = (y.at_node(k), y.at_node(k + 1));
        values.push(y0.clone());
        // y(t + dt/2) = (y0 + y1)/2 + dt/8 (y0' − y1')
        let mut mid = (y0 + y1) * 0.5;
        mid.axpy(dt / 8.0, &(&dy[k] - &dy[k + 1]), 1.0);
        values.push(mid);
    }
    values.push(y.last().clone());
    SampledSignal::new(grid.refined(), values).expect("refined sample count")
}

/// Integrates `ẋ = H(μ(t))x` from `x0`; the control is linear between nodes.
pub fn project(
    sys: &QuantumSystem,
    x0: &RealState,
    mu: &SampledSignal<DVector<f64>>,
) -> Result<Trajectory> {
    if x0.as_vector().len() != sys.state_len() {
        return Err(Error::Dimension(format!(
            "initial state has {} components, system needs {}",
            x0.as_vector().len(),
            sys.state_len()
        )));
    }
    if (x0.norm() - 1.0).abs() > INITIAL_NORM_TOL {
        return Err(Error::Validation(format!(
            "initial state must have unit norm, got {}",
            x0.norm()
        )));
    }
    if let Some(bad) = mu.values().iter().find(|v| v.len() != sys.num_controls()) {
        return Err(Error::Dimension(format!(
            "control samples have {} channels, system has {}",
            bad.len(),
            sys.num_controls()
        )));
    }
    let grid = *mu.grid();
    let x = integrate_forward(&grid, x0.as_vector().clone(), |t, x: &DVector<f64>| {
        let u = mu.interpolate(t).expect("stage time inside grid");
        sys.generator_matrix(u.as_slice()) * x
    })?;
    Ok(assemble(sys, x, mu.clone()))
}

fn assemble(
    sys: &QuantumSystem,
    x: SampledSignal<DVector<f64>>,
    u: SampledSignal<DVector<f64>>,
) -> Trajectory {
    let dx: Vec<_> = x
        .values()
        .iter()
        .zip(u.values())
        .map(|(x, u)| sys.generator_matrix(u.as_slice()) * x)
        .collect();
    let fine_x = hermite_refine(&x, &dx);
    Trajectory { x, u, fine_x }
}

/// `h(ξ) = m(x(T)) + ∫ l(x, u) dt`, the integral by composite Simpson.
pub fn total_cost(spec: &CostSpec, xi: &Trajectory) -> f64 {
    let grid = xi.grid();
    let running = simpson(
        grid,
        grid.times()
            .zip(xi.x.values().iter().zip(xi.u.values()))
            .map(|(t, (x, u))| spec.incremental_cost(t, x, u)),
    );
    spec.terminal_cost(xi.final_state()) + running
}

/// Costate `χ` on the node grid, with its refined-grid samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Costate {
    pub chi: SampledSignal<DVector<f64>>,
    fine_chi: SampledSignal<DVector<f64>>,
}

impl Costate {
    pub fn fine(&self) -> &SampledSignal<DVector<f64>> {
        &self.fine_chi
    }
}

/// Solves `−χ̇ = H(u)ᵀχ + P_λx`, `χ(T) = P_¬φ x(T)` backward in time.
pub fn solve_costate(sys: &QuantumSystem, spec: &CostSpec, xi: &Trajectory) -> Result<Costate> {
    let grid = *xi.grid();
    let terminal = &spec.terminal_penalty * xi.final_state();
    let fine_x = xi.fine_state();
    let rhs = |t: f64, chi: &DVector<f64>| -> DVector<f64> {
        let u = xi.u.interpolate(t).expect("stage time inside grid");
        let x = fine_x.interpolate(t).expect("stage time inside grid");
        sys.generator_matrix(u.as_slice()).tr_mul(chi) + &spec.state_penalty * x
    };
    let chi = integrate_backward(&grid, terminal, rhs)?;
    let dchi: Vec<_> = grid
        .times()
        .zip(chi.values())
        .map(|(t, c)| -rhs(t, c))
        .collect();
    let fine_chi = hermite_refine(&chi, &dchi);
    Ok(Costate { chi, fine_chi })
}
