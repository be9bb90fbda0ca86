//! Outer loop: Newton direction with quasi-Newton fallback, step cap, Armijo
//! backtracking and the `−Dg ≤ tol` exit test.

use nalgebra::DVector;

use crate::embedding::RealState;
use crate::error::{Error, Result};
use crate::lq::{self, DescentResult, LqCoefficients, StepKind};
use crate::model::{CostSpec, QuantumSystem};
use crate::odegrid::SampledSignal;
use crate::projection::{project, solve_costate, total_cost, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Exit threshold on `−Dg`.
    pub tol: f64,
    /// Armijo sufficient-decrease fraction, in `(0, 0.5)`.
    pub alpha: f64,
    /// Backtracking factor, in `(0, 1)`.
    pub beta: f64,
    /// Step-cap fraction of `‖x₀‖`, in `(0, 1)`.
    pub delta: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            alpha: 0.4,
            beta: 0.7,
            delta: 0.6,
            max_iters: 50,
            max_backtracks: 40,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64, lo: f64, hi: f64| v > lo && v < hi;
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Validation(format!("tol must be positive, got {}", self.tol)));
        }
        if !open(self.alpha, 0.0, 0.5) {
            return Err(Error::Validation(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        if !open(self.beta, 0.0, 1.0) {
            return Err(Error::Validation(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !open(self.delta, 0.0, 1.0) {
            return Err(Error::Validation(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.max_iters == 0 || self.max_backtracks == 0 {
            return Err(Error::Validation("iteration budgets must be positive".into()));
        }
        Ok(())
    }
}

/// Why a Newton step was abandoned in favour of a quasi-Newton one.
#[derive(Debug, Clone, PartialEq)]
pub enum NewtonFailure {
    Riccati(String),
    Diverged { node: usize },
    /// The Newton model produced `Dg > 0`.
    NotDescent { dg: f64 },
}

/// Telemetry for one outer iteration, taken at the iterate `u_k` before its
/// update is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    /// `g(u_k)`.
    pub cost: f64,
    /// `Dg(u_k)·ν_k`.
    pub dg: f64,
    /// Accepted step size; 0 when no step was taken.
    pub gamma: f64,
    pub step_kind: StepKind,
    pub backtracks: usize,
    /// `1 − |⟨ψ(T)|φ⟩|²` at `u_k`.
    pub infidelity: f64,
    pub newton_failure: Option<NewtonFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchStalled,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIters => "max_iters",
            Self::LineSearchStalled => "line_search_stalled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: Vec<IterationRecord>,
    pub final_trajectory: Trajectory,
    pub final_cost: f64,
    pub converged: bool,
    pub termination: Termination,
}

impl SolveReport {
    pub fn final_control(&self) -> &SampledSignal<DVector<f64>> {
        &self.final_trajectory.u
    }
}

/// `min(1, δ‖x₀‖ / maxₜ‖z(t)‖)`, or 1 when `z ≡ 0`.
pub fn cap_step(z: &SampledSignal<DVector<f64>>, x0_norm: f64, delta: f64) -> f64 {
    let peak = z.max_norm();
    if peak == 0.0 {
        1.0
    } else {
        (delta * x0_norm / peak).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub gamma: f64,
    pub cost: f64,
    pub backtracks: usize,
}

/// Backtracking over `γ₀βⁱ` until `g(γ) ≤ g(0) + αγ·Dg`.
///
/// `dg` must be negative. Non-finite trial costs count as rejections.
pub fn armijo_search(
    g_current: f64,
    dg: f64,
    gamma0: f64,
    mut evaluate: impl FnMut(f64) -> f64,
    cfg: &SolverConfig,
) -> Result<LineSearch> {
    if !(dg < 0.0) {
        return Err(Error::Precondition(format!(
            "line search needs a descent direction, got Dg = {dg}"
        )));
    }
    let mut gamma = gamma0;
    for backtracks in 0..=cfg.max_backtracks {
        let cost = evaluate(gamma);
        if cost <= g_current + cfg.alpha * gamma * dg {
            return Ok(LineSearch {
                gamma,
                cost,
                backtracks,
            });
        }
        gamma *= cfg.beta;
    }
    Err(Error::LineSearchStalled {
        backtracks: cfg.max_backtracks,
    })
}

struct Direction {
    descent: DescentResult,
    kind: StepKind,
    newton_failure: Option<NewtonFailure>,
}

fn lq_direction(co: &LqCoefficients) -> Result<DescentResult> {
    let ric = lq::solve_riccati(co)?;
    lq::descend(co, &ric)
}

fn newton_direction(
    sys: &QuantumSystem,
    spec: &CostSpec,
    xi: &Trajectory,
) -> Result<std::result::Result<DescentResult, NewtonFailure>> {
    let attempt = solve_costate(sys, spec, xi)
        .and_then(|chi| lq::linearize(sys, spec, xi, Some(&chi), StepKind::Newton))
        .and_then(|co| lq_direction(&co));
    match attempt {
        Ok(d) if d.dg > 0.0 => Ok(Err(NewtonFailure::NotDescent { dg: d.dg })),
        Ok(d) => Ok(Ok(d)),
        Err(Error::RiccatiFailure(msg)) => Ok(Err(NewtonFailure::Riccati(msg))),
        Err(Error::DivergedIntegration { node }) => Ok(Err(NewtonFailure::Diverged { node })),
        Err(e) => Err(e),
    }
}

fn direction(sys: &QuantumSystem, spec: &CostSpec, xi: &Trajectory) -> Result<Direction> {
    match newton_direction(sys, spec, xi)? {
        Ok(descent) => Ok(Direction {
            descent,
            kind: StepKind::Newton,
            newton_failure: None,
        }),
        Err(failure) => {
            let co = lq::linearize(sys, spec, xi, None, StepKind::QuasiNewton)?;
            Ok(Direction {
                descent: lq_direction(&co)?,
                kind: StepKind::QuasiNewton,
                newton_failure: Some(failure),
            })
        }
    }
}

/// Runs the solver from the initial guess `u0`.
pub fn solve(
    sys: &QuantumSystem,
    spec: &CostSpec,
    x0: &RealState,
    u0: &SampledSignal<DVector<f64>>,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    solve_with_observer(sys, spec, x0, u0, cfg, |_| {})
}

/// Like [`solve`], calling `observer` with each iteration record as soon as
/// it is complete.
pub fn solve_with_observer(
    sys: &QuantumSystem,
    spec: &CostSpec,
    x0: &RealState,
    u0: &SampledSignal<DVector<f64>>,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<SolveReport> {
    cfg.validate()?;
    if u0.values().iter().any(|u| !u.iter().all(|v| v.is_finite())) {
        return Err(Error::Validation("initial control contains non-finite values".into()));
    }
    let x0_norm = x0.norm();
    let mut xi = project(sys, x0, u0)?;
    let mut cost = total_cost(spec, &xi);
    let mut iterations = Vec::new();

    let mut emit = |rec: IterationRecord, iterations: &mut Vec<IterationRecord>| {
        observer(&rec);
        iterations.push(rec);
    };

    for index in 0..cfg.max_iters {
        let dir = direction(sys, spec, &xi)?;
        let dg = dir.descent.dg;
        let mut record = IterationRecord {
            index,
            cost,
            dg,
            gamma: 0.0,
            step_kind: dir.kind,
            backtracks: 0,
            infidelity: spec.infidelity(xi.final_state()),
            newton_failure: dir.newton_failure,
        };
        if -dg <= cfg.tol {
            emit(record, &mut iterations);
            return Ok(SolveReport {
                iterations,
                final_trajectory: xi,
                final_cost: cost,
                converged: true,
                termination: Termination::Converged,
            });
        }

        let nu = &dir.descent.nu;
        let gamma0 = cap_step(&dir.descent.z, x0_norm, cfg.delta);
        let mut last_trial: Option<Trajectory> = None;
        let search = armijo_search(
            cost,
            dg,
            gamma0,
            |gamma| {
                let trial = SampledSignal::new(
                    *xi.grid(),
                    xi.u.values()
                        .iter()
                        .zip(nu.values())
                        .map(|(u, v)| u + v * gamma)
                        .collect(),
                )
                .expect("same grid");
                match project(sys, x0, &trial) {
                    Ok(t) => {
                        let c = total_cost(spec, &t);
                        last_trial = Some(t);
                        c
                    }
                    Err(_) => f64::INFINITY,
                }
            },
            cfg,
        );
        match search {
            Ok(ls) => {
                record.gamma = ls.gamma;
                record.backtracks = ls.backtracks;
                emit(record, &mut iterations);
                xi = last_trial.expect("accepted trial was evaluated");
                cost = ls.cost;
            }
            Err(Error::LineSearchStalled { backtracks }) => {
                record.backtracks = backtracks;
                emit(record, &mut iterations);
                return Ok(SolveReport {
                    iterations,
                    final_trajectory: xi,
                    final_cost: cost,
                    converged: false,
                    termination: Termination::LineSearchStalled,
                });
            }
            Err(e) => return Err(e),
        }
    }

    Ok(SolveReport {
        iterations,
        final_trajectory: xi,
        final_cost: cost,
        converged: false,
        termination: Termination::MaxIters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_state, pauli, ComplexKet};
    use crate::model::{CouplingFunction, InputWeight};
    use crate::odegrid::TimeGrid;

    #[test]
    fn defaults() {
        let c = SolverConfig::default();
        assert_eq!((c.tol, c.alpha, c.beta, c.delta), (1e-2, 0.4, 0.7, 0.6));
        assert_eq!((c.max_iters, c.max_backtracks), (50, 40));
        assert!(c.validate().is_ok());
        assert!(SolverConfig { alpha: 0.5, ..c.clone() }.validate().is_err());
        assert!(SolverConfig { beta: 1.0, ..c.clone() }.validate().is_err());
        assert!(SolverConfig { delta: 0.0, ..c.clone() }.validate().is_err());
        assert!(SolverConfig { tol: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn cap_step_examples() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let zero = SampledSignal::from_fn(grid, |_| DVector::zeros(2));
        assert_eq!(cap_step(&zero, 1.0, 0.6), 1.0);
        let big = SampledSignal::from_fn(grid, |t| DVector::from_vec(vec![1.2 * t, 0.0]));
        assert!((cap_step(&big, 1.0, 0.6) - 0.5).abs() < 1e-15);
        let small = SampledSignal::from_fn(grid, |t| DVector::from_vec(vec![0.0, 0.3 * t]));
        assert_eq!(cap_step(&small, 1.0, 0.6), 1.0);
    }

    #[test]
    fn armijo_accepts_quadratic_minimiser() {
        // g(γ) = g0 + γ·Dg − ½γ·Dg·γ has its minimum at γ = 1
        let (g0, dg) = (2.0, -0.8);
        let ls = armijo_search(g0, dg, 1.0, |g| g0 + g * dg - 0.5 * dg * g * g, &SolverConfig::default())
            .unwrap();
        assert_eq!((ls.gamma, ls.backtracks), (1.0, 0));
    }

    #[test]
    fn armijo_stalls_on_flat_cost() {
        let cfg = SolverConfig::default();
        let mut calls = 0;
        let err = armijo_search(
            1.0,
            -0.5,
            1.0,
            |_| {
                calls += 1;
                1.0
            },
            &cfg,
        )
        .unwrap_err();
        assert_eq!(err, Error::LineSearchStalled { backtracks: 40 });
        assert_eq!(calls, 41);
    }

    #[test]
    fn armijo_backtracks_twice() {
        let mut tried = Vec::new();
        let ls = armijo_search(
            1.0,
            -1.0,
            1.0,
            |g| {
                tried.push(g);
                1.0 - g + 2.0 * g * g * g
            },
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(ls.backtracks, 2);
        assert!((ls.gamma - 0.49).abs() < 1e-15);
        assert_eq!(tried.len(), 3);
        assert!((tried[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn armijo_rejects_ascent() {
        let r = armijo_search(1.0, 0.1, 1.0, |_| 0.0, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    fn qubit_problem(
        steps: usize,
    ) -> (QuantumSystem, CostSpec, RealState, SampledSignal<DVector<f64>>) {
        let h0 = pauli::z().map(|z| z * -0.5);
        let sys =
            QuantumSystem::from_hamiltonians(&h0, vec![(pauli::x(), CouplingFunction::Linear)])
                .unwrap();
        let spec =
            CostSpec::state_transfer(&ComplexKet::basis(2, 1), &[], InputWeight::constant(1, 1.0))
                .unwrap();
        let grid = TimeGrid::new(5.0, steps).unwrap();
        let u0 = SampledSignal::from_fn(grid, |t| {
            DVector::from_element(1, 0.2 * (std::f64::consts::PI * t / 5.0).sin())
        });
        (sys, spec, embed_state(&ComplexKet::basis(2, 0)), u0)
    }

    #[test]
    fn converges_monotonically() {
        let (sys, spec, x0, u0) = qubit_problem(1000);
        let mut seen = 0;
        let report =
            solve_with_observer(&sys, &spec, &x0, &u0, &SolverConfig::default(), |_| seen += 1)
                .unwrap();
        assert!(report.converged);
        assert_eq!(report.termination, Termination::Converged);
        assert_eq!(seen, report.iterations.len());
        for w in report.iterations.windows(2) {
            assert!(w[1].cost < w[0].cost);
        }
        let last = report.iterations.last().unwrap();
        assert!(-last.dg <= 1e-2);
        assert_eq!(last.cost, report.final_cost);
    }

    #[test]
    fn restart_from_optimum_is_immediate() {
        let (sys, spec, x0, u0) = qubit_problem(1000);
        let cfg = SolverConfig::default();
        let first = solve(&sys, &spec, &x0, &u0, &cfg).unwrap();
        let again = solve(&sys, &spec, &x0, first.final_control(), &cfg).unwrap();
        assert!(again.converged);
        assert_eq!(again.iterations.len(), 1);
        assert_eq!(again.iterations[0].gamma, 0.0);
    }

    #[test]
    fn huge_tolerance_returns_immediately() {
        let (sys, spec, x0, u0) = qubit_problem(200);
        let cfg = SolverConfig { tol: 1e6, ..SolverConfig::default() };
        let report = solve(&sys, &spec, &x0, &u0, &cfg).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations.len(), 1);
    }

    #[test]
    fn budget_exhaustion_reported() {
        let (sys, spec, x0, u0) = qubit_problem(200);
        let cfg = SolverConfig { tol: 1e-14, max_iters: 1, ..SolverConfig::default() };
        let report = solve(&sys, &spec, &x0, &u0, &cfg).unwrap();
        assert_eq!(report.termination, Termination::MaxIters);
        assert!(!report.converged);
        assert_eq!(report.iterations.len(), 1);
        assert!(report.final_cost < report.iterations[0].cost);
    }

    #[test]
    fn rejects_bad_guess() {
        let (sys, spec, x0, u0) = qubit_problem(200);
        let bad = u0.map(|_| DVector::from_element(1, f64::NAN));
        assert!(solve(&sys, &spec, &x0, &bad, &SolverConfig::default()).is_err());
    }
}
