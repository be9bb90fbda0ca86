//! Projection-operator Newton method for state-to-state optimal control of
//! closed quantum systems.
//!
//! The Schrödinger equation is embedded in real arithmetic
//! ([`embedding`]), turned into a projection operator from controls to
//! trajectories ([`projection`]), and the resulting unconstrained cost is
//! minimised with damped Newton steps whose directions come from a
//! time-varying LQ problem ([`lq`]). [`solver`] runs the outer loop.

pub mod embedding;
pub mod error;
pub mod lq;
pub mod model;
pub mod odegrid;
pub mod projection;
pub mod solver;

pub use embedding::{ComplexKet, RealOperator, RealState};
pub use error::{Error, Result};
pub use lq::{DescentResult, LqCoefficients, RiccatiSolution, StepKind};
pub use model::{CostSpec, CouplingFunction, InputWeight, QuantumSystem};
pub use odegrid::{SampledSignal, TimeGrid};
pub use projection::{Costate, Trajectory};
pub use solver::{IterationRecord, SolveReport, SolverConfig, Termination};
