#![allow(dead_code)]

use nalgebra::DVector;
use qpronto::embedding::{embed_state, pauli};
use qpronto::model::{blackman_flank, blackman_flanked_weight};
use qpronto::*;

pub const HORIZON: f64 = 5.0;

pub fn qubit(coupling: CouplingFunction) -> QuantumSystem {
    let h0 = pauli::z().map(|z| z * -0.5);
    QuantumSystem::from_hamiltonians(&h0, vec![(pauli::x(), coupling)]).unwrap()
}

pub fn flanked_spec() -> CostSpec {
    CostSpec::state_transfer(
        &ComplexKet::basis(2, 1),
        &[],
        InputWeight::scalar(1, |t| blackman_flanked_weight(t, HORIZON, 0.6, 1e-6)),
    )
    .unwrap()
}

pub fn flat_spec() -> CostSpec {
    CostSpec::state_transfer(&ComplexKet::basis(2, 1), &[], InputWeight::constant(1, 1.0)).unwrap()
}

pub fn ground() -> RealState {
    embed_state(&ComplexKet::basis(2, 0))
}

pub fn signal(grid: TimeGrid, f: impl Fn(f64) -> f64) -> SampledSignal<DVector<f64>> {
    SampledSignal::from_fn(grid, |t| DVector::from_element(1, f(t)))
}

pub fn flank_guess(grid: TimeGrid, amplitude: f64) -> SampledSignal<DVector<f64>> {
    signal(grid, |t| amplitude * blackman_flank(t, HORIZON, 0.6))
}

pub fn axpy(
    u: &SampledSignal<DVector<f64>>,
    v: &SampledSignal<DVector<f64>>,
    s: f64,
) -> SampledSignal<DVector<f64>> {
    SampledSignal::new(
        *u.grid(),
        u.values().iter().zip(v.values()).map(|(a, b)| a + b * s).collect(),
    )
    .unwrap()
}
