//! Controlled quantum system `H(u) = H₀ + Σⱼ Hⱼ fⱼ(uⱼ)` in real-embedded form,
//! and the quadratic cost data.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::embedding::{
    complement_projector, embed_generator, embed_observable, projector, ComplexKet, RealOperator,
    RealState,
};
use crate::error::{Error, Result};

/// Skew-symmetry tolerance for embedded generators.
const SKEW_TOL: f64 = 1e-12;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A C² coupling `f(u)` together with its first two derivatives.
#[derive(Clone)]
pub enum CouplingFunction {
    /// `f(u) = u`.
    Linear,
    /// `f(u) = Σₖ cₖ uᵏ`, coefficients in increasing degree.
    Polynomial(Vec<f64>),
    Custom {
        eval: ScalarFn,
        d1: ScalarFn,
        d2: ScalarFn,
    },
}

impl fmt::Debug for CouplingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear => write!(f, "Linear"),
            Self::Polynomial(c) => f.debug_tuple("Polynomial").field(c).finish(),
            Self::Custom { .. } => write!(f, "Custom"),
        }
    }
}

fn poly_eval(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

impl CouplingFunction {
    pub fn custom(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Custom {
            eval: Arc::new(eval),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Linear => u,
            Self::Polynomial(c) => poly_eval(c, u),
            Self::Custom { eval, .. } => eval(u),
        }
    }

    pub fn d1(&self, u: f64) -> f64 {
        match self {
            Self::Linear => 1.0,
            Self::Polynomial(c) => poly_eval(&poly_derivative(c), u),
            Self::Custom { d1, .. } => d1(u),
        }
    }

    pub fn d2(&self, u: f64) -> f64 {
        match self {
            Self::Linear => 0.0,
            Self::Polynomial(c) => poly_eval(&poly_derivative(&poly_derivative(c)), u),
            Self::Custom { d2, .. } => d2(u),
        }
    }
}

/// One control channel: an embedded generator and its coupling.
#[derive(Debug, Clone)]
pub struct Control {
    pub generator: RealOperator,
    pub coupling: CouplingFunction,
}

/// Closed quantum system with `m` control channels.
#[derive(Debug, Clone)]
pub struct QuantumSystem {
    drift: RealOperator,
    controls: Vec<Control>,
    dim: usize,
}

impl QuantumSystem {
    /// Builds a system from already embedded generators; all must be
    /// skew-symmetric and of matching size.
    pub fn new(drift: RealOperator, controls: Vec<Control>) -> Result<Self> {
        let size = drift.matrix().nrows();
        let check = |op: &RealOperator, what: &str| -> Result<()> {
            if op.matrix().nrows() != size {
                return Err(Error::Dimension(format!(
                    "{what} is {}x{}, expected {size}x{size}",
                    op.matrix().nrows(),
                    op.matrix().ncols()
                )));
            }
            if op.skew_defect() > SKEW_TOL {
                return Err(Error::Validation(format!("{what} is not skew-symmetric")));
            }
            Ok(())
        };
        check(&drift, "drift generator")?;
        for (j, c) in controls.iter().enumerate() {
            check(&c.generator, &format!("control generator {}", j + 1))?;
        }
        Ok(Self {
            drift,
            controls,
            dim: size / 2,
        })
    }

    /// Builds a system from complex Hermitian Hamiltonians.
    pub fn from_hamiltonians(
        drift: &DMatrix<Complex64>,
        controls: Vec<(DMatrix<Complex64>, CouplingFunction)>,
    ) -> Result<Self> {
        let drift = embed_generator(drift)?;
        let controls = controls
            .into_iter()
            .map(|(h, coupling)| {
                Ok(Control {
                    generator: embed_generator(&h)?,
                    coupling,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(drift, controls)
    }

    /// Number of complex amplitudes `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Size of the real state, `2n`.
    pub fn state_len(&self) -> usize {
        2 * self.dim
    }

    /// Number of control channels `m`.
    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn drift(&self) -> &RealOperator {
        &self.drift
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.controls.len() {
            return Err(Error::Dimension(format!(
                "control vector has {} entries, system has {} channels",
                u.len(),
                self.controls.len()
            )));
        }
        Ok(())
    }

    fn channel(&self, i: usize) -> Result<&Control> {
        self.controls.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.controls.len(),
        })
    }

    /// `H(u) = H₀ + Σⱼ fⱼ(uⱼ) Hⱼ`.
    pub fn generator_at(&self, u: &[f64]) -> Result<RealOperator> {
        self.check_input(u)?;
        RealOperator::from_matrix(self.generator_matrix(u))
    }

    /// Channel index `i` is zero-based. Returns `fᵢ'(uᵢ) Hᵢ`.
    pub fn generator_d1(&self, u: &[f64], i: usize) -> Result<RealOperator> {
        self.check_input(u)?;
        let c = self.channel(i)?;
        RealOperator::from_matrix(c.generator.matrix() * c.coupling.d1(u[i]))
    }

    /// `∂²H/∂uᵢ∂uⱼ`: `fᵢ''(uᵢ) Hᵢ` on the diagonal, zero otherwise since each
    /// coupling depends on its own channel only.
    pub fn generator_d2(&self, u: &[f64], i: usize, j: usize) -> Result<RealOperator> {
        self.check_input(u)?;
        let c = self.channel(i)?;
        self.channel(j)?;
        if i != j {
            return Ok(RealOperator::zeros(self.dim));
        }
        RealOperator::from_matrix(c.generator.matrix() * c.coupling.d2(u[i]))
    }

    /// Unchecked matrix form of [`generator_at`](Self::generator_at).
    pub(crate) fn generator_matrix(&self, u: &[f64]) -> DMatrix<f64> {
        let mut h = self.drift.matrix().clone();
        for (c, &uj) in self.controls.iter().zip(u) {
            h.zip_apply(c.generator.matrix(), |a, b| *a += c.coupling.eval(uj) * b);
        }
        h
    }
}

/// Time-dependent input weight `R(t)`, an `m × m` symmetric positive-definite
/// matrix.
#[derive(Clone)]
pub struct InputWeight(Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>);

impl fmt::Debug for InputWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("InputWeight(..)")
    }
}

impl InputWeight {
    pub fn new(f: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    /// `R(t) = θ(t)·I` for `m` channels.
    pub fn scalar(m: usize, theta: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(move |t| DMatrix::identity(m, m) * theta(t))
    }

    pub fn constant(m: usize, value: f64) -> Self {
        Self::scalar(m, move |_| value)
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        (self.0)(t)
    }
}

/// Quadratic cost: `l(x,u) = ½xᵀP_λx + ½uᵀR(t)u` and `m(x) = ½xᵀP_¬φx`.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub state_penalty: DMatrix<f64>,
    pub terminal_penalty: DMatrix<f64>,
    pub input_weight: InputWeight,
    /// Target ket, when the terminal penalty comes from a state transfer;
    /// used for fidelity reporting.
    pub target: Option<RealState>,
}

impl CostSpec {
    /// Arbitrary-phase transfer to `target`: `P_¬φ = I − |φ⟩⟨φ|`, optionally
    /// penalising population of `forbidden` states with the given weights.
    pub fn state_transfer(
        target: &ComplexKet,
        forbidden: &[(ComplexKet, f64)],
        input_weight: InputWeight,
    ) -> Result<Self> {
        let n = target.dim();
        let terminal_penalty = embed_observable(&complement_projector(target))?.into_matrix();
        let mut state_penalty = DMatrix::zeros(2 * n, 2 * n);
        for (ket, w) in forbidden {
            if ket.dim() != n {
                return Err(Error::Dimension(format!(
                    "forbidden state has dimension {}, expected {n}",
                    ket.dim()
                )));
            }
            if !(*w >= 0.0) {
                return Err(Error::Validation(format!(
                    "forbidden-state weight must be nonnegative, got {w}"
                )));
            }
            state_penalty += embed_observable(&projector(ket))?.into_matrix() * *w;
        }
        Ok(Self {
            state_penalty,
            terminal_penalty,
            input_weight,
            target: Some(crate::embedding::embed_state(target)),
        })
    }

    pub fn incremental_cost(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let r = self.input_weight.at(t);
        0.5 * x.dot(&(&self.state_penalty * x)) + 0.5 * u.dot(&(r * u))
    }

    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.terminal_penalty * x))
    }

    /// `1 − |⟨ψ|φ⟩|²` for the configured target, or `xᵀP_¬φx/‖x‖²` if no
    /// target ket is known.
    pub fn infidelity(&self, x: &DVector<f64>) -> f64 {
        match &self.target {
            Some(phi) => {
                let phi = phi.as_vector();
                let n = phi.len() / 2;
                // ⟨φ|ψ⟩ = (a·c + b·d) + i(a·d − b·c) with φ = a + ib, ψ = c + id
                let (a, b) = (phi.rows(0, n), phi.rows(n, n));
                let (c, d) = (x.rows(0, n), x.rows(n, n));
                let re = a.dot(&c) + b.dot(&d);
                let im = a.dot(&d) - b.dot(&c);
                1.0 - (re * re + im * im)
            }
            None => 2.0 * self.terminal_cost(x) / x.norm_squared(),
        }
    }
}

/// Blackman window `½(0.84 − cos(2πt/w) + 0.16 cos(4πt/w))` of width `w`.
pub fn blackman_window(t: f64, width: f64) -> f64 {
    use std::f64::consts::PI;
    let a = 2.0 * PI * t / width;
    0.5 * (0.84 - a.cos() + 0.16 * (2.0 * a).cos())
}

/// Flat-top profile on `[0, horizon]`: rises as the first half of a Blackman
/// window of width `width`, equals 1 in the middle and falls symmetrically.
pub fn blackman_flank(t: f64, horizon: f64, width: f64) -> f64 {
    let half = 0.5 * width;
    if t <= half {
        blackman_window(t, width)
    } else if t >= horizon - half {
        blackman_window(horizon - t, width)
    } else {
        1.0
    }
}

/// Input weight `(1 + ε)/(B(t) + ε)` with `B` the flanked Blackman profile;
/// large at the ends, 1 in the middle.
pub fn blackman_flanked_weight(t: f64, horizon: f64, width: f64, epsilon: f64) -> f64 {
    (1.0 + epsilon) / (blackman_flank(t, horizon, width) + epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_state, pauli};

    fn qubit(coupling: CouplingFunction) -> QuantumSystem {
        let h0 = pauli::z().map(|z| z * -0.5);
        QuantumSystem::from_hamiltonians(&h0, vec![(pauli::x(), coupling)]).unwrap()
    }

    fn transfer_spec(theta: impl Fn(f64) -> f64 + Send + Sync + 'static) -> CostSpec {
        CostSpec::state_transfer(&ComplexKet::basis(2, 1), &[], InputWeight::scalar(1, theta))
            .unwrap()
    }

    #[test]
    fn generator_at_examples() {
        let sys = qubit(CouplingFunction::Linear);
        let h0 = embed_generator(&pauli::z().map(|z| z * -0.5)).unwrap();
        let h1 = embed_generator(&pauli::x()).unwrap();
        assert_eq!(sys.generator_at(&[0.0]).unwrap(), h0);
        let g = sys.generator_at(&[1.0]).unwrap();
        assert_eq!(g.matrix(), &(h0.matrix() + h1.matrix()));
        for u in [-3.0, 0.25, 7.5] {
            assert!(sys.generator_at(&[u]).unwrap().skew_defect() < 1e-15);
        }
        assert!(matches!(sys.generator_at(&[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn generator_derivatives() {
        let h1 = embed_generator(&pauli::x()).unwrap();
        let lin = qubit(CouplingFunction::Linear);
        assert_eq!(lin.generator_d1(&[4.2], 0).unwrap(), h1);
        assert_eq!(lin.generator_d2(&[4.2], 0, 0).unwrap().matrix().amax(), 0.0);

        let sq = qubit(CouplingFunction::Polynomial(vec![0.0, 0.0, 1.0]));
        assert_eq!(sq.generator_d1(&[3.0], 0).unwrap().matrix(), &(h1.matrix() * 6.0));
        assert_eq!(sq.generator_d2(&[3.0], 0, 0).unwrap().matrix(), &(h1.matrix() * 2.0));

        assert!(matches!(
            lin.generator_d1(&[0.0], 1),
            Err(Error::IndexOutOfRange { index: 1, len: 1 })
        ));
        assert!(lin.generator_d2(&[0.0], 0, 3).is_err());
    }

    #[test]
    fn mixed_partials_vanish() {
        let h0 = pauli::z();
        let sys = QuantumSystem::from_hamiltonians(
            &h0,
            vec![
                (pauli::x(), CouplingFunction::Polynomial(vec![0.0, 0.0, 1.0])),
                (pauli::y(), CouplingFunction::Polynomial(vec![0.0, 0.0, 0.0, 1.0])),
            ],
        )
        .unwrap();
        let z = sys.generator_d2(&[1.0, 2.0], 0, 1).unwrap();
        assert_eq!(z.matrix().amax(), 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let sys = QuantumSystem::from_hamiltonians(
            &pauli::z(),
            vec![
                (pauli::x(), CouplingFunction::Polynomial(vec![0.1, -0.5, 0.3, 1.0])),
                (pauli::y(), CouplingFunction::custom(f64::sin, f64::cos, |u| -u.sin())),
            ],
        )
        .unwrap();
        let u = [0.7, -1.3];
        let eps = 1e-5;
        for i in 0..2 {
            let mut up = u;
            let mut dn = u;
            up[i] += eps;
            dn[i] -= eps;
            let fd = (sys.generator_at(&up).unwrap().into_matrix()
                - sys.generator_at(&dn).unwrap().into_matrix())
                / (2.0 * eps);
            let d1 = sys.generator_d1(&u, i).unwrap();
            assert!((fd - d1.matrix()).amax() < 1e-6);

            let fd2 = (sys.generator_d1(&up, i).unwrap().into_matrix()
                - sys.generator_d1(&dn, i).unwrap().into_matrix())
                / (2.0 * eps);
            let d2 = sys.generator_d2(&u, i, i).unwrap();
            assert!((fd2 - d2.matrix()).amax() < 1e-6);
        }
    }

    #[test]
    fn coupling_derivatives_consistent() {
        let fs = [
            CouplingFunction::Linear,
            CouplingFunction::Polynomial(vec![1.0, 2.0, -3.0, 0.5]),
            CouplingFunction::custom(|u| u.exp(), |u| u.exp(), |u| u.exp()),
        ];
        let h = 1e-5;
        for f in &fs {
            for u in [-1.5, 0.0, 0.3, 2.0] {
                let d1 = (f.eval(u + h) - f.eval(u - h)) / (2.0 * h);
                let d2 = (f.d1(u + h) - f.d1(u - h)) / (2.0 * h);
                assert!((d1 - f.d1(u)).abs() <= 1e-6 * f.d1(u).abs().max(1.0));
                assert!((d2 - f.d2(u)).abs() <= 1e-6 * f.d2(u).abs().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_inconsistent_operators() {
        let drift = RealOperator::from_matrix(DMatrix::identity(4, 4)).unwrap();
        assert!(QuantumSystem::new(drift, vec![]).is_err());
        let drift = embed_generator(&pauli::z()).unwrap();
        let bad = Control {
            generator: RealOperator::zeros(3),
            coupling: CouplingFunction::Linear,
        };
        assert!(matches!(QuantumSystem::new(drift, vec![bad]), Err(Error::Dimension(_))));
    }

    #[test]
    fn incremental_cost_examples() {
        let mut spec = transfer_spec(|_| 1.0);
        let x = embed_state(&ComplexKet::basis(2, 0)).into_vector();
        let u = DVector::from_vec(vec![0.2]);
        assert!((spec.incremental_cost(0.0, &x, &u) - 0.02).abs() < 1e-15);

        spec.state_penalty = DMatrix::identity(4, 4);
        let x = DVector::from_vec(vec![0.5, 0.5, -0.5, 0.5]);
        assert!((spec.incremental_cost(1.0, &x, &DVector::zeros(1)) - 0.5).abs() < 1e-15);

        let theta = |t| blackman_flanked_weight(t, 5.0, 0.6, 1e-6);
        let spec = transfer_spec(theta);
        let c = spec.incremental_cost(0.3, &DVector::zeros(4), &DVector::from_vec(vec![1.0]));
        assert!((c - 0.5).abs() < 1e-6);
    }

    #[test]
    fn terminal_cost_examples() {
        let spec = transfer_spec(|_| 1.0);
        let phase = Complex64::from_polar(1.0, 0.83);
        let one = ComplexKet::from_slice(&[Complex64::new(0.0, 0.0), phase]);
        assert!(spec.terminal_cost(embed_state(&one).as_vector()).abs() < 1e-15);

        let zero = embed_state(&ComplexKet::basis(2, 0));
        assert!((spec.terminal_cost(zero.as_vector()) - 0.5).abs() < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = ComplexKet::from_slice(&[Complex64::new(s, 0.0), Complex64::new(s, 0.0)]);
        assert!((spec.terminal_cost(embed_state(&plus).as_vector()) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn infidelity_matches_terminal_cost() {
        let spec = transfer_spec(|_| 1.0);
        let psi = ComplexKet::from_slice(&[Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]);
        let x = embed_state(&psi).into_vector();
        assert!((spec.infidelity(&x) - 0.36).abs() < 1e-15);
        let anonymous = CostSpec { target: None, ..spec.clone() };
        assert!((anonymous.infidelity(&x) - 0.36).abs() < 1e-15);
    }

    #[test]
    fn blackman_examples() {
        assert!(blackman_window(0.0, 0.6).abs() < 1e-15);
        assert!((blackman_window(0.3, 0.6) - 1.0).abs() < 1e-15);
        for t in [0.05, 0.1, 0.2, 0.29] {
            assert!((blackman_window(t, 0.6) - blackman_window(0.6 - t, 0.6)).abs() < 1e-14);
        }
    }

    #[test]
    fn flanked_weight_shape() {
        let eps = 1e-6;
        let theta = |t| blackman_flanked_weight(t, 5.0, 0.6, eps);
        let peak = (1.0 + eps) / eps;
        assert!((theta(0.0) - peak).abs() < 1e-6 * peak);
        assert!((theta(5.0) - peak).abs() < 1e-6 * peak);
        let mut prev = theta(0.0);
        for k in 0..=5000 {
            let t = k as f64 * 1e-3;
            let v = theta(t);
            assert!(v >= 1.0 - 1e-12 && v <= peak * (1.0 + 1e-6));
            if t > 0.3 && t < 4.7 {
                assert_eq!(v, 1.0);
            }
            // continuity: no jumps beyond what the steep flanks allow
            if t > 0.1 && t < 4.9 {
                assert!((v - prev).abs() < 0.05 * prev);
            }
            prev = v;
        }
    }
}
