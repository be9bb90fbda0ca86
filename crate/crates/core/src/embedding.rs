//! Bijective mapping between complex kets/operators and the real vectors and
//! matrices the solver works with.
//!
//! A ket `ψ ∈ Cⁿ` is stored as `x = [Re ψ; Im ψ] ∈ R²ⁿ`, and an operator `Ŷ`
//! as the block matrix `[[Re Ŷ, −Im Ŷ], [Im Ŷ, Re Ŷ]]`. Under this layout
//! `Y x` embeds `Ŷ ψ`, so Schrödinger dynamics `ψ̇ = −iĤψ` become `ẋ = H x`
//! with `H` the embedding of `−iĤ`. Nothing downstream of this module touches
//! complex arithmetic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance used when validating Hermitian input.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A ket in `Cⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexKet(DVector<Complex64>);

impl ComplexKet {
    pub fn new(amplitudes: DVector<Complex64>) -> Self {
        Self(amplitudes)
    }

    pub fn from_slice(amplitudes: &[Complex64]) -> Self {
        Self(DVector::from_column_slice(amplitudes))
    }

    /// Computational basis ket `|k⟩` of dimension `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[k] = Complex64::new(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &ComplexKet) -> Complex64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Populations `|⟨k|ψ⟩|²` in the computational basis.
    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Real embedding `[Re ψ; Im ψ]` of a ket.
#[derive(Debug, Clone, PartialEq)]
pub struct RealState(DVector<f64>);

impl RealState {
    /// Wraps a real vector; fails on odd length.
    pub fn new(components: DVector<f64>) -> Result<Self> {
        if !components.len().is_multiple_of(2) || components.is_empty() {
            return Err(Error::Dimension(format!(
                "real state needs a positive even length, got {}",
                components.len()
            )));
        }
        Ok(Self(components))
    }

    /// Number of complex amplitudes `n` (the vector has `2n` entries).
    pub fn dim(&self) -> usize {
        self.0.len() / 2
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Real `2n × 2n` embedding of a complex operator.
#[derive(Debug, Clone, PartialEq)]
pub struct RealOperator(DMatrix<f64>);

impl RealOperator {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || !matrix.nrows().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "real operator must be square with even size, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self(matrix))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(2 * n, 2 * n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Largest entry of `|M + Mᵀ|`.
    pub fn skew_defect(&self) -> f64 {
        (&self.0 + self.0.transpose()).amax()
    }
}

pub fn embed_state(ket: &ComplexKet) -> RealState {
    let n = ket.dim();
    let v = DVector::from_fn(2 * n, |i, _| {
        if i < n {
            ket.0[i].re
        } else {
            ket.0[i - n].im
        }
    });
    RealState(v)
}

/// Inverse of [`embed_state`].
pub fn extract_state(x: &DVector<f64>) -> Result<ComplexKet> {
    if !x.len().is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "cannot extract a ket from odd-length vector ({})",
            x.len()
        )));
    }
    let n = x.len() / 2;
    Ok(ComplexKet(DVector::from_fn(n, |i, _| {
        Complex64::new(x[i], x[i + n])
    })))
}

fn block_embed(y: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = y.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let (br, bc) = (r / n, c / n);
        let z = y[(r % n, c % n)];
        match (br, bc) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    })
}

fn require_square(y: &DMatrix<Complex64>, what: &str) -> Result<()> {
    if !y.is_square() || y.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(())
}

/// Largest entry of `|Ŷ − Ŷ†|`.
pub fn hermitian_defect(y: &DMatrix<Complex64>) -> f64 {
    (y - y.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Embeds an arbitrary square operator `Ŷ` with the block layout
/// `[[Re Ŷ, −Im Ŷ], [Im Ŷ, Re Ŷ]]`.
pub fn embed_observable(y: &DMatrix<Complex64>) -> Result<RealOperator> {
    require_square(y, "observable")?;
    Ok(RealOperator(block_embed(y)))
}

/// Embeds `−iĤ` for a Hermitian `Ĥ`. The result is skew-symmetric.
pub fn embed_generator(h: &DMatrix<Complex64>) -> Result<RealOperator> {
    require_square(h, "Hamiltonian")?;
    let defect = hermitian_defect(h);
    if defect > HERMITIAN_TOL {
        return Err(Error::Validation(format!(
            "Hamiltonian is not Hermitian (max |H - H†| = {defect:e})"
        )));
    }
    let minus_i = Complex64::new(0.0, -1.0);
    Ok(RealOperator(block_embed(&h.map(|z| minus_i * z))))
}

/// Projector `|φ⟩⟨φ|`.
pub fn projector(ket: &ComplexKet) -> DMatrix<Complex64> {
    let v = &ket.0;
    v * v.adjoint()
}

/// Complement `I − |φ⟩⟨φ|` of the projector onto a normalised ket.
pub fn complement_projector(ket: &ComplexKet) -> DMatrix<Complex64> {
    DMatrix::identity(ket.dim(), ket.dim()) - projector(ket)
}

/// Pauli matrices, handy for tests and presets.
pub mod pauli {
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn x() -> DMatrix<Complex64> {
        DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn y() -> DMatrix<Complex64> {
        DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn z() -> DMatrix<Complex64> {
        DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }
}
