//! Linear-quadratic model of the cost around a trajectory, its differential
//! Riccati solution, and the resulting descent direction.
//!
//! All coefficient signals are sampled on the refined grid (nodes plus RK4
//! half-step times) so the backward Riccati sweep and the forward descent
//! sweep never interpolate the model itself. Only the gains `K_o`, `v_o` are
//! node samples, linear in between.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{CostSpec, QuantumSystem};
use crate::odegrid::{
    integrate_backward_with, integrate_forward, simpson, SampledSignal, TimeGrid,
};
use crate::projection::{Costate, Trajectory};

/// `R(t)` eigenvalues at or below this make the Riccati solve fail.
pub const MIN_INPUT_EIGENVALUE: f64 = 1e-10;

/// Which second-order model to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// Full second-order model including costate cross terms.
    Newton,
    /// Positive semidefinite model from the cost Hessian alone.
    QuasiNewton,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Newton => "newton",
            Self::QuasiNewton => "quasi_newton",
        }
    }
}

/// Coefficients of the LQ problem
///
/// ```text
/// min  πᵀz(T) + ½z(T)ᵀΠz(T) + ∫ qᵀz + rᵀν + ½[z;ν]ᵀ[[Q,S],[Sᵀ,R]][z;ν] dt
/// s.t. ż = Az + Bν,  z(0) = 0
/// ```
///
/// Signals live on `grid.refined()`.
#[derive(Debug, Clone)]
pub struct LqCoefficients {
    grid: TimeGrid,
    pub a: SampledSignal<DMatrix<f64>>,
    pub b: SampledSignal<DMatrix<f64>>,
    pub q: SampledSignal<DVector<f64>>,
    pub r: SampledSignal<DVector<f64>>,
    pub q_mat: SampledSignal<DMatrix<f64>>,
    pub s_mat: SampledSignal<DMatrix<f64>>,
    pub r_mat: SampledSignal<DMatrix<f64>>,
    pub pi: DVector<f64>,
    pub pi_mat: DMatrix<f64>,
    pub mode: StepKind,
}

impl LqCoefficients {
    /// Builds coefficients from raw samples on `grid.refined()`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        grid: TimeGrid,
        a: SampledSignal<DMatrix<f64>>,
        b: SampledSignal<DMatrix<f64>>,
        q: SampledSignal<DVector<f64>>,
        r: SampledSignal<DVector<f64>>,
        q_mat: SampledSignal<DMatrix<f64>>,
        s_mat: SampledSignal<DMatrix<f64>>,
        r_mat: SampledSignal<DMatrix<f64>>,
        pi: DVector<f64>,
        pi_mat: DMatrix<f64>,
        mode: StepKind,
    ) -> Result<Self> {
        let fine = grid.refined();
        let grids = [
            a.grid(),
            b.grid(),
            q.grid(),
            r.grid(),
            q_mat.grid(),
            s_mat.grid(),
            r_mat.grid(),
        ];
        if grids.iter().any(|g| **g != fine) {
            return Err(Error::Dimension(
                "LQ coefficient signals must be sampled on the refined grid".into(),
            ));
        }
        let nx = pi.len();
        let nu = r.first().len();
        let shapes_ok = a.first().shape() == (nx, nx)
            && b.first().shape() == (nx, nu)
            && q.first().len() == nx
            && q_mat.first().shape() == (nx, nx)
            && s_mat.first().shape() == (nx, nu)
            && r_mat.first().shape() == (nu, nu)
            && pi_mat.shape() == (nx, nx);
        if !shapes_ok {
            return Err(Error::Dimension("inconsistent LQ coefficient shapes".into()));
        }
        Ok(Self {
            grid,
            a,
            b,
            q,
            r,
            q_mat,
            s_mat,
            r_mat,
            pi,
            pi_mat,
            mode,
        })
    }

    /// The base (node) grid.
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn state_len(&self) -> usize {
        self.pi.len()
    }

    pub fn input_len(&self) -> usize {
        self.r.first().len()
    }
}

fn on_grid<V>(grid: TimeGrid, values: Vec<V>) -> SampledSignal<V> {
    SampledSignal::new(grid, values).expect("one sample per grid node")
}

fn at<V: crate::odegrid::VectorSpace>(sig: &SampledSignal<V>, t: f64) -> V {
    sig.interpolate(t).expect("stage time inside grid")
}

/// Builds the LQ model around `xi`.
///
/// Both modes use `A = H(u)`, `B = [∂H/∂uᵢ · x]`, `q = P_λx`, `r = R(t)u`,
/// `Q = P_λ`, `π = P_¬φx(T)`, `Π = P_¬φ`. Newton mode adds the costate terms
/// `S̃ = [(∂H/∂uᵢ)ᵀχ]` and `R̃ᵢⱼ = χᵀ(∂²H/∂uᵢ∂uⱼ)x` to `S` and `R`.
pub fn linearize(
    sys: &QuantumSystem,
    spec: &CostSpec,
    xi: &Trajectory,
    costate: Option<&Costate>,
    mode: StepKind,
) -> Result<LqCoefficients> {
    let chi = match (mode, costate) {
        (StepKind::Newton, Some(c)) => Some(c.fine()),
        (StepKind::QuasiNewton, None) => None,
        (StepKind::Newton, None) => {
            return Err(Error::Precondition(
                "Newton linearization requires the costate".into(),
            ))
        }
        (StepKind::QuasiNewton, Some(_)) => {
            return Err(Error::Precondition(
                "quasi-Newton linearization does not take a costate".into(),
            ))
        }
    };

    let grid = *xi.grid();
    let fine = grid.refined();
    let us = xi.fine_control();
    let xs = xi.fine_state();
    let nx = sys.state_len();
    let m = sys.num_controls();

    let len = fine.len();
    let mut a = Vec::with_capacity(len);
    let mut b = Vec::with_capacity(len);
    let mut q = Vec::with_capacity(len);
    let mut r = Vec::with_capacity(len);
    let mut s_mat = Vec::with_capacity(len);
    let mut r_mat = Vec::with_capacity(len);

    for (k, t) in fine.times().enumerate() {
        let u = us.at_node(k);
        let x = xs.at_node(k);
        let weight = spec.input_weight.at(t);
        if weight.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "input weight is {}x{}, expected {m}x{m}",
                weight.nrows(),
                weight.ncols()
            )));
        }
        a.push(sys.generator_matrix(u.as_slice()));

        let mut bk = DMatrix::zeros(nx, m);
        let mut sk = DMatrix::zeros(nx, m);
        let mut rk = weight.clone();
        for (i, c) in sys.controls().iter().enumerate() {
            let hi = c.generator.matrix();
            bk.set_column(i, &(hi * x * c.coupling.d1(u[i])));
            if let Some(chi) = chi {
                let chi = chi.at_node(k);
                sk.set_column(i, &(hi.tr_mul(chi) * c.coupling.d1(u[i])));
                // only the diagonal of ∂²H survives for separable couplings
                rk[(i, i)] += chi.dot(&(hi * x)) * c.coupling.d2(u[i]);
            }
        }
        b.push(bk);
        s_mat.push(sk);
        r_mat.push(rk);
        q.push(&spec.state_penalty * x);
        r.push(&weight * u);
    }

    let sig = |v| on_grid(fine, v);
    Ok(LqCoefficients {
        grid,
        a: sig(a),
        b: sig(b),
        q: on_grid(fine, q),
        r: on_grid(fine, r),
        q_mat: SampledSignal::from_fn(fine, |_| spec.state_penalty.clone()),
        s_mat: sig(s_mat),
        r_mat: sig(r_mat),
        pi: &spec.terminal_penalty * xi.final_state(),
        pi_mat: spec.terminal_penalty.clone(),
        mode,
    })
}

/// Backward Riccati solution and the resulting feedback law
/// `ν = −v_o − K_o z`, all on the node grid.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p_mat: SampledSignal<DMatrix<f64>>,
    pub p: SampledSignal<DVector<f64>>,
    pub gain: SampledSignal<DMatrix<f64>>,
    pub feedforward: SampledSignal<DVector<f64>>,
}

fn inverse_input_weight(r: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let sym = (r + r.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigenvalues().min();
    if !(min_eig > MIN_INPUT_EIGENVALUE) {
        return Err(Error::RiccatiFailure(format!(
            "input weight not positive definite at t = {t} (min eigenvalue {min_eig:e})"
        )));
    }
    sym.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::RiccatiFailure(format!("input weight not invertible at t = {t}")))
}

/// Solves
///
/// ```text
/// −Ṗ = AᵀP + PA − K_oᵀRK_o + Q,       P(T) = Π
/// −ṗ = (A − BK_o)ᵀp − K_oᵀr + q,      p(T) = π
/// K_o = R⁻¹(BᵀP + Sᵀ),  v_o = R⁻¹(Bᵀp + r)
/// ```
///
/// backward with RK4, symmetrising `P` after every step.
pub fn solve_riccati(co: &LqCoefficients) -> Result<RiccatiSolution> {
    let fine = co.grid.refined();
    let r_inv = co
        .r_mat
        .values()
        .iter()
        .zip(fine.times())
        .map(|(r, t)| inverse_input_weight(r, t))
        .collect::<Result<Vec<_>>>()?;
    let r_inv = SampledSignal::new(fine, r_inv).expect("refined sample count");

    let gains = |t: f64, p_mat: &DMatrix<f64>, p: &DVector<f64>| {
        let b = at(&co.b, t);
        let ri = at(&r_inv, t);
        let k = &ri * (b.tr_mul(p_mat) + at(&co.s_mat, t).transpose());
        let v = &ri * (b.tr_mul(p) + at(&co.r, t));
        (k, v)
    };

    let rhs = |t: f64, (p_mat, p): &(DMatrix<f64>, DVector<f64>)| {
        let a = at(&co.a, t);
        let b = at(&co.b, t);
        let (k, _) = gains(t, p_mat, p);
        let r = at(&co.r_mat, t);
        let dp_mat = a.tr_mul(p_mat) + p_mat * &a - k.tr_mul(&(&r * &k)) + at(&co.q_mat, t);
        let dp = (&a - &b * &k).tr_mul(p) - k.tr_mul(&at(&co.r, t)) + at(&co.q, t);
        (dp_mat, dp)
    };

    let terminal = (co.pi_mat.clone(), co.pi.clone());
    let sol = integrate_backward_with(&co.grid, terminal, rhs, |(p_mat, _)| {
        *p_mat = (&*p_mat + p_mat.transpose()) * 0.5;
    })
    .map_err(|e| match e {
        Error::DivergedIntegration { node } => Error::RiccatiFailure(format!(
            "Riccati solution diverged at node {node}"
        )),
        other => other,
    })?;

    let mut p_mats = Vec::with_capacity(co.grid.len());
    let mut ps = Vec::with_capacity(co.grid.len());
    let mut ks = Vec::with_capacity(co.grid.len());
    let mut vs = Vec::with_capacity(co.grid.len());
    for (t, (p_mat, p)) in co.grid.times().zip(sol.into_values()) {
        let (k, v) = gains(t, &p_mat, &p);
        p_mats.push(p_mat);
        ps.push(p);
        ks.push(k);
        vs.push(v);
    }
    Ok(RiccatiSolution {
        p_mat: on_grid(co.grid, p_mats),
        p: on_grid(co.grid, ps),
        gain: on_grid(co.grid, ks),
        feedforward: on_grid(co.grid, vs),
    })
}

/// Descent direction `ν`, the state update `z` it induces, and the
/// directional derivative `Dg·ν = πᵀz(T) + η(T)`.
#[derive(Debug, Clone)]
pub struct DescentResult {
    pub z: SampledSignal<DVector<f64>>,
    pub nu: SampledSignal<DVector<f64>>,
    pub eta_end: f64,
    pub dg: f64,
}

/// Integrates the closed-loop system `ż = Az + Bν`, `η̇ = qᵀz + rᵀν` with
/// `ν = −v_o − K_o z` forward from zero.
pub fn descend(co: &LqCoefficients, ric: &RiccatiSolution) -> Result<DescentResult> {
    let nx = co.state_len();
    let law = |t: f64, z: &DVector<f64>| -> DVector<f64> {
        -(at(&ric.feedforward, t) + at(&ric.gain, t) * z)
    };
    let sol = integrate_forward(
        &co.grid,
        (DVector::zeros(nx), 0.0),
        |t, (z, _): &(DVector<f64>, f64)| {
            let nu = law(t, z);
            let dz = at(&co.a, t) * z + at(&co.b, t) * &nu;
            let deta = at(&co.q, t).dot(z) + at(&co.r, t).dot(&nu);
            (dz, deta)
        },
    )?;
    let (zs, etas): (Vec<_>, Vec<_>) = sol.into_values().into_iter().unzip();
    let nu: Vec<_> = co
        .grid
        .times()
        .zip(&zs)
        .map(|(t, z)| law(t, z))
        .collect();
    let eta_end = *etas.last().expect("non-empty grid");
    let z = SampledSignal::new(co.grid, zs).expect("node sample count");
    let dg = co.pi.dot(z.last()) + eta_end;
    Ok(DescentResult {
        z,
        nu: SampledSignal::new(co.grid, nu).expect("node sample count"),
        eta_end,
        dg,
    })
}

/// Open-loop response to a given direction `ν` (linear between nodes):
/// returns `z` and `Dg·ν = πᵀz(T) + ∫ qᵀz + rᵀν`.
pub fn directional_derivative(
    co: &LqCoefficients,
    nu: &SampledSignal<DVector<f64>>,
) -> Result<(SampledSignal<DVector<f64>>, f64)> {
    if nu.grid() != &co.grid {
        return Err(Error::Dimension("direction must live on the LQ grid".into()));
    }
    let sol = integrate_forward(
        &co.grid,
        (DVector::zeros(co.state_len()), 0.0),
        |t, (z, _): &(DVector<f64>, f64)| {
            let v = at(nu, t);
            let dz = at(&co.a, t) * z + at(&co.b, t) * &v;
            (dz, at(&co.q, t).dot(z) + at(&co.r, t).dot(&v))
        },
    )?;
    let (zs, etas): (Vec<_>, Vec<_>) = sol.into_values().into_iter().unzip();
    let dg = co.pi.dot(zs.last().expect("non-empty grid")) + etas.last().expect("non-empty grid");
    Ok((SampledSignal::new(co.grid, zs).expect("node sample count"), dg))
}

/// Value of the LQ objective at `(z, ν)`; the running term is integrated with
/// composite Simpson on the node grid.
pub fn lq_objective(
    co: &LqCoefficients,
    z: &SampledSignal<DVector<f64>>,
    nu: &SampledSignal<DVector<f64>>,
) -> f64 {
    let z_end = z.last();
    let terminal = co.pi.dot(z_end) + 0.5 * z_end.dot(&(&co.pi_mat * z_end));
    let running = (0..co.grid.len()).map(|k| {
        let f = 2 * k;
        let (zk, vk) = (z.at_node(k), nu.at_node(k));
        co.q.at_node(f).dot(zk)
            + co.r.at_node(f).dot(vk)
            + 0.5 * zk.dot(&(co.q_mat.at_node(f) * zk))
            + zk.dot(&(co.s_mat.at_node(f) * vk))
            + 0.5 * vk.dot(&(co.r_mat.at_node(f) * vk))
    });
    terminal + simpson(&co.grid, running)
}
