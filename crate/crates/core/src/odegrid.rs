//! Uniform time grids, sampled signals and fixed-step RK4 integration.
//!
//! Every ODE in the solver (state projection, costate, Riccati, descent) is
//! integrated with classical RK4 on the same uniform grid so that samples
//! line up node for node. Right-hand sides receive the stage time and look up
//! any time-varying coefficients themselves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Any state with a norm above this aborts integration.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Uniform grid `t_k = k·dt`, `k = 0..=steps`, over `[0, horizon]`.
///
/// The step count must be even so composite Simpson quadrature applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Validation(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps < 2 || !steps.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "grid step count must be even and at least 2, got {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }

    /// The grid with every step halved, so RK4 half-step times become nodes.
    pub fn refined(&self) -> Self {
        Self {
            horizon: self.horizon,
            steps: 2 * self.steps,
        }
    }

    /// Bracketing node index and fractional offset for `t`. Times within a
    /// relative 1e-9 of a node snap to it.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let slack = 1e-12 * self.horizon;
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::OutsideGrid {
                t,
                horizon: self.horizon,
            });
        }
        let s = (t / self.dt()).clamp(0.0, self.steps as f64);
        let nearest = s.round();
        if (s - nearest).abs() < 1e-9 {
            return Ok((nearest as usize, 0.0));
        }
        let k = (s.floor() as usize).min(self.steps - 1);
        Ok((k, s - k as f64))
    }
}

/// Minimal vector-space interface needed by the integrator and interpolation.
pub trait VectorSpace: Clone {
    /// `self + h·other`.
    fn add_scaled(&self, h: f64, other: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    fn norm(&self) -> f64;
    fn all_finite(&self) -> bool;
}

impl VectorSpace for f64 {
    fn add_scaled(&self, h: f64, other: &Self) -> Self {
        self + h * other
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl VectorSpace for DVector<f64> {
    fn add_scaled(&self, h: f64, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(h, other, 1.0);
        out
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn norm(&self) -> f64 {
        self.norm()
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl VectorSpace for DMatrix<f64> {
    fn add_scaled(&self, h: f64, other: &Self) -> Self {
        let mut out = self.clone();
        out.zip_apply(other, |a, b| *a += h * b);
        out
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn norm(&self) -> f64 {
        self.norm()
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl<A: VectorSpace, B: VectorSpace> VectorSpace for (A, B) {
    fn add_scaled(&self, h: f64, other: &Self) -> Self {
        (self.0.add_scaled(h, &other.0), self.1.add_scaled(h, &other.1))
    }
    fn scale(&self, s: f64) -> Self {
        (self.0.scale(s), self.1.scale(s))
    }
    fn norm(&self) -> f64 {
        self.0.norm().hypot(self.1.norm())
    }
    fn all_finite(&self) -> bool {
        self.0.all_finite() && self.1.all_finite()
    }
}

/// Values sampled at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal<V> {
    grid: TimeGrid,
    values: Vec<V>,
}

impl<V> SampledSignal<V> {
    pub fn new(grid: TimeGrid, values: Vec<V>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "signal has {} samples but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64) -> V) -> Self {
        let values = grid.times().map(&mut f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn into_values(self) -> Vec<V> {
        self.values
    }

    pub fn at_node(&self, k: usize) -> &V {
        &self.values[k]
    }

    pub fn first(&self) -> &V {
        &self.values[0]
    }

    pub fn last(&self) -> &V {
        &self.values[self.values.len() - 1]
    }

    pub fn map<W>(&self, f: impl FnMut(&V) -> W) -> SampledSignal<W> {
        SampledSignal {
            grid: self.grid,
            values: self.values.iter().map(f).collect(),
        }
    }
}

impl<V: VectorSpace> SampledSignal<V> {
    /// Piecewise-linear interpolation; exact at nodes.
    pub fn interpolate(&self, t: f64) -> Result<V> {
        let (k, frac) = self.grid.locate(t)?;
        if frac == 0.0 {
            return Ok(self.values[k].clone());
        }
        let a = &self.values[k];
        let b = &self.values[k + 1];
        Ok(a.add_scaled(frac, &b.add_scaled(-1.0, a)))
    }

    /// Largest sample norm.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(VectorSpace::norm).fold(0.0, f64::max)
    }
}

fn rk4_step<V, F>(rhs: &mut F, t: f64, h: f64, y: &V) -> V
where
    V: VectorSpace,
    F: FnMut(f64, &V) -> V,
{
    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &y.add_scaled(0.5 * h, &k1));
    let k3 = rhs(t + 0.5 * h, &y.add_scaled(0.5 * h, &k2));
    let k4 = rhs(t + h, &y.add_scaled(h, &k3));
    let incr = k1.add_scaled(2.0, &k2).add_scaled(2.0, &k3).add_scaled(1.0, &k4);
    y.add_scaled(h / 6.0, &incr)
}

fn check(y: &impl VectorSpace, node: usize) -> Result<()> {
    if y.all_finite() && y.norm() <= DIVERGENCE_NORM {
        Ok(())
    } else {
        Err(Error::DivergedIntegration { node })
    }
}

/// RK4 for `ẏ = rhs(t, y)` from `y(0) = y0`, sampled at every node.
pub fn integrate_forward<V, F>(grid: &TimeGrid, y0: V, rhs: F) -> Result<SampledSignal<V>>
where
    V: VectorSpace,
    F: FnMut(f64, &V) -> V,
{
    integrate_forward_with(grid, y0, rhs, |_| {})
}

/// Like [`integrate_forward`], applying `after_step` to each new sample.
pub fn integrate_forward_with<V, F, P>(
    grid: &TimeGrid,
    y0: V,
    mut rhs: F,
    mut after_step: P,
) -> Result<SampledSignal<V>>
where
    V: VectorSpace,
    F: FnMut(f64, &V) -> V,
    P: FnMut(&mut V),
{
    check(&y0, 0)?;
    let h = grid.dt();
    let mut values = Vec::with_capacity(grid.len());
    values.push(y0);
    for k in 0..grid.steps() {
        let mut next = rk4_step(&mut rhs, grid.time(k), h, &values[k]);
        after_step(&mut next);
        check(&next, k + 1)?;
        values.push(next);
    }
    Ok(SampledSignal {
        grid: *grid,
        values,
    })
}

/// RK4 for `−ẏ = rhs(t, y)` from the terminal value `y(T) = y_end`, sampled
/// at every node of `grid`.
pub fn integrate_backward<V, F>(grid: &TimeGrid, y_end: V, rhs: F) -> Result<SampledSignal<V>>
where
    V: VectorSpace,
    F: FnMut(f64, &V) -> V,
{
    integrate_backward_with(grid, y_end, rhs, |_| {})
}

/// Like [`integrate_backward`], applying `after_step` to each new sample.
pub fn integrate_backward_with<V, F, P>(
    grid: &TimeGrid,
    y_end: V,
    mut rhs: F,
    mut after_step: P,
) -> Result<SampledSignal<V>>
where
    V: VectorSpace,
    F: FnMut(f64, &V) -> V,
    P: FnMut(&mut V),
{
    let n = grid.steps();
    check(&y_end, n)?;
    let h = grid.dt();
    let horizon = grid.horizon();
    // In reversed time s = T − t the equation reads dy/ds = rhs(T − s, y).
    let mut reversed = |s: f64, y: &V| rhs(horizon - s, y);
    let mut values = Vec::with_capacity(grid.len());
    values.push(y_end);
    for j in 0..n {
        let s = grid.time(j);
        let mut next = rk4_step(&mut reversed, s, h, &values[j]);
        after_step(&mut next);
        check(&next, n - j - 1)?;
        values.push(next);
    }
    values.reverse();
    Ok(SampledSignal {
        grid: *grid,
        values,
    })
}

/// Composite Simpson rule over the nodes of an even grid.
pub fn simpson(grid: &TimeGrid, samples: impl IntoIterator<Item = f64>) -> f64 {
    let n = grid.steps();
    let mut acc = 0.0;
    for (k, v) in samples.into_iter().enumerate() {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * v;
    }
    acc * grid.dt() / 3.0
}
