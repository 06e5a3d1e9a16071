//! Uniform space and time grids, grid functions and second-order discrete
//! calculus.
//!
//! Spatial nodes are `x_j = j h`, `j = 0..=n+1`, with `h = L/(n+1)`; nodes `0`
//! and `n+1` are the two boundary points. The outward normal is `-1` at `x = 0`
//! and `+1` at `x = L`.

use crate::{Error, Result, C64};

/// Uniform grid on `[0, L]` with `n` interior nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    length: f64,
    interior: usize,
}

impl Grid1D {
    pub const MIN_INTERIOR: usize = 3;

    pub fn new(length: f64, interior: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if interior < Self::MIN_INTERIOR {
            return Err(Error::InvalidGrid(format!(
                "need at least {} interior nodes, got {interior}",
                Self::MIN_INTERIOR
            )));
        }
        Ok(Self { length, interior })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of interior nodes.
    pub fn interior(&self) -> usize {
        self.interior
    }

    /// Number of nodes including both boundary nodes.
    pub fn nodes(&self) -> usize {
        self.interior + 2
    }

    pub fn h(&self) -> f64 {
        self.length / (self.interior + 1) as f64
    }

    /// Coordinate of node `j`; the last node is exactly `L`.
    pub fn x(&self, j: usize) -> f64 {
        if j == self.interior + 1 {
            self.length
        } else {
            j as f64 * self.h()
        }
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.nodes()).map(|j| self.x(j)).collect()
    }

    /// Trapezoid weights for `∫_0^L`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.nodes()];
        w[0] = 0.5 * h;
        w[self.interior + 1] = 0.5 * h;
        w
    }

    /// Index of the boundary node on `side`.
    pub fn boundary_index(&self, side: Side) -> usize {
        match side {
            Side::Left => 0,
            Side::Right => self.interior + 1,
        }
    }

    /// Indices of nodes lying strictly inside `(lo, hi)`.
    pub fn nodes_inside(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let tol = 1e-12 * self.length;
        let first = (0..self.nodes()).find(|&j| self.x(j) > lo + tol);
        match first {
            None => 0..0,
            Some(first) => {
                let mut end = first;
                while end < self.nodes() && self.x(end) < hi - tol {
                    end += 1;
                }
                first..end
            }
        }
    }
}

/// One of the two endpoints of the interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Outward normal in 1D.
    pub fn normal(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn coordinate(self, grid: &Grid1D) -> f64 {
        match self {
            Side::Left => 0.0,
            Side::Right => grid.length(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" | "0" => Ok(Side::Left),
            "right" | "L" => Ok(Side::Right),
            other => Err(Error::InvalidArgument(format!("unknown boundary side `{other}`"))),
        }
    }
}

/// Uniform grid on `[0, T]` with `n_t` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub const MIN_STEPS: usize = 4;

    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps < Self::MIN_STEPS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} time steps, got {steps}",
                Self::MIN_STEPS
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

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.dt()
        }
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.nodes()];
        w[0] = 0.5 * dt;
        w[self.steps] = 0.5 * dt;
        w
    }
}

/// Complex values at every node of a [`Grid1D`], boundary nodes included.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid1D,
    values: Vec<C64>,
}

impl ComplexField {
    pub fn zeros(grid: Grid1D) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.nodes()] }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> C64) -> Self {
        Self { grid, values: (0..grid.nodes()).map(|j| f(grid.x(j))).collect() }
    }

    pub fn from_values(grid: Grid1D, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(Error::GridMismatch(format!(
                "expected {} nodal values, got {}",
                grid.nodes(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    /// Discrete `L²(0, L)` norm by the trapezoid rule.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        self.values.iter().zip(&w).map(|(v, w)| w * v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// A grid function on `[0, L] × [0, T]`, stored slice by slice in time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField<T = C64> {
    grid: Grid1D,
    time: TimeGrid,
    data: Vec<T>,
}

pub type RealSpaceTimeField = SpaceTimeField<f64>;

impl<T: Copy + Default> SpaceTimeField<T> {
    pub fn zeros(grid: Grid1D, time: TimeGrid) -> Self {
        Self { grid, time, data: vec![T::default(); grid.nodes() * time.nodes()] }
    }

    pub fn from_fn(grid: Grid1D, time: TimeGrid, f: impl Fn(f64, f64) -> T) -> Self {
        let mut data = Vec::with_capacity(grid.nodes() * time.nodes());
        for n in 0..time.nodes() {
            let t = time.t(n);
            for j in 0..grid.nodes() {
                data.push(f(grid.x(j), t));
            }
        }
        Self { grid, time, data }
    }

    pub fn from_slices(grid: Grid1D, time: TimeGrid, slices: Vec<Vec<T>>) -> Result<Self> {
        if slices.len() != time.nodes() {
            return Err(Error::GridMismatch(format!(
                "expected {} time slices, got {}",
                time.nodes(),
                slices.len()
            )));
        }
        let mut data = Vec::with_capacity(grid.nodes() * time.nodes());
        for (n, s) in slices.into_iter().enumerate() {
            if s.len() != grid.nodes() {
                return Err(Error::GridMismatch(format!(
                    "slice {n} has {} values, expected {}",
                    s.len(),
                    grid.nodes()
                )));
            }
            data.extend(s);
        }
        Ok(Self { grid, time, data })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn slice(&self, n: usize) -> &[T] {
        let m = self.grid.nodes();
        &self.data[n * m..(n + 1) * m]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [T] {
        let m = self.grid.nodes();
        &mut self.data[n * m..(n + 1) * m]
    }

    pub fn at(&self, n: usize, j: usize) -> T {
        self.data[n * self.grid.nodes() + j]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> SpaceTimeField<U> {
        SpaceTimeField { grid: self.grid, time: self.time, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<U: Copy + Default, V: Copy + Default>(
        &self,
        other: &SpaceTimeField<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<SpaceTimeField<V>> {
        ensure_same_grids(self, other)?;
        Ok(SpaceTimeField {
            grid: self.grid,
            time: self.time,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Applies `f` slice by slice, keeping the grids.
    pub fn map_slices(&self, f: impl Fn(&[T]) -> Vec<T>) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for n in 0..self.time.nodes() {
            data.extend(f(self.slice(n)));
        }
        Self { grid: self.grid, time: self.time, data }
    }
}

impl SpaceTimeField<C64> {
    pub fn slice_field(&self, n: usize) -> ComplexField {
        ComplexField { grid: self.grid, values: self.slice(n).to_vec() }
    }

    pub fn scale(&self, factor: C64) -> Self {
        self.map(|v| v * factor)
    }

    /// Discrete `L²(Q_T)` norm of the field.
    pub fn l2_norm(&self) -> f64 {
        let ones = RealSpaceTimeField::from_fn(self.grid, self.time, |_, _| 1.0);
        integrate_space_time(self, &ones).map(f64::sqrt).unwrap_or(f64::NAN)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn ensure_same_grids<T, U>(a: &SpaceTimeField<T>, b: &SpaceTimeField<U>) -> Result<()> {
    if a.grid != b.grid || a.time != b.time {
        return Err(Error::GridMismatch(format!(
            "fields live on different grids ({:?}/{:?} vs {:?}/{:?})",
            a.grid, a.time, b.grid, b.time
        )));
    }
    Ok(())
}

/// Central differences inside, second-order one-sided at both ends.
pub fn gradient_values(values: &[C64], h: f64) -> Vec<C64> {
    let m = values.len();
    let mut out = vec![C64::new(0.0, 0.0); m];
    let inv2h = 0.5 / h;
    for j in 1..m - 1 {
        out[j] = (values[j + 1] - values[j - 1]) * inv2h;
    }
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) * inv2h;
    out[m - 1] = (3.0 * values[m - 1] - 4.0 * values[m - 2] + values[m - 3]) * inv2h;
    out
}

/// Three-point Laplacian; boundary entries repeat the nearest interior stencil.
pub fn laplacian_values(values: &[C64], h: f64) -> Vec<C64> {
    let m = values.len();
    let mut out = vec![C64::new(0.0, 0.0); m];
    let inv_h2 = 1.0 / (h * h);
    for j in 1..m - 1 {
        out[j] = (values[j + 1] - 2.0 * values[j] + values[j - 1]) * inv_h2;
    }
    out[0] = out[1];
    out[m - 1] = out[m - 2];
    out
}

pub fn gradient(f: &ComplexField) -> ComplexField {
    ComplexField { grid: f.grid, values: gradient_values(&f.values, f.grid.h()) }
}

/// Discrete Laplacian. Boundary-node values are diagnostic only.
pub fn laplacian(f: &ComplexField) -> ComplexField {
    ComplexField { grid: f.grid, values: laplacian_values(&f.values, f.grid.h()) }
}

/// Outward normal derivative at one endpoint, second-order one-sided.
pub fn normal_derivative_values(values: &[C64], h: f64, side: Side) -> C64 {
    let m = values.len();
    match side {
        Side::Left => -(-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h),
        Side::Right => (3.0 * values[m - 1] - 4.0 * values[m - 2] + values[m - 3]) / (2.0 * h),
    }
}

pub fn normal_derivative(f: &ComplexField, side: Side) -> C64 {
    normal_derivative_values(&f.values, f.grid.h(), side)
}

pub fn space_gradient(f: &SpaceTimeField) -> SpaceTimeField {
    let h = f.grid.h();
    f.map_slices(|s| gradient_values(s, h))
}

pub fn space_laplacian(f: &SpaceTimeField) -> SpaceTimeField {
    let h = f.grid.h();
    f.map_slices(|s| laplacian_values(s, h))
}

/// Central difference in time, second-order one-sided at `t = 0` and `t = T`.
pub fn time_derivative(f: &SpaceTimeField) -> SpaceTimeField {
    let nt = f.time.steps();
    let m = f.grid.nodes();
    let inv2dt = 0.5 / f.time.dt();
    let mut out = SpaceTimeField::zeros(f.grid, f.time);
    for n in 0..=nt {
        for j in 0..m {
            let d = if n == 0 {
                -3.0 * f.at(0, j) + 4.0 * f.at(1, j) - f.at(2, j)
            } else if n == nt {
                3.0 * f.at(nt, j) - 4.0 * f.at(nt - 1, j) + f.at(nt - 2, j)
            } else {
                f.at(n + 1, j) - f.at(n - 1, j)
            };
            out.data[n * m + j] = d * inv2dt;
        }
    }
    out
}

/// Trapezoid rule in `x` and `t` of `weight · |F|²`.
pub fn integrate_space_time(f: &SpaceTimeField, weight: &RealSpaceTimeField) -> Result<f64> {
    ensure_same_grids(f, weight)?;
    let wx = f.grid.trapezoid_weights();
    let wt = f.time.trapezoid_weights();
    let mut total = 0.0;
    for (n, wt) in wt.iter().enumerate() {
        let fs = f.slice(n);
        let ws = weight.slice(n);
        let slice: f64 = (0..wx.len()).map(|j| wx[j] * ws[j] * fs[j].norm_sqr()).sum();
        total += wt * slice;
    }
    Ok(total)
}

/// Linear interpolation weights for `x` on a uniform grid: `(j, θ)` with
/// `x ≈ (1-θ) node_j + θ node_{j+1}`.
pub(crate) fn locate(x: f64, spacing: f64, cells: usize) -> (usize, f64) {
    let u = (x / spacing).max(0.0);
    let j = (u.floor() as usize).min(cells - 1);
    (j, (u - j as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn grid_invariants() {
        let g = Grid1D::new(1.0, 63).unwrap();
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(64), 1.0);
        assert!(Grid1D::new(1.0, 2).is_err());
        assert!(Grid1D::new(0.0, 5).is_err());
        let t = TimeGrid::new(2.0, 8).unwrap();
        assert_eq!(t.t(8), 2.0);
        assert!(TimeGrid::new(1.0, 3).is_err());
    }

    #[test]
    fn gradient_of_constant_and_quadratic() {
        let g = Grid1D::new(1.0, 3).unwrap();
        let constant = ComplexField::from_fn(g, |_| c(4.2));
        assert!(gradient(&constant).values().iter().all(|v| v.norm() < 1e-12));
        let quad = ComplexField::from_fn(g, |x| c(x * x));
        let d = gradient(&quad);
        for j in 0..g.nodes() {
            assert!((d.values()[j].re - 2.0 * g.x(j)).abs() < 1e-12, "node {j}");
        }
    }

    #[test]
    fn gradient_of_sine_within_taylor_bound() {
        let g = Grid1D::new(1.0, 63).unwrap();
        let h = g.h();
        let f = ComplexField::from_fn(g, |x| c((PI * x).sin()));
        let d = gradient(&f);
        let err = (1..=g.interior())
            .map(|j| (d.values()[j].re - PI * (PI * g.x(j)).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < PI.powi(3) / 6.0 * h * h * 1.1, "err = {err}");
    }

    #[test]
    fn laplacian_exact_on_low_degree() {
        let g = Grid1D::new(1.0, 7).unwrap();
        let lin = laplacian(&ComplexField::from_fn(g, |x| c(x)));
        let quad = laplacian(&ComplexField::from_fn(g, |x| c(x * x)));
        for j in 1..=g.interior() {
            assert!(lin.values()[j].norm() < 1e-9);
            assert!((quad.values()[j].re - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn laplacian_converges_at_second_order() {
        let errors: Vec<f64> = [31, 63, 127]
            .iter()
            .map(|&n| {
                let g = Grid1D::new(1.0, n).unwrap();
                let f = ComplexField::from_fn(g, |x| c((PI * x).sin()));
                let l = laplacian(&f);
                (1..=n)
                    .map(|j| (l.values()[j].re + PI * PI * (PI * g.x(j)).sin()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "order {order}");
        }
    }

    #[test]
    fn time_derivative_cases() {
        let g = Grid1D::new(1.0, 5).unwrap();
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let constant = SpaceTimeField::from_fn(g, tg, |x, _| c(x));
        assert!(time_derivative(&constant).max_abs() < 1e-12);
        let linear = SpaceTimeField::from_fn(g, tg, |x, t| c(t * (1.0 + x)));
        let d = time_derivative(&linear);
        for n in 0..tg.nodes() {
            for j in 0..g.nodes() {
                assert!((d.at(n, j).re - (1.0 + g.x(j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_derivative_of_phase_is_second_order() {
        let errors: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&nt| {
                let g = Grid1D::new(1.0, 3).unwrap();
                let tg = TimeGrid::new(1.0, nt).unwrap();
                let f = SpaceTimeField::from_fn(g, tg, |x, t| C64::from_polar(1.0 + x, t));
                let d = time_derivative(&f);
                let mut err: f64 = 0.0;
                for n in 1..nt {
                    for j in 0..g.nodes() {
                        let exact = C64::i() * f.at(n, j);
                        err = err.max((d.at(n, j) - exact).norm());
                    }
                }
                err
            })
            .collect();
        for w in errors.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9);
        }
    }

    #[test]
    fn integrate_cases() {
        let g = Grid1D::new(1.0, 9).unwrap();
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let ones = RealSpaceTimeField::from_fn(g, tg, |_, _| 1.0);
        let one = SpaceTimeField::from_fn(g, tg, |_, _| c(1.0));
        assert!((integrate_space_time(&one, &ones).unwrap() - 1.0).abs() < 1e-12);
        let zero = SpaceTimeField::zeros(g, tg);
        let w = RealSpaceTimeField::from_fn(g, tg, |x, t| x * t + 3.0);
        assert_eq!(integrate_space_time(&zero, &w).unwrap(), 0.0);

        let g = Grid1D::new(1.0, 127).unwrap();
        let tg = TimeGrid::new(1.0, 127).unwrap();
        let s = SpaceTimeField::from_fn(g, tg, |x, _| c((PI * x).sin()));
        let ones = RealSpaceTimeField::from_fn(g, tg, |_, _| 1.0);
        assert!((integrate_space_time(&s, &ones).unwrap() - 0.5).abs() < 1e-4);

        let other = RealSpaceTimeField::from_fn(Grid1D::new(1.0, 5).unwrap(), tg, |_, _| 1.0);
        assert!(integrate_space_time(&s, &other).is_err());
    }

    #[test]
    fn normal_derivative_cases() {
        let g = Grid1D::new(1.0, 15).unwrap();
        let constant = ComplexField::from_fn(g, |_| c(2.0));
        assert!(normal_derivative(&constant, Side::Left).norm() < 1e-12);
        assert!(normal_derivative(&constant, Side::Right).norm() < 1e-12);
        let lin = ComplexField::from_fn(g, |x| c(x));
        assert!((normal_derivative(&lin, Side::Left).re + 1.0).abs() < 1e-12);
        assert!((normal_derivative(&lin, Side::Right).re - 1.0).abs() < 1e-12);

        let g = Grid1D::new(1.0, 63).unwrap();
        let s = ComplexField::from_fn(g, |x| c((PI * x).sin()));
        // oracle: exact derivative π cos(πx) projected on ν = +1 at x = 1
        let exact = PI * (PI * 1.0).cos();
        let got = normal_derivative(&s, Side::Right).re;
        assert!((got - exact).abs() < 2.0 * PI.powi(3) * g.h() * g.h(), "{got} vs {exact}");
    }

    #[test]
    fn summation_by_parts_for_vanishing_fields() {
        let g = Grid1D::new(1.0, 20).unwrap();
        let f = ComplexField::from_fn(g, |x| C64::new((3.0 * x).sin() * x * (1.0 - x), x * x * (1.0 - x)));
        let q = ComplexField::from_fn(g, |x| C64::new(x * (1.0 - x), (5.0 * x).cos() * x * (1.0 - x)));
        let (lf, lq) = (laplacian(&f), laplacian(&q));
        let h = g.h();
        let lhs: C64 = (1..=g.interior()).map(|j| lf.values()[j] * q.values()[j].conj() * h).sum();
        let rhs: C64 = (1..=g.interior()).map(|j| f.values()[j] * lq.values()[j].conj() * h).sum();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn nodes_inside_open_interval() {
        let g = Grid1D::new(1.0, 9).unwrap();
        assert_eq!(g.nodes_inside(0.3, 0.5), 4..5);
        assert_eq!(g.nodes_inside(0.0, 1.0), 1..10);
    }

    proptest::proptest! {
        #[test]
        fn operators_are_linear(
            coeffs in proptest::collection::vec(-5.0f64..5.0, 2 * 12),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let g = Grid1D::new(1.3, 10).unwrap();
            let f = ComplexField::from_values(g, (0..12).map(|j| C64::new(coeffs[j], coeffs[j + 12])).collect()).unwrap();
            let q = ComplexField::from_values(g, (0..12).map(|j| C64::new(coeffs[23 - j], coeffs[j])).collect()).unwrap();
            let combo = ComplexField::from_values(
                g,
                f.values().iter().zip(q.values()).map(|(a, b)| alpha * a + beta * b).collect(),
            ).unwrap();
            for op in [gradient, laplacian] {
                let lhs = op(&combo);
                let (of, oq) = (op(&f), op(&q));
                for j in 0..12 {
                    let rhs = alpha * of.values()[j] + beta * oq.values()[j];
                    proptest::prop_assert!((lhs.values()[j] - rhs).norm() < 1e-9 * (1.0 + rhs.norm()));
                }
            }
        }

        #[test]
        fn integral_is_monotone(values in proptest::collection::vec(0.0f64..2.0, 6 * 5), bump in 0.0f64..1.0) {
            let g = Grid1D::new(1.0, 4).unwrap();
            let tg = TimeGrid::new(1.0, 4).unwrap();
            let small = SpaceTimeField::from_slices(g, tg, values.chunks(6).map(|c| c.iter().map(|&v| C64::new(v, 0.0)).collect()).collect()).unwrap();
            let large = small.map(|v| v * (1.0 + bump));
            let w = RealSpaceTimeField::from_fn(g, tg, |x, t| 1.0 + x + t);
            proptest::prop_assert!(integrate_space_time(&small, &w).unwrap() <= integrate_space_time(&large, &w).unwrap() + 1e-12);
        }
    }
}
