//! Conjugated operators and empirical evaluation of the internal and
//! boundary Carleman inequalities.
//!
//! The inequalities integrate against `e^{−2sφ}`, which for realistic `(s, λ)`
//! is concentrated in layers far thinner than any grid spacing around the
//! point `(argmax ψ, T/2)` and underflows elsewhere. Terms are therefore
//! accumulated with weight `e^{−2s(φ − φ_peak)}` (the common factor
//! `e^{−2sφ_peak}` cancels in every ratio and is kept as `log_scale`), and
//! besides the plain nodal trapezoid rule a graded Gauss–Legendre rule
//! refining geometrically toward the peak is available.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::forward::Solution;
use crate::grid::{self, Grid1D, SpaceTimeField, TimeGrid};
use crate::model::{Mat2, SourcePair, TransformedMatrix};
use crate::weights::{Observation, WeightBundle, WeightSystem};
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Values, derivatives and source of a solution pair at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub y: [C64; 2],
    pub dy: [C64; 2],
    pub d2y: [C64; 2],
    pub dt: [C64; 2],
    /// Right-hand side `f` of the untransformed system.
    pub f: [C64; 2],
}

/// Spatial sample point carrying its distances to both endpoints exactly,
/// which matters inside layers only a few ulps wide.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Abscissa {
    pub x: f64,
    pub from_left: f64,
    pub from_right: f64,
}

impl Abscissa {
    pub fn new(x: f64, length: f64) -> Self {
        Self { x, from_left: x, from_right: length - x }
    }
}

/// A solution pair that can be sampled anywhere in `[0, L] × [0, T]`.
pub trait SolutionField: Sync {
    fn length(&self) -> f64;
    fn horizon(&self) -> f64;
    fn jet(&self, p: Abscissa, t: f64) -> Jet;
    fn jet_at(&self, x: f64, t: f64) -> Jet {
        self.jet(Abscissa::new(x, self.length()), t)
    }
    /// Abscissae where the field is only piecewise smooth.
    fn breakpoints_x(&self) -> Vec<f64> {
        Vec::new()
    }
    fn breakpoints_t(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// One separable term `e^{κt} sin(mπx/L) v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModalTerm {
    pub mode: usize,
    pub rate: C64,
    pub vector: [C64; 2],
}

/// Finite sum of sine-mode terms for constant coupling and zero potentials.
/// The source is computed exactly as `i∂t y + A ∂xx y`; terms whose residual
/// vanishes to rounding (eigenmodes) contribute no source.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalField {
    length: f64,
    horizon: f64,
    terms: Vec<ModalTerm>,
    sources: Vec<[C64; 2]>,
}

impl ModalField {
    pub fn new(length: f64, horizon: f64, coupling: Mat2, terms: Vec<ModalTerm>) -> Self {
        let sources = terms
            .iter()
            .map(|t| {
                let k2 = (PI * t.mode as f64 / length).powi(2);
                let v = t.vector;
                let av = [coupling[0][0] * v[0] + coupling[0][1] * v[1], coupling[1][0] * v[0] + coupling[1][1] * v[1]];
                let r = [I * t.rate * v[0] - k2 * av[0], I * t.rate * v[1] - k2 * av[1]];
                let scale = (t.rate.norm() + k2 * mat_norm(&coupling)) * (v[0].norm() + v[1].norm());
                if r[0].norm() + r[1].norm() <= 1e-12 * scale {
                    [ZERO; 2]
                } else {
                    r
                }
            })
            .collect();
        Self { length, horizon, terms, sources }
    }

    /// Eigenmode `e^{−iμ(mπ/L)²t} sin(mπx/L) v` for the eigenpair `(μ, v)`.
    pub fn eigenmode(mode: usize, eigenvalue: f64, vector: [f64; 2], length: f64) -> ModalTerm {
        let k2 = (PI * mode as f64 / length).powi(2);
        ModalTerm { mode, rate: C64::new(0.0, -eigenvalue * k2), vector: [C64::new(vector[0], 0.0), C64::new(vector[1], 0.0)] }
    }

    pub fn terms(&self) -> &[ModalTerm] {
        &self.terms
    }

    fn sin_cos(&self, mode: usize, p: Abscissa) -> (f64, f64) {
        // reflect about the nearer endpoint so that both stay accurate near x = L
        let l = self.length;
        if p.x > 0.5 * l {
            let a = PI * mode as f64 * p.from_right / l;
            let sign = if mode % 2 == 0 { -1.0 } else { 1.0 };
            (sign * a.sin(), -sign * a.cos())
        } else {
            let a = PI * mode as f64 * p.from_left / l;
            (a.sin(), a.cos())
        }
    }
}

/// Fields used to probe the inequalities for constant coupling `a`: the slow
/// and fast eigenmodes on the first sine mode, their two-mode superposition,
/// and the non-solution `e^{−t} sin(πx/L) (1, 0)` carrying its exact source.
pub fn probe_family(length: f64, horizon: f64, a: Mat2) -> Result<Vec<(&'static str, ModalField)>> {
    let (lam, v) = crate::forward::diagonalize(a)?;
    let slow = ModalField::eigenmode(1, lam[0], [v[0][0], v[1][0]], length);
    let fast = ModalField::eigenmode(1, lam[1], [v[0][1], v[1][1]], length);
    let fast2 = ModalField::eigenmode(2, lam[1], [0.5 * v[0][1], 0.5 * v[1][1]], length);
    let manufactured = ModalTerm { mode: 1, rate: C64::new(-1.0, 0.0), vector: [C64::new(1.0, 0.0), ZERO] };
    Ok(vec![
        ("slow", ModalField::new(length, horizon, a, vec![slow])),
        ("fast", ModalField::new(length, horizon, a, vec![fast])),
        ("mix", ModalField::new(length, horizon, a, vec![slow, fast2])),
        ("manufactured", ModalField::new(length, horizon, a, vec![manufactured])),
    ])
}

fn mat_norm(m: &Mat2) -> f64 {
    m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)
}

impl SolutionField for ModalField {
    fn length(&self) -> f64 {
        self.length
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn jet(&self, p: Abscissa, t: f64) -> Jet {
        let mut j = Jet::default();
        for (term, src) in self.terms.iter().zip(&self.sources) {
            let k = PI * term.mode as f64 / self.length;
            let (s, c) = self.sin_cos(term.mode, p);
            let e = (term.rate * t).exp();
            for comp in 0..2 {
                let a = e * term.vector[comp];
                j.y[comp] += a * s;
                j.dy[comp] += a * (k * c);
                j.d2y[comp] -= a * (k * k * s);
                j.dt[comp] += term.rate * a * s;
                j.f[comp] += e * src[comp] * s;
            }
        }
        j
    }
}

/// A discrete solution with its source, sampled by bilinear interpolation of
/// nodal values and nodal difference quotients.
#[derive(Clone, Debug)]
pub struct GridSolution {
    grid: Grid1D,
    time: TimeGrid,
    fields: [[SpaceTimeField; 2]; 5],
}

impl GridSolution {
    pub fn new(sol: &Solution, sources: Option<&SourcePair>) -> Result<Self> {
        let grid = *sol.grid();
        let time = *sol.time();
        let y = [sol.y1.clone(), sol.y2.clone()];
        let dy = [grid::space_gradient(&sol.y1), grid::space_gradient(&sol.y2)];
        let d2y = [grid::space_laplacian(&sol.y1), grid::space_laplacian(&sol.y2)];
        let dt = [grid::time_derivative(&sol.y1), grid::time_derivative(&sol.y2)];
        let f = match sources {
            Some(s) => {
                grid::ensure_same_grids(&s.f1, &sol.y1)?;
                [s.f1.clone(), s.f2.clone()]
            }
            None => [SpaceTimeField::zeros(grid, time), SpaceTimeField::zeros(grid, time)],
        };
        Ok(Self { grid, time, fields: [y, dy, d2y, dt, f] })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    /// Nodal jet without interpolation.
    pub fn node_jet(&self, n: usize, j: usize) -> Jet {
        let g = |k: usize, c: usize| self.fields[k][c].at(n, j);
        Jet {
            y: [g(0, 0), g(0, 1)],
            dy: [g(1, 0), g(1, 1)],
            d2y: [g(2, 0), g(2, 1)],
            dt: [g(3, 0), g(3, 1)],
            f: [g(4, 0), g(4, 1)],
        }
    }
}

/// Cell index and the two linear weights. In the first and last cell the
/// weights come from the exact endpoint distances.
fn cell(x: f64, from_left: f64, from_right: f64, spacing: f64, cells: usize) -> (usize, f64, f64) {
    let j = ((x / spacing).floor().max(0.0) as usize).min(cells - 1);
    let wr = if j == 0 { from_left / spacing } else { (x - j as f64 * spacing) / spacing };
    let wl = if j + 1 == cells { from_right / spacing } else { ((j + 1) as f64 * spacing - x) / spacing };
    (j, wl.clamp(0.0, 1.0), wr.clamp(0.0, 1.0))
}

impl SolutionField for GridSolution {
    fn length(&self) -> f64 {
        self.grid.length()
    }

    fn horizon(&self) -> f64 {
        self.time.horizon()
    }

    fn jet(&self, p: Abscissa, t: f64) -> Jet {
        let (j, xl, xr) = cell(p.x, p.from_left, p.from_right, self.grid.h(), self.grid.nodes() - 1);
        let horizon = self.time.horizon();
        let (n, tl, tr) = cell(t, t, horizon - t, self.time.dt(), self.time.steps());
        let mut out = [[ZERO; 2]; 5];
        for (k, field) in self.fields.iter().enumerate() {
            for c in 0..2 {
                let f = &field[c];
                out[k][c] = tl * (xl * f.at(n, j) + xr * f.at(n, j + 1)) + tr * (xl * f.at(n + 1, j) + xr * f.at(n + 1, j + 1));
            }
        }
        Jet { y: out[0], dy: out[1], d2y: out[2], dt: out[3], f: out[4] }
    }

    fn breakpoints_x(&self) -> Vec<f64> {
        self.grid.coordinates()
    }

    fn breakpoints_t(&self) -> Vec<f64> {
        (0..self.time.nodes()).map(|n| self.time.t(n)).collect()
    }
}

/// The four conjugated operators at one point.
pub fn conjugated_at(jet: &Jet, w: &WeightBundle, b: &Mat2, s: f64) -> [C64; 4] {
    let [y1, y2] = jet.y;
    let [d1, d2] = jet.dy;
    let is_phit = I * (s * w.phi_t);
    let diag = s * w.lap_phi - 2.0 * s * s * w.grad_phi_sq;
    let drift = 2.0 * s * w.grad_phi;
    let m11 = drift * d1 + (is_phit * b[0][0] + diag) * y1 + is_phit * b[0][1] * y2;
    let m12 = -(is_phit * b[0][0] + diag) * y1 - is_phit * b[0][1] * y2
        + I * (b[0][0] * jet.dt[0] + b[0][1] * jet.dt[1])
        - drift * d1
        + jet.d2y[0];
    let m21 = drift * d2 + (is_phit * b[1][1] + diag) * y2 + is_phit * b[1][0] * y1;
    let m22 = -is_phit * b[1][0] * y1 - (is_phit * b[1][1] + diag) * y2
        + I * (b[1][0] * jet.dt[0] + b[1][1] * jet.dt[1])
        - drift * d2
        + jet.d2y[1];
    [m11, m12, m21, m22]
}

/// Unconjugated operators applied to `(u, v) = e^{−sφ}(y1, y2)`, given the
/// jet of `(u, v)` itself.
pub fn plain_at(uv: &Jet, w: &WeightBundle, b: &Mat2, s: f64) -> [C64; 4] {
    let [u, v] = uv.y;
    let is_phit = I * (s * w.phi_t);
    let sq = s * s * w.grad_phi_sq;
    let m11 = 2.0 * s * w.grad_phi * uv.dy[0] + s * w.lap_phi * u + is_phit * (b[0][0] * u + b[0][1] * v);
    let m12 = I * (b[0][0] * uv.dt[0] + b[0][1] * uv.dt[1]) + uv.d2y[0] + sq * u;
    let m21 = 2.0 * s * w.grad_phi * uv.dy[1] + s * w.lap_phi * v + is_phit * (b[1][1] * v + b[1][0] * u);
    let m22 = I * (b[1][0] * uv.dt[0] + b[1][1] * uv.dt[1]) + uv.d2y[1] + sq * v;
    [m11, m12, m21, m22]
}

/// Nodal values of the conjugated operators for a discrete solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugatedOperators {
    pub m11: SpaceTimeField,
    pub m12: SpaceTimeField,
    pub m21: SpaceTimeField,
    pub m22: SpaceTimeField,
}

pub fn assemble_operators(y: &GridSolution, ws: &WeightSystem, tm: &TransformedMatrix) -> Result<ConjugatedOperators> {
    if ws.weight.grid() != y.grid() || (ws.horizon - y.time().horizon()).abs() > 0.0 {
        return Err(Error::GridMismatch("weight system and solution grids differ".into()));
    }
    let g = *y.grid();
    let time = *y.time();
    let mut out = [0; 4].map(|_| SpaceTimeField::zeros(g, time));
    for n in 0..time.nodes() {
        let t = time.t(n);
        for j in 0..g.nodes() {
            let w = ws.eval(g.x(j), t);
            let m = conjugated_at(&y.node_jet(n, j), &w, &tm.at(j), ws.s);
            for k in 0..4 {
                out[k].slice_mut(n)[j] = m[k];
            }
        }
    }
    let [m11, m12, m21, m22] = out;
    Ok(ConjugatedOperators { m11, m12, m21, m22 })
}

/// `(‖M̃11+M̃12−F1‖, ‖M̃21+M̃22−F2‖)` in discrete `L²(Q_T)` over interior
/// spatial nodes (the boundary-node Laplacian is diagnostic only).
pub fn operator_sum_residual(ops: &ConjugatedOperators, transformed_sources: &SourcePair) -> Result<(f64, f64)> {
    grid::ensure_same_grids(&ops.m11, &transformed_sources.f1)?;
    let g = *ops.m11.grid();
    let time = *ops.m11.time();
    let wt = time.trapezoid_weights();
    let h = g.h();
    let mut r = [0.0; 2];
    for (n, w) in wt.iter().enumerate() {
        for j in 1..=g.interior() {
            let e1 = ops.m11.at(n, j) + ops.m12.at(n, j) - transformed_sources.f1.at(n, j);
            let e2 = ops.m21.at(n, j) + ops.m22.at(n, j) - transformed_sources.f2.at(n, j);
            r[0] += w * h * e1.norm_sqr();
            r[1] += w * h * e2.norm_sqr();
        }
    }
    Ok((r[0].sqrt(), r[1].sqrt()))
}

/// Tensor quadrature on `[0, L] × [0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub xs: Vec<(Abscissa, f64)>,
    pub ts: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureKind {
    /// Trapezoid rule on the given grid nodes.
    Trapezoid,
    /// Graded Gauss–Legendre resolving the weight layers.
    Resolved,
}

impl QuadratureKind {
    pub fn name(self) -> &'static str {
        match self {
            QuadratureKind::Trapezoid => "trapezoid",
            QuadratureKind::Resolved => "resolved",
        }
    }
}

impl std::str::FromStr for QuadratureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoid" => Ok(QuadratureKind::Trapezoid),
            "resolved" => Ok(QuadratureKind::Resolved),
            other => Err(Error::InvalidArgument(format!("unknown quadrature `{other}`"))),
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(order);
    for i in 0..order {
        let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            dp = order as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

// 16 points keep the per-cell error below 1e-12 on a doubling cell where the
// exponential layer drops by up to e^{-16}.
const GAUSS_ORDER: usize = 16;
const GRADING_LEVELS: i32 = 60;

/// Composite Gauss rule over `[lo, hi]` with cells split at `breaks` and
/// refined geometrically toward `focus`. Refinement stops once `resolved(d)`
/// holds for the offset `d`, i.e. the integrand is smooth on that scale.
/// Nodes are returned as offsets from `focus` together with their weights, so
/// that nodes deep inside the graded cells keep their full relative precision.
fn graded_rule(lo: f64, hi: f64, breaks: &[f64], focus: f64, base_cells: usize, resolved: impl Fn(f64) -> bool) -> Vec<(f64, f64)> {
    let span = hi - lo;
    let mut pts: Vec<f64> = vec![lo - focus, hi - focus];
    pts.extend((1..base_cells).map(|k| lo + span * k as f64 / base_cells as f64 - focus));
    pts.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi).map(|b| b - focus));
    if focus >= lo && focus <= hi {
        pts.push(0.0);
        for k in 1..=GRADING_LEVELS {
            let d = span * 2f64.powi(-k);
            let mut refined = false;
            for p in [-d, d] {
                if focus + p > lo && focus + p < hi && !resolved(p) {
                    pts.push(p);
                    refined = true;
                }
            }
            if !refined && k > 4 {
                break;
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let gl = gauss_legendre(GAUSS_ORDER);
    let mut out = Vec::with_capacity(pts.len() * GAUSS_ORDER);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for &(z, wz) in &gl {
            out.push((mid + half * z, half * wz));
        }
    }
    out
}

impl QuadratureRule {
    pub fn trapezoid(grid: &Grid1D, time: &TimeGrid) -> Self {
        let wx = grid.trapezoid_weights();
        let wt = time.trapezoid_weights();
        Self {
            xs: (0..grid.nodes()).map(|j| (Abscissa::new(grid.x(j), grid.length()), wx[j])).collect(),
            ts: (0..time.nodes()).map(|n| (time.t(n), wt[n])).collect(),
        }
    }

    /// Rule refined toward the weight peak, with breakpoints at the field's
    /// kinks and at the observation interval edges.
    pub fn resolved(field: &dyn SolutionField, ws: &WeightSystem) -> Self {
        let (xp, tp) = ws.peak();
        let mut xb = field.breakpoints_x();
        if let Observation::Internal { lo, hi } = ws.weight.observation() {
            xb.extend([lo, hi]);
        }
        let l = field.length();
        // the weight varies by less than 1e-10 across the remaining cells
        let flat = |rel: f64| rel > -1e-10;
        let xs = graded_rule(0.0, l, &xb, xp, 16, |d| flat(ws.relative_log_weight_offset(xp + d, d, tp)))
            .into_iter()
            .map(|(d, w)| {
                let x = xp + d;
                let p = if xp == 0.0 {
                    Abscissa { x, from_left: d, from_right: l - x }
                } else if xp == l {
                    Abscissa { x, from_left: x, from_right: -d }
                } else {
                    Abscissa::new(x, l)
                };
                (p, w)
            })
            .collect();
        let ts = graded_rule(0.0, field.horizon(), &field.breakpoints_t(), tp, 16, |d| flat(ws.relative_log_weight_offset(xp, 0.0, tp + d)))
            .into_iter()
            .map(|(d, w)| (tp + d, w))
            .collect();
        Self { xs, ts }
    }

    pub fn build(kind: QuadratureKind, field: &dyn SolutionField, ws: &WeightSystem, grid: &Grid1D, time: &TimeGrid) -> Self {
        match kind {
            QuadratureKind::Trapezoid => Self::trapezoid(grid, time),
            QuadratureKind::Resolved => Self::resolved(field, ws),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CarlemanVariant {
    Internal,
    Boundary,
}

impl CarlemanVariant {
    pub fn name(self) -> &'static str {
        match self {
            CarlemanVariant::Internal => "internal",
            CarlemanVariant::Boundary => "boundary",
        }
    }

    pub fn term_names(self) -> &'static [&'static str] {
        match self {
            CarlemanVariant::Internal => &[
                "operator",
                "zeroth",
                "gradient",
                "trace_weighted",
                "trace_plain",
                "source",
                "omega_zeroth",
                "omega_gradient",
            ],
            CarlemanVariant::Boundary => &["operator", "zeroth", "gradient", "source", "gamma_trace_weighted", "gamma_trace_plain"],
        }
    }
}

/// Every term of one Carleman inequality at fixed `(s, λ)`, each multiplied
/// by `e^{−log_scale}` where `log_scale = −2sφ_peak`.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlemanReport {
    pub variant: CarlemanVariant,
    pub s: f64,
    pub lambda: f64,
    pub log_scale: f64,
    pub terms: Vec<(&'static str, f64)>,
}

impl CarlemanReport {
    pub fn term(&self, name: &str) -> f64 {
        self.terms.iter().find(|(n, _)| *n == name).map(|(_, v)| *v).unwrap_or_else(|| panic!("no term `{name}`"))
    }

    /// Natural logarithm of the unscaled term.
    pub fn log_term(&self, name: &str) -> f64 {
        self.term(name).ln() + self.log_scale
    }

    fn sum(&self, names: &[&str]) -> f64 {
        names.iter().map(|n| self.term(n)).sum()
    }

    pub fn lhs(&self) -> f64 {
        match self.variant {
            CarlemanVariant::Internal => self.sum(&["operator", "zeroth", "gradient", "trace_weighted"]),
            CarlemanVariant::Boundary => self.sum(&["operator", "zeroth", "gradient"]),
        }
    }

    /// Left side with the trace term lacking the normal-slope factor.
    pub fn lhs_plain(&self) -> f64 {
        match self.variant {
            CarlemanVariant::Internal => self.sum(&["operator", "zeroth", "gradient", "trace_plain"]),
            CarlemanVariant::Boundary => self.lhs(),
        }
    }

    pub fn rhs(&self) -> f64 {
        match self.variant {
            CarlemanVariant::Internal => self.sum(&["source", "omega_zeroth", "omega_gradient"]),
            CarlemanVariant::Boundary => self.sum(&["source", "gamma_trace_weighted"]),
        }
    }

    pub fn rhs_plain(&self) -> f64 {
        match self.variant {
            CarlemanVariant::Internal => self.rhs(),
            CarlemanVariant::Boundary => self.sum(&["source", "gamma_trace_plain"]),
        }
    }

    pub fn ratio(&self) -> f64 {
        self.lhs() / self.rhs()
    }

    pub fn ratio_plain(&self) -> f64 {
        self.lhs_plain() / self.rhs_plain()
    }
}

/// Log-weights this far below the peak contribute exactly nothing in `f64`.
const NEGLIGIBLE_LOG_WEIGHT: f64 = -745.0;

/// Evaluates every term of the chosen inequality for `field`. The coupling
/// inverse `b(x)` comes from `tm`; the observation geometry from the weight.
pub fn evaluate(
    field: &dyn SolutionField,
    ws: &WeightSystem,
    tm: &TransformedMatrix,
    rule: &QuadratureRule,
) -> Result<CarlemanReport> {
    let variant = match ws.weight.observation() {
        Observation::Internal { .. } => CarlemanVariant::Internal,
        Observation::Boundary(_) => CarlemanVariant::Boundary,
    };
    if (field.length() - ws.weight.grid().length()).abs() > 1e-12 * field.length()
        || (field.horizon() - ws.horizon).abs() > 1e-12 * ws.horizon
    {
        return Err(Error::GridMismatch("field domain differs from the weight domain".into()));
    }
    let (s, lam) = (ws.s, ws.lambda);
    let omega = match ws.weight.observation() {
        Observation::Internal { lo, hi } => Some((lo, hi)),
        Observation::Boundary(_) => None,
    };
    let l = field.length();
    let xp = ws.peak().0;
    // offset from the spatial peak, exact whenever the peak is an endpoint
    let offset = |p: &Abscissa| {
        if xp == 0.0 {
            p.from_left
        } else if xp == l {
            -p.from_right
        } else {
            p.x - xp
        }
    };
    let xb: Vec<(Abscissa, f64, f64, Mat2)> = rule.xs.iter().map(|(p, w)| (*p, offset(p), *w, tm.at_x(p.x))).collect();

    // [operator, zeroth, gradient, source, omega_zeroth, omega_gradient, trace_weighted, trace_plain, gamma_weighted, gamma_plain]
    let partials: Vec<[f64; 10]> = rule
        .ts
        .par_iter()
        .map(|&(t, wt)| {
            let mut acc = [0.0; 10];
            // φ(·, t) is smallest at the spatial peak, so a negligible
            // weight there makes the whole row negligible
            if wt == 0.0 || ws.relative_log_weight_offset(xp, 0.0, t) < NEGLIGIBLE_LOG_WEIGHT {
                return acc;
            }
            for &(p, dx, wx, b) in &xb {
                let x = p.x;
                let rel = ws.relative_log_weight_offset(x, dx, t);
                if rel < NEGLIGIBLE_LOG_WEIGHT {
                    continue;
                }
                let scale = rel.exp() * wx * wt;
                let wb = ws.eval(x, t);
                let jet = field.jet(p, t);
                let m = conjugated_at(&jet, &wb, &b, s);
                let op: f64 = m.iter().map(|v| v.norm_sqr()).sum();
                let y2 = jet.y[0].norm_sqr() + jet.y[1].norm_sqr();
                let dy2 = jet.dy[0].norm_sqr() + jet.dy[1].norm_sqr();
                let zeroth = s.powi(3) * lam.powi(4) * wb.theta.powi(3) * y2;
                let gradient = s * lam * lam * wb.theta * dy2;
                acc[0] += scale * op;
                acc[1] += scale * zeroth;
                acc[2] += scale * gradient;
                acc[3] += scale * (jet.f[0].norm_sqr() + jet.f[1].norm_sqr());
                if let Some((lo, hi)) = omega {
                    if x > lo && x < hi {
                        acc[4] += scale * zeroth;
                        acc[5] += scale * gradient;
                    }
                }
            }
            for side in [grid::Side::Left, grid::Side::Right] {
                let x = side.coordinate(ws.weight.grid());
                let p = match side {
                    grid::Side::Left => Abscissa { x: 0.0, from_left: 0.0, from_right: l },
                    grid::Side::Right => Abscissa { x: l, from_left: l, from_right: 0.0 },
                };
                let rel = ws.relative_log_weight_offset(x, offset(&p), t);
                if rel < NEGLIGIBLE_LOG_WEIGHT {
                    continue;
                }
                let wb = ws.eval(x, t);
                let jet = field.jet(p, t);
                let nu = side.normal();
                let dn2 = (nu * jet.dy[0]).norm_sqr() + (nu * jet.dy[1]).norm_sqr();
                let dpsi_n = nu * ws.weight.derivative(x);
                let plain = rel.exp() * wt * s * lam * wb.theta * dn2;
                let weighted = plain * dpsi_n.abs();
                acc[6] += weighted;
                acc[7] += plain;
                if let Observation::Boundary(plus) = ws.weight.observation() {
                    if plus == side {
                        acc[8] += weighted;
                        acc[9] += plain;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = [0.0; 10];
    for p in &partials {
        for k in 0..10 {
            total[k] += p[k];
        }
    }
    let names = variant.term_names();
    let values: Vec<f64> = match variant {
        CarlemanVariant::Internal => vec![total[0], total[1], total[2], total[6], total[7], total[3], total[4], total[5]],
        CarlemanVariant::Boundary => vec![total[0], total[1], total[2], total[3], total[8], total[9]],
    };
    Ok(CarlemanReport {
        variant,
        s,
        lambda: lam,
        log_scale: ws.peak_log_weight(),
        terms: names.iter().copied().zip(values).collect(),
    })
}

/// One report per `(s, λ)` in λ-major order.
pub fn sweep(
    field: &dyn SolutionField,
    base: &WeightSystem,
    tm: &TransformedMatrix,
    s_values: &[f64],
    lambdas: &[f64],
    kind: QuadratureKind,
    grid: &Grid1D,
    time: &TimeGrid,
) -> Result<Vec<CarlemanReport>> {
    if s_values.is_empty() || lambdas.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one s and one lambda".into()));
    }
    let pairs: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| s_values.iter().map(move |&s| (s, l))).collect();
    pairs
        .par_iter()
        .map(|&(s, l)| {
            let ws = base.with_params(s, l)?;
            let rule = QuadratureRule::build(kind, field, &ws, grid, time);
            evaluate(field, &ws, tm, &rule)
        })
        .collect()
}

/// Largest ratio over a family, per `(s, λ)`, from reports of equal layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    /// `(λ, s, max ratio, max ratio without the normal-slope factor)`.
    pub rows: Vec<(f64, f64, f64, f64)>,
}

impl SweepSummary {
    pub fn from_family(family: &[Vec<CarlemanReport>]) -> Self {
        let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
        for reports in family {
            for r in reports {
                match rows.iter_mut().find(|row| row.0 == r.lambda && row.1 == r.s) {
                    Some(row) => {
                        row.2 = row.2.max(r.ratio());
                        row.3 = row.3.max(r.ratio_plain());
                    }
                    None => rows.push((r.lambda, r.s, r.ratio(), r.ratio_plain())),
                }
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Self { rows }
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(|r| r.2.is_finite() && r.3.is_finite())
    }

    /// Whether for every λ the max ratio does not increase in `s` once
    /// `s ≥ s_min`. Both trace forms are checked.
    pub fn non_increasing_from(&self, s_min: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let (a, b) = (w[0], w[1]);
            a.0 != b.0 || a.1 < s_min || (b.2 <= a.2 && b.3 <= a.3)
        })
    }
}
