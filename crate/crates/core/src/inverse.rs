//! Recovery of the potential `a(x)` in the first equation: the difference
//! system between two potentials, its even-conjugate extension and
//! time-reversed derivative, empirical stability ratios for internal and
//! boundary observations, and a Gauss–Newton reconstruction.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::forward::{
    self, midpoint_residual, observe_boundary, observe_nodes, BoundaryData, ForwardProblem, ObservationBoundary,
    ObservationInternal, Solution, SolverSettings, Stepper,
};
use crate::grid::{self, Grid1D, Side, SpaceTimeField, TimeGrid};
use crate::model::{datum_kind, CouplingMatrix, DatumKind, PotentialSet, SourcePair};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Coupling `[[2,1],[1,2]]`, potentials `b = 0.3`, `c = 0.2 sin(πx)`,
/// `d = 0.5` and the given `a`, data `y10 = 1 + ½ sin(πx)`,
/// `y20 = ½ sin(πx)`, and boundary values `y1 = e^{i a(0) t}`, `y2 = 0` at
/// both ends.
pub fn reference_problem(grid: Grid1D, time: TimeGrid, a: impl Fn(f64) -> f64) -> Result<ForwardProblem> {
    let coupling = CouplingMatrix::constant(grid, [[2.0, 1.0], [1.0, 2.0]]);
    let potentials = PotentialSet::new(
        grid,
        |x| [a(x), 0.3, 0.2 * (PI * x).sin(), 0.5],
        |x| C64::new(1.0 + 0.5 * (PI * x).sin(), 0.0),
        |x| C64::new(0.5 * (PI * x).sin(), 0.0),
    );
    let a0 = a(0.0);
    let boundary = BoundaryData::from_fn(&time, |_, t| [(I * a0 * t).exp(), ZERO]);
    ForwardProblem::new(coupling, potentials, time)?.with_boundary(boundary)
}

/// `z = y(a) − ỹ(ã)` together with `f = ã − a` and `R = ỹ₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceSystem {
    pub z1: SpaceTimeField,
    pub z2: SpaceTimeField,
    pub f: Vec<f64>,
    pub r: SpaceTimeField,
}

impl DifferenceSystem {
    pub fn new(base: &Solution, perturbed: &Solution, a: &[f64], a_tilde: &[f64]) -> Result<Self> {
        let z = base.difference(perturbed)?;
        if a.len() != base.grid().nodes() || a_tilde.len() != a.len() {
            return Err(Error::GridMismatch("potential length differs from node count".into()));
        }
        Ok(Self { z1: z.y1, z2: z.y2, f: a_tilde.iter().zip(a).map(|(t, b)| t - b).collect(), r: perturbed.y1.clone() })
    }

    pub fn grid(&self) -> &Grid1D {
        self.z1.grid()
    }

    pub fn time(&self) -> &TimeGrid {
        self.z1.time()
    }

    /// `f·R` as a space-time field.
    pub fn forcing(&self) -> SpaceTimeField {
        let m = self.grid().nodes();
        let mut out = self.r.clone();
        for n in 0..self.time().nodes() {
            for j in 0..m {
                out.slice_mut(n)[j] *= self.f[j];
            }
        }
        out
    }

    /// Largest midpoint-scheme residual of the difference equations, using
    /// the coefficients of `base` (whose potential must be the unperturbed `a`).
    pub fn residual(&self, base: &ForwardProblem) -> Result<f64> {
        let sources = SourcePair::new(self.forcing(), SpaceTimeField::zeros(*self.grid(), *self.time()))?;
        let p = ForwardProblem {
            coupling: base.coupling.clone(),
            potentials: base.potentials.clone(),
            time: *self.time(),
            sources: Some(sources),
            boundary: BoundaryData::homogeneous(self.time()),
            settings: SolverSettings::default(),
        };
        Ok(midpoint_residual(&p, &Solution { y1: self.z1.clone(), y2: self.z2.clone() }))
    }
}

/// Difference system on `(0, 2T)` after extension to negative times; the
/// original `t = 0` sits at node `n_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedSystem {
    pub z1: SpaceTimeField,
    pub z2: SpaceTimeField,
    pub r: SpaceTimeField,
    pub f: Vec<f64>,
    pub kind: DatumKind,
}

impl ExtendedSystem {
    /// Node of the original `t = 0`.
    pub fn junction(&self) -> usize {
        self.z1.time().steps() / 2
    }
}

fn reflect(f: &SpaceTimeField, sign: f64) -> Result<SpaceTimeField> {
    let nt = f.time().steps();
    let time = TimeGrid::new(2.0 * f.time().horizon(), 2 * nt)?;
    let slices = (0..=2 * nt)
        .map(|m| if m >= nt { f.slice(m - nt).to_vec() } else { f.slice(nt - m).iter().map(|v| v.conj() * sign).collect() })
        .collect();
    SpaceTimeField::from_slices(*f.grid(), time, slices)
}

/// Extends `z` and `R` to `(−T, T)` and shifts to `(0, 2T)`. For a real datum
/// both are extended by `conj(·(−t))`; for an imaginary one both by
/// `−conj(·(−t))`, which keeps `R` continuous and the pair a solution.
pub fn even_conjugate_extend(
    z1: &SpaceTimeField,
    z2: &SpaceTimeField,
    r: &SpaceTimeField,
    f: &[f64],
    kind: DatumKind,
) -> Result<ExtendedSystem> {
    grid::ensure_same_grids(z1, z2)?;
    grid::ensure_same_grids(z1, r)?;
    let found = datum_kind(r.slice(0));
    if found != Some(kind) {
        return Err(Error::DatumMismatch(format!("R(x,0) is {found:?}, expected {kind:?}")));
    }
    let sign = match kind {
        DatumKind::Real => 1.0,
        DatumKind::Imaginary => -1.0,
    };
    Ok(ExtendedSystem { z1: reflect(z1, sign)?, z2: reflect(z2, sign)?, r: reflect(r, sign)?, f: f.to_vec(), kind })
}

pub fn extend_difference(d: &DifferenceSystem, kind: DatumKind) -> Result<ExtendedSystem> {
    even_conjugate_extend(&d.z1, &d.z2, &d.r, &d.f, kind)
}

/// `u_k(x, t) = ∂t z_k(x, 2T − t)` on the extended time grid.
pub fn time_reversed_derivative(ext: &ExtendedSystem) -> [SpaceTimeField; 2] {
    [&ext.z1, &ext.z2].map(|z| {
        let d = grid::time_derivative(z);
        let nt = d.time().steps();
        let slices = (0..=nt).map(|m| d.slice(nt - m).to_vec()).collect();
        SpaceTimeField::from_slices(*d.grid(), *d.time(), slices).expect("same shape")
    })
}

/// Relative mismatch of `u(·, T)` against `(−i f R(·, T), 0)`, in the
/// discrete L² norm over interior nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminalCheck {
    pub u1: f64,
    pub u2: f64,
}

pub fn terminal_check(u: &[SpaceTimeField; 2], ext: &ExtendedSystem) -> TerminalCheck {
    let n = ext.junction();
    let g = ext.z1.grid();
    let inner = 1..g.nodes() - 1;
    let target: Vec<C64> = inner.clone().map(|j| -I * ext.f[j] * ext.r.at(n, j)).collect();
    let norm = |v: &mut dyn Iterator<Item = C64>| v.map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let scale = norm(&mut target.iter().copied());
    let e1 = norm(&mut inner.clone().zip(&target).map(|(j, t)| u[0].at(n, j) - t));
    let e2 = norm(&mut inner.map(|j| u[1].at(n, j)));
    TerminalCheck { u1: e1 / scale, u2: e2 / scale }
}

/// `Σ_{j∈nodes} h (|v_j|² + |v'_j|²)` with centered gradients.
fn h1_sq(values: &[C64], h: f64, nodes: &Range<usize>) -> f64 {
    let d = grid::gradient_values(values, h);
    nodes.clone().map(|j| h * (values[j].norm_sqr() + d[j].norm_sqr())).sum()
}

/// Same stencil as [`grid::time_derivative`] for a single series.
fn series_derivative(v: &[C64], dt: f64) -> Vec<C64> {
    let nt = v.len() - 1;
    (0..=nt)
        .map(|n| {
            let d = if n == 0 {
                -3.0 * v[0] + 4.0 * v[1] - v[2]
            } else if n == nt {
                3.0 * v[nt] - 4.0 * v[nt - 1] + v[nt - 2]
            } else {
                v[n + 1] - v[n - 1]
            };
            d * (0.5 / dt)
        })
        .collect()
}

/// Squared internal observation norms of a difference pair, both components
/// summed: the full `H¹(0,T; H¹(ω))` norm and its `∂t z` part alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InternalNorms {
    pub h1_h1: f64,
    pub dt_l2_h1: f64,
}

pub fn internal_norms(z1: &SpaceTimeField, z2: &SpaceTimeField, nodes: &Range<usize>) -> InternalNorms {
    let h = z1.grid().h();
    let wt = z1.time().trapezoid_weights();
    let (mut value, mut deriv) = (0.0, 0.0);
    for z in [z1, z2] {
        let dz = grid::time_derivative(z);
        for (n, w) in wt.iter().enumerate() {
            value += w * h1_sq(z.slice(n), h, nodes);
            deriv += w * h1_sq(dz.slice(n), h, nodes);
        }
    }
    InternalNorms { h1_h1: value + deriv, dt_l2_h1: deriv }
}

/// Squared `H¹(0,T)` norm of the normal-derivative traces of both components
/// at `side`.
pub fn boundary_norm(z1: &SpaceTimeField, z2: &SpaceTimeField, side: Side) -> f64 {
    let obs = observe_boundary(&Solution { y1: z1.clone(), y2: z2.clone() }, side);
    let time = obs.time;
    let wt = time.trapezoid_weights();
    obs.traces
        .iter()
        .map(|tr| {
            let d = series_derivative(tr, time.dt());
            wt.iter().enumerate().map(|(n, w)| w * (tr[n].norm_sqr() + d[n].norm_sqr())).sum::<f64>()
        })
        .sum()
}

/// Trapezoid `‖v‖²_{L²(Ω)}` of a nodal real field.
pub fn l2_sq(grid: &Grid1D, v: &[f64]) -> f64 {
    grid.trapezoid_weights().iter().zip(v).map(|(w, x)| w * x * x).sum()
}

/// Additive change `ã − a` of the potential, given at nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub label: String,
    pub delta: Vec<f64>,
}

impl Perturbation {
    pub fn from_fn(label: impl Into<String>, grid: &Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self { label: label.into(), delta: grid.coordinates().into_iter().map(f).collect() }
    }
}

/// `δ sin(πx)` and `δ (1 + cos 2πx)/2` for `δ ∈ {0.01, 0.02, 0.04}`.
pub fn default_family(grid: &Grid1D) -> Vec<Perturbation> {
    let mut out = Vec::new();
    for (name, shape) in [("sin", (|x: f64| (PI * x).sin()) as fn(f64) -> f64), ("bump", |x: f64| 0.5 * (1.0 + (2.0 * PI * x).cos()))] {
        for delta in [0.01, 0.02, 0.04] {
            out.push(Perturbation::from_fn(format!("{name}-{delta}"), grid, move |x| delta * shape(x)));
        }
    }
    out
}

/// One member of a stability experiment. Norms are squared; `ratio` is
/// `‖ã − a‖² / observation` and is absent when the observation vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRecord {
    pub label: String,
    pub parameter_error: f64,
    pub observation: f64,
    /// `‖∂t z‖²_{L²(0,T;H¹(ω))}` for internal observations.
    pub time_derivative: Option<f64>,
    pub ratio: Option<f64>,
}

impl StabilityRecord {
    pub fn is_degenerate(&self) -> bool {
        self.ratio.is_none()
    }
}

/// Largest over smallest ratio among non-degenerate records.
pub fn ratio_spread(records: &[StabilityRecord]) -> Option<f64> {
    let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    if ratios.is_empty() {
        return None;
    }
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Some(max / min)
}

fn run_family(
    base: &ForwardProblem,
    family: &[Perturbation],
    observe: impl Fn(&DifferenceSystem) -> (f64, Option<f64>) + Sync,
) -> Result<Vec<StabilityRecord>> {
    let y = forward::solve(base)?;
    let a = &base.potentials.a;
    let grid = *base.grid();
    family
        .par_iter()
        .map(|p| {
            let wrap = |e: Error| Error::Perturbation { label: p.label.clone(), source: Box::new(e) };
            if p.delta.len() != a.len() {
                return Err(wrap(Error::GridMismatch("perturbation length differs from node count".into())));
            }
            let a_tilde: Vec<f64> = a.iter().zip(&p.delta).map(|(x, d)| x + d).collect();
            let problem = base.clone().with_potentials(base.potentials.clone().with_potential_a(a_tilde.clone()));
            let yt = forward::solve(&problem).map_err(wrap)?;
            let diff = DifferenceSystem::new(&y, &yt, a, &a_tilde).map_err(wrap)?;
            let (observation, time_derivative) = observe(&diff);
            let parameter_error = l2_sq(&grid, &diff.f);
            let ratio = (observation > 0.0).then(|| parameter_error / observation);
            Ok(StabilityRecord { label: p.label.clone(), parameter_error, observation, time_derivative, ratio })
        })
        .collect()
}

/// Stability ratios for observations on `ω = (lo, hi)`.
pub fn ip1_stability(base: &ForwardProblem, lo: f64, hi: f64, family: &[Perturbation]) -> Result<Vec<StabilityRecord>> {
    let g = base.grid();
    if !(lo > 0.0 && hi < g.length() && lo < hi) {
        return Err(Error::InvalidArgument(format!("observation interval ({lo}, {hi}) must lie inside the domain")));
    }
    let nodes = g.nodes_inside(lo, hi);
    run_family(base, family, |d| {
        let n = internal_norms(&d.z1, &d.z2, &nodes);
        (n.h1_h1, Some(n.dt_l2_h1))
    })
}

/// Stability ratios for normal-derivative observations at `side`.
pub fn ip2_stability(base: &ForwardProblem, side: Side, family: &[Perturbation]) -> Result<Vec<StabilityRecord>> {
    run_family(base, family, |d| (boundary_norm(&d.z1, &d.z2, side), None))
}

/// Observation data with the geometry needed to re-observe a solution.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservationData {
    Internal(ObservationInternal),
    Boundary(ObservationBoundary),
}

impl ObservationData {
    pub fn internal(y: &Solution, lo: f64, hi: f64) -> Result<Self> {
        forward::observe_internal(y, lo, hi).map(Self::Internal)
    }

    pub fn boundary(y: &Solution, side: Side) -> Self {
        Self::Boundary(observe_boundary(y, side))
    }

    /// Observes `y` with the same geometry.
    pub fn observe(&self, y: &Solution) -> Self {
        match self {
            Self::Internal(o) => Self::Internal(observe_nodes(y, o.nodes.clone())),
            Self::Boundary(o) => Self::Boundary(observe_boundary(y, o.side)),
        }
    }

    pub fn time(&self) -> &TimeGrid {
        match self {
            Self::Internal(o) => &o.time,
            Self::Boundary(o) => &o.time,
        }
    }

    pub fn samples(&self) -> Vec<C64> {
        match self {
            Self::Internal(o) => o.samples(),
            Self::Boundary(o) => o.samples(),
        }
    }

    /// Quadrature weight of each sample in [`samples`](Self::samples) order.
    pub fn weights(&self, h: f64) -> Vec<f64> {
        let wt = self.time().trapezoid_weights();
        match self {
            Self::Internal(o) => {
                let per_slice = o.nodes.len();
                let one: Vec<f64> = wt.iter().flat_map(|w| std::iter::repeat_n(w * h, per_slice)).collect();
                one.iter().copied().cycle().take(4 * one.len()).collect()
            }
            Self::Boundary(_) => wt.iter().copied().cycle().take(2 * wt.len()).collect(),
        }
    }

    fn map_samples(&self, mut f: impl FnMut(C64) -> C64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Internal(o) => {
                for v in o.values.iter_mut().chain(o.gradients.iter_mut()).flatten().flatten() {
                    *v = f(*v);
                }
            }
            Self::Boundary(o) => {
                for v in o.traces.iter_mut().flatten() {
                    *v = f(*v);
                }
            }
        }
        out
    }

    /// Adds complex Gaussian noise with standard deviation `level` times the
    /// RMS of the samples.
    pub fn with_noise(&self, level: f64, seed: u64) -> Self {
        let s = self.samples();
        let rms = (s.iter().map(|v| v.norm_sqr()).sum::<f64>() / s.len() as f64).sqrt();
        let amp = level * rms / 2f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.map_samples(|v| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            v + C64::new(re, im) * amp
        })
    }
}

fn with_a(base: &ForwardProblem, a: &[f64]) -> ForwardProblem {
    base.clone().with_potentials(base.potentials.clone().with_potential_a(a.to_vec()))
}

/// Observation of the solution with potential `a` (all nodes).
pub fn forward_map(base: &ForwardProblem, geometry: &ObservationData, a: &[f64]) -> Result<Vec<C64>> {
    Ok(geometry.observe(&forward::solve(&with_a(base, a))?).samples())
}

/// Derivative of the discrete forward map with respect to the interior
/// nodal values of `a`, one column per interior node. Each column solves the
/// linearized scheme with midpoint source `−½ e_j (y1ⁿ + y1ⁿ⁺¹)`.
pub fn jacobian(base: &ForwardProblem, geometry: &ObservationData, a: &[f64]) -> Result<Vec<Vec<C64>>> {
    let problem = with_a(base, a);
    let y = forward::solve(&problem)?;
    sensitivity_columns(&problem, &y, geometry)
}

fn sensitivity_columns(problem: &ForwardProblem, y: &Solution, geometry: &ObservationData) -> Result<Vec<Vec<C64>>> {
    let g = *problem.grid();
    let time = problem.time;
    let nx = g.interior();
    let stepper = Stepper::new(&problem.coupling, &problem.potentials, &time)?;
    let home = BoundaryData::homogeneous(&time);
    let zero = vec![ZERO; g.nodes()];
    (1..=nx)
        .into_par_iter()
        .map(|j| {
            let sol = stepper.march(&time, [zero.clone(), zero.clone()], &home, None, |n| {
                let mut src = vec![ZERO; 2 * nx];
                src[2 * (j - 1)] = -0.5 * (y.y1.at(n, j) + y.y1.at(n + 1, j));
                src
            })?;
            Ok(geometry.observe(&sol).samples())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussNewtonSettings {
    /// Tikhonov weight on `‖a − a⁰‖²_{L²}`.
    pub alpha: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the gradient norm relative to its initial value.
    pub gradient_tol: f64,
    /// Relative step size below which the iteration has stalled at a minimum.
    pub step_tol: f64,
}

impl Default for GaussNewtonSettings {
    fn default() -> Self {
        Self { alpha: 0.0, max_iterations: 50, gradient_tol: 1e-9, step_tol: 1e-10 }
    }
}

/// State at the start of an iteration; `step_norm` is the `L²` size of the
/// step that led there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub misfit: f64,
    pub gradient_norm: f64,
    pub step_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub estimate: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
}

const STALL_LIMIT: usize = 3;
const BACKTRACK_LIMIT: usize = 30;

/// Minimizes `½‖S(a) − d‖² + (α/2)‖a − a⁰‖²` over the interior nodal values
/// of `a`, where `S` re-observes with the geometry of `data` and the norms
/// are the quadrature-weighted discrete `L²` norms. Boundary values of `a`
/// do not enter the scheme and stay at `init`.
pub fn reconstruct(
    base: &ForwardProblem,
    data: &ObservationData,
    init: &[f64],
    settings: &GaussNewtonSettings,
) -> Result<Reconstruction> {
    let g = *base.grid();
    if init.len() != g.nodes() {
        return Err(Error::GridMismatch("initial potential length differs from node count".into()));
    }
    if data.time() != &base.time {
        return Err(Error::GridMismatch("observation time grid differs from the model".into()));
    }
    if !(settings.alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("regularization must be nonnegative, got {}", settings.alpha)));
    }
    let h = g.h();
    let nx = g.interior();
    let d = data.samples();
    let w = data.weights(h);
    let mut alpha = settings.alpha;
    let objective = |y_obs: &[C64], a: &[f64], alpha: f64| -> f64 {
        let fit: f64 = y_obs.iter().zip(&d).zip(&w).map(|((s, d), w)| w * (s - d).norm_sqr()).sum();
        let reg: f64 = (1..=nx).map(|j| h * (a[j] - init[j]).powi(2)).sum();
        0.5 * fit + 0.5 * alpha * reg
    };
    let mut a = init.to_vec();
    let mut problem = with_a(base, &a);
    let mut y = forward::solve(&problem)?;
    let mut obs = data.observe(&y).samples();
    let mut value = objective(&obs, &a, alpha);
    let mut trace = Vec::new();
    let mut step_norm = 0.0;
    let mut stalls = 0;
    let mut bumped = false;
    let mut initial_gradient = None;
    for iteration in 0..=settings.max_iterations {
        let residual: Vec<C64> = obs.iter().zip(&d).map(|(s, d)| s - d).collect();
        let cols = sensitivity_columns(&problem, &y, data)?;
        let mut hess = DMatrix::<f64>::zeros(nx, nx);
        let mut grad = DVector::<f64>::zeros(nx);
        for p in 0..nx {
            grad[p] = cols[p].iter().zip(&residual).zip(&w).map(|((j, r), w)| w * (j.conj() * r).re).sum::<f64>()
                + alpha * h * (a[p + 1] - init[p + 1]);
            for q in 0..=p {
                let v: f64 = cols[p].iter().zip(&cols[q]).zip(&w).map(|((x, y), w)| w * (x.conj() * y).re).sum();
                hess[(p, q)] = v;
                hess[(q, p)] = v;
            }
        }
        for p in 0..nx {
            hess[(p, p)] += alpha * h;
        }
        let gradient_norm = grad.norm();
        trace.push(IterationRecord { iteration, misfit: value, gradient_norm, step_norm });
        let g0 = *initial_gradient.get_or_insert(gradient_norm);
        if gradient_norm <= settings.gradient_tol * g0 {
            return Ok(Reconstruction { estimate: a, trace, converged: true });
        }
        if iteration == settings.max_iterations {
            break;
        }
        let chol = match hess.clone().cholesky() {
            Some(c) => c,
            None if !bumped => {
                bumped = true;
                let extra = 1e-8 * (0..nx).map(|p| hess[(p, p)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE) / h;
                alpha += extra;
                for p in 0..nx {
                    hess[(p, p)] += extra * h;
                    grad[p] += extra * h * (a[p + 1] - init[p + 1]);
                }
                value = objective(&obs, &a, alpha);
                hess.cholesky().ok_or_else(|| Error::ReconstructionAborted {
                    iterations: iteration,
                    reason: "normal equations singular after regularization increase".into(),
                })?
            }
            None => {
                return Err(Error::ReconstructionAborted { iterations: iteration, reason: "singular normal equations".into() })
            }
        };
        let dir = chol.solve(&(-grad));
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..BACKTRACK_LIMIT {
            let trial: Vec<f64> = (0..g.nodes()).map(|j| if j == 0 || j > nx { a[j] } else { a[j] + t * dir[j - 1] }).collect();
            let p = with_a(base, &trial);
            if let Ok(yt) = forward::solve(&p) {
                let ot = data.observe(&yt).samples();
                let vt = objective(&ot, &trial, alpha);
                if vt < value {
                    accepted = Some((trial, p, yt, ot, vt));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, p, yt, ot, vt)) => {
                step_norm = (h * dir.iter().map(|v| (t * v).powi(2)).sum::<f64>()).sqrt();
                a = trial;
                problem = p;
                y = yt;
                obs = ot;
                value = vt;
                stalls = 0;
                let size = (h * a.iter().map(|v| v * v).sum::<f64>()).sqrt();
                if step_norm <= settings.step_tol * (1.0 + size) {
                    trace.push(IterationRecord { iteration: iteration + 1, misfit: value, gradient_norm: f64::NAN, step_norm });
                    return Ok(Reconstruction { estimate: a, trace, converged: true });
                }
            }
            None => {
                stalls += 1;
                step_norm = 0.0;
                if stalls >= STALL_LIMIT {
                    return Err(Error::ReconstructionAborted {
                        iterations: iteration + 1,
                        reason: format!("misfit did not decrease for {STALL_LIMIT} consecutive iterations"),
                    });
                }
            }
        }
    }
    Ok(Reconstruction { estimate: a, trace, converged: false })
}

/// `‖â − a‖ / ‖a‖` in the trapezoid `L²` norm.
pub fn relative_error(grid: &Grid1D, estimate: &[f64], truth: &[f64]) -> f64 {
    let diff: Vec<f64> = estimate.iter().zip(truth).map(|(e, t)| e - t).collect();
    (l2_sq(grid, &diff) / l2_sq(grid, truth)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grids(nx: usize, nt: usize) -> (Grid1D, TimeGrid) {
        (Grid1D::new(1.0, nx).unwrap(), TimeGrid::new(1.0, nt).unwrap())
    }

    fn field(g: Grid1D, t: TimeGrid, f: impl Fn(f64, f64) -> C64) -> SpaceTimeField {
        SpaceTimeField::from_fn(g, t, f)
    }

    #[test]
    fn linear_imaginary_field_extends_to_the_same_formula() {
        let (g, t) = grids(7, 8);
        let z = field(g, t, |x, t| I * t * x);
        let r = field(g, t, |_, _| C64::new(1.0, 0.0));
        let ext = even_conjugate_extend(&z, &z, &r, &[0.0; 9], DatumKind::Real).unwrap();
        let big = ext.z1.time();
        assert_eq!(big.steps(), 16);
        for m in 0..=16 {
            let tau = big.t(m) - 1.0;
            for j in 0..g.nodes() {
                assert!((ext.z1.at(m, j) - I * tau * g.x(j)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn even_real_field_extends_to_its_mirror() {
        let (g, t) = grids(5, 6);
        let z = field(g, t, |x, t| C64::new((t * t + 1.0) * x, 0.0));
        let ext = even_conjugate_extend(&z, &z, &z.map(|_| C64::new(1.0, 0.0)), &[0.0; 7], DatumKind::Real).unwrap();
        for k in 0..=6 {
            assert_eq!(ext.z1.slice(6 + k), ext.z1.slice(6 - k));
        }
    }

    #[test]
    fn imaginary_datum_flips_sign_and_mismatch_is_rejected() {
        let (g, t) = grids(5, 6);
        let z = field(g, t, |x, t| C64::new(t * x, t));
        let r = field(g, t, |x, t| C64::new(t, 1.0 + x));
        let ext = even_conjugate_extend(&z, &z, &r, &[0.0; 7], DatumKind::Imaginary).unwrap();
        assert_eq!(ext.r.at(2, 3), -r.at(4, 3).conj());
        assert_eq!(ext.r.slice(6), r.slice(0));
        assert!(matches!(even_conjugate_extend(&z, &z, &r, &[0.0; 7], DatumKind::Real), Err(Error::DatumMismatch(_))));
    }

    #[test]
    fn zero_difference_has_zero_derivative() {
        let (g, t) = grids(5, 6);
        let z = SpaceTimeField::zeros(g, t);
        let r = field(g, t, |_, _| C64::new(2.0, 0.0));
        let ext = even_conjugate_extend(&z, &z, &r, &[0.0; 7], DatumKind::Real).unwrap();
        let u = time_reversed_derivative(&ext);
        assert!(u[0].max_abs() == 0.0 && u[1].max_abs() == 0.0);
        let check = terminal_check(&u, &ExtendedSystem { f: vec![1.0; 7], ..ext });
        assert_eq!(check.u1, 1.0);
    }

    #[test]
    fn linear_in_time_field_has_piecewise_constant_reversed_derivative() {
        let (g, t) = grids(5, 8);
        let shape = |x: f64| x * (1.0 - x);
        let z = field(g, t, |x, t| C64::new(t * shape(x), 0.0));
        let ext = even_conjugate_extend(&z, &z, &z.map(|_| C64::new(1.0, 0.0)), &[0.0; 7], DatumKind::Real).unwrap();
        let u = time_reversed_derivative(&ext);
        // z_ext(s) = |s − T| shape(x), so u(t) = ∂t z_ext(2T − t) = sign(T − t) shape(x)
        for m in [0, 3, 7, 9, 12, 16] {
            let expect = if m < 8 { 1.0 } else { -1.0 };
            for j in 0..g.nodes() {
                assert!((u[0].at(m, j) - expect * shape(g.x(j))).norm() < 1e-12, "m={m} j={j}");
            }
        }
    }

    proptest! {
        #[test]
        fn extension_is_conjugate_symmetric_bit_exactly(vals in proptest::collection::vec(-5.0f64..5.0, 2 * 5 * 6)) {
            let (g, t) = grids(3, 5);
            let slices: Vec<Vec<C64>> = vals.chunks(10).map(|c| c.chunks(2).map(|p| C64::new(p[0], p[1])).collect()).collect();
            let mut z = SpaceTimeField::from_slices(g, t, slices).unwrap();
            // difference systems vanish at t = 0, where the junction sits
            z.slice_mut(0).fill(ZERO);
            let r = z.map(|v| C64::new(v.re, 0.0));
            let ext = even_conjugate_extend(&z, &z, &r, &[0.0; 5], DatumKind::Real).unwrap();
            for k in 0..=5 {
                for j in 0..5 {
                    prop_assert_eq!(ext.z1.at(5 + k, j), ext.z1.at(5 - k, j).conj());
                }
            }
        }
    }

    fn reference(nx: usize, nt: usize) -> ForwardProblem {
        let (g, t) = grids(nx, nt);
        reference_problem(g, t, |_| 1.0).unwrap()
    }

    #[test]
    fn solved_difference_system_satisfies_the_discrete_equation() {
        let base = reference(31, 31);
        let y = forward::solve(&base).unwrap();
        let a = base.potentials.a.clone();
        let at: Vec<f64> = base.grid().coordinates().iter().zip(&a).map(|(x, a)| a + 0.02 * (PI * x).sin()).collect();
        let yt = forward::solve(&with_a(&base, &at)).unwrap();
        let diff = DifferenceSystem::new(&y, &yt, &a, &at).unwrap();
        assert!(diff.residual(&base).unwrap() < 1e-11);
        assert!(diff.z1.slice(0).iter().all(|v| v.norm() == 0.0));
        for n in 0..=31 {
            assert_eq!(diff.z1.at(n, 0), ZERO);
            assert_eq!(diff.z2.at(n, 32), ZERO);
        }
        let ext = extend_difference(&diff, DatumKind::Real).unwrap();
        let u = time_reversed_derivative(&ext);
        let check = terminal_check(&u, &ext);
        assert!(check.u1 < 0.2, "{check:?}");
    }

    #[test]
    fn identical_potential_is_degenerate() {
        let base = reference(15, 16);
        let zero = vec![Perturbation::from_fn("none", base.grid(), |_| 0.0)];
        let r = ip1_stability(&base, 0.3, 0.5, &zero).unwrap();
        assert!(r[0].is_degenerate() && r[0].observation == 0.0 && r[0].parameter_error == 0.0);
        let r = ip2_stability(&base, Side::Right, &zero).unwrap();
        assert!(r[0].is_degenerate());
        assert_eq!(ratio_spread(&r), None);
    }

    #[test]
    fn sensitivity_matches_central_differences() {
        let base = reference(12, 20);
        let a: Vec<f64> = base.grid().coordinates().iter().map(|x| 1.0 + 0.5 * (PI * x).sin()).collect();
        let y = forward::solve(&with_a(&base, &a)).unwrap();
        for geometry in [ObservationData::internal(&y, 0.3, 0.5).unwrap(), ObservationData::boundary(&y, Side::Right)] {
            let jac = jacobian(&base, &geometry, &a).unwrap();
            for j in [1, 6, 12] {
                let eps = 1e-6;
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[j] += eps;
                am[j] -= eps;
                let (sp, sm) = (forward_map(&base, &geometry, &ap).unwrap(), forward_map(&base, &geometry, &am).unwrap());
                let fd: Vec<C64> = sp.iter().zip(&sm).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
                let num: f64 = fd.iter().zip(&jac[j - 1]).map(|(f, e)| (f - e).norm_sqr()).sum::<f64>().sqrt();
                let den: f64 = fd.iter().map(|f| f.norm_sqr()).sum::<f64>().sqrt();
                assert!(num / den < 1e-5, "column {j}: {}", num / den);
            }
        }
    }

    #[test]
    fn exact_initial_guess_stops_immediately() {
        let base = reference(12, 16);
        let a: Vec<f64> = base.grid().coordinates().iter().map(|x| 1.0 + 0.5 * (PI * x).sin()).collect();
        let y = forward::solve(&with_a(&base, &a)).unwrap();
        let data = ObservationData::internal(&y, 0.3, 0.5).unwrap();
        let r = reconstruct(&base, &data, &a, &GaussNewtonSettings::default()).unwrap();
        assert!(r.converged && r.trace.len() == 1 && r.trace[0].misfit <= 1e-10);
        assert_eq!(r.estimate, a);
    }

    #[test]
    fn noise_is_seeded_and_scaled() {
        let base = reference(8, 8);
        let y = forward::solve(&base).unwrap();
        let data = ObservationData::boundary(&y, Side::Left);
        let a = data.with_noise(0.01, 7);
        assert_eq!(a, data.with_noise(0.01, 7));
        assert_ne!(a, data.with_noise(0.01, 8));
        assert_eq!(data.with_noise(0.0, 7), data);
        let w = data.weights(0.1);
        assert_eq!(w.len(), data.samples().len());
    }
}
