//! Crank–Nicolson solver for the coupled system with Dirichlet data, the
//! decoupled sine-mode oracle for constant coefficients, and observation
//! extraction.
//!
//! Unknowns are the interior values interleaved by component, index
//! `2(j−1)+k` for node `j` and component `k`, so the step matrix is banded
//! with three sub- and superdiagonals.

use std::f64::consts::PI;

use crate::banded::{BandedLu, BandedMatrix};
use crate::grid::{self, Grid1D, Side, SpaceTimeField, TimeGrid};
use crate::model::{det2, validate_coupling, CouplingMatrix, Mat2, PotentialSet, SourcePair};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Dirichlet values `(y1, y2)` at each endpoint, one entry per time node.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub left: Vec<[C64; 2]>,
    pub right: Vec<[C64; 2]>,
}

impl BoundaryData {
    pub fn homogeneous(time: &TimeGrid) -> Self {
        Self { left: vec![[ZERO; 2]; time.nodes()], right: vec![[ZERO; 2]; time.nodes()] }
    }

    pub fn from_fn(time: &TimeGrid, g: impl Fn(Side, f64) -> [C64; 2]) -> Self {
        let ts: Vec<f64> = (0..time.nodes()).map(|n| time.t(n)).collect();
        Self {
            left: ts.iter().map(|&t| g(Side::Left, t)).collect(),
            right: ts.iter().map(|&t| g(Side::Right, t)).collect(),
        }
    }

    pub fn at(&self, side: Side, n: usize) -> [C64; 2] {
        match side {
            Side::Left => self.left[n],
            Side::Right => self.right[n],
        }
    }

    fn max_abs(&self, n: usize) -> f64 {
        self.left[n].iter().chain(self.right[n].iter()).map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.left.iter().chain(self.right.iter()).all(|p| p[0] == ZERO && p[1] == ZERO)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    /// Abort when one step grows the solution norm beyond this factor of
    /// what the previous state, source and boundary data account for.
    pub growth_limit: Option<f64>,
    pub max_nx: usize,
    pub max_nt: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { growth_limit: Some(10.0), max_nx: 4096, max_nt: 65536 }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardProblem {
    pub coupling: CouplingMatrix,
    pub potentials: PotentialSet,
    pub time: TimeGrid,
    pub sources: Option<SourcePair>,
    pub boundary: BoundaryData,
    pub settings: SolverSettings,
}

impl ForwardProblem {
    pub fn new(coupling: CouplingMatrix, potentials: PotentialSet, time: TimeGrid) -> Result<Self> {
        if coupling.grid() != &potentials.grid {
            return Err(Error::GridMismatch("coupling and potentials use different grids".into()));
        }
        let boundary = BoundaryData::homogeneous(&time);
        Ok(Self { coupling, potentials, time, sources: None, boundary, settings: SolverSettings::default() })
    }

    pub fn grid(&self) -> &Grid1D {
        self.coupling.grid()
    }

    pub fn with_sources(mut self, sources: SourcePair) -> Result<Self> {
        if sources.f1.grid() != self.grid() || sources.f1.time() != &self.time {
            return Err(Error::GridMismatch("sources do not match the problem grids".into()));
        }
        self.sources = Some(sources);
        Ok(self)
    }

    pub fn with_boundary(mut self, boundary: BoundaryData) -> Result<Self> {
        if boundary.left.len() != self.time.nodes() || boundary.right.len() != self.time.nodes() {
            return Err(Error::GridMismatch("boundary series length differs from time node count".into()));
        }
        self.boundary = boundary;
        Ok(self)
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_potentials(mut self, potentials: PotentialSet) -> Self {
        self.potentials = potentials;
        self
    }

    fn validate(&self) -> Result<()> {
        let cert = validate_coupling(&self.coupling);
        if !cert.passed() {
            let names: Vec<_> = cert.failures().map(|c| c.name.clone()).collect();
            return Err(Error::Uncertified(names.join(", ")));
        }
        let p = &self.potentials;
        if ![&p.a, &p.b, &p.c, &p.d].iter().all(|v| v.iter().all(|x| x.is_finite())) {
            return Err(Error::Uncertified("potentials must be finite".into()));
        }
        let g = self.grid();
        if g.interior() > self.settings.max_nx || self.time.steps() > self.settings.max_nt {
            return Err(Error::InvalidArgument(format!(
                "grid {}x{} exceeds configured limits {}x{}",
                g.interior(),
                self.time.steps(),
                self.settings.max_nx,
                self.settings.max_nt
            )));
        }
        let init = [p.y10.values(), p.y20.values()];
        for side in [Side::Left, Side::Right] {
            let j = g.boundary_index(side);
            let bd = self.boundary.at(side, 0);
            for k in 0..2 {
                let scale = init[k][j].norm().max(bd[k].norm()).max(1.0);
                if (init[k][j] - bd[k]).norm() > 1e-10 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "boundary value of y{} at the {} end and t=0 ({}) differs from initial datum ({})",
                        k + 1,
                        side.name(),
                        bd[k],
                        init[k][j]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Pair of solution components on the full grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub y1: SpaceTimeField,
    pub y2: SpaceTimeField,
}

impl Solution {
    pub fn component(&self, k: usize) -> &SpaceTimeField {
        if k == 0 {
            &self.y1
        } else {
            &self.y2
        }
    }

    pub fn grid(&self) -> &Grid1D {
        self.y1.grid()
    }

    pub fn time(&self) -> &TimeGrid {
        self.y1.time()
    }

    pub fn difference(&self, other: &Solution) -> Result<Solution> {
        Ok(Solution { y1: self.y1.zip_map(&other.y1, |a, b| a - b)?, y2: self.y2.zip_map(&other.y2, |a, b| a - b)? })
    }
}

/// Factorized Crank–Nicolson step for fixed coefficients.
pub struct Stepper {
    grid: Grid1D,
    dt: f64,
    coupling: Vec<Mat2>,
    potential: Vec<Mat2>,
    lu: BandedLu,
}

impl Stepper {
    pub fn new(coupling: &CouplingMatrix, potentials: &PotentialSet, time: &TimeGrid) -> Result<Self> {
        let grid = *coupling.grid();
        let nx = grid.interior();
        let h2 = grid.h() * grid.h();
        let dt = time.dt();
        let coupling_v: Vec<Mat2> = coupling.entries().to_vec();
        let potential: Vec<Mat2> = (0..grid.nodes()).map(|j| potentials.potential_matrix(j)).collect();
        let mut m = BandedMatrix::zeros(2 * nx, 3, 3);
        for j in 1..=nx {
            let a = coupling_v[j];
            let p = potential[j];
            for k in 0..2 {
                let row = 2 * (j - 1) + k;
                m.add(row, row, C64::new(0.0, 1.0 / dt));
                for c in 0..2 {
                    let diag = 0.5 * (-2.0 * a[k][c] / h2 + p[k][c]);
                    m.add(row, 2 * (j - 1) + c, C64::new(diag, 0.0));
                    if j > 1 {
                        m.add(row, 2 * (j - 2) + c, C64::new(0.5 * a[k][c] / h2, 0.0));
                    }
                    if j < nx {
                        m.add(row, 2 * j + c, C64::new(0.5 * a[k][c] / h2, 0.0));
                    }
                }
            }
        }
        let lu = m.factorize()?;
        Ok(Self { grid, dt, coupling: coupling_v, potential, lu })
    }

    /// `A Δ_h Y + P Y` at interior nodes, using boundary values of `y`.
    fn apply(&self, y: [&[C64]; 2]) -> Vec<C64> {
        let nx = self.grid.interior();
        let h2 = self.grid.h() * self.grid.h();
        let mut out = vec![ZERO; 2 * nx];
        for j in 1..=nx {
            let a = self.coupling[j];
            let p = self.potential[j];
            let lap = [(y[0][j + 1] - 2.0 * y[0][j] + y[0][j - 1]) / h2, (y[1][j + 1] - 2.0 * y[1][j] + y[1][j - 1]) / h2];
            for k in 0..2 {
                out[2 * (j - 1) + k] = a[k][0] * lap[0] + a[k][1] * lap[1] + p[k][0] * y[0][j] + p[k][1] * y[1][j];
            }
        }
        out
    }

    /// Advances full-grid state `y` by one step. `source_mid` is the
    /// interleaved interior source at the half step; `next_boundary` the
    /// Dirichlet values at the new time level.
    pub fn step(&self, y: [&[C64]; 2], source_mid: &[C64], next_boundary: ([C64; 2], [C64; 2])) -> [Vec<C64>; 2] {
        let nx = self.grid.interior();
        let h2 = self.grid.h() * self.grid.h();
        let idt = C64::new(0.0, 1.0 / self.dt);
        let ly = self.apply(y);
        let mut rhs = vec![ZERO; 2 * nx];
        for j in 1..=nx {
            for k in 0..2 {
                let r = 2 * (j - 1) + k;
                rhs[r] = source_mid[r] + idt * y[k][j] - 0.5 * ly[r];
            }
        }
        let (gl, gr) = next_boundary;
        let (al, ar) = (self.coupling[1], self.coupling[nx]);
        for k in 0..2 {
            rhs[k] -= 0.5 * (al[k][0] * gl[0] + al[k][1] * gl[1]) / h2;
            rhs[2 * (nx - 1) + k] -= 0.5 * (ar[k][0] * gr[0] + ar[k][1] * gr[1]) / h2;
        }
        self.lu.solve_in_place(&mut rhs);
        let mut y1 = vec![ZERO; nx + 2];
        let mut y2 = vec![ZERO; nx + 2];
        y1[0] = gl[0];
        y2[0] = gl[1];
        y1[nx + 1] = gr[0];
        y2[nx + 1] = gr[1];
        for j in 1..=nx {
            y1[j] = rhs[2 * (j - 1)];
            y2[j] = rhs[2 * (j - 1) + 1];
        }
        [y1, y2]
    }

    /// Marches from full-grid initial data. `source_mid(n)` supplies the
    /// interleaved midpoint source for the step `n → n+1`.
    pub fn march(
        &self,
        time: &TimeGrid,
        initial: [Vec<C64>; 2],
        boundary: &BoundaryData,
        growth_limit: Option<f64>,
        source_mid: impl Fn(usize) -> Vec<C64>,
    ) -> Result<Solution> {
        let m = self.grid.nodes();
        let nt = time.steps();
        let mut d1 = Vec::with_capacity(m * (nt + 1));
        let mut d2 = Vec::with_capacity(m * (nt + 1));
        let mut cur = initial;
        cur[0][0] = boundary.left[0][0];
        cur[1][0] = boundary.left[0][1];
        cur[0][m - 1] = boundary.right[0][0];
        cur[1][m - 1] = boundary.right[0][1];
        d1.extend_from_slice(&cur[0]);
        d2.extend_from_slice(&cur[1]);
        let h = self.grid.h();
        let norm = |v: &[C64]| (h * v.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
        let interior_norm = |y: &[Vec<C64>; 2]| (norm(&y[0][1..m - 1]).powi(2) + norm(&y[1][1..m - 1]).powi(2)).sqrt();
        for n in 0..nt {
            let src = source_mid(n);
            let next = self.step([&cur[0], &cur[1]], &src, (boundary.left[n + 1], boundary.right[n + 1]));
            if let Some(limit) = growth_limit {
                let before = interior_norm(&cur);
                let after = interior_norm(&next);
                let budget = before + time.dt() * norm(&src) + self.grid.length().sqrt() * boundary.max_abs(n + 1);
                if !after.is_finite() || after > limit * budget {
                    return Err(Error::Unstable { step: n + 1, growth: after / budget, limit });
                }
            }
            d1.extend_from_slice(&next[0]);
            d2.extend_from_slice(&next[1]);
            cur = next;
        }
        let grid = self.grid;
        Ok(Solution {
            y1: SpaceTimeField::from_slices(grid, *time, d1.chunks(m).map(|c| c.to_vec()).collect())?,
            y2: SpaceTimeField::from_slices(grid, *time, d2.chunks(m).map(|c| c.to_vec()).collect())?,
        })
    }
}

/// Interleaved interior midpoint average of the two source fields.
pub(crate) fn midpoint_source(sources: &SourcePair, n: usize) -> Vec<C64> {
    let nx = sources.f1.grid().interior();
    let mut out = vec![ZERO; 2 * nx];
    for j in 1..=nx {
        out[2 * (j - 1)] = 0.5 * (sources.f1.at(n, j) + sources.f1.at(n + 1, j));
        out[2 * (j - 1) + 1] = 0.5 * (sources.f2.at(n, j) + sources.f2.at(n + 1, j));
    }
    out
}

pub fn solve(p: &ForwardProblem) -> Result<Solution> {
    p.validate()?;
    let stepper = Stepper::new(&p.coupling, &p.potentials, &p.time)?;
    let initial = [p.potentials.y10.values().to_vec(), p.potentials.y20.values().to_vec()];
    let nx = p.grid().interior();
    let result = match &p.sources {
        Some(s) => stepper.march(&p.time, initial, &p.boundary, p.settings.growth_limit, |n| midpoint_source(s, n)),
        None => stepper.march(&p.time, initial, &p.boundary, p.settings.growth_limit, |_| vec![ZERO; 2 * nx]),
    };
    result.map_err(|e| match e {
        Error::SingularStep { column, .. } => Error::SingularStep { step: 1, column },
        other => other,
    })
}

/// Largest residual of the midpoint scheme over all steps and interior nodes.
pub fn midpoint_residual(p: &ForwardProblem, sol: &Solution) -> f64 {
    let g = p.grid();
    let h2 = g.h() * g.h();
    let dt = p.time.dt();
    let mut worst: f64 = 0.0;
    for n in 0..p.time.steps() {
        let (a0, a1) = ([sol.y1.slice(n), sol.y2.slice(n)], [sol.y1.slice(n + 1), sol.y2.slice(n + 1)]);
        for j in 1..=g.interior() {
            let a = p.coupling.at(j);
            let pm = p.potentials.potential_matrix(j);
            let avg = |c: usize, jj: usize| 0.5 * (a0[c][jj] + a1[c][jj]);
            let lap = |c: usize| (avg(c, j + 1) - 2.0 * avg(c, j) + avg(c, j - 1)) / h2;
            for k in 0..2 {
                let f = match &p.sources {
                    Some(s) => 0.5 * (s_at(s, k, n, j) + s_at(s, k, n + 1, j)),
                    None => ZERO,
                };
                let r = C64::new(0.0, 1.0) * (a1[k][j] - a0[k][j]) / dt
                    + a[k][0] * lap(0)
                    + a[k][1] * lap(1)
                    + pm[k][0] * avg(0, j)
                    + pm[k][1] * avg(1, j)
                    - f;
                worst = worst.max(r.norm());
            }
        }
    }
    worst
}

fn s_at(s: &SourcePair, k: usize, n: usize, j: usize) -> C64 {
    if k == 0 {
        s.f1.at(n, j)
    } else {
        s.f2.at(n, j)
    }
}

/// Real eigen-decomposition of a 2×2 matrix with real spectrum, eigenvalues
/// ascending; column `k` of the returned matrix is the eigenvector for
/// eigenvalue `k`, normalized to first entry `a12`.
pub fn diagonalize(a: Mat2) -> Result<([f64; 2], Mat2)> {
    let tr = a[0][0] + a[1][1];
    let disc = tr * tr - 4.0 * det2(&a);
    if disc < 0.0 || a[0][1] == 0.0 {
        return Err(Error::InvalidArgument("matrix is not diagonalizable over the reals by this routine".into()));
    }
    let r = disc.sqrt();
    let lam = [(tr - r) / 2.0, (tr + r) / 2.0];
    let v = [[a[0][1], a[0][1]], [lam[0] - a[0][0], lam[1] - a[0][0]]];
    if det2(&v).abs() <= 1e-14 * (a[0][1] * a[0][1]).max(1.0) {
        return Err(Error::InvalidArgument("repeated eigenvalue".into()));
    }
    Ok((lam, v))
}

pub(crate) fn inverse2(m: &Mat2) -> Mat2 {
    let d = det2(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

/// Exact evolution of the semi-discrete initial data by decoupled sine modes.
pub fn spectral_oracle(p: &ForwardProblem) -> Result<Solution> {
    let a = p.coupling.as_constant().ok_or_else(|| Error::InvalidArgument("spectral oracle needs constant coefficients".into()))?;
    if !p.potentials.has_zero_potentials() {
        return Err(Error::InvalidArgument("spectral oracle needs zero potentials".into()));
    }
    if p.sources.as_ref().is_some_and(|s| s.f1.max_abs() + s.f2.max_abs() > 0.0) {
        return Err(Error::InvalidArgument("spectral oracle needs zero sources".into()));
    }
    if !p.boundary.is_homogeneous() {
        return Err(Error::InvalidArgument("spectral oracle needs homogeneous boundary data".into()));
    }
    let (lam, v) = diagonalize(a)?;
    let vi = inverse2(&v);
    let g = *p.grid();
    let nx = g.interior();
    let l = g.length();
    let init = [p.potentials.y10.values(), p.potentials.y20.values()];
    // sine coefficients of each decoupled component
    let sines: Vec<Vec<f64>> =
        (1..=nx).map(|m| (1..=nx).map(|j| (PI * (m * j) as f64 / (nx + 1) as f64).sin()).collect()).collect();
    let mut coeffs = [vec![ZERO; nx], vec![ZERO; nx]];
    for (k, ck) in coeffs.iter_mut().enumerate() {
        for m in 0..nx {
            let mut acc = ZERO;
            for j in 1..=nx {
                let w = vi[k][0] * init[0][j] + vi[k][1] * init[1][j];
                acc += w * sines[m][j - 1];
            }
            ck[m] = acc * (2.0 / (nx + 1) as f64);
        }
    }
    let time = p.time;
    let mut y = [SpaceTimeField::zeros(g, time), SpaceTimeField::zeros(g, time)];
    for n in 0..time.nodes() {
        let t = time.t(n);
        let mut w = [vec![ZERO; nx + 2], vec![ZERO; nx + 2]];
        for k in 0..2 {
            for m in 0..nx {
                let kappa = (PI * (m + 1) as f64 / l).powi(2);
                let phase = C64::from_polar(1.0, -lam[k] * kappa * t);
                let c = coeffs[k][m] * phase;
                for j in 1..=nx {
                    w[k][j] += c * sines[m][j - 1];
                }
            }
        }
        for comp in 0..2 {
            let s = y[comp].slice_mut(n);
            for j in 1..=nx {
                s[j] = v[comp][0] * w[0][j] + v[comp][1] * w[1][j];
            }
        }
    }
    let [y1, y2] = y;
    Ok(Solution { y1, y2 })
}

/// Discrete `L²(Ω)` norms of the decoupled components `V⁻¹Y` per time node.
pub fn eigencomponent_norms(a: Mat2, sol: &Solution) -> Result<Vec<[f64; 2]>> {
    let (_, v) = diagonalize(a)?;
    let vi = inverse2(&v);
    let g = sol.grid();
    let h = g.h();
    Ok((0..sol.time().nodes())
        .map(|n| {
            let (s1, s2) = (sol.y1.slice(n), sol.y2.slice(n));
            let mut acc = [0.0; 2];
            for j in 1..=g.interior() {
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += h * (vi[k][0] * s1[j] + vi[k][1] * s2[j]).norm_sqr();
                }
            }
            [acc[0].sqrt(), acc[1].sqrt()]
        })
        .collect())
}

/// Largest relative change of either decoupled norm from its initial value.
pub fn eigencomponent_drift(norms: &[[f64; 2]]) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..2 {
        let n0 = norms[0][k];
        if n0 == 0.0 {
            continue;
        }
        for row in norms {
            worst = worst.max((row[k] - n0).abs() / n0);
        }
    }
    worst
}

/// Solution values and gradients restricted to the nodes of `ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationInternal {
    pub nodes: std::ops::Range<usize>,
    pub time: TimeGrid,
    /// `values[k][n]` holds component `k` at time node `n` over `nodes`.
    pub values: [Vec<Vec<C64>>; 2],
    pub gradients: [Vec<Vec<C64>>; 2],
}

impl ObservationInternal {
    /// All samples flattened in a fixed order (values then gradients).
    pub fn samples(&self) -> Vec<C64> {
        let mut out = Vec::new();
        for k in 0..2 {
            for s in &self.values[k] {
                out.extend_from_slice(s);
            }
        }
        for k in 0..2 {
            for s in &self.gradients[k] {
                out.extend_from_slice(s);
            }
        }
        out
    }

    /// Values only, both components, in time-major order.
    pub fn value_samples(&self) -> Vec<C64> {
        let mut out = Vec::new();
        for k in 0..2 {
            for s in &self.values[k] {
                out.extend_from_slice(s);
            }
        }
        out
    }
}

pub fn observe_internal(y: &Solution, lo: f64, hi: f64) -> Result<ObservationInternal> {
    let g = y.grid();
    if !(lo >= 0.0 && hi <= g.length() && lo < hi) {
        return Err(Error::InvalidArgument(format!("observation interval ({lo}, {hi}) outside the domain")));
    }
    Ok(observe_nodes(y, g.nodes_inside(lo, hi)))
}

/// Internal observation on an explicit node range.
pub fn observe_nodes(y: &Solution, nodes: std::ops::Range<usize>) -> ObservationInternal {
    let g = y.grid();
    let time = *y.time();
    let mut values = [Vec::new(), Vec::new()];
    let mut gradients = [Vec::new(), Vec::new()];
    for k in 0..2 {
        let f = y.component(k);
        for n in 0..time.nodes() {
            let s = f.slice(n);
            let d = grid::gradient_values(s, g.h());
            values[k].push(s[nodes.clone()].to_vec());
            gradients[k].push(d[nodes.clone()].to_vec());
        }
    }
    ObservationInternal { nodes, time, values, gradients }
}

/// Outward normal derivatives of both components at `Γ⁺`, per time node.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationBoundary {
    pub side: Side,
    pub time: TimeGrid,
    pub traces: [Vec<C64>; 2],
}

impl ObservationBoundary {
    pub fn samples(&self) -> Vec<C64> {
        self.traces.iter().flatten().copied().collect()
    }
}

pub fn observe_boundary(y: &Solution, side: Side) -> ObservationBoundary {
    let g = y.grid();
    let time = *y.time();
    let traces = [0, 1].map(|k| {
        let f = y.component(k);
        (0..time.nodes()).map(|n| grid::normal_derivative_values(f.slice(n), g.h(), side)).collect()
    });
    ObservationBoundary { side, time, traces }
}
