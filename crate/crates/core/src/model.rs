//! Coefficients of the coupled system and their certification.
//!
//! The principal part is a real 2×2 matrix field `a_ij(x)`; the system can be
//! solved for the time derivatives once `det(a) ≠ 0`, which produces the
//! matrix `b = a⁻¹` and the transformed sources `F = a⁻¹ f`. The symmetrizer
//! `σ = sqrt(a21/a12)` makes `diag(σ, 1) a diag(σ, 1)⁻¹` symmetric.

use crate::cert::{Certification, Check, STRICT_MARGIN};
use crate::grid::{ComplexField, Grid1D, SpaceTimeField};
use crate::{Error, Result, C64};

pub type Mat2 = [[f64; 2]; 2];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Real 2×2 coefficient field of the principal part.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    grid: Grid1D,
    entries: Vec<Mat2>,
    constant: bool,
}

impl CouplingMatrix {
    pub fn constant(grid: Grid1D, a: Mat2) -> Self {
        Self { grid, entries: vec![a; grid.nodes()], constant: true }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Mat2) -> Self {
        let entries: Vec<Mat2> = (0..grid.nodes()).map(|j| f(grid.x(j))).collect();
        let constant = entries.iter().all(|e| e == &entries[0]);
        Self { grid, entries, constant }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn at(&self, j: usize) -> Mat2 {
        self.entries[j]
    }

    pub fn entries(&self) -> &[Mat2] {
        &self.entries
    }

    /// The matrix itself when it does not vary in `x`.
    pub fn as_constant(&self) -> Option<Mat2> {
        self.constant.then(|| self.entries[0])
    }

    /// Linear interpolation between nodes.
    pub fn at_x(&self, x: f64) -> Mat2 {
        if self.constant {
            return self.entries[0];
        }
        interpolate_mat(&self.entries, &self.grid, x)
    }
}

fn interpolate_mat(entries: &[Mat2], grid: &Grid1D, x: f64) -> Mat2 {
    let (j, w) = crate::grid::locate(x, grid.h(), grid.nodes() - 1);
    let (p, q) = (entries[j], entries[j + 1]);
    let mut out = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = (1.0 - w) * p[r][c] + w * q[r][c];
        }
    }
    out
}

/// Checks `a12 a21 > 0`, `det a ≠ 0` and `a22 det a > 0` at every node, plus
/// the discrete second-difference size as a smoothness indicator.
pub fn validate_coupling(a: &CouplingMatrix) -> Certification {
    let mut cert = Certification::new();
    let mut prod_min = f64::INFINITY;
    let mut det_min = f64::INFINITY;
    let mut a22det_min = f64::INFINITY;
    let (mut bad_prod, mut bad_det, mut bad_a22) = (vec![], vec![], vec![]);
    for (j, m) in a.entries.iter().enumerate() {
        let prod = m[0][1] * m[1][0];
        let det = det2(m);
        let a22det = m[1][1] * det;
        if !(prod > STRICT_MARGIN) {
            bad_prod.push(j);
        }
        if !(det.abs() > STRICT_MARGIN) {
            bad_det.push(j);
        }
        if !(a22det > STRICT_MARGIN) {
            bad_a22.push(j);
        }
        prod_min = prod_min.min(prod);
        det_min = det_min.min(det.abs());
        a22det_min = a22det_min.min(a22det);
    }
    cert.strict("a12*a21 > 0", prod_min, bad_prod);
    cert.strict("det(a) != 0", det_min, bad_det);
    cert.strict("a22*det(a) > 0", a22det_min, bad_a22);

    let h = a.grid.h();
    let mut second: f64 = 0.0;
    for j in 1..a.entries.len() - 1 {
        for r in 0..2 {
            for c in 0..2 {
                let d2 = (a.entries[j + 1][r][c] - 2.0 * a.entries[j][r][c] + a.entries[j - 1][r][c]) / (h * h);
                second = second.max(d2.abs());
            }
        }
    }
    cert.push(Check {
        name: "max |second difference of a_ij|".into(),
        passed: second.is_finite(),
        margin: second,
        failing_nodes: vec![],
    });
    cert
}

/// `b = a⁻¹` entrywise, the symmetrizer `σ` and its minimum `σ₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedMatrix {
    grid: Grid1D,
    b: Vec<Mat2>,
    sigma: Vec<f64>,
    sigma0: f64,
    constant: bool,
}

impl TransformedMatrix {
    pub fn at(&self, j: usize) -> Mat2 {
        self.b[j]
    }

    pub fn at_x(&self, x: f64) -> Mat2 {
        if self.constant {
            return self.b[0];
        }
        interpolate_mat(&self.b, &self.grid, x)
    }

    pub fn entries(&self) -> &[Mat2] {
        &self.b
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    /// Largest relative disagreement between `σ² a12 = a21` and `σ² b12 = b21`.
    pub fn symmetrizer_residuals(&self, a: &CouplingMatrix) -> (f64, f64) {
        let mut ra: f64 = 0.0;
        let mut rb: f64 = 0.0;
        for j in 0..self.b.len() {
            let s2 = self.sigma[j] * self.sigma[j];
            let m = a.at(j);
            ra = ra.max((s2 * m[0][1] - m[1][0]).abs() / m[1][0].abs().max(f64::MIN_POSITIVE));
            rb = rb.max((s2 * self.b[j][0][1] - self.b[j][1][0]).abs() / self.b[j][1][0].abs().max(f64::MIN_POSITIVE));
        }
        (ra, rb)
    }
}

pub fn transform(a: &CouplingMatrix) -> Result<TransformedMatrix> {
    let cert = validate_coupling(a);
    if !cert.passed() {
        let names: Vec<_> = cert.failures().map(|c| c.name.clone()).collect();
        return Err(Error::Uncertified(names.join(", ")));
    }
    let mut b = Vec::with_capacity(a.entries.len());
    let mut sigma = Vec::with_capacity(a.entries.len());
    for m in &a.entries {
        let det = det2(m);
        b.push([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]);
        sigma.push((m[1][0] / m[0][1]).sqrt());
    }
    let sigma0 = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TransformedMatrix { grid: a.grid, b, sigma, sigma0, constant: a.constant })
}

/// A pair of space-time source fields.
#[derive(Clone, Debug, PartialEq)]
pub struct SourcePair {
    pub f1: SpaceTimeField,
    pub f2: SpaceTimeField,
}

impl SourcePair {
    pub fn new(f1: SpaceTimeField, f2: SpaceTimeField) -> Result<Self> {
        crate::grid::ensure_same_grids(&f1, &f2)?;
        Ok(Self { f1, f2 })
    }
}

/// `F1 = (a22 f1 - a12 f2)/det`, `F2 = (a11 f2 - a21 f1)/det` pointwise.
pub fn transform_sources(a: &CouplingMatrix, f: &SourcePair) -> Result<SourcePair> {
    let cert = validate_coupling(a);
    if !cert.passed() {
        return Err(Error::Uncertified("coupling matrix".into()));
    }
    if f.f1.grid() != &a.grid {
        return Err(Error::GridMismatch("sources and coupling live on different grids".into()));
    }
    let m = a.grid.nodes();
    let time = *f.f1.time();
    let mut out1 = SpaceTimeField::zeros(a.grid, time);
    let mut out2 = SpaceTimeField::zeros(a.grid, time);
    for n in 0..time.nodes() {
        let (s1, s2) = (f.f1.slice(n), f.f2.slice(n));
        let mut v1 = Vec::with_capacity(m);
        let mut v2 = Vec::with_capacity(m);
        for j in 0..m {
            let c = a.at(j);
            let det = det2(&c);
            v1.push((c[1][1] * s1[j] - c[0][1] * s2[j]) / det);
            v2.push((c[0][0] * s2[j] - c[1][0] * s1[j]) / det);
        }
        out1.slice_mut(n).copy_from_slice(&v1);
        out2.slice_mut(n).copy_from_slice(&v2);
    }
    Ok(SourcePair { f1: out1, f2: out2 })
}

/// Whether the initial datum `y10` is everywhere real or everywhere imaginary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatumKind {
    Real,
    Imaginary,
}

/// Zeroth-order potentials `a, b, c, d` (real) and initial data.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSet {
    pub grid: Grid1D,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub y10: ComplexField,
    pub y20: ComplexField,
    /// Required lower bound on `|y10|`; `None` accepts any positive bound.
    pub lower_bound: Option<f64>,
}

impl PotentialSet {
    pub fn new(
        grid: Grid1D,
        potentials: impl Fn(f64) -> [f64; 4],
        y10: impl Fn(f64) -> C64,
        y20: impl Fn(f64) -> C64,
    ) -> Self {
        let vals: Vec<[f64; 4]> = (0..grid.nodes()).map(|j| potentials(grid.x(j))).collect();
        Self {
            grid,
            a: vals.iter().map(|v| v[0]).collect(),
            b: vals.iter().map(|v| v[1]).collect(),
            c: vals.iter().map(|v| v[2]).collect(),
            d: vals.iter().map(|v| v[3]).collect(),
            y10: ComplexField::from_fn(grid, y10),
            y20: ComplexField::from_fn(grid, y20),
            lower_bound: None,
        }
    }

    /// Zero potentials with the given initial data.
    pub fn free(grid: Grid1D, y10: ComplexField, y20: ComplexField) -> Self {
        let z = vec![0.0; grid.nodes()];
        Self { grid, a: z.clone(), b: z.clone(), c: z.clone(), d: z, y10, y20, lower_bound: None }
    }

    pub fn with_lower_bound(mut self, r: f64) -> Self {
        self.lower_bound = Some(r);
        self
    }

    pub fn with_potential_a(mut self, a: Vec<f64>) -> Self {
        self.a = a;
        self
    }

    pub fn potential_matrix(&self, j: usize) -> Mat2 {
        [[self.a[j], self.b[j]], [self.c[j], self.d[j]]]
    }

    pub fn has_zero_potentials(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.d].iter().all(|v| v.iter().all(|&x| x == 0.0))
    }

    /// Kind of `y10` under a relative tolerance, if it is either.
    pub fn datum_kind(&self) -> Option<DatumKind> {
        datum_kind(self.y10.values())
    }
}

pub(crate) fn datum_kind(values: &[C64]) -> Option<DatumKind> {
    let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    if values.iter().all(|v| v.im.abs() <= tol) {
        Some(DatumKind::Real)
    } else if values.iter().all(|v| v.re.abs() <= tol) {
        Some(DatumKind::Imaginary)
    } else {
        None
    }
}

/// Checks that `y10` is real or purely imaginary and bounded away from zero.
/// A sign change of the surviving component between adjacent nodes counts
/// as a zero crossing.
pub fn validate_potentials(p: &PotentialSet) -> Certification {
    let mut cert = Certification::new();
    let finite = [&p.a, &p.b, &p.c, &p.d].iter().all(|v| v.iter().all(|x| x.is_finite()));
    cert.push(Check { name: "potentials finite".into(), passed: finite, margin: 0.0, failing_nodes: vec![] });

    let values = p.y10.values();
    let kind = datum_kind(values);
    cert.push(Check {
        name: "y10 real or purely imaginary".into(),
        passed: kind.is_some(),
        margin: match kind {
            Some(DatumKind::Real) => 1.0,
            Some(DatumKind::Imaginary) => -1.0,
            None => 0.0,
        },
        failing_nodes: vec![],
    });

    let r = values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    let mut crossings = Vec::new();
    if let Some(kind) = kind {
        let part = |v: &C64| match kind {
            DatumKind::Real => v.re,
            DatumKind::Imaginary => v.im,
        };
        for j in 0..values.len() - 1 {
            if part(&values[j]) * part(&values[j + 1]) < 0.0 {
                crossings.push(j);
            }
        }
    }
    let achieved = if crossings.is_empty() { r } else { 0.0 };
    cert.strict("|y10| >= r > 0", achieved, crossings);
    if let Some(bound) = p.lower_bound {
        cert.non_strict("|y10| >= configured r", achieved - bound, vec![]);
    }
    cert
}
