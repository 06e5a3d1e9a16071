//! Carleman weight functions `ψ` and the derived weights `θ`, `φ`.
//!
//! `ψ` is a quadratic polynomial, so every derivative used downstream has a
//! closed form and the certification conditions can be checked both at grid
//! nodes and at the exact extrema of the polynomial.

use crate::cert::Certification;
use crate::grid::{Grid1D, RealSpaceTimeField, Side, TimeGrid};
use crate::{Error, Result};

/// `ψ(x) = c0 + c1 x + c2 x²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadratic {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Quadratic {
    pub fn new(c0: f64, c1: f64, c2: f64) -> Self {
        Self { c0, c1, c2 }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(c, 0.0, 0.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.c0 + x * (self.c1 + x * self.c2)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.c1 + 2.0 * self.c2 * x
    }

    pub fn second_derivative(&self) -> f64 {
        2.0 * self.c2
    }

    /// Abscissa where the derivative vanishes, if the polynomial is not linear.
    fn vertex(&self) -> Option<f64> {
        (self.c2 != 0.0).then(|| -self.c1 / (2.0 * self.c2))
    }

    /// Candidate extremal points of the polynomial on `[lo, hi]`.
    fn critical_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo, hi];
        if let Some(v) = self.vertex() {
            if v > lo && v < hi {
                pts.push(v);
            }
        }
        pts
    }

    /// `(min, max)` over `[lo, hi]`.
    pub fn range_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        self.critical_points(lo, hi)
            .into_iter()
            .map(|x| self.value(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    }

    /// Minimum of `|ψ'|²` over `[lo, hi]`; `ψ'` is linear.
    pub fn min_slope_sq_on(&self, lo: f64, hi: f64) -> f64 {
        if let Some(v) = self.vertex() {
            if v >= lo && v <= hi {
                return 0.0;
            }
        }
        self.derivative(lo).powi(2).min(self.derivative(hi).powi(2))
    }
}

/// Where the observation acts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observation {
    /// Subinterval `ω = (lo, hi)` strictly inside `Ω`.
    Internal { lo: f64, hi: f64 },
    /// `Γ⁺` is a single endpoint.
    Boundary(Side),
}

impl Observation {
    pub fn internal(grid: &Grid1D, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi < grid.length() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "observation interval ({lo}, {hi}) must lie strictly inside (0, {})",
                grid.length()
            )));
        }
        Ok(Observation::Internal { lo, hi })
    }

    pub fn is_internal(&self) -> bool {
        matches!(self, Observation::Internal { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightFunction {
    grid: Grid1D,
    psi: Quadratic,
    mu: f64,
    observation: Observation,
}

impl WeightFunction {
    /// Wraps an arbitrary quadratic; `μ` is the exact minimum of `|ψ'|²` over
    /// the region where pseudoconvexity is required.
    pub fn new(grid: Grid1D, psi: Quadratic, observation: Observation) -> Self {
        let l = grid.length();
        let mu = match observation {
            Observation::Internal { lo, hi } => psi.min_slope_sq_on(0.0, lo).min(psi.min_slope_sq_on(hi, l)),
            Observation::Boundary(_) => psi.min_slope_sq_on(0.0, l),
        };
        Self { grid, psi, mu, observation }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn psi(&self) -> &Quadratic {
        &self.psi
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn observation(&self) -> Observation {
        self.observation
    }

    pub fn value(&self, x: f64) -> f64 {
        self.psi.value(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.psi.derivative(x)
    }

    pub fn second_derivative(&self) -> f64 {
        self.psi.second_derivative()
    }

    pub fn values(&self) -> Vec<f64> {
        self.grid.coordinates().into_iter().map(|x| self.value(x)).collect()
    }

    /// `‖ψ‖∞` over `Ω̄`.
    pub fn sup_norm(&self) -> f64 {
        let (lo, hi) = self.psi.range_on(0.0, self.grid.length());
        lo.abs().max(hi.abs())
    }

    /// Point of `Ω̄` where `ψ` is largest.
    pub fn argmax(&self) -> f64 {
        self.psi
            .critical_points(0.0, self.grid.length())
            .into_iter()
            .fold((f64::NAN, f64::NEG_INFINITY), |(xa, va), x| {
                let v = self.value(x);
                if v > va {
                    (x, v)
                } else {
                    (xa, va)
                }
            })
            .0
    }
}

/// `ψ(x) = K − (x − x₀)²` centred in `ω`; `K` defaults to the smallest
/// integer exceeding `4·max(x₀, L − x₀)²`.
pub fn build_internal_psi(grid: Grid1D, lo: f64, hi: f64, k: Option<f64>) -> Result<WeightFunction> {
    let observation = Observation::internal(&grid, lo, hi)?;
    let x0 = 0.5 * (lo + hi);
    let reach = x0.max(grid.length() - x0);
    let k = k.unwrap_or_else(|| (4.0 * reach * reach).floor() + 1.0);
    let psi = Quadratic::new(k - x0 * x0, 2.0 * x0, -1.0);
    Ok(WeightFunction::new(grid, psi, observation))
}

/// `ψ(x) = K + (x + δ)²` for `Γ⁺ = {L}`, mirrored for `Γ⁺ = {0}`; `K`
/// defaults to the smallest integer exceeding `3(L + δ)² − 4δ²`.
pub fn build_boundary_psi(grid: Grid1D, side: Side, delta: f64, k: Option<f64>) -> Result<WeightFunction> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let l = grid.length();
    let k = k.unwrap_or_else(|| (3.0 * (l + delta).powi(2) - 4.0 * delta * delta).floor() + 1.0);
    let psi = match side {
        Side::Right => Quadratic::new(k + delta * delta, 2.0 * delta, 1.0),
        // K + (L − x + δ)²
        Side::Left => {
            let m = l + delta;
            Quadratic::new(k + m * m, -2.0 * m, 1.0)
        }
    };
    Ok(WeightFunction::new(grid, psi, Observation::Boundary(side)))
}

/// Checks the conditions on `ψ` for its observation geometry, at grid nodes
/// and at the exact extrema.
pub fn certify(w: &WeightFunction) -> Certification {
    let mut cert = Certification::new();
    let grid = w.grid();
    let l = grid.length();
    let psi = w.psi();
    let xs = grid.coordinates();
    let slope = |lo: f64, hi: f64| psi.min_slope_sq_on(lo, hi).sqrt();

    let in_region: Vec<usize> = match w.observation() {
        Observation::Internal { lo, hi } => (0..xs.len()).filter(|&j| xs[j] <= lo || xs[j] >= hi).collect(),
        Observation::Boundary(_) => (0..xs.len()).collect(),
    };
    let region_margin = match w.observation() {
        Observation::Internal { lo, hi } => slope(0.0, lo).min(slope(hi, l)),
        Observation::Boundary(_) => slope(0.0, l),
    };
    let zero_slope: Vec<usize> = in_region.iter().copied().filter(|&j| psi.derivative(xs[j]) == 0.0).collect();
    let grad_name = if w.observation().is_internal() { "psi' != 0 on Omega\\omega" } else { "psi' != 0 on closure(Omega)" };
    cert.strict(grad_name, region_margin, zero_slope);

    let dnu = |side: Side| side.normal() * psi.derivative(side.coordinate(grid));
    match w.observation() {
        Observation::Internal { .. } => {
            let worst = dnu(Side::Left).max(dnu(Side::Right));
            cert.non_strict("dpsi/dnu <= 0 on Gamma", -worst, vec![]);
        }
        Observation::Boundary(plus) => {
            let minus = match plus {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            };
            cert.non_strict("dpsi/dnu <= 0 on Gamma\\Gamma+", -dnu(minus), vec![]);
            cert.strict("dpsi/dnu > 0 on Gamma+", dnu(plus), vec![]);
        }
    }

    cert.strict("mu > 0", w.mu(), vec![]);
    let mu = w.mu();
    let below: Vec<usize> = in_region
        .iter()
        .copied()
        .filter(|&j| psi.derivative(xs[j]).powi(2) < mu * (1.0 - 1e-12))
        .collect();
    let node_min = in_region.iter().map(|&j| psi.derivative(xs[j]).powi(2)).fold(f64::INFINITY, f64::min);
    cert.non_strict("|psi'|^2 >= mu", node_min.min(region_margin * region_margin) - mu, below);

    let sup = w.sup_norm();
    let (min_exact, _) = psi.range_on(0.0, l);
    let gap = min_exact - 0.75 * sup;
    let low: Vec<usize> = (0..xs.len()).filter(|&j| !(psi.value(xs[j]) - 0.75 * sup > 0.0)).collect();
    cert.strict("psi > 3/4 ||psi||", gap, low);
    cert
}

/// All weight quantities at one space-time point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WeightBundle {
    pub theta: f64,
    pub phi: f64,
    pub phi_t: f64,
    pub grad_phi: f64,
    pub lap_phi: f64,
    pub grad_phi_sq: f64,
    /// `−2sφ`; `−∞` at the time endpoints.
    pub log_weight: f64,
    /// `e^{−2sφ}`.
    pub weight: f64,
}

/// A weight function together with `(s, λ)` and the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSystem {
    pub weight: WeightFunction,
    pub s: f64,
    pub lambda: f64,
    pub horizon: f64,
    c_psi: f64,
}

impl WeightSystem {
    pub fn new(weight: WeightFunction, s: f64, lambda: f64, horizon: f64) -> Result<Self> {
        if !(s >= 1.0 && lambda >= 1.0) {
            return Err(Error::InvalidArgument(format!("need s, lambda >= 1, got s={s}, lambda={lambda}")));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { weight, s, lambda, horizon, c_psi: 1.5 * weight.sup_norm() })
    }

    /// Diagnostic constructor without the `s, λ ≥ 1` restriction.
    pub fn unchecked(weight: WeightFunction, s: f64, lambda: f64, horizon: f64) -> Self {
        Self { weight, s, lambda, horizon, c_psi: 1.5 * weight.sup_norm() }
    }

    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }

    pub fn with_params(&self, s: f64, lambda: f64) -> Result<Self> {
        Self::new(self.weight, s, lambda, self.horizon)
    }

    /// `θ, φ` and derivatives at `(x, t)`; zero outside `0 < t < T`.
    pub fn eval(&self, x: f64, t: f64) -> WeightBundle {
        let big_t = self.horizon;
        if !(t > 0.0 && t < big_t) {
            return WeightBundle { log_weight: f64::NEG_INFINITY, ..WeightBundle::default() };
        }
        let lam = self.lambda;
        let w = &self.weight;
        let p = w.value(x);
        let dp = w.derivative(x);
        let d2p = w.second_derivative();
        let tt = t * (big_t - t);
        let e_psi = (lam * p).exp();
        let gap = (lam * self.c_psi).exp() - e_psi;
        let theta = e_psi / tt;
        let phi = gap / tt;
        let phi_t = -gap * (big_t - 2.0 * t) / (tt * tt);
        let grad_phi = -lam * theta * dp;
        let lap_phi = -theta * (lam * lam * dp * dp + lam * d2p);
        let log_weight = -2.0 * self.s * phi;
        WeightBundle {
            theta,
            phi,
            phi_t,
            grad_phi,
            lap_phi,
            grad_phi_sq: grad_phi * grad_phi,
            log_weight,
            weight: log_weight.exp(),
        }
    }

    /// Point `(argmax ψ, T/2)` where `φ` is smallest and `e^{−2sφ}` largest.
    pub fn peak(&self) -> (f64, f64) {
        (self.weight.argmax(), 0.5 * self.horizon)
    }

    /// `−2sφ` at the peak.
    pub fn peak_log_weight(&self) -> f64 {
        let (x, t) = self.peak();
        self.eval(x, t).log_weight
    }

    /// `−2s(φ(x,t) − φ(peak))`, evaluated without subtracting the two large
    /// values of `φ`; `−∞` outside `0 < t < T`.
    pub fn relative_log_weight(&self, x: f64, t: f64) -> f64 {
        self.relative_log_weight_offset(x, x - self.peak().0, t)
    }

    /// As [`relative_log_weight`](Self::relative_log_weight) with the offset
    /// `dx = x − argmax ψ` supplied by the caller, who may know it to more
    /// digits than `x` carries.
    pub fn relative_log_weight_offset(&self, x: f64, dx: f64, t: f64) -> f64 {
        let big_t = self.horizon;
        if !(t > 0.0 && t < big_t) {
            return f64::NEG_INFINITY;
        }
        let lam = self.lambda;
        let (xs, ts) = self.peak();
        let q = self.weight.psi();
        let tau = t * (big_t - t);
        let tau_peak = ts * ts;
        let dt = t - ts;
        let inv_gap = dt * dt / (tau * tau_peak);
        let gap_x = -(lam * self.c_psi).exp() * (lam * (q.value(x) - self.c_psi)).exp_m1();
        let dpsi = dx * (q.c1 + q.c2 * (x + xs));
        let drop = -(lam * q.value(xs)).exp() * (lam * dpsi).exp_m1();
        -2.0 * self.s * (gap_x * inv_gap + drop / tau_peak)
    }

    /// `φ` evaluated on the grid nodes (zero at the time endpoints).
    pub fn phi_field(&self, time: &TimeGrid) -> RealSpaceTimeField {
        RealSpaceTimeField::from_fn(*self.weight.grid(), *time, |x, t| self.eval(x, t).phi)
    }

    /// `max |φ_t| / θ²` over interior time nodes of `time`.
    pub fn phi_t_theta_sq_bound(&self, time: &TimeGrid) -> f64 {
        let xs = self.weight.grid().coordinates();
        let mut best: f64 = 0.0;
        for n in 1..time.steps() {
            for &x in &xs {
                let b = self.eval(x, time.t(n));
                best = best.max(b.phi_t.abs() / (b.theta * b.theta));
            }
        }
        best
    }
}
