//! End-to-end acceptance checks. Each check writes one `PASS` or `FAIL` line
//! straight to stderr, so the lines show up without `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use carlab::carleman::{self, GridSolution, QuadratureKind, SweepSummary};
use carlab::forward::{self, ForwardProblem};
use carlab::grid::{Grid1D, Side, SpaceTimeField, TimeGrid};
use carlab::inverse::{self, GaussNewtonSettings, ObservationData};
use carlab::model::{self, CouplingMatrix, DatumKind, PotentialSet, SourcePair};
use carlab::weights::{self, WeightFunction, WeightSystem};
use carlab::C64;

const A: [[f64; 2]; 2] = [[2.0, 1.0], [1.0, 2.0]];
const LADDER: [usize; 3] = [31, 63, 127];

/// Checks that may fail by construction; see the project notes. A failure
/// here is still printed as `FAIL` but does not fail the test.
const EXPECTED_FAILURES: &[&str] = &["carleman-trend-boundary"];

struct Outcome {
    name: &'static str,
    passed: bool,
}

fn report(out: &mut Vec<Outcome>, name: &'static str, passed: bool, detail: String) {
    let line = format!("{} {name}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    out.push(Outcome { name, passed });
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Discrete `L²(Q_T)` norm of both components.
fn norm2(u: &forward::Solution) -> f64 {
    (u.y1.l2_norm().powi(2) + u.y2.l2_norm().powi(2)).sqrt()
}

/// Successive orders `log2(e_k / e_{k+1})` on a ladder that halves `h`.
fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Free constant-coefficient problem with data in the well-resolved low
/// modes (the fast eigencomponent sits only in the first sine mode).
fn free_problem(n: usize, horizon: f64) -> ForwardProblem {
    let g = Grid1D::new(1.0, n).unwrap();
    let time = TimeGrid::new(horizon, n).unwrap();
    let s1 = |x: f64| (PI * x).sin();
    let s2 = |x: f64| (2.0 * PI * x).sin();
    let p = PotentialSet::new(
        g,
        |_| [0.0; 4],
        move |x| c(s1(x) + 0.3 * s2(x)),
        move |x| C64::new(-0.3 * s2(x), 0.5 * s1(x)),
    );
    ForwardProblem::new(CouplingMatrix::constant(g, A), p, time).unwrap()
}

fn oracle_order(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let errors: Vec<f64> = LADDER
        .iter()
        .map(|&n| {
            let p = free_problem(n, 0.25);
            let sol = forward::solve(&p).unwrap();
            let oracle = forward::spectral_oracle(&p).unwrap();
            norm2(&sol.difference(&oracle).unwrap())
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let ord = orders(&errors);
    let passed = ord.iter().all(|&o| o >= 1.9) && elapsed < 60.0;
    report(out, "forward-oracle-order", passed, format!("errors {}, orders {ord:.3?} (need >= 1.9), {elapsed:.2} s (need < 60)", sci(&errors)));
}

fn conservation(out: &mut Vec<Outcome>) {
    let p = free_problem(127, 1.0);
    let sol = forward::solve(&p).unwrap();
    let drift = forward::eigencomponent_drift(&forward::eigencomponent_norms(A, &sol).unwrap());
    report(out, "eigencomponent-drift", drift <= 1e-10, format!("relative drift {drift:.3e} (need <= 1e-10)"));
}

fn operator_sum(out: &mut Vec<Outcome>) {
    let residuals: Vec<f64> = LADDER
        .iter()
        .map(|&n| {
            let p = free_problem(n, 0.25);
            let (g, time) = (*p.grid(), p.time);
            let src = SourcePair::new(
                SpaceTimeField::from_fn(g, time, |x, t| C64::new((1.0 + t) * (PI * x).sin(), 0.2 * x * (1.0 - x))),
                SpaceTimeField::from_fn(g, time, |x, t| C64::new(0.0, (PI * x).sin() * (3.0 * t).cos())),
            )
            .unwrap();
            let p = p.with_sources(src.clone()).unwrap();
            let sol = forward::solve(&p).unwrap();
            let field = GridSolution::new(&sol, Some(&src)).unwrap();
            let w = weights::build_internal_psi(g, 0.3, 0.5, None).unwrap();
            let ws = WeightSystem::new(w, 2.0, 2.0, time.horizon()).unwrap();
            let tm = model::transform(&p.coupling).unwrap();
            let ops = carleman::assemble_operators(&field, &ws, &tm).unwrap();
            let f = model::transform_sources(&p.coupling, &src).unwrap();
            let (r1, r2) = carleman::operator_sum_residual(&ops, &f).unwrap();
            r1 + r2
        })
        .collect();
    let ord = orders(&residuals);
    let passed = ord.iter().all(|&o| o >= 1.5);
    report(out, "operator-sum-identity", passed, format!("residuals {}, orders {ord:.3?} (need >= 1.5)", sci(&residuals)));
}

fn margin(cert: &carlab::cert::Certification, name: &str) -> f64 {
    cert.get(name).unwrap_or_else(|| panic!("no check `{name}`")).margin
}

fn weight_certification(out: &mut Vec<Outcome>) {
    let g = Grid1D::new(1.0, 63).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-14;

    let w = weights::build_internal_psi(g, 0.3, 0.5, None).unwrap();
    let cert = weights::certify(&w);
    let psi_min = w.psi().range_on(0.0, 1.0).0;
    let ok = cert.passed()
        && close(w.mu(), 0.04)
        && close(psi_min, 1.64)
        && close(-w.derivative(0.0), -0.8)
        && close(w.derivative(1.0), -1.2)
        && close(margin(&cert, "psi > 3/4 ||psi||"), 1.64 - 1.5);
    report(
        out,
        "weight-certification-internal",
        ok,
        format!("all checks {}, mu {}, min psi {psi_min}, dpsi/dnu {} and {}", cert.passed(), w.mu(), -w.derivative(0.0), w.derivative(1.0)),
    );

    let w = weights::build_boundary_psi(g, Side::Right, 0.5, None).unwrap();
    let cert = weights::certify(&w);
    let psi_min = w.psi().range_on(0.0, 1.0).0;
    let ok = cert.passed()
        && close(w.mu(), 1.0)
        && close(psi_min, 6.25)
        && close(w.sup_norm(), 8.25)
        && close(w.derivative(1.0), 3.0)
        && close(-w.derivative(0.0), -1.0)
        && close(margin(&cert, "psi > 3/4 ||psi||"), 6.25 - 6.1875);
    report(
        out,
        "weight-certification-boundary",
        ok,
        format!("all checks {}, mu {}, min psi {psi_min}, dpsi/dnu {} and {}", cert.passed(), w.mu(), w.derivative(1.0), -w.derivative(0.0)),
    );
}

fn carleman_trend(out: &mut Vec<Outcome>, name: &'static str, weight: WeightFunction) {
    let g = *weight.grid();
    let time = TimeGrid::new(1.0, 63).unwrap();
    let tm = model::transform(&CouplingMatrix::constant(g, A)).unwrap();
    let base = WeightSystem::new(weight, 1.0, 1.0, time.horizon()).unwrap();
    let family = carleman::probe_family(1.0, 1.0, A).unwrap();
    let reports: Vec<_> = family
        .iter()
        .map(|(_, f)| {
            carleman::sweep(f, &base, &tm, &[8.0, 16.0, 32.0, 64.0], &[2.0, 3.0], QuadratureKind::Resolved, &g, &time).unwrap()
        })
        .collect();
    let summary = SweepSummary::from_family(&reports);
    let finite = summary.all_finite();
    let trend = summary.non_increasing_from(16.0);
    let rows: Vec<String> =
        summary.rows.iter().map(|r| format!("(lambda {}, s {}) {:.12} / {:.12}", r.0, r.1, r.2, r.3)).collect();
    report(out, name, finite && trend, format!("finite {finite}, non-increasing from s = 16: {trend}; max ratios {}", rows.join(", ")));
}

fn terminal_condition(out: &mut Vec<Outcome>) {
    let residuals: Vec<f64> = LADDER
        .iter()
        .map(|&n| {
            let g = Grid1D::new(1.0, n).unwrap();
            let time = TimeGrid::new(1.0, n).unwrap();
            let base = inverse::reference_problem(g, time, |_| 1.0).unwrap();
            let member = inverse::default_family(&g).into_iter().find(|p| p.label == "sin-0.02").unwrap();
            let a = base.potentials.a.clone();
            let a_tilde: Vec<f64> = a.iter().zip(&member.delta).map(|(x, d)| x + d).collect();
            let y = forward::solve(&base).unwrap();
            let yt = forward::solve(&base.clone().with_potentials(base.potentials.clone().with_potential_a(a_tilde.clone())))
                .unwrap();
            let d = inverse::DifferenceSystem::new(&y, &yt, &a, &a_tilde).unwrap();
            let ext = inverse::extend_difference(&d, DatumKind::Real).unwrap();
            let u = inverse::time_reversed_derivative(&ext);
            inverse::terminal_check(&u, &ext).u1
        })
        .collect();
    let decreasing = residuals.windows(2).all(|w| w[1] < w[0]);
    let passed = residuals[2] <= 0.05 && decreasing;
    report(out, "terminal-condition", passed, format!("relative residual {residuals:.4?} at n = {LADDER:?} (need <= 0.05 at 127, decreasing)"));
}

fn stability_spread(out: &mut Vec<Outcome>) {
    let g = Grid1D::new(1.0, 63).unwrap();
    let time = TimeGrid::new(1.0, 63).unwrap();
    let base = inverse::reference_problem(g, time, |_| 1.0).unwrap();
    let family = inverse::default_family(&g);
    let ip1 = inverse::ip1_stability(&base, 0.3, 0.5, &family).unwrap();
    let ip2 = inverse::ip2_stability(&base, Side::Right, &family).unwrap();
    for (name, records) in [("stability-spread-internal", &ip1), ("stability-spread-boundary", &ip2)] {
        let spread = inverse::ratio_spread(records);
        let ok = records.len() == 6 && records.iter().all(|r| !r.is_degenerate()) && spread.is_some_and(|s| s <= 10.0);
        report(out, name, ok, format!("max/min ratio {spread:.4?} over {} members (need <= 10)", records.len()));
    }
}

fn reconstruction(out: &mut Vec<Outcome>) {
    let g = Grid1D::new(1.0, 32).unwrap();
    let time = TimeGrid::new(1.0, 64).unwrap();
    let base = inverse::reference_problem(g, time, |_| 1.0).unwrap();
    let truth: Vec<f64> = g.coordinates().iter().map(|x| 1.0 + 0.5 * (PI * x).sin()).collect();
    let init = base.potentials.a.clone();
    let y = forward::solve(&base.clone().with_potentials(base.potentials.clone().with_potential_a(truth.clone()))).unwrap();
    let data = ObservationData::internal(&y, 0.3, 0.5).unwrap();
    let settings = GaussNewtonSettings::default();

    let rec = inverse::reconstruct(&base, &data, &init, &settings).unwrap();
    let err = inverse::relative_error(&g, &rec.estimate, &truth);
    let iterations = rec.trace.len() - 1;
    report(
        out,
        "reconstruction-noiseless",
        rec.converged && iterations <= 50 && err <= 0.01,
        format!("relative L2 error {err:.3e} after {iterations} iterations, converged {} (need <= 1e-2 within 50)", rec.converged),
    );

    let jac = inverse::jacobian(&base, &data, &init).unwrap();
    let eps = 1e-5;
    let worst = [1usize, 8, 16, 24, 31]
        .iter()
        .map(|&j| {
            let (mut ap, mut am) = (init.clone(), init.clone());
            ap[j] += eps;
            am[j] -= eps;
            let sp = inverse::forward_map(&base, &data, &ap).unwrap();
            let sm = inverse::forward_map(&base, &data, &am).unwrap();
            let fd: Vec<C64> = sp.iter().zip(&sm).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
            let num: f64 = fd.iter().zip(&jac[j - 1]).map(|(f, e)| (f - e).norm_sqr()).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|f| f.norm_sqr()).sum::<f64>().sqrt();
            num / den
        })
        .fold(0.0, f64::max);
    report(out, "jacobian-vs-finite-differences", worst <= 1e-5, format!("worst column relative error {worst:.3e} (need <= 1e-5)"));

    let errors: Vec<f64> = [0.0, 0.005, 0.01, 0.02]
        .iter()
        .map(|&level| {
            let noisy = if level > 0.0 { data.with_noise(level, 1) } else { data.clone() };
            let r = inverse::reconstruct(&base, &noisy, &init, &settings).unwrap();
            inverse::relative_error(&g, &r.estimate, &truth)
        })
        .collect();
    let monotone = errors.windows(2).all(|w| w[1] >= w[0]);
    report(out, "reconstruction-noise-monotone", monotone, format!("errors {} at noise 0, 0.5%, 1%, 2%", sci(&errors)));
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn same_tree(a: &Path, b: &Path) -> Result<(), String> {
    let mut names: Vec<_> = std::fs::read_dir(a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut other: Vec<_> = std::fs::read_dir(b).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    other.sort();
    if names != other {
        return Err(format!("file sets differ: {names:?} vs {other:?}"));
    }
    for n in names {
        if std::fs::read(a.join(&n)).unwrap() != std::fs::read(b.join(&n)).unwrap() {
            return Err(format!("{} differs", n.to_string_lossy()));
        }
    }
    Ok(())
}

fn determinism(out: &mut Vec<Outcome>) {
    let bin = env!("CARGO_BIN_EXE_carlab");
    let scratch = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    let mut count = 0;
    for entry in std::fs::read_dir(manifest_dir().join("configs")).unwrap() {
        let config = entry.unwrap().path();
        let stem = config.file_stem().unwrap().to_string_lossy().to_string();
        let command = stem.trim_end_matches("-boundary").trim_end_matches("-internal");
        let dir = scratch.path().join(&stem);
        let status = Command::new(bin)
            .args([command, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&dir)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        count += 1;
        if !status.success() {
            mismatches.push(format!("{stem}: exit {status}"));
        } else if let Err(e) = same_tree(&manifest_dir().join("tests/fixtures").join(&stem), &dir) {
            mismatches.push(format!("{stem}: {e}"));
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{count} shipped configs reproduce their fixtures byte for byte")
    } else {
        mismatches.join("; ")
    };
    report(out, "cli-determinism", mismatches.is_empty() && count > 0, detail);
}

#[test]
fn acceptance() {
    let mut out = Vec::new();
    oracle_order(&mut out);
    conservation(&mut out);
    operator_sum(&mut out);
    weight_certification(&mut out);
    let g = Grid1D::new(1.0, 63).unwrap();
    carleman_trend(&mut out, "carleman-trend-internal", weights::build_internal_psi(g, 0.3, 0.5, None).unwrap());
    carleman_trend(&mut out, "carleman-trend-boundary", weights::build_boundary_psi(g, Side::Right, 0.5, None).unwrap());
    terminal_condition(&mut out);
    stability_spread(&mut out);
    reconstruction(&mut out);
    determinism(&mut out);

    let unexpected: Vec<&str> =
        out.iter().filter(|o| !o.passed && !EXPECTED_FAILURES.contains(&o.name)).map(|o| o.name).collect();
    let failed = out.iter().filter(|o| !o.passed).count();
    let line = format!("{} of {} checks pass\n", out.len() - failed, out.len());
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(unexpected.is_empty(), "unexpected failures: {unexpected:?}");
}
