use carlab::carleman::{self, CarlemanReport, GridSolution, SolutionField, SweepSummary};
use carlab::forward::{self, ForwardProblem};
use carlab::inverse::{self, GaussNewtonSettings, ObservationData, StabilityRecord};
use carlab::model;
use carlab::records;
use carlab::weights::{self, WeightSystem};

use crate::config::RunConfig;
use crate::output::{num, Artifacts};
use crate::Failure;

pub fn check_weights(cfg: &RunConfig, out: &Artifacts) -> Result<(), Failure> {
    let w = cfg.weight()?;
    let cert = weights::certify(&w);
    let rows: Vec<Vec<String>> = cert
        .checks
        .iter()
        .map(|c| {
            let nodes: Vec<String> = c.failing_nodes.iter().map(|j| j.to_string()).collect();
            vec![c.name.clone(), c.passed.to_string(), num(c.margin), nodes.join(";")]
        })
        .collect();
    out.table("certification.csv", &["check", "passed", "margin", "failing_nodes"], &rows)?;
    print!("mu = {}\n{cert}", w.mu());
    if cert.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = cert.failures().map(|c| c.name.as_str()).collect();
        Err(Failure::Run(format!("weight certification failed: {}", names.join(", "))))
    }
}

/// Whether the decoupled sine-mode solution applies to `p`.
fn oracle_applies(p: &ForwardProblem) -> bool {
    p.coupling.as_constant().is_some()
        && p.potentials.has_zero_potentials()
        && p.boundary.is_homogeneous()
        && p.sources.as_ref().is_none_or(|s| s.f1.max_abs() + s.f2.max_abs() == 0.0)
}

pub fn forward(cfg: &RunConfig, out: &Artifacts) -> Result<(), Failure> {
    let p = cfg.problem()?;
    let sol = forward::solve(&p)?;
    for (name, field) in [("y1.csv", &sol.y1), ("y2.csv", &sol.y2)] {
        let mut buf = Vec::new();
        records::write_field(&mut buf, field)?;
        out.write(name, &buf)?;
    }
    let mut summary = vec![
        vec!["midpoint_residual".into(), num(forward::midpoint_residual(&p, &sol))],
        vec!["max_abs_y1".into(), num(sol.y1.max_abs())],
        vec!["max_abs_y2".into(), num(sol.y2.max_abs())],
    ];
    if oracle_applies(&p) {
        let a = p.coupling.as_constant().expect("constant coupling");
        let oracle = forward::spectral_oracle(&p)?;
        let diff = sol.difference(&oracle)?;
        let scale = (oracle.y1.l2_norm().powi(2) + oracle.y2.l2_norm().powi(2)).sqrt();
        let err = (diff.y1.l2_norm().powi(2) + diff.y2.l2_norm().powi(2)).sqrt();
        summary.push(vec!["oracle_error".into(), num(if scale > 0.0 { err / scale } else { err })]);
        let norms = forward::eigencomponent_norms(a, &sol)?;
        summary.push(vec!["eigencomponent_drift".into(), num(forward::eigencomponent_drift(&norms))]);
        let rows: Vec<Vec<String>> =
            norms.iter().enumerate().map(|(n, v)| vec![num(p.time.t(n)), num(v[0]), num(v[1])]).collect();
        out.table("drift.csv", &["t", "norm_1", "norm_2"], &rows)?;
    }
    out.table("forward_summary.csv", &["quantity", "value"], &summary)?;
    for r in &summary {
        println!("{} = {}", r[0], r[1]);
    }
    Ok(())
}

fn report_rows(reports: &[CarlemanReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            let mut row = vec![num(r.s), num(r.lambda)];
            row.extend(r.terms.iter().map(|(_, v)| num(*v)));
            row.push(num(r.ratio()));
            row.push(num(r.ratio_plain()));
            row
        })
        .collect()
}

pub fn carleman(cfg: &RunConfig, out: &Artifacts) -> Result<(), Failure> {
    let (grid, time) = cfg.grids()?;
    let (s_values, lambdas, kind, names) = cfg.sweep()?;
    let weight = cfg.weight()?;
    let p = cfg.problem()?;
    let tm = model::transform(&p.coupling)?;
    let base = WeightSystem::new(weight, s_values[0], lambdas[0], time.horizon())?;
    let probes = match p.coupling.as_constant() {
        Some(a) => carleman::probe_family(grid.length(), time.horizon(), a)?,
        None => Vec::new(),
    };
    let mut fields: Vec<(String, Box<dyn SolutionField>)> = Vec::new();
    for name in &names {
        if name == "solved" {
            let sol = forward::solve(&p)?;
            fields.push((name.clone(), Box::new(GridSolution::new(&sol, p.sources.as_ref())?)));
        } else if let Some((_, f)) = probes.iter().find(|(n, _)| n == name) {
            fields.push((name.clone(), Box::new(f.clone())));
        } else {
            let why = if p.coupling.as_constant().is_none() { " (probe fields need constant coupling)" } else { "" };
            return Err(cfg.error("sweep", Some("fields"), format!("unknown field `{name}`{why}")).into());
        }
    }
    let mut family = Vec::new();
    for (name, field) in &fields {
        let reports = carleman::sweep(field.as_ref(), &base, &tm, &s_values, &lambdas, kind, &grid, &time)?;
        let mut columns = vec!["s", "lambda"];
        if let Some(r) = reports.first() {
            columns.extend(r.variant.term_names());
        }
        columns.extend(["ratio", "ratio_plain"]);
        out.table(&format!("carleman_{name}.csv"), &columns, &report_rows(&reports))?;
        family.push(reports);
    }
    let summary = SweepSummary::from_family(&family);
    let log_scale = |lambda: f64, s: f64| {
        family[0].iter().find(|r| r.lambda == lambda && r.s == s).map_or(f64::NAN, |r| r.log_scale)
    };
    let rows: Vec<Vec<String>> = summary
        .rows
        .iter()
        .map(|&(l, s, r, rt)| vec![num(l), num(s), num(log_scale(l, s)), num(r), num(rt)])
        .collect();
    out.table("carleman_summary.csv", &["lambda", "s", "log_scale", "max_ratio", "max_ratio_plain"], &rows)?;
    let mut sorted = s_values.clone();
    sorted.sort_by(f64::total_cmp);
    let s_min = sorted.get(1).copied().unwrap_or(sorted[0]);
    println!("finite: {}", summary.all_finite());
    println!("non-increasing in s from s = {s_min}: {}", summary.non_increasing_from(s_min));
    if summary.all_finite() {
        Ok(())
    } else {
        Err(Failure::Run("a Carleman ratio is not finite".into()))
    }
}

fn stability_table(
    out: &Artifacts,
    name: &str,
    records: &[StabilityRecord],
    with_time_derivative: bool,
) -> Result<(), Failure> {
    let opt = |v: Option<f64>| v.map_or_else(|| "degenerate".to_string(), num);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.label.clone(), num(r.parameter_error), num(r.observation)];
            if with_time_derivative {
                row.push(r.time_derivative.map_or_else(|| "-".into(), num));
            }
            row.push(opt(r.ratio));
            row
        })
        .collect();
    let mut columns = vec!["label", "parameter_error", "observation"];
    if with_time_derivative {
        columns.push("time_derivative");
    }
    columns.push("ratio");
    out.table(&format!("{name}.csv"), &columns, &rows)?;
    let spread = inverse::ratio_spread(records);
    out.table(&format!("{name}_summary.csv"), &["quantity", "value"], &[vec!["spread".into(), opt(spread)]])?;
    println!("{name} ratio spread: {}", opt(spread));
    Ok(())
}

pub fn ip1(cfg: &RunConfig, out: &Artifacts) -> Result<(), Failure> {
    let p = cfg.problem()?;
    let (lo, hi) = cfg.inverse_omega()?;
    let family = cfg.family()?;
    let records = inverse::ip1_stability(&p, lo, hi, &family)?;
    stability_table(out, "ip1", &records, true)
}

pub fn ip2(cfg: &RunConfig, out: &Artifacts) -> Result<(), Failure> {
    let p = cfg.problem()?;
    let side = cfg.inverse_side()?;
    let family = cfg.family()?;
    let records = inverse::ip2_stability(&p, side, &family)?;
    stability_table(out, "ip2", &records, false)
}

pub fn reconstruct(cfg: &RunConfig, out: &Artifacts, seed: Option<u64>) -> Result<(), Failure> {
    let p = cfg.problem()?;
    let grid = *p.grid();
    let inv = cfg.inverse()?;
    let truth = match &inv.truth {
        Some(f) => cfg.inverse_field("truth", f)?,
        None => p.potentials.a.clone(),
    };
    let init = match &inv.init {
        Some(f) => cfg.inverse_field("init", f)?,
        None => return Err(cfg.error("inverse", None, "missing `init`").into()),
    };
    let (levels, seed) = cfg.noise(seed)?;
    if !(inv.alpha >= 0.0) {
        return Err(cfg.error("inverse", Some("alpha"), "alpha must be nonnegative").into());
    }
    let settings = GaussNewtonSettings {
        alpha: inv.alpha,
        max_iterations: inv.max_iterations.unwrap_or(GaussNewtonSettings::default().max_iterations),
        ..GaussNewtonSettings::default()
    };
    let with_a = |a: &[f64]| p.clone().with_potentials(p.potentials.clone().with_potential_a(a.to_vec()));
    let y = forward::solve(&with_a(&truth))?;
    let clean = match inv.observation.as_deref().unwrap_or("internal") {
        "internal" => {
            let (lo, hi) = cfg.inverse_omega()?;
            ObservationData::internal(&y, lo, hi).map_err(|e| cfg.error("inverse", Some("omega"), e.to_string()))?
        }
        "boundary" => ObservationData::boundary(&y, cfg.inverse_side()?),
        other => {
            return Err(cfg
                .error("inverse", Some("observation"), format!("unknown observation `{other}` (expected internal or boundary)"))
                .into())
        }
    };
    let base = with_a(&init);
    let mut rows = Vec::new();
    for (k, &level) in levels.iter().enumerate() {
        let data = if level > 0.0 { clean.with_noise(level, seed) } else { clean.clone() };
        let rec = inverse::reconstruct(&base, &data, &init, &settings)?;
        let err = inverse::relative_error(&grid, &rec.estimate, &truth);
        let iterations = rec.trace.len().saturating_sub(1);
        println!("noise {level}: relative error {err}, {iterations} iterations, converged {}", rec.converged);
        rows.push(vec![num(level), num(err), iterations.to_string(), rec.converged.to_string()]);
        let trace: Vec<Vec<String>> = rec
            .trace
            .iter()
            .map(|t| vec![t.iteration.to_string(), num(t.misfit), num(t.gradient_norm), num(t.step_norm)])
            .collect();
        out.table(&format!("trace_{k}.csv"), &["iteration", "misfit", "gradient_norm", "step_norm"], &trace)?;
        let est: Vec<Vec<String>> =
            rec.estimate.iter().enumerate().map(|(j, v)| vec![num(grid.x(j)), num(*v), num(truth[j])]).collect();
        out.table(&format!("estimate_{k}.csv"), &["x", "estimate", "truth"], &est)?;
    }
    out.table("reconstruct.csv", &["noise", "relative_error", "iterations", "converged"], &rows)?;
    Ok(())
}
