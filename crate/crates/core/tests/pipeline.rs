use std::f64::consts::PI;

use carlab::carleman::{self, GridSolution, QuadratureKind};
use carlab::forward::{self, ForwardProblem};
use carlab::grid::{ComplexField, Grid1D, Side, TimeGrid};
use carlab::inverse;
use carlab::model::{self, CouplingMatrix, PotentialSet};
use carlab::records;
use carlab::weights::{self, WeightSystem};
use carlab::C64;
use proptest::prelude::*;

const A: [[f64; 2]; 2] = [[2.0, 1.0], [1.0, 2.0]];

fn free(coeffs: &[(f64, f64)], scale: C64) -> ForwardProblem {
    let g = Grid1D::new(1.0, 15).unwrap();
    let time = TimeGrid::new(0.3, 12).unwrap();
    let data = |shift: usize| {
        ComplexField::from_fn(g, |x| {
            coeffs.iter().enumerate().map(|(k, &(re, im))| scale * C64::new(re, im) * ((k + 1 + shift) as f64 * PI * x).sin()).sum()
        })
    };
    ForwardProblem::new(CouplingMatrix::constant(g, A), PotentialSet::free(g, data(0), data(1)), time).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The homogeneous scheme is linear in its initial data.
    #[test]
    fn solve_is_linear(coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let s = C64::new(re, im);
        let base = forward::solve(&free(&coeffs, C64::new(1.0, 0.0))).unwrap();
        let scaled = forward::solve(&free(&coeffs, s)).unwrap();
        let scale = base.y1.max_abs().max(base.y2.max_abs()).max(1e-300);
        for (u, v) in [(&base.y1, &scaled.y1), (&base.y2, &scaled.y2)] {
            for (a, b) in u.data().iter().zip(v.data()) {
                prop_assert!((a * s - b).norm() <= 1e-12 * scale * (1.0 + s.norm()));
            }
        }
    }

    /// Every Carleman term is a weighted sum of squares.
    #[test]
    fn carleman_terms_are_nonnegative(coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2), s in 1.0f64..20.0) {
        let p = free(&coeffs, C64::new(1.0, 0.0));
        let sol = forward::solve(&p).unwrap();
        let field = GridSolution::new(&sol, None).unwrap();
        let tm = model::transform(&p.coupling).unwrap();
        for w in [
            weights::build_internal_psi(*p.grid(), 0.3, 0.5, None).unwrap(),
            weights::build_boundary_psi(*p.grid(), Side::Left, 0.5, None).unwrap(),
        ] {
            let ws = WeightSystem::new(w, s, 1.5, p.time.horizon()).unwrap();
            let rule = carleman::QuadratureRule::build(QuadratureKind::Trapezoid, &field, &ws, p.grid(), &p.time);
            let r = carleman::evaluate(&field, &ws, &tm, &rule).unwrap();
            prop_assert!(r.terms.iter().all(|(_, v)| *v >= 0.0 && v.is_finite()));
        }
    }
}

#[test]
fn solved_fields_survive_the_record_format() {
    let p = free(&[(1.0, 0.0), (0.0, 0.3)], C64::new(1.0, 0.0));
    let sol = forward::solve(&p).unwrap();
    let mut buf = b"# produced by a test\n".to_vec();
    records::write_field(&mut buf, &sol.y1).unwrap();
    assert_eq!(records::read_field(&buf[..], *p.grid()).unwrap(), sol.y1);
}

#[test]
fn stability_ratios_scale_with_perturbation_size() {
    // For a linearized map the squared ratio is nearly independent of the
    // perturbation amplitude.
    let g = Grid1D::new(1.0, 31).unwrap();
    let time = TimeGrid::new(1.0, 31).unwrap();
    let base = inverse::reference_problem(g, time, |_| 1.0).unwrap();
    let family: Vec<_> = [1e-4, 2e-4]
        .iter()
        .map(|&d| inverse::Perturbation::from_fn(format!("{d}"), &g, move |x| d * (PI * x).sin()))
        .collect();
    let records = inverse::ip2_stability(&base, Side::Right, &family).unwrap();
    let spread = inverse::ratio_spread(&records).unwrap();
    assert!((spread - 1.0).abs() < 1e-3, "spread {spread}");
}
