use super::*;
use crate::quadrature::QuadratureScheme;

fn beta_engine(beta: f64, q: f64, order: usize) -> SeriesEngine<f64> {
    SeriesEngine::new(
        &KernelDensity::beta(beta).unwrap(),
        &Potential::constant(q).unwrap(),
        &StateSpace::single_point(),
        &RecursionPlan::with_order(order),
        &Quadrature::new(QuadratureScheme::default()).unwrap(),
    )
    .unwrap()
}

#[test]
fn beta_terms_match_closed_form() {
    for beta in [0.25, 0.5, 0.75] {
        let eng = beta_engine(beta, 1.0, 8);
        for dt in [0.25, 1.0, 4.0] {
            for n in 0..=8 {
                let (v, e) = eng.eval_kn(n, 0.0, &State::origin(), dt, &State::origin()).unwrap();
                let exact = beta_kernel_closed_form(beta, 1.0, n, 0.0, dt).unwrap();
                let rel = (v - exact).abs() / exact;
                assert!(rel < 1e-6, "beta={beta} dt={dt} n={n}: {v} vs {exact} (err {e})");
                assert!((v - exact).abs() <= 10.0 * e + 1e-13 * exact, "honest error: {v} {exact} {e}");
            }
        }
    }
}

#[test]
fn closed_form_examples() {
    assert!((beta_kernel_closed_form(0.5f64, 1.0, 1, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
    let v = beta_kernel_closed_form(0.5f64, 2.0, 4, 0.0, 1.0).unwrap();
    assert!((v - 16.0 / 1.329_340_388_179_137).abs() < 1e-12);
    let full = beta_kernel_full_sum(0.5, 1.0, 0.0, 1.0).unwrap();
    let series: f64 = (0..80).map(|n| beta_kernel_closed_form(0.5, 1.0, n, 0.0, 1.0).unwrap()).sum();
    assert!((full - series).abs() < 1e-12 * full);
}

#[test]
fn zero_potential_collapses() {
    let eng = SeriesEngine::new(
        &KernelDensity::gauss(1).unwrap(),
        &Potential::zero(),
        &StateSpace::real_line(10.0, 64).unwrap(),
        &RecursionPlan::with_order(5),
        &Quadrature::default(),
    )
    .unwrap();
    let grid = SpaceTimeGrid::new(vec![0.0, 0.5, 1.0], vec![State::on_line(0.0), State::on_line(1.0)]).unwrap();
    let tab = eng.eval_series(&grid, None).unwrap();
    for e in &tab.entries {
        assert!(e.terms[1..].iter().all(|&v| v == 0.0));
        assert_eq!(e.sum(), e.terms[0]);
    }
}

#[test]
fn plan_violation_and_precondition() {
    let eng = beta_engine(0.5, 1.0, 3);
    let o = State::origin();
    assert!(matches!(eng.eval_kn(4, 0.0, &o, 1.0, &o), Err(Error::PlanViolation { .. })));
    assert!(matches!(eng.eval_kn(1, 1.0, &o, 1.0, &o), Err(Error::Precondition(_))));
}

#[test]
fn beta_series_sum_and_split() {
    let eng = beta_engine(0.5, 1.0, 6);
    let grid = SpaceTimeGrid::times_only(vec![0.0, 1.0]).unwrap();
    let tab = eng.eval_series(&grid, None).unwrap();
    let expect: f64 = (0..=6).map(|n| beta_kernel_closed_form(0.5, 1.0, n, 0.0, 1.0).unwrap()).sum();
    assert!((tab.entries[0].sum() - expect).abs() < 1e-6 * expect);
    let r = eng.splitting_check(2, 1, &grid).unwrap();
    assert!(r.max_relative < 1e-6, "{r:?}");
    assert_eq!(eng.splitting_check(1, 0, &grid).unwrap().max_relative, 0.0);
}

#[test]
fn csv_layout() {
    let eng = beta_engine(0.5, 1.0, 2);
    let grid = SpaceTimeGrid::times_only(vec![0.0, 0.5, 1.0]).unwrap();
    let csv = eng.eval_series(&grid, None).unwrap().to_csv_string().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "s,x,t,y,n,value,err");
    assert_eq!(lines.len(), 1 + 3 * 3);
    assert!(lines[1].starts_with("0e0,x0,5e-1,x0,0,"));
}

#[test]
fn gauss_constant_potential_follows_chapman_kolmogorov() {
    let space = StateSpace::real_line(10.0, 64).unwrap();
    let plan = RecursionPlan {
        order: 3,
        table_time_nodes: 8,
        table_space_nodes: 32,
        ..RecursionPlan::default()
    };
    let scheme = QuadratureScheme {
        time: crate::quadrature::TimeRule::JacobiWeighted { nodes: 24 },
        space: crate::quadrature::SpaceRule::GaussLegendre {
            nodes_per_panel: 6,
            panels: 8,
        },
        tolerance: 1e-8,
    };
    let eng = SeriesEngine::new(
        &KernelDensity::gauss(1).unwrap(),
        &Potential::constant(0.3).unwrap(),
        &space,
        &plan,
        &Quadrature::new(scheme).unwrap(),
    )
    .unwrap();
    let x = State::on_line(0.0);
    for dt in [1.0, 0.25] {
        for y in [0.0, 0.7, 2.0] {
            let k0 = eng.kernel().eval(0.0, &x, dt, &State::on_line(y));
            let mut fact = 1.0;
            for n in 1..=3 {
                fact *= n as f64;
                let want = (0.3f64 * dt).powi(n as i32) / fact * k0;
                let (v, e) = eng.eval_kn(n, 0.0, &x, dt, &State::on_line(y)).unwrap();
                assert!((v - want).abs() <= 10.0 * e, "honest: {v} {want} {e}");
                assert!((v - want).abs() <= 1e-4 * want, "accurate: {v} {want}");
            }
        }
    }
}

fn light_scheme() -> Quadrature<f64> {
    Quadrature::new(QuadratureScheme {
        time: crate::quadrature::TimeRule::JacobiWeighted { nodes: 24 },
        space: crate::quadrature::SpaceRule::GaussLegendre {
            nodes_per_panel: 6,
            panels: 8,
        },
        tolerance: 1e-8,
    })
    .unwrap()
}

#[test]
fn gauss_bump_splitting_is_consistent() {
    let plan = RecursionPlan {
        order: 3,
        table_time_nodes: 8,
        table_space_nodes: 32,
        ..RecursionPlan::default()
    };
    let eng = SeriesEngine::new(
        &KernelDensity::gauss(1).unwrap(),
        &Potential::bump(1.0, 1.0).unwrap(),
        &StateSpace::real_line(10.0, 64).unwrap(),
        &plan,
        &light_scheme(),
    )
    .unwrap();
    let grid = SpaceTimeGrid::new(vec![0.0, 1.0], vec![State::on_line(-0.5), State::on_line(1.0)]).unwrap();
    for n in 1..=3 {
        for m in 0..n {
            let r = eng.splitting_check(n, m, &grid).unwrap();
            assert!(r.max_error_ratio <= 10.0, "{r:?}");
            assert!(r.max_relative <= 1e-3, "{r:?}");
        }
    }
}
