use super::*;
use crate::analysis::{check_condition, fit_affine_control, ControlPair, DEFAULT_ETAS};
use crate::grid::SpaceTimeGrid;
use crate::kernels::{KernelDensity, Potential, StateSpace};
use crate::quadrature::{Quadrature, QuadratureScheme, TimeRule};
use crate::series::{RecursionPlan, SeriesEngine};

fn order(b: f64) -> FracOrder<f64> {
    FracOrder::new(b).unwrap()
}

fn bumps() -> Vec<TestFunction<f64>> {
    [(-1.0, 1.0), (0.0, 2.0), (-3.0, -1.0)]
        .iter()
        .map(|&(a, b)| TestFunction::bump(a, b).unwrap())
        .collect()
}

fn engine(beta: f64, q: Potential<f64>, order: usize) -> SeriesEngine<f64> {
    SeriesEngine::new(
        &KernelDensity::beta(beta).unwrap(),
        &q,
        &StateSpace::single_point(),
        &RecursionPlan::with_order(order),
        &Quadrature::new(QuadratureScheme {
            time: TimeRule::JacobiWeighted { nodes: 24 },
            ..QuadratureScheme::default()
        })
        .unwrap(),
    )
    .unwrap()
}

#[test]
fn frac_order_is_open() {
    assert!(FracOrder::new(0.0).is_err());
    assert!(FracOrder::new(1.0).is_err());
    assert!(FracOrder::new(0.3).is_ok());
}

#[test]
fn indicator_integral_is_exact() {
    let sch = WeylScheme::default();
    for beta in [0.25, 0.5, 0.75] {
        let g1 = crate::special::gamma(beta + 1.0);
        for (a, b) in [(0.0f64, 1.0f64), (-0.5, 2.0)] {
            let psi = WeylInput::indicator(a, b);
            for s in [-3.0, -1.0, a, 0.5 * (a + b), b - 1e-3] {
                let exact = ((b - s).powf(beta) - (a - s).max(0.0).powf(beta)) / g1;
                let got = weyl_integral(&psi, order(beta), s, &sch).unwrap();
                assert!((got.value - exact).abs() <= 1e-10 * exact, "beta={beta} s={s}: {} vs {exact}", got.value);
                if s < a {
                    assert!(got.value >= (b - a) * (b - s).powf(beta - 1.0) / crate::special::gamma(beta));
                }
            }
        }
    }
    let v = weyl_integral(&WeylInput::indicator(0.0, 1.0), order(0.5), -1.0, &sch).unwrap().value;
    assert!((v - 0.467_389_1).abs() < 1e-6, "{v}");
    let zero = WeylInput::new(|_| 0.0, Some(0.0), Upper::Support(1.0));
    assert_eq!(weyl_integral(&zero, order(0.5), -1.0, &sch).unwrap().value, 0.0);
}

#[test]
fn decaying_integrand_is_truncated() {
    let sch = WeylScheme::default();
    // u² e^{-u} ≤ 4e^{-2} < 1
    let psi = WeylInput::new(|u: f64| if u > 0.0 { (-u).exp() } else { 0.0 }, Some(0.0), Upper::Decay {
        from: 0.0,
        c: 1.0,
        p: 2.0,
    });
    let r = weyl_integral(&psi, order(0.5), 0.0, &sch).unwrap();
    assert!((r.value - 1.0).abs() < 1e-8, "{r:?}");
    let open = WeylInput::new(|u: f64| (-u * u).exp(), None, Upper::Unknown);
    assert!(matches!(weyl_integral(&open, order(0.5), 0.0, &sch), Err(Error::CannotTruncate(_))));
}

#[test]
fn derivative_support_and_bounds() {
    let sch = WeylScheme::default();
    for phi in bumps() {
        let (a, b) = phi.support();
        for beta in [0.25, 0.5, 0.75] {
            let g = crate::special::gamma(1.0 - beta);
            assert_eq!(weyl_derivative(&phi, order(beta), b + 0.1, &sch).unwrap().value, 0.0);
            let global = phi.derivative_sup() * (b - a).powf(1.0 - beta) / ((1.0 - beta) * g);
            let decay = derivative_decay_constant(&phi, order(beta));
            for i in 0..40 {
                let s = a - 3.0 + i as f64 * (b - a + 3.0) / 40.0;
                let d = weyl_derivative(&phi, order(beta), s, &sch).unwrap().value;
                assert!(d.abs() <= global * (1.0 + 1e-9), "s={s}: {d} vs {global}");
                if s <= a - 1.0 {
                    assert!(d.abs() * (a - s).powf(beta + 1.0) <= decay * 1.01);
                }
            }
        }
    }
}

#[test]
fn bump_derivative_sup_is_attained() {
    let phi = TestFunction::bump(-1.0, 1.0).unwrap();
    let sampled = (0..=20000)
        .map(|i| phi.derivative(-1.0 + i as f64 * 1e-4).abs())
        .fold(0.0, f64::max);
    assert!(sampled <= phi.derivative_sup() && sampled > 0.9999 * phi.derivative_sup());
}

#[test]
fn left_inverse_on_bump_suite() {
    for phi in bumps() {
        let grid = default_s_grid(&phi);
        for beta in [0.25, 0.5, 0.75] {
            let r = left_inverse_residual(&phi, order(beta), &grid, &WeylScheme::default()).unwrap();
            assert!(r.max_residual <= 1e-3, "{}: beta={beta} {}", phi.label(), r.max_residual);
            let coarse = WeylScheme { panels: 2, nodes: 4 };
            let r1 = left_inverse_residual(&phi, order(beta), &grid, &coarse).unwrap().max_residual;
            let r2 = left_inverse_residual(&phi, order(beta), &grid, &coarse.refined()).unwrap().max_residual;
            assert!(r2 <= r1 / 4.0 || r2 < 1e-12, "{}: beta={beta}: {r1} -> {r2}", phi.label());
        }
    }
    let zero = TestFunction::zero(-1.0, 1.0).unwrap();
    let r = left_inverse_residual(&zero, order(0.5), &[-2.0, 0.0], &WeylScheme::default()).unwrap();
    assert_eq!(r.max_residual, 0.0);
}

#[test]
fn zero_potential_reproduces_left_inverse_bitwise() {
    let phi = TestFunction::bump(-1.0, 1.0).unwrap();
    let grid = default_s_grid(&phi);
    let eng = engine(0.5, Potential::zero(), 4);
    let cgrid = SpaceTimeGrid::times_only(vec![0.0, 1.0, 4.0]).unwrap();
    let cert = check_condition(&eng, &ControlPair::linear(0.1, 0.0).unwrap(), &cgrid).unwrap();
    let sch = WeylScheme::default();
    let plain = left_inverse_residual(&phi, order(0.5), &grid, &sch).unwrap();
    let pert = perturbed_inverse_residual(&phi, order(0.5), &eng, &cert, 4, &grid, &sch).unwrap();
    assert_eq!(plain.per_s, pert.per_s);
    assert_eq!(plain.max_residual.to_bits(), pert.max_residual.to_bits());
}

#[test]
fn perturbed_identity_with_constant_potential() {
    let phi = TestFunction::bump(-1.0, 1.0).unwrap();
    let grid = default_s_grid(&phi);
    let eng = engine(0.5, Potential::constant(0.2).unwrap(), 12);
    let cgrid = SpaceTimeGrid::times_only((0..=8).map(|i| i as f64 * 0.5).collect()).unwrap();
    let fit = fit_affine_control(&eng, &cgrid, &DEFAULT_ETAS).unwrap();
    assert!(fit.best.valid);
    let r = perturbed_inverse_residual(&phi, order(0.5), &eng, &fit.best, 12, &grid, &WeylScheme::default()).unwrap();
    assert!(r.max_residual <= 5e-3, "{r:?}");
    assert_eq!(r.envelope_violations, 0);
    assert!(r.envelope_ratio.unwrap() <= 1.0);
    // undersized certificates are refused
    let mut bad = fit.best.clone();
    bad.valid = false;
    assert!(matches!(
        perturbed_inverse_residual(&phi, order(0.5), &eng, &bad, 12, &grid, &WeylScheme::default()),
        Err(Error::NoCertificate(_))
    ));
}

#[test]
fn telescoping_identity_and_guard() {
    let phi = TestFunction::bump(0.0, 2.0).unwrap();
    let grid: Vec<f64> = (0..=8).map(|i| -1.0 + i as f64 * 0.375).collect();
    let eng = engine(0.5, Potential::constant(0.2).unwrap(), 8);
    let cgrid = SpaceTimeGrid::times_only((0..=8).map(|i| i as f64 * 0.5).collect()).unwrap();
    let cert = fit_affine_control(&eng, &cgrid, &DEFAULT_ETAS).unwrap().best;
    let sch = WeylScheme::default();
    let psi = derivative_input(&phi, order(0.5), &sch).unwrap();
    let rep = algebraic_identity_check(&phi, &psi, order(0.5), &eng, &cert, 8, &grid, &sch).unwrap();
    assert!(matches!(rep.guard, Guard::KernelMajorant { .. }), "{rep:?}");
    assert!(rep.premise < 1e-4, "{rep:?}");
    assert!(rep.perturbed < 5e-3, "{rep:?}");
    assert!(rep.resolvent < 5e-3, "{rep:?}");

    let flat = WeylInput::new(|u: f64| if u < 0.0 { 1.0 } else { 0.0 }, None, Upper::Support(0.0));
    let err = algebraic_identity_check(&phi, &flat, order(0.5), &eng, &cert, 8, &grid, &sch).unwrap_err();
    assert!(matches!(err, Error::Precondition(ref m) if m.contains("K1")), "{err}");
}

