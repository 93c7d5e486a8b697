use kernel_perturb::analysis::{envelope, product_bound, tail_sum, three_p_ratio, Triple};
use kernel_perturb::cli::{ExperimentConfig, KernelSpec, Table};
use kernel_perturb::kernels::{KernelDensity, Potential, State, StateSpace};
use kernel_perturb::quadrature::{Quadrature, QuadratureScheme, TimeRule};
use kernel_perturb::series::{beta_kernel_closed_form, beta_kernel_full_sum, RecursionPlan, SeriesEngine};
use proptest::prelude::*;

fn engine(beta: f64, q: Potential<f64>) -> SeriesEngine<f64> {
    SeriesEngine::new(
        &KernelDensity::beta(beta).unwrap(),
        &q,
        &StateSpace::single_point(),
        &RecursionPlan::with_order(4),
        &Quadrature::new(QuadratureScheme {
            time: TimeRule::JacobiWeighted { nodes: 24 },
            ..QuadratureScheme::default()
        })
        .unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // k_n is homogeneous of degree n in q
    #[test]
    fn scaling_covariance(beta in 0.2f64..0.8, c in 0.1f64..2.0, dt in 0.1f64..3.0, power in any::<bool>()) {
        let q = if power { Potential::power(beta, 0.5 * beta).unwrap() } else { Potential::constant(c).unwrap() };
        let (s, t) = if power { (-0.4 * dt, 0.6 * dt) } else { (0.0, dt) };
        let base = engine(beta, q.clone());
        let scaled = engine(beta, q.scaled(3.0).unwrap());
        let o = State::origin();
        for n in 1..=4 {
            let (a, _) = base.eval_kn(n, s, &o, t, &o).unwrap();
            let (b, _) = scaled.eval_kn(n, s, &o, t, &o).unwrap();
            let want = 3f64.powi(n as i32) * a;
            prop_assert!(a > 0.0);
            prop_assert!((b - want).abs() <= 1e-10 * want, "n={} {} vs {}", n, b, want);
        }
    }

    #[test]
    fn envelope_monotone(eta in 0.0f64..0.95, d_eta in 0.0f64..0.04, q in 0.0f64..5.0, dq in 0.0f64..1.0) {
        let e = envelope(eta, q).unwrap();
        prop_assert!(e >= 1.0);
        prop_assert!(envelope(eta + d_eta, q).unwrap() >= e);
        prop_assert!(envelope(eta, q + dq).unwrap() >= e);
    }

    // 1 + Σ_{n≤N} ∏(η+Q/k) + tail = envelope, with every part nonnegative
    #[test]
    fn envelope_splits_into_products_and_tail(eta in 0.0f64..0.9, q in 0.0f64..4.0, order in 0usize..30) {
        let partial: f64 = 1.0 + (1..=order).map(|n| product_bound(eta, q, n)).sum::<f64>();
        let tail = tail_sum(eta, q, order).unwrap();
        let env = envelope(eta, q).unwrap();
        prop_assert!(tail >= 0.0);
        prop_assert!(partial <= env * (1.0 + 1e-12));
        prop_assert!((partial + tail - env).abs() <= 1e-9 * env, "{} + {} vs {}", partial, tail, env);
    }

    #[test]
    fn beta_three_p_ratio_is_bounded(beta in 0.1f64..0.9, s in -2.0f64..2.0, a in 0.01f64..3.0, b in 0.01f64..3.0) {
        let k = KernelDensity::beta(beta).unwrap();
        let o = State::origin();
        let tr = Triple { s, x: o, u: s + a, z: o, t: s + a + b, y: o };
        let r = three_p_ratio(&k, &tr).unwrap();
        prop_assert!(r <= 2f64.powf(1.0 - beta) * (1.0 + 1e-12));
    }

    // truncated closed-form sums stay below the Mittag-Leffler total
    #[test]
    fn closed_form_partial_sums_approach_full_sum(beta in 0.25f64..0.9, q in 0.0f64..2.0, dt in 0.1f64..2.0) {
        let full = beta_kernel_full_sum(beta, q, 0.0, dt).unwrap();
        let mut acc = 0.0;
        for n in 0..400 {
            let term = beta_kernel_closed_form(beta, q, n, 0.0, dt).unwrap();
            acc += term;
            prop_assert!(acc <= full * (1.0 + 1e-10));
            if term < 1e-18 * acc {
                break;
            }
        }
        prop_assert!((acc - full).abs() <= 1e-8 * full, "{} vs {}", acc, full);
    }

    #[test]
    fn config_overrides_round_trip(beta in 0.01f64..0.99, t1 in 0.1f64..5.0) {
        let text = "command = \"threep\"\n[kernel]\nname = \"beta\"\nbeta = 0.5\n[grid]\ntimes = [0.0, 1.0]";
        let ovs = vec![format!("kernel.beta={beta:?}"), format!("grid.times=[0.0, {t1:?}, {:?}]", t1 * 2.0)];
        let cfg = ExperimentConfig::parse(text, &ovs).unwrap();
        prop_assert_eq!(cfg.kernel.clone(), Some(KernelSpec::Beta { beta }));
        let again = ExperimentConfig::parse(&cfg.to_toml().unwrap(), &[]).unwrap();
        prop_assert_eq!(cfg, again);
    }

    #[test]
    fn csv_cells_round_trip(rows in prop::collection::vec(prop::collection::vec(any::<f64>(), 3), 0..8)) {
        let mut t = Table::new(&["a", "b", "c"]);
        for r in &rows {
            t.push(r.clone());
        }
        let csv = t.to_csv_string().unwrap();
        for (line, row) in csv.lines().skip(1).zip(&rows) {
            for (cell, &v) in line.split(',').zip(row) {
                if v.is_finite() {
                    prop_assert_eq!(cell.parse::<f64>().unwrap().to_bits(), v.to_bits());
                } else {
                    prop_assert!(cell.is_empty());
                }
            }
        }
    }
}
