use fkoc_core::expr::Expr;
use fkoc_core::grid::product_weights_left;
use fkoc_core::kernel::series_reciprocal;
use fkoc_core::ocp::{self, FbsOptions, OcProblem};
use fkoc_core::operators::{self, build_caputo, build_integral};
use fkoc_core::{AnalyticKernel, CScalar, GridFunction, OperatorKind, Side, TimeGrid};
use proptest::prelude::*;

fn real(v: f64) -> CScalar {
    CScalar::new(v, 0.0)
}

fn kernel() -> impl Strategy<Value = AnalyticKernel> {
    (
        0.2f64..=1.0,
        0.3f64..1.5,
        prop::collection::vec(0.0f64..1.0, 1..5),
    )
        .prop_map(|(alpha, beta, c)| {
            let coeffs = c
                .into_iter()
                .enumerate()
                .map(|(i, v)| real(if i == 0 { 0.5 + v } else { v }))
                .collect();
            AnalyticKernel::new(coeffs, f64::INFINITY, alpha, real(beta)).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn caputo_annihilates_constants(k in kernel(), c in -50.0f64..50.0) {
        let g = TimeGrid::new(0.0, 1.0, 33).unwrap();
        let x = GridFunction::from_real(g, |_| c).unwrap();
        for side in [Side::Left, Side::Right] {
            let y = build_caputo(&g, &k, side).unwrap().apply(&x).unwrap();
            prop_assert!(y.sup_norm() < 1e-12);
        }
    }

    #[test]
    fn combine_is_affine_in_gamma(k in kernel(), gamma in 0.0f64..=1.0) {
        let g = TimeGrid::new(0.0, 1.0, 17).unwrap();
        let at = |gm| operators::build(&g, &k, OperatorKind::CombinedInt, gm).unwrap().matrix;
        let expected = at(1.0).lincomb(gamma, &at(0.0), 1.0 - gamma);
        prop_assert_eq!(at(gamma), expected);
    }

    #[test]
    fn weights_are_nonnegative_for_nonnegative_kernels(k in kernel(), row in 1usize..33) {
        let g = TimeGrid::new(0.0, 1.0, 33).unwrap();
        let w = product_weights_left(&g, &k, row).unwrap();
        prop_assert!(w.iter().all(|v| v.re >= -1e-15 && v.im.abs() < 1e-15));
    }

    #[test]
    fn reciprocal_series_inverts(c in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..12)) {
        let mut c: Vec<CScalar> = c.into_iter().map(|(a, b)| CScalar::new(a, b)).collect();
        c[0] += 2.0;
        let d = series_reciprocal(&c).unwrap();
        for k in 0..c.len() {
            let s: CScalar = (0..=k).map(|n| c[n] * d[k - n]).sum();
            let target = if k == 0 { 1.0 } else { 0.0 };
            prop_assert!((s - target).norm() < 1e-10);
        }
    }

    #[test]
    fn integral_is_linear(k in kernel(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = TimeGrid::new(0.0, 1.0, 33).unwrap();
        let op = build_integral(&g, &k, Side::Right).unwrap();
        let x = GridFunction::from_real(g, f64::sin).unwrap();
        let y = GridFunction::from_real(g, |t| t * t).unwrap();
        let z = GridFunction::from_real(g, |t| a * t.sin() + b * t * t).unwrap();
        let (ox, oy, oz) = (op.apply(&x).unwrap(), op.apply(&y).unwrap(), op.apply(&z).unwrap());
        for i in 0..g.n() {
            let lin = ox.values()[i] * a + oy.values()[i] * b;
            prop_assert!((oz.values()[i] - lin).norm() < 1e-12 * (1.0 + a.abs() + b.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// The sweep is an ascent method on the discrete objective.
    #[test]
    fn sweep_objective_never_decreases(a in -1.0f64..1.0, q in 0.5f64..2.0, x0 in -1.0f64..1.0) {
        let k = AnalyticKernel::rl_constant(0.7, real(1.0)).unwrap();
        let l = Expr::parse(&format!("-({q})*x^2 - u^2")).unwrap();
        let f = Expr::parse(&format!("({a})*x + u")).unwrap();
        let p = OcProblem::new(0.0, 1.0, k, 1.0, l, f, x0).unwrap();
        let g = p.grid(65).unwrap();
        let s = ocp::solve_fbs(&p, &GridFunction::zeros(g), FbsOptions::default()).unwrap();
        for w in s.objective.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()));
        }
        let r = ocp::evaluate_extremal(&p, &s.candidate).unwrap();
        prop_assert!(r.r_state < 1e-9 && r.r_adjoint < 1e-9 && r.r_optimality < 1e-6);
    }
}
