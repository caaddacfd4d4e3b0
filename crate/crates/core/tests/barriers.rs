use fb_core::barriers::{
    barrier_margins, eval_barrier, find_constants, lambda_family_margin, shipped_constants, verify_barrier, BarrierCase,
    BarrierSpec, DEFAULT_C_DELTA, SHIPPED,
};
use fb_core::{make_params, FbError};
use proptest::prelude::*;

fn shipped(case: BarrierCase, p: f64, eps: f64) -> BarrierSpec {
    shipped_constants(case, p, eps).unwrap().unwrap()
}

#[test]
fn every_shipped_row_verifies() {
    assert_eq!(SHIPPED.len(), 17);
    for row in SHIPPED {
        let s = shipped(row.case, row.p, row.eps);
        let rep = verify_barrier(&s, 64).unwrap();
        assert!(rep.passed && rep.conditions.iter().all(|c| c.margin > 0.0 && c.samples > 0));
    }
    assert!(shipped_constants(BarrierCase::A, 0.3, 0.02).is_none());
}

#[test]
fn search_reproduces_the_table() {
    let q = make_params(0.5).unwrap();
    for case in [BarrierCase::A, BarrierCase::B] {
        let found = find_constants(case, &q, 2, 0.01, DEFAULT_C_DELTA, 64).unwrap();
        assert_eq!(found.spec, shipped(case, 0.5, 0.01));
        assert!(found.trace.last().unwrap().passed);
        assert!(found.trace[..found.trace.len() - 1].iter().all(|a| !a.passed));
    }
}

#[test]
fn small_product_breaks_case_a() {
    let s = shipped(BarrierCase::A, 0.5, 0.01);
    let q = *s.params();
    // C0 chosen so that c0 C0 = K / 2 < K.
    let big_c0 = 0.5 * s.k() / s.c0();
    let broken = BarrierSpec::with_raw_constants(
        BarrierCase::A,
        q,
        2,
        s.eps(),
        s.c0(),
        s.k(),
        big_c0,
        1.0 / (32.0 * big_c0),
        s.delta(),
        s.eta(),
        s.c_delta(),
    )
    .unwrap();
    assert!(broken.c0() * broken.big_c0() < broken.k());
    match verify_barrier(&broken, 64) {
        Err(FbError::Verification { margin, witness, .. }) => {
            assert!(margin < 0.0);
            assert_eq!(witness.len(), 2);
        }
        other => panic!("expected a failure, got {other:?}"),
    }
    let rep = barrier_margins(&broken, 64).unwrap();
    assert!(!rep.passed && rep.worst().unwrap().margin < 0.0);
}

#[test]
fn positive_family_is_a_supersolution() {
    for p in [0.3, 0.5, 0.8] {
        let s = shipped(BarrierCase::A, p, 0.01);
        for lambda in [1e-3, 1e-4] {
            let m = lambda_family_margin(&s, lambda, 32).unwrap();
            assert!(m.holds(), "p = {p}, lambda = {lambda}: {m:?}");
        }
    }
    let b = shipped(BarrierCase::B, 0.5, 0.01);
    assert!(lambda_family_margin(&b, 1e-3, 32).is_err());
}

#[test]
fn constants_are_validated() {
    let q = make_params(0.5).unwrap();
    assert!(BarrierSpec::new(BarrierCase::A, q, 4, 0.01, 0.5, 3.0, 0.01, 0.15, DEFAULT_C_DELTA).is_err());
    assert!(BarrierSpec::new(BarrierCase::A, q, 2, 0.01, 200.0, 3.0, 0.01, 0.15, DEFAULT_C_DELTA).is_err());
    assert!(BarrierSpec::new(BarrierCase::A, q, 2, -0.01, 0.5, 3.0, 0.01, 0.15, DEFAULT_C_DELTA).is_err());
    assert!("c".parse::<BarrierCase>().is_err());
}

/// Five-point Laplacian of the barrier at `x`, from point values only.
fn fd_laplacian(s: &BarrierSpec, x: [f64; 2], d: f64) -> f64 {
    let f = |a: f64, b: f64| eval_barrier(s, &[a, b]);
    (f(x[0] + d, x[1]) + f(x[0] - d, x[1]) + f(x[0], x[1] + d) + f(x[0], x[1] - d) - 4.0 * f(x[0], x[1])) / (d * d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn case_a_is_a_supersolution_by_finite_differences(rho in -0.5f64..0.5, xn in -0.3f64..0.7) {
        // Away from the kink, where the difference quotient is accurate.
        let s = shipped(BarrierCase::A, 0.5, 0.01);
        let v = eval_barrier(&s, &[rho, xn]);
        prop_assume!(v > 1e-2);
        let lap = fd_laplacian(&s, [rho, xn], 1e-4);
        prop_assert!(lap <= v.powf(s.params().p - 1.0) * (1.0 + 1e-4), "{lap} vs {}", v.powf(-0.5));
    }

    #[test]
    fn case_b_increases_upward(rho in -0.5f64..0.5, xn in -0.5f64..0.49, dx in 1e-3f64..1e-2) {
        let s = shipped(BarrierCase::B, 0.5, 0.01);
        prop_assert!(eval_barrier(&s, &[rho, xn + dx]) > eval_barrier(&s, &[rho, xn]));
    }

    #[test]
    fn barrier_is_axially_symmetric(rho in 0.0f64..0.5, phi in 0.0f64..std::f64::consts::TAU, xn in -0.5f64..0.5) {
        let q = make_params(0.5).unwrap();
        for case in [BarrierCase::A, BarrierCase::B] {
            let s = BarrierSpec::new(case, q, 3, 0.01, 0.5, 3.0, 0.02, 0.15, DEFAULT_C_DELTA).unwrap();
            let a = eval_barrier(&s, &[rho * phi.cos(), rho * phi.sin(), xn]);
            let b = eval_barrier(&s, &[rho, 0.0, xn]);
            prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }
}
