use super::{BarrierCase, BarrierSpec, DEFAULT_C_DELTA};
use crate::error::Result;
use crate::exact::make_params;

/// One row of the shipped constants table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShippedConstants {
    pub case: BarrierCase,
    pub p: f64,
    pub eps: f64,
    pub c0: f64,
    pub k: f64,
    pub delta: f64,
    pub eta: f64,
}

/// Output of the constant search for `n = 2`, `c_delta = 0.01`, density 64.
/// `examples/barrier_table.rs` regenerates it together with
/// `data/barrier_constants.json`, which also holds the search traces.
#[rustfmt::skip]
pub const SHIPPED: &[ShippedConstants] = &[
    ShippedConstants { case: BarrierCase::A, p: 0.3, eps: 0.005, c0: 0.1778279410038923, k: 2.8333333333333326, delta: 0.013999999999999999, eta: 0.15 },
    ShippedConstants { case: BarrierCase::A, p: 0.3, eps: 0.01, c0: 0.31622776601683794, k: 2.8333333333333326, delta: 0.006999999999999999, eta: 0.15 },
    // A, p = 0.3, eps = 0.02: search exhausted.
    ShippedConstants { case: BarrierCase::A, p: 0.5, eps: 0.005, c0: 0.5623413251903491, k: 2.1000000000000005, delta: 0.02, eta: 0.15 },
    ShippedConstants { case: BarrierCase::A, p: 0.5, eps: 0.01, c0: 0.31622776601683794, k: 1.5000000000000004, delta: 0.027999999999999997, eta: 0.15 },
    ShippedConstants { case: BarrierCase::A, p: 0.5, eps: 0.02, c0: 0.31622776601683794, k: 1.5000000000000004, delta: 0.02, eta: 0.15 },
    ShippedConstants { case: BarrierCase::A, p: 0.8, eps: 0.005, c0: 1.7782794100389228, k: 1.4999999999999998, delta: 0.02, eta: 0.15 },
    ShippedConstants { case: BarrierCase::A, p: 0.8, eps: 0.01, c0: 1.0, k: 1.4999999999999998, delta: 0.04, eta: 0.15 },
    ShippedConstants { case: BarrierCase::A, p: 0.8, eps: 0.02, c0: 0.31622776601683794, k: 0.7499999999999999, delta: 0.08, eta: 0.15 },
    ShippedConstants { case: BarrierCase::B, p: 0.3, eps: 0.005, c0: 1.0, k: 3.9666666666666655, delta: 0.013999999999999999, eta: 0.15 },
    ShippedConstants { case: BarrierCase::B, p: 0.3, eps: 0.01, c0: 1.7782794100389228, k: 5.666666666666665, delta: 0.013999999999999999, eta: 0.15 },
    ShippedConstants { case: BarrierCase::B, p: 0.3, eps: 0.02, c0: 3.1622776601683795, k: 5.666666666666665, delta: 0.02, eta: 0.15 },
    ShippedConstants { case: BarrierCase::B, p: 0.5, eps: 0.005, c0: 1.0, k: 3.000000000000001, delta: 0.013999999999999999, eta: 0.15 },
    ShippedConstants { case: BarrierCase::B, p: 0.5, eps: 0.01, c0: 1.0, k: 2.1000000000000005, delta: 0.02, eta: 0.15 },
    ShippedConstants { case: BarrierCase::B, p: 0.5, eps: 0.02, c0: 5.623413251903491, k: 3.000000000000001, delta: 0.02, eta: 0.15 },
    ShippedConstants { case: BarrierCase::B, p: 0.8, eps: 0.005, c0: 5.623413251903491, k: 1.4999999999999998, delta: 0.006999999999999999, eta: 0.15 },
    ShippedConstants { case: BarrierCase::B, p: 0.8, eps: 0.01, c0: 3.1622776601683795, k: 1.0499999999999998, delta: 0.013999999999999999, eta: 0.15 },
    ShippedConstants { case: BarrierCase::B, p: 0.8, eps: 0.02, c0: 5.623413251903491, k: 1.4999999999999998, delta: 0.02, eta: 0.15 },
];

/// Spec for a shipped row, if one matches `(case, p, eps)`.
pub fn shipped_constants(case: BarrierCase, p: f64, eps: f64) -> Option<Result<BarrierSpec>> {
    SHIPPED.iter().find(|r| r.case == case && r.p == p && r.eps == eps).map(|r| {
        let q = make_params(r.p)?;
        BarrierSpec::new(r.case, q, 2, r.eps, r.c0, r.k, r.delta, r.eta, DEFAULT_C_DELTA)
    })
}
