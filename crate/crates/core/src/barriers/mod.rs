//! Explicit radial comparison functions used to trap flat solutions between
//! shifted profiles, and their pointwise verification.
//!
//! Case A is the supersolution `(1 - c0 eps) u0(d)` with `d` the distance to a
//! large ball below the origin. Case B is the subsolution
//! `Psi(d) = u0(d) + eps K/C0 (d + d^2/2)` with `d` the signed distance to a
//! large ball above the origin. Both depend only on `|x'|` and `x_n`, so all
//! sampling happens in the meridian plane `(|x'|, x_n)`.

mod table;

pub use table::{shipped_constants, ShippedConstants, SHIPPED};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FbError, Result};
use crate::exact::{integrate_u_lambda, PParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierCase {
    A,
    B,
}

impl std::str::FromStr for BarrierCase {
    type Err = FbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            other => Err(FbError::Domain(format!("unknown barrier case {other:?}"))),
        }
    }
}

/// Barrier constants. `C0 = 2 K / c0` and `c1 = 1/(32 C0)` hold by
/// construction unless built with [`BarrierSpec::with_raw_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    case: BarrierCase,
    params: PParams,
    n: usize,
    eps: f64,
    c0: f64,
    k: f64,
    big_c0: f64,
    c1: f64,
    delta: f64,
    eta: f64,
    c_delta: f64,
}

/// `M = sup u0'/u0''` on `(0, 1]`.
pub fn ratio_bound(params: &PParams) -> f64 {
    params.ratio_bound()
}

impl BarrierSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        case: BarrierCase,
        params: PParams,
        n: usize,
        eps: f64,
        c0: f64,
        k: f64,
        delta: f64,
        eta: f64,
        c_delta: f64,
    ) -> Result<Self> {
        let big_c0 = 2.0 * k / c0;
        Self::with_raw_constants(case, params, n, eps, c0, k, big_c0, 1.0 / (32.0 * big_c0), delta, eta, c_delta)
    }

    /// Like [`BarrierSpec::new`] but with `C0` and `c1` given directly, for
    /// experiments that break the constant relations on purpose.
    #[allow(clippy::too_many_arguments)]
    pub fn with_raw_constants(
        case: BarrierCase,
        params: PParams,
        n: usize,
        eps: f64,
        c0: f64,
        k: f64,
        big_c0: f64,
        c1: f64,
        delta: f64,
        eta: f64,
        c_delta: f64,
    ) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(FbError::Domain(format!("barriers support n = 2, 3, got {n}")));
        }
        let positive = [eps, c0, k, big_c0, c1, delta, eta, c_delta];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(FbError::Domain("barrier constants must be positive and finite".into()));
        }
        if c0 * eps >= 1.0 {
            return Err(FbError::Domain(format!("c0 eps = {} must be below 1", c0 * eps)));
        }
        Ok(Self { case, params, n, eps, c0, k, big_c0, c1, delta, eta, c_delta })
    }

    pub fn case(&self) -> BarrierCase {
        self.case
    }
    pub fn params(&self) -> &PParams {
        &self.params
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn big_c0(&self) -> f64 {
        self.big_c0
    }
    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn c_delta(&self) -> f64 {
        self.c_delta
    }

    /// Both constant relations, compared bit for bit.
    pub fn relations_hold(&self) -> bool {
        let big_c0 = 2.0 * self.k / self.c0;
        self.big_c0 == big_c0 && self.c1 == 1.0 / (32.0 * big_c0)
    }

    fn radius(&self) -> f64 {
        self.big_c0 / self.eps
    }

    fn offset(&self) -> f64 {
        (1.0 - self.c1) * self.eps
    }

    /// Distance function in the meridian plane: exterior distance (Case A) or
    /// signed distance, positive inside (Case B). Written so that the large
    /// radius cancels analytically.
    fn dist(&self, rho: f64, xn: f64) -> f64 {
        let r = self.radius();
        let a = self.offset();
        match self.case {
            BarrierCase::A => {
                let s = xn + a;
                let num = rho * rho + s * s + 2.0 * r * s;
                (num / ((rho * rho + (s + r) * (s + r)).sqrt() + r)).max(0.0)
            }
            BarrierCase::B => {
                let s = xn - a;
                let num = -rho * rho - s * s + 2.0 * r * s;
                num / (r + (rho * rho + (s - r) * (s - r)).sqrt())
            }
        }
    }

    /// Laplacian of the distance as a function of `d`.
    fn lap_dist(&self, d: f64) -> f64 {
        let nm1 = (self.n - 1) as f64;
        match self.case {
            BarrierCase::A => nm1 / (self.radius() + d),
            BarrierCase::B => -nm1 / (self.radius() - d),
        }
    }

    fn lin(&self) -> f64 {
        self.eps * self.k / self.big_c0
    }

    /// Barrier as a function of `d`, with first and second derivatives
    /// (the second is `None` at the kink `d = 0`).
    fn profile(&self, d: f64) -> (f64, f64, Option<f64>) {
        let q = &self.params;
        match self.case {
            BarrierCase::A => {
                let s = 1.0 - self.c0 * self.eps;
                (s * q.u0(d), s * q.du0(d), q.ddu0(d).ok().map(|v| s * v))
            }
            BarrierCase::B => {
                let l = self.lin();
                let dd = if d > 0.0 { q.ddu0(d).ok().map(|v| v + l) } else if d < 0.0 { Some(l) } else { None };
                (q.u0(d) + l * (d + 0.5 * d * d), q.du0(d) + l * (1.0 + d), dd)
            }
        }
    }

    fn eval_meridian(&self, rho: f64, xn: f64) -> f64 {
        self.profile(self.dist(rho, xn)).0
    }

    /// Laplacian of the barrier at distance value `d`.
    fn laplacian_at(&self, d: f64) -> Option<f64> {
        let (_, d1, d2) = self.profile(d);
        d2.map(|v| v + self.lap_dist(d) * d1)
    }
}

/// Barrier value at `x` (any length `n` point; the last entry is `x_n`).
pub fn eval_barrier(spec: &BarrierSpec, x: &[f64]) -> f64 {
    let n = x.len();
    let rho = x[..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
    spec.eval_meridian(rho, x[n - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMargin {
    pub name: String,
    /// Smallest margin over the samples; positive means the condition holds.
    pub margin: f64,
    pub witness: Vec<f64>,
    pub samples: usize,
}

impl ConditionMargin {
    fn new(name: &str) -> Self {
        Self { name: name.into(), margin: f64::INFINITY, witness: Vec::new(), samples: 0 }
    }

    fn push(&mut self, margin: f64, witness: impl FnOnce() -> Vec<f64>) {
        self.samples += 1;
        if margin < self.margin || margin.is_nan() {
            self.margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
            self.witness = witness();
        }
    }

    pub fn holds(&self) -> bool {
        self.margin > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub spec: BarrierSpec,
    pub density: usize,
    pub conditions: Vec<ConditionMargin>,
    pub passed: bool,
}

impl BarrierReport {
    pub fn worst(&self) -> Option<&ConditionMargin> {
        self.conditions.iter().min_by(|a, b| a.margin.total_cmp(&b.margin))
    }
}

fn point(n: usize, rho: f64, xn: f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[0] = rho;
    x[n - 1] = xn;
    x
}

fn linspace(a: f64, b: f64, k: usize) -> impl Iterator<Item = f64> {
    (0..k).map(move |i| if k == 1 { a } else { a + (b - a) * i as f64 / (k - 1) as f64 })
}

/// Samples of `d` in `(lo, hi)` clustered geometrically at the end closest
/// to zero and uniform elsewhere.
fn distance_samples(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let mut out: Vec<f64> = linspace(lo, hi, k).collect();
    let near = if lo.abs() < hi.abs() { lo } else { hi };
    let far = if near == lo { hi } else { lo };
    let span = (far - near).abs();
    for i in 0..k {
        let t = span * 10f64.powf(-12.0 + 12.0 * i as f64 / k as f64);
        out.push(near + t * (far - near).signum());
    }
    out
}

/// Relative margin `1 - lhs/rhs` for `lhs < rhs` with `rhs > 0`.
fn rel(lhs: f64, rhs: f64) -> f64 {
    1.0 - lhs / rhs
}

/// Non-strict comparison `lhs <= rhs`; points where both vanish are skipped.
fn push_nonstrict(c: &mut ConditionMargin, lhs: f64, rhs: f64, witness: impl FnOnce() -> Vec<f64>) {
    if lhs == 0.0 && rhs == 0.0 {
        return;
    }
    c.push(rhs - lhs, witness);
}

/// Evaluates every barrier condition on sample points and reports the
/// smallest margin of each. Never fails on a negative margin; see
/// [`verify_barrier`] for the checking form.
pub fn barrier_margins(spec: &BarrierSpec, density: usize) -> Result<BarrierReport> {
    if density < 32 {
        return Err(FbError::Domain(format!("sample density {density} is below 32")));
    }
    let conditions = match spec.case {
        BarrierCase::A => margins_a(spec, density),
        BarrierCase::B => margins_b(spec, density),
    };
    let passed = conditions.iter().all(ConditionMargin::holds);
    Ok(BarrierReport { spec: *spec, density, conditions, passed })
}

/// Like [`barrier_margins`] but fails with the worst condition when any
/// margin is not positive.
pub fn verify_barrier(spec: &BarrierSpec, density: usize) -> Result<BarrierReport> {
    let report = barrier_margins(spec, density)?;
    if let Some(w) = report.conditions.iter().filter(|c| !c.holds()).min_by(|a, b| a.margin.total_cmp(&b.margin)) {
        return Err(FbError::Verification { condition: w.name.clone(), margin: w.margin, witness: w.witness.clone() });
    }
    Ok(report)
}

fn margins_a(s: &BarrierSpec, k: usize) -> Vec<ConditionMargin> {
    let q = s.params;
    let (n, eps, delta) = (s.n, s.eps, s.delta);
    let a = s.offset();

    // Strict supersolution where positive, on every translate used by the
    // sliding argument: the cylinder |x'| < 1/2, -delta - 3/4 < x_n < delta + 1.
    let mut sup = ConditionMargin::new("supersolution");
    let d_max = s.dist(0.5, delta + 1.0);
    for d in distance_samples(0.0, d_max, 8 * k * k) {
        if d <= 0.0 {
            continue;
        }
        let (psi, _, _) = s.profile(d);
        if let Some(lap) = s.laplacian_at(d) {
            sup.push(rel(lap, psi.powf(q.p - 1.0)), || point(n, 0.0, d - a));
        }
    }

    let mut lateral = ConditionMargin::new("lateral");
    for xn in linspace(-delta, delta, 8 * k) {
        push_nonstrict(&mut lateral, q.u0(xn + eps), s.eval_meridian(0.5, xn), || point(n, 0.5, xn));
    }

    let mut top = ConditionMargin::new("top");
    for rho in linspace(0.0, 0.5, k) {
        let rhs = q.u0(delta + eps) - s.c_delta * eps;
        top.push(s.eval_meridian(rho, delta) - rhs, || point(n, rho, delta));
    }

    let mut improvement = ConditionMargin::new("improvement");
    let eta = s.eta;
    for rho in linspace(0.0, eta, k) {
        for xn in linspace(-eta, eta, 2 * k) {
            if rho * rho + xn * xn < eta * eta {
                let cap = q.u0(xn + (1.0 - 0.5 * s.c1) * eps);
                push_nonstrict(&mut improvement, s.eval_meridian(rho, xn), cap, || point(n, rho, xn));
            }
        }
    }

    let mut start = ConditionMargin::new("slide_start");
    for rho in linspace(0.0, 0.5, k) {
        for xn in linspace(-delta, delta, k) {
            start.push(s.eval_meridian(rho, xn + 1.0) - q.u0(xn + eps), || point(n, rho, xn));
        }
    }
    vec![sup, lateral, top, improvement, start]
}

fn margins_b(s: &BarrierSpec, k: usize) -> Vec<ConditionMargin> {
    let q = s.params;
    let (n, eps, delta) = (s.n, s.eps, s.delta);
    let a = s.offset();
    let eps3 = eps * eps * eps;

    let mut sub_pos = ConditionMargin::new("subsolution_positive");
    let mut sub_neg = ConditionMargin::new("subsolution_negative");
    let d_hi = s.dist(0.0, 0.75);
    let d_lo = s.dist(0.0, -0.75);
    for d in distance_samples(0.0, d_hi, 4 * k * k) {
        if d > 0.0 {
            let (psi, _, _) = s.profile(d);
            if let Some(lap) = s.laplacian_at(d) {
                sub_pos.push(lap / psi.powf(q.p - 1.0) - 1.0, || point(n, 0.0, d + a));
            }
        }
    }
    for d in distance_samples(d_lo, 0.0, 4 * k * k) {
        if d < 0.0 {
            if let Some(lap) = s.laplacian_at(d) {
                sub_neg.push(lap / s.lin(), || point(n, 0.0, d + a));
            }
        }
    }

    let mut monotone = ConditionMargin::new("monotone");
    let center = s.radius() + a;
    for rho in linspace(0.0, 0.75, k) {
        for xn in linspace(-0.75, 0.75, 2 * k) {
            if rho * rho + xn * xn < 0.5625 {
                let d = s.dist(rho, xn);
                let (_, d1, _) = s.profile(d);
                let dist_c = (rho * rho + (xn - center) * (xn - center)).sqrt();
                monotone.push(d1 * (center - xn) / dist_c, || point(n, rho, xn));
            }
        }
    }

    let mut lat_up = ConditionMargin::new("lateral_upper");
    if delta > eps {
        for xn in linspace(eps, delta, 8 * k).filter(|&x| x < delta) {
            lat_up.push(q.u0(xn - eps) - s.eval_meridian(0.5, xn), || point(n, 0.5, xn));
        }
    }
    let mut lat_neg = ConditionMargin::new("lateral_negative");
    for xn in linspace(-delta, eps.min(delta), 8 * k) {
        push_nonstrict(&mut lat_neg, s.eval_meridian(0.5, xn), -eps3, || point(n, 0.5, xn));
    }

    let mut top = ConditionMargin::new("top");
    for rho in linspace(0.0, 0.5, k) {
        let rhs = q.u0(delta - eps) + s.c_delta * eps;
        top.push(rhs - s.eval_meridian(rho, delta), || point(n, rho, delta));
    }

    let mut improvement = ConditionMargin::new("improvement");
    let eta = s.eta;
    let shift = (1.0 - 0.5 * s.c1) * eps;
    for rho in linspace(0.0, eta, k) {
        for xn in linspace(shift, eta, 2 * k) {
            if rho * rho + xn * xn < eta * eta {
                push_nonstrict(&mut improvement, q.u0(xn - shift), s.eval_meridian(rho, xn), || point(n, rho, xn));
            }
        }
    }

    let mut start = ConditionMargin::new("slide_start");
    for rho in linspace(0.0, 0.5, k) {
        for xn in linspace(-delta, delta, k) {
            start.push(-eps3 - s.eval_meridian(rho, xn - 2.0 * delta), || point(n, rho, xn));
        }
    }
    let mut out = vec![sub_pos, sub_neg, monotone, lat_neg, top, improvement, start];
    if lat_up.samples > 0 {
        out.insert(3, lat_up);
    }
    out
}

/// Smallest relative supersolution margin of `(1 - c0 eps) u_lambda(d)` over
/// the Case A sliding cylinder, where `u_lambda` solves the profile ODE with
/// `u(0) = lambda`, `u'(0) = 0`.
pub fn lambda_family_margin(spec: &BarrierSpec, lambda: f64, density: usize) -> Result<ConditionMargin> {
    if spec.case != BarrierCase::A {
        return Err(FbError::Domain("the positive family belongs to Case A".into()));
    }
    let q = spec.params;
    let d_max = spec.dist(0.5, spec.delta + 1.0);
    let prof = integrate_u_lambda(&q, lambda, d_max, d_max / (64.0 * density as f64))?;
    let scale = 1.0 - spec.c0 * spec.eps;
    let mut c = ConditionMargin::new("positive_family");
    for d in linspace(0.0, d_max, 8 * density * density) {
        let (u, du) = prof.eval(d);
        let ddu = prof.second_derivative(d);
        let lap = scale * (ddu + spec.lap_dist(d) * du);
        c.push(rel(lap, (scale * u).powf(q.p - 1.0)), || point(spec.n, 0.0, d - spec.offset()));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchAttempt {
    pub c0: f64,
    pub k: f64,
    pub delta: f64,
    pub eta: f64,
    pub passed: bool,
    pub worst_condition: usize,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSearch {
    pub spec: BarrierSpec,
    pub report: BarrierReport,
    pub trace: Vec<SearchAttempt>,
}

pub const ETA_CANDIDATES: [f64; 3] = [0.15, 0.1, 0.05];
pub const DEFAULT_C_DELTA: f64 = 0.01;
pub const DELTA_FACTORS: [f64; 9] = [4.0, 2.8, 2.0, 1.4, 1.0, 0.7, 0.5, 0.35, 0.25];
pub const K_FACTORS: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 0.7, 0.5];

/// Grid search over `(delta, K, c0, eta)`; returns the first constants whose
/// margins are all positive at `density`.
///
/// `delta` runs over `eps` times [`DELTA_FACTORS`], `K` over `M (n-1)` times
/// [`K_FACTORS`], `c0` over quarter decades from 10 down to `1e-3` and `eta`
/// over [`ETA_CANDIDATES`], in that nesting order. Factors of `K` below one
/// are tried last: `M` bounds `u0'/u0''` on all of `(0, 1]`, which is more
/// than the supersolution margin needs, and that margin is checked exactly.
pub fn find_constants(
    case: BarrierCase,
    params: &PParams,
    n: usize,
    eps: f64,
    c_delta: f64,
    density: usize,
) -> Result<ConstantSearch> {
    let k_base = ratio_bound(params) * (n - 1) as f64;
    let mut trace = Vec::new();
    for dm in DELTA_FACTORS {
        for km in K_FACTORS {
            // One block of (c0, eta) candidates is evaluated in parallel; the
            // first passing candidate in search order wins.
            let block: Vec<BarrierSpec> = (0..=16)
                .rev()
                .map(|j| 10f64.powf(-3.0 + 0.25 * j as f64))
                .filter(|c0| c0 * eps < 1.0)
                .flat_map(|c0| ETA_CANDIDATES.map(|eta| (c0, eta)))
                .map(|(c0, eta)| BarrierSpec::new(case, *params, n, eps, c0, k_base * km, dm * eps, eta, c_delta))
                .collect::<Result<_>>()?;
            let reports = block.par_iter().map(|spec| barrier_margins(spec, density)).collect::<Result<Vec<_>>>()?;
            for report in reports {
                let (wi, wm) = report
                    .conditions
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i, c.margin))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap_or((0, f64::INFINITY));
                let spec = report.spec;
                trace.push(SearchAttempt {
                    c0: spec.c0,
                    k: spec.k,
                    delta: spec.delta,
                    eta: spec.eta,
                    passed: report.passed,
                    worst_condition: wi,
                    worst_margin: wm,
                });
                if report.passed {
                    return Ok(ConstantSearch { spec, report, trace });
                }
            }
        }
    }
    Err(FbError::NoConstantsFound { eps, attempts: trace.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::make_params;

    fn spec(case: BarrierCase) -> BarrierSpec {
        let q = make_params(0.5).unwrap();
        BarrierSpec::new(case, q, 2, 0.01, 0.5, 3.0, 0.01, 0.15, DEFAULT_C_DELTA).unwrap()
    }

    #[test]
    fn values_at_reference_points() {
        let a = spec(BarrierCase::A);
        assert!(a.relations_hold());
        assert_eq!(eval_barrier(&a, &[0.0, -0.5]), 0.0);
        let b = spec(BarrierCase::B);
        let on_sphere = (1.0 - b.c1()) * b.eps();
        assert!(eval_barrier(&b, &[0.0, on_sphere]).abs() < 1e-15);
        assert!(eval_barrier(&b, &[0.0, on_sphere + 0.1]) > 0.0);
        assert!(eval_barrier(&b, &[0.0, on_sphere - 0.1]) < 0.0);
    }

    #[test]
    fn flattening_ball_approaches_profile() {
        let q = make_params(0.5).unwrap();
        let x = [0.1, 0.3];
        let mut last = f64::INFINITY;
        for eps in [0.02, 0.01, 0.005, 0.0025] {
            let s = BarrierSpec::new(BarrierCase::A, q, 2, eps, 0.5, 3.0, 0.01, 0.15, DEFAULT_C_DELTA).unwrap();
            let err = (eval_barrier(&s, &x) - q.u0(x[1])).abs();
            assert!(err < last);
            last = err;
        }
    }

    #[test]
    fn breaking_the_product_relation_fails_supersolution() {
        let q = make_params(0.5).unwrap();
        let k = ratio_bound(&q);
        let c0 = 0.5;
        let big_c0 = 0.1 * k / c0;
        let s = BarrierSpec::with_raw_constants(BarrierCase::A, q, 2, 0.01, c0, k, big_c0, 1.0 / (32.0 * big_c0), 0.01, 0.15, DEFAULT_C_DELTA)
            .unwrap();
        assert!(!s.relations_hold());
        match verify_barrier(&s, 32) {
            Err(FbError::Verification { condition, margin, witness }) => {
                assert_eq!(condition, "supersolution");
                assert!(margin <= 0.0 && witness.len() == 2);
            }
            other => panic!("expected a verification failure, got {other:?}"),
        }
    }

    #[test]
    fn shipped_rows_verify() {
        for row in SHIPPED {
            let s = shipped_constants(row.case, row.p, row.eps).unwrap().unwrap();
            assert!(s.relations_hold());
            verify_barrier(&s, 64).unwrap();
        }
    }

    #[test]
    fn low_density_rejected() {
        assert!(barrier_margins(&spec(BarrierCase::A), 16).is_err());
    }
}
