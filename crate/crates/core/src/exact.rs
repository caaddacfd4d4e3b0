//! Closed-form one-dimensional profile, the `u_lambda` ODE family, half-space
//! solutions and the half-space Weiss constant.
//!
//! The profile is `u0(t) = c_p (t^+)^kappa` with `kappa = 2/(2-p)` and
//! `c_p = [kappa (kappa - 1)]^(1/(p-2))`, which solves `u0'' = u0^(p-1)` on
//! `t > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{FbError, Result};

/// The exponent triple `(p, kappa, c_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PParams {
    pub p: f64,
    pub kappa: f64,
    pub c_p: f64,
}

/// Derivative order selector for [`u0`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
    Inverse,
}

impl Order {
    /// Maps the numeric order convention `{0, 1, 2, -1}`.
    pub fn from_code(code: i32) -> Result<Self> {
        match code {
            0 => Ok(Order::Value),
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            -1 => Ok(Order::Inverse),
            other => Err(FbError::Domain(format!("unsupported u0 order {other}"))),
        }
    }
}

pub fn make_params(p: f64) -> Result<PParams> {
    if !(p > 0.0 && p < 1.0) {
        return Err(FbError::Domain(format!("p must lie in (0,1), got {p}")));
    }
    let kappa = 2.0 / (2.0 - p);
    let c_p = (kappa * (kappa - 1.0)).powf(1.0 / (p - 2.0));
    Ok(PParams { p, kappa, c_p })
}

impl PParams {
    pub fn new(p: f64) -> Result<Self> {
        make_params(p)
    }

    #[inline]
    pub fn u0(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.c_p * t.powf(self.kappa)
        }
    }

    #[inline]
    pub fn du0(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.c_p * self.kappa * t.powf(self.kappa - 1.0)
        }
    }

    /// `u0''(t)`; only defined for `t > 0` (it blows up as `t -> 0+`).
    #[inline]
    pub fn ddu0(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Err(FbError::UndefinedPoint(t));
        }
        Ok(self.c_p * self.kappa * (self.kappa - 1.0) * t.powf(self.kappa - 2.0))
    }

    /// Inverse of `u0` restricted to `[0, inf)`.
    #[inline]
    pub fn u0_inv(&self, s: f64) -> Result<f64> {
        if s < 0.0 || !s.is_finite() {
            return Err(FbError::Domain(format!("u0^-1 needs s >= 0, got {s}")));
        }
        Ok((s / self.c_p).powf(1.0 / self.kappa))
    }

    /// `u0^-1(max(s, 0))`, the form used by hodograph transforms and traps.
    #[inline]
    pub fn u0_inv_pos(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            (s / self.c_p).powf(1.0 / self.kappa)
        }
    }

    /// Upper bound of `u0'/u0'' = t/(kappa-1)` on `(0, 1]`.
    pub fn ratio_bound(&self) -> f64 {
        1.0 / (self.kappa - 1.0)
    }
}

/// Evaluates `u0` or one of its derivatives / its inverse.
pub fn u0(params: &PParams, t: f64, order: Order) -> Result<f64> {
    match order {
        Order::Value => Ok(params.u0(t)),
        Order::First => Ok(params.du0(t)),
        Order::Second => params.ddu0(t),
        Order::Inverse => params.u0_inv(t),
    }
}

/// `c_p (<x,e> + a)_+^kappa f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceSolution {
    pub params: PParams,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub shift: f64,
}

const UNIT_TOL: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl HalfSpaceSolution {
    pub fn new(params: PParams, e: Vec<f64>, f: Vec<f64>, shift: f64) -> Result<Self> {
        if (norm(&e) - 1.0).abs() > UNIT_TOL {
            return Err(FbError::Domain(format!("|e| = {} is not 1", norm(&e))));
        }
        if (norm(&f) - 1.0).abs() > UNIT_TOL {
            return Err(FbError::Domain(format!("|f| = {} is not 1", norm(&f))));
        }
        if !shift.is_finite() {
            return Err(FbError::Domain("shift must be finite".into()));
        }
        Ok(Self { params, e, f, shift })
    }

    /// Half-space solution with `e = e_n`, `f = f^1`.
    pub fn canonical(params: PParams, n: usize, m: usize, shift: f64) -> Self {
        let mut e = vec![0.0; n];
        e[n - 1] = 1.0;
        let mut f = vec![0.0; m];
        f[0] = 1.0;
        Self { params, e, f, shift }
    }

    pub fn dim(&self) -> usize {
        self.e.len()
    }

    pub fn components(&self) -> usize {
        self.f.len()
    }

    /// Scalar profile value `c_p (<x,e> + a)_+^kappa`.
    #[inline]
    pub fn modulus(&self, x: &[f64]) -> f64 {
        let t: f64 = x.iter().zip(&self.e).map(|(a, b)| a * b).sum::<f64>() + self.shift;
        self.params.u0(t)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let s = self.modulus(x);
        for (o, fi) in out.iter_mut().zip(&self.f) {
            *o = s * fi;
        }
    }
}

pub fn half_space_eval(h: &HalfSpaceSolution, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; h.components()];
    h.eval_into(x, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeSample {
    pub t: f64,
    pub u: f64,
    pub du: f64,
}

/// Samples of `u_lambda`, the solution of `u'' = u^(p-1) chi_{u>0}`,
/// `u(0) = lambda`, `u'(0) = 0`, on `[0, t_max]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeProfile {
    pub params: PParams,
    pub lambda: f64,
    pub step: f64,
    pub samples: Vec<OdeSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Explicit midpoint, second order.
    Midpoint,
    /// Classical fourth-order Runge-Kutta.
    #[default]
    Rk4,
}

pub fn integrate_u_lambda(params: &PParams, lambda: f64, t_max: f64, step: f64) -> Result<OdeProfile> {
    integrate_u_lambda_with(params, lambda, t_max, step, Integrator::default())
}

pub fn integrate_u_lambda_with(
    params: &PParams,
    lambda: f64,
    t_max: f64,
    step: f64,
    integrator: Integrator,
) -> Result<OdeProfile> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(FbError::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(t_max > 0.0 && step > 0.0) || !t_max.is_finite() {
        return Err(FbError::Domain("t_max and step must be positive".into()));
    }
    let steps = (t_max / step).round().max(1.0) as usize;
    let h = t_max / steps as f64;
    let mut samples = Vec::with_capacity(steps + 1);

    if lambda == 0.0 {
        // u^(p-1) is unbounded at u = 0: use the closed form.
        for i in 0..=steps {
            let t = i as f64 * h;
            samples.push(OdeSample { t, u: params.u0(t), du: params.du0(t) });
        }
        return Ok(OdeProfile { params: *params, lambda, step: h, samples });
    }

    let p = params.p;
    let rhs = |u: f64| if u > 0.0 { u.powf(p - 1.0) } else { 0.0 };
    let (mut u, mut v) = (lambda, 0.0);
    samples.push(OdeSample { t: 0.0, u, du: v });
    for i in 1..=steps {
        match integrator {
            Integrator::Midpoint => {
                let a1 = rhs(u);
                let um = u + 0.5 * h * v;
                let vm = v + 0.5 * h * a1;
                let a2 = rhs(um);
                u += h * vm;
                v += h * a2;
            }
            Integrator::Rk4 => {
                let (k1u, k1v) = (v, rhs(u));
                let (k2u, k2v) = (v + 0.5 * h * k1v, rhs(u + 0.5 * h * k1u));
                let (k3u, k3v) = (v + 0.5 * h * k2v, rhs(u + 0.5 * h * k2u));
                let (k4u, k4v) = (v + h * k3v, rhs(u + h * k3u));
                u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            }
        }
        let t = i as f64 * h;
        if !u.is_finite() || !v.is_finite() {
            return Err(FbError::Integration { t });
        }
        samples.push(OdeSample { t, u, du: v });
    }
    Ok(OdeProfile { params: *params, lambda, step: h, samples })
}

impl OdeProfile {
    pub fn t_max(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Even extension across `t = 0`, cubic Hermite between samples.
    /// Beyond `t_max` the last sample is continued by its tangent line.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        let t = t.abs();
        let last = self.samples.len() - 1;
        if t >= self.samples[last].t {
            let s = self.samples[last];
            return (s.u + (t - s.t) * s.du, sign * s.du);
        }
        let i = ((t / self.step) as usize).min(last - 1);
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let u = h00 * a.u + h10 * h * a.du + h01 * b.u + h11 * h * b.du;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let du = d00 * a.u + d10 * a.du + d01 * b.u + d11 * b.du;
        (u, sign * du)
    }

    /// `u'' = u^(p-1)` at `t`.
    pub fn second_derivative(&self, t: f64) -> f64 {
        let (u, _) = self.eval(t);
        if u > 0.0 {
            u.powf(self.params.p - 1.0)
        } else {
            0.0
        }
    }

    /// Largest deviation of `(u')^2 - (2/p)(u^p - lambda^p)` over the samples.
    pub fn first_integral_defect(&self) -> f64 {
        let p = self.params.p;
        let lp = self.lambda.powf(p);
        self.samples
            .iter()
            .map(|s| (s.du * s.du - 2.0 / p * (s.u.powf(p) - lp)).abs())
            .fold(0.0, f64::max)
    }

    /// `sup |u_lambda - u0|` over samples with `t <= t_end`.
    pub fn sup_distance_to_u0(&self, t_end: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.t <= t_end + 1e-12)
            .map(|s| (s.u - self.params.u0(s.t)).abs())
            .fold(0.0, f64::max)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Surface measure of the unit sphere `S^k` in `R^(k+1)`.
pub fn sphere_measure(k: usize) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_measure(k - 2),
    }
}

/// Volume of the unit ball in `R^n`.
pub fn ball_measure(n: usize) -> f64 {
    sphere_measure(n - 1) / n as f64
}

/// `W(h, 0, r)` for a half-space solution through the origin, by polar
/// quadrature in the plane spanned by `e` and the transverse radius.
///
/// The integrand depends only on `<x,e>`, so the `n`-ball integral reduces to
/// the radius `R` and the angle `theta` from `e`; the angular variable is
/// substituted `theta = (pi/2)(1 - w^2)` to smooth the endpoint singularity
/// of `cos(theta)^(2 kappa - 2)` at `theta = pi/2`.
pub fn weiss_of_halfspace_at(params: &PParams, n: usize, r: f64, quad_points: usize) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    let (gx, gw) = gauss_legendre(quad_points);
    let PParams { p, kappa, c_p } = *params;
    let sphere = sphere_measure(n - 2);

    // Angular factors: int_0^{pi/2} cos^a(theta) sin^{n-2}(theta) dtheta.
    let angular = |a: f64| -> f64 {
        let mut acc = 0.0;
        for (xi, wi) in gx.iter().zip(&gw) {
            let w = 0.5 * (xi + 1.0);
            let theta = FRAC_PI_2 * (1.0 - w * w);
            let jac = std::f64::consts::PI * w * 0.5;
            let c = theta.cos();
            acc += wi * jac * c.powf(a) * theta.sin().powi(n as i32 - 2);
        }
        acc
    };

    // Volume: |grad h|^2 + (2/p)|h|^p, both functions of t = R cos(theta).
    let mut volume = 0.0;
    for (ri, rw) in gx.iter().zip(&gw) {
        let radius = 0.5 * r * (ri + 1.0);
        let rjac = 0.5 * r;
        let mut inner = 0.0;
        for (xi, wi) in gx.iter().zip(&gw) {
            let w = 0.5 * (xi + 1.0);
            let theta = FRAC_PI_2 * (1.0 - w * w);
            let jac = std::f64::consts::PI * w * 0.5;
            let t = radius * theta.cos();
            let grad = c_p * kappa * t.max(0.0).powf(kappa - 1.0);
            let val = c_p * t.max(0.0).powf(kappa);
            let integrand = grad * grad + 2.0 / p * val.powf(p);
            inner += wi * jac * integrand * theta.sin().powi(n as i32 - 2);
        }
        volume += rw * rjac * inner * radius.powi(n as i32 - 1);
    }
    volume *= sphere;

    // Surface: (kappa/r) int_{dB_r} |h|^2.
    let surface = kappa / r * sphere * r.powi(n as i32 - 1) * c_p * c_p * r.powf(2.0 * kappa) * angular(2.0 * kappa);

    (volume - surface) / r.powf(n as f64 + 2.0 * kappa - 2.0)
}

/// The half-space Weiss constant `omega_p = W(h, 0, 1)`.
pub fn weiss_of_halfspace(params: &PParams, n: usize, quad_points: usize) -> Result<f64> {
    if quad_points < 64 {
        return Err(FbError::Domain(format!("quad_points must be >= 64, got {quad_points}")));
    }
    if n < 2 {
        return Err(FbError::Domain(format!("dimension must be >= 2, got {n}")));
    }
    Ok(weiss_of_halfspace_at(params, n, 1.0, quad_points))
}
