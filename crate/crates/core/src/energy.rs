//! Discrete energies, the Weiss functional and the proximal map of the
//! p-power potential.

use serde::{Deserialize, Serialize};

use crate::error::{FbError, Result};
use crate::exact::PParams;
use crate::grid::{ball_quadrature, node_gradient_sq, Grid, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    pub potential: f64,
    /// `(2/p) |u|^2` in place of `(2/p) |u|^p`.
    pub tilde_potential: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    /// `dirichlet + tilde_potential`.
    pub fn tilde_total(&self) -> f64 {
        self.dirichlet + self.tilde_potential
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeissRecord {
    pub r: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub volume_part: f64,
    pub surface_part: f64,
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_radius(field: &VectorField, r: f64) -> Result<()> {
    let h = field.grid.h();
    if r < 4.0 * h - 1e-12 {
        return Err(FbError::Geometry(format!("radius {r} is below 4h = {}", 4.0 * h)));
    }
    Ok(())
}

/// Quadrature of `|grad u|^2`, `(2/p)|u|^p` and `(2/p)|u|^2` over `B_r(x0)`.
pub fn energy_local(field: &VectorField, x0: &[f64], r: f64, params: &PParams) -> Result<EnergyBreakdown> {
    check_radius(field, r)?;
    let q = ball_quadrature(&field.grid, x0, r)?;
    let two_p = 2.0 / params.p;
    let mut e = EnergyBreakdown::default();
    for &(i, w) in &q.interior {
        let s = field.norm_at(i);
        e.dirichlet += w * node_gradient_sq(field, i);
        e.potential += w * two_p * s.powf(params.p);
        e.tilde_potential += w * two_p * s * s;
    }
    e.total = e.dirichlet + e.potential;
    Ok(e)
}

/// `W(u, x0, r) = r^-(n + 2 kappa - 2) [ E(u, x0, r) - (kappa/r) int_{dB_r} |u|^2 ]`.
pub fn weiss(field: &VectorField, x0: &[f64], r: f64, params: &PParams) -> Result<WeissRecord> {
    let e = energy_local(field, x0, r, params)?;
    let q = ball_quadrature(&field.grid, x0, r)?;
    let surface_part = q.integrate_surface(|i| {
        let u = field.node(i);
        u.iter().map(|v| v * v).sum()
    });
    let n = field.grid.dim() as f64;
    let scale = r.powf(-(n + 2.0 * params.kappa - 2.0));
    Ok(WeissRecord {
        r,
        w: scale * (e.total - params.kappa / r * surface_part),
        volume_part: e.total,
        surface_part,
    })
}

/// `sum_edges w_e h^(n-2) |u_j - u_i|^2` over a node-major buffer.
pub(crate) fn edge_dirichlet(g: &Grid, m: usize, u: &[f64]) -> f64 {
    let n = g.dim();
    let strides = g.strides();
    let hn2 = g.h().powi(n as i32 - 2);
    g.ordered_sum(|i| {
        let multi = g.multi(i);
        let mut acc = 0.0;
        for k in 0..n {
            if multi[k] + 1 >= g.shape()[k] {
                continue;
            }
            let j = i + strides[k];
            let mut w = hn2;
            for a in 0..n {
                if a != k && (multi[a] == 0 || multi[a] + 1 == g.shape()[a]) {
                    w *= 0.5;
                }
            }
            let mut d2 = 0.0;
            for c in 0..m {
                let d = u[j * m + c] - u[i * m + c];
                d2 += d * d;
            }
            acc += w * d2;
        }
        acc
    })
}

/// Trapezoid weight of a node: `h^n` halved once per box face it lies on.
pub(crate) fn node_weight(grid: &Grid, i: usize) -> f64 {
    let multi = grid.multi(i);
    let mut w = grid.h().powi(grid.dim() as i32);
    for k in 0..grid.dim() {
        if multi[k] == 0 || multi[k] + 1 == grid.shape()[k] {
            w *= 0.5;
        }
    }
    w
}

/// The discrete energy minimized by the solver.
///
/// Dirichlet part: `sum_edges w_e h^(n-2) |u_j - u_i|^2` where an edge lying
/// in a box face is shared by fewer cells and gets weight 1/2 per such face.
/// Potential parts: trapezoid weights. Edges and nodes touching the interior
/// have full weight, so the gradient with respect to interior nodes is
/// `-2 h^n Lap_h u` plus the pointwise potential term.
pub fn discrete_energy(field: &VectorField, params: &PParams) -> EnergyBreakdown {
    let g = &field.grid;
    let two_p = 2.0 / params.p;
    let dirichlet = edge_dirichlet(g, field.m, &field.values);
    let potential = g.ordered_sum(|i| node_weight(g, i) * two_p * field.norm_at(i).powf(params.p));
    let tilde_potential = g.ordered_sum(|i| {
        let s = field.norm_at(i);
        node_weight(g, i) * two_p * s * s
    });
    EnergyBreakdown { dirichlet, potential, tilde_potential, total: dirichlet + potential }
}

/// Threshold data of the scalar prox at step `tau`:
/// `(s_crit, s_bar, z_star)`.
///
/// `s_crit` minimizes `g(s) = s + 2 tau s^(p-1)`; below `g(s_crit)` there is
/// no positive critical point. `z_star` is the input where the nonzero branch
/// and zero tie, and `s_bar` the output magnitude just above it.
pub fn prox_threshold(p: f64, tau: f64) -> (f64, f64, f64) {
    let s_crit = (2.0 * tau * (1.0 - p)).powf(1.0 / (2.0 - p));
    let s_bar = (4.0 * tau * (1.0 - p) / p).powf(1.0 / (2.0 - p));
    let z_star = s_bar + 2.0 * tau * s_bar.powf(p - 1.0);
    (s_crit, s_bar, z_star)
}

/// `argmin_{s >= 0} (s - a)^2/(2 tau) + (2/p) s^p` for `a >= 0`.
///
/// Ties between the zero branch and the positive branch resolve to zero.
pub fn prox_scalar(p: f64, a: f64, tau: f64) -> f64 {
    if !(a > 0.0) {
        return 0.0;
    }
    let s_crit = (2.0 * tau * (1.0 - p)).powf(1.0 / (2.0 - p));
    let g = |s: f64| s + 2.0 * tau * s.powf(p - 1.0);
    if a < g(s_crit) {
        return 0.0;
    }
    // g is convex and increasing on [s_crit, inf); Newton from s = a >= root
    // decreases monotonically to the root.
    let mut s = a;
    for _ in 0..100 {
        let sp = s.powf(p - 1.0);
        let val = s + 2.0 * tau * sp - a;
        let der = 1.0 + 2.0 * tau * (p - 1.0) * sp / s;
        let next = (s - val / der).max(s_crit);
        let done = (next - s).abs() <= 1e-15 * s;
        s = next;
        if done {
            break;
        }
    }
    let phi_s = (s - a) * (s - a) / (2.0 * tau) + 2.0 / p * s.powf(p);
    let phi_0 = a * a / (2.0 * tau);
    if phi_s < phi_0 - 1e-14 * phi_0.max(1.0) {
        s
    } else {
        0.0
    }
}

/// Pointwise minimizer of `|v - z|^2/(2 tau) + (2/p)|v|^p`.
pub fn prox_p(params: &PParams, z: &[f64], tau: f64) -> Vec<f64> {
    let mut out = z.to_vec();
    prox_in_place(params.p, &mut out, tau);
    out
}

pub(crate) fn prox_in_place(p: f64, z: &mut [f64], tau: f64) {
    let a = norm(z);
    let s = prox_scalar(p, a, tau);
    if s == 0.0 {
        z.iter_mut().for_each(|v| *v = 0.0);
    } else {
        let scale = s / a;
        z.iter_mut().for_each(|v| *v *= scale);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subadditivity {
    pub holds: bool,
    /// `|v - w|^p - (|v|^p - |w|^p)`.
    pub margin: f64,
}

/// Checks `|v|^p - |w|^p <= |v - w|^p`.
pub fn subadditivity_check(v: &[f64], w: &[f64], params: &PParams) -> Subadditivity {
    let p = params.p;
    let diff: Vec<f64> = v.iter().zip(w).map(|(a, b)| a - b).collect();
    let margin = norm(&diff).powf(p) - (norm(v).powf(p) - norm(w).powf(p));
    Subadditivity { holds: margin >= -1e-15, margin }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::make_params;

    #[test]
    fn prox_basics() {
        let q = make_params(0.5).unwrap();
        assert_eq!(prox_p(&q, &[0.0, 0.0], 0.1), vec![0.0, 0.0]);
        assert_eq!(prox_p(&q, &[0.05], 0.1), vec![0.0]);
        let out = prox_p(&q, &[0.6, 0.8], 0.1);
        let s = norm(&out);
        assert!(s > 0.0);
        assert!((out[0] / s - 0.6).abs() < 1e-15 && (out[1] / s - 0.8).abs() < 1e-15);
        // Stationarity on the positive branch.
        assert!((s + 0.2 * s.powf(-0.5) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn threshold_closed_form_is_a_tie() {
        for &(p, tau) in &[(0.3, 0.01), (0.5, 0.1), (0.8, 1.0)] {
            let (s_crit, s_bar, z) = prox_threshold(p, tau);
            assert!(s_bar > s_crit);
            let phi = (s_bar - z).powi(2) / (2.0 * tau) + 2.0 / p * s_bar.powf(p);
            assert!((phi - z * z / (2.0 * tau)).abs() < 1e-12 * phi);
            assert_eq!(prox_scalar(p, z * (1.0 - 1e-9), tau), 0.0);
            assert!(prox_scalar(p, z * (1.0 + 1e-9), tau) >= s_crit);
        }
    }

    #[test]
    fn discrete_energy_of_linear_field() {
        let g = Grid::cube(2, 0.0, 1.0, 0.125).unwrap();
        let mut f = VectorField::zeros(g.clone(), 1);
        for i in 0..g.num_nodes() {
            f.values[i] = g.coords(i)[1];
        }
        let q = make_params(0.5).unwrap();
        let e = discrete_energy(&f, &q);
        assert!((e.dirichlet - 1.0).abs() < 1e-12);
        // Trapezoid rule is exact for x^2 in one variable only up to O(h^2).
        assert!((e.tilde_potential - 4.0 / 3.0).abs() < 4.0 * 0.125 * 0.125);
    }

    #[test]
    fn zero_field_has_zero_energy() {
        let g = Grid::cube(2, -0.5, 0.5, 1.0 / 32.0).unwrap();
        let f = VectorField::zeros(g, 2);
        let q = make_params(0.5).unwrap();
        let e = energy_local(&f, &[0.0, 0.0], 0.3, &q).unwrap();
        assert_eq!(e, EnergyBreakdown::default());
        assert_eq!(weiss(&f, &[0.0, 0.0], 0.3, &q).unwrap().w, 0.0);
        assert!(energy_local(&f, &[0.0, 0.0], 0.1, &q).is_err());
    }
}
