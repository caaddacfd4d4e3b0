use serde::{Deserialize, Serialize};

use super::{Grid, MAX_DIM};
use crate::error::{FbError, Result};

/// Node weights for `int_{B_r(x0)}` and `int_{dB_r(x0)}`.
///
/// Volume weights are `h^n` times the fraction of the node's cell inside the
/// ball (and inside the grid box). Surface weights are the share of the
/// annulus `r - h/2 < |x - x0| < r + h/2` carried by each cell, divided by
/// the annulus width `h`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallQuadrature {
    pub center: Vec<f64>,
    pub radius: f64,
    pub interior: Vec<(usize, f64)>,
    pub shell: Vec<(usize, f64)>,
}

impl BallQuadrature {
    pub fn volume(&self) -> f64 {
        self.interior.iter().map(|(_, w)| w).sum()
    }

    pub fn area(&self) -> f64 {
        self.shell.iter().map(|(_, w)| w).sum()
    }

    /// `sum_i w_i f(i)` over the interior list, in node order.
    pub fn integrate(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.interior.iter().map(|&(i, w)| w * f(i)).sum()
    }

    pub fn integrate_surface(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.shell.iter().map(|&(i, w)| w * f(i)).sum()
    }
}

/// Geometry slack: the ball may exceed the grid box by at most one spacing.
fn check_geometry(grid: &Grid, x0: &[f64], r: f64) -> Result<()> {
    if x0.len() != grid.dim() || x0.iter().any(|v| !v.is_finite()) {
        return Err(FbError::Geometry(format!("center {x0:?} does not match a {}-D grid", grid.dim())));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(FbError::Geometry(format!("radius must be positive, got {r}")));
    }
    let h = grid.h();
    for k in 0..grid.dim() {
        if x0[k] - r < grid.origin()[k] - h - 1e-12 || x0[k] + r > grid.upper(k) + h + 1e-12 {
            return Err(FbError::Geometry(format!(
                "ball B_{r}({x0:?}) exits the grid along axis {k} [{}, {}]",
                grid.origin()[k],
                grid.upper(k)
            )));
        }
    }
    Ok(())
}

struct CellClipper<'a> {
    grid: &'a Grid,
    center: &'a [f64],
    sub: usize,
}

impl CellClipper<'_> {
    /// Fraction of the cell around node `i` inside `B_radius` and the box.
    fn fraction(&self, x: &[f64], radius: f64) -> f64 {
        let g = self.grid;
        let n = g.dim();
        let h = g.h();
        let half = 0.5 * h;
        let mut near = 0.0;
        let mut far = 0.0;
        let mut clipped = false;
        for k in 0..n {
            let lo = x[k] - half;
            let hi = x[k] + half;
            if lo < g.origin()[k] - 1e-12 || hi > g.upper(k) + 1e-12 {
                clipped = true;
            }
            let d_lo = lo - self.center[k];
            let d_hi = hi - self.center[k];
            let nearest = if d_lo > 0.0 {
                d_lo
            } else if d_hi < 0.0 {
                d_hi
            } else {
                0.0
            };
            near += nearest * nearest;
            far += d_lo.abs().max(d_hi.abs()).powi(2);
        }
        let r2 = radius * radius;
        if near >= r2 {
            return 0.0;
        }
        if far <= r2 && !clipped {
            return 1.0;
        }
        let s = self.sub;
        let total = s.pow(n as u32);
        let mut inside = 0usize;
        let mut p = [0.0; MAX_DIM];
        for flat in 0..total {
            let mut rest = flat;
            let mut d2 = 0.0;
            let mut in_box = true;
            for k in 0..n {
                let j = rest % s;
                rest /= s;
                p[k] = x[k] - half + (j as f64 + 0.5) * h / s as f64;
                if p[k] < g.origin()[k] || p[k] > g.upper(k) {
                    in_box = false;
                }
                let d = p[k] - self.center[k];
                d2 += d * d;
            }
            if in_box && d2 < r2 {
                inside += 1;
            }
        }
        inside as f64 / total as f64
    }
}

pub fn ball_quadrature(grid: &Grid, x0: &[f64], r: f64) -> Result<BallQuadrature> {
    check_geometry(grid, x0, r)?;
    let n = grid.dim();
    let h = grid.h();
    let cell = h.powi(n as i32);
    let clipper = CellClipper { grid, center: x0, sub: if n == 2 { 16 } else { 8 } };
    let pad = r + 1.5 * h;
    let lo: Vec<f64> = x0.iter().map(|c| c - pad).collect();
    let hi: Vec<f64> = x0.iter().map(|c| c + pad).collect();
    let mut interior = Vec::new();
    let mut shell = Vec::new();
    let r_in = (r - 0.5 * h).max(0.0);
    let r_out = r + 0.5 * h;
    grid.for_each_in_box(&lo, &hi, |i| {
        let x = grid.coords(i);
        let w = clipper.fraction(&x[..n], r);
        if w > 0.0 {
            interior.push((i, w * cell));
        }
        let outer = clipper.fraction(&x[..n], r_out);
        if outer > 0.0 {
            let inner = if r_in > 0.0 { clipper.fraction(&x[..n], r_in) } else { 0.0 };
            let share = outer - inner;
            if share > 0.0 {
                shell.push((i, share * cell / h));
            }
        }
    });
    Ok(BallQuadrature { center: x0.to_vec(), radius: r, interior, shell })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{ball_measure, sphere_measure};

    #[test]
    fn measures_within_budget() {
        for &(n, h, r) in &[(2usize, 1.0 / 64.0, 0.3), (2, 1.0 / 128.0, 0.1), (3, 1.0 / 32.0, 0.3)] {
            let g = Grid::cube(n, -0.5, 0.5, h).unwrap();
            let x0 = vec![0.013; n];
            let q = ball_quadrature(&g, &x0, r).unwrap();
            let vol = ball_measure(n) * r.powi(n as i32);
            let area = sphere_measure(n - 1) * r.powi(n as i32 - 1);
            assert!((q.volume() - vol).abs() / vol < 2.0 * h / r, "volume n={n}");
            assert!((q.area() - area).abs() / area < 2.0 * h / r, "area n={n}");
        }
    }

    #[test]
    fn odd_moment_vanishes() {
        let g = Grid::cube(2, -0.5, 0.5, 1.0 / 64.0).unwrap();
        let q = ball_quadrature(&g, &[0.0, 0.0], 0.35).unwrap();
        let m1 = q.integrate(|i| g.coords(i)[1]);
        assert!(m1.abs() < 1e-12);
    }

    #[test]
    fn ball_outside_grid_is_geometry_error() {
        let g = Grid::cube(2, -0.5, 0.5, 1.0 / 32.0).unwrap();
        assert!(matches!(ball_quadrature(&g, &[0.4, 0.0], 0.3), Err(FbError::Geometry(_))));
        assert!(matches!(ball_quadrature(&g, &[0.0, 0.0], -1.0), Err(FbError::Geometry(_))));
    }
}
