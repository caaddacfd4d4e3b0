use serde::{Deserialize, Serialize};

use super::{ball_nodes, check_ball, dot};
use crate::error::{FbError, Result};
use crate::exact::PParams;
use crate::grid::{gradient, VectorField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessFit {
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    /// `max |v(y) - u0(<y,e>) f|` over the rescaled unit ball.
    pub eps_sup: f64,
    /// Smallest `t` with `v = 0` on `{<y,e> < -t}`.
    pub eps_dead: f64,
    pub eps: f64,
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Rescaled samples `y = (x - x0)/r`, `v = u(x)/r^kappa` on the ball.
struct Rescaled {
    n: usize,
    m: usize,
    y: Vec<f64>,
    v: Vec<f64>,
}

impl Rescaled {
    fn new(field: &VectorField, params: &PParams, x0: &[f64], r: f64) -> Self {
        let g = &field.grid;
        let n = g.dim();
        let m = field.m;
        let scale = r.powf(-params.kappa);
        let mut y = Vec::new();
        let mut v = Vec::new();
        for i in ball_nodes(g, x0, r) {
            let x = g.coords(i);
            y.extend((0..n).map(|k| (x[k] - x0[k]) / r));
            v.extend(field.node(i).iter().map(|c| c * scale));
        }
        Self { n, m, y, v }
    }

    fn len(&self) -> usize {
        self.v.len() / self.m
    }

    fn errors(&self, params: &PParams, e: &[f64], f: &[f64]) -> (f64, f64) {
        let mut sup: f64 = 0.0;
        let mut dead: f64 = 0.0;
        for i in 0..self.len() {
            let y = &self.y[i * self.n..(i + 1) * self.n];
            let v = &self.v[i * self.m..(i + 1) * self.m];
            let t = dot(y, e);
            let prof = params.u0(t);
            let d2: f64 = v.iter().zip(f).map(|(a, b)| (a - prof * b).powi(2)).sum();
            sup = sup.max(d2.sqrt());
            if v.iter().any(|&c| c != 0.0) {
                dead = dead.max(-t);
            }
        }
        (sup, dead)
    }
}

fn unit(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let s = dot(&v, &v).sqrt();
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|c| *c /= s);
    Some(v)
}

fn direction(n: usize, angles: &[f64]) -> Vec<f64> {
    if n == 2 {
        vec![angles[0].cos(), angles[0].sin()]
    } else {
        let (th, ph) = (angles[0], angles[1]);
        vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
    }
}

fn angles_of(e: &[f64]) -> Vec<f64> {
    if e.len() == 2 {
        vec![e[1].atan2(e[0])]
    } else {
        vec![e[2].clamp(-1.0, 1.0).acos(), e[1].atan2(e[0])]
    }
}

fn golden(mut a: f64, mut b: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-10 {
            break;
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `(eps_sup, eps_dead)` of `field` on `B_r(x0)` for given directions.
pub fn flatness_error(field: &VectorField, params: &PParams, x0: &[f64], r: f64, e: &[f64], f: &[f64]) -> Result<(f64, f64)> {
    check_ball(&field.grid, x0, r)?;
    if e.len() != field.grid.dim() || f.len() != field.m {
        return Err(FbError::Domain("direction sizes do not match the field".into()));
    }
    Ok(Rescaled::new(field, params, x0, r).errors(params, e, f))
}

/// Best half-space fit on `B_r(x0)` after rescaling to the unit ball.
///
/// `f` is the normalized mean of `u/|u|` over nodes above the median of
/// `|u|`. `e` starts from the mean of `grad |u|` and from a sweep at 3 degree
/// spacing; the best candidate is refined by golden-section search on the
/// angles. The objective is `max(eps_sup, eps_dead)`.
pub fn fit_flatness(field: &VectorField, params: &PParams, x0: &[f64], r: f64) -> Result<FlatnessFit> {
    let g = &field.grid;
    check_ball(g, x0, r)?;
    let n = g.dim();
    let data = Rescaled::new(field, params, x0, r);
    let m = data.m;
    let norms: Vec<f64> = (0..data.len()).map(|i| dot(&data.v[i * m..(i + 1) * m], &data.v[i * m..(i + 1) * m]).sqrt()).collect();
    if norms.iter().all(|&s| s == 0.0) {
        return Err(FbError::DegenerateFit(format!("|u| vanishes on B_{r}({x0:?})")));
    }
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let pick = |thr: f64| -> Vec<f64> {
        let mut acc = vec![0.0; m];
        for (i, &s) in norms.iter().enumerate() {
            if s > thr {
                for c in 0..m {
                    acc[c] += data.v[i * m + c] / s;
                }
            }
        }
        acc
    };
    let mut acc = pick(median);
    if acc.iter().all(|&c| c == 0.0) {
        acc = pick(0.0);
    }
    let f = unit(acc).ok_or_else(|| FbError::DegenerateFit("mean direction of u vanishes".into()))?;

    let objective = |e: &[f64]| {
        let (s, d) = data.errors(params, e, &f);
        s.max(d)
    };

    // Gradient-average candidate.
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    if g.shape().iter().all(|&s| s >= 3) {
        let modulus = VectorField::from_values(g.clone(), 1, field.modulus())?;
        let grads = gradient(&modulus)?;
        let mut avg = vec![0.0; n];
        for i in super::ball_nodes(g, x0, r) {
            if !modulus.boundary_mask[i] {
                for k in 0..n {
                    avg[k] += grads[k].values[i];
                }
            }
        }
        if let Some(e) = unit(avg) {
            candidates.push(angles_of(&e));
        }
    }
    let step = 3f64.to_radians();
    if n == 2 {
        for k in 0..120 {
            candidates.push(vec![k as f64 * step]);
        }
    } else {
        for i in 0..=60 {
            for j in 0..120 {
                candidates.push(vec![i as f64 * step, j as f64 * step]);
                if i == 0 || i == 60 {
                    break;
                }
            }
        }
    }
    let mut best = candidates[0].clone();
    let mut best_val = f64::INFINITY;
    for c in &candidates {
        let v = objective(&direction(n, c));
        if v < best_val {
            best_val = v;
            best = c.clone();
        }
    }
    let rounds = if n == 2 { 1 } else { 3 };
    for _ in 0..rounds {
        for a in 0..best.len() {
            let mut trial = best.clone();
            let (ang, val) = golden(best[a] - step, best[a] + step, |t| {
                trial[a] = t;
                objective(&direction(n, &trial))
            });
            if val < best_val {
                best_val = val;
                best[a] = ang;
            }
        }
    }
    let e = direction(n, &best);
    let (eps_sup, eps_dead) = data.errors(params, &e, &f);
    Ok(FlatnessFit { e, f, eps_sup, eps_dead, eps: eps_sup.max(eps_dead), center: x0.to_vec(), radius: r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{make_params, HalfSpaceSolution};
    use crate::grid::{sample_exact, FieldSource, Grid};

    #[test]
    fn exact_sample_is_flat() {
        let q = make_params(0.5).unwrap();
        let h = 1.0 / 64.0;
        let g = Grid::cube(2, -0.5, 0.5, h).unwrap();
        let hs = HalfSpaceSolution::canonical(q, 2, 2, 0.0);
        let u = sample_exact(&g, &FieldSource::HalfSpace(&hs)).unwrap();
        let fit = fit_flatness(&u, &q, &[0.0, 0.0], 0.4).unwrap();
        assert!(fit.eps <= 2.0 * h.powf(q.kappa - 1.0), "{fit:?}");
        assert!((fit.e[1] - 1.0).abs() < 1e-6);
        assert!((fit.f[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_ball_is_degenerate() {
        let q = make_params(0.5).unwrap();
        let g = Grid::cube(2, -0.5, 0.5, 1.0 / 16.0).unwrap();
        let u = VectorField::zeros(g, 1);
        assert!(matches!(fit_flatness(&u, &q, &[0.0, 0.0], 0.3), Err(FbError::DegenerateFit(_))));
    }
}
