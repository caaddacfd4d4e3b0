use serde::{Deserialize, Serialize};

use super::{ball_nodes, check_ball, dot, fit_flatness, snap_to_boundary};
use crate::error::{FbError, Result};
use crate::exact::PParams;
use crate::grid::{Grid, VectorField};
use crate::linalg::fit_line;

/// Hodograph transforms of the first component and of `|u|`.
/// `None` marks nodes outside `{|u| > 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hodograph {
    pub grid: Grid,
    pub eps: f64,
    /// `(u0^-1((u^1)^+) - <x,e>) / eps`.
    pub first: Vec<Option<f64>>,
    /// `(u0^-1(|u|) - <x,e>) / eps`.
    pub modulus: Vec<Option<f64>>,
}

impl Hodograph {
    /// `max - min` of `first` over the defined nodes of `B_r(x0)`.
    pub fn oscillation(&self, x0: &[f64], r: f64) -> Option<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in ball_nodes(&self.grid, x0, r) {
            if let Some(v) = self.first[i] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (hi >= lo).then_some(hi - lo)
    }
}

pub fn hodograph(field: &VectorField, params: &PParams, e: &[f64], eps: f64) -> Result<Hodograph> {
    if !(eps > 0.0) {
        return Err(FbError::Domain(format!("hodograph needs eps > 0, got {eps}")));
    }
    let g = &field.grid;
    if e.len() != g.dim() {
        return Err(FbError::Domain("direction has the wrong dimension".into()));
    }
    let n = g.dim();
    let mut first = vec![None; g.num_nodes()];
    let mut modulus = vec![None; g.num_nodes()];
    for i in 0..g.num_nodes() {
        let s = field.norm_at(i);
        if s > 0.0 {
            let t = dot(&g.coords(i)[..n], e);
            first[i] = Some((params.u0_inv_pos(field.node(i)[0]) - t) / eps);
            modulus[i] = Some((params.u0_inv_pos(s) - t) / eps);
        }
    }
    Ok(Hodograph { grid: g.clone(), eps, first, modulus })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapStep {
    pub k: usize,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSequence {
    pub center: Vec<f64>,
    pub snap_distance: f64,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub eta: f64,
    pub steps: Vec<TrapStep>,
    /// Why the sequence stopped before `K`, if it did.
    pub stopped: Option<String>,
}

impl TrapSequence {
    pub fn nested(&self) -> bool {
        self.steps.windows(2).all(|w| w[0].a <= w[1].a && w[1].a <= w[1].b && w[1].b <= w[0].b)
    }

    pub fn widths_decreasing(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].width < w[0].width)
    }
}

/// Tightest `(a, b)` with `u0(<x,e> + a) <= <u,f>^+` and `|u| <= u0(<x,e> + b)`
/// on the grid ball, plus the numbers of positive and dead nodes.
fn trap_bounds(field: &VectorField, params: &PParams, e: &[f64], f: &[f64], x0: &[f64], r: f64) -> (f64, f64, usize, usize) {
    let g = &field.grid;
    let n = g.dim();
    let mut a = f64::INFINITY;
    let mut b = f64::NEG_INFINITY;
    let (mut pos, mut dead) = (0, 0);
    for i in ball_nodes(g, x0, r) {
        let u = field.node(i);
        let t = dot(&g.coords(i)[..n], e);
        a = a.min(params.u0_inv_pos(dot(u, f)) - t);
        let s = field.norm_at(i);
        if s > 0.0 {
            pos += 1;
            b = b.max(params.u0_inv(s).unwrap_or(f64::INFINITY) - t);
        } else {
            dead += 1;
        }
    }
    (a, b, pos, dead)
}

/// Trap sequence on `B_{eta^k r0}(x0)`, `k = 0..=k_max`, with `e` and `f`
/// from [`fit_flatness`] on the largest ball. `a` and `b` are shifts in the
/// global coordinate `<x,e>`. `x0` is snapped to the nearest interface
/// midpoint first.
pub fn harnack_trap(field: &VectorField, params: &PParams, x0: &[f64], r0: f64, eta: f64, k_max: usize) -> Result<TrapSequence> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(FbError::Domain(format!("eta must lie in (0,1), got {eta}")));
    }
    let g = &field.grid;
    let n = g.dim();
    let h = g.h();
    let snap = snap_to_boundary(field, x0)?;
    if snap.distance > 2.0 * h {
        return Err(FbError::Hypothesis(format!("{x0:?} is {} away from the free boundary", snap.distance)));
    }
    let center = snap.point[..n].to_vec();
    check_ball(g, &center, r0)?;
    let fit = fit_flatness(field, params, &center, r0)?;
    let (a, b, pos, dead) = trap_bounds(field, params, &fit.e, &fit.f, &center, r0);
    if pos == 0 || dead == 0 {
        return Err(FbError::Hypothesis("ball does not meet both phases".into()));
    }
    if !(b - a < r0) {
        return Err(FbError::Hypothesis(format!("initial trap width {} is not below r0 = {r0}", b - a)));
    }
    let mut steps = vec![TrapStep { k: 0, r: r0, a, b, width: b - a }];
    let mut stopped = None;
    for k in 1..=k_max {
        let r = r0 * eta.powi(k as i32);
        let (a, b, pos, _) = trap_bounds(field, params, &fit.e, &fit.f, &center, r);
        if pos == 0 {
            stopped = Some(format!("no positive nodes in B_{r}"));
            break;
        }
        steps.push(TrapStep { k, r, a, b, width: b - a });
    }
    let seq = TrapSequence { center, snap_distance: snap.distance, e: fit.e, f: fit.f, eta, steps, stopped };
    debug_assert!(seq.nested());
    Ok(seq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationDecay {
    pub radii: Vec<f64>,
    pub oscillations: Vec<f64>,
    /// Fit `osc_k = c eta^(beta k)`.
    pub beta: f64,
    pub c: f64,
    pub residual: f64,
}

/// Oscillation of the first hodograph component over `B_{eta^k r0}(x0)`.
/// Radii whose oscillation vanishes, or that fall below `2h`, end the scan.
pub fn oscillation_decay(
    field: &VectorField,
    params: &PParams,
    x0: &[f64],
    r0: f64,
    eta: f64,
    k_max: usize,
    eps: f64,
) -> Result<OscillationDecay> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(FbError::Domain(format!("eta must lie in (0,1), got {eta}")));
    }
    check_ball(&field.grid, x0, r0)?;
    let fit = fit_flatness(field, params, x0, r0)?;
    let hod = hodograph(field, params, &fit.e, eps)?;
    let (mut ks, mut radii, mut osc) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..=k_max {
        let r = r0 * eta.powi(k as i32);
        if r < 2.0 * field.grid.h() {
            break;
        }
        match hod.oscillation(x0, r) {
            Some(o) if o > 0.0 => {
                ks.push(k as f64);
                radii.push(r);
                osc.push(o);
            }
            _ => break,
        }
    }
    if osc.len() < 3 {
        return Err(FbError::InsufficientData(format!("{} usable radii, need 3", osc.len())));
    }
    let logs: Vec<f64> = osc.iter().map(|o| o.ln()).collect();
    let (icpt, slope, residual) = fit_line(&ks, &logs).ok_or_else(|| FbError::DegenerateFit("oscillation fit".into()))?;
    Ok(OscillationDecay { radii, oscillations: osc, beta: slope / eta.ln(), c: icpt.exp(), residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{make_params, HalfSpaceSolution};
    use crate::grid::{sample_exact, FieldSource};

    #[test]
    fn exact_sample_has_constant_hodograph() {
        let q = make_params(0.5).unwrap();
        let g = Grid::cube(2, -0.5, 0.5, 1.0 / 32.0).unwrap();
        let hs = HalfSpaceSolution::canonical(q, 2, 2, 0.07);
        let u = sample_exact(&g, &FieldSource::HalfSpace(&hs)).unwrap();
        let hod = hodograph(&u, &q, &[0.0, 1.0], 0.1).unwrap();
        let mut seen = 0;
        for i in 0..g.num_nodes() {
            match (hod.first[i], hod.modulus[i]) {
                (Some(a), Some(b)) => {
                    assert!((a - 0.7).abs() < 1e-12, "{a}");
                    assert!(b >= a - 1e-12);
                    seen += 1;
                }
                (None, None) => assert_eq!(u.norm_at(i), 0.0),
                _ => panic!("mismatched definition sets"),
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn exact_trap_has_zero_width() {
        let q = make_params(0.5).unwrap();
        let h = 1.0 / 64.0;
        let g = Grid::cube(2, -0.5, 0.5, h).unwrap();
        let hs = HalfSpaceSolution::canonical(q, 2, 1, 0.1);
        let u = sample_exact(&g, &FieldSource::HalfSpace(&hs)).unwrap();
        let seq = harnack_trap(&u, &q, &[0.0, -0.1], 0.3, 0.5, 4).unwrap();
        assert!(seq.nested());
        for s in &seq.steps {
            assert!((s.a - 0.1).abs() < 1e-6 && (s.b - 0.1).abs() < 1e-6, "{s:?}");
        }
    }

    #[test]
    fn trap_rejects_interior_point() {
        let q = make_params(0.5).unwrap();
        let g = Grid::cube(2, -0.5, 0.5, 1.0 / 32.0).unwrap();
        let hs = HalfSpaceSolution::canonical(q, 2, 1, 0.1);
        let u = sample_exact(&g, &FieldSource::HalfSpace(&hs)).unwrap();
        assert!(matches!(harnack_trap(&u, &q, &[0.0, 0.3], 0.1, 0.5, 3), Err(FbError::Hypothesis(_))));
    }
}
