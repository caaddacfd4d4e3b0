use serde::{Deserialize, Serialize};

use super::{ball_nodes, check_ball, extract_free_boundary};
use crate::energy::energy_local;
use crate::error::{FbError, Result};
use crate::exact::PParams;
use crate::grid::VectorField;
use crate::linalg::fit_line;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub kappa_hat: f64,
    pub radii: Vec<f64>,
    pub sups: Vec<f64>,
    /// RMS residual of the log-log regression.
    pub residual: f64,
    pub center: Vec<f64>,
    /// `None` when no interface lies within `2h` of the requested point.
    pub snap_distance: Option<f64>,
    pub boundary_point: bool,
}

/// Slope of `log sup_{B_r} |u|` against `log r`.
///
/// The center is snapped to the nearest interface midpoint when one lies
/// within `2h`; otherwise the fit runs at `x0` and is flagged as not a
/// boundary point.
pub fn fit_growth_exponent(field: &VectorField, x0: &[f64], radii: &[f64]) -> Result<ExponentFit> {
    let g = &field.grid;
    let n = g.dim();
    let h = g.h();
    if radii.len() < 5 {
        return Err(FbError::InsufficientData(format!("{} radii given, need at least 5", radii.len())));
    }
    if let Some(r) = radii.iter().find(|&&r| !(r >= 4.0 * h - 1e-12)) {
        return Err(FbError::Geometry(format!("radius {r} is below 4h = {}", 4.0 * h)));
    }
    let fb = extract_free_boundary(field, 0.0)?;
    let snap = fb.snap(x0).filter(|s| s.distance <= 2.0 * h);
    let center: Vec<f64> = match snap {
        Some(s) => s.point[..n].to_vec(),
        None => x0.to_vec(),
    };
    let mut sups = Vec::with_capacity(radii.len());
    for &r in radii {
        check_ball(g, &center, r)?;
        let s = ball_nodes(g, &center, r).into_iter().map(|i| field.norm_at(i)).fold(0.0, f64::max);
        if s == 0.0 {
            return Err(FbError::NotBoundaryPoint(format!("|u| vanishes on B_{r}({center:?})")));
        }
        sups.push(s);
    }
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
    let (_, slope, residual) = fit_line(&lx, &ly).ok_or_else(|| FbError::DegenerateFit("radii are not distinct".into()))?;
    Ok(ExponentFit {
        kappa_hat: slope,
        radii: radii.to_vec(),
        sups,
        residual,
        center,
        snap_distance: snap.map(|s| s.distance),
        boundary_point: snap.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    /// Smallest admissible constant over all tested pairs.
    pub c: f64,
    /// `(rho, r, ratio)` per pair.
    pub pairs: Vec<(f64, f64, f64)>,
}

/// Smallest `C` with `E~(rho) <= C [ (rho/r)^n E~(r) + r^n ]` over all pairs
/// `rho < r` of the given radii, where `E~` is the local energy with the
/// quadratic potential.
pub fn decay_check(field: &VectorField, params: &PParams, x0: &[f64], radii: &[f64]) -> Result<DecayCheck> {
    let n = field.grid.dim() as i32;
    let mut rs = radii.to_vec();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    let energies = rs
        .iter()
        .map(|&r| energy_local(field, x0, r, params).map(|e| e.tilde_total()))
        .collect::<Result<Vec<_>>>()?;
    let mut c: f64 = 0.0;
    let mut pairs = Vec::new();
    for i in 0..rs.len() {
        for j in i + 1..rs.len() {
            let (rho, r) = (rs[i], rs[j]);
            let ratio = energies[i] / ((rho / r).powi(n) * energies[j] + r.powi(n));
            c = c.max(ratio);
            pairs.push((rho, r, ratio));
        }
    }
    Ok(DecayCheck { c, pairs })
}
