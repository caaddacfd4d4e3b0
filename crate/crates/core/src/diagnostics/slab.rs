use serde::{Deserialize, Serialize};

use crate::error::{FbError, Result};
use crate::grid::Grid;
use crate::linalg::{fit_line, pcg};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabDecay {
    pub eps: f64,
    /// `sup_{B_1/2} w / sup_{B_1} w`.
    pub ratio: f64,
    /// `-eps ln(ratio)`, the constant this single run supports.
    pub c_local: f64,
    pub iterations: usize,
    pub unknowns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabFit {
    pub runs: Vec<SlabDecay>,
    /// `-slope` of `ln(ratio)` against `1/eps`.
    pub c: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Largest `c` with `ratio <= exp(-c/eps)` for every run.
    pub c_bound: f64,
}

/// Discrete harmonic `w` on `B_1 ∩ {|x_n| < eps}` with `w = 0` on
/// `{|x_n| >= eps}` and `w = 1` on the rest of `{|x| >= 1}`. The grid must
/// cover the unit cube `[-1, 1]^n`.
pub fn slab_decay_check(eps: f64, grid: &Grid) -> Result<SlabDecay> {
    let n = grid.dim();
    let h = grid.h();
    if !(eps >= 4.0 * h - 1e-12) {
        return Err(FbError::Domain(format!("slab half-width {eps} is below 4h = {}", 4.0 * h)));
    }
    for k in 0..n {
        if grid.origin()[k] > -1.0 + 1e-12 || grid.upper(k) < 1.0 - 1e-12 {
            return Err(FbError::Geometry("slab grid must cover [-1, 1]^n".into()));
        }
    }
    let tol = 1e-9 * h;
    // Dirichlet value of a node, or None for an unknown.
    let fixed = |x: &[f64]| -> Option<f64> {
        if x[n - 1].abs() >= eps - tol {
            Some(0.0)
        } else if x[..n].iter().map(|v| v * v).sum::<f64>() >= 1.0 - tol {
            Some(1.0)
        } else {
            None
        }
    };
    let lo: Vec<f64> = (0..n).map(|k| if k + 1 == n { -eps } else { -1.0 }).collect();
    let hi: Vec<f64> = lo.iter().map(|v| -v).collect();
    let mut nodes = Vec::new();
    grid.for_each_in_box(&lo, &hi, |i| {
        if fixed(&grid.coords(i)[..n]).is_none() {
            nodes.push(i);
        }
    });
    let slot: std::collections::HashMap<usize, usize> = nodes.iter().enumerate().map(|(s, &i)| (i, s)).collect();
    let strides = grid.strides();
    // Neighbour lists: unknown slot or fixed contribution to the right side.
    let mut nbrs: Vec<Vec<usize>> = Vec::with_capacity(nodes.len());
    let mut rhs = vec![0.0; nodes.len()];
    for (s, &i) in nodes.iter().enumerate() {
        let mut list = Vec::with_capacity(2 * n);
        for k in 0..n {
            for j in [i - strides[k], i + strides[k]] {
                match slot.get(&j) {
                    Some(&t) => list.push(t),
                    None => rhs[s] += fixed(&grid.coords(j)[..n]).unwrap_or(0.0),
                }
            }
        }
        nbrs.push(list);
    }
    let diag = vec![2.0 * n as f64; nodes.len()];
    let apply = |x: &[f64], y: &mut [f64]| {
        for (s, list) in nbrs.iter().enumerate() {
            y[s] = 2.0 * n as f64 * x[s] - list.iter().map(|&t| x[t]).sum::<f64>();
        }
    };
    let mut w = vec![0.0; nodes.len()];
    let (iterations, _) = pcg(apply, &diag, &rhs, &mut w, 1e-12, 20 * nodes.len() + 100)?;
    let mut sup_half: f64 = 0.0;
    for (s, &i) in nodes.iter().enumerate() {
        let x = grid.coords(i);
        if x[..n].iter().map(|v| v * v).sum::<f64>() <= 0.25 + tol {
            sup_half = sup_half.max(w[s]);
        }
    }
    // The lateral data make sup_{B_1} w = 1 whenever the slab reaches the sphere.
    let sup_one = w.iter().copied().fold(if nodes.is_empty() { 0.0 } else { 1.0 }, f64::max);
    let ratio = if sup_one > 0.0 { sup_half / sup_one } else { 0.0 };
    Ok(SlabDecay { eps, ratio, c_local: -eps * ratio.ln(), iterations, unknowns: nodes.len() })
}

/// Runs [`slab_decay_check`] for each `eps` and fits `ln ratio = a - c/eps`.
pub fn fit_slab_constant(eps_list: &[f64], grid: &Grid) -> Result<SlabFit> {
    if eps_list.len() < 2 {
        return Err(FbError::InsufficientData("need at least two slab widths".into()));
    }
    let runs = eps_list.iter().map(|&e| slab_decay_check(e, grid)).collect::<Result<Vec<_>>>()?;
    if runs.iter().any(|r| !(r.ratio > 0.0)) {
        return Err(FbError::DegenerateFit("slab ratio underflowed to zero".into()));
    }
    let x: Vec<f64> = runs.iter().map(|r| 1.0 / r.eps).collect();
    let y: Vec<f64> = runs.iter().map(|r| r.ratio.ln()).collect();
    let (intercept, slope, residual) = fit_line(&x, &y).ok_or_else(|| FbError::DegenerateFit("slab widths are not distinct".into()))?;
    let c_bound = runs.iter().map(|r| r.c_local).fold(f64::INFINITY, f64::min);
    Ok(SlabFit { runs, c: -slope, intercept, residual, c_bound })
}
