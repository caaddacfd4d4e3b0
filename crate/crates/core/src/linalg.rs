//! Small dense-vector helpers shared by the linear solvers. All reductions use
//! fixed chunking so results do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{FbError, Result};

const CHUNK: usize = 4096;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite operator. Stops when `|r| <= tol * |b|` (or `|r| <= tol` if
/// `b = 0`). Returns the iteration count and the residual history.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]) + Sync,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<(usize, Vec<f64>)> {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    r.par_iter_mut().enumerate().for_each(|(i, ri)| *ri = b[i] - ap[i]);
    let bnorm = dot(b, b).sqrt();
    let target = if bnorm > 0.0 { tol * bnorm } else { tol };
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![dot(&r, &r).sqrt()];
    if history[0] <= target {
        return Ok((0, history));
    }
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(FbError::NoConvergence { iterations: it, residual: *history.last().unwrap(), history });
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        let res = dot(&r, &r).sqrt();
        history.push(res);
        if !res.is_finite() {
            return Err(FbError::Diverged { iteration: it });
        }
        if res <= target {
            return Ok((it, history));
        }
        z.par_iter_mut().enumerate().for_each(|(i, zi)| *zi = r[i] / diag[i]);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(FbError::NoConvergence { iterations: max_iter, residual: *history.last().unwrap(), history })
}

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
pub(crate) fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    Some((icpt, slope, rms))
}
