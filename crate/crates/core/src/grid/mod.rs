//! Uniform isotropic grids in two or three dimensions, vector-valued grid
//! functions, finite-difference stencils and ball quadrature.
//!
//! Nodes are ordered row-major: axis 0 varies slowest, the last axis fastest.
//! Every reduction in this crate walks nodes in that order.

mod quadrature;
mod vfg;

pub use quadrature::{ball_quadrature, BallQuadrature};
pub use vfg::{parse_vfg1, read_vfg1, write_csv_slice, write_vfg1, write_vfg1_string};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FbError, Result};
use crate::exact::{HalfSpaceSolution, OdeProfile};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    origin: Vec<f64>,
    extent: Vec<f64>,
    h: f64,
    shape: Vec<usize>,
}

impl Grid {
    /// Builds a grid with `shape[i] = round(extent[i]/h) + 1`.
    pub fn new(origin: Vec<f64>, extent: Vec<f64>, h: f64) -> Result<Self> {
        let n = origin.len();
        if !(2..=MAX_DIM).contains(&n) || extent.len() != n {
            return Err(FbError::Grid(format!("dimension must be 2 or 3 (origin {n}, extent {})", extent.len())));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(FbError::Grid(format!("spacing must be positive, got {h}")));
        }
        if origin.iter().chain(&extent).any(|v| !v.is_finite()) || extent.iter().any(|&e| e <= 0.0) {
            return Err(FbError::Grid("origin must be finite and extents positive".into()));
        }
        if extent.iter().any(|e| !((e / h).round() < 1e9)) {
            return Err(FbError::Grid(format!("grid too large: extent {extent:?} at spacing {h}")));
        }
        let shape: Vec<usize> = extent.iter().map(|e| (e / h).round() as usize + 1).collect();
        Self::check_shape(&shape)?;
        Ok(Self { n, origin, extent, h, shape })
    }

    /// Grid from node counts; the extent is `(shape - 1) h`.
    pub fn from_shape(origin: Vec<f64>, shape: Vec<usize>, h: f64) -> Result<Self> {
        let n = origin.len();
        if !(2..=MAX_DIM).contains(&n) || shape.len() != n {
            return Err(FbError::Grid("dimension must be 2 or 3".into()));
        }
        if !(h > 0.0) || !h.is_finite() || origin.iter().any(|v| !v.is_finite()) {
            return Err(FbError::Grid("invalid origin or spacing".into()));
        }
        Self::check_shape(&shape)?;
        let extent: Vec<f64> = shape.iter().map(|&s| (s - 1) as f64 * h).collect();
        if origin.iter().zip(&extent).any(|(o, e)| !(o + e).is_finite()) {
            return Err(FbError::Grid("grid extent overflows".into()));
        }
        Ok(Self { n, origin, extent, h, shape })
    }

    /// The cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64, h: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi - lo; n], h)
    }

    fn check_shape(shape: &[usize]) -> Result<()> {
        if shape.iter().any(|&s| s < 2) {
            return Err(FbError::Grid(format!("need at least 2 nodes per axis, got {shape:?}")));
        }
        let total = shape.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
        match total {
            Some(t) if t <= 200_000_000 => Ok(()),
            _ => Err(FbError::Grid(format!("grid too large: {shape:?}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn extent(&self) -> &[f64] {
        &self.extent
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn num_nodes(&self) -> usize {
        self.shape.iter().product()
    }
    /// Nodes along the last axis; a "row" is a contiguous run of this length.
    pub fn row_len(&self) -> usize {
        self.shape[self.n - 1]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.origin[axis] + (self.shape[axis] - 1) as f64 * self.h
    }

    pub fn strides(&self) -> [usize; MAX_DIM] {
        let mut s = [0; MAX_DIM];
        let mut acc = 1;
        for k in (0..self.n).rev() {
            s[k] = acc;
            acc *= self.shape[k];
        }
        s
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        let s = self.strides();
        multi.iter().enumerate().map(|(k, &i)| i * s[k]).sum()
    }

    pub fn multi(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for k in (0..self.n).rev() {
            out[k] = idx % self.shape[k];
            idx /= self.shape[k];
        }
        out
    }

    pub fn coords(&self, idx: usize) -> [f64; MAX_DIM] {
        let m = self.multi(idx);
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.n {
            x[k] = self.origin[k] + m[k] as f64 * self.h;
        }
        x
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let m = self.multi(idx);
        (0..self.n).any(|k| m[k] == 0 || m[k] + 1 == self.shape[k])
    }

    /// Whether `x` lies in the closed bounding box.
    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        (0..self.n).all(|k| x[k] >= self.origin[k] - slack && x[k] <= self.upper(k) + slack)
    }

    /// Node index nearest to `x`, clamped to the grid.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut multi = [0; MAX_DIM];
        for k in 0..self.n {
            let i = ((x[k] - self.origin[k]) / self.h).round();
            multi[k] = i.clamp(0.0, (self.shape[k] - 1) as f64) as usize;
        }
        self.index(&multi[..self.n])
    }

    /// Range of node indices along `axis` whose coordinate lies in `[lo, hi]`.
    pub fn axis_range(&self, axis: usize, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = ((lo - self.origin[axis]) / self.h).ceil().max(0.0) as usize;
        let b = ((hi - self.origin[axis]) / self.h).floor();
        if b < 0.0 {
            return 0..0;
        }
        let b = (b as usize).min(self.shape[axis] - 1);
        if a > b {
            0..0
        } else {
            a..b + 1
        }
    }

    /// Visits every node in the axis-aligned box `[lo, hi]` in row-major order.
    pub fn for_each_in_box(&self, lo: &[f64], hi: &[f64], mut f: impl FnMut(usize)) {
        let ranges: Vec<_> = (0..self.n).map(|k| self.axis_range(k, lo[k], hi[k])).collect();
        if ranges.iter().any(|r| r.is_empty()) {
            return;
        }
        let mut multi = [0usize; MAX_DIM];
        for k in 0..self.n {
            multi[k] = ranges[k].start;
        }
        loop {
            f(self.index(&multi[..self.n]));
            let mut k = self.n;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                multi[k] += 1;
                if multi[k] < ranges[k].end {
                    break;
                }
                multi[k] = ranges[k].start;
            }
        }
    }

    /// `sum_i f(i)` over all nodes with a fixed association order: each row
    /// is summed left to right (rows in parallel), then the row totals are
    /// added in row order. The result does not depend on the thread count.
    pub fn ordered_sum(&self, f: impl Fn(usize) -> f64 + Sync) -> f64 {
        let len = self.row_len();
        let rows = self.num_nodes() / len;
        let partial: Vec<f64> = (0..rows)
            .into_par_iter()
            .map(|r| (r * len..(r + 1) * len).map(&f).sum())
            .collect();
        partial.iter().sum()
    }

    /// Same origin and extent with spacing `h/2`.
    pub fn refined(&self) -> Self {
        let shape = self.shape.iter().map(|s| 2 * (s - 1) + 1).collect();
        Self::from_shape(self.origin.clone(), shape, self.h / 2.0).expect("refinement of a valid grid")
    }
}

/// `m`-component grid function; values are stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub m: usize,
    pub values: Vec<f64>,
    pub boundary_mask: Vec<bool>,
}

impl VectorField {
    pub fn zeros(grid: Grid, m: usize) -> Self {
        let nn = grid.num_nodes();
        let boundary_mask = (0..nn).map(|i| grid.is_boundary(i)).collect();
        Self { grid, m, values: vec![0.0; nn * m], boundary_mask }
    }

    pub fn from_values(grid: Grid, m: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || values.len() != grid.num_nodes() * m {
            return Err(FbError::Grid(format!(
                "expected {} values for m = {m}, got {}",
                grid.num_nodes() * m,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FbError::NonFinite { node: pos / m });
        }
        let mut f = Self::zeros(grid, m);
        f.values = values;
        Ok(f)
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.m..(i + 1) * self.m]
    }

    #[inline]
    pub fn norm_at(&self, i: usize) -> f64 {
        self.node(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn modulus(&self) -> Vec<f64> {
        (0..self.num_nodes()).map(|i| self.norm_at(i)).collect()
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.m).copied().collect()
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Multilinear interpolation at `x`; `None` outside the grid box.
    pub fn interpolate(&self, x: &[f64], out: &mut [f64]) -> Option<()> {
        let g = &self.grid;
        let n = g.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for k in 0..n {
            let s = (x[k] - g.origin[k]) / g.h;
            let last = (g.shape[k] - 1) as f64;
            if !(s >= -1e-9 && s <= last + 1e-9) {
                return None;
            }
            let mut s = s.clamp(0.0, last);
            if (s - s.round()).abs() < 1e-9 {
                s = s.round();
            }
            let i = (s.floor() as usize).min(g.shape[k] - 2);
            base[k] = i;
            frac[k] = s - i as f64;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        let strides = g.strides();
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = 0;
            for k in 0..n {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                idx += (base[k] + bit) * strides[k];
            }
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.node(idx)) {
                *o += w * v;
            }
        }
        Some(())
    }
}

/// Pointwise sources accepted by [`sample_exact`].
pub enum FieldSource<'a> {
    HalfSpace(&'a HalfSpaceSolution),
    /// `u_lambda(<x,e> + shift) f`, with `u_lambda` evenly extended.
    Profile {
        profile: &'a OdeProfile,
        e: Vec<f64>,
        f: Vec<f64>,
        shift: f64,
    },
    Custom {
        m: usize,
        rule: &'a (dyn Fn(&[f64], &mut [f64]) + Sync),
    },
}

impl FieldSource<'_> {
    fn components(&self) -> usize {
        match self {
            FieldSource::HalfSpace(h) => h.components(),
            FieldSource::Profile { f, .. } => f.len(),
            FieldSource::Custom { m, .. } => *m,
        }
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FieldSource::HalfSpace(h) => h.eval_into(x, out),
            FieldSource::Profile { profile, e, f, shift } => {
                let t: f64 = x.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() + shift;
                let (u, _) = profile.eval(t);
                for (o, fi) in out.iter_mut().zip(f) {
                    *o = u * fi;
                }
            }
            FieldSource::Custom { rule, .. } => rule(x, out),
        }
    }
}

/// Node-wise evaluation of `source` on `grid`.
pub fn sample_exact(grid: &Grid, source: &FieldSource<'_>) -> Result<VectorField> {
    let m = source.components();
    if m == 0 {
        return Err(FbError::Grid("source has no components".into()));
    }
    if let FieldSource::HalfSpace(h) = source {
        if h.dim() != grid.dim() {
            return Err(FbError::Grid("half-space dimension does not match grid".into()));
        }
    }
    let mut field = VectorField::zeros(grid.clone(), m);
    let n = grid.dim();
    field.values.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
        let x = grid.coords(i);
        source.eval(&x[..n], out);
    });
    if let Some(pos) = field.values.iter().position(|v| !v.is_finite()) {
        return Err(FbError::NonFinite { node: pos / m });
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    Laplacian,
    Gradient,
}

fn check_diff_grid(grid: &Grid) -> Result<()> {
    if grid.shape().iter().any(|&s| s < 3) {
        return Err(FbError::Grid(format!("need at least 3 nodes per axis, got {:?}", grid.shape())));
    }
    Ok(())
}

/// `2n+1`-point Laplacian at interior nodes; boundary nodes are left at 0.
pub fn laplacian(field: &VectorField) -> Result<VectorField> {
    let g = &field.grid;
    check_diff_grid(g)?;
    let m = field.m;
    let n = g.dim();
    let strides = g.strides();
    let inv_h2 = 1.0 / (g.h() * g.h());
    let mut out = VectorField::zeros(g.clone(), m);
    out.values.par_chunks_mut(m).enumerate().for_each(|(i, o)| {
        if field.boundary_mask[i] {
            return;
        }
        for c in 0..m {
            let center = field.values[i * m + c];
            let mut acc = -2.0 * n as f64 * center;
            for &s in &strides[..n] {
                acc += field.values[(i + s) * m + c] + field.values[(i - s) * m + c];
            }
            o[c] = acc * inv_h2;
        }
    });
    Ok(out)
}

/// Central-difference gradient per axis at interior nodes.
pub fn gradient(field: &VectorField) -> Result<Vec<VectorField>> {
    let g = &field.grid;
    check_diff_grid(g)?;
    let m = field.m;
    let strides = g.strides();
    let inv_2h = 0.5 / g.h();
    Ok((0..g.dim())
        .map(|k| {
            let mut out = VectorField::zeros(g.clone(), m);
            let s = strides[k];
            out.values.par_chunks_mut(m).enumerate().for_each(|(i, o)| {
                if field.boundary_mask[i] {
                    return;
                }
                for c in 0..m {
                    o[c] = (field.values[(i + s) * m + c] - field.values[(i - s) * m + c]) * inv_2h;
                }
            });
            out
        })
        .collect())
}

pub fn diff(field: &VectorField, which: DiffOp) -> Result<Vec<VectorField>> {
    match which {
        DiffOp::Laplacian => Ok(vec![laplacian(field)?]),
        DiffOp::Gradient => gradient(field),
    }
}

/// Gradient at a node used by the energy quadrature: central differences,
/// one-sided towards the positive neighbour at edges of the positivity set,
/// one-sided inward on the box faces, and zero at dead nodes.
pub fn node_gradient_sq(field: &VectorField, i: usize) -> f64 {
    let g = &field.grid;
    let m = field.m;
    let u = field.node(i);
    if u.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let multi = g.multi(i);
    let strides = g.strides();
    let h = g.h();
    let mut acc = 0.0;
    for k in 0..g.dim() {
        let s = strides[k];
        let has_lo = multi[k] > 0;
        let has_hi = multi[k] + 1 < g.shape()[k];
        let lo = has_lo.then(|| field.node(i - s));
        let hi = has_hi.then(|| field.node(i + s));
        let dead = |v: &[f64]| v.iter().all(|&x| x == 0.0);
        for c in 0..m {
            let d = match (lo, hi) {
                (Some(l), Some(r)) => {
                    if dead(l) && !dead(r) {
                        (r[c] - u[c]) / h
                    } else if dead(r) && !dead(l) {
                        (u[c] - l[c]) / h
                    } else {
                        (r[c] - l[c]) / (2.0 * h)
                    }
                }
                (None, Some(r)) => (r[c] - u[c]) / h,
                (Some(l), None) => (u[c] - l[c]) / h,
                (None, None) => 0.0,
            };
            acc += d * d;
        }
    }
    acc
}
