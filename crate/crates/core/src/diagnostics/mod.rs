//! Measurements on computed or sampled fields: free boundary extraction,
//! flatness fits, hodograph transforms and trap sequences, growth exponents,
//! energy decay, blowups and the slab decay experiment.

mod blowup;
mod flatness;
mod growth;
mod slab;
mod trap;

pub use blowup::{blowup, halfspace_distance};
pub use flatness::{fit_flatness, flatness_error, FlatnessFit};
pub use growth::{decay_check, fit_growth_exponent, DecayCheck, ExponentFit};
pub use slab::{fit_slab_constant, slab_decay_check, SlabDecay, SlabFit};
pub use trap::{harnack_trap, hodograph, oscillation_decay, Hodograph, OscillationDecay, TrapSequence, TrapStep};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{FbError, Result};
use crate::grid::{Grid, VectorField, MAX_DIM};

/// Interface representation of `Gamma(u) = d{|u| > 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundary {
    pub dim: usize,
    /// Axis-aligned node pairs `(positive, zero)` straddling the interface.
    pub interface: Vec<(usize, usize)>,
    /// Crossing points of `|u| - threshold` along cell edges.
    pub vertices: Vec<[f64; MAX_DIM]>,
    /// Polyline pieces (n = 2).
    pub segments: Vec<[usize; 2]>,
    /// Triangle soup (n = 3).
    pub triangles: Vec<[usize; 3]>,
    /// Midpoints of the interface pairs, used for snapping.
    pub midpoints: Vec<[f64; MAX_DIM]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snap {
    pub point: [f64; MAX_DIM],
    pub distance: f64,
}

impl FreeBoundary {
    pub fn is_empty(&self) -> bool {
        self.interface.is_empty()
    }

    /// Nearest interface midpoint to `x`.
    pub fn snap(&self, x: &[f64]) -> Option<Snap> {
        let n = self.dim;
        self.midpoints
            .iter()
            .map(|m| {
                let d = (0..n).map(|k| (m[k] - x[k]).powi(2)).sum::<f64>().sqrt();
                Snap { point: *m, distance: d }
            })
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
    }

    /// Symmetric Hausdorff distance between the vertex set and the part of
    /// the hyperplane `<x,e> = c` inside `region` (an axis box `[lo, hi]`),
    /// the latter sampled at spacing `step`.
    pub fn hausdorff_to_hyperplane(&self, e: &[f64], c: f64, lo: &[f64], hi: &[f64], step: f64) -> f64 {
        let n = self.dim;
        let inside = |x: &[f64]| (0..n).all(|k| x[k] >= lo[k] - 1e-12 && x[k] <= hi[k] + 1e-12);
        let verts: Vec<&[f64; MAX_DIM]> = self.vertices.iter().filter(|v| inside(&v[..n])).collect();
        if verts.is_empty() {
            return f64::INFINITY;
        }
        let to_plane = verts
            .iter()
            .map(|v| ((0..n).map(|k| v[k] * e[k]).sum::<f64>() - c).abs())
            .fold(0.0, f64::max);
        // Sample the plane: solve for the coordinate along the largest |e_k|.
        let axis = (0..n).max_by(|&a, &b| e[a].abs().total_cmp(&e[b].abs())).unwrap();
        let others: Vec<usize> = (0..n).filter(|&k| k != axis).collect();
        let counts: Vec<usize> = others.iter().map(|&k| ((hi[k] - lo[k]) / step).floor() as usize + 1).collect();
        let total: usize = counts.iter().product();
        let mut worst: f64 = 0.0;
        let mut x = [0.0; MAX_DIM];
        for flat in 0..total {
            let mut rest = flat;
            let mut dot = 0.0;
            for (j, &k) in others.iter().enumerate() {
                let idx = rest % counts[j];
                rest /= counts[j];
                x[k] = lo[k] + idx as f64 * step;
                dot += x[k] * e[k];
            }
            x[axis] = (c - dot) / e[axis];
            if !inside(&x[..n]) {
                continue;
            }
            let d = verts
                .iter()
                .map(|v| (0..n).map(|k| (v[k] - x[k]).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            worst = worst.max(d);
        }
        to_plane.max(worst)
    }
}

struct Builder<'a> {
    grid: &'a Grid,
    level: Vec<f64>,
    vertex_of: HashMap<(usize, usize), usize>,
    vertices: Vec<[f64; MAX_DIM]>,
}

impl Builder<'_> {
    fn inside(&self, i: usize) -> bool {
        self.level[i] > 0.0
    }

    /// Crossing on the segment between nodes `a` and `b` (one inside).
    fn vertex(&mut self, a: usize, b: usize) -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&v) = self.vertex_of.get(&key) {
            return v;
        }
        let (pin, pout) = if self.inside(a) { (a, b) } else { (b, a) };
        let vi = self.level[pin];
        let vo = self.level[pout];
        let t = vi / (vi - vo);
        let xa = self.grid.coords(pin);
        let xb = self.grid.coords(pout);
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.grid.dim() {
            x[k] = xa[k] + t * (xb[k] - xa[k]);
        }
        let id = self.vertices.len();
        self.vertices.push(x);
        self.vertex_of.insert(key, id);
        id
    }
}

/// Extracts the interface of `{|u| > zero_threshold}` by linear
/// interpolation of `|u|`: marching squares in 2-D, marching tetrahedra in
/// 3-D (six tetrahedra per cube around the main diagonal).
pub fn extract_free_boundary(field: &VectorField, zero_threshold: f64) -> Result<FreeBoundary> {
    if field.values.iter().any(|v| !v.is_finite()) {
        return Err(FbError::NonFinite { node: field.values.iter().position(|v| !v.is_finite()).unwrap() / field.m });
    }
    let g = &field.grid;
    let n = g.dim();
    let strides = g.strides();
    let level: Vec<f64> = (0..g.num_nodes()).map(|i| field.norm_at(i) - zero_threshold).collect();
    let mut b = Builder { grid: g, level, vertex_of: HashMap::new(), vertices: Vec::new() };

    let mut interface = Vec::new();
    let mut midpoints = Vec::new();
    for i in 0..g.num_nodes() {
        let multi = g.multi(i);
        for k in 0..n {
            if multi[k] + 1 >= g.shape()[k] {
                continue;
            }
            let j = i + strides[k];
            if b.inside(i) != b.inside(j) {
                let pair = if b.inside(i) { (i, j) } else { (j, i) };
                interface.push(pair);
                let (xa, xb) = (g.coords(i), g.coords(j));
                let mut mid = [0.0; MAX_DIM];
                for a in 0..n {
                    mid[a] = 0.5 * (xa[a] + xb[a]);
                }
                midpoints.push(mid);
            }
        }
    }

    let mut segments = Vec::new();
    let mut triangles = Vec::new();
    let cells: Vec<usize> = (0..g.num_nodes())
        .filter(|&i| {
            let multi = g.multi(i);
            (0..n).all(|k| multi[k] + 1 < g.shape()[k])
        })
        .collect();
    if n == 2 {
        for &i in &cells {
            // Corners counter-clockwise: (0,0) (1,0) (1,1) (0,1) in (axis0, axis1).
            let c = [i, i + strides[0], i + strides[0] + strides[1], i + strides[1]];
            let mask: usize = (0..4).filter(|&q| b.inside(c[q])).map(|q| 1 << q).sum();
            if mask == 0 || mask == 15 {
                continue;
            }
            let edge = |q: usize| (c[q], c[(q + 1) % 4]);
            let crossing: Vec<usize> = (0..4).filter(|&q| b.inside(c[q]) != b.inside(c[(q + 1) % 4])).collect();
            if crossing.len() == 2 {
                let (a0, a1) = edge(crossing[0]);
                let (b0, b1) = edge(crossing[1]);
                segments.push([b.vertex(a0, a1), b.vertex(b0, b1)]);
            } else {
                // Saddle: the centre value decides which corners connect.
                let centre = c.iter().map(|&q| b.level[q]).sum::<f64>() / 4.0;
                let centre_inside = centre > 0.0;
                let v: Vec<usize> = (0..4).map(|q| {
                    let (x0, x1) = edge(q);
                    b.vertex(x0, x1)
                }).collect();
                // Edges 0..3 cross; pair each crossing with a neighbour
                // around an inside (or outside) corner.
                let corner0_inside = b.inside(c[0]);
                if corner0_inside == centre_inside {
                    segments.push([v[0], v[1]]);
                    segments.push([v[2], v[3]]);
                } else {
                    segments.push([v[3], v[0]]);
                    segments.push([v[1], v[2]]);
                }
            }
        }
    } else {
        const TETS: [[usize; 4]; 6] =
            [[0, 1, 3, 7], [0, 3, 2, 7], [0, 2, 6, 7], [0, 6, 4, 7], [0, 4, 5, 7], [0, 5, 1, 7]];
        for &i in &cells {
            let corner = |bits: usize| {
                let mut idx = i;
                for k in 0..3 {
                    if (bits >> k) & 1 == 1 {
                        idx += strides[k];
                    }
                }
                idx
            };
            for tet in TETS {
                let t: Vec<usize> = tet.iter().map(|&q| corner(q)).collect();
                let ins: Vec<usize> = t.iter().copied().filter(|&q| b.inside(q)).collect();
                let outs: Vec<usize> = t.iter().copied().filter(|&q| !b.inside(q)).collect();
                match ins.len() {
                    1 | 3 => {
                        let (apex, base) = if ins.len() == 1 { (ins[0], outs) } else { (outs[0], ins) };
                        let v: Vec<usize> = base.iter().map(|&q| b.vertex(apex, q)).collect();
                        triangles.push([v[0], v[1], v[2]]);
                    }
                    2 => {
                        let v00 = b.vertex(ins[0], outs[0]);
                        let v01 = b.vertex(ins[0], outs[1]);
                        let v10 = b.vertex(ins[1], outs[0]);
                        let v11 = b.vertex(ins[1], outs[1]);
                        triangles.push([v00, v01, v11]);
                        triangles.push([v00, v11, v10]);
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(FreeBoundary { dim: n, interface, vertices: b.vertices, segments, triangles, midpoints })
}

/// Snaps `x` to the free boundary of `field`.
pub(crate) fn snap_to_boundary(field: &VectorField, x: &[f64]) -> Result<Snap> {
    let fb = extract_free_boundary(field, 0.0)?;
    fb.snap(x).ok_or_else(|| FbError::NotBoundaryPoint("field has no free boundary".into()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nodes of `grid` inside the closed ball `B_r(x0)`, in node order.
pub(crate) fn ball_nodes(grid: &Grid, x0: &[f64], r: f64) -> Vec<usize> {
    let n = grid.dim();
    let lo: Vec<f64> = x0.iter().map(|c| c - r).collect();
    let hi: Vec<f64> = x0.iter().map(|c| c + r).collect();
    let mut out = Vec::new();
    let r2 = r * r * (1.0 + 1e-12);
    grid.for_each_in_box(&lo, &hi, |i| {
        let x = grid.coords(i);
        if (0..n).map(|k| (x[k] - x0[k]).powi(2)).sum::<f64>() <= r2 {
            out.push(i);
        }
    });
    out
}

pub(crate) fn check_ball(grid: &Grid, x0: &[f64], r: f64) -> Result<()> {
    if x0.len() != grid.dim() || !(r > 0.0) {
        return Err(FbError::Geometry(format!("invalid ball B_{r}({x0:?})")));
    }
    let h = grid.h();
    for k in 0..grid.dim() {
        if x0[k] - r < grid.origin()[k] - h - 1e-12 || x0[k] + r > grid.upper(k) + h + 1e-12 {
            return Err(FbError::Geometry(format!("ball B_{r}({x0:?}) exits the grid")));
        }
    }
    Ok(())
}
