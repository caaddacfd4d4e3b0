//! Energy minimization by forward-backward splitting: an explicit step on the
//! discrete Dirichlet energy followed by the exact p-power prox at every free
//! node. Boundary nodes keep the Dirichlet data.
//!
//! The default iteration is the monotone accelerated variant (extrapolation
//! with a restart whenever the trial point would raise the energy); plain
//! forward-backward is available through [`Acceleration::None`].

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{discrete_energy, edge_dirichlet, node_weight, norm, prox_in_place};
use crate::error::{FbError, Result};
use crate::exact::PParams;
use crate::grid::{Grid, VectorField, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceleration {
    None,
    #[default]
    Monotone,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub tau0: f64,
    pub backtrack: f64,
    pub max_iter: usize,
    pub tol_rel: f64,
    pub zero_threshold: f64,
    /// Smoothing levels, largest first; each leg warm-starts the next.
    pub continuation: Vec<f64>,
    pub seed_field: Option<VectorField>,
    pub acceleration: Acceleration,
    /// Local search over interface positions after the exact leg.
    pub polish: bool,
}

impl SolverConfig {
    /// Defaults for spacing `h` in dimension `n`: `tau0 = h^2/(4n)`, twice the
    /// step that is always accepted.
    pub fn for_spacing(h: f64, n: usize) -> Self {
        Self {
            tau0: h * h / (4.0 * n as f64),
            backtrack: 0.5,
            max_iter: 200_000,
            tol_rel: 1e-11,
            zero_threshold: 1e-10,
            continuation: Vec::new(),
            seed_field: None,
            acceleration: Acceleration::Monotone,
            polish: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0) || !self.tau0.is_finite() {
            return Err(FbError::Config(format!("tau0 must be positive, got {}", self.tau0)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(FbError::Config(format!("backtrack must lie in (0,1), got {}", self.backtrack)));
        }
        if !(self.tol_rel > 0.0) {
            return Err(FbError::Config(format!("tol_rel must be positive, got {}", self.tol_rel)));
        }
        if self.max_iter == 0 {
            return Err(FbError::Config("max_iter must be at least 1".into()));
        }
        if self.continuation.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(FbError::Config("continuation levels must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegReport {
    pub eps: f64,
    pub iterations: usize,
    pub final_energy: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub energy_history: Vec<f64>,
    pub final_step: f64,
    pub converged: bool,
    pub wallclock: f64,
    pub final_energy: f64,
    pub continuation: Vec<LegReport>,
    pub polish: Vec<PolishMove>,
}

/// The discrete Dirichlet form and node layout the iteration runs on.
trait Stencil: Sync {
    fn len(&self) -> usize;
    fn fixed(&self, i: usize) -> bool;
    /// Cell measure `h^n` of a free node.
    fn cell(&self) -> f64;
    /// Lipschitz constant of `grad D / h^n`.
    fn lipschitz(&self) -> f64;
    fn laplacian(&self, u: &[f64], m: usize, i: usize, c: usize) -> f64;
    fn dirichlet(&self, u: &[f64], m: usize) -> f64;
    /// Quadrature weight of node `i` in the potential term.
    fn node_weight(&self, i: usize) -> f64;
    fn sum(&self, f: &(dyn Fn(usize) -> f64 + Sync)) -> f64;
    /// Writes the stencil neighbours of `i` into `out`, returns their count.
    fn neighbors(&self, i: usize, out: &mut [usize; 2 * MAX_DIM]) -> usize;
}

struct GridStencil<'a> {
    grid: &'a Grid,
    mask: &'a [bool],
    strides: [usize; MAX_DIM],
    inv_h2: f64,
    cell: f64,
}

impl Stencil for GridStencil<'_> {
    fn len(&self) -> usize {
        self.grid.num_nodes()
    }
    fn fixed(&self, i: usize) -> bool {
        self.mask[i]
    }
    fn cell(&self) -> f64 {
        self.cell
    }
    fn lipschitz(&self) -> f64 {
        8.0 * self.grid.dim() as f64 * self.inv_h2
    }
    fn laplacian(&self, u: &[f64], m: usize, i: usize, c: usize) -> f64 {
        let n = self.grid.dim();
        let mut acc = -2.0 * n as f64 * u[i * m + c];
        for &s in &self.strides[..n] {
            acc += u[(i + s) * m + c] + u[(i - s) * m + c];
        }
        acc * self.inv_h2
    }
    fn dirichlet(&self, u: &[f64], m: usize) -> f64 {
        edge_dirichlet(self.grid, m, u)
    }
    fn node_weight(&self, i: usize) -> f64 {
        node_weight(self.grid, i)
    }
    fn sum(&self, f: &(dyn Fn(usize) -> f64 + Sync)) -> f64 {
        self.grid.ordered_sum(f)
    }
    fn neighbors(&self, i: usize, out: &mut [usize; 2 * MAX_DIM]) -> usize {
        let multi = self.grid.multi(i);
        let mut c = 0;
        for k in 0..self.grid.dim() {
            if multi[k] > 0 {
                out[c] = i - self.strides[k];
                c += 1;
            }
            if multi[k] + 1 < self.grid.shape()[k] {
                out[c] = i + self.strides[k];
                c += 1;
            }
        }
        c
    }
}

struct LineStencil {
    len: usize,
    h: f64,
}

impl Stencil for LineStencil {
    fn len(&self) -> usize {
        self.len
    }
    fn fixed(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.len
    }
    fn cell(&self) -> f64 {
        self.h
    }
    fn lipschitz(&self) -> f64 {
        8.0 / (self.h * self.h)
    }
    fn laplacian(&self, u: &[f64], m: usize, i: usize, c: usize) -> f64 {
        (u[(i + 1) * m + c] - 2.0 * u[i * m + c] + u[(i - 1) * m + c]) / (self.h * self.h)
    }
    fn dirichlet(&self, u: &[f64], m: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len - 1 {
            for c in 0..m {
                let d = u[(i + 1) * m + c] - u[i * m + c];
                acc += d * d;
            }
        }
        acc / self.h
    }
    fn node_weight(&self, i: usize) -> f64 {
        if self.fixed(i) {
            0.5 * self.h
        } else {
            self.h
        }
    }
    fn sum(&self, f: &(dyn Fn(usize) -> f64 + Sync)) -> f64 {
        (0..self.len).map(f).sum()
    }
    fn neighbors(&self, i: usize, out: &mut [usize; 2 * MAX_DIM]) -> usize {
        let mut c = 0;
        if i > 0 {
            out[c] = i - 1;
            c += 1;
        }
        if i + 1 < self.len {
            out[c] = i + 1;
            c += 1;
        }
        c
    }
}

#[derive(Clone, Copy)]
enum Potential {
    Exact,
    Smoothed(f64),
}

impl Potential {
    fn value(self, p: f64, s2: f64) -> f64 {
        match self {
            Potential::Exact => 2.0 / p * s2.sqrt().powf(p),
            Potential::Smoothed(eps) => 2.0 / p * (s2 + eps * eps).powf(0.5 * p),
        }
    }
}

fn total_energy<S: Stencil>(st: &S, u: &[f64], m: usize, p: f64, pot: Potential) -> f64 {
    let d = st.dirichlet(u, m);
    let v = st.sum(&|i| {
        let s2: f64 = u[i * m..(i + 1) * m].iter().map(|x| x * x).sum();
        st.node_weight(i) * pot.value(p, s2)
    });
    d + v
}

/// Smooth part of the objective: the Dirichlet form, plus the smoothed
/// potential on continuation legs.
fn smooth_energy<S: Stencil>(st: &S, u: &[f64], m: usize, p: f64, pot: Potential) -> f64 {
    match pot {
        Potential::Exact => st.dirichlet(u, m),
        Potential::Smoothed(_) => total_energy(st, u, m, p, pot),
    }
}

struct Leg {
    iterations: usize,
    history: Vec<f64>,
    step: f64,
    converged: bool,
}

fn run_leg<S: Stencil>(
    st: &S,
    u: &mut Vec<f64>,
    m: usize,
    params: &PParams,
    cfg: &SolverConfig,
    pot: Potential,
) -> Result<Leg> {
    let p = params.p;
    let nn = st.len();
    let cell = st.cell();
    let mut tau = match pot {
        Potential::Exact => cfg.tau0,
        Potential::Smoothed(eps) => cfg.tau0.min(1.0 / (st.lipschitz() + 2.0 * eps.powf(p - 2.0))),
    };
    let mut x = u.clone();
    let mut x_prev = x.clone();
    let mut y = x.clone();
    let mut z = x.clone();
    let mut grad = vec![0.0; nn * m];
    let mut t = 1.0f64;
    let mut fx = total_energy(st, &x, m, p, pot);
    let mut history = vec![fx];
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=cfg.max_iter {
        iterations = k;
        // Gradient of the smooth part divided by h^n, at y.
        grad.par_chunks_mut(m).enumerate().for_each(|(i, g)| {
            if st.fixed(i) {
                g.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let yi = &y[i * m..(i + 1) * m];
            let extra = match pot {
                Potential::Exact => 0.0,
                Potential::Smoothed(eps) => {
                    let s2: f64 = yi.iter().map(|v| v * v).sum();
                    2.0 * (s2 + eps * eps).powf(0.5 * p - 1.0)
                }
            };
            for c in 0..m {
                g[c] = -2.0 * st.laplacian(&y, m, i, c) + extra * yi[c];
            }
        });
        let sy = smooth_energy(st, &y, m, p, pot);
        loop {
            z.par_chunks_mut(m).enumerate().for_each(|(i, zi)| {
                let yi = &y[i * m..(i + 1) * m];
                if st.fixed(i) {
                    zi.copy_from_slice(yi);
                    return;
                }
                for c in 0..m {
                    zi[c] = yi[c] - tau * grad[i * m + c];
                }
                if let Potential::Exact = pot {
                    prox_in_place(p, zi, tau);
                }
            });
            let sz = smooth_energy(st, &z, m, p, pot);
            let (lin, quad) = {
                let lin = st.sum(&|i| {
                    (0..m).map(|c| grad[i * m + c] * (z[i * m + c] - y[i * m + c])).sum::<f64>()
                });
                let quad = st.sum(&|i| (0..m).map(|c| (z[i * m + c] - y[i * m + c]).powi(2)).sum::<f64>());
                (cell * lin, cell * quad / (2.0 * tau))
            };
            if !sz.is_finite() {
                return Err(FbError::Diverged { iteration: k });
            }
            if sz <= sy + lin + quad + 1e-13 * sy.abs().max(1e-300) {
                break;
            }
            tau *= cfg.backtrack;
            if tau < 1e-300 {
                return Err(FbError::Diverged { iteration: k });
            }
        }
        let fz = total_energy(st, &z, m, p, pot);
        if !fz.is_finite() {
            return Err(FbError::Diverged { iteration: k });
        }

        match cfg.acceleration {
            Acceleration::None => {
                if fz <= fx {
                    std::mem::swap(&mut x, &mut z);
                    fx = fz;
                }
                y.copy_from_slice(&x);
            }
            Acceleration::Monotone => {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                if fz <= fx {
                    std::mem::swap(&mut x_prev, &mut x);
                    x.copy_from_slice(&z);
                    fx = fz;
                    let beta = (t - 1.0) / t_next;
                    y.par_iter_mut().enumerate().for_each(|(j, yj)| {
                        *yj = x[j] + beta * (x[j] - x_prev[j]);
                    });
                    t = t_next;
                } else {
                    // Restart from the monotone iterate.
                    y.copy_from_slice(&x);
                    x_prev.copy_from_slice(&x);
                    t = 1.0;
                }
            }
        }
        history.push(fx);

        if fx == 0.0 {
            converged = true;
            break;
        }
        if k >= 10 {
            let old = history[history.len() - 11];
            if old - fx <= cfg.tol_rel * fx.abs() {
                converged = true;
                break;
            }
        }
        if k % 1000 == 0 {
            log::debug!("iteration {k}: energy {fx:.12e}, step {tau:.3e}");
        }
    }
    *u = x;
    Ok(Leg { iterations, history, step: tau, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Grow,
    Shrink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolishMove {
    pub kind: MoveKind,
    pub energy_before: f64,
    pub energy_after: f64,
    pub iterations: usize,
    pub accepted: bool,
}

const MAX_POLISH_MOVES: usize = 256;

fn is_dead(u: &[f64], m: usize, i: usize) -> bool {
    u[i * m..(i + 1) * m].iter().all(|&v| v == 0.0)
}

/// Moves the discrete interface by one node: `Grow` gives every free dead
/// node next to the positivity set the mean of its positive neighbours,
/// `Shrink` zeroes every free positive node next to a dead node.
fn interface_move<S: Stencil>(st: &S, u: &[f64], m: usize, kind: MoveKind) -> Option<Vec<f64>> {
    let mut out = u.to_vec();
    let mut nb = [0usize; 2 * MAX_DIM];
    let mut changed = false;
    for i in 0..st.len() {
        if st.fixed(i) {
            continue;
        }
        let dead = is_dead(u, m, i);
        let cnt = st.neighbors(i, &mut nb);
        match kind {
            MoveKind::Grow if dead => {
                let live: Vec<usize> = nb[..cnt].iter().copied().filter(|&j| !is_dead(u, m, j)).collect();
                if live.is_empty() {
                    continue;
                }
                for c in 0..m {
                    out[i * m + c] = live.iter().map(|&j| u[j * m + c]).sum::<f64>() / live.len() as f64;
                }
                changed = true;
            }
            MoveKind::Shrink if !dead => {
                if nb[..cnt].iter().any(|&j| is_dead(u, m, j)) {
                    out[i * m..(i + 1) * m].iter_mut().for_each(|v| *v = 0.0);
                    changed = true;
                }
            }
            _ => {}
        }
    }
    changed.then_some(out)
}

/// Local search over interface positions. Each converged forward-backward
/// run is only a local minimizer; neighbouring interface positions are
/// separate local minima, so the run is restarted from a grown or shrunk
/// interface and the result kept when the energy drops.
fn polish<S: Stencil>(
    st: &S,
    u: &mut Vec<f64>,
    energy: &mut f64,
    m: usize,
    params: &PParams,
    cfg: &SolverConfig,
) -> Result<Vec<PolishMove>> {
    let mut moves = Vec::new();
    let mut order = [MoveKind::Grow, MoveKind::Shrink];
    'outer: while moves.len() < MAX_POLISH_MOVES {
        for kind in order {
            let Some(mut trial) = interface_move(st, u, m, kind) else {
                continue;
            };
            let leg = run_leg(st, &mut trial, m, params, cfg, Potential::Exact)?;
            let after = *leg.history.last().expect("history holds the initial energy");
            let accepted = after < *energy - 1e-14 * energy.abs();
            moves.push(PolishMove { kind, energy_before: *energy, energy_after: after, iterations: leg.iterations, accepted });
            if accepted {
                *u = trial;
                *energy = after;
                if kind == MoveKind::Shrink {
                    order = [MoveKind::Shrink, MoveKind::Grow];
                }
                continue 'outer;
            }
        }
        break;
    }
    Ok(moves)
}

fn run_all<S: Stencil>(
    st: &S,
    mut u: Vec<f64>,
    m: usize,
    params: &PParams,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut legs = Vec::new();
    for &eps in &cfg.continuation {
        let leg = run_leg(st, &mut u, m, params, cfg, Potential::Smoothed(eps))?;
        legs.push(LegReport {
            eps,
            iterations: leg.iterations,
            final_energy: *leg.history.last().unwrap_or(&f64::NAN),
            converged: leg.converged,
        });
    }
    let leg = run_leg(st, &mut u, m, params, cfg, Potential::Exact)?;
    let mut final_energy = *leg.history.last().expect("history holds the initial energy");
    let polish = if cfg.polish { polish(st, &mut u, &mut final_energy, m, params, cfg)? } else { Vec::new() };
    Ok((
        u,
        SolveReport {
            iterations: leg.iterations,
            energy_history: leg.history,
            final_step: leg.step,
            converged: leg.converged,
            wallclock: start.elapsed().as_secs_f64(),
            final_energy,
            continuation: legs,
            polish,
        },
    ))
}

/// Minimizes the discrete energy on `grid` with Dirichlet data read from the
/// boundary nodes of `bc`.
///
/// The initial iterate is `cfg.seed_field` if given, else zero inside.
/// Reaching `max_iter` is reported through `converged = false`.
pub fn minimize(grid: &Grid, bc: &VectorField, params: &PParams, cfg: &SolverConfig) -> Result<(VectorField, SolveReport)> {
    if bc.grid != *grid {
        return Err(FbError::Grid("boundary data lives on a different grid".into()));
    }
    if grid.shape().iter().any(|&s| s < 8) {
        return Err(FbError::Grid(format!("need at least 8 nodes per axis, got {:?}", grid.shape())));
    }
    if let Some(pos) = bc.values.iter().position(|v| !v.is_finite()) {
        return Err(FbError::NonFinite { node: pos / bc.m });
    }
    let m = bc.m;
    let mut field = VectorField::zeros(grid.clone(), m);
    if let Some(seed) = &cfg.seed_field {
        if seed.grid != *grid || seed.m != m {
            return Err(FbError::Grid("seed field does not match the grid".into()));
        }
        field.values.copy_from_slice(&seed.values);
    }
    for i in 0..grid.num_nodes() {
        if field.boundary_mask[i] {
            field.node_mut(i).copy_from_slice(bc.node(i));
        }
    }
    let st = GridStencil {
        grid,
        mask: &field.boundary_mask,
        strides: grid.strides(),
        inv_h2: 1.0 / (grid.h() * grid.h()),
        cell: grid.h().powi(grid.dim() as i32),
    };
    let (values, report) = run_all(&st, field.values.clone(), m, params, cfg)?;
    field.values = values;
    debug_assert_eq!(report.final_energy, discrete_energy(&field, params).total);
    Ok((field, report))
}

/// Discrete one-dimensional profile on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1d {
    pub a: f64,
    pub h: f64,
    pub m: usize,
    pub values: Vec<f64>,
}

impl Profile1d {
    pub fn len(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.a + i as f64 * self.h
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn norm_at(&self, i: usize) -> f64 {
        norm(self.node(i))
    }

    /// Coordinate of the first node with `|u| > zero_threshold`.
    pub fn free_boundary(&self, zero_threshold: f64) -> Option<f64> {
        (0..self.len()).find(|&i| self.norm_at(i) > zero_threshold).map(|i| self.x(i))
    }
}

/// The same scheme on an interval; the reference for sections of 2-D runs.
pub fn solve_1d(
    params: &PParams,
    interval: (f64, f64),
    bc: (&[f64], &[f64]),
    h: f64,
    cfg: &SolverConfig,
) -> Result<(Profile1d, SolveReport)> {
    solve_1d_from(params, interval, bc, h, cfg, None)
}

/// [`solve_1d`] started from `seed` (node-major, boundary entries ignored).
pub fn solve_1d_from(
    params: &PParams,
    interval: (f64, f64),
    bc: (&[f64], &[f64]),
    h: f64,
    cfg: &SolverConfig,
    seed: Option<&[f64]>,
) -> Result<(Profile1d, SolveReport)> {
    let (a, b) = interval;
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(FbError::Grid(format!("empty interval [{a}, {b}]")));
    }
    if bc.0.len() != bc.1.len() || bc.0.is_empty() {
        return Err(FbError::Grid("boundary vectors must have equal positive length".into()));
    }
    if bc.0.iter().chain(bc.1).any(|v| !v.is_finite()) {
        return Err(FbError::NonFinite { node: 0 });
    }
    let cells = ((b - a) / h).round() as usize;
    if !(h > 0.0) || cells < 64 {
        return Err(FbError::Grid(format!("need h <= (b-a)/64, got h = {h}")));
    }
    let h = (b - a) / cells as f64;
    let m = bc.0.len();
    let len = cells + 1;
    let mut u = vec![0.0; len * m];
    if let Some(seed) = seed {
        if seed.len() != u.len() || seed.iter().any(|v| !v.is_finite()) {
            return Err(FbError::Grid(format!("seed needs {} finite values", u.len())));
        }
        u.copy_from_slice(seed);
    }
    u[..m].copy_from_slice(bc.0);
    u[(len - 1) * m..].copy_from_slice(bc.1);
    let st = LineStencil { len, h };
    let (values, report) = run_all(&st, u, m, params, cfg)?;
    Ok((Profile1d { a, h, m, values }, report))
}
