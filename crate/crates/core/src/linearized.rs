//! The degenerate equation `Δφ + s φ_n / x_n = 0` on `{x_n >= 0}`, solved in
//! divergence form `div(x_n^s ∇φ) = 0`, the substitution `v = x_n^κ w` and a
//! pointwise `C^{1,σ}` fit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FbError, Result};
use crate::exact::PParams;
use crate::grid::{Grid, VectorField};
use crate::linalg::{fit_line, pcg};

/// How the weight `x_n^s` enters a tangential face, whose `x_n` spans a
/// whole cell. Faces normal to `x_n` always use the point value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceRule {
    /// Exact average of `x_n^s` over the face.
    #[default]
    CellAverage,
    /// `x_n^s` at the face midpoint (`h/4` on the bottom half cell).
    Midpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedProblem {
    s: f64,
    grid: Grid,
    dirichlet: Vec<f64>,
    rule: FaceRule,
}

impl LinearizedProblem {
    /// `grid` must start at `x_n = 0`; `dirichlet` holds one value per node
    /// and is read on the outer boundary only (not on the interior of the
    /// bottom face, which carries the no-flux closure).
    pub fn new(s: f64, grid: Grid, dirichlet: Vec<f64>) -> Result<Self> {
        if !(s > -1.0) || !s.is_finite() {
            return Err(FbError::Domain(format!("s must exceed -1, got {s}")));
        }
        let n = grid.dim();
        if grid.origin()[n - 1].abs() > 1e-12 {
            return Err(FbError::Grid(format!("grid must start at x_n = 0, starts at {}", grid.origin()[n - 1])));
        }
        if dirichlet.len() != grid.num_nodes() {
            return Err(FbError::Grid(format!("{} boundary values for {} nodes", dirichlet.len(), grid.num_nodes())));
        }
        if dirichlet.iter().any(|v| !v.is_finite()) {
            return Err(FbError::Domain("boundary data must be finite".into()));
        }
        Ok(Self { s, grid, dirichlet, rule: FaceRule::default() })
    }

    /// Boundary data from a function of the node coordinates.
    pub fn from_fn(s: f64, grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let n = grid.dim();
        let values = (0..grid.num_nodes()).map(|i| f(&grid.coords(i)[..n])).collect();
        Self::new(s, grid, values)
    }

    pub fn with_rule(mut self, rule: FaceRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn rule(&self) -> FaceRule {
        self.rule
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn dirichlet(&self) -> &[f64] {
        &self.dirichlet
    }

    /// Nodes whose value is prescribed.
    pub fn is_fixed(&self, i: usize) -> bool {
        let g = &self.grid;
        let n = g.dim();
        let m = g.multi(i);
        (0..n - 1).any(|k| m[k] == 0 || m[k] + 1 == g.shape()[k]) || m[n - 1] + 1 == g.shape()[n - 1]
    }

    /// Conductance of the face between row `j` and row `j + 1`.
    fn normal_weight(&self, j: usize) -> f64 {
        ((j as f64 + 0.5) * self.grid.h()).powf(self.s)
    }

    /// Conductance of a tangential face of a node in row `j`; the bottom
    /// row has half a face.
    fn tangential_weight(&self, j: usize) -> f64 {
        let h = self.grid.h();
        let s = self.s;
        match (self.rule, j) {
            (FaceRule::Midpoint, 0) => 0.5 * (0.25 * h).powf(s),
            (FaceRule::Midpoint, _) => (j as f64 * h).powf(s),
            (FaceRule::CellAverage, 0) => 0.5 * (0.5 * h).powf(s) / (s + 1.0),
            (FaceRule::CellAverage, _) => {
                let (a, b) = ((j as f64 + 0.5) * h, (j as f64 - 0.5) * h);
                (a.powf(s + 1.0) - b.powf(s + 1.0)) / ((s + 1.0) * h)
            }
        }
    }

    /// `(neighbour, conductance)` pairs of node `i`.
    fn faces(&self, i: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let g = &self.grid;
        let n = g.dim();
        let m = g.multi(i);
        let st = g.strides();
        let j = m[n - 1];
        let wt = self.tangential_weight(j);
        for k in 0..n - 1 {
            if m[k] > 0 {
                out.push((i - st[k], wt));
            }
            if m[k] + 1 < g.shape()[k] {
                out.push((i + st[k], wt));
            }
        }
        if j > 0 {
            out.push((i - st[n - 1], self.normal_weight(j - 1)));
        }
        if j + 1 < g.shape()[n - 1] {
            out.push((i + st[n - 1], self.normal_weight(j)));
        }
    }

    /// Net outward flux of `phi` from the control volume of node `i`.
    fn residual_at(&self, phi: &[f64], i: usize, buf: &mut Vec<(usize, f64)>) -> f64 {
        self.faces(i, buf);
        buf.iter().map(|&(t, c)| c * (phi[t] - phi[i])).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSolution {
    pub phi: VectorField,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Solves the conservative discretization with Jacobi-preconditioned
/// conjugate gradients to relative residual `tol`.
pub fn solve_linearized(prob: &LinearizedProblem, tol: f64, max_iter: usize) -> Result<LinearizedSolution> {
    let g = &prob.grid;
    if g.shape().iter().any(|&s| s < 32) {
        return Err(FbError::Grid(format!("need at least 32 nodes per axis, got {:?}", g.shape())));
    }
    if !(tol > 0.0) {
        return Err(FbError::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let len = g.num_nodes();
    let fixed: Vec<bool> = (0..len).map(|i| prob.is_fixed(i)).collect();
    let lift: Vec<f64> = (0..len).map(|i| if fixed[i] { prob.dirichlet[i] } else { 0.0 }).collect();
    // b = -A lift on the unknowns, with A the negated flux balance.
    let b: Vec<f64> = (0..len)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| if fixed[i] { 0.0 } else { prob.residual_at(&lift, i, buf) })
        .collect();
    let diag: Vec<f64> = (0..len)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            if fixed[i] {
                1.0
            } else {
                prob.faces(i, buf);
                buf.iter().map(|f| f.1).sum()
            }
        })
        .collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        y.par_iter_mut().enumerate().for_each_init(Vec::new, |buf, (i, yi)| {
            *yi = if fixed[i] {
                0.0
            } else {
                prob.faces(i, buf);
                buf.iter().map(|&(t, c)| if fixed[t] { c * x[i] } else { c * (x[i] - x[t]) }).sum()
            };
        });
    };
    let mut x = vec![0.0; len];
    let (iterations, residual_history) = pcg(apply, &diag, &b, &mut x, tol, max_iter)?;
    let values: Vec<f64> = x.iter().zip(&lift).map(|(a, l)| a + l).collect();
    if let Some(node) = values.iter().position(|v| !v.is_finite()) {
        return Err(FbError::NonFinite { node });
    }
    let phi = VectorField::from_values(g.clone(), 1, values)?;
    Ok(LinearizedSolution { phi, iterations, residual_history })
}

/// Net flux of `phi` out of the node box `[lo, hi]` (grid coordinates),
/// relative to the total absolute flux through its faces. The box must lie
/// strictly inside the domain apart from the bottom face, which may sit on
/// `x_n = 0`.
pub fn flux_balance(prob: &LinearizedProblem, phi: &VectorField, lo: &[f64], hi: &[f64]) -> Result<f64> {
    let g = &prob.grid;
    if phi.grid != *g || phi.m != 1 {
        return Err(FbError::Grid("field does not live on the problem grid".into()));
    }
    let mut inside = vec![false; g.num_nodes()];
    g.for_each_in_box(lo, hi, |i| inside[i] = true);
    let mut net = 0.0;
    let mut total = 0.0;
    let mut any = false;
    let mut buf = Vec::new();
    for i in 0..g.num_nodes() {
        if !inside[i] {
            continue;
        }
        if prob.is_fixed(i) {
            return Err(FbError::Geometry("flux box touches the Dirichlet boundary".into()));
        }
        any = true;
        prob.faces(i, &mut buf);
        for &(t, c) in &buf {
            if !inside[t] {
                let f = c * (phi.values[t] - phi.values[i]);
                net += f;
                total += f.abs();
            }
        }
    }
    if !any {
        return Err(FbError::Geometry("flux box contains no nodes".into()));
    }
    Ok(if total > 0.0 { net.abs() / total } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `w = v / x_n^κ`.
    Forward,
    /// `v = x_n^κ w`.
    Inverse,
}

/// The substitution `v = x_n^κ w` row by row. The forward map fills the
/// `x_n = 0` row by quadratic extrapolation from the three rows above.
pub fn transform_components(v: &VectorField, params: &PParams, direction: Direction) -> Result<VectorField> {
    let g = &v.grid;
    let n = g.dim();
    if g.origin()[n - 1].abs() > 1e-12 {
        return Err(FbError::Grid("transform needs a grid starting at x_n = 0".into()));
    }
    let rows = g.shape()[n - 1];
    if rows < 4 {
        return Err(FbError::Grid("transform needs at least 4 rows in x_n".into()));
    }
    let h = g.h();
    let m = v.m;
    let mut out = v.clone();
    let weight = |j: usize| (j as f64 * h).powf(params.kappa);
    match direction {
        Direction::Inverse => {
            for i in 0..g.num_nodes() {
                let w = weight(g.multi(i)[n - 1]);
                out.node_mut(i).iter_mut().for_each(|x| *x *= w);
            }
        }
        Direction::Forward => {
            let sup = v.values.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
            let bound = sup * (h / (g.upper(n - 1))).powf(0.5 * params.kappa);
            let st = g.strides()[n - 1];
            let mut warned = false;
            for i in 0..g.num_nodes() {
                let j = g.multi(i)[n - 1];
                if j == 0 {
                    continue;
                }
                let w = weight(j);
                if j == 1 && !warned && v.node(i).iter().any(|x| x.abs() > bound * (1.0 + 1e-12)) {
                    log::warn!("v is not O(x_n^kappa) near x_n = 0; the transformed field will be large there");
                    warned = true;
                }
                for (c, x) in out.node_mut(i).iter_mut().enumerate() {
                    *x = v.values[i * m + c] / w;
                    if !x.is_finite() {
                        return Err(FbError::Transform(format!("nonfinite value at node {i}")));
                    }
                }
            }
            for i in 0..g.num_nodes() {
                if g.multi(i)[n - 1] != 0 {
                    continue;
                }
                for c in 0..m {
                    let at = |r: usize| out.values[(i + r * st) * m + c];
                    let x = 3.0 * at(1) - 3.0 * at(2) + at(3);
                    if !x.is_finite() {
                        return Err(FbError::Transform(format!("nonfinite extrapolation at node {i}")));
                    }
                    out.values[i * m + c] = x;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1SigmaFit {
    /// Tangential gradient at `x0`.
    pub a: Vec<f64>,
    pub c: f64,
    pub sigma: f64,
    pub phi0: f64,
    /// Outer radius of each annulus, largest first.
    pub radii: Vec<f64>,
    /// `max |φ - φ(x0) - a·(x' - x0')|` per annulus.
    pub deviations: Vec<f64>,
    /// Distance from `x0` of the node attaining each maximum.
    pub witness_radii: Vec<f64>,
    pub residual: f64,
}

/// Fits `|φ(x) - φ(x0) - a·(x' - x0')| <= C |x - x0|^{1+σ}` over the dyadic
/// annuli `R 2^{-k-1} < |x - x0| <= R 2^{-k}` of the half ball, where `R` is
/// one spacing less than the distance to the outer boundary. The regression
/// uses, per annulus, the radius of the node with the largest deviation. `a`
/// comes from a local quadratic fit on the two innermost annuli.
pub fn check_c1sigma(phi: &VectorField, x0: &[f64]) -> Result<C1SigmaFit> {
    let g = &phi.grid;
    let n = g.dim();
    let h = g.h();
    if phi.m != 1 {
        return Err(FbError::Domain(format!("expected a scalar field, got {} components", phi.m)));
    }
    if x0.len() != n || x0[n - 1].abs() > 1e-12 || g.origin()[n - 1].abs() > 1e-12 {
        return Err(FbError::Geometry("x0 must lie on x_n = 0 and the grid must start there".into()));
    }
    let mut big_r = g.upper(n - 1);
    for k in 0..n - 1 {
        big_r = big_r.min(x0[k] - g.origin()[k]).min(g.upper(k) - x0[k]);
    }
    // Stay one spacing clear of the boundary data.
    big_r -= h;
    let mut radii = Vec::new();
    let mut r = big_r;
    while r / 2.0 >= 2.0 * h {
        radii.push(r);
        r /= 2.0;
    }
    if radii.len() < 4 {
        return Err(FbError::InsufficientData(format!("{} dyadic annuli fit in the grid, need 4", radii.len())));
    }
    let mut phi0 = [0.0];
    phi.interpolate(x0, &mut phi0).ok_or_else(|| FbError::Geometry("x0 lies outside the grid".into()))?;
    let phi0 = phi0[0];
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
    let lo: Vec<f64> = (0..n).map(|k| x0[k] - big_r).collect();
    let hi: Vec<f64> = (0..n).map(|k| x0[k] + big_r).collect();
    g.for_each_in_box(&lo, &hi, |i| {
        let x = g.coords(i);
        let d: Vec<f64> = (0..n).map(|k| x[k] - x0[k]).collect();
        let r2: f64 = d.iter().map(|v| v * v).sum();
        if r2 > 0.0 && r2 <= big_r * big_r * (1.0 + 1e-12) {
            pts.push((d, phi.values[i] - phi0));
        }
    });

    // Local quadratic model without constant term: linear in all n
    // coordinates plus all monomials of degree two.
    let r_fit = radii[radii.len() - 2];
    let near: Vec<&(Vec<f64>, f64)> = pts.iter().filter(|(d, _)| norm(d) <= r_fit).collect();
    let cols = n + n * (n + 1) / 2;
    if near.len() < 2 * cols {
        return Err(FbError::InsufficientData("too few nodes near x0 for the tangential fit".into()));
    }
    let mut a_mat = DMatrix::<f64>::zeros(near.len(), cols);
    let mut rhs = DVector::<f64>::zeros(near.len());
    for (row, (d, y)) in near.iter().enumerate() {
        // Scale by r_fit to keep the columns comparable.
        let t: Vec<f64> = d.iter().map(|v| v / r_fit).collect();
        let mut c = 0;
        for &tk in &t {
            a_mat[(row, c)] = tk;
            c += 1;
        }
        for k in 0..n {
            for l in k..n {
                a_mat[(row, c)] = t[k] * t[l];
                c += 1;
            }
        }
        rhs[row] = *y;
    }
    let coef = a_mat
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| FbError::DegenerateFit(format!("tangential fit failed: {e}")))?;
    let a: Vec<f64> = (0..n - 1).map(|k| coef[k] / r_fit).collect();

    let mut deviations = vec![0.0_f64; radii.len()];
    let mut witness_radii = radii.clone();
    for (d, y) in &pts {
        let r = norm(d);
        let dev = (y - a.iter().zip(d).map(|(ak, dk)| ak * dk).sum::<f64>()).abs();
        if let Some(k) = radii.iter().rposition(|&ro| r <= ro * (1.0 + 1e-12)) {
            if r > radii[k] / 2.0 * (1.0 + 1e-12) {
                if dev > deviations[k] {
                    deviations[k] = dev;
                    witness_radii[k] = r;
                }
            }
        }
    }
    let scale = phi.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    if deviations.iter().all(|&d| d <= 1e-12 * scale) {
        return Ok(C1SigmaFit { a, c: 0.0, sigma: 1.0, phi0, radii, deviations, witness_radii, residual: 0.0 });
    }
    if deviations.iter().any(|&d| !(d > 0.0)) {
        return Err(FbError::DegenerateFit("an annulus has zero deviation while others do not".into()));
    }
    let lx: Vec<f64> = witness_radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = deviations.iter().map(|d| d.ln()).collect();
    let (_, slope, residual) = fit_line(&lx, &ly).ok_or_else(|| FbError::DegenerateFit("annuli radii coincide".into()))?;
    let sigma = slope - 1.0;
    let c = witness_radii
        .iter().zip(&deviations).map(|(r, d)| d / r.powf(1.0 + sigma)).fold(0.0, f64::max);
    Ok(C1SigmaFit { a, c, sigma, phi0, radii, deviations, witness_radii, residual })
}

fn norm(d: &[f64]) -> f64 {
    d.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::make_params;

    fn half_grid(h: f64) -> Grid {
        Grid::new(vec![-1.0, 0.0], vec![2.0, 1.0], h).unwrap()
    }

    fn quadratic(s: f64) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| x[1] * x[1] - (1.0 + s) * x[0] * x[0]
    }

    fn error(s: f64, h: f64, rule: FaceRule) -> f64 {
        let prob = LinearizedProblem::from_fn(s, half_grid(h), quadratic(s)).unwrap().with_rule(rule);
        let sol = solve_linearized(&prob, 1e-13, 100_000).unwrap();
        let g = prob.grid();
        (0..g.num_nodes()).map(|i| (sol.phi.values[i] - quadratic(s)(&g.coords(i)[..2])).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constants_and_tangential_linears_are_exact() {
        for s in [-0.5, 0.5, 2.5] {
            let one = LinearizedProblem::from_fn(s, half_grid(1.0 / 32.0), |_| 1.0).unwrap();
            let sol = solve_linearized(&one, 1e-13, 10_000).unwrap();
            assert!(sol.phi.values.iter().all(|v| (v - 1.0).abs() < 1e-10));
            let lin = |x: &[f64]| 0.3 * x[0] - 0.1;
            let prob = LinearizedProblem::from_fn(s, half_grid(1.0 / 32.0), lin).unwrap();
            let sol = solve_linearized(&prob, 1e-14, 10_000).unwrap();
            let g = prob.grid();
            let err = (0..g.num_nodes()).map(|i| (sol.phi.values[i] - lin(&g.coords(i)[..2])).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "s = {s}: {err}");
        }
    }

    #[test]
    fn quadratic_is_exact_with_cell_averages() {
        let s = 2.0 * (make_params(0.5).unwrap().kappa - 1.0);
        assert!(error(s, 1.0 / 32.0, FaceRule::CellAverage) < 1e-11);
        let e1 = error(s, 1.0 / 32.0, FaceRule::Midpoint);
        let e2 = error(s, 1.0 / 64.0, FaceRule::Midpoint);
        assert!(e2 < e1 / 2.0, "{e1} {e2}");
    }

    #[test]
    fn flux_is_conserved() {
        let prob = LinearizedProblem::from_fn(0.5, half_grid(1.0 / 32.0), quadratic(0.5)).unwrap();
        let sol = solve_linearized(&prob, 1e-14, 10_000).unwrap();
        let fb = flux_balance(&prob, &sol.phi, &[-0.5, 0.0], &[0.25, 0.5]).unwrap();
        assert!(fb < 1e-10, "{fb}");
        assert!(flux_balance(&prob, &sol.phi, &[-1.0, 0.0], &[0.0, 0.5]).is_err());
    }

    #[test]
    fn profile_transforms_to_constant() {
        let q = make_params(0.5).unwrap();
        let g = half_grid(1.0 / 16.0);
        let v = VectorField::from_values(g.clone(), 1, (0..g.num_nodes()).map(|i| q.u0(g.coords(i)[1])).collect()).unwrap();
        let w = transform_components(&v, &q, Direction::Forward).unwrap();
        assert!(w.values.iter().all(|x| (x - q.c_p).abs() < 1e-12), "{:?}", &w.values[..4]);
        let back = transform_components(&w, &q, Direction::Inverse).unwrap();
        assert!(back.values.iter().zip(&v.values).all(|(a, b)| (a - b).abs() <= 4.0 * f64::EPSILON * b.abs()));
    }

    #[test]
    fn linear_function_has_zero_c() {
        let g = half_grid(1.0 / 64.0);
        let lin = VectorField::from_values(g.clone(), 1, (0..g.num_nodes()).map(|i| 0.7 * g.coords(i)[0] + 2.0).collect()).unwrap();
        let fit = check_c1sigma(&lin, &[0.0, 0.0]).unwrap();
        assert!((fit.a[0] - 0.7).abs() < 1e-10 && fit.c == 0.0, "{fit:?}");
        let coarse = Grid::new(vec![-1.0, 0.0], vec![2.0, 1.0], 0.125).unwrap();
        assert!(check_c1sigma(&VectorField::zeros(coarse, 1), &[0.0, 0.0]).is_err());
    }
}
