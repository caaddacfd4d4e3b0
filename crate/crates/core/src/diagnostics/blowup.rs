use super::{ball_nodes, check_ball};
use crate::error::{FbError, Result};
use crate::exact::{HalfSpaceSolution, PParams};
use crate::grid::{Grid, VectorField};

/// `u_r(y) = u(x0 + r y) / r^kappa` sampled on `target` by multilinear
/// interpolation of `field`.
pub fn blowup(field: &VectorField, params: &PParams, x0: &[f64], r: f64, target: &Grid) -> Result<VectorField> {
    let n = field.grid.dim();
    if target.dim() != n || x0.len() != n {
        return Err(FbError::Geometry("dimension mismatch between field, center and target".into()));
    }
    if !(r > 0.0) {
        return Err(FbError::Domain(format!("blowup scale must be positive, got {r}")));
    }
    let m = field.m;
    let scale = r.powf(-params.kappa);
    let mut out = VectorField::zeros(target.clone(), m);
    let mut x = vec![0.0; n];
    for i in 0..target.num_nodes() {
        let y = target.coords(i);
        for k in 0..n {
            x[k] = x0[k] + r * y[k];
        }
        let node = out.node_mut(i);
        field
            .interpolate(&x, node)
            .ok_or_else(|| FbError::Geometry(format!("blowup point {x:?} lies outside the source grid")))?;
        node.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(out)
}

/// `max |u(x) - H(x)|` over the grid nodes of `B_r(x0)`.
pub fn halfspace_distance(field: &VectorField, hs: &HalfSpaceSolution, x0: &[f64], r: f64) -> Result<f64> {
    let g = &field.grid;
    check_ball(g, x0, r)?;
    if hs.dim() != g.dim() || hs.components() != field.m {
        return Err(FbError::Domain("half-space and field sizes differ".into()));
    }
    let n = g.dim();
    let mut buf = vec![0.0; field.m];
    let mut worst: f64 = 0.0;
    for i in ball_nodes(g, x0, r) {
        hs.eval_into(&g.coords(i)[..n], &mut buf);
        let d2: f64 = field.node(i).iter().zip(&buf).map(|(a, b)| (a - b).powi(2)).sum();
        worst = worst.max(d2.sqrt());
    }
    Ok(worst)
}
