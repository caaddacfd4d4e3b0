//! Text formats for the command line: the `key = value` solve configuration,
//! `a:b:step` ranges, `x,y[,z]` points and comma lists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{FbError, Result};
use crate::exact::{make_params, HalfSpaceSolution, PParams};
use crate::grid::{Grid, MAX_DIM};
use crate::solver::SolverConfig;

const REQUIRED: &[&str] = &["p", "n", "m", "box", "h", "bc_kind"];
const OPTIONAL: &[&str] = &[
    "bc_shift",
    "bc_e",
    "bc_f",
    "bc_file",
    "tau0",
    "backtrack",
    "max_iter",
    "tol_rel",
    "zero_threshold",
    "continuation",
    "polish",
];

/// Most nodes a single range may expand to.
pub const MAX_RANGE_LEN: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundaryData {
    /// Trace of `c_p (<x,e> + shift)_+^κ f`.
    Halfspace { shift: f64, e: Vec<f64>, f: Vec<f64> },
    /// Boundary values read from a VFG1 file on the same grid.
    CustomFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub p: f64,
    pub n: usize,
    pub m: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub h: f64,
    pub bc: BoundaryData,
    /// `None` keeps the spacing-dependent default.
    pub tau0: Option<f64>,
    pub backtrack: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol_rel: Option<f64>,
    pub zero_threshold: Option<f64>,
    pub continuation: Vec<f64>,
    pub polish: Option<bool>,
}

impl SolveConfig {
    pub fn params(&self) -> Result<PParams> {
        make_params(self.p)
    }

    pub fn grid(&self) -> Result<Grid> {
        let extent = self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).collect();
        Grid::new(self.lower.clone(), extent, self.h)
    }

    pub fn halfspace(&self) -> Result<Option<HalfSpaceSolution>> {
        match &self.bc {
            BoundaryData::Halfspace { shift, e, f } => Ok(Some(HalfSpaceSolution::new(self.params()?, e.clone(), f.clone(), *shift)?)),
            BoundaryData::CustomFile { .. } => Ok(None),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut c = SolverConfig::for_spacing(self.h, self.n);
        if let Some(v) = self.tau0 {
            c.tau0 = v;
        }
        if let Some(v) = self.backtrack {
            c.backtrack = v;
        }
        if let Some(v) = self.max_iter {
            c.max_iter = v;
        }
        if let Some(v) = self.tol_rel {
            c.tol_rel = v;
        }
        if let Some(v) = self.zero_threshold {
            c.zero_threshold = v;
        }
        if let Some(v) = self.polish {
            c.polish = v;
        }
        c.continuation = self.continuation.clone();
        c
    }
}

fn perr(line: usize, msg: impl Into<String>) -> FbError {
    FbError::Parse { line, msg: msg.into() }
}

fn num(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.trim().parse().map_err(|_| perr(line, format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(perr(line, format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn count(line: usize, key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| perr(line, format!("{key}: '{v}' is not a nonnegative integer")))
}

fn numbers(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|t| num(line, key, t)).collect()
}

/// Parses the solve configuration. Blank lines and `#` comments are
/// ignored; unknown or repeated keys are errors, and all missing required
/// keys are reported together.
pub fn parse_solve_config(text: &str) -> Result<SolveConfig> {
    let mut kv: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| perr(line, "expected 'key = value'"))?;
        let (k, v) = (k.trim(), v.trim());
        if !REQUIRED.contains(&k) && !OPTIONAL.contains(&k) {
            return Err(perr(line, format!("unknown key '{k}'")));
        }
        if kv.insert(k, (line, v)).is_some() {
            return Err(perr(line, format!("key '{k}' given twice")));
        }
    }
    let mut missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !kv.contains_key(k)).collect();
    if kv.get("bc_kind").is_some_and(|(_, v)| *v == "custom_file") && !kv.contains_key("bc_file") {
        missing.push("bc_file");
    }
    if !missing.is_empty() {
        return Err(FbError::Config(format!("missing keys: {}", missing.join(", "))));
    }
    let get = |k: &str| kv[k];

    let (l, v) = get("p");
    let p = num(l, "p", v)?;
    make_params(p).map_err(|e| perr(l, e.to_string()))?;
    let (l, v) = get("n");
    let n = count(l, "n", v)?;
    if !(2..=MAX_DIM).contains(&n) {
        return Err(perr(l, format!("n must be 2 or 3, got {n}")));
    }
    let (l, v) = get("m");
    let m = count(l, "m", v)?;
    if !(1..=16).contains(&m) {
        return Err(perr(l, format!("m must lie in 1..=16, got {m}")));
    }
    let (l, v) = get("box");
    let (lower, upper) = parse_box(v, n).map_err(|msg| perr(l, msg))?;
    let (l, v) = get("h");
    let h = num(l, "h", v)?;
    if !(h > 0.0) {
        return Err(perr(l, "h must be positive"));
    }

    let (l, v) = get("bc_kind");
    let bc = match v {
        "halfspace" => {
            let shift = match kv.get("bc_shift") {
                Some(&(l, v)) => num(l, "bc_shift", v)?,
                None => 0.0,
            };
            let e = match kv.get("bc_e") {
                Some(&(l, v)) => numbers(l, "bc_e", v)?,
                None => (0..n).map(|k| if k + 1 == n { 1.0 } else { 0.0 }).collect(),
            };
            let f = match kv.get("bc_f") {
                Some(&(l, v)) => numbers(l, "bc_f", v)?,
                None => (0..m).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect(),
            };
            if e.len() != n {
                return Err(perr(kv["bc_e"].0, format!("bc_e needs {n} entries")));
            }
            if f.len() != m {
                return Err(perr(kv["bc_f"].0, format!("bc_f needs {m} entries")));
            }
            BoundaryData::Halfspace { shift, e, f }
        }
        "custom_file" => BoundaryData::CustomFile { path: PathBuf::from(kv["bc_file"].1) },
        other => return Err(perr(l, format!("bc_kind must be halfspace or custom_file, got '{other}'"))),
    };

    let opt_num = |k: &str| kv.get(k).map(|&(l, v)| num(l, k, v)).transpose();
    let tau0 = opt_num("tau0")?;
    let backtrack = opt_num("backtrack")?;
    let tol_rel = opt_num("tol_rel")?;
    let zero_threshold = opt_num("zero_threshold")?;
    let max_iter = kv.get("max_iter").map(|&(l, v)| count(l, "max_iter", v)).transpose()?;
    let continuation = match kv.get("continuation") {
        Some(&(_, "none" | "")) | None => Vec::new(),
        Some(&(l, v)) => numbers(l, "continuation", v)?,
    };
    let polish = match kv.get("polish") {
        None => None,
        Some(&(_, "true")) => Some(true),
        Some(&(_, "false")) => Some(false),
        Some(&(l, v)) => return Err(perr(l, format!("polish must be true or false, got '{v}'"))),
    };
    let cfg = SolveConfig { p, n, m, lower, upper, h, bc, tau0, backtrack, max_iter, tol_rel, zero_threshold, continuation, polish };
    cfg.solver_config().validate()?;
    cfg.grid()?;
    Ok(cfg)
}

/// `lo:hi` for every axis, or one `lo:hi` per axis separated by commas.
fn parse_box(v: &str, n: usize) -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
    let parts: Vec<&str> = v.split(',').collect();
    let axes = match parts.len() {
        1 => vec![parts[0]; n],
        k if k == n => parts,
        k => return Err(format!("box has {k} intervals for dimension {n}")),
    };
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for a in axes {
        let (x, y) = a.split_once(':').ok_or_else(|| format!("box interval '{a}' is not lo:hi"))?;
        let x: f64 = x.trim().parse().map_err(|_| format!("bad box bound '{x}'"))?;
        let y: f64 = y.trim().parse().map_err(|_| format!("bad box bound '{y}'"))?;
        if !(x.is_finite() && y.is_finite() && x < y) {
            return Err(format!("box interval {x}:{y} must be finite with lo < hi"));
        }
        lo.push(x);
        hi.push(y);
    }
    Ok((lo, hi))
}

/// `a:b:step`, inclusive of `b` up to rounding.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| FbError::Parse { line: 1, msg };
    let parts: Vec<&str> = s.trim().split(':').collect();
    let [a, b, step] = parts[..] else {
        return Err(bad(format!("range '{s}' is not a:b:step")));
    };
    let parse = |t: &str| -> Result<f64> {
        let x: f64 = t.trim().parse().map_err(|_| bad(format!("'{t}' is not a number")))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(bad("range bounds must be finite".into()))
        }
    };
    let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
    if !(step > 0.0) || b < a {
        return Err(bad(format!("range {a}:{b}:{step} needs step > 0 and a <= b")));
    }
    let len = ((b - a) / step + 1e-9).floor();
    if !(len < MAX_RANGE_LEN as f64) {
        return Err(bad(format!("range {a}:{b}:{step} has too many entries")));
    }
    let out: Vec<f64> = (0..=len as usize).map(|k| a + k as f64 * step).collect();
    if out.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(bad(format!("step {step} is below the resolution of {a}:{b}")));
    }
    Ok(out)
}

/// `x,y` or `x,y,z`.
pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    let x = parse_list(s)?;
    if !(2..=MAX_DIM).contains(&x.len()) {
        return Err(FbError::Parse { line: 1, msg: format!("point '{s}' needs 2 or 3 coordinates") });
    }
    Ok(x)
}

/// Nonempty comma-separated list of finite numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| FbError::Parse { line: 1, msg: format!("'{t}' is not a finite number") })
        })
        .collect()
}
