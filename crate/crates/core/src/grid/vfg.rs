//! VFG1 text format.
//!
//! ```text
//! VFG1
//! n m
//! shape_0 .. shape_{n-1}
//! origin_0 .. origin_{n-1}
//! h
//! index x_0 .. x_{n-1} u_1 .. u_m      (one line per node, row-major)
//! ```
//!
//! Floats are written with 17 significant digits so a write/parse cycle is
//! bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Grid, VectorField, MAX_DIM};
use crate::error::{FbError, Result};

const MAX_COMPONENTS: usize = 64;

fn push_float(out: &mut String, v: f64) {
    let _ = write!(out, " {v:.16e}");
}

pub fn write_vfg1_string(field: &VectorField) -> String {
    let g = &field.grid;
    let n = g.dim();
    let mut s = String::with_capacity(64 + field.num_nodes() * (n + field.m + 1) * 25);
    s.push_str("VFG1\n");
    let _ = writeln!(s, "{n} {}", field.m);
    let shape: Vec<String> = g.shape().iter().map(|v| v.to_string()).collect();
    let _ = writeln!(s, "{}", shape.join(" "));
    let origin: Vec<String> = g.origin().iter().map(|v| format!("{v:.16e}")).collect();
    let _ = writeln!(s, "{}", origin.join(" "));
    let _ = writeln!(s, "{:.16e}", g.h());
    for i in 0..field.num_nodes() {
        let _ = write!(s, "{i}");
        let x = g.coords(i);
        for &xk in &x[..n] {
            push_float(&mut s, xk);
        }
        for &v in field.node(i) {
            push_float(&mut s, v);
        }
        s.push('\n');
    }
    s
}

pub fn write_vfg1(field: &VectorField, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(write_vfg1_string(field).as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn read_vfg1(path: impl AsRef<Path>) -> Result<VectorField> {
    let f = std::fs::File::open(path)?;
    parse_vfg1(BufReader::new(f))
}

fn perr(line: usize, msg: impl Into<String>) -> FbError {
    FbError::Parse { line, msg: msg.into() }
}

fn parse_floats(line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            let v: f64 = t.parse().map_err(|_| perr(line, format!("bad number {t:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(perr(line, format!("non-finite value {t:?}")))
            }
        })
        .collect()
}

/// Parses a VFG1 stream. Node lines must appear in index order and their
/// coordinates must agree with the header geometry.
pub fn parse_vfg1(reader: impl Read) -> Result<VectorField> {
    let mut lines = BufReader::new(reader).lines().enumerate().map(|(k, l)| (k + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((k, Ok(l))) => Ok((k, l)),
            Some((k, Err(e))) => Err(perr(k, format!("read error: {e}"))),
            None => Err(perr(0, format!("unexpected end of input, expected {what}"))),
        }
    };

    let (k, magic) = next("magic")?;
    if magic.trim_end() != "VFG1" {
        return Err(perr(k, "missing VFG1 magic"));
    }

    let (k, dims) = next("dimensions")?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(k, format!("bad integer {t:?}"))))
        .collect::<Result<_>>()?;
    let [n, m] = dims[..] else {
        return Err(perr(k, "expected `n m`"));
    };
    if !(2..=MAX_DIM).contains(&n) || m == 0 || m > MAX_COMPONENTS {
        return Err(perr(k, format!("unsupported n = {n}, m = {m}")));
    }

    let (k, shape) = next("shape")?;
    let shape: Vec<usize> = shape
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(k, format!("bad integer {t:?}"))))
        .collect::<Result<_>>()?;
    if shape.len() != n {
        return Err(perr(k, format!("expected {n} shape entries")));
    }

    let (k, origin) = next("origin")?;
    let origin = parse_floats(k, &origin)?;
    if origin.len() != n {
        return Err(perr(k, format!("expected {n} origin entries")));
    }

    let (k, h) = next("spacing")?;
    let h = parse_floats(k, &h)?;
    let [h] = h[..] else {
        return Err(perr(k, "expected a single spacing"));
    };
    let grid = Grid::from_shape(origin, shape, h).map_err(|e| perr(k, e.to_string()))?;
    let total = grid.num_nodes();
    let scale = (0..n).map(|a| grid.origin()[a].abs().max(grid.upper(a).abs())).fold(h, f64::max);

    let mut values = Vec::new();
    let mut count = 0usize;
    for (k, line) in lines {
        let line = line.map_err(|e| perr(k, format!("read error: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let idx: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| perr(k, "expected node index"))?;
        if idx != count || count >= total {
            return Err(perr(k, format!("node index {idx} out of sequence (expected {count} of {total})")));
        }
        let rest: Vec<&str> = toks.collect();
        if rest.len() != n + m {
            return Err(perr(k, format!("expected {} numbers after the index, got {}", n + m, rest.len())));
        }
        let nums = parse_floats(k, &rest.join(" "))?;
        let x = grid.coords(idx);
        for a in 0..n {
            if (nums[a] - x[a]).abs() > 1e-9 * scale {
                return Err(perr(k, format!("coordinate {a} = {} does not match grid ({})", nums[a], x[a])));
            }
        }
        values.extend_from_slice(&nums[n..]);
        count += 1;
    }
    if count != total {
        return Err(perr(0, format!("expected {total} nodes, found {count}")));
    }
    VectorField::from_values(grid, m, values)
}

/// Writes the nodes with `multi[axis] == index` as CSV: coordinates,
/// components and `|u|`.
pub fn write_csv_slice(field: &VectorField, axis: usize, index: usize, mut out: impl Write) -> Result<()> {
    let g = &field.grid;
    let n = g.dim();
    if axis >= n || index >= g.shape()[axis] {
        return Err(FbError::Grid(format!("slice {axis}:{index} outside shape {:?}", g.shape())));
    }
    let mut header: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
    header.extend((1..=field.m).map(|c| format!("u{c}")));
    header.push("norm".into());
    writeln!(out, "{}", header.join(","))?;
    let mut lo = g.origin().to_vec();
    let mut hi: Vec<f64> = (0..n).map(|k| g.upper(k)).collect();
    let coord = g.origin()[axis] + index as f64 * g.h();
    lo[axis] = coord - 0.25 * g.h();
    hi[axis] = coord + 0.25 * g.h();
    let mut rows = Vec::new();
    g.for_each_in_box(&lo, &hi, |i| rows.push(i));
    for i in rows {
        let x = g.coords(i);
        let mut row: Vec<String> = x[..n].iter().map(|v| format!("{v:.16e}")).collect();
        row.extend(field.node(i).iter().map(|v| format!("{v:.16e}")));
        row.push(format!("{:.16e}", field.norm_at(i)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
