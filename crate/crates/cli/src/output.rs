use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use fb_core::diagnostics::FreeBoundary;
use fb_core::energy::WeissRecord;
use fb_core::VectorField;
use serde::Serialize;

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Rows of `t,u0,du0,ddu0`; a value that is undefined is written as `nan`.
pub fn write_profile_csv(path: &Path, rows: &[[f64; 4]]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,u0,du0,ddu0")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r[0], r[1], r[2], r[3])?;
    }
    w.flush()?;
    Ok(())
}

/// One line per segment (2-D) or triangle (3-D) with its vertex coordinates.
pub fn write_fb_csv(path: &Path, fb: &FreeBoundary) -> anyhow::Result<()> {
    let mut w = create(path)?;
    let n = fb.dim;
    let names = ["x", "y", "z"];
    let cells: Vec<Vec<usize>> = if n == 2 {
        fb.segments.iter().map(|s| s.to_vec()).collect()
    } else {
        fb.triangles.iter().map(|t| t.to_vec()).collect()
    };
    let k = if n == 2 { 2 } else { 3 };
    let mut header = vec!["cell".to_string()];
    for v in 0..k {
        header.extend(names[..n].iter().map(|c| format!("{c}{v}")));
    }
    writeln!(w, "{}", header.join(","))?;
    // A crossing that lands exactly on a node yields zero-length pieces.
    let cells: Vec<Vec<usize>> = cells.into_iter().filter(|c| c.iter().any(|&v| fb.vertices[v] != fb.vertices[c[0]])).collect();
    for (c, cell) in cells.iter().enumerate() {
        let mut row = vec![c.to_string()];
        for &v in cell {
            row.extend(fb.vertices[v][..n].iter().map(|x| x.to_string()));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_weiss_csv(path: &Path, records: &[WeissRecord]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "r,W,volume_part,surface_part")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.r, r.w, r.volume_part, r.surface_part)?;
    }
    w.flush()?;
    Ok(())
}

/// `|u|` of a 2-D field as a binary 16-bit PGM. Image rows run from the
/// largest `x_2` down, columns along `x_1`; pixel `= round(|u| / max * 65535)`.
/// Returns the path of the sidecar holding the scaling.
pub fn write_pgm(path: &Path, field: &VectorField) -> anyhow::Result<PathBuf> {
    let g = &field.grid;
    if g.dim() != 2 {
        bail!(crate::args::UsageError("--emit-pgm needs a 2-D field".into()));
    }
    let (nx, ny) = (g.shape()[0], g.shape()[1]);
    let modulus = field.modulus();
    let max = modulus.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let mut w = create(path)?;
    write!(w, "P5\n{nx} {ny}\n65535\n")?;
    for row in (0..ny).rev() {
        for col in 0..nx {
            let v = (modulus[g.index(&[col, row])] * scale).round().clamp(0.0, 65535.0) as u16;
            w.write_all(&v.to_be_bytes())?;
        }
    }
    w.flush()?;
    let mut side = path.as_os_str().to_owned();
    side.push(".txt");
    let side = PathBuf::from(side);
    let mut s = create(&side)?;
    writeln!(s, "quantity |u|")?;
    writeln!(s, "min 0")?;
    writeln!(s, "max {max}")?;
    writeln!(s, "pixel = round(|u| * {scale})")?;
    writeln!(s, "rows x2 descending from {} to {}", g.upper(1), g.origin()[1])?;
    writeln!(s, "columns x1 ascending from {} to {}", g.origin()[0], g.upper(0))?;
    s.flush()?;
    Ok(side)
}
