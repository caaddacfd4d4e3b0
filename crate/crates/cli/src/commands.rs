use std::path::{Path, PathBuf};

use anyhow::Context as _;
use fb_core::barriers::{self, BarrierCase, DEFAULT_C_DELTA};
use fb_core::config::{parse_list, parse_point, parse_range, parse_solve_config, BoundaryData};
use fb_core::diagnostics::{decay_check, extract_free_boundary, fit_flatness, fit_growth_exponent, harnack_trap};
use fb_core::energy::{discrete_energy, weiss, WeissRecord};
use fb_core::exact::{integrate_u_lambda, weiss_of_halfspace};
use fb_core::grid::{read_vfg1, sample_exact, write_vfg1, FieldSource};
use fb_core::linearized::{check_c1sigma, flux_balance, solve_linearized, FaceRule, LinearizedProblem};
use fb_core::solver::{minimize, SolverConfig};
use fb_core::{make_params, Grid, HalfSpaceSolution, PParams, VectorField};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::manifest::Manifest;
use crate::output;

pub struct Context {
    pub quiet: bool,
    pub manifest: Option<PathBuf>,
    pub argv: Vec<String>,
}

impl Context {
    fn say(&self, line: String) {
        if !self.quiet {
            println!("{line}");
        }
    }

    /// `--manifest` if given, else `manifest.json` in `dir`.
    fn finish(&self, m: &Manifest, dir: &Path) -> anyhow::Result<()> {
        let path = self.manifest.clone().unwrap_or_else(|| dir.join("manifest.json"));
        m.write(&path)
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn params(p: f64) -> anyhow::Result<PParams> {
    make_params(p).map_err(|e| usage(e.to_string()))
}

fn parent(path: &Path) -> PathBuf {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn read_field(path: &Path) -> anyhow::Result<VectorField> {
    if !path.is_file() {
        return Err(usage(format!("no such field file: {}", path.display())));
    }
    read_vfg1(path).with_context(|| format!("reading {}", path.display()))
}

/// `{"ok": value}` or `{"error": message}`.
fn outcome<T: Serialize>(r: fb_core::Result<T>) -> Value {
    match r {
        Ok(v) => json!({ "ok": v }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn exact(ctx: &Context, a: &ExactArgs) -> anyhow::Result<bool> {
    let q = params(a.p)?;
    let ts = parse_range(&a.t)?;
    if ts[0] < 0.0 {
        return Err(usage("sample points must be nonnegative"));
    }
    let rows: Vec<[f64; 4]> = match a.lambda {
        None => ts.iter().map(|&t| [t, q.u0(t), q.du0(t), q.ddu0(t).unwrap_or(f64::NAN)]).collect(),
        Some(lambda) => {
            let t_max = *ts.last().unwrap();
            let prof = integrate_u_lambda(&q, lambda, t_max.max(a.step), a.step)?;
            ts.iter()
                .map(|&t| {
                    let (u, du) = prof.eval(t);
                    [t, u, du, prof.second_derivative(t)]
                })
                .collect()
        }
    };
    output::write_profile_csv(&a.emit, &rows)?;
    let mut m = Manifest::new("exact", ctx.argv.clone(), json!({ "p": a.p, "lambda": a.lambda, "t": a.t, "step": a.step }));
    m.output(&a.emit)?;
    ctx.finish(&m, &parent(&a.emit))?;
    ctx.say(format!("exact p={} kappa={} c_p={} rows={} -> {}", q.p, q.kappa, q.c_p, rows.len(), a.emit.display()));
    Ok(true)
}

/// Boundary data for a solve configuration.
fn boundary_field(grid: &Grid, m: usize, bc: &BoundaryData, hs: Option<&HalfSpaceSolution>, base: &Path) -> anyhow::Result<(VectorField, Option<PathBuf>)> {
    match (bc, hs) {
        (BoundaryData::Halfspace { .. }, Some(hs)) => Ok((sample_exact(grid, &FieldSource::HalfSpace(hs))?, None)),
        (BoundaryData::CustomFile { path }, _) => {
            let path = if path.is_absolute() { path.clone() } else { base.join(path) };
            let f = read_field(&path)?;
            if f.grid != *grid || f.m != m {
                return Err(usage(format!("{} does not match the configured grid and m", path.display())));
            }
            Ok((f, Some(path)))
        }
        _ => unreachable!("half-space data always builds a solution"),
    }
}

pub fn solve(ctx: &Context, a: &SolveArgs) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| usage(format!("reading {}: {e}", a.config.display())))?;
    let cfg = parse_solve_config(&text)?;
    let q = cfg.params()?;
    let grid = cfg.grid()?;
    let hs = cfg.halfspace()?;
    let (bc, bc_path) = boundary_field(&grid, cfg.m, &cfg.bc, hs.as_ref(), &parent(&a.config))?;
    let scfg: SolverConfig = cfg.solver_config();
    let (u, report) = minimize(&grid, &bc, &q, &scfg)?;

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let field_path = a.out.join("u.vfg");
    let report_path = a.out.join("report.json");
    write_vfg1(&u, &field_path)?;
    let energy = discrete_energy(&u, &q);
    let competitor = match &hs {
        Some(hs) => Some(discrete_energy(&sample_exact(&grid, &FieldSource::HalfSpace(hs))?, &q)),
        None => None,
    };
    output::write_json(
        &report_path,
        &json!({
            "config": cfg,
            "params": q,
            "shape": grid.shape(),
            "energy": energy,
            "sampled_exact_energy": competitor,
            "report": report,
        }),
    )?;
    let mut m = Manifest::new("solve", ctx.argv.clone(), serde_json::to_value(&cfg)?);
    m.input(&a.config)?;
    if let Some(p) = &bc_path {
        m.input(p)?;
    }
    m.output(&field_path)?;
    m.output(&report_path)?;
    ctx.finish(&m, &a.out)?;
    ctx.say(format!(
        "solve p={} shape={:?} iterations={} converged={} energy={:.12e} -> {}",
        q.p,
        grid.shape(),
        report.iterations,
        report.converged,
        energy.total,
        field_path.display()
    ));
    Ok(true)
}

pub fn diagnose(ctx: &Context, a: &DiagnoseArgs) -> anyhow::Result<bool> {
    let q = params(a.p)?;
    let u = read_field(&a.field)?;
    let center = parse_point(&a.center)?;
    let radii = parse_range(&a.radii)?;
    let n = u.grid.dim();
    if center.len() != n {
        return Err(usage(format!("center has {} coordinates, field is {n}-dimensional", center.len())));
    }
    let h = u.grid.h();
    let r_max = radii.iter().copied().fold(0.0, f64::max);

    let fb = extract_free_boundary(&u, 0.0)?;
    let snap = fb.snap(&center);
    let x0: Vec<f64> = match snap {
        Some(s) if s.distance <= 2.0 * h => s.point[..n].to_vec(),
        _ => center.clone(),
    };
    let weiss_rows: Vec<fb_core::Result<WeissRecord>> = radii.iter().map(|&r| weiss(&u, &x0, r, &q)).collect();
    let weiss_ok: Vec<WeissRecord> = weiss_rows.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let monotone = weiss_ok.windows(2).all(|w| w[1].w >= w[0].w - 10.0 * h / 0.1);
    let trap_r0 = a.trap_r0.unwrap_or(r_max);

    let report = json!({
        "field": a.field,
        "params": q,
        "center": center,
        "radii": radii,
        "free_boundary": {
            "segments": fb.segments.len(),
            "triangles": fb.triangles.len(),
            "interface_edges": fb.interface.len(),
            "snap": snap,
            "diagnostic_center": x0,
        },
        "flatness": outcome(fit_flatness(&u, &q, &x0, r_max)),
        "growth": outcome(fit_growth_exponent(&u, &center, &radii)),
        "weiss": weiss_rows.into_iter().map(outcome).collect::<Vec<_>>(),
        "weiss_nondecreasing_within_tol": monotone,
        "trap": outcome(harnack_trap(&u, &q, &center, trap_r0, a.eta, 32)),
        "decay": outcome(decay_check(&u, &q, &x0, &radii)),
    });
    output::write_json(&a.report, &report)?;
    let mut m = Manifest::new(
        "diagnose",
        ctx.argv.clone(),
        json!({ "p": a.p, "center": center, "radii": radii, "trap_r0": trap_r0, "eta": a.eta }),
    );
    m.input(&a.field)?;
    m.output(&a.report)?;
    if let Some(p) = &a.emit_fb {
        output::write_fb_csv(p, &fb)?;
        m.output(p)?;
    }
    if let Some(p) = &a.emit_weiss {
        output::write_weiss_csv(p, &weiss_ok)?;
        m.output(p)?;
    }
    if let Some(p) = &a.emit_pgm {
        let side = output::write_pgm(p, &u)?;
        m.output(p)?;
        m.output(&side)?;
    }
    ctx.finish(&m, &parent(&a.report))?;
    let growth = report["growth"]["ok"]["kappa_hat"].as_f64();
    let flat = report["flatness"]["ok"]["eps"].as_f64();
    ctx.say(format!(
        "diagnose kappa={} kappa_hat={} flatness_eps={} weiss_monotone={} -> {}",
        q.kappa,
        growth.map_or("n/a".into(), |v| v.to_string()),
        flat.map_or("n/a".into(), |v| v.to_string()),
        monotone,
        a.report.display()
    ));
    Ok(true)
}

pub fn barriers(ctx: &Context, a: &BarrierArgs) -> anyhow::Result<bool> {
    let q = params(a.p)?;
    let case = match a.case {
        CaseArg::A => BarrierCase::A,
        CaseArg::B => BarrierCase::B,
    };
    let (spec, search) = if a.auto_constants {
        let s = barriers::find_constants(case, &q, a.n, a.eps, DEFAULT_C_DELTA, a.density)?;
        let attempts = s.trace.len();
        (s.spec, Some(attempts))
    } else {
        if a.n != 2 {
            return Err(usage("shipped constants exist for n = 2 only; use --auto-constants"));
        }
        let spec = barriers::shipped_constants(case, a.p, a.eps)
            .ok_or_else(|| usage(format!("no shipped constants for case {case:?}, p = {}, eps = {}; use --auto-constants", a.p, a.eps)))??;
        (spec, None)
    };
    let report = barriers::barrier_margins(&spec, a.density)?;
    output::write_json(&a.report, &json!({ "report": report, "search_attempts": search }))?;
    let mut m = Manifest::new(
        "barriers",
        ctx.argv.clone(),
        json!({ "case": format!("{case:?}"), "p": a.p, "eps": a.eps, "n": a.n, "density": a.density, "auto_constants": a.auto_constants }),
    );
    m.output(&a.report)?;
    ctx.finish(&m, &parent(&a.report))?;
    let worst = report.worst();
    ctx.say(format!(
        "barriers case={case:?} p={} eps={} passed={} worst={} margin={:e} -> {}",
        a.p,
        a.eps,
        report.passed,
        worst.map_or("none", |w| w.name.as_str()),
        worst.map_or(f64::NAN, |w| w.margin),
        a.report.display()
    ));
    Ok(report.passed)
}

pub fn linearized(ctx: &Context, a: &LinearizedArgs) -> anyhow::Result<bool> {
    let q = params(a.p)?;
    let s = match a.s.as_str() {
        "auto" => 2.0 * (q.kappa - 1.0),
        v => v.parse::<f64>().map_err(|_| usage(format!("--s {v:?} is neither auto nor a number")))?,
    };
    if a.grid == 0 {
        return Err(usage("--grid must be positive"));
    }
    let grid = Grid::new(vec![-1.0, 0.0], vec![2.0, 1.0], 1.0 / a.grid as f64)?;
    let quadratic = move |x: &[f64]| x[1] * x[1] - (1.0 + s) * x[0] * x[0];
    let (prob, data_path) = match a.data.as_str() {
        "builtin:quadratic" => (LinearizedProblem::from_fn(s, grid.clone(), quadratic)?, None),
        file => {
            let path = PathBuf::from(file);
            let f = read_field(&path)?;
            if f.grid != grid || f.m != 1 {
                return Err(usage(format!("{file} is not a scalar field on the --grid {} half domain", a.grid)));
            }
            (LinearizedProblem::new(s, grid.clone(), f.values)?, Some(path))
        }
    };
    let rule = match a.rule {
        RuleArg::CellAverage => FaceRule::CellAverage,
        RuleArg::Midpoint => FaceRule::Midpoint,
    };
    let prob = prob.with_rule(rule);
    let sol = solve_linearized(&prob, a.tol, 50 * grid.num_nodes())?;
    let error = data_path.is_none().then(|| {
        (0..grid.num_nodes()).map(|i| (sol.phi.values[i] - quadratic(&grid.coords(i)[..2])).abs()).fold(0.0, f64::max)
    });
    let flux = flux_balance(&prob, &sol.phi, &[-0.5, 0.0], &[0.5, 0.5])?;
    let report = json!({
        "params": q,
        "s": s,
        "rule": rule,
        "h": grid.h(),
        "shape": grid.shape(),
        "iterations": sol.iterations,
        "final_residual": sol.residual_history.last(),
        "linf_error": error,
        "flux_balance": flux,
        "c1sigma": outcome(check_c1sigma(&sol.phi, &[0.0, 0.0])),
    });
    output::write_json(&a.report, &report)?;
    let mut m = Manifest::new(
        "linearized",
        ctx.argv.clone(),
        json!({ "p": a.p, "s": s, "grid": a.grid, "data": a.data, "rule": rule, "tol": a.tol }),
    );
    if let Some(p) = &data_path {
        m.input(p)?;
    }
    m.output(&a.report)?;
    if let Some(p) = &a.emit_field {
        write_vfg1(&sol.phi, p)?;
        m.output(p)?;
    }
    ctx.finish(&m, &parent(&a.report))?;
    ctx.say(format!(
        "linearized s={s} h={} iterations={} linf_error={} flux_balance={flux:e} -> {}",
        grid.h(),
        sol.iterations,
        error.map_or("n/a".into(), |e| format!("{e:e}")),
        a.report.display()
    ));
    Ok(true)
}

/// Center and radii shared by every sweep task: the flat interface sits at
/// `x_2 = -0.1` in the box `[-0.5, 0.5]^2`.
const SWEEP_SHIFT: f64 = 0.1;
const SWEEP_RADII: [f64; 7] = [0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];

pub fn sweep(ctx: &Context, a: &SweepArgs) -> anyhow::Result<bool> {
    let ps = parse_list(&a.p_list)?;
    let ns = parse_list(&a.grid_list)?;
    if ns.iter().any(|n| !(*n >= 40.0 && n.fract() == 0.0)) {
        return Err(usage("--grid-list entries must be integers of at least 40"));
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut m = Manifest::new(
        "sweep",
        ctx.argv.clone(),
        json!({ "p_list": ps, "grid_list": ns, "task": format!("{:?}", a.task), "source": format!("{:?}", a.source) }),
    );
    let center = [0.0, -SWEEP_SHIFT];
    for &nodes in &ns {
        for &p in &ps {
            let q = params(p)?;
            let grid = Grid::cube(2, -0.5, 0.5, 1.0 / nodes)?;
            let hs = HalfSpaceSolution::canonical(q, 2, 2, SWEEP_SHIFT);
            let sample = sample_exact(&grid, &FieldSource::HalfSpace(&hs))?;
            let u = match a.source {
                Source::Exact => sample,
                Source::Solve => minimize(&grid, &sample, &q, &SolverConfig::for_spacing(grid.h(), 2))?.0,
            };
            let result = match a.task {
                Task::Growth => {
                    let fit = fit_growth_exponent(&u, &center, &SWEEP_RADII)?;
                    json!({ "kappa_hat": fit.kappa_hat, "fit": fit })
                }
                Task::Flatness => json!({ "fit": fit_flatness(&u, &q, &center, 0.4)? }),
                Task::Weiss => {
                    let records = SWEEP_RADII.iter().map(|&r| weiss(&u, &center, r, &q)).collect::<fb_core::Result<Vec<_>>>()?;
                    json!({ "records": records, "omega_p": weiss_of_halfspace(&q, 2, 1024)? })
                }
            };
            let path = a.out.join(format!("p{p}_n{nodes}.json"));
            output::write_json(
                &path,
                &json!({ "p": p, "kappa": q.kappa, "c_p": q.c_p, "h": grid.h(), "task": format!("{:?}", a.task).to_lowercase(), "result": result }),
            )?;
            m.output(&path)?;
            ctx.say(format!("sweep p={p} h=1/{nodes} -> {}", path.display()));
        }
    }
    ctx.finish(&m, &a.out)?;
    Ok(true)
}
