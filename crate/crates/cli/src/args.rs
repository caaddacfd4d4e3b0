use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Bad arguments or unreadable inputs; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "fb", version, about = "Numerical laboratory for the superlinear free boundary system")]
pub struct Cli {
    /// Worker threads (overrides FB_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress the summary line and warnings.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Where to write the run manifest (default: next to the outputs).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the one-dimensional profile u0 or the ODE family u_lambda.
    Exact(ExactArgs),
    /// Minimize the energy for a config file.
    Solve(SolveArgs),
    /// Free boundary diagnostics on a VFG1 field.
    Diagnose(DiagnoseArgs),
    /// Verify the comparison functions for one (case, p, eps).
    Barriers(BarrierArgs),
    /// Solve the degenerate linearized problem on a half domain.
    Linearized(LinearizedArgs),
    /// Batch diagnostics over p values and grid resolutions.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub p: f64,
    /// Output CSV with columns t,u0,du0,ddu0.
    #[arg(long)]
    pub emit: PathBuf,
    /// Integrate u'' = u^(p-1), u(0) = lambda, u'(0) = 0 instead.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sample points as a:b:step.
    #[arg(long, default_value = "0:1:0.001")]
    pub t: String,
    /// Integrator step for --lambda.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for u.vfg, report.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub p: f64,
    /// Point near the free boundary, x,y[,z].
    #[arg(long)]
    pub center: String,
    /// Radii as a:b:step.
    #[arg(long)]
    pub radii: String,
    #[arg(long)]
    pub report: PathBuf,
    /// Free boundary polyline as CSV.
    #[arg(long)]
    pub emit_fb: Option<PathBuf>,
    /// Weiss energy per radius as CSV.
    #[arg(long)]
    pub emit_weiss: Option<PathBuf>,
    /// |u| as a 16-bit PGM (2-D fields), scaling in <path>.txt.
    #[arg(long)]
    pub emit_pgm: Option<PathBuf>,
    /// Initial radius of the trap sequence (default: largest radius).
    #[arg(long)]
    pub trap_r0: Option<f64>,
    /// Radius ratio of the trap sequence.
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    A,
    B,
}

#[derive(Debug, Args)]
pub struct BarrierArgs {
    #[arg(long, value_enum, ignore_case = true)]
    pub case: CaseArg,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub eps: f64,
    /// Search for constants instead of using the shipped table.
    #[arg(long)]
    pub auto_constants: bool,
    #[arg(long)]
    pub report: PathBuf,
    /// Samples per unit length for the margin checks.
    #[arg(long, default_value_t = 64)]
    pub density: usize,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    CellAverage,
    Midpoint,
}

#[derive(Debug, Args)]
pub struct LinearizedArgs {
    #[arg(long)]
    pub p: f64,
    /// `auto` for 2(kappa - 1), or a number above -1.
    #[arg(long, default_value = "auto")]
    pub s: String,
    /// Nodes per unit length on [-1,1] x [0,1].
    #[arg(long)]
    pub grid: usize,
    /// `builtin:quadratic` or a scalar VFG1 file on the same grid.
    #[arg(long, default_value = "builtin:quadratic")]
    pub data: String,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, value_enum, default_value = "cell-average")]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Also write the solution as VFG1.
    #[arg(long)]
    pub emit_field: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Growth,
    Flatness,
    Weiss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    /// Sampled half-space solution.
    Exact,
    /// Minimizer for the flat boundary data.
    Solve,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub p_list: String,
    #[arg(long, value_enum)]
    pub task: Task,
    /// Nodes per unit length, comma separated.
    #[arg(long, default_value = "128")]
    pub grid_list: String,
    #[arg(long, value_enum, default_value = "exact")]
    pub source: Source,
    #[arg(long, default_value = "sweep")]
    pub out: PathBuf,
}
