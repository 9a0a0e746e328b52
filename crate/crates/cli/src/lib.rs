//! Command implementations behind the `ivim` binary.
//!
//! Every command validates its inputs and computes all results before
//! touching the output directory; files are written through a temp file and
//! renamed into place.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ivim_core::{
    empirical_order, rk4_reference, trajectory_error, Error, ProblemFile, QuadratureMode,
    ReferenceSolution, SolveConfig, SolveReport,
};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "ivim",
    version,
    about = "Interpolated variational iteration solver for initial value problems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write solution.csv and summary.json.
    Solve(SolveArgs),
    /// Sweep n (or m) and write convergence.csv with errors and observed orders.
    Convergence(ConvergenceArgs),
    /// Solve with IVIM and RK4 and write compare.csv with per-node gaps.
    Compare(CompareArgs),
    /// Print a problem (built-in or file) as a JSON problem file.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Paper,
    #[value(alias = "full_trapezoid")]
    FullTrapezoid,
}

impl From<ModeArg> for QuadratureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Paper => QuadratureMode::Paper,
            ModeArg::FullTrapezoid => QuadratureMode::FullTrapezoid,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Built-in problem (ex1, ex2, ex3) or path to a JSON problem file.
    #[arg(long)]
    pub problem: String,
    /// Quadrature mode for the discrete update.
    #[arg(long, value_enum, default_value = "paper")]
    pub mode: ModeArg,
    /// Directory receiving the output files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Worker threads; results are identical for any value.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Write null instead of wall-clock timings, making summary.json reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Grid nodes.
    #[arg(long)]
    pub n: usize,
    /// Iteration count (upper bound when --stop-tol is set).
    #[arg(long)]
    pub m: usize,
    /// Stop early once successive iterates differ by at most this (0 disables).
    #[arg(long, default_value_t = 0.0)]
    pub stop_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated node counts to sweep, with --m fixed.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "m_list",
        required_unless_present = "m_list",
        requires = "m"
    )]
    pub n_list: Option<Vec<usize>>,
    /// Comma-separated iteration counts to sweep, with --n fixed.
    #[arg(long, value_delimiter = ',', requires = "n")]
    pub m_list: Option<Vec<usize>>,
    /// Node count for an iteration sweep.
    #[arg(long)]
    pub n: Option<usize>,
    /// Iteration count for a node sweep.
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of grid nodes, including both endpoints.
    #[arg(long)]
    pub n: usize,
    /// Number of iterations.
    #[arg(long)]
    pub m: usize,
    /// RK4 step; must divide the interval length.
    #[arg(long)]
    pub rk4_step: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub problem: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Divergence(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Divergence(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "input error: {msg}"),
            CliError::Divergence(msg) => write!(f, "divergence: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } | Error::Rk4Divergence { .. } => {
                CliError::Divergence(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => with_threads(args.common.threads, || run_solve(&args)),
        Command::Convergence(args) => with_threads(args.common.threads, || run_convergence(&args)),
        Command::Compare(args) => with_threads(args.common.threads, || run_compare(&args)),
        Command::Export(args) => run_export(&args),
    }
}

fn with_threads<F>(threads: usize, job: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    if threads == 0 {
        return Err(CliError::Input("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    pool.install(job)
}

/// 17 significant digits, enough to round-trip any double. Zero errors
/// print as `-inf` in log columns.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn seconds(d: Duration, enabled: bool) -> Option<f64> {
    enabled.then(|| (d.as_secs_f64() * 1000.0).round() / 1000.0)
}

fn load_problem(source: &str) -> Result<ProblemFile, CliError> {
    ProblemFile::load(source).map_err(|e| CliError::Input(e.to_string()))
}

fn solve_config(n: usize, m: usize, common: &CommonArgs) -> SolveConfig {
    SolveConfig {
        n,
        m_max: m,
        mode: common.mode.into(),
        parallel: common.threads > 1,
        ..Default::default()
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| CliError::Io(e.to_string()))?;
    for row in rows {
        w.write_record(row)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("summaries always serialize");
    out.push(b'\n');
    out
}

/// Write every file into `dir` via temp file + rename.
fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (name, bytes) in files {
        let target = dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
        tmp.write_all(bytes).map_err(|e| io_err(&target, e))?;
        tmp.persist(&target).map_err(|e| io_err(&target, e.error))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
/// Inputs that determine the results. The thread count is left out so that
/// outputs are byte-identical for any degree of parallelism.
struct ConfigEcho {
    problem: String,
    n: Option<usize>,
    m: Option<usize>,
    mode: QuadratureMode,
    stop_tol: f64,
    divergence_cap: f64,
}

impl ConfigEcho {
    fn new(problem: &ProblemFile, cfg: &SolveConfig) -> Self {
        ConfigEcho {
            problem: problem.name.clone(),
            n: Some(cfg.n),
            m: Some(cfg.m_max),
            mode: cfg.mode,
            stop_tol: cfg.stop_tol,
            divergence_cap: cfg.divergence_cap,
        }
    }
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    command: &'static str,
    config: ConfigEcho,
    components: usize,
    iterations_run: usize,
    final_successive_diff: Option<f64>,
    max_abs_error: Option<f64>,
    wall_time_seconds: Option<f64>,
}

pub fn run_solve(args: &SolveArgs) -> Result<(), CliError> {
    let problem = load_problem(&args.common.problem)?;
    let sys = problem.compile()?;
    let mut cfg = solve_config(args.n, args.m, &args.common);
    cfg.stop_tol = args.stop_tol;
    let report = ivim_core::solve(&sys, &cfg, None)?;

    let csv = solution_csv(&report)?;
    let summary = SolveSummary {
        command: "solve",
        config: ConfigEcho::new(&problem, &cfg),
        components: report.components(),
        iterations_run: report.iterations_run,
        final_successive_diff: report.diffs.last().copied(),
        max_abs_error: report.max_error(),
        wall_time_seconds: seconds(report.wall_time, !args.common.no_timing),
    };
    write_outputs(
        &args.common.out_dir,
        &[
            ("solution.csv", csv),
            ("summary.json", json_bytes(&summary)),
        ],
    )
}

fn solution_csv(report: &SolveReport) -> Result<Vec<u8>, CliError> {
    let k = report.components();
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|j| format!("u{j}")));
    if report.errors.is_some() {
        header.extend((1..=k).map(|j| format!("exact{j}")));
        header.extend((1..=k).map(|j| format!("abs_err{j}")));
        header.push("log10_err".to_string());
    }
    let values = report.node_rows();
    let rows = report
        .grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            let mut row = vec![fmt_num(t)];
            row.extend(values[r].iter().map(|&v| fmt_num(v)));
            if let Some(errors) = &report.errors {
                let errs: Vec<f64> = errors.iter().map(|e| e[r]).collect();
                row.extend(report_exact(report, r).iter().map(|&v| fmt_num(v)));
                row.extend(errs.iter().map(|&e| fmt_num(e)));
                let worst = errs.iter().fold(0.0, |acc: f64, e| acc.max(*e));
                row.push(fmt_num(worst.log10()));
            }
            row
        })
        .collect::<Vec<_>>();
    csv_bytes(&header, &rows)
}

fn report_exact(report: &SolveReport, node: usize) -> Vec<f64> {
    report
        .exact_rows
        .as_ref()
        .map(|rows| rows[node].clone())
        .unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct ConvergenceRow {
    n: usize,
    m: usize,
    max_abs: f64,
    observed_order: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ConvergenceSummary {
    command: &'static str,
    problem: String,
    mode: QuadratureMode,
    reference: String,
    rows: Vec<ConvergenceRow>,
    wall_time_seconds: Option<f64>,
}

pub fn run_convergence(args: &ConvergenceArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let problem = load_problem(&args.common.problem)?;
    let sys = problem.compile()?;
    let points: Vec<(usize, usize)> = match (&args.n_list, &args.m_list) {
        (Some(ns), None) => {
            let m = args
                .m
                .ok_or_else(|| CliError::Input("--n-list needs --m".into()))?;
            ns.iter().map(|&n| (n, m)).collect()
        }
        (None, Some(ms)) => {
            let n = args
                .n
                .ok_or_else(|| CliError::Input("--m-list needs --n".into()))?;
            ms.iter().map(|&m| (n, m)).collect()
        }
        _ => {
            return Err(CliError::Input(
                "exactly one of --n-list or --m-list is required".into(),
            ))
        }
    };
    if points.is_empty() {
        return Err(CliError::Input("sweep list is empty".into()));
    }
    let key = |p: &(usize, usize)| if args.n_list.is_some() { p.0 } else { p.1 };
    if points.windows(2).any(|w| key(&w[0]) >= key(&w[1])) {
        return Err(CliError::Input(
            "sweep list must be strictly ascending".into(),
        ));
    }
    for &(n, m) in &points {
        solve_config(n, m, &args.common).validate()?;
    }

    // closed form when available, otherwise RK4 at a hundredth of the finest step
    let reference_kind;
    let rk4 = if sys.exact().is_some() {
        reference_kind = "closed_form".to_string();
        None
    } else {
        let finest = points.iter().map(|p| p.0).max().expect("nonempty");
        let step = (sys.t_end() - sys.a()) / (100 * (finest - 1)) as f64;
        reference_kind = format!("rk4(step={})", fmt_num(step));
        Some(rk4_reference(&sys, step)?)
    };

    let run_point = |&(n, m): &(usize, usize)| -> Result<f64, CliError> {
        let cfg = solve_config(n, m, &args.common);
        let report = ivim_core::solve(&sys, &cfg, None)?;
        match &rk4 {
            None => Ok(report.max_error().expect("exact solution present")),
            Some(reference) => Ok(ivim_core::error_metrics(&report, reference)?.max_abs),
        }
    };
    let errors: Vec<f64> = if args.common.threads > 1 {
        use rayon::prelude::*;
        points.par_iter().map(run_point).collect::<Result<_, _>>()?
    } else {
        points.iter().map(run_point).collect::<Result<_, _>>()?
    };

    let mut rows = Vec::with_capacity(points.len());
    for (idx, (&(n, m), &max_abs)) in points.iter().zip(&errors).enumerate() {
        let observed_order = if idx > 0 && args.n_list.is_some() {
            let (prev_n, _) = points[idx - 1];
            let prev_err = errors[idx - 1];
            ((n - 1) == 2 * (prev_n - 1))
                .then(|| empirical_order(prev_err, max_abs).ok())
                .flatten()
        } else {
            None
        };
        rows.push(ConvergenceRow {
            n,
            m,
            max_abs,
            observed_order,
        });
    }

    let header: Vec<String> = ["n", "m", "max_abs", "observed_order"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.m.to_string(),
                fmt_num(r.max_abs),
                r.observed_order.map(fmt_num).unwrap_or_default(),
            ]
        })
        .collect();
    let csv = csv_bytes(&header, &csv_rows)?;
    let summary = ConvergenceSummary {
        command: "convergence",
        problem: problem.name.clone(),
        mode: args.common.mode.into(),
        reference: reference_kind,
        rows,
        wall_time_seconds: seconds(started.elapsed(), !args.common.no_timing),
    };
    write_outputs(
        &args.common.out_dir,
        &[
            ("convergence.csv", csv),
            ("summary.json", json_bytes(&summary)),
        ],
    )
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    command: &'static str,
    config: ConfigEcho,
    rk4_step: f64,
    iterations_run: usize,
    max_gap: f64,
    ivim_max_abs_error: Option<f64>,
    rk4_max_abs_error: Option<f64>,
    ivim_wall_time_seconds: Option<f64>,
    rk4_wall_time_seconds: Option<f64>,
}

pub fn run_compare(args: &CompareArgs) -> Result<(), CliError> {
    let problem = load_problem(&args.common.problem)?;
    let sys = problem.compile()?;
    let cfg = solve_config(args.n, args.m, &args.common);
    cfg.validate()?;

    let rk4_started = Instant::now();
    let rk4 = rk4_reference(&sys, args.rk4_step)?;
    let rk4_time = rk4_started.elapsed();
    let report = ivim_core::solve(&sys, &cfg, None)?;

    let ivim_traj = ReferenceSolution::from_report(&report);
    let k = report.components();
    let ivim_rows = report.node_rows();
    let rk4_rows: Vec<Vec<f64>> = report
        .grid
        .nodes()
        .iter()
        .map(|&t| rk4.sample(t))
        .collect::<Result<_, _>>()?;
    let gaps = trajectory_error(&ivim_traj, &rk4)?;
    let rk4_error = match sys.exact() {
        Some(exact) => Some(
            rk4.nodes
                .iter()
                .zip(&rk4.values)
                .flat_map(|(&t, v)| {
                    let e = exact(t);
                    v.iter()
                        .zip(e)
                        .map(|(x, y)| (x - y).abs())
                        .collect::<Vec<_>>()
                })
                .fold(0.0, f64::max),
        ),
        None => None,
    };

    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|j| format!("ivim{j}")));
    header.extend((1..=k).map(|j| format!("rk4_{j}")));
    header.extend((1..=k).map(|j| format!("gap{j}")));
    let rows: Vec<Vec<String>> = report
        .grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            let mut row = vec![fmt_num(t)];
            row.extend(ivim_rows[r].iter().map(|&v| fmt_num(v)));
            row.extend(rk4_rows[r].iter().map(|&v| fmt_num(v)));
            row.extend(
                ivim_rows[r]
                    .iter()
                    .zip(&rk4_rows[r])
                    .map(|(x, y)| fmt_num((x - y).abs())),
            );
            row
        })
        .collect();
    let csv = csv_bytes(&header, &rows)?;
    let timing = !args.common.no_timing;
    let summary = CompareSummary {
        command: "compare",
        config: ConfigEcho::new(&problem, &cfg),
        rk4_step: args.rk4_step,
        iterations_run: report.iterations_run,
        max_gap: gaps.max_abs,
        ivim_max_abs_error: report.max_error(),
        rk4_max_abs_error: rk4_error,
        ivim_wall_time_seconds: seconds(report.wall_time, timing),
        rk4_wall_time_seconds: seconds(rk4_time, timing),
    };
    write_outputs(
        &args.common.out_dir,
        &[("compare.csv", csv), ("summary.json", json_bytes(&summary))],
    )
}

pub fn run_export(args: &ExportArgs) -> Result<(), CliError> {
    let problem = load_problem(&args.problem)?;
    let mut json = problem.to_json();
    json.push('\n');
    match &args.out {
        Some(path) => {
            let dir = path
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            let name = path
                .file_name()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::Input(format!("bad output path {}", path.display())))?;
            write_outputs(dir, &[(name, json.into_bytes())])
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}
