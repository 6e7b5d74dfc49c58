//! `presic-lab`: loads JSON problem files and runs verification, iteration,
//! bound and b-estimation experiments on them.
//!
//! Every command returns an [`Outcome`] holding the exit code and the
//! rendered output, so the binary and the tests share one code path.
//! Exit codes: 0 success or verified, 1 falsified or not converged, 2 usage.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use presic_core::{
    check, iterate, kannan_report, picard, presic_bounds, ConditionSpec, IterationTrace, Point, Problem, ProblemFile,
    SamplePlan, StartConfig, StopRule,
};
use serde::Serialize;

pub mod demo;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_GRID: usize = 101;

/// Problem files shipped with the tool, by name.
pub const BUNDLED_PROBLEMS: &[(&str, &str)] = &[
    ("averaging-k1", include_str!("../problems/averaging-k1.json")),
    ("averaging-k2", include_str!("../problems/averaging-k2.json")),
    ("averaging-k3", include_str!("../problems/averaging-k3.json")),
    ("averaging-k5", include_str!("../problems/averaging-k5.json")),
    ("affine-k2", include_str!("../problems/affine-k2.json")),
    ("dsl-k2", include_str!("../problems/dsl-k2.json")),
    ("kannan-quarter", include_str!("../problems/kannan-quarter.json")),
    ("constant-k2", include_str!("../problems/constant-k2.json")),
    ("divergent-double", include_str!("../problems/divergent-double.json")),
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] presic_core::Error),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot write output: {0}")]
    Write(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_usage() => EXIT_FAILED,
            CliError::Write(_) => EXIT_FAILED,
            _ => EXIT_USAGE,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub samples: usize,
    pub grid: Option<usize>,
    pub format: Option<Format>,
    pub picard: bool,
    pub strict_domain: bool,
    /// Verification batches run on the rayon pool when set.
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: None,
            samples: DEFAULT_SAMPLES,
            grid: None,
            format: None,
            picard: false,
            strict_domain: false,
            parallel: true,
        }
    }
}

impl RunOptions {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn plan(&self) -> SamplePlan {
        let plan = match self.grid {
            Some(g) => SamplePlan::grid(g),
            None => SamplePlan::random(self.samples, self.seed()),
        };
        if self.parallel {
            plan
        } else {
            plan.sequential()
        }
    }

    fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }
}

/// Exit code plus rendered output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub body: String,
}

pub fn parse_problem(json: &str) -> CliResult<ProblemFile> {
    Ok(serde_json::from_str(json)?)
}

pub fn load_problem(path: &Path) -> CliResult<ProblemFile> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_problem(&text)
}

pub fn bundled_problem(name: &str) -> CliResult<ProblemFile> {
    let (_, json) = BUNDLED_PROBLEMS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::Usage(format!("no bundled problem named {name}")))?;
    parse_problem(json)
}

fn build(problem: &ProblemFile, opts: &RunOptions) -> CliResult<Problem> {
    let mut built = problem.build()?;
    if opts.strict_domain {
        built.operator = built.operator.with_strict_domain(true);
    }
    Ok(built)
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Write(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Write(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Write(e.to_string()))
}

fn join_coords(p: &Point) -> String {
    p.coords().iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

pub(crate) fn verdict_name(v: presic_core::Verdict) -> &'static str {
    match v {
        presic_core::Verdict::PassedOnSamples => "passed_on_samples",
        presic_core::Verdict::Falsified => "falsified",
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Checks the problem's contraction condition on sampled windows.
pub fn cmd_verify(problem: &ProblemFile, opts: &RunOptions) -> CliResult<Outcome> {
    let built = build(problem, opts)?;
    let cond = built
        .condition
        .as_ref()
        .ok_or_else(|| CliError::Usage("problem file has no \"condition\" block".into()))?;
    let cert = check(&built.operator, &built.space, cond, &opts.plan())?;
    let code = if cert.passed() { EXIT_OK } else { EXIT_FAILED };
    let body = match opts.format() {
        Format::Json => to_json(&cert)?,
        Format::Csv => {
            let w = cert.witness.as_ref();
            csv_text(
                &[
                    "condition",
                    "verdict",
                    "samples",
                    "seed",
                    "slack_min",
                    "estimated_constant",
                    "witness",
                    "witness_lhs",
                    "witness_rhs",
                ],
                &[vec![
                    cert.condition.name().to_string(),
                    verdict_name(cert.verdict).to_string(),
                    cert.samples.to_string(),
                    cert.seed.to_string(),
                    cert.slack_min.to_string(),
                    opt_num(cert.estimated_constant),
                    w.map(|w| w.window.iter().map(join_coords).collect::<Vec<_>>().join("|"))
                        .unwrap_or_default(),
                    opt_num(w.map(|w| w.lhs)),
                    opt_num(w.map(|w| w.rhs)),
                ]],
            )?
        }
    };
    Ok(Outcome { code, body })
}

/// One row of an exported trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub n: usize,
    pub x: Vec<f64>,
    /// `d(x_n, x_{n+1})`; absent on the last point.
    pub alpha_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceExport {
    pub stop_reason: presic_core::StopReason,
    pub iterations: usize,
    pub limit: Option<Point>,
    pub final_residual: Option<f64>,
    pub fitted_rate: Option<f64>,
    pub out_of_domain: usize,
    pub rows: Vec<TraceRow>,
}

impl TraceExport {
    /// `bounds[i]` is attached to the row of `points[i]`.
    pub fn new(trace: &IterationTrace, bounds: Option<&[f64]>) -> TraceExport {
        let rows = trace
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| TraceRow {
                n: trace.first_index + i,
                x: p.coords().to_vec(),
                alpha_n: trace.alphas.get(i).copied(),
                bound_n: bounds.and_then(|b| b.get(i).copied()),
            })
            .collect();
        TraceExport {
            stop_reason: trace.stop_reason,
            iterations: trace.iterations(),
            limit: trace.limit.clone(),
            final_residual: trace.final_residual,
            fitted_rate: trace.fitted_rate,
            out_of_domain: trace.out_of_domain,
            rows,
        }
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let with_bounds = self.rows.iter().any(|r| r.bound_n.is_some());
        let mut header = vec!["n", "x", "alpha_n"];
        if with_bounds {
            header.push("bound_n");
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.n.to_string(),
                    r.x.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
                    opt_num(r.alpha_n),
                ];
                if with_bounds {
                    row.push(opt_num(r.bound_n));
                }
                row
            })
            .collect();
        csv_text(&header, &rows)
    }
}

fn solve_settings(problem: &Problem, opts: &RunOptions) -> (StartConfig, StopRule, u64) {
    let solve = problem.solve.clone().unwrap_or_else(|| presic_core::SolveConfig {
        start: StartConfig::default(),
        stop: StopRule::default(),
        seed: None,
    });
    let seed = opts.seed.or(solve.seed).unwrap_or(0);
    (solve.start, solve.stop, seed)
}

/// Runs the k-step scheme (or the diagonal Picard scheme) from start number `run`.
pub fn run_trace(problem: &Problem, opts: &RunOptions, use_picard: bool, run: usize) -> CliResult<IterationTrace> {
    let (start, stop, seed) = solve_settings(problem, opts);
    let op = &problem.operator;
    let trace = if use_picard {
        let x0 = start.resolve(&problem.space, 1, seed, run)?;
        picard(op, &problem.space, &x0[0], &stop)?
    } else {
        let init = start.resolve(&problem.space, op.arity(), seed, run)?;
        iterate(op, &problem.space, &init, &stop)?
    };
    Ok(trace)
}

fn render_trace(export: &TraceExport, opts: &RunOptions) -> CliResult<String> {
    match opts.format() {
        Format::Json => to_json(export),
        Format::Csv => export.to_csv(),
    }
}

/// Iterates the problem from its configured start and exports the trace.
pub fn cmd_solve(problem: &ProblemFile, opts: &RunOptions) -> CliResult<Outcome> {
    let built = build(problem, opts)?;
    if built.solve.is_none() {
        return Err(CliError::Usage("problem file has no \"solve\" block".into()));
    }
    let trace = run_trace(&built, opts, opts.picard, 0)?;
    let code = if trace.converged() { EXIT_OK } else { EXIT_FAILED };
    Ok(Outcome {
        code,
        body: render_trace(&TraceExport::new(&trace, None), opts)?,
    })
}

/// The constant a bound report is computed for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundParam {
    /// Max-condition constant; per-step bounds `b^k K theta^n`.
    Eta(f64),
    /// Kannan constant; bounds `(b lambda)^n d01 / (1 - b lambda)` along the Picard scheme.
    A(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
enum AnyReport {
    Presic {
        report: presic_core::BoundReport,
        tail: Vec<presic_core::solver::TailCheck>,
    },
    Kannan {
        report: presic_core::KannanReport,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct BoundsOutput {
    all_steps_within: bool,
    #[serde(flatten)]
    report: AnyReport,
    trace: TraceExport,
}

/// Solves inline, then compares the trace with the a priori bounds.
pub fn cmd_bounds(problem: &ProblemFile, param: BoundParam, opts: &RunOptions) -> CliResult<Outcome> {
    let built = build(problem, opts)?;
    let b = built.space.b();
    let out = match param {
        BoundParam::Eta(eta) => {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(CliError::Usage(format!("--eta must lie in (0, 1), got {eta}")));
            }
            let trace = run_trace(&built, opts, opts.picard, 0)?;
            let report = presic_bounds(&trace, eta, b, trace.arity)?;
            let (_, stop, _) = solve_settings(&built, opts);
            let tail = report.tail_profile(&trace, &built.space, stop.cauchy_window)?;
            BoundsOutput {
                all_steps_within: report.all_steps_within && tail.iter().all(|t| t.within),
                trace: TraceExport::new(&trace, Some(&report.per_step_bounds)),
                report: AnyReport::Presic { report, tail },
            }
        }
        BoundParam::A(a) => {
            let k = built.operator.arity();
            ConditionSpec::Kannan { a }.validate(k, b)?;
            // The Kannan estimate concerns the diagonal scheme.
            let trace = run_trace(&built, opts, true, 0)?;
            let report = kannan_report(&trace, &built.space, a, k)?;
            let bounds: Vec<f64> = report.rows.iter().map(|r| r.bound).collect();
            BoundsOutput {
                all_steps_within: report.all_within,
                trace: TraceExport::new(&trace, Some(&bounds)),
                report: AnyReport::Kannan { report },
            }
        }
    };
    let code = if out.all_steps_within { EXIT_OK } else { EXIT_FAILED };
    let body = match opts.format() {
        Format::Json => to_json(&out)?,
        Format::Csv => out.trace.to_csv()?,
    };
    Ok(Outcome { code, body })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BReport {
    pub declared_b: f64,
    pub b_hat: f64,
    pub within_declared: bool,
    pub witness: presic_core::BWitness,
}

/// Estimates the relaxation constant of the problem's space.
pub fn cmd_estimate_b(problem: &ProblemFile, opts: &RunOptions) -> CliResult<Outcome> {
    let space = problem.space.build()?;
    let est = space.estimate_b(&opts.plan())?;
    let report = BReport {
        declared_b: space.b(),
        b_hat: est.b_hat,
        within_declared: !presic_core::tolerance::exceeds(est.b_hat, space.b()),
        witness: est.witness,
    };
    let code = if report.within_declared { EXIT_OK } else { EXIT_FAILED };
    let body = match opts.format() {
        Format::Json => to_json(&report)?,
        Format::Csv => csv_text(
            &["declared_b", "b_hat", "within_declared", "x", "y", "z"],
            &[vec![
                report.declared_b.to_string(),
                report.b_hat.to_string(),
                report.within_declared.to_string(),
                join_coords(&report.witness.x),
                join_coords(&report.witness.y),
                join_coords(&report.witness.z),
            ]],
        )?,
    };
    Ok(Outcome { code, body })
}

pub use demo::{cmd_demo, DemoRow, DEMOS};

/// Result of iterating one problem from many seeded starts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessProbe {
    pub runs: usize,
    pub converged: usize,
    pub limits: Vec<Point>,
    /// Largest distance between two limits.
    pub spread: f64,
}

/// Runs `runs` k-step iterations from distinct random starts in the box.
pub fn probe_uniqueness(problem: &Problem, runs: usize, seed: u64) -> CliResult<UniquenessProbe> {
    let stop = problem.solve.as_ref().map(|s| s.stop).unwrap_or_default();
    let op = &problem.operator;
    let mut limits = Vec::with_capacity(runs);
    let mut converged = 0;
    for run in 0..runs {
        let init = StartConfig::default().resolve(&problem.space, op.arity(), seed, run)?;
        let t = iterate(op, &problem.space, &init, &stop)?;
        converged += usize::from(t.converged());
        limits.push(t.limit.clone().unwrap_or_else(|| t.last().clone()));
    }
    let mut spread: f64 = 0.0;
    for (i, a) in limits.iter().enumerate() {
        for b in &limits[i + 1..] {
            spread = spread.max(problem.space.distance(a, b)?);
        }
    }
    Ok(UniquenessProbe {
        runs,
        converged,
        limits,
        spread,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "presic-lab",
    version,
    about = "Experiments with k-step fixed-point iterations on b-metric spaces"
)]
pub struct Cli {
    /// Sampling and random-start seed.
    #[arg(long, global = true, env = "PRESIC_LAB_SEED")]
    pub seed: Option<u64>,
    /// Number of random samples for verification and b estimation.
    #[arg(long, global = true, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Sample a full grid with N points per axis instead of random tuples.
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "101", value_name = "N")]
    pub grid: Option<usize>,
    /// Iterate the diagonal map x -> f(x, ..., x) instead of the k-step scheme.
    #[arg(long, global = true)]
    pub picard: bool,
    /// Treat iterates leaving the box as errors.
    #[arg(long, global = true)]
    pub strict_domain: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the problem's contraction condition on samples.
    Verify { problem: PathBuf },
    /// Iterate from the problem's start and export the trace.
    Solve { problem: PathBuf },
    /// Compare a solved trace with a priori bounds.
    Bounds {
        problem: PathBuf,
        #[arg(long, required_unless_present = "a", conflicts_with = "a")]
        eta: Option<f64>,
        #[arg(long)]
        a: Option<f64>,
    },
    /// Estimate the relaxation constant b of the problem's space.
    EstimateB { problem: PathBuf },
    /// Run a bundled reproduction: paper-example-2-1-2, paper-bmetric-examples, paper-phi-anomaly.
    Demo { name: String },
}

impl Cli {
    pub fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            samples: self.samples,
            grid: self.grid,
            format: self.format,
            picard: self.picard,
            strict_domain: self.strict_domain,
            parallel: true,
        }
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<Outcome> {
    let opts = cli.options();
    if opts.samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    if opts.grid.is_some_and(|g| g < 2) {
        return Err(CliError::Usage("--grid needs at least 2 points per axis".into()));
    }
    match &cli.command {
        Command::Verify { problem } => cmd_verify(&load_problem(problem)?, &opts),
        Command::Solve { problem } => cmd_solve(&load_problem(problem)?, &opts),
        Command::Bounds { problem, eta, a } => {
            let param = match (eta, a) {
                (Some(e), None) => BoundParam::Eta(*e),
                (None, Some(a)) => BoundParam::A(*a),
                _ => return Err(CliError::Usage("give exactly one of --eta and --a".into())),
            };
            cmd_bounds(&load_problem(problem)?, param, &opts)
        }
        Command::EstimateB { problem } => cmd_estimate_b(&load_problem(problem)?, &opts),
        Command::Demo { name } => cmd_demo(name, &opts),
    }
}

/// Runs a parsed command line, writing output to stdout or `--out`.
/// Returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(outcome) => match emit(cli.out.as_deref(), &outcome.body) {
            Ok(()) => outcome.code,
            Err(e) => {
                eprintln!("presic-lab: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("presic-lab: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: Option<&Path>, body: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| CliError::Write(format!("{}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

/// Fixed-width text table.
pub(crate) fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    line(&mut out, &widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for r in rows {
        line(&mut out, r);
    }
    out
}
