//! `permrelax`: property suites, QAP solves, closed-form curves and
//! shuffle-recovery sweeps, written as CSV or JSON.
//!
//! Exit codes: 0 success, 1 a property or run failed, 2 bad usage or input.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use permrelax::closed_form::{
    example1_f, example2_f, example3_f, grid_local_minima, grid_minimize, TwoLayerTeacher,
    DEFAULT_GRID_POINTS,
};
use permrelax::io::parse_qap_as;
use permrelax::optimizer::run;
use permrelax::qap::{self, QapInstance, QapKind};
use permrelax::shuffle::{self, generate_task, lambda_sweep, shuffle_objective, SWEEP_CSV_HEADER};
use permrelax::suites::{run_suite, Suite, DEFAULT_SEED};
use permrelax::trace::TRACE_CSV_HEADER;
use permrelax::OptimizerConfig;
use serde::Serialize;
use thiserror::Error;

const THREADS_ENV: &str = "PERMRELAX_THREADS";

#[derive(Parser)]
#[command(
    name = "permrelax",
    version,
    about = "Exact l1-2 permutation relaxation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a property suite and print one line per check.
    Verify {
        /// theorem1, theorem2, gradients, sinkhorn or rounding.
        suite: Suite,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Solve a QAP / graph matching instance file.
    Qap {
        file: PathBuf,
        /// Penalty weight; defaults to the instance-scaled default.
        #[arg(long)]
        lambda: Option<f64>,
        /// Base seed of each restart batch (repeatable).
        #[arg(long = "seed", default_values_t = [0u64])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = qap::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, value_enum, default_value_t = InstanceKind::Gm)]
        kind: InstanceKind,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the closed-form landscapes and locate their minima.
    Curves {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        example: u8,
        /// Penalty weights (repeatable).
        #[arg(long = "lambda", default_values_t = [0.0])]
        lambdas: Vec<f64>,
        /// Shortcut strength for example 3.
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        /// Samples per curve.
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shuffle-recovery λ sweep on synthetic teacher tasks.
    Shuffle {
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Training pairs; defaults to 32·n.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Absolute penalty weights (repeatable).
        #[arg(long = "lambda")]
        lambdas: Vec<f64>,
        /// Penalty weights relative to the loss curvature (repeatable).
        /// Without any --lambda or --lambda-factor the sweep is {0, default}.
        #[arg(long = "lambda-factor")]
        lambda_factors: Vec<f64>,
        /// Task and optimizer seed (repeatable).
        #[arg(long = "seed", default_values_t = [0u64])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = shuffle::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the trace of each selected run as CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum InstanceKind {
    /// Graph matching ‖AQ − QB‖².
    Gm,
    /// Trace form tr(AQBᵀQᵀ).
    Qap,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] permrelax::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Core(permrelax::Error::Parse { .. }) => 2,
            CliError::Core(permrelax::Error::InvalidConfig(_)) => 2,
            CliError::Core(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Verify { suite, seed } => verify(suite, seed),
        Command::Qap {
            file,
            lambda,
            seeds,
            restarts,
            kind,
            format,
            out,
        } => qap_command(
            &file,
            lambda,
            &seeds,
            restarts,
            kind,
            format,
            out.as_deref(),
        ),
        Command::Curves {
            example,
            lambdas,
            m,
            points,
            format,
            out,
        } => curves(example, &lambdas, m, points, format, out.as_deref()),
        Command::Shuffle {
            n,
            samples,
            noise,
            lambdas,
            lambda_factors,
            seeds,
            restarts,
            iterations,
            format,
            out,
            trace_out,
        } => shuffle_command(ShuffleArgs {
            n,
            samples: samples.unwrap_or(32 * n),
            noise,
            lambdas,
            lambda_factors,
            seeds,
            restarts,
            iterations,
            format,
            out,
            trace_out,
        }),
    }
}

fn verify(suite: Suite, seed: u64) -> CliResult<()> {
    let report = run_suite(suite, seed);
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(CliError::Failed(format!(
            "{failed} check(s) failed in suite {suite}"
        )))
    }
}

/// Writes to `out` through a temporary file in the same directory, or to
/// stdout when no path is given.
fn emit(out: Option<&Path>, content: &str) -> CliResult<()> {
    let Some(path) = out else {
        print!("{content}");
        return Ok(());
    };
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(content.as_bytes()).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// The one line allowed to differ between identical invocations.
fn csv_preamble() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!(
        "# generated by permrelax {} at unix time {secs}\n",
        env!("CARGO_PKG_VERSION")
    )
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn join<T: ToString>(items: &[T], sep: &str) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

#[derive(Serialize)]
struct PermutationValue {
    permutation: Vec<usize>,
    objective: f64,
}

#[derive(Serialize)]
struct ConvexReport {
    matrix: Vec<Vec<f64>>,
    objective: f64,
    rounded: PermutationValue,
}

#[derive(Serialize)]
struct PenalizedReport {
    seed: u64,
    permutation: Vec<usize>,
    objective: f64,
    relaxed_objective: f64,
    penalty: f64,
}

#[derive(Serialize)]
struct QapReport {
    n: usize,
    kind: &'static str,
    lambda: f64,
    restarts: usize,
    convex: Option<ConvexReport>,
    penalized: Vec<PenalizedReport>,
    best: Option<PenalizedReport>,
    oracle: Option<PermutationValue>,
    penalized_matches_oracle: Option<bool>,
    notes: Vec<String>,
}

fn qap_command(
    file: &Path,
    lambda: Option<f64>,
    seeds: &[u64],
    restarts: usize,
    kind: InstanceKind,
    format: Format,
    out: Option<&Path>,
) -> CliResult<()> {
    let text = std::fs::read_to_string(file).map_err(|source| CliError::Io {
        path: file.to_path_buf(),
        source,
    })?;
    let kind = match kind {
        InstanceKind::Gm => QapKind::GraphMatching,
        InstanceKind::Qap => QapKind::GeneralQap,
    };
    let inst = parse_qap_as(&text, kind)?;
    if restarts == 0 {
        return Err(CliError::Usage("--restarts must be >= 1".into()));
    }
    let report = solve_qap(&inst, lambda, seeds, restarts)?;
    let content = match format {
        Format::Json => to_json(&report),
        Format::Csv => qap_csv(&report),
    };
    emit(out, &content)
}

fn solve_qap(
    inst: &QapInstance,
    lambda: Option<f64>,
    seeds: &[u64],
    restarts: usize,
) -> CliResult<QapReport> {
    let lambda = lambda.unwrap_or_else(|| qap::default_lambda(inst));
    let base = qap::default_config(inst);
    let mut notes = Vec::new();

    let convex = if inst.kind == QapKind::GraphMatching {
        let cfg = OptimizerConfig {
            seed: seeds[0],
            ..base.clone()
        };
        let sol = qap::solve_convex_relaxed(inst, &cfg, restarts)?;
        let rounded = permrelax::nearest_permutation_lap(sol.relaxed.matrix());
        Some(ConvexReport {
            matrix: sol.relaxed.matrix().to_rows(),
            objective: sol.objective,
            rounded: PermutationValue {
                objective: inst.permutation_objective(&rounded)?,
                permutation: rounded.into_vec(),
            },
        })
    } else {
        notes.push("convex relaxation is only defined for graph matching".into());
        None
    };

    let mut penalized = Vec::new();
    for &seed in seeds {
        let cfg = OptimizerConfig {
            seed,
            ..base.clone()
        };
        let sol = qap::solve_penalized(inst, lambda, &cfg, restarts)?;
        penalized.push(PenalizedReport {
            seed: sol.seed,
            permutation: sol.permutation.into_vec(),
            objective: sol.objective,
            relaxed_objective: sol.relaxed_objective,
            penalty: sol.penalty,
        });
    }
    let best = penalized
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .map(|p| PenalizedReport {
            permutation: p.permutation.clone(),
            ..*p
        });

    let oracle = match qap::brute_force_oracle(inst) {
        Ok((p, v)) => Some(PermutationValue {
            permutation: p.into_vec(),
            objective: v,
        }),
        Err(permrelax::Error::TooLarge { n, max }) => {
            notes.push(format!("oracle skipped: n = {n} exceeds {max}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let penalized_matches_oracle = match (&best, &oracle) {
        (Some(b), Some(o)) => Some(b.objective <= o.objective + 1e-9 * (1.0 + o.objective.abs())),
        _ => None,
    };

    Ok(QapReport {
        n: inst.n(),
        kind: match inst.kind {
            QapKind::GraphMatching => "graph_matching",
            QapKind::GeneralQap => "qap",
        },
        lambda,
        restarts,
        convex,
        penalized,
        best,
        oracle,
        penalized_matches_oracle,
        notes,
    })
}

fn qap_csv(r: &QapReport) -> String {
    let mut s = csv_preamble();
    for note in &r.notes {
        let _ = writeln!(s, "# {note}");
    }
    s.push_str("method,seed,objective,permutation\n");
    if let Some(c) = &r.convex {
        let _ = writeln!(s, "convex_relaxed,,{},", c.objective);
        let _ = writeln!(
            s,
            "convex_rounded,,{},{}",
            c.rounded.objective,
            join(&c.rounded.permutation, " ")
        );
    }
    for p in &r.penalized {
        let _ = writeln!(
            s,
            "penalized,{},{},{}",
            p.seed,
            p.objective,
            join(&p.permutation, " ")
        );
    }
    if let Some(o) = &r.oracle {
        let _ = writeln!(s, "oracle,,{},{}", o.objective, join(&o.permutation, " "));
    }
    s
}

#[derive(Serialize)]
struct Curve {
    lambda: f64,
    samples: Vec<(f64, f64)>,
    /// Local minima, in increasing parameter order.
    minima: Vec<(f64, f64)>,
    argmin: (f64, f64),
}

fn curves(
    example: u8,
    lambdas: &[f64],
    m: f64,
    points: usize,
    format: Format,
    out: Option<&Path>,
) -> CliResult<()> {
    if points < 2 {
        return Err(CliError::Usage("--points must be >= 2".into()));
    }
    let teacher = TwoLayerTeacher::reference_teacher(m)?;
    let eval = |x: f64, lambda: f64| -> permrelax::Result<f64> {
        match example {
            1 => example1_f(x, lambda),
            2 => example2_f(x, lambda),
            _ => example3_f(x, &teacher, lambda),
        }
    };
    let mut result = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        // Surface domain errors before the minimizer sees them.
        eval(0.5, lambda)?;
        let samples = (0..points)
            .map(|k| {
                let x = k as f64 / (points - 1) as f64;
                eval(x, lambda).map(|v| (x, v))
            })
            .collect::<permrelax::Result<Vec<_>>>()?;
        let f = |x| eval(x, lambda).unwrap_or(f64::INFINITY);
        let minima = grid_local_minima(f, 0.0, 1.0, DEFAULT_GRID_POINTS);
        let argmin = grid_minimize(f, 0.0, 1.0, DEFAULT_GRID_POINTS);
        result.push(Curve {
            lambda,
            samples,
            minima,
            argmin,
        });
    }
    let content = match format {
        Format::Json => to_json(&result),
        Format::Csv => {
            let mut s = csv_preamble();
            let param = if example == 3 { "p" } else { "q" };
            let _ = writeln!(
                s,
                "# example {example}{}",
                if example == 3 {
                    format!(", m = {m}")
                } else {
                    String::new()
                }
            );
            let _ = writeln!(s, "lambda,kind,{param},value");
            for c in &result {
                for (x, v) in &c.samples {
                    let _ = writeln!(s, "{},sample,{x},{v}", c.lambda);
                }
                for (x, v) in &c.minima {
                    let _ = writeln!(s, "{},minimum,{x},{v}", c.lambda);
                }
                let _ = writeln!(s, "{},argmin,{},{}", c.lambda, c.argmin.0, c.argmin.1);
            }
            s
        }
    };
    emit(out, &content)
}

struct ShuffleArgs {
    n: usize,
    samples: usize,
    noise: f64,
    lambdas: Vec<f64>,
    lambda_factors: Vec<f64>,
    seeds: Vec<u64>,
    restarts: usize,
    iterations: Option<usize>,
    format: Format,
    out: Option<PathBuf>,
    trace_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ShuffleRow {
    task_seed: u64,
    #[serde(flatten)]
    row: shuffle::SweepRow,
}

fn shuffle_command(args: ShuffleArgs) -> CliResult<()> {
    if args.restarts == 0 {
        return Err(CliError::Usage("--restarts must be >= 1".into()));
    }
    let mut rows = Vec::new();
    let mut traces = String::new();
    for &seed in &args.seeds {
        let (task, data) = generate_task(args.n, args.samples, args.noise, seed)?;
        let objective = shuffle_objective(&task, &data)?;
        let mut cfg = OptimizerConfig {
            seed,
            ..shuffle::default_config(&objective)
        };
        if let Some(t) = args.iterations {
            cfg.total_iterations = t;
        }
        let lip = objective.lipschitz();
        let mut lambdas = args.lambdas.clone();
        lambdas.extend(args.lambda_factors.iter().map(|f| f * lip));
        if lambdas.is_empty() {
            lambdas = vec![0.0, cfg.lambda];
        }
        for row in lambda_sweep(&task, &objective, &lambdas, &cfg, args.restarts) {
            if args.trace_out.is_some() && row.error.is_none() {
                // Reruns are deterministic, so the selected run's trace is recovered exactly.
                let cfg = OptimizerConfig {
                    lambda: row.lambda,
                    seed: row.seed,
                    ..cfg.clone()
                };
                let res = run(&objective, &cfg).map_err(permrelax::Error::from)?;
                for t in &res.trace {
                    let _ = writeln!(
                        traces,
                        "{seed},{},{},{},{},{},{}",
                        row.lambda,
                        t.iteration,
                        t.loss,
                        t.penalty,
                        t.constraint_violation,
                        t.rounding_gap
                    );
                }
            }
            rows.push(ShuffleRow {
                task_seed: seed,
                row,
            });
        }
    }
    let content = match args.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = csv_preamble();
            let _ = writeln!(s, "{SWEEP_CSV_HEADER},task_seed");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.row.lambda,
                    r.row.relaxed_loss,
                    r.row.rounded_loss,
                    r.row.penalty,
                    r.row.recovered,
                    r.task_seed
                );
            }
            for r in rows.iter().filter(|r| r.row.error.is_some()) {
                let _ = writeln!(
                    s,
                    "# lambda {} seed {} failed: {}",
                    r.row.lambda,
                    r.task_seed,
                    r.row.error.as_deref().unwrap_or_default()
                );
            }
            s
        }
    };
    emit(args.out.as_deref(), &content)?;
    if let Some(path) = &args.trace_out {
        let content = format!(
            "{}task_seed,lambda,{TRACE_CSV_HEADER}\n{traces}",
            csv_preamble()
        );
        emit(Some(path), &content)?;
    }
    Ok(())
}
