use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ctmc_dta::io::{
    convergence_csv, convergence_rows, parse_model, parse_valuation, IoError, ResultDocument,
};
use ctmc_dta::mc::{estimate, McOptions};
use ctmc_dta::solver::{ApproxError, SolveError};
use ctmc_dta::{Analyzer, ApproxOptions, ClockValuation, Model, VertexClass};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "ctmc-dta",
    version,
    about = "Acceptance probabilities of CTMC paths by deterministic timed automata"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Approximate the acceptance probability on a grid.
    Solve(SolveArgs),
    /// Monte Carlo estimate of the acceptance probability.
    Simulate(SimulateArgs),
    /// Print the product region graph with vertex classes.
    Graph(GraphArgs),
    /// Print the error constants and the theoretical bound.
    Bound(BoundArgs),
    /// Tabulate values over several grids as CSV.
    Convergence(ConvergenceArgs),
}

#[derive(Args)]
struct Query {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    state: String,
    #[arg(long)]
    location: String,
    /// e.g. "x=0,y=1/2"
    #[arg(long)]
    valuation: String,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    query: Query,
    #[arg(long, conflicts_with = "epsilon", required_unless_present = "epsilon")]
    grid: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Size m by the empirical estimate when the theoretical bound is out of reach.
    #[arg(long, requires = "epsilon")]
    force_empirical: bool,
    /// Also solve on 2m and report an empirical error estimate.
    #[arg(long)]
    empirical: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    query: Query,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.99)]
    level: f64,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    grid: u64,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "s")]
    state: String,
    #[arg(long, default_value = "q0")]
    location: String,
    /// Defaults to all clocks at zero.
    #[arg(long)]
    valuation: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    grids: Vec<u64>,
    /// Exact value to measure errors against; otherwise the previous row.
    #[arg(long)]
    exact: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Validation(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Valuation { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ApproxError> for CliError {
    fn from(e: ApproxError) -> Self {
        match e {
            ApproxError::Solve(_)
            | ApproxError::EmpiricalNotReached { .. }
            | ApproxError::InfeasibleBound { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

struct Resolved {
    model: Model,
    state: usize,
    location: usize,
    eta: ClockValuation,
}

fn resolve(
    model: Model,
    state: &str,
    location: &str,
    valuation: Option<&str>,
) -> Result<Resolved, CliError> {
    let s = model
        .ctmc
        .state_index(state)
        .ok_or_else(|| CliError::Usage(format!("unknown state {state:?}")))?;
    let q = model
        .dta
        .location_index(location)
        .ok_or_else(|| CliError::Usage(format!("unknown location {location:?}")))?;
    let eta = match valuation {
        Some(v) => parse_valuation(v, &model.dta.clocks)?,
        None => ClockValuation::zeros(model.dta.clock_count()),
    };
    Ok(Resolved {
        model,
        state: s,
        location: q,
        eta,
    })
}

fn resolve_query(q: &Query) -> Result<Resolved, CliError> {
    resolve(
        parse_model(&q.model)?,
        &q.state,
        &q.location,
        Some(&q.valuation),
    )
}

fn run_solve(args: &SolveArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let r = resolve_query(&args.query)?;
    let analyzer = Analyzer::new(r.model);
    let mut opts = match (args.grid, args.epsilon) {
        (Some(m), _) => ApproxOptions::grid(m),
        (None, Some(eps)) => ApproxOptions::epsilon(eps, args.force_empirical),
        (None, None) => {
            return Err(CliError::Usage(
                "one of --grid or --epsilon is required".into(),
            ))
        }
    };
    opts.empirical = args.empirical;
    let approx = analyzer.approximate(r.state, r.location, &r.eta, &opts)?;
    if approx.report.below_threshold {
        log::warn!(
            "m = {} is at most 2|V|^2 = {}; the solution is not guaranteed to be unique",
            approx.m,
            approx.report.m_min - 1
        );
    }
    let doc = ResultDocument::new(
        &analyzer,
        r.state,
        r.location,
        &r.eta,
        &approx,
        started.elapsed().as_secs_f64(),
    );
    let json = doc.to_json();
    if let Some(path) = &args.out {
        write_file(path, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage(format!(
            "--level must lie in (0, 1), got {}",
            args.level
        )));
    }
    let r = resolve_query(&args.query)?;
    let analyzer = Analyzer::new(r.model);
    let opts = McOptions {
        samples: args.samples,
        k_max: args.kmax,
        seed: args.seed,
        level: args.level,
        absorption: true,
    };
    let e = estimate(
        &analyzer.model,
        &analyzer.graph,
        r.state,
        r.location,
        &r.eta,
        &opts,
    );
    println!(
        "{}",
        serde_json::to_string_pretty(&e).expect("estimates serialize")
    );
    Ok(())
}

fn run_graph(args: &GraphArgs) -> Result<(), CliError> {
    let analyzer = Analyzer::new(parse_model(&args.model)?);
    let (model, g) = (&analyzer.model, &analyzer.graph);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "vertices: {} (final {}, alive {}, dead {})",
        g.vertex_count(),
        g.count_class(VertexClass::Final),
        g.count_class(VertexClass::Alive),
        g.count_class(VertexClass::Dead)
    );
    let _ = writeln!(out, "edges: {}", g.edge_count());
    for i in 0..g.vertex_count() {
        let class = match g.classes[i] {
            VertexClass::Final => "final",
            VertexClass::Alive => "alive",
            VertexClass::Dead => "dead",
        };
        let targets: Vec<String> = g.edges[i]
            .iter()
            .map(|e| format!("v{}", e.target))
            .collect();
        let _ = writeln!(
            out,
            "v{i} {} {class} -> [{}]",
            g.vertex_label(model, i),
            targets.join(", ")
        );
    }
    print!("{out}");
    if let Some(path) = &args.dot {
        write_file(path, &g.to_dot(model))?;
    }
    Ok(())
}

fn run_bound(args: &BoundArgs) -> Result<(), CliError> {
    if args.grid == 0 {
        return Err(CliError::Usage("--grid must be positive".into()));
    }
    let analyzer = Analyzer::new(parse_model(&args.model)?);
    let r = analyzer.error_report(args.grid);
    let doc = serde_json::json!({
        "m": r.m,
        "rho": r.rho,
        "|V|": r.vertex_count,
        "𝔠": r.contraction,
        "M1": r.m1,
        "M2": r.m2,
        "M3": r.m3,
        "m_min": r.m_min,
        "below_threshold": r.below_threshold,
        "theoretical_bound": r.theoretical_bound,
        "theoretical_bound_log10": r.theoretical_bound_log10,
        "grid_size": analyzer.grid_size(args.grid),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).expect("json values serialize")
    );
    Ok(())
}

fn run_convergence(args: &ConvergenceArgs) -> Result<(), CliError> {
    if args.grids.contains(&0) {
        return Err(CliError::Usage("grid sizes must be positive".into()));
    }
    let r = resolve(
        parse_model(&args.model)?,
        &args.state,
        &args.location,
        args.valuation.as_deref(),
    )?;
    let analyzer = Analyzer::new(r.model);
    let mut values = Vec::with_capacity(args.grids.len());
    for &m in &args.grids {
        let a = analyzer.approximate(r.state, r.location, &r.eta, &ApproxOptions::grid(m))?;
        values.push((m, a.probability));
    }
    let csv = convergence_csv(&convergence_rows(&values, args.exact));
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Graph(a) => run_graph(a),
        Command::Bound(a) => run_bound(a),
        Command::Convergence(a) => run_convergence(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
