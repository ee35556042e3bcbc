use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dapc::apc::reference_solution;
use dapc::linalg::LinalgError;
use dapc::mm::{read_matrix_market_file, write_csr, write_vector};
use dapc::partition::augment_system;
use dapc::runtime::{scheduler_run, worker_serve, BackendConfig, SharedInput};
use dapc::synth::synthetic_system;
use dapc::{
    ConvergenceTrace, CsrMatrix, DenseVector, MmError, Mode, PartitionError, RuntimeError, SolveError, SolverParams,
};

#[derive(Parser)]
#[command(name = "dapc", version, about = "Distributed projection-consensus solver for consistent linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve A x = b and write the convergence trace.
    Solve(SolveArgs),
    /// Append random row combinations to a square system.
    Augment(AugmentArgs),
    /// Time classical against decomposed initialization on the same system.
    Bench(BenchArgs),
    /// Serve one partition over TCP until the scheduler sends SHUTDOWN.
    Worker(WorkerArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Local,
    Sockets,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long, default_value_t = 2)]
    number_of_partitions: usize,
    #[arg(long, default_value_t = 50)]
    epochs: u32,
    #[arg(long, default_value_t = 0.9)]
    eta: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverFlags {
    fn params(&self, mode: Mode, dgd_step: Option<f64>) -> SolverParams {
        SolverParams {
            eta: self.eta,
            gamma: self.gamma,
            partitions: self.number_of_partitions,
            epochs: self.epochs,
            mode,
            dgd_step,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct BackendFlags {
    #[arg(long, value_enum, default_value = "local")]
    backend: Backend,
    /// One `host:port` per partition, in partition order.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    worker_nodes_ip_addresses: Vec<String>,
    /// Worker threads for the local backend.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 10_000)]
    connect_timeout_ms: u64,
    #[arg(long, default_value_t = 600_000)]
    epoch_timeout_ms: u64,
    /// Socket workers read their rows from the input files instead of
    /// receiving them inline. The paths must resolve on every worker.
    #[arg(long)]
    shared_files: bool,
}

impl BackendFlags {
    fn config(&self, matrix_path: &Path, rhs_path: &Path) -> Result<BackendConfig> {
        let mut cfg = match self.backend {
            Backend::Local => BackendConfig::local(self.threads),
            Backend::Sockets => {
                if self.worker_nodes_ip_addresses.is_empty() {
                    bail!(Usage("--backend sockets needs --worker-nodes-ip-addresses".into()));
                }
                BackendConfig::sockets(self.worker_nodes_ip_addresses.clone())
            }
        };
        cfg.connect_timeout = Duration::from_millis(self.connect_timeout_ms);
        cfg.epoch_timeout = Duration::from_millis(self.epoch_timeout_ms);
        if self.shared_files {
            cfg.shared = Some(SharedInput {
                matrix_path: absolute(matrix_path)?,
                rhs_path: absolute(rhs_path)?,
                min_block_bytes: 0,
            });
        }
        Ok(cfg)
    }
}

fn absolute(p: &Path) -> Result<String> {
    let abs = std::fs::canonicalize(p).with_context(|| format!("resolving {}", p.display()))?;
    abs.to_str().map(str::to_owned).with_context(|| format!("{} is not valid UTF-8", abs.display()))
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    coefficient_matrix_path: PathBuf,
    #[arg(long)]
    constant_terms_vector_path: PathBuf,
    /// Known solution; enables the MSE column.
    #[arg(long)]
    x_ref_path: Option<PathBuf>,
    /// Use the least-squares solution of the whole system as the reference.
    #[arg(long, conflicts_with = "x_ref_path")]
    reference_from_lstsq: bool,
    #[arg(long, value_parser = parse_mode, default_value = "decomposed")]
    mode: Mode,
    /// Gradient step for `--mode dgd`; estimated when absent.
    #[arg(long)]
    dgd_step: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    backend: BackendFlags,
    #[arg(long, default_value = "trace.csv")]
    output_csv: PathBuf,
    #[arg(long, default_value = "x.mtx")]
    output_x: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    coefficient_matrix_path: PathBuf,
    #[arg(long)]
    constant_terms_vector_path: PathBuf,
    #[arg(long)]
    extra_rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output_matrix_path: PathBuf,
    #[arg(long)]
    output_vector_path: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, requires = "constant_terms_vector_path", conflicts_with = "synthetic_n")]
    coefficient_matrix_path: Option<PathBuf>,
    #[arg(long, requires = "coefficient_matrix_path")]
    constant_terms_vector_path: Option<PathBuf>,
    #[arg(long)]
    x_ref_path: Option<PathBuf>,
    /// Columns of a seeded synthetic system.
    #[arg(long, requires = "synthetic_rows")]
    synthetic_n: Option<usize>,
    /// Total rows of the synthetic system after augmentation.
    #[arg(long)]
    synthetic_rows: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Writes `<prefix>-classical.csv` and `<prefix>-decomposed.csv`.
    #[arg(long)]
    output_csv_prefix: Option<PathBuf>,
}

#[derive(Args)]
struct WorkerArgs {
    /// Address to listen on, e.g. `0.0.0.0:7100`.
    #[arg(long)]
    listen: String,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

/// Bad flag combinations found after clap has parsed.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load_system(matrix: &Path, rhs: &Path) -> Result<(CsrMatrix, DenseVector)> {
    let a = read_matrix_market_file(matrix).with_context(|| format!("reading {}", matrix.display()))?.into_csr();
    let b = read_matrix_market_file(rhs)
        .and_then(|m| m.into_vector())
        .with_context(|| format!("reading {}", rhs.display()))?;
    Ok((a, b))
}

fn load_vector(path: &Path) -> Result<DenseVector> {
    read_matrix_market_file(path).and_then(|m| m.into_vector()).with_context(|| format!("reading {}", path.display()))
}

fn write_trace(trace: &ConvergenceTrace, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    trace.write_csv(&mut w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn write_vector_file(v: &[f64], path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    write_vector(v, &mut w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let (a, b) = load_system(&args.coefficient_matrix_path, &args.constant_terms_vector_path)?;
    let x_ref = match (&args.x_ref_path, args.reference_from_lstsq) {
        (Some(p), _) => Some(load_vector(p)?),
        (None, true) => Some(reference_solution(&a, &b)?.x),
        (None, false) => None,
    };
    let params = args.solver.params(args.mode, args.dgd_step);
    let backend = args.backend.config(&args.coefficient_matrix_path, &args.constant_terms_vector_path)?;
    let started = Instant::now();
    let trace = scheduler_run(&a, &b, &params, &backend, x_ref.as_deref())?;
    let wall = started.elapsed().as_secs_f64();
    write_trace(&trace, &args.output_csv)?;
    write_vector_file(&trace.final_x, &args.output_x)?;
    match trace.final_mse() {
        Some(m) => println!("final mse: {m:.6e}"),
        None => println!("final mse: n/a (no reference solution)"),
    }
    println!("total wall time: {wall:.3} s");
    if !trace.projection_norms.is_empty() {
        let norms: Vec<String> = trace.projection_norms.iter().map(|v| format!("{v:.3e}")).collect();
        println!("projection max-norm per partition: {}", norms.join(" "));
    }
    Ok(())
}

fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    let (a, b) = load_system(&args.coefficient_matrix_path, &args.constant_terms_vector_path)?;
    let aug = augment_system(&a, &b, args.extra_rows, args.seed)?;
    let (sa, sb) = aug.stacked(&a, &b)?;
    let f = File::create(&args.output_matrix_path)
        .with_context(|| format!("creating {}", args.output_matrix_path.display()))?;
    let mut w = BufWriter::new(f);
    write_csr(&sa, &mut w)?;
    w.flush()?;
    write_vector_file(&sb, &args.output_vector_path)?;
    println!("shape: {}x{}", sa.nrows(), sa.ncols());
    println!("seed: {}", aug.seed);
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let (a, b, x_ref) = match (&args.coefficient_matrix_path, &args.constant_terms_vector_path, args.synthetic_n) {
        (Some(m), Some(r), _) => {
            let (a, b) = load_system(m, r)?;
            let x = args.x_ref_path.as_deref().map(load_vector).transpose()?;
            (a, b, x)
        }
        (None, None, Some(n)) => {
            let rows = args.synthetic_rows.expect("clap enforces --synthetic-rows");
            let sys = synthetic_system(n, rows, args.solver.seed)?;
            (sys.a, sys.b, Some(sys.x))
        }
        _ => bail!(Usage("give either both input paths or --synthetic-n with --synthetic-rows".into())),
    };
    let backend = BackendConfig::local(args.threads);
    let mut timed = Vec::new();
    for mode in [Mode::Classical, Mode::Decomposed] {
        let params = args.solver.params(mode, None);
        let started = Instant::now();
        let trace = scheduler_run(&a, &b, &params, &backend, x_ref.as_deref())?;
        timed.push((mode, started.elapsed().as_secs_f64(), trace));
    }
    let (classical, decomposed) = (timed[0].1, timed[1].1);
    println!("shape,epochs,classical_seconds,decomposed_seconds,acceleration");
    println!(
        "{}x{},{},{classical:.9e},{decomposed:.9e},{:.6}",
        a.nrows(),
        a.ncols(),
        args.solver.epochs,
        classical / decomposed
    );
    if let Some(prefix) = &args.output_csv_prefix {
        for (mode, _, trace) in &timed {
            let mut name = prefix.as_os_str().to_owned();
            name.push(format!("-{mode}.csv"));
            write_trace(trace, Path::new(&name))?;
        }
    }
    Ok(())
}

fn cmd_worker(args: &WorkerArgs) -> Result<()> {
    worker_serve(&args.listen)?;
    Ok(())
}

const EXIT_USAGE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

fn solve_code(e: &SolveError) -> u8 {
    match e {
        SolveError::InvalidParams(_) => EXIT_USAGE,
        SolveError::Linalg(LinalgError::Shape { .. }) => EXIT_INPUT,
        _ => EXIT_NUMERICAL,
    }
}

fn partition_code(e: &PartitionError) -> u8 {
    match e {
        PartitionError::Degenerate(_) | PartitionError::IndexOutOfRange { .. } => EXIT_USAGE,
        PartitionError::Linalg(LinalgError::Shape { .. }) => EXIT_INPUT,
        _ => EXIT_NUMERICAL,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if cause.is::<MmError>() {
            return EXIT_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<SolveError>() {
            return solve_code(e);
        }
        if let Some(e) = cause.downcast_ref::<PartitionError>() {
            return partition_code(e);
        }
        if let Some(e) = cause.downcast_ref::<LinalgError>() {
            return match e {
                LinalgError::Shape { .. } | LinalgError::Bounds { .. } => EXIT_INPUT,
                _ => EXIT_NUMERICAL,
            };
        }
        if let Some(e) = cause.downcast_ref::<RuntimeError>() {
            return match e {
                RuntimeError::Solve(s) => solve_code(s),
                RuntimeError::Partition(p) => partition_code(p),
                RuntimeError::Input(_) => EXIT_INPUT,
                RuntimeError::Config(_) => EXIT_USAGE,
                RuntimeError::Remote { code, .. } if code == dapc::runtime::session::codes::SINGULAR_PIVOT => {
                    EXIT_NUMERICAL
                }
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Worker(a) => cmd_worker(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dapc: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
