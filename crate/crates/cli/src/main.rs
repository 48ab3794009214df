use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tno_cli::bench::{self, BenchPlan};
use tno_cli::figures::{self, Figure};
use tno_cli::verify::{self, Suite};
use tno_cli::{EXIT_FAILURE, EXIT_USAGE};
use tno_core::config::{Mode, TnoConfig};
use tno_core::ski::{Degree, ExecPath};

#[derive(Parser)]
#[command(
    name = "tno",
    version,
    about = "Toeplitz operator verification, timing and figure harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the named invariant suite and print one line per check.
    Verify(VerifyArgs),
    /// Time operator modes over a list of sequence lengths.
    Bench(BenchArgs),
    /// Write CSV series for plotting.
    Figures(FigureArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// tcore, ski, fdom, rpe, analysis, cli or all.
    #[arg(default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Kernel CSV checked against the dense oracle before the suite.
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated modes.
    #[arg(long, value_delimiter = ',', default_value = "baseline,ski,fd-causal")]
    mode: Vec<String>,
    /// Comma-separated sequence lengths.
    #[arg(long, value_delimiter = ',', default_value = "512,1024,2048")]
    n: Vec<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Interpolation degree, 1 or 3.
    #[arg(long)]
    degree: Option<usize>,
    /// Execution path for the causal scan: dense (default) or sparse.
    #[arg(long)]
    exec: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = bench::MIN_REPS)]
    reps: usize,
    #[arg(long, default_value_t = bench::MIN_WARMUP)]
    warmup: usize,
    /// Worker threads across cells; timed regions stay single-threaded.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Flat key = value file applied before the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; the table is printed either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FigureArgs {
    /// decay, response, bound or all.
    #[arg(default_value = "all")]
    which: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frequency resolution of the decay and response series.
    #[arg(long, default_value_t = figures::DEFAULT_N)]
    n: usize,
    #[arg(long, default_value = "figures")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<tno_core::Error> for Failure {
    fn from(e: tno_core::Error) -> Self {
        match e {
            tno_core::Error::Parse(_) | tno_core::Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn verify_cmd(args: VerifyArgs) -> Result<i32, Failure> {
    let suite: Suite = args.suite.parse()?;
    let fixture = match &args.kernel {
        Some(p) => {
            Some(std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?)
        }
        None => None,
    };
    let report = verify::run_suite(suite, args.seed, fixture.as_deref());
    let text = report.render();
    print!("{text}");
    if let Some(p) = &args.out {
        std::fs::write(p, &text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(report.exit_code())
}

fn bench_cmd(args: BenchArgs) -> Result<i32, Failure> {
    let mut cfg = match &args.config {
        Some(p) => TnoConfig::parse(
            &std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?,
        )?,
        None => TnoConfig::default(),
    };
    if let Some(d) = args.d {
        cfg.d = d;
    }
    if let Some(r) = args.r {
        cfg.r = r;
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(k) = args.degree {
        cfg.degree = Degree::from_order(k)?;
    }
    if args.config.is_none() {
        // the causal scan defaults to the materialized W A form
        cfg.exec = ExecPath::Dense;
    }
    if let Some(e) = &args.exec {
        cfg.exec = match e.as_str() {
            "sparse" => ExecPath::Sparse,
            "dense" => ExecPath::Dense,
            _ => return Err(Failure::Usage(format!("invalid exec '{e}'"))),
        };
    }
    let modes = args
        .mode
        .iter()
        .map(|m| m.parse::<Mode>())
        .collect::<Result<Vec<_>, _>>()?;
    for &n in &args.n {
        let mut c = cfg.clone();
        c.n = n;
        c.validate()?;
    }
    let mut plan = BenchPlan::new(modes, args.n, cfg);
    plan.seed = args.seed;
    plan.reps = args.reps;
    plan.warmup = args.warmup;
    plan.threads = args.threads;
    let results = bench::run(&plan)?;
    println!(
        "{:<12} {:>7} {:>5} {:>8} {:>14} {:>14}",
        "mode", "n", "reps", "inner", "median_ns", "elements/s"
    );
    for r in &results {
        println!(
            "{:<12} {:>7} {:>5} {:>8} {:>14.1} {:>14.4e}",
            r.mode.name(),
            r.n,
            r.reps,
            r.inner,
            r.median_ns,
            r.throughput
        );
    }
    for &mode in &plan.modes {
        if let Some(s) = bench::loglog_slope(&results, mode) {
            println!("slope {mode}: {s:.3}");
        }
    }
    if let Some(p) = &args.out {
        std::fs::write(p, bench::to_csv(&plan, &results))
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(0)
}

fn figures_cmd(args: FigureArgs) -> Result<i32, Failure> {
    let which: Vec<Figure> = if args.which == "all" {
        Figure::ALL.to_vec()
    } else {
        vec![args.which.parse()?]
    };
    for f in which {
        let files = figures::render(f, args.seed, args.n)?;
        figures::write_all(&args.out, &files)
            .map_err(|e| Failure::Runtime(format!("cannot write to {}: {e}", args.out.display())))?;
        for file in &files {
            println!("{}", args.out.join(&file.name).display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify(a) => verify_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Figures(a) => figures_cmd(a),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    };
    ExitCode::from(code as u8)
}
