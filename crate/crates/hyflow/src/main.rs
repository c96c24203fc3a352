use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hyflow::cli::{self, Input, Overrides, RunRequest, EXIT_ERROR, EXIT_OK, EXIT_PARTIAL};

/// Guaranteed flowpipes for hybrid systems.
#[derive(Parser, Debug)]
#[command(name = "hyflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one model and write its flowpipe.
    Run(RunArgs),
    /// Simulate every built-in benchmark and summarize.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Model file (`.json` for an automaton, otherwise the text language).
    #[arg(required_unless_present = "bench", conflicts_with = "bench")]
    path: Option<PathBuf>,
    /// Built-in benchmark to run instead of a file.
    #[arg(long, value_name = "NAME")]
    bench: Option<String>,
    /// Simulated time span.
    #[arg(long)]
    duration: Option<f64>,
    /// Initial step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Largest step size.
    #[arg(long = "max-dt")]
    max_dt: Option<f64>,
    /// Local error tolerance per step.
    #[arg(long)]
    tol: Option<f64>,
    /// Target width of crossing-time enclosures.
    #[arg(long = "zc-precision")]
    zc_precision: Option<f64>,
    /// Runge-Kutta scheme: ode23 or rk4.
    #[arg(long)]
    scheme: Option<String>,
    /// Comma separated artifact formats: csv, json, svg.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Directory for artifacts.
    #[arg(long, default_value = "hyflow-out")]
    out: PathBuf,
    /// Monte-Carlo samples to check against the flowpipe (0 disables).
    #[arg(long, default_value_t = 0)]
    validate: usize,
    /// Seed for the Monte-Carlo sampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Monte-Carlo samples per benchmark (0 disables).
    #[arg(long, default_value_t = 200)]
    validate: usize,
    /// Seed for the Monte-Carlo sampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the per-benchmark CSV files and `bench.json`.
    #[arg(long, default_value = "hyflow-bench")]
    out: PathBuf,
}

fn run(args: RunArgs) -> i32 {
    let formats = match cli::parse_formats(&args.format) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let input = match (args.path, args.bench) {
        (Some(p), None) => Input::Path(p),
        (None, Some(b)) => Input::Bench(b),
        _ => unreachable!("clap enforces exactly one input"),
    };
    let req = RunRequest {
        input,
        overrides: Overrides {
            duration: args.duration,
            dt: args.dt,
            max_dt: args.max_dt,
            tol: args.tol,
            zc_precision: args.zc_precision,
            scheme: args.scheme,
        },
        formats,
        out_dir: args.out,
        validate: args.validate,
        seed: args.seed,
    };
    let outcome = match cli::run(&req) {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("{msg}");
            return EXIT_ERROR;
        }
    };
    let fp = &outcome.flowpipe;
    println!(
        "t = {} .. {}: {} steps, {} crossings, {} branch(es), {:.2} s",
        fp.t0,
        fp.t_f,
        fp.stats.steps,
        fp.stats.crossings,
        fp.branches.len(),
        outcome.elapsed.as_secs_f64()
    );
    if let Some(b) = fp.final_enclosure() {
        for (name, iv) in fp.vars.iter().zip(b) {
            println!("  {name} in [{:.10e}, {:.10e}]", iv.lo(), iv.hi());
        }
    }
    for w in &fp.warnings {
        eprintln!("warning: {w}");
    }
    for b in fp.branches.iter().filter(|b| !b.is_complete()) {
        eprintln!("warning: branch {} stopped early: {:?}", b.id, b.status);
    }
    if let Some(r) = &outcome.report {
        println!(
            "validation: {}/{} samples contained ({} skipped, {} violations)",
            r.contained,
            r.samples - r.skipped.len(),
            r.skipped.len(),
            r.violations.len()
        );
    }
    for p in &outcome.written {
        println!("wrote {}", p.display());
    }
    outcome.exit_code()
}

fn bench(args: BenchArgs) -> i32 {
    let rows = cli::bench_all(args.validate, args.seed);
    print!("{}", cli::bench_table(&rows));
    match cli::write_bench_artifacts(&rows, args.validate, args.seed, &args.out) {
        Ok(written) => println!("wrote {} files to {}", written.len(), args.out.display()),
        Err(msg) => {
            eprintln!("{msg}");
            return EXIT_ERROR;
        }
    }
    if rows.iter().all(|r| r.passed()) {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
    };
    ExitCode::from(code as u8)
}
