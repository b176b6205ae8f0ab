//! `radical` command-line tool.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use radical::bench::{self, principal_angle, GridConfig, Timing, Verdict};
use radical::formats::{InstanceFile, SamplesFile};
use radical::synthgen::{generate, InstanceSpec};
use radical::{solve, Error, Method, Reference, SolveOptions, SystemMode};

#[derive(Parser)]
#[command(name = "radical", version, about = "Estimate the subspace on which several distributions share their mean and covariance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic problem instance.
    Generate(GenerateArgs),
    /// Estimate the common subspace from an instance or samples file.
    Estimate(EstimateArgs),
    /// Run a benchmark grid and write results.csv and summary.json.
    Benchmark(BenchmarkArgs),
    /// Report identifiability bounds for D, d and m.
    Identifiability(IdentifiabilityArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("noise").required(true).args(["sigma", "no_disturb"])))]
struct GenerateArgs {
    #[arg(long = "dim")]
    dim: usize,
    #[arg(long = "subdim")]
    sub_dim: usize,
    #[arg(long = "epochs")]
    epochs: usize,
    /// Disturbance level (mean log-eigenvalue of the added noise).
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    /// Leave the covariances exact.
    #[arg(long)]
    no_disturb: bool,
    /// Draw nonzero means that agree on the subspace.
    #[arg(long)]
    with_means: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Approx,
    Ssa,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Reference,
    Pairwise,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Last,
    Average,
}

#[derive(Args)]
struct EstimateArgs {
    /// Instance JSON, or samples CSV when the extension is `.csv`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Subspace dimension; defaults to the instance's `d`.
    #[arg(long = "subdim")]
    sub_dim: Option<usize>,
    #[arg(long, value_enum, default_value = "approx")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "reference")]
    mode: ModeArg,
    /// Whitening reference; `last` for instances and `average` for samples
    /// unless given.
    #[arg(long, value_enum)]
    reference: Option<ReferenceArg>,
    /// Ignore the means and compare covariances only.
    #[arg(long)]
    covariance_only: bool,
    /// Optimizer restarts for `--method ssa`.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// `standard`, a JSON grid file, or inline `D=10;d=1..9;m=110;sigma=-8,-4`.
    #[arg(long)]
    grid: String,
    /// Overrides the grid's trial count.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Record zero runtimes so the output depends only on the seed.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct IdentifiabilityArgs {
    #[arg(long = "dim")]
    dim: usize,
    #[arg(long = "subdim")]
    sub_dim: usize,
    #[arg(long = "epochs")]
    epochs: usize,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => 1,
            Error::Format(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::NotSquare { .. }
            | Error::NonFinite
            | Error::TooFewSamples(_) => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| io_failure(path, e))
}

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    match out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| io_failure(path, e))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn generate_cmd(args: GenerateArgs) -> Result<(), Failure> {
    let mut spec = InstanceSpec::new(args.dim, args.sub_dim, args.epochs, args.sigma);
    spec.with_means = args.with_means;
    let instance = generate(&spec, args.seed)?;
    let file = InstanceFile::from(&instance);
    let mut w = create(&args.out)?;
    file.write(&mut w)?;
    w.flush().map_err(|e| io_failure(&args.out, e))?;
    let report = bench::identifiability(args.dim, args.sub_dim, args.epochs)?;
    let verdict = match report.verdict {
        Verdict::Identifiable => "identifiable",
        Verdict::NotGuaranteed => "not guaranteed",
    };
    eprintln!(
        "identifiability: {verdict} (m={} needs at least {}); algebraic regime: {}",
        args.epochs, report.min_m_identifiable, report.algebraic_regime
    );
    Ok(())
}

fn estimate_cmd(args: EstimateArgs) -> Result<(), Failure> {
    let is_samples = args
        .input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (epochs, file_d, truth, default_ref) = if is_samples {
        let samples = SamplesFile::read(open(&args.input)?)?;
        (samples.cumulants()?, None, None, Reference::Average)
    } else {
        let file = InstanceFile::read(open(&args.input)?)?;
        (file.cumulants()?, Some(file.d), file.true_basis()?, Reference::Last)
    };
    let d = args
        .sub_dim
        .or(file_d)
        .ok_or_else(|| usage("--subdim is required for samples files"))?;
    let method = match args.method {
        MethodArg::Exact => Method::Exact,
        MethodArg::Approx => Method::Approx,
        MethodArg::Ssa => Method::Ssa,
    };
    let reference = match args.reference {
        Some(ReferenceArg::Last) => Reference::Last,
        Some(ReferenceArg::Average) => Reference::Average,
        None => default_ref,
    };
    let mut options = SolveOptions::new(method, reference);
    options.mode = match args.mode {
        ModeArg::Reference => SystemMode::Reference,
        ModeArg::Pairwise => SystemMode::Pairwise,
    };
    options.seed = args.seed;
    options.use_means = !args.covariance_only;
    if let Some(r) = args.restarts {
        options.ssa.restarts = r;
    }
    let start = Instant::now();
    let solution = solve(&epochs, d, &options)?;
    let runtime = start.elapsed().as_secs_f64();
    let estimate = &solution.estimate;
    let angle = truth
        .as_ref()
        .map(|t| principal_angle(&estimate.basis, t))
        .transpose()?;
    let basis: Vec<Vec<f64>> = estimate
        .basis
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let generators: Vec<&[f64]> = estimate.generators.iter().map(|g| g.coeffs()).collect();
    let mut value = json!({
        "method": format!("{method:?}").to_lowercase(),
        "reference": format!("{reference:?}").to_lowercase(),
        "mode": format!("{:?}", options.mode).to_lowercase(),
        "D": estimate.dim_ambient,
        "d": estimate.dim_subspace,
        "generators": generators,
        "basis": basis,
        "angle": angle,
        "runtime": runtime,
    });
    if let Some(run) = &solution.ssa {
        value["ssa"] = json!({
            "objective": run.objective,
            "iterations": run.iterations,
            "converged": run.converged,
        });
    }
    write_json(&value, args.out.as_deref())
}

fn load_grid(text: &str) -> Result<GridConfig, Failure> {
    if text == "standard" {
        return Ok(GridConfig::standard(50));
    }
    let path = Path::new(text);
    if path.is_file() {
        let config: GridConfig = serde_json::from_reader(open(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        config.validate()?;
        return Ok(config);
    }
    Ok(GridConfig::parse_inline(text)?)
}

fn benchmark_cmd(args: BenchmarkArgs) -> Result<(), Failure> {
    let mut config = load_grid(&args.grid)?;
    if let Some(t) = args.trials {
        config.trials = t;
        config.validate()?;
    }
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let timing = if args.no_timing { Timing::Omit } else { Timing::Measure };
    let report = bench::run_grid(&config, args.jobs, timing)?;
    for s in &report.skipped {
        eprintln!("warning: skipped D={} d={} m={}: {}", s.dim, s.d, s.m, s.reason);
    }
    let csv_path = args.out.join("results.csv");
    let mut w = create(&csv_path)?;
    bench::write_csv(&report.results, &mut w)?;
    w.flush().map_err(|e| io_failure(&csv_path, e))?;
    let summary = bench::summary_json(&config, &report, args.jobs, timing);
    write_json(&summary, Some(&args.out.join("summary.json")))?;
    println!("method     d  sigma  median_angle  median_runtime  failed");
    for c in &report.cells {
        let angle = c.angle.map_or("-".to_string(), |q| format!("{:.3e}", q.q50));
        let runtime = c.runtime.map_or("-".to_string(), |q| format!("{:.3e}", q.q50));
        println!(
            "{:<9} {:>2}  {:>5}  {angle:>12}  {runtime:>14}  {:>6}",
            c.method.name(),
            c.d,
            bench::sigma_label(c.sigma),
            c.failed
        );
    }
    Ok(())
}

fn identifiability_cmd(args: IdentifiabilityArgs) -> Result<(), Failure> {
    let report = bench::identifiability(args.dim, args.sub_dim, args.epochs)?;
    write_json(&serde_json::to_value(report).expect("serializable"), None)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Benchmark(a) => benchmark_cmd(a),
        Command::Identifiability(a) => identifiability_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
