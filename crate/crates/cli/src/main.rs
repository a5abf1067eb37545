//! `mmflow` command-line front end.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 invalid input,
//! 3 mass precondition violated, 4 internal error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mmflow::divergences::{csiszar, hellinger, kl, EntropyFunction};
use mmflow::heat::{cycle_generator, heat_dual, load_generator, ou_generator, Generator, GeneratorFile};
use mmflow::hk::{hk, HkOptions};
use mmflow::space::SpaceFile;
use mmflow::transport::wasserstein;
use mmflow::verify::{run_suite_with_threads, SuiteConfig};
use mmflow::{DiscreteMeasure, Error, MetricMeasureSpace};

#[derive(Parser, Debug)]
#[command(name = "mmflow", version, about = "Divergences, transport distances and heat flows on finite metric-measure spaces")]
struct Cli {
    /// Seed for randomized checks; overrides the seed of a verify config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `verify` (0 = number of cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Treat inconclusive verification records as failures.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a space file, plus a generator file for cycle and ou.
    Space(SpaceArgs),
    /// Distance or divergence between two measure files.
    Dist(DistArgs),
    /// Evolve a measure under the adjoint heat flow.
    Flow(FlowArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct SpaceArgs {
    #[arg(value_enum)]
    kind: SpaceKind,
    /// Number of points (cycle).
    #[arg(long)]
    n: Option<usize>,
    /// Circumference (cycle).
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    length: f64,
    /// Grid spacing (ou).
    #[arg(long)]
    h: Option<f64>,
    /// Truncation radius (ou).
    #[arg(long, default_value_t = 5.0)]
    radius: f64,
    /// Space file to validate (custom).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Where to write the space.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the generator; defaults to `<out stem>.generator.json`.
    #[arg(long)]
    generator: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum SpaceKind {
    Cycle,
    Ou,
    Custom,
}

#[derive(Args, Debug)]
struct DistArgs {
    #[arg(value_enum)]
    metric: Metric,
    #[arg(long)]
    mu0: PathBuf,
    #[arg(long)]
    mu1: PathBuf,
    /// Space file; required for wp and hk.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Exponent for he and wp.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Length scale for hk.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Entropy for csiszar: kl, power:<p> or hellinger:<p>.
    #[arg(long, default_value = "kl")]
    entropy: String,
    /// Per-stage iteration budget for hk.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Stopping tolerance for hk.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Metric {
    He,
    Tv,
    Wp,
    Hk,
    Kl,
    Csiszar,
}

#[derive(Args, Debug)]
struct FlowArgs {
    #[arg(long)]
    generator: PathBuf,
    #[arg(long)]
    t: f64,
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report file; the report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Json,
    Csv,
}

enum CliError {
    Lib(Error),
    Input(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Input(msg) => f.write_str(msg),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(Error::MassMismatch { .. } | Error::ZeroMass) => 3,
            _ => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Reads a space file, keeping metric and weight violations as typed errors.
fn read_space(path: &Path) -> CliResult<MetricMeasureSpace> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let file: SpaceFile = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(MetricMeasureSpace::try_from(file)?)
}

fn read_measure(path: &Path) -> CliResult<DiscreteMeasure> {
    read_json(path)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_text(path, &text)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn default_generator_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("space");
    out.with_file_name(format!("{stem}.generator.json"))
}

/// Reference from the generator file to the space file.
fn space_reference(generator: &Path, space: &Path) -> String {
    let same_dir = generator.parent().map(|p| p.to_path_buf()) == space.parent().map(|p| p.to_path_buf());
    match (same_dir, space.file_name().and_then(|s| s.to_str())) {
        (true, Some(name)) => name.to_string(),
        _ => fs::canonicalize(space).unwrap_or_else(|_| space.to_path_buf()).display().to_string(),
    }
}

fn cmd_space(args: &SpaceArgs) -> CliResult<()> {
    let generator: Option<Generator> = match args.kind {
        SpaceKind::Cycle => {
            let n = args.n.ok_or_else(|| CliError::Input("space cycle needs --n".into()))?;
            Some(cycle_generator(n, args.length)?)
        }
        SpaceKind::Ou => {
            let h = args.h.ok_or_else(|| CliError::Input("space ou needs --h".into()))?;
            Some(ou_generator(h, args.radius)?)
        }
        SpaceKind::Custom => None,
    };
    match generator {
        Some(g) => {
            write_json(&args.out, g.space())?;
            let gpath = args.generator.clone().unwrap_or_else(|| default_generator_path(&args.out));
            write_json(&gpath, &GeneratorFile::with_space_path(&g, space_reference(&gpath, &args.out)))
        }
        None => {
            let input = args.input.as_ref().ok_or_else(|| CliError::Input("space custom needs --input".into()))?;
            let space = read_space(input)?;
            write_json(&args.out, &space)
        }
    }
}

fn cmd_dist(args: &DistArgs) -> CliResult<String> {
    let mu0 = read_measure(&args.mu0)?;
    let mu1 = read_measure(&args.mu1)?;
    let space = match &args.space {
        Some(p) => Some(read_space(p)?),
        None => None,
    };
    let need_space = || space.as_ref().ok_or_else(|| CliError::Input("this metric needs --space".into()));
    if let Some(s) = &space {
        for mu in [&mu0, &mu1] {
            if mu.len() != s.len() {
                return Err(Error::LengthMismatch { expected: s.len(), found: mu.len() }.into());
            }
        }
    }
    let value = match args.metric {
        Metric::He => num(hellinger(args.p, &mu0, &mu1)?),
        Metric::Tv => num(hellinger(1.0, &mu0, &mu1)?),
        Metric::Kl => num(kl(&mu0, &mu1)?),
        Metric::Csiszar => num(csiszar(EntropyFunction::parse(&args.entropy)?, &mu0, &mu1)?),
        Metric::Wp => num(wasserstein(need_space()?, &mu0, &mu1, args.p)?.distance),
        Metric::Hk => {
            let mut opts = HkOptions::default();
            if let Some(m) = args.max_iter {
                opts.max_iter = m;
            }
            if let Some(t) = args.tol {
                opts.tol = t;
            }
            let sol = hk(need_space()?, &mu0, &mu1, args.alpha, &opts)?;
            if !sol.converged {
                eprintln!("warning: HK solver did not converge within {} iterations per stage", opts.max_iter);
            }
            format!("{} {}", num(sol.distance()), num(sol.gap_estimate))
        }
    };
    Ok(value)
}

fn cmd_flow(args: &FlowArgs) -> CliResult<()> {
    let g = load_generator(&args.generator)?;
    let mu = read_measure(&args.mu)?;
    let out = heat_dual(&g, args.t, &mu)?;
    write_json(&args.out, &out)
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> CliResult<u8> {
    let mut config = SuiteConfig::load(&args.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let report = run_suite_with_threads(&config, cli.threads)?;
    let text = match args.format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv(),
    };
    match &args.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    eprintln!(
        "{} records: {} pass, {} fail, {} inconclusive",
        report.total, report.passed, report.failed, report.inconclusive
    );
    Ok(if report.is_success(cli.strict) { 0 } else { 1 })
}

fn run(cli: &Cli) -> CliResult<u8> {
    match &cli.command {
        Command::Space(a) => cmd_space(a).map(|_| 0),
        Command::Dist(a) => cmd_dist(a).map(|v| {
            println!("{v}");
            0
        }),
        Command::Flow(a) => cmd_flow(a).map(|_| 0),
        Command::Verify(a) => cmd_verify(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(4),
    }
}
