//! `nilheat`: kernel evaluation, propagator tables, diffusion sampling and
//! the validation suites from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "nilheat", version, about = "Hypoelliptic heat kernels on the Engel and Cartan groups")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "NILHEAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the heat kernel at one or more points.
    Kernel(KernelArgs),
    /// Tabulate the quartic oscillator heat kernel on its grid.
    Propagator(PropagatorArgs),
    /// Simulate the diffusion and write the endpoint samples.
    Mc(McArgs),
    /// Run validation suites.
    Validate(ValidateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output file (default: stdout). Written atomically.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// g4 (Engel) or g5 (Cartan).
    #[arg(long)]
    group: String,
    /// Comma-separated coordinates; repeat for several points.
    #[arg(long = "point", required = true, allow_hyphen_values = true)]
    points: Vec<String>,
    /// Comma-separated times.
    #[arg(long, allow_hyphen_values = true)]
    time: String,
    /// Flat TOML file of quadrature settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one quadrature setting, `key=value`.
    #[arg(long = "set")]
    sets: Vec<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct PropagatorArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, allow_hyphen_values = true)]
    time: f64,
    /// Half-width and node count, `L,n`.
    #[arg(long)]
    grid: String,
    /// Keep every k-th node in the table.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long)]
    group: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    time: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// ito or heun.
    #[arg(long)]
    scheme: Option<String>,
    /// Flat TOML file with any of the keys above.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// group, rep, propagator, kernel, mc or all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Where to write the JSON report.
    #[arg(long, default_value = "nilheat-validate.json")]
    report: PathBuf,
}

/// A failure that ends the process: exit code, kind prefix and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "usage", message: message.into() }
    }

    pub fn output(message: impl Into<String>) -> Self {
        Self { code: 3, kind: "io", message: message.into() }
    }
}

impl From<nilheat::Error> for Failure {
    fn from(e: nilheat::Error) -> Self {
        let message = match &e {
            nilheat::Error::Contract(m)
            | nilheat::Error::MalformedMatrix(m)
            | nilheat::Error::OutOfDomain(m)
            | nilheat::Error::Parse(m) => m.clone(),
            nilheat::Error::Io(io) => io.to_string(),
        };
        Self { code: 2, kind: e.kind(), message }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::from(if e.kind() == DisplayHelpOnMissingArgumentOrSubcommand {
                    2
                } else {
                    0
                });
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first} (see nilheat --help)");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}: {}", f.kind, f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    match cli.command {
        Command::Kernel(a) => commands::kernel(a),
        Command::Propagator(a) => commands::propagator(a),
        Command::Mc(a) => commands::mc(a),
        Command::Validate(a) => commands::validate(a),
    }
}
