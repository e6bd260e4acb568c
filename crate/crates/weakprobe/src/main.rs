//! `weakprobe`: scenario runs over the weak-measurement toolkit with CSV
//! and SVG output.

mod commands;
mod error;
mod output;
mod params;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, Result};
use crate::output::Sink;
use crate::params::{parse_flags, read_scenario, usage, Params};

#[derive(Parser)]
#[command(name = "weakprobe", version, about = "Weak values, weak variances and probe-quadrature readout")]
struct Cli {
    /// Scenario file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Validate parameters without computing or writing anything.
    #[arg(long)]
    dry_run: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Weak value, weak variance, moments and weak-valued probabilities.
    Weakstats(Raw),
    /// Exact grid simulation against the second-order predictions.
    Simulate(Raw),
    /// Theory curves of one quadrature over waveplate angles.
    Sweep(Raw),
    /// Wigner function of a probe built from weak moments.
    Wigner(Raw),
    /// Lens and free-space realization of a fractional Fourier transform.
    #[command(name = "fracft-demo", alias = "fracft")]
    FracftDemo(Raw),
    /// Mean and variance-change curves for several quadratures.
    Curves(Raw),
    /// Noisy synthetic data from the theory curves.
    Synthesize(Raw),
    /// Least-squares fit of the theory curve to data.
    Fit(Raw),
    /// Shape the post-selected probe toward a target waveform.
    Shape(Raw),
}

/// Command parameters as `--key value`; `--help` lists them.
#[derive(Args)]
#[command(disable_help_flag = true)]
struct Raw {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
    params: Vec<String>,
}

impl Cmd {
    fn parts(&self) -> (&'static str, &[String]) {
        let (name, raw) = match self {
            Self::Weakstats(r) => ("weakstats", r),
            Self::Simulate(r) => ("simulate", r),
            Self::Sweep(r) => ("sweep", r),
            Self::Wigner(r) => ("wigner", r),
            Self::FracftDemo(r) => ("fracft-demo", r),
            Self::Curves(r) => ("curves", r),
            Self::Synthesize(r) => ("synthesize", r),
            Self::Fit(r) => ("fit", r),
            Self::Shape(r) => ("shape", r),
        };
        (name, &raw.params)
    }
}

/// Global options may also follow the subcommand.
struct Globals {
    config: Option<PathBuf>,
    dry_run: bool,
    help: bool,
    rest: Vec<String>,
}

fn split_globals(raw: &[String]) -> Result<Globals> {
    let mut g = Globals { config: None, dry_run: false, help: false, rest: Vec::new() };
    let mut it = raw.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--dry-run" | "--dry_run" => g.dry_run = true,
            "--help" | "-h" => g.help = true,
            "--config" => {
                let v = it.next().ok_or_else(|| CliError::validation("--config needs a value"))?;
                g.config = Some(PathBuf::from(v));
            }
            s if s.starts_with("--config=") => g.config = Some(PathBuf::from(&s["--config=".len()..])),
            _ => g.rest.push(arg.clone()),
        }
    }
    Ok(g)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("WEAKPROBE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::validation(format!("WEAKPROBE_THREADS={v:?}: expected a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::validation(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    let (name, raw) = cli.command.parts();
    let command = commands::find(name).expect("every subcommand has a schema");
    let globals = split_globals(raw)?;
    if globals.help {
        print!("{}", usage(command.name, command.about, command.schema));
        return Ok(());
    }
    configure_threads()?;
    let scenario = match globals.config.as_ref().or(cli.config.as_ref()) {
        Some(path) => read_scenario(path)?,
        None => BTreeMap::new(),
    };
    let flags = parse_flags(&globals.rest)?;
    let params = Params::resolve(command.name, command.schema, &scenario, &flags)?;
    let global = |k: &str| flags.iter().find(|(f, _)| f == k).map(|(_, v)| v.clone()).or_else(|| scenario.get(k).cloned());
    let seed = match global("seed") {
        Some(s) => s.parse::<u64>().map_err(|_| CliError::validation(format!("--seed {s:?}: expected an unsigned integer")))?,
        None => cli.seed.unwrap_or(0),
    };
    let out_dir = global("out-dir").map(PathBuf::from).or(cli.out_dir).unwrap_or_else(|| PathBuf::from("out"));
    let dry_run = cli.dry_run || globals.dry_run;

    let comment = format!("weakprobe {} seed={seed}{}", params.command(), params.describe());
    let mut state = commands::Run { seed, dry_run, sink: Sink::new(&out_dir, comment), report: Vec::new() };
    let result = (command.run)(&params, &mut state);
    for line in &state.report {
        println!("{line}");
    }
    if dry_run && result.is_ok() {
        println!("dry run: {} parameters valid:{}", params.command(), params.describe());
    }
    for path in state.sink.written() {
        println!("wrote {}", path.display());
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}
