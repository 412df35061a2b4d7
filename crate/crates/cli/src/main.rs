use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ibcast::coding::{TreeCode, TreeCodeOptions};
use ibcast::harness::{
    check_progress_bound, check_step_law, run_sweep, select_regime, summarize, write_csv, ExperimentConfig,
    ExperimentReport, HarnessError, Setup, SweepConfig, Thresholds,
};
use ibcast::trace::Trace;

#[derive(Parser)]
#[command(name = "ibcast", version, about = "Noisy simulation of protocols over intersecting broadcast links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunFlags {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    out: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trials of one experiment.
    Simulate {
        #[command(flatten)]
        run: RunFlags,
        /// Write the state trace of trial 0 here as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print the overhead regime of a topology.
    Regime {
        #[arg(long)]
        n1: usize,
        /// Number of links.
        #[arg(long, conflicts_with = "log2_n2", required_unless_present = "log2_n2")]
        n2: Option<u64>,
        /// Base-2 logarithm of the number of links, for counts too large to
        /// write out.
        #[arg(long)]
        log2_n2: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        c_a: f64,
        #[arg(long, default_value_t = 1.0)]
        c_b: f64,
        #[arg(long, default_value_t = 1.0)]
        c_c: f64,
    },
    /// Build a tree code, verify it, and print its descriptor.
    Treecode {
        #[arg(long, default_value_t = 3)]
        arity: u32,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Alphabet size; defaults to the existence bound.
        #[arg(long)]
        symbols: Option<u32>,
        /// Depth verified exhaustively.
        #[arg(long, default_value_t = 6)]
        depth: usize,
        /// Labelled depth, if deeper than the verified one.
        #[arg(long)]
        labelled_depth: Option<usize>,
        /// Random path pairs checked at the labelled depth.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the descriptor here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a recorded trace against the progress bound and the step law.
    Check {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run a grid of experiments.
    Sweep {
        #[command(flatten)]
        run: RunFlags,
    },
}

#[derive(Debug)]
enum CliError {
    Harness(HarnessError),
    Io(PathBuf, io::Error),
    Other(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Harness(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Other(s) => f.write_str(s),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Harness(e)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_owned(), e))
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Io(path.to_owned(), e))
}

fn apply_overrides(config: &mut ExperimentConfig, run: &RunFlags) -> Result<(), CliError> {
    if let Some(seed) = run.seed {
        config.seed = seed;
    }
    if let Some(trials) = run.trials {
        config.trials = trials;
    }
    config.validate()?;
    Ok(())
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Other(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Io("<stdout>".into(), e))
}

fn simulate(run: &RunFlags, trace: Option<&Path>) -> Result<bool, CliError> {
    let mut config = ExperimentConfig::from_json(&read(&run.config)?)?;
    apply_overrides(&mut config, run)?;
    let setup = Setup::new(&config)?;
    for w in &setup.warnings {
        log::warn!("{w}");
    }
    let mut reports = Vec::with_capacity(config.trials);
    for i in 0..config.trials {
        let out = setup.run_trial(i, i == 0 && trace.is_some())?;
        if let (Some(path), Some(t)) = (trace, &out.trace) {
            t.write_json_lines(io::BufWriter::new(create(path)?)).map_err(|e| CliError::Io(path.to_owned(), e))?;
            log::info!("trace of trial 0 written to {}", path.display());
        }
        reports.push(out.report);
    }
    let report = ExperimentReport { summary: summarize(&setup, &reports), warnings: setup.warnings.clone(), trials: reports };
    match run.out.unwrap_or(Format::Json) {
        Format::Json => print_json(&report)?,
        Format::Csv => write_csv(std::slice::from_ref(&report.summary), io::stdout().lock())?,
    }
    Ok(report.summary.clean())
}

fn sweep(run: &RunFlags) -> Result<bool, CliError> {
    let mut sweep = SweepConfig::from_json(&read(&run.config)?)?;
    apply_overrides(&mut sweep.base, run)?;
    let rows = run_sweep(&sweep)?;
    match run.out.unwrap_or(Format::Csv) {
        Format::Csv => write_csv(&rows, io::stdout().lock())?,
        Format::Json => print_json(&rows)?,
    }
    Ok(rows.iter().all(|r| r.clean()))
}

fn check(path: &Path) -> Result<bool, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(path.to_owned(), e))?;
    let trace = Trace::read_json_lines(BufReader::new(file)).map_err(|e| CliError::Io(path.to_owned(), e))?;
    let bound = check_progress_bound(&trace).map_err(HarnessError::from)?;
    let law = check_step_law(&trace);
    for p in &bound {
        println!("progress bound violated: party {} step {}: RP {} + B {} + X {} < {}", p.party, p.step, p.rp, p.backs, p.x, p.step);
    }
    for v in &law {
        println!("step law violated: {v}");
    }
    println!("{} records, {} progress violations, {} step-law violations", trace.records.len(), bound.len(), law.len());
    Ok(bound.is_empty() && law.is_empty())
}

#[allow(clippy::too_many_arguments)]
fn treecode(
    arity: u32,
    alpha: f64,
    symbols: Option<u32>,
    depth: usize,
    labelled_depth: Option<usize>,
    samples: usize,
    seed: u64,
    output: Option<&Path>,
) -> Result<bool, CliError> {
    let opts = TreeCodeOptions { symbols, depth: labelled_depth, ..TreeCodeOptions::default() };
    let tc = TreeCode::build(arity, alpha, depth, seed, opts).map_err(HarnessError::from)?;
    // Construction already verifies; repeat it from the rebuilt descriptor.
    let rebuilt = TreeCode::from_descriptor(&tc.descriptor());
    let mut ok = rebuilt.verify_exhaustive(depth).is_ok();
    if samples > 0 && tc.depth() > depth {
        if let Err(v) = rebuilt.verify_sampled(tc.depth(), samples, seed ^ 0x5A) {
            log::error!("sampled check failed: {v:?}");
            ok = false;
        }
    }
    log::info!("arity {arity}, {} symbols ({} bits), verified to depth {depth}", tc.symbols(), tc.symbol_bits());
    match output {
        Some(path) => {
            let f = create(path)?;
            serde_json::to_writer_pretty(f, &tc.descriptor()).map_err(|e| CliError::Other(e.to_string()))?;
        }
        None => print_json(&tc.descriptor())?,
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate { run, trace } => simulate(&run, trace.as_deref()),
        Command::Sweep { run } => sweep(&run),
        Command::Check { trace } => check(&trace),
        Command::Regime { n1, n2, log2_n2, c_a, c_b, c_c } => {
            let log2_n2 = match (n2, log2_n2) {
                (Some(0), _) => return Err(CliError::Other("n2 must be at least 1".into())),
                (Some(n2), _) => (n2 as f64).log2(),
                (None, Some(l)) => l,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let thresholds = Thresholds { c_a, c_b, c_c };
            let info = select_regime(n1, log2_n2, &thresholds)
                .ok_or_else(|| CliError::Other(format!("no regime for n1={n1}, log2 n2={log2_n2}: n1 must be at least 2")))?;
            println!("regime {} overhead {:.4}", info.regime, info.overhead);
            Ok(true)
        }
        Command::Treecode { arity, alpha, symbols, depth, labelled_depth, samples, seed, output } => {
            treecode(arity, alpha, symbols, depth, labelled_depth, samples, seed, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("invariant violations found");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
