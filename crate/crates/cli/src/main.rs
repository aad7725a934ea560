//! `precis`: profile kernels, run configurations, search for
//! accuracy/energy tradeoffs and check them on held-out inputs.
//!
//! Exit codes: 0 success, 1 usage error, 2 evaluation failure.

mod commands;
mod manifest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use precis::explore::{Objective, DEFAULT_THRESHOLDS};
use precis::fpcore::Width;
use precis::scope::{parse_genome, RuleKind, ScopeId};
use precis::Error;

use commands::Outcome;
use manifest::{Mode, RunManifest};

#[derive(Parser)]
#[command(name = "precis", version, about = "Reduced-precision placement and energy tradeoff search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List registered kernels.
    Kernels,
    /// Per-scope FLOP counts of one input at full precision.
    Profile {
        #[command(flatten)]
        common: Common,
    },
    /// Run one configuration over the training inputs.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        placement: Placement,
        /// Semicolon- or comma-separated mantissa widths, one per target.
        #[arg(long)]
        genome: Option<String>,
        /// Write every FLOP of the first input to trace.csv.
        #[arg(long)]
        trace: bool,
    },
    /// Search configurations and write the evaluation log and frontier.
    Explore {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        placement: Placement,
        #[command(flatten)]
        search: Search,
    },
    /// Evaluate frontier configurations on training and test inputs.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        placement: Placement,
        /// Frontier (or evaluation log) CSV from `explore`.
        #[arg(long)]
        frontier: PathBuf,
        /// Reuse the training inputs as the test set.
        #[arg(long)]
        self_test: bool,
        #[arg(long)]
        objective: Option<Objective>,
    },
    /// Recompute frontiers, hulls and savings from evaluation CSVs.
    Report {
        /// Evaluation CSVs, one per rule kind.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        /// Error thresholds in percent.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long, default_value = commands::DEFAULT_OUT)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run manifest; flags override its fields.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<String>,
    /// Target FLOP width (single or double).
    #[arg(long)]
    width: Option<Width>,
    /// Base seed; falls back to PRECIS_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Input size passed to the kernel's generator.
    #[arg(long)]
    size: Option<usize>,
    /// Number of training inputs.
    #[arg(long)]
    train: Option<usize>,
    /// Number of test inputs.
    #[arg(long)]
    test: Option<usize>,
    /// EPI table (TOML).
    #[arg(long)]
    epi: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Placement {
    /// wp, cip, fcs, plc or pli.
    #[arg(long)]
    rule: Option<RuleKind>,
    /// Comma-separated target scopes; defaults to the profile's choice.
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,
}

#[derive(Args)]
struct Search {
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    /// Hard cap on evaluations.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    crossover_rate: Option<f64>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    /// Stop after this many generations without hypervolume gain.
    #[arg(long)]
    stall_generations: Option<usize>,
    /// Mantissa widths each gene may take, comma-separated.
    #[arg(long, value_delimiter = ',')]
    alphabet: Option<Vec<u32>>,
    /// fpu or combined.
    #[arg(long)]
    objective: Option<Objective>,
}

fn targets(list: Option<Vec<String>>) -> Result<Option<Vec<ScopeId>>, Error> {
    list.map(|v| v.into_iter().map(ScopeId::new).collect()).transpose()
}

fn manifest(common: Common, overrides: RunManifest) -> Result<RunManifest, Error> {
    let base = match &common.manifest {
        Some(p) => RunManifest::load(p)?,
        None => RunManifest::default(),
    };
    let flags = RunManifest {
        kernel: common.kernel,
        width: common.width,
        seed: common.seed,
        input_size: common.size,
        train: common.train,
        test: common.test,
        epi_table: common.epi,
        output_dir: common.out,
        ..overrides
    };
    Ok(base.overlay(flags))
}

fn dispatch(cmd: Command) -> Result<Outcome, Error> {
    match cmd {
        Command::Kernels => Ok(commands::kernels_list().into()),
        Command::Profile { common } => commands::profile(&manifest(common, RunManifest::default())?),
        Command::Run { common, placement, genome, trace } => {
            let m = RunManifest {
                rule: placement.rule,
                targets: targets(placement.targets)?,
                genome: genome.as_deref().map(parse_genome).transpose()?,
                ..Default::default()
            };
            commands::run(&manifest(common, m)?, trace)
        }
        Command::Explore { common, placement, search } => {
            let m = RunManifest {
                rule: placement.rule,
                targets: targets(placement.targets)?,
                mode: search.mode,
                population: search.population,
                generations: search.generations,
                budget: search.budget,
                crossover_rate: search.crossover_rate,
                mutation_rate: search.mutation_rate,
                stall_generations: search.stall_generations,
                alphabet: search.alphabet,
                objective: search.objective,
                ..Default::default()
            };
            commands::explore(&manifest(common, m)?)
        }
        Command::Robustness { common, placement, frontier, self_test, objective } => {
            let m = RunManifest {
                rule: placement.rule,
                targets: targets(placement.targets)?,
                objective,
                ..Default::default()
            };
            commands::robustness(&manifest(common, m)?, &frontier, self_test)
        }
        Command::Report { inputs, thresholds, out } => {
            commands::report_cmd(&inputs, thresholds.as_deref().unwrap_or(&DEFAULT_THRESHOLDS), &out)
        }
    }
}

/// Problems with what the user asked for, as opposed to failures while
/// evaluating it.
fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::UnknownKernel(_)
            | Error::UnknownScope { .. }
            | Error::BitsOutOfRange { .. }
            | Error::WidthMismatch { .. }
            | Error::SpaceTooLarge { .. }
            | Error::MissingEpi { .. }
            | Error::Format(_)
            | Error::Io(_)
            | Error::TomlDe(_)
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(outcome) => {
            // a closed pipe (e.g. `| head`) is not an error
            let mut stdout = std::io::stdout().lock();
            for line in &outcome.lines {
                if writeln!(stdout, "{line}").is_err() {
                    break;
                }
            }
            match outcome.warning {
                Some(w) => {
                    eprintln!("warning: {w}");
                    ExitCode::from(2)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 1 } else { 2 })
        }
    }
}
