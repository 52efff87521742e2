//! Command-line entry point.

use clap::{Parser, Subcommand};
use convfactor_cli::commands::{self, CommonOpts};
use convfactor_cli::report::Report;
use convfactor_cli::CliError;

#[derive(Parser)]
#[command(
    name = "convfactor",
    about = "Analyze, compress, and verify convolutional layer factorizations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for all randomized probes and initializations.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Emit the report as JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Count activation element-ops in FLOP totals.
    #[arg(long, global = true)]
    include_activations: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer parameter and FLOP table of an architecture.
    Analyze {
        /// Built-in name (l2net, superpoint) or a JSON architecture file.
        arch: String,
        /// Show the table for a converted variant: depthsep or tucker.
        #[arg(long)]
        variant: Option<String>,
        /// Width multiplier for the depthsep variant.
        #[arg(long, default_value_t = 1)]
        t: usize,
    },
    /// Apply a rewrite plan and report compression ratios.
    Plan {
        arch: String,
        /// Plan string, e.g. "depthsep:2-7 t=2@3,5" or "cdp:2-7 alpha=2".
        plan: String,
    },
    /// Factorize stored weights according to a plan and write the result.
    Decompose {
        arch: String,
        weights: String,
        plan: String,
        out: String,
        /// Also write the rewritten architecture as JSON.
        #[arg(long)]
        arch_out: Option<String>,
    },
    /// Run the numeric equivalence battery on stored weights.
    Verify {
        arch: String,
        weights: String,
        /// Maximum allowed relative error per check.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Estimate the rank of a single stored matrix.
    Rank {
        /// Weight container holding exactly one 2-D tensor.
        matrix: String,
    },
}

fn emit(report: &Report, json: bool) {
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let opts = CommonOpts {
        seed: cli.seed,
        include_activations: cli.include_activations,
    };
    match &cli.command {
        Command::Analyze { arch, variant, t } => {
            let report = commands::cmd_analyze(arch, variant.as_deref(), *t, opts)?;
            emit(&report, cli.json);
            Ok(0)
        }
        Command::Plan { arch, plan } => {
            let report = commands::cmd_plan(arch, plan, opts)?;
            emit(&report, cli.json);
            Ok(0)
        }
        Command::Decompose {
            arch,
            weights,
            plan,
            out,
            arch_out,
        } => {
            let report =
                commands::cmd_decompose(arch, weights, plan, out, arch_out.as_deref(), opts)?;
            emit(&report, cli.json);
            Ok(0)
        }
        Command::Verify {
            arch,
            weights,
            tolerance,
        } => {
            let (report, all_passed) = commands::cmd_verify(arch, weights, *tolerance, opts)?;
            emit(&report, cli.json);
            if all_passed {
                Ok(0)
            } else {
                eprintln!("verification failed; see the check list above");
                Ok(5)
            }
        }
        Command::Rank { matrix } => {
            let report = commands::cmd_rank(matrix, opts)?;
            emit(&report, cli.json);
            Ok(0)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code);
        }
    }
}
