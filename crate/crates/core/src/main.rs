use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use esgd::harness::{self, EsgdOptions};

#[derive(Parser)]
#[command(name = "esgd", version, about = "Evolutionary SGD with anchor models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the single-optimizer reference model (the usual initial anchor).
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run anchored ESGD from an anchor parameter file.
    Esgd {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Chain several ESGD rounds, each anchored on the previous round's best model.
    Iterate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        rounds: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarise a run directory and write report.tsv.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a shipped configuration template (bn50-tiny or analytic).
    Template { name: String },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Baseline { config, out, seed } => {
            let outcome = harness::cmd_baseline(&config, &out, seed)?;
            let t = &outcome.trace;
            println!(
                "baseline: loss {:.6} -> {:.6} over {} epochs ({} back-offs), params in {}",
                t.initial_loss,
                t.losses.last().copied().unwrap_or(t.initial_loss),
                t.losses.len(),
                t.backed_off.iter().filter(|&&b| b).count(),
                out.join("params.bin").display()
            );
        }
        Command::Esgd {
            config,
            anchor,
            out,
            resume,
            seed,
        } => {
            let outcome = harness::cmd_iterate(&EsgdOptions {
                config,
                anchor,
                out: out.clone(),
                resume,
                seed,
                rounds: 1,
            })?;
            print_outcome(&outcome, &out);
        }
        Command::Iterate {
            config,
            anchor,
            rounds,
            out,
            resume,
            seed,
        } => {
            let outcome = harness::cmd_iterate(&EsgdOptions {
                config,
                anchor,
                out: out.clone(),
                resume,
                seed,
                rounds,
            })?;
            print_outcome(&outcome, &out);
        }
        Command::Report { out } => {
            let report = harness::cmd_report(&out)?;
            print!("{}", report.text);
        }
        Command::Template { name } => {
            let text = harness::template(&name).ok_or_else(|| {
                anyhow::anyhow!("unknown template `{name}` (expected bn50-tiny or analytic)")
            })?;
            print!("{text}");
        }
    }
    Ok(())
}

fn print_outcome(outcome: &harness::EsgdOutcome, out: &std::path::Path) {
    let h = &outcome.history;
    println!(
        "esgd: anchor {:.6} -> best {:.6} after {} generations ({} anchor switches), params in {}",
        h.initial_anchor,
        outcome.best.fitness.unwrap_or(f64::INFINITY),
        h.generations.len(),
        h.switch_count(),
        out.join("params.bin").display()
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
