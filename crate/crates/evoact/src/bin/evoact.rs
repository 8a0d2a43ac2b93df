//! Batch front-end: `evolve`, `baseline`, `compare`, `props`, `synth`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use evoact::config::ExperimentConfig;
use evoact::data::SynthKind;
use evoact::experiment::{self, CliOverrides};
use evoact::init::InitScheme;

#[derive(Parser)]
#[command(
    name = "evoact",
    about = "Evolves activation functions with genetic programming",
    version
)]
struct Cli {
    /// Worker threads for parallel fitness evaluations (falls back to the
    /// EVOACT_WORKERS environment variable, then to all cores). Results are
    /// identical for any worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full evolutionary search and write all run artifacts.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: runs/<timestamp>-<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cap the number of generation steps; handy for smoke tests.
        #[arg(long)]
        max_generations: Option<usize>,
    },
    /// Train and test one baseline activation under the final protocol.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        /// relu, elu, or selu.
        #[arg(long)]
        activation: String,
        /// Weight-init scheme (defaults to the activation's usual pairing).
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tukey HSD significance table across samples.csv files.
    Compare {
        /// Two or more samples.csv files with raw per-run values.
        files: Vec<PathBuf>,
        /// Directory for significance.csv (prints the table either way).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the shape properties of one activation function.
    Props {
        /// Prefix s-expression, e.g. "(max (relu x) (swish x))".
        tree: String,
    },
    /// Generate a synthetic dataset CSV.
    Synth {
        /// xor, moons, or sine_regression.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    // Die quietly when stdout closes early (e.g. `evoact props ... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let workers = cli
        .workers
        .or_else(|| {
            std::env::var("EVOACT_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("building worker pool")?;

    match cli.command {
        Command::Evolve {
            config,
            seed,
            out,
            max_generations,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let overrides = CliOverrides {
                seed,
                out,
                max_generations,
            };
            experiment::cmd_evolve(&config, &overrides)?;
        }
        Command::Baseline {
            config,
            activation,
            init,
            seed,
            out,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let init = init.map(|name| InitScheme::from_name(&name)).transpose()?;
            let overrides = CliOverrides {
                seed,
                out,
                max_generations: None,
            };
            experiment::cmd_baseline(&config, &activation, init, &overrides)?;
        }
        Command::Compare { files, out } => {
            experiment::cmd_compare(&files, out.as_deref())?;
        }
        Command::Props { tree } => {
            let report = experiment::cmd_props(&tree)?;
            println!("function: {}", report.tree);
            let v = report.vector;
            println!("monotone_nondecreasing: {}", v.monotone_nondecreasing);
            println!("zero_on_nonpositive:    {}", v.zero_on_nonpositive);
            println!("upper_unbounded:        {}", v.upper_unbounded);
            println!("lower_unbounded:        {}", v.lower_unbounded);
            println!("probes:");
            for (x, value) in report.probes {
                match value {
                    Some(v) => println!("  f({x:>10}) = {v}"),
                    None => println!("  f({x:>10}) overflows"),
                }
            }
        }
        Command::Synth {
            kind,
            n,
            noise,
            seed,
            out,
        } => {
            let kind = match kind.as_str() {
                "xor" => SynthKind::Xor,
                "moons" => SynthKind::Moons,
                "sine_regression" => SynthKind::SineRegression,
                other => {
                    bail!("unknown synth kind '{other}' (expected xor, moons, sine_regression)")
                }
            };
            experiment::cmd_synth(kind, n, noise, seed, &out)?;
        }
    }
    Ok(())
}
