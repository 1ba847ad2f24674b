//! Thin command-line front end; all behaviour lives in the library.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use textcirc::cli::{self, ExperimentConfig};
use textcirc::story::{Split, Tier};
use textcirc::Dialect;

#[derive(Parser)]
#[command(name = "textcirc", version, about = "Compositional text-circuit question answering workbench")]
struct Args {
    /// Worker threads (0 = logical cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DialectArg {
    Two,
    Four,
}

impl From<DialectArg> for Dialect {
    fn from(d: DialectArg) -> Dialect {
        match d {
            DialectArg::Two => Dialect::TwoDir,
            DialectArg::Four => Dialect::FourDir,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    ValidA,
    ValidComp,
    Test,
    All,
}

impl SplitArg {
    fn to_split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::ValidA => Some(Split::ValidA),
            SplitArg::ValidComp => Some(Split::ValidComp),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset tier as JSONL.
    Generate {
        #[arg(long)]
        dialect: DialectArg,
        #[arg(long)]
        tier: Tier,
        /// Width range, e.g. 2..8 (inclusive).
        #[arg(long)]
        widths: String,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the config's datasets and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Accuracy table (with confidence intervals) on a split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "valid-comp")]
        split: SplitArg,
        /// Also dump per-instance probabilities.
        #[arg(long)]
        trace: bool,
    },
    /// Accuracy under depolarising noise at several scaling factors.
    NoiseSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "valid-comp")]
        split: SplitArg,
        #[arg(long, default_value_t = 200)]
        max_instances: usize,
    },
    /// Tensor-contraction FLOPs/memory estimates.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        #[arg(long, default_value_t = 100)]
        max_instances: usize,
    },
    /// Lower to the native gate set and report qubit-reuse metrics.
    Compile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        #[arg(long)]
        reuse: bool,
        #[arg(long)]
        target_width: Option<usize>,
    },
    /// Axiom checks, Bloch trajectories and question-state surfaces.
    Interpret {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Intervention study and bias tables.
    Interventions {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_instances: usize,
    },
    /// Aggregate the artifacts of an output directory into a report.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_widths(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split("..").collect();
    match parts.as_slice() {
        [single] => {
            let w = single.parse()?;
            Ok((w, w))
        }
        [lo, hi] => Ok((lo.parse()?, hi.parse()?)),
        _ => bail!("width range must look like 2..8"),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global()?;
    }
    match args.command {
        Command::Generate { dialect, tier, widths, count, seed, out } => {
            let w = parse_widths(&widths)?;
            cli::cmd_generate(dialect.into(), tier, w, count, seed, &out)
        }
        Command::Train { config } => cli::cmd_train(&ExperimentConfig::load(&config)?),
        Command::Eval { config, checkpoint, split, trace } => cli::cmd_eval(
            &ExperimentConfig::load(&config)?,
            checkpoint.as_deref(),
            split.to_split(),
            trace,
        ),
        Command::NoiseSweep { config, checkpoint, split, max_instances } => cli::cmd_noise_sweep(
            &ExperimentConfig::load(&config)?,
            &checkpoint,
            split.to_split(),
            max_instances,
        ),
        Command::Estimate { config, checkpoint, split, max_instances } => cli::cmd_estimate(
            &ExperimentConfig::load(&config)?,
            checkpoint.as_deref(),
            split.to_split(),
            max_instances,
        ),
        Command::Compile { config, checkpoint, split, reuse, target_width } => cli::cmd_compile(
            &ExperimentConfig::load(&config)?,
            checkpoint.as_deref(),
            split.to_split(),
            reuse,
            target_width,
        ),
        Command::Interpret { config, checkpoint } => {
            cli::cmd_interpret(&ExperimentConfig::load(&config)?, checkpoint.as_deref())
        }
        Command::Interventions { config, checkpoint, max_instances } => cli::cmd_interventions(
            &ExperimentConfig::load(&config)?,
            checkpoint.as_deref(),
            max_instances,
        ),
        Command::Report { dir, out } => cli::cmd_report(&dir, &out),
    }
}
