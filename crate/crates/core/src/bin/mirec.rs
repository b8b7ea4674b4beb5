use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multi_interest::cli::{cmd_diagnose, cmd_eval, cmd_synth, cmd_train, config_for_checkpoint};
use multi_interest::config::RunConfig;
use multi_interest::data::{SplitTag, SyntheticSpec};
use multi_interest::Result;

/// Multi-interest candidate generation: train, evaluate, inspect.
///
/// Relative output directories are placed under $MIREC_OUTPUT_ROOT when set.
#[derive(Parser)]
#[command(name = "mirec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on an interaction log and report test metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Write a planted-cluster synthetic dataset.
    Synth(SynthArgs),
    /// Interest clustering scores and an embedding export for a checkpoint.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set lambda_cl=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the resolved.cfg saved next to the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// train, valid or test.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CheckpointArgs,
    /// Comma-separated cutoffs; defaults to the config's.
    #[arg(long, value_delimiter = ',')]
    cutoffs: Option<Vec<usize>>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CheckpointArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "synth")]
    out: PathBuf,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    items_per_cluster: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    interests_per_user: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    focus_width: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl CheckpointArgs {
    fn resolve(&self) -> Result<(RunConfig, SplitTag)> {
        let mut cfg = config_for_checkpoint(&self.checkpoint, self.config.as_deref())?;
        cfg.apply_overrides(&self.sets)?;
        Ok((cfg, SplitTag::parse(&self.split)?))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let mut cfg = match &a.config {
                Some(p) => RunConfig::from_file(p)?,
                None => RunConfig::default(),
            };
            cfg.apply_overrides(&a.sets)?;
            let out = cmd_train(&cfg)?;
            println!("{}", out.record);
            println!("wrote {}", out.dir.display());
        }
        Command::Eval(a) => {
            let (cfg, tag) = a.common.resolve()?;
            let cutoffs = a.cutoffs.unwrap_or_else(|| cfg.cutoffs.clone());
            let report = cmd_eval(&a.common.checkpoint, &cfg, tag, &cutoffs)?;
            print!("{}", report.to_text());
        }
        Command::Synth(a) => {
            let d = SyntheticSpec::default();
            let spec = SyntheticSpec {
                n_clusters: a.clusters.unwrap_or(d.n_clusters),
                items_per_cluster: a.items_per_cluster.unwrap_or(d.items_per_cluster),
                users: a.users.unwrap_or(d.users),
                interests_per_user: a.interests_per_user.unwrap_or(d.interests_per_user),
                seq_len: a.seq_len.unwrap_or(d.seq_len),
                noise_rate: a.noise.unwrap_or(d.noise_rate),
                focus_width: a.focus_width.unwrap_or(d.focus_width),
                seed: a.seed.unwrap_or(d.seed),
            };
            let out = cmd_synth(&spec, &a.out)?;
            println!("wrote {}", out.dir.display());
        }
        Command::Diagnose(a) => {
            let (cfg, tag) = a.common.resolve()?;
            let out = cmd_diagnose(&a.common.checkpoint, &cfg, tag)?;
            print!("{}", out.text);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mirec: {e}");
            ExitCode::FAILURE
        }
    }
}
