//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::eval::EvalArgs;

#[derive(Debug, Parser)]
#[command(name = "noisytwins", version, about = "Long-tailed conditional GAN laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic dataset described by a config.
    GenData {
        config: PathBuf,
        /// Output directory; defaults to the config's out_dir, then `data`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and write its log, checkpoints and manifest.
    Train {
        config: PathBuf,
        /// Run directory; defaults to the config's out_dir, then `runs/<tag>-seed<N>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset CSV to train on instead of drawing one from the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a checkpoint against a dataset CSV.
    Eval(EvalCommand),
    /// Train and evaluate over a grid of one hyperparameter and several seeds.
    Sweep {
        spec: PathBuf,
        /// Output directory; defaults to the spec's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EvalCommand {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    /// Reference feature file replacing the resampled dataset.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Feature file replacing the generated samples.
    #[arg(long)]
    pub gen_features: Option<PathBuf>,
    /// Evaluate the dataset against itself.
    #[arg(long, conflicts_with_all = ["features", "gen_features"])]
    pub self_eval: bool,
    /// Generated samples per run; defaults to the checkpoint config.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Independent evaluation runs with consecutive seeds.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
    /// Seed of the first run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; defaults to `eval` next to the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl From<EvalCommand> for EvalArgs {
    fn from(c: EvalCommand) -> Self {
        EvalArgs {
            checkpoint: c.checkpoint,
            data: c.data,
            features: c.features,
            gen_features: c.gen_features,
            self_eval: c.self_eval,
            samples: c.samples,
            runs: c.runs as usize,
            seed: c.seed,
            out: c.out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn grammar_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_eval_flags() {
        let cli =
            Cli::try_parse_from(["noisytwins", "eval", "c.ntck", "d.csv", "--runs", "3", "--samples", "500"]).unwrap();
        let Command::Eval(e) = cli.command else { panic!("not eval") };
        let a = EvalArgs::from(e);
        assert_eq!((a.runs, a.samples, a.self_eval), (3, Some(500), false));
        assert!(Cli::try_parse_from(["noisytwins", "eval", "c", "d", "--runs", "0"]).is_err());
        assert!(Cli::try_parse_from(["noisytwins", "eval", "c", "d", "--self-eval", "--features", "f"]).is_err());
    }

    #[test]
    fn parses_train_overrides() {
        let cli = Cli::try_parse_from(["noisytwins", "train", "c.toml", "--out", "r", "--seed", "7"]).unwrap();
        let Command::Train { seed, out, .. } = cli.command else { panic!("not train") };
        assert_eq!((seed, out), (Some(7), Some(PathBuf::from("r"))));
    }
}
