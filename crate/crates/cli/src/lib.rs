//! Experiment harness for the noisytwins laboratory: dataset generation,
//! training runs with manifests, multi-seed evaluation, and hyperparameter
//! sweeps with CSV and SVG reports.

pub mod args;
pub mod error;
pub mod eval;
pub mod gen_data;
pub mod io;
pub mod manifest;
pub mod svg;
pub mod sweep;
pub mod train;

use args::{Cli, Command};
use error::Result;

/// Runs one parsed command, printing a short summary on success.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let o = gen_data::run_gen_data(&config, out.as_deref())?;
            println!("wrote {} rows to {}", o.rows, o.csv.display());
        }
        Command::Train { config, out, seed, data } => {
            let m = train::run_train(&train::TrainArgs { config, out, seed, data })?;
            println!("{} run, seed {}, {} iterations", m.tag, m.seed, m.iterations_completed);
        }
        Command::Eval(a) => {
            let o = eval::run_eval(&a.into())?;
            for (name, mean, std) in noisytwins::eval::summarize(&o.reports) {
                println!("{name}: {mean:.6} ± {std:.6}");
            }
            println!("wrote {}", o.summary.display());
        }
        Command::Sweep { spec, out } => {
            let o = sweep::run_sweep(&spec, out.as_deref())?;
            println!("{} runs, results in {}", o.jobs.len(), o.dir.display());
        }
    }
    Ok(())
}
