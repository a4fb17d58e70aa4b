//! `rhm`: batch experiments on the Random Hierarchy Model.
//!
//! Exit codes: 0 success, 2 config error, 3 constraint violation,
//! 4 numeric failure.

mod commands;
mod config;
mod error;
mod export;
mod output;

use clap::{Parser, Subcommand};

use config::{resolve, Common, ParamArgs};
use error::Result;

#[derive(Parser)]
#[command(name = "rhm", version, about = "Random Hierarchy Model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a grammar and write it as JSON.
    GenGrammar {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        options: commands::GenGrammarOpts,
    },
    /// Sample a dataset (binary or CSV).
    GenData {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        options: commands::GenDataOpts,
    },
    /// Exact s^l-gram loss ladder averaged over grammar instances.
    OracleLoss {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        options: commands::OracleLossOpts,
    },
    /// Ensemble correlation magnitudes and sampling noise.
    Stats {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        options: commands::StatsOpts,
    },
    /// Sample-complexity sweep of the clustering learner.
    Learner {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        options: commands::LearnerOpts,
    },
    /// Predicted sample complexities and scaling exponents.
    Theory {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        options: commands::TheoryOpts,
    },
    /// Fit a power law to a loss curve.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        options: commands::FitOpts,
    },
    /// Original/transformed sequence pairs for representation probes.
    ProbeData {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        options: commands::ProbeDataOpts,
    },
    /// Join artifacts on params hash into one table.
    Export {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        options: export::ExportOpts,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenGrammar { common, params, options } => commands::gen_grammar(resolve("gen-grammar", common, params, options)?),
        Command::GenData { common, params, options } => commands::gen_data(resolve("gen-data", common, params, options)?),
        Command::OracleLoss { common, params, options } => commands::oracle_loss(resolve("oracle-loss", common, params, options)?),
        Command::Stats { common, params, options } => commands::stats(resolve("stats", common, params, options)?),
        Command::Learner { common, params, options } => commands::learner(resolve("learner", common, params, options)?),
        Command::Theory { common, params, options } => commands::theory(resolve("theory", common, params, options)?),
        Command::Fit { common, params, options } => commands::fit(resolve("fit", common, params, options)?),
        Command::ProbeData { common, params, options } => commands::probe_data(resolve("probe-data", common, params, options)?),
        Command::Export { common, options } => {
            let cfg = resolve("export", common, ParamArgs::default(), options)?;
            export::export(cfg.options, cfg.out)
        }
    }
}

fn main() {
    // clap exits with 2 on usage errors, matching the config-error code
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("rhm: {e}");
        std::process::exit(e.exit_code());
    }
}
