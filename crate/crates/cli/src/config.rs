//! TOML config files with flag overrides.
//!
//! A config file looks like
//!
//! ```toml
//! kind = "learner"      # optional; must match the subcommand
//! workers = 2
//! out = "reports.csv"
//!
//! [params]
//! v = 16
//! m = 4
//! s = 2
//! L = 3
//! seed = 7
//!
//! [options]
//! trials = 10
//! ```
//!
//! `[options]` takes the long-flag names of the subcommand (with `_`).
//! Anything given on the command line wins over the file.

use std::path::{Path, PathBuf};

use clap::Args;
use rhm::params::RhmParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamArgs {
    /// Vocabulary size per level.
    #[arg(long)]
    pub v: Option<u32>,
    /// Production rules per symbol.
    #[arg(long)]
    pub m: Option<u32>,
    /// Branching factor.
    #[arg(long)]
    pub s: Option<u32>,
    /// Tree depth L.
    #[arg(long = "depth", short = 'L')]
    #[serde(rename = "L", alias = "depth")]
    pub depth: Option<u32>,
    /// Grammar seed. Always explicit.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ParamArgs {
    fn merge(self, file: ParamArgs) -> ParamArgs {
        ParamArgs {
            v: self.v.or(file.v),
            m: self.m.or(file.m),
            s: self.s.or(file.s),
            depth: self.depth.or(file.depth),
            seed: self.seed.or(file.seed),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_none() && self.m.is_none() && self.s.is_none() && self.depth.is_none() && self.seed.is_none()
    }

    pub fn resolve(&self) -> Result<RhmParams> {
        let need = |x: Option<u32>, name: &str| x.ok_or_else(|| CliError::Config(format!("missing field `{name}`")));
        let seed = self
            .seed
            .ok_or_else(|| CliError::Config("missing field `seed` (seeds are always explicit)".into()))?;
        Ok(RhmParams::new(
            need(self.v, "v")?,
            need(self.m, "m")?,
            need(self.s, "s")?,
            need(self.depth, "L")?,
            seed,
        )?)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bound on worker threads across instances and trials.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output path (stdout when omitted, where the format allows).
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    kind: Option<String>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    params: Option<ParamArgs>,
    options: Option<toml::Table>,
}

/// Everything a command needs after merging file and flags.
#[derive(Debug, Clone)]
pub struct Resolved<O> {
    pub params: ParamArgs,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub options: O,
}

pub trait Merge {
    /// Field-wise: `self` (flags) wins over `file`.
    fn merge(self, file: Self) -> Self;
}

/// `Merge` for option structs whose fields are all `Option`s.
#[macro_export]
macro_rules! impl_merge {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::config::Merge for $ty {
            fn merge(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field)),* }
            }
        }
    };
}

pub fn resolve<O>(kind: &str, common: Common, params: ParamArgs, options: O) -> Result<Resolved<O>>
where
    O: Merge + DeserializeOwned + Default,
{
    let file = match &common.config {
        Some(path) => read_file_config(path)?,
        None => FileConfig::default(),
    };
    if let Some(k) = &file.kind {
        if k != kind {
            return Err(CliError::Config(format!(
                "field `kind`: config is for `{k}` but the subcommand is `{kind}`"
            )));
        }
    }
    let file_options: O = match file.options {
        Some(table) => table
            .try_into()
            .map_err(|e| CliError::Config(format!("[options]: {}", e.to_string().trim())))?,
        None => O::default(),
    };
    let workers = common.workers.or(file.workers).unwrap_or(1);
    if workers == 0 {
        return Err(CliError::Config("field `workers` must be at least 1".into()));
    }
    Ok(Resolved {
        params: params.merge(file.params.unwrap_or_default()),
        workers,
        out: common.out.or(file.out),
        options: options.merge(file_options),
    })
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
}
