use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, Result};

/// Version stamped on every artifact; `export` refuses to mix versions.
pub const ARTIFACT_VERSION: &str = "1";

/// The config echo carried by every output. Worker count and output path
/// are left out on purpose: they do not change results.
#[derive(Debug, Clone, Serialize)]
pub struct Echo {
    pub kind: &'static str,
    pub params_hash: Option<String>,
    pub config: Value,
}

impl Echo {
    pub fn new(kind: &'static str, params_hash: Option<String>, config: Value) -> Self {
        Echo {
            kind,
            params_hash,
            config,
        }
    }

    pub fn csv_preamble(&self) -> String {
        let mut s = format!("# version={ARTIFACT_VERSION}\n# kind={}\n", self.kind);
        if let Some(h) = &self.params_hash {
            s.push_str(&format!("# params_hash={h}\n"));
        }
        s.push_str(&format!("# config={}\n", self.config));
        s
    }

    pub fn json_artifact(&self, results: Value) -> String {
        let doc = json!({
            "version": ARTIFACT_VERSION,
            "kind": self.kind,
            "params_hash": self.params_hash,
            "config": self.config,
            "results": results,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("artifact serializes");
        text.push('\n');
        text
    }
}

/// Write to `out`, or to stdout when `None`.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Shortest round-trip formatting; keeps CSV byte-stable.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "nan".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: Option<&str>, default: Format) -> Result<Format> {
        match s {
            None => Ok(default),
            Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            Some(other) => Err(CliError::Config(format!("field `format`: expected csv or json, got {other:?}"))),
        }
    }
}
