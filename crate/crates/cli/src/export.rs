//! Merge result artifacts into one plot-ready table keyed by params hash.
//!
//! Inputs are JSON artifacts written by this tool (`theory`, `fit`,
//! `learner --summary`, `oracle-loss --format json`), oracle-loss CSVs, and
//! LossCurve CSVs from the training harness. Every input becomes one or more
//! named series of `(x, y)` points; rows without a natural `x` (exponents)
//! leave it empty.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use rhm::theory::LossCurve;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::impl_merge;
use crate::output::{emit, num, Echo, Format, ARTIFACT_VERSION};

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExportOpts {
    /// Artifacts to merge.
    #[arg(num_args = 0..)]
    pub inputs: Option<Vec<PathBuf>>,
    /// `csv` or `json`.
    #[arg(long)]
    pub format: Option<String>,
}
impl_merge!(ExportOpts { inputs, format });

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Series {
    name: String,
    x: Vec<Option<f64>>,
    y: Vec<f64>,
}

impl Series {
    fn scalar(name: impl Into<String>, y: f64) -> Self {
        Series {
            name: name.into(),
            x: vec![None],
            y: vec![y],
        }
    }
}

struct Parsed {
    version: Option<String>,
    params_hash: String,
    series: Vec<Series>,
}

fn field<'a>(v: &'a Value, key: &str, src: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| CliError::Config(format!("{src}: missing `{key}`")))
}

fn as_f64(v: &Value, src: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| CliError::Config(format!("{src}: expected a number, got {v}")))
}

fn theory_series(pred: &Value, src: &str) -> Result<Vec<Series>> {
    let mut out = vec![
        Series::scalar("theory:beta_positional", as_f64(field(pred, "beta_general", src)?, src)?),
        Series::scalar("theory:beta_shared", as_f64(field(pred, "beta_shared", src)?, src)?),
    ];
    let levels = field(pred, "levels", src)?
        .as_array()
        .ok_or_else(|| CliError::Config(format!("{src}: `levels` is not a list")))?;
    for (name, key) in [("theory:P_positional", "general"), ("theory:P_shared", "shared")] {
        let mut s = Series {
            name: name.into(),
            x: Vec::new(),
            y: Vec::new(),
        };
        for l in levels {
            s.x.push(Some(as_f64(field(l, "level", src)?, src)?));
            s.y.push(as_f64(field(l, key, src)?, src)?);
        }
        out.push(s);
    }
    Ok(out)
}

fn parse_json(text: &str, src: &str) -> Result<Parsed> {
    let doc: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("{src}: {e}")))?;
    let version = field(&doc, "version", src)?.as_str().map(String::from);
    let kind = field(&doc, "kind", src)?.as_str().unwrap_or_default().to_string();
    let params_hash = field(&doc, "params_hash", src)?
        .as_str()
        .ok_or_else(|| CliError::Config(format!("{src}: artifact has no params_hash to join on")))?
        .to_string();
    let results = field(&doc, "results", src)?;
    let series = match kind.as_str() {
        "theory" => theory_series(results, src)?,
        "fit" => {
            let arch = results.get("architecture").and_then(Value::as_str).unwrap_or("");
            let fit = field(results, "fit", src)?;
            let mut s = vec![Series::scalar(format!("fit:{arch}:exponent"), as_f64(field(fit, "exponent", src)?, src)?)];
            if let Some(t) = fit.get("target").and_then(Value::as_f64) {
                s.push(Series::scalar(format!("fit:{arch}:target"), t));
            }
            s
        }
        "learner" => {
            let mut by_mode: BTreeMap<String, Series> = BTreeMap::new();
            for e in field(results, "estimates", src)?.as_array().into_iter().flatten() {
                let mode = field(e, "mode", src)?.as_str().unwrap_or_default().to_string();
                let s = by_mode.entry(mode.clone()).or_insert_with(|| Series {
                    name: format!("p_star:{mode}"),
                    x: Vec::new(),
                    y: Vec::new(),
                });
                s.x.push(Some(as_f64(field(e, "level", src)?, src)?));
                s.y.push(as_f64(field(e, "p_star", src)?, src)?);
            }
            let mut s: Vec<Series> = by_mode.into_values().collect();
            s.extend(theory_series(field(results, "theory", src)?, src)?);
            s
        }
        "oracle-loss" => {
            let mut s = Series {
                name: "ngram_loss".into(),
                x: Vec::new(),
                y: Vec::new(),
            };
            for row in results.as_array().into_iter().flatten() {
                s.x.push(Some(as_f64(field(row, "level", src)?, src)?));
                s.y.push(as_f64(field(row, "loss", src)?, src)?);
            }
            vec![s]
        }
        other => return Err(CliError::Config(format!("{src}: cannot export artifacts of kind {other:?}"))),
    };
    Ok(Parsed {
        version,
        params_hash,
        series,
    })
}

fn meta<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
}

fn parse_csv(text: &str, src: &str) -> Result<Parsed> {
    let version = meta(text, "version").map(String::from);
    match meta(text, "kind") {
        Some("oracle-loss") => {
            let params_hash = meta(text, "params_hash")
                .ok_or_else(|| CliError::Config(format!("{src}: no params_hash")))?
                .to_string();
            let mut s = Series {
                name: "ngram_loss".into(),
                x: Vec::new(),
                y: Vec::new(),
            };
            for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                let bad = || CliError::Config(format!("{src}: bad row {line:?}"));
                if f.len() < 3 {
                    return Err(bad());
                }
                s.x.push(Some(f[1].parse().map_err(|_| bad())?));
                s.y.push(f[2].parse().map_err(|_| bad())?);
            }
            Ok(Parsed {
                version,
                params_hash,
                series: vec![s],
            })
        }
        Some(other) => Err(CliError::Config(format!("{src}: cannot export CSV artifacts of kind {other:?}"))),
        None => {
            let curve = LossCurve::from_csv(text).map_err(|e| CliError::Config(format!("{src}: {e}")))?;
            if curve.params_hash.is_empty() {
                return Err(CliError::Config(format!("{src}: loss curve has no `# params_hash=` line")));
            }
            let mut name = format!("loss:{}", if curve.architecture.is_empty() { "unknown" } else { &curve.architecture });
            if let Some(b) = curve.batch_size {
                name.push_str(&format!(":B={b}"));
            }
            Ok(Parsed {
                version,
                params_hash: curve.params_hash.clone(),
                series: vec![Series {
                    name,
                    x: curve.x.iter().map(|&x| Some(x)).collect(),
                    y: curve.y,
                }],
            })
        }
    }
}

pub fn export(options: ExportOpts, out: Option<PathBuf>) -> Result<()> {
    let inputs = options.inputs.clone().unwrap_or_default();
    if inputs.is_empty() {
        return Err(CliError::Config("field `inputs`: nothing to export".into()));
    }
    if let Some(o) = &out {
        if inputs.iter().any(|i| i == o) {
            return Err(CliError::Config(format!("field `out`: {} is also an input", o.display())));
        }
    }
    let format = Format::parse(options.format.as_deref(), Format::Csv)?;

    let mut seen_version: Option<(String, String)> = None;
    let mut table: BTreeMap<String, Vec<Series>> = BTreeMap::new();
    for path in &inputs {
        let src = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {src}: {e}")))?;
        let parsed = if text.trim_start().starts_with('{') {
            parse_json(&text, &src)?
        } else {
            parse_csv(&text, &src)?
        };
        if let Some(v) = parsed.version {
            match &seen_version {
                Some((first, first_src)) if *first != v => {
                    return Err(CliError::Constraint(format!(
                        "version mismatch: {first_src} has version {first}, {src} has version {v}"
                    )))
                }
                None => seen_version = Some((v, src.clone())),
                _ => {}
            }
        }
        let entry = table.entry(parsed.params_hash.clone()).or_default();
        for s in parsed.series {
            match entry.iter().find(|e| e.name == s.name) {
                Some(existing) if *existing == s => {}
                Some(_) => {
                    return Err(CliError::Constraint(format!(
                        "conflicting duplicate: series {:?} for params hash {} differs between inputs (latest {src})",
                        s.name, parsed.params_hash
                    )))
                }
                None => entry.push(s),
            }
        }
    }

    let version = seen_version.map(|(v, _)| v).unwrap_or_else(|| ARTIFACT_VERSION.to_string());
    if version != ARTIFACT_VERSION {
        return Err(CliError::Constraint(format!(
            "version mismatch: inputs have version {version}, this tool writes version {ARTIFACT_VERSION}"
        )));
    }
    let echo = Echo::new("export", None, json!({ "options": options }));
    let text = match format {
        Format::Csv => {
            let mut s = echo.csv_preamble();
            s.push_str("params_hash,series,x,y\n");
            for (hash, series) in &table {
                for ser in series {
                    for (x, y) in ser.x.iter().zip(&ser.y) {
                        s.push_str(&format!("{hash},{},{},{}\n", ser.name, x.map(num).unwrap_or_default(), num(*y)));
                    }
                }
            }
            s
        }
        Format::Json => echo.json_artifact(json!(table
            .iter()
            .map(|(hash, series)| json!({"params_hash": hash, "series": series}))
            .collect::<Vec<_>>())),
    };
    emit(out.as_deref(), text.as_bytes())
}
