use std::path::PathBuf;

use clap::Args;
use rhm::dataset::{generate_dataset, pairs_to_csv, Dataset, TransformPair};
use rhm::generator::{apply_transform, TransformKind};
use rhm::grammar::{sample_grammar, GrammarInstance};
use rhm::inference::{ngram_ladder, ngram_loss, RunningMean};
use rhm::learner::{geometric_grid, sample_complexity_sweep, Mode, Pooling, SweepConfig};
use rhm::parallel::parallel_map;
use rhm::params::{RhmParams, TreeNode};
use rhm::rng::{domain, stream_seed, Stream};
use rhm::statistics::{ensemble_correlation_variance, measure_sampling_noise, Observable};
use rhm::theory::{fit_power_law, sample_complexity, scaling_exponent, scaling_prediction, LossCurve, WindowPolicy};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Resolved;
use crate::error::{CliError, Result};
use crate::impl_merge;
use crate::output::{emit, num, Echo, Format};

fn echo_config<O: Serialize>(params: Option<&RhmParams>, options: &O) -> serde_json::Value {
    json!({ "params": params, "options": options })
}

fn read_grammar(path: &PathBuf) -> Result<GrammarInstance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read grammar {}: {e}", path.display())))?;
    Ok(GrammarInstance::from_json(&text)?)
}

/// The grammar from `--grammar` if given, otherwise sampled from the params.
fn grammar_for<O>(cfg: &Resolved<O>, path: &Option<PathBuf>) -> Result<GrammarInstance> {
    match path {
        Some(p) => {
            let g = read_grammar(p)?;
            if !cfg.params.is_empty() {
                let want = cfg.params.resolve()?;
                if want != *g.params() {
                    return Err(CliError::Config(format!(
                        "field `grammar`: file params {} differ from the configured {}",
                        g.params().canonical_json(),
                        want.canonical_json()
                    )));
                }
            }
            Ok(g)
        }
        None => Ok(sample_grammar(&cfg.params.resolve()?)?),
    }
}

fn parse_mode(s: Option<&str>, default: Mode) -> Result<Mode> {
    match s {
        None => Ok(default),
        Some(x) => x.parse().map_err(|_| CliError::Config(format!("field `mode`: unknown mode {x:?}"))),
    }
}

// gen-grammar

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenGrammarOpts {}

impl crate::config::Merge for GenGrammarOpts {
    fn merge(self, _: Self) -> Self {
        self
    }
}

pub fn gen_grammar(cfg: Resolved<GenGrammarOpts>) -> Result<()> {
    let g = sample_grammar(&cfg.params.resolve()?)?;
    emit(cfg.out.as_deref(), g.to_json().as_bytes())
}

// gen-data

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataOpts {
    /// Number of sequences.
    #[arg(long)]
    pub n: Option<usize>,
    /// Dataset seed (default: derived from the grammar seed).
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// `bin` or `csv`.
    #[arg(long)]
    pub format: Option<String>,
    /// Grammar JSON to sample from instead of the params.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
}
impl_merge!(GenDataOpts { n, data_seed, format, grammar });

pub fn gen_data(cfg: Resolved<GenDataOpts>) -> Result<()> {
    let o = &cfg.options;
    let n = o.n.ok_or_else(|| CliError::Config("missing field `n`".into()))?;
    let g = grammar_for(&cfg, &o.grammar)?;
    let seed = o.data_seed.unwrap_or_else(|| stream_seed(g.params().seed, domain::DATASET, 0));
    let ds = generate_dataset(&g, n, false, seed);
    match o.format.as_deref().unwrap_or("bin") {
        "bin" => {
            if cfg.out.is_none() {
                return Err(CliError::Config("field `out`: binary datasets need an output path".into()));
            }
            emit(cfg.out.as_deref(), &ds.to_binary())
        }
        "csv" => emit(cfg.out.as_deref(), ds.to_csv().as_bytes()),
        other => Err(CliError::Config(format!("field `format`: expected bin or csv, got {other:?}"))),
    }
}

// oracle-loss

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleLossOpts {
    /// Independent grammar instances to average over.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Test sequences per instance.
    #[arg(long)]
    pub test_size: Option<usize>,
    /// `csv` or `json`.
    #[arg(long)]
    pub format: Option<String>,
}
impl_merge!(OracleLossOpts { instances, test_size, format });

pub fn oracle_loss(cfg: Resolved<OracleLossOpts>) -> Result<()> {
    let params = cfg.params.resolve()?;
    let mut o = cfg.options.clone();
    let instances = *o.instances.get_or_insert(64);
    let test_size = *o.test_size.get_or_insert(4096);
    let format = Format::parse(o.format.as_deref(), Format::Csv)?;
    if instances < 1 || test_size < 1 {
        return Err(CliError::Config("fields `instances` and `test_size` must be positive".into()));
    }
    let ladders = parallel_map(instances, cfg.workers, |k| {
        let gseed = stream_seed(params.seed, domain::ENSEMBLE, k as u64);
        let g = sample_grammar(&params.with_seed(gseed))?;
        let test = generate_dataset(&g, test_size, false, stream_seed(gseed, domain::TEST_SET, 0));
        ngram_ladder(&g, &test)
    });
    let mut per_level = vec![RunningMean::default(); params.depth as usize + 1];
    for ladder in ladders {
        for (acc, est) in per_level.iter_mut().zip(ladder?) {
            acc.push(est.loss);
        }
    }
    let echo = Echo::new("oracle-loss", Some(params.hash()), echo_config(Some(&params), &o));
    let rows: Vec<(usize, f64, f64)> = per_level
        .iter()
        .enumerate()
        .map(|(l, acc)| (l, acc.mean(), if instances > 1 { acc.stderr() } else { 0.0 }))
        .collect();
    let text = match format {
        Format::Csv => {
            let mut s = echo.csv_preamble();
            s.push_str("params_hash,level,loss,stderr,instances,test_size\n");
            for (l, loss, se) in &rows {
                s.push_str(&format!(
                    "{},{l},{},{},{instances},{test_size}\n",
                    params.hash(),
                    num(*loss),
                    num(*se)
                ));
            }
            s
        }
        Format::Json => echo.json_artifact(json!(rows
            .iter()
            .map(|(l, loss, se)| json!({"level": l, "loss": loss, "stderr": se}))
            .collect::<Vec<_>>())),
    };
    emit(cfg.out.as_deref(), text.as_bytes())
}

// stats

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StatsOpts {
    /// `pair:LEVEL,POS:LEVEL,POS` or `tuple:T`; repeatable.
    #[arg(long = "observable")]
    pub observables: Option<Vec<String>>,
    /// Grammar instances per observable.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Also measure sampling noise at this training-set size.
    #[arg(long)]
    pub noise_samples: Option<usize>,
    /// Context tuple used for the noise measurement.
    #[arg(long)]
    pub noise_t: Option<usize>,
    /// Grammar instances for the noise measurement.
    #[arg(long)]
    pub noise_instances: Option<usize>,
    /// Datasets per grammar instance for the noise measurement.
    #[arg(long)]
    pub noise_datasets: Option<usize>,
}
impl_merge!(StatsOpts {
    observables,
    instances,
    noise_samples,
    noise_t,
    noise_instances,
    noise_datasets
});

fn parse_node(s: &str) -> Option<TreeNode> {
    let (l, p) = s.split_once(',')?;
    Some(TreeNode::new(l.trim().parse().ok()?, p.trim().parse().ok()?))
}

fn parse_observable(s: &str) -> Result<Observable> {
    let bad = || CliError::Config(format!("field `observables`: cannot parse {s:?}"));
    if let Some(rest) = s.strip_prefix("tuple:") {
        return Ok(Observable::TupleToken(rest.trim().parse().map_err(|_| bad())?));
    }
    let rest = s.strip_prefix("pair:").ok_or_else(bad)?;
    let (a, b) = rest.split_once(':').ok_or_else(bad)?;
    Ok(Observable::NodePair(parse_node(a).ok_or_else(bad)?, parse_node(b).ok_or_else(bad)?))
}

pub fn stats(cfg: Resolved<StatsOpts>) -> Result<()> {
    let params = cfg.params.resolve()?;
    let mut o = cfg.options.clone();
    let instances = *o.instances.get_or_insert(200);
    let observables: Vec<Observable> = o
        .observables
        .get_or_insert_with(|| vec!["tuple:2".into()])
        .iter()
        .map(|s| parse_observable(s))
        .collect::<Result<_>>()?;
    let summaries = parallel_map(observables.len(), cfg.workers, |i| {
        ensemble_correlation_variance(&params, observables[i], instances)
    });
    let echo = Echo::new("stats", Some(params.hash()), echo_config(Some(&params), &o));
    let mut s = echo.csv_preamble();
    s.push_str("params_hash,observable,d_tree,ancestor,instances,mean_square,stderr,target,ratio\n");
    for summary in summaries {
        let e = summary?;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            params.hash(),
            e.observable.label().replace(',', ";"),
            e.d_tree,
            e.ancestor,
            e.n_instances,
            num(e.mean_square),
            num(e.mean_square_stderr),
            num(e.target),
            num(e.ratio)
        ));
    }
    if let Some(p) = o.noise_samples {
        let t = o.noise_t.unwrap_or(2);
        let noise = measure_sampling_noise(
            &params,
            t,
            p,
            o.noise_instances.unwrap_or(10),
            o.noise_datasets.unwrap_or(10),
        )?;
        s.push_str(&format!(
            "{},noise(t={t};P={p}),,,{},{},{},{},{}\n",
            params.hash(),
            noise.n_datasets,
            num(noise.variance),
            num(noise.stderr),
            num(noise.target),
            num(noise.ratio)
        ));
    }
    emit(cfg.out.as_deref(), s.as_bytes())
}

// learner

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerOpts {
    /// Smallest training-set size (default: a quarter of the shared level-1 prediction).
    #[arg(long)]
    pub grid_min: Option<usize>,
    /// Largest training-set size (default: 4x the positional prediction at the deepest level).
    #[arg(long)]
    pub grid_max: Option<usize>,
    /// Independent grammar/data trials per grid point.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Success fraction defining P*.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Deepest latent depth to reconstruct.
    #[arg(long)]
    pub max_depth: Option<u32>,
    /// Tuples seen fewer times are attached after clustering.
    #[arg(long)]
    pub min_count: Option<u64>,
    /// `signal-weighted` or `sum-counts`.
    #[arg(long)]
    pub pooling: Option<String>,
    /// Where to write the P* summary JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}
impl_merge!(LearnerOpts {
    grid_min,
    grid_max,
    trials,
    theta,
    max_depth,
    min_count,
    pooling,
    summary
});

pub fn learner(cfg: Resolved<LearnerOpts>) -> Result<()> {
    let params = cfg.params.resolve()?;
    let mut o = cfg.options.clone();
    let max_depth = *o.max_depth.get_or_insert(params.depth.saturating_sub(1));
    if max_depth < 1 || max_depth + 1 > params.depth {
        return Err(CliError::Config(format!(
            "field `max_depth`: must be in 1..={} for L={}",
            params.depth.saturating_sub(1),
            params.depth
        )));
    }
    let lo = *o
        .grid_min
        .get_or_insert((sample_complexity(&params, 1, Mode::Shared)? / 4.0).ceil() as usize);
    let hi = *o
        .grid_max
        .get_or_insert((sample_complexity(&params, max_depth, Mode::Positional)? * 4.0).ceil() as usize);
    if lo < 1 || hi < lo {
        return Err(CliError::Config("fields `grid_min`/`grid_max`: need 1 <= grid_min <= grid_max".into()));
    }
    let mut sweep = SweepConfig::new(&params, geometric_grid(lo, hi));
    sweep.trials = *o.trials.get_or_insert(sweep.trials);
    sweep.theta = *o.theta.get_or_insert(sweep.theta);
    sweep.max_depth = max_depth;
    sweep.cluster.min_count = *o.min_count.get_or_insert(sweep.cluster.min_count);
    let pooling = o.pooling.get_or_insert_with(|| "signal-weighted".into()).clone();
    sweep.cluster.pooling = serde_json::from_value::<Pooling>(json!(pooling))
        .map_err(|_| CliError::Config(format!("field `pooling`: unknown pooling {pooling:?}")))?;
    if sweep.trials == 0 || !(0.0..=1.0).contains(&sweep.theta) {
        return Err(CliError::Config("fields `trials` > 0 and `theta` in [0, 1] required".into()));
    }
    sweep.workers = cfg.workers;
    let result = sample_complexity_sweep(&params, &sweep)?;

    let echo = Echo::new("learner", Some(params.hash()), echo_config(Some(&params), &o));
    let mut s = echo.csv_preamble();
    s.push_str("params_hash,mode,level,samples,trial,ari,success\n");
    for r in &result.reports {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            params.hash(),
            r.mode,
            r.level,
            r.samples,
            r.trial,
            num(r.ari),
            r.success
        ));
    }
    emit(cfg.out.as_deref(), s.as_bytes())?;
    if let Some(path) = &o.summary {
        let summary = json!({
            "grid": sweep.grid,
            "estimates": result.estimates,
            "theory": scaling_prediction(&params)?,
        });
        emit(Some(path), echo.json_artifact(summary).as_bytes())?;
    }
    Ok(())
}

// theory

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryOpts {
    /// `json` or `csv`.
    #[arg(long)]
    pub format: Option<String>,
}
impl_merge!(TheoryOpts { format });

pub fn theory(cfg: Resolved<TheoryOpts>) -> Result<()> {
    let params = cfg.params.resolve()?;
    let o = cfg.options.clone();
    let pred = scaling_prediction(&params)?;
    let echo = Echo::new("theory", Some(params.hash()), echo_config(Some(&params), &o));
    let text = match Format::parse(o.format.as_deref(), Format::Json)? {
        Format::Json => echo.json_artifact(serde_json::to_value(&pred).expect("serializes")),
        Format::Csv => {
            let mut s = echo.csv_preamble();
            s.push_str("params_hash,level,p_positional,p_shared,beta_positional,beta_shared\n");
            for l in &pred.levels {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    params.hash(),
                    l.level,
                    num(l.general),
                    num(l.shared),
                    num(pred.beta_general),
                    num(pred.beta_shared)
                ));
            }
            s
        }
    };
    emit(cfg.out.as_deref(), text.as_bytes())
}

// fit

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitOpts {
    /// LossCurve CSV (`step,loss[,stderr]` with `#` metadata lines).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Asymptotic loss subtracted before the log-log fit. Defaults to the
    /// Bayes-optimal loss of the configured grammar, estimated by BP.
    #[arg(long)]
    pub floor: Option<f64>,
    /// `mid` (default), `all`, `x:MIN:MAX` or `excess:LO:HI`.
    #[arg(long)]
    pub window: Option<String>,
    /// Theoretical exponent to compare with; defaults to the configured params.
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<f64>,
    /// Which theoretical exponent: `positional` or `shared`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Test sequences for the default floor estimate.
    #[arg(long)]
    pub floor_test_size: Option<usize>,
}
impl_merge!(FitOpts {
    curve,
    floor,
    window,
    target,
    mode,
    floor_test_size
});

fn parse_window(s: &str, v: Option<u32>) -> Result<WindowPolicy> {
    let bad = || CliError::Config(format!("field `window`: cannot parse {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let num2 = |a: &str, b: &str| -> Result<(f64, f64)> {
        Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
    };
    let plateau = || {
        v.map(|v| (v as f64).ln())
            .ok_or_else(|| CliError::Config("field `window`: excess windows need params (for log v)".into()))
    };
    match parts.as_slice() {
        ["all"] => Ok(WindowPolicy::All),
        ["mid"] => Ok(WindowPolicy::ExcessFraction {
            lo: 0.05,
            hi: 0.6,
            plateau: plateau()?,
        }),
        ["x", a, b] => {
            let (min, max) = num2(a, b)?;
            Ok(WindowPolicy::XRange { min, max })
        }
        ["excess", a, b] => {
            let (lo, hi) = num2(a, b)?;
            Ok(WindowPolicy::ExcessFraction { lo, hi, plateau: plateau()? })
        }
        _ => Err(bad()),
    }
}

pub fn fit(cfg: Resolved<FitOpts>) -> Result<()> {
    let mut o = cfg.options.clone();
    let path = o.curve.clone().ok_or_else(|| CliError::Config("missing field `curve`".into()))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read curve {}: {e}", path.display())))?;
    let curve = LossCurve::from_csv(&text)?;
    let params = if cfg.params.is_empty() {
        None
    } else {
        Some(cfg.params.resolve()?)
    };
    let curve_hash = Some(curve.params_hash.clone()).filter(|h| !h.is_empty());
    if let (Some(p), Some(h)) = (&params, &curve_hash) {
        if p.hash() != *h {
            return Err(CliError::Constraint(format!(
                "curve params_hash {h} does not match the configured params {}",
                p.hash()
            )));
        }
    }
    let floor = match (o.floor, &params) {
        (Some(f), _) => f,
        (None, Some(p)) => {
            let g = sample_grammar(p)?;
            let n = *o.floor_test_size.get_or_insert(4096);
            let test = generate_dataset(&g, n, false, stream_seed(p.seed, domain::TEST_SET, 0));
            let f = ngram_loss(&g, p.depth, &test)?.loss;
            o.floor = Some(f);
            f
        }
        (None, None) => return Err(CliError::Config("missing field `floor` (or params to estimate it)".into())),
    };
    let window = o.window.get_or_insert_with(|| "mid".into()).clone();
    let policy = parse_window(&window, params.map(|p| p.v))?;
    let mut fit = fit_power_law(&curve, floor, policy)?;
    let mode = parse_mode(o.mode.as_deref(), Mode::Positional)?;
    let target = match (o.target, &params) {
        (Some(t), _) => Some(t),
        (None, Some(p)) => Some(scaling_exponent(p, mode)?),
        _ => None,
    };
    if let Some(t) = target {
        fit = fit.with_target(t);
    }
    let hash = params.map(|p| p.hash()).or(curve_hash);
    let echo = Echo::new("fit", hash, echo_config(params.as_ref(), &o));
    let results = json!({
        "architecture": curve.architecture,
        "batch_size": curve.batch_size,
        "mode": mode,
        "fit": fit,
    });
    emit(cfg.out.as_deref(), echo.json_artifact(results).as_bytes())
}

// probe-data

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeDataOpts {
    /// Number of original/transformed pairs.
    #[arg(long)]
    pub n: Option<usize>,
    /// Tree level of the transformed node.
    #[arg(long)]
    pub level: Option<u32>,
    /// Position of the node within its level (negative counts from the end).
    #[arg(long, allow_hyphen_values = true)]
    pub position: Option<i64>,
    /// `variable` (symbol replacement) or `rule` (rule replacement).
    #[arg(long)]
    pub transform: Option<String>,
    /// Dataset seed (default: derived from the grammar seed).
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Grammar JSON to use instead of the params.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
}
impl_merge!(ProbeDataOpts {
    n,
    level,
    position,
    transform,
    data_seed,
    grammar
});

pub fn probe_data(cfg: Resolved<ProbeDataOpts>) -> Result<()> {
    let o = &cfg.options;
    let n = o.n.ok_or_else(|| CliError::Config("missing field `n`".into()))?;
    let level = o.level.ok_or_else(|| CliError::Config("missing field `level`".into()))?;
    let position = o.position.ok_or_else(|| CliError::Config("missing field `position`".into()))?;
    let kind = match o.transform.as_deref() {
        Some("variable") | Some("S") => TransformKind::VariableReplacement,
        Some("rule") | Some("R") => TransformKind::RuleReplacement,
        other => {
            return Err(CliError::Config(format!(
                "field `transform`: expected variable or rule, got {other:?}"
            )))
        }
    };
    let g = grammar_for(&cfg, &o.grammar)?;
    let p = *g.params();
    let node = TreeNode::new(level, position);
    node.index(p.s, p.depth)?;
    let seed = o.data_seed.unwrap_or_else(|| stream_seed(p.seed, domain::DATASET, 1));
    let ds: Dataset = generate_dataset(&g, n, true, seed);
    let trees = ds.trees().expect("kept trees");
    let pairs = trees
        .iter()
        .enumerate()
        .map(|(k, tree)| {
            let mut rng = Stream::derive(seed, domain::TRANSFORM, k as u64);
            let t = apply_transform(kind, &g, tree, node, &mut rng)?;
            Ok(TransformPair {
                kind,
                level,
                position,
                original: tree.leaves().to_vec(),
                transformed: t.tree.leaves().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(cfg.out.as_deref(), pairs_to_csv(&pairs, &p, seed).as_bytes())
}
