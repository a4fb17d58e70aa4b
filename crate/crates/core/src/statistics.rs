//! Token–token and tuple–token correlations, exact and empirical, and their
//! ensemble averages over grammar realizations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, RhmError};
use crate::grammar::{encode_tuple, sample_grammar, GrammarInstance};
use crate::inference::{exact_marginal, RunningMean};
use crate::params::{is_ancestor_pair, tree_distance, RhmParams, TreeNode};
use crate::rng::{domain, stream_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationSource {
    Exact,
    Empirical { samples: usize },
}

/// `C(X_a, X_b)[μ][ν] = P(X_a=μ, X_b=ν) - P(X_a=μ) P(X_b=ν)`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub a: TreeNode,
    pub b: TreeNode,
    pub v: usize,
    pub values: Vec<f64>,
    pub source: CorrelationSource,
}

impl CooccurrenceMatrix {
    pub fn get(&self, mu: usize, nu: usize) -> f64 {
        self.values[mu * self.v + nu]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.chunks(self.v).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.v)
            .map(|nu| (0..self.v).map(|mu| self.get(mu, nu)).sum())
            .collect()
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>() / self.values.len() as f64
    }
}

pub fn exact_cooccurrence(grammar: &GrammarInstance, a: TreeNode, b: TreeNode) -> Result<CooccurrenceMatrix> {
    let p = grammar.params();
    if a.normalized(p.s, p.depth)? == b.normalized(p.s, p.depth)? {
        return Err(RhmError::Index("co-occurrence needs two distinct nodes".into()));
    }
    let joint = exact_marginal(grammar, &[a, b])?;
    let (pa, pb) = (joint.marginal(0), joint.marginal(1));
    let v = p.v as usize;
    let mut values = joint.probs;
    for mu in 0..v {
        for nu in 0..v {
            values[mu * v + nu] -= pa[mu] * pb[nu];
        }
    }
    Ok(CooccurrenceMatrix {
        a,
        b,
        v,
        values,
        source: CorrelationSource::Exact,
    })
}

/// Plug-in estimate from token frequencies of two leaf positions.
pub fn empirical_cooccurrence(dataset: &Dataset, a: TreeNode, b: TreeNode) -> Result<CooccurrenceMatrix> {
    let p = dataset.params;
    if dataset.is_empty() {
        return Err(RhmError::Empty("co-occurrence of an empty dataset".into()));
    }
    let (ia, ib) = (leaf_index(&p, a)?, leaf_index(&p, b)?);
    if ia == ib {
        return Err(RhmError::Index("co-occurrence needs two distinct positions".into()));
    }
    let v = p.v as usize;
    let mut joint = vec![0u64; v * v];
    let (mut ca, mut cb) = (vec![0u64; v], vec![0u64; v]);
    for seq in dataset.sequences() {
        let (x, y) = (seq[ia] as usize, seq[ib] as usize);
        joint[x * v + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    Ok(plug_in(a, b, v, &joint, &ca, &cb, dataset.len()))
}

fn plug_in(a: TreeNode, b: TreeNode, v: usize, joint: &[u64], ca: &[u64], cb: &[u64], n: usize) -> CooccurrenceMatrix {
    let n = n as f64;
    let mut values = vec![0.0; v * v];
    for mu in 0..v {
        for nu in 0..v {
            values[mu * v + nu] = joint[mu * v + nu] as f64 / n - (ca[mu] as f64 / n) * (cb[nu] as f64 / n);
        }
    }
    CooccurrenceMatrix {
        a,
        b,
        v,
        values,
        source: CorrelationSource::Empirical { samples: n as usize },
    }
}

fn leaf_index(p: &RhmParams, node: TreeNode) -> Result<usize> {
    if node.level != p.depth {
        return Err(RhmError::Index(format!(
            "empirical statistics need observable tokens (level {}), got level {}",
            p.depth, node.level
        )));
    }
    node.index(p.s, p.depth)
}

/// Correlations between the `t`-th tuple from the end, `X_{-t}`, and the last token.
/// Rows are keyed by tuple code; tuples the grammar (or the sample) never
/// produces are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleTokenCorrelation {
    pub t: usize,
    pub v: usize,
    pub s: usize,
    pub rows: BTreeMap<u64, Vec<f64>>,
    pub source: CorrelationSource,
}

impl TupleTokenCorrelation {
    pub fn row(&self, code: u64) -> Option<&[f64]> {
        self.rows.get(&code).map(Vec::as_slice)
    }

    pub fn mean_square(&self) -> f64 {
        let (sum, n) = self
            .rows
            .values()
            .flatten()
            .fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
        sum / n.max(1) as f64
    }
}

/// Leaf range of tuple `t` (counted from the end, `t = 1` holds the last token).
pub fn tuple_span(p: &RhmParams, t: usize) -> Result<std::ops::Range<usize>> {
    let (d, s) = (p.seq_len(), p.s as usize);
    if t < 1 || t > d / s {
        return Err(RhmError::Index(format!("tuple index {t} outside 1..={}", d / s)));
    }
    Ok(d - t * s..d - (t - 1) * s)
}

fn check_context_tuple(p: &RhmParams, t: usize) -> Result<()> {
    let max = p.seq_len() / p.s as usize;
    if t < 2 || t > max {
        return Err(RhmError::Index(format!("tuple index {t} outside 2..={max}")));
    }
    Ok(())
}

pub fn exact_tuple_token_correlation(grammar: &GrammarInstance, t: usize) -> Result<TupleTokenCorrelation> {
    let p = grammar.params();
    check_context_tuple(p, t)?;
    let (v, m) = (p.v as usize, p.m as usize);
    let latent = TreeNode::new(p.depth - 1, -(t as i64));
    let joint = exact_marginal(grammar, &[latent, TreeNode::leaf(p.depth, -1)])?;
    let (pl, px) = (joint.marginal(0), joint.marginal(1));
    let mut rows = BTreeMap::new();
    for lam in 0..v {
        let row: Vec<f64> = (0..v)
            .map(|nu| joint.probs[lam * v + nu] / m as f64 - pl[lam] / m as f64 * px[nu])
            .collect();
        for r in 0..m as u32 {
            let code = encode_tuple(grammar.tuple(p.depth, lam as u32, r), p.v);
            rows.insert(code, row.clone());
        }
    }
    Ok(TupleTokenCorrelation {
        t,
        v,
        s: p.s as usize,
        rows,
        source: CorrelationSource::Exact,
    })
}

pub fn empirical_tuple_token_correlation(dataset: &Dataset, t: usize) -> Result<TupleTokenCorrelation> {
    let p = dataset.params;
    check_context_tuple(&p, t)?;
    if dataset.is_empty() {
        return Err(RhmError::Empty("tuple correlation of an empty dataset".into()));
    }
    let span = tuple_span(&p, t)?;
    let v = p.v as usize;
    let mut joint: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut last = vec![0u64; v];
    for seq in dataset.sequences() {
        let y = seq[seq.len() - 1] as usize;
        last[y] += 1;
        joint.entry(encode_tuple(&seq[span.clone()], p.v)).or_insert_with(|| vec![0; v])[y] += 1;
    }
    let n = dataset.len() as f64;
    let rows = joint
        .into_iter()
        .map(|(code, counts)| {
            let total: u64 = counts.iter().sum();
            let row = (0..v)
                .map(|nu| counts[nu] as f64 / n - (total as f64 / n) * (last[nu] as f64 / n))
                .collect();
            (code, row)
        })
        .collect();
    Ok(TupleTokenCorrelation {
        t,
        v,
        s: p.s as usize,
        rows,
        source: CorrelationSource::Empirical { samples: dataset.len() },
    })
}

/// What an ensemble run measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    /// Two distinct nodes (any levels).
    NodePair(TreeNode, TreeNode),
    /// Context tuple `t` against the last token.
    TupleToken(usize),
}

impl Observable {
    pub fn label(&self) -> String {
        match self {
            Observable::NodePair(a, b) => format!("C(({},{}),({},{}))", a.level, a.position, b.level, b.position),
            Observable::TupleToken(t) => format!("C(X_-{t},X_-1)"),
        }
    }
}

/// Tree distance of the observable and whether the two variables share a branch.
pub fn observable_geometry(params: &RhmParams, obs: &Observable) -> Result<(u32, bool)> {
    match *obs {
        Observable::NodePair(a, b) => Ok((tree_distance(params, a, b)?, is_ancestor_pair(params, a, b)?)),
        Observable::TupleToken(t) => {
            check_context_tuple(params, t)?;
            let latent = TreeNode::new(params.depth - 1, -(t as i64));
            Ok((tree_distance(params, latent, TreeNode::leaf(params.depth, -1))?, false))
        }
    }
}

/// Leading-order ensemble mean of squared correlation entries.
pub fn analytic_mean_square(params: &RhmParams, obs: &Observable) -> Result<f64> {
    let (v, m, f) = (params.v as f64, params.m as f64, params.f());
    let (dist, ancestor) = observable_geometry(params, obs)?;
    let decay = 1.0 / (v * m.powi(dist as i32));
    Ok(match obs {
        Observable::NodePair(..) if ancestor => decay / (v * v),
        Observable::NodePair(..) => (1.0 - f) * decay / (v * v),
        Observable::TupleToken(_) => (1.0 - f) * decay / (v * m * v),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub params: RhmParams,
    pub observable: Observable,
    pub d_tree: u32,
    pub ancestor: bool,
    /// Mean over instances and entries of `C²`.
    pub mean_square: f64,
    /// Variance across instances of the per-instance entry-averaged `C²`.
    pub var_square: f64,
    /// Standard error of `mean_square`.
    pub mean_square_stderr: f64,
    /// Ensemble mean of one fixed entry, with its standard error.
    pub entry_mean: f64,
    pub entry_stderr: f64,
    pub target: f64,
    pub ratio: f64,
    pub n_instances: usize,
}

/// Monte-Carlo over freshly sampled grammars of exact squared correlations.
/// Instance `k` uses grammar seed `stream_seed(params.seed, ENSEMBLE, k)`.
pub fn ensemble_correlation_variance(
    params: &RhmParams,
    observable: Observable,
    n_instances: usize,
) -> Result<EnsembleSummary> {
    params.validate()?;
    if n_instances < 2 {
        return Err(RhmError::Parameter("ensemble needs at least 2 instances".into()));
    }
    let (d_tree, ancestor) = observable_geometry(params, &observable)?;
    if !ancestor && params.f() >= 1.0 {
        return Err(RhmError::Theory("correlations vanish at f = 1".into()));
    }
    let target = analytic_mean_square(params, &observable)?;
    let mut squares = RunningMean::default();
    let mut entry = RunningMean::default();
    for k in 0..n_instances {
        let g = sample_grammar(&params.with_seed(stream_seed(params.seed, domain::ENSEMBLE, k as u64)))?;
        match observable {
            Observable::NodePair(a, b) => {
                let c = exact_cooccurrence(&g, a, b)?;
                squares.push(c.mean_square());
                entry.push(c.get(0, 0));
            }
            Observable::TupleToken(t) => {
                let c = exact_tuple_token_correlation(&g, t)?;
                squares.push(c.mean_square());
                let first = encode_tuple(g.tuple(params.depth, 0, 0), params.v);
                entry.push(c.rows[&first][0]);
            }
        }
    }
    Ok(EnsembleSummary {
        params: *params,
        observable,
        d_tree,
        ancestor,
        mean_square: squares.mean(),
        var_square: squares.variance(),
        mean_square_stderr: squares.stderr(),
        entry_mean: entry.mean(),
        entry_stderr: entry.stderr(),
        target,
        ratio: squares.mean() / target,
        n_instances,
    })
}

/// Variance of the finite-sample noise on tuple–token correlation entries,
/// `1 / ((v m) v P)`.
pub fn sampling_noise_variance(params: &RhmParams, samples: u64) -> Result<f64> {
    if samples == 0 {
        return Err(RhmError::Parameter("sample size must be at least 1".into()));
    }
    let (v, m) = (params.v as f64, params.m as f64);
    Ok(1.0 / (v * m * v * samples as f64))
}

/// Measured finite-sample noise on tuple–token entries against `1/((vm) v P)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub params: RhmParams,
    pub t: usize,
    pub samples: usize,
    /// Mean over datasets of the mean squared deviation from the exact entries.
    pub variance: f64,
    pub stderr: f64,
    pub target: f64,
    pub ratio: f64,
    pub n_datasets: usize,
}

/// Empirical variance of `Ĉ(X_{-t}, X_{-1})` entries around their exact
/// values, averaged over the `vm × v` entries of each grammar's tuples.
/// Instance `k` uses grammar seed `stream_seed(params.seed, ENSEMBLE, k)`;
/// its dataset `j` uses `stream_seed(grammar seed, DATASET, j)`.
pub fn measure_sampling_noise(
    params: &RhmParams,
    t: usize,
    samples: usize,
    instances: usize,
    datasets: usize,
) -> Result<NoiseSummary> {
    params.validate()?;
    if samples == 0 || instances == 0 || datasets == 0 {
        return Err(RhmError::Parameter("samples, instances and datasets must be positive".into()));
    }
    let target = sampling_noise_variance(params, samples as u64)?;
    let v = params.v as usize;
    let entries = (params.v * params.m) as f64 * v as f64;
    let mut stats = RunningMean::default();
    for k in 0..instances {
        let gseed = stream_seed(params.seed, domain::ENSEMBLE, k as u64);
        let g = sample_grammar(&params.with_seed(gseed))?;
        let exact = exact_tuple_token_correlation(&g, t)?;
        for j in 0..datasets {
            let ds = crate::dataset::generate_dataset(&g, samples, false, stream_seed(gseed, domain::DATASET, j as u64));
            let emp = empirical_tuple_token_correlation(&ds, t)?;
            let zero = vec![0.0; v];
            let sq: f64 = exact
                .rows
                .iter()
                .map(|(code, row)| {
                    let e = emp.rows.get(code).unwrap_or(&zero);
                    row.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                })
                .sum();
            stats.push(sq / entries);
        }
    }
    Ok(NoiseSummary {
        params: *params,
        t,
        samples,
        variance: stats.mean(),
        stderr: stats.stderr(),
        target,
        ratio: stats.mean() / target,
        n_datasets: stats.count,
    })
}
