//! Layer-by-layer reconstruction of latent variables from tuple–token
//! correlations, empirical sample complexities, and the hierarchical
//! predictor that conditions on the reconstructed sibling latents.
//!
//! Terminology: data at *depth* `k` are sequences of depth-`k` variables
//! (depth 0 = observable tokens, depth `k` = TreeNode level `L - k`). One
//! reconstruction pass clusters the `s`-tuples of depth-`k` data into
//! depth-`k+1` latents. Tuple `t` (counted from the end, `t = 1` holds the
//! target's ancestor) is excluded from clustering.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_dataset, Dataset};
use crate::error::{Result, RhmError};
use crate::grammar::{decode_tuple, encode_tuple, sample_grammar, GrammarInstance};
use crate::inference::{exact_marginal, for_each_derivation, ConditionalDistribution, RunningMean};
use crate::parallel::parallel_map;
use crate::params::{RhmParams, Symbol, TreeNode};
use crate::rng::{domain, stream_seed};
pub use crate::theory::Mode;
use crate::theory::sample_complexity;

/// Placeholder for the ancestor of the target (its tuple contains the target).
pub const SPINE: Symbol = u32::MAX;
/// Placeholder for a tuple the assignment has never seen.
pub const UNKNOWN: Symbol = u32::MAX - 1;

/// Distances at or below this are treated as identical rows.
const TIE_EPS: f64 = 1e-9;

/// Sequences at one depth of the reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelData {
    pub depth: u32,
    pub width: usize,
    /// `n * width` items; the last item of each row is the target (depth 0) or [`SPINE`].
    pub items: Vec<Symbol>,
    pub targets: Vec<Symbol>,
    /// True symbols of the same nodes, when known.
    pub truth: Option<Vec<Symbol>>,
}

impl LevelData {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let d = ds.seq_len();
        LevelData {
            depth: 0,
            width: d,
            items: ds.tokens().to_vec(),
            targets: ds.sequences().map(|s| s[d - 1]).collect(),
            truth: Some(ds.tokens().to_vec()),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, k: usize) -> &[Symbol] {
        &self.items[k * self.width..(k + 1) * self.width]
    }

    /// Number of `s`-tuples per row, including the spine tuple.
    pub fn tuple_count(&self, s: u32) -> usize {
        self.width / s as usize
    }
}

/// Start index of tuple `t` in a row of `width` items.
fn tuple_start(width: usize, s: usize, t: usize) -> usize {
    width - t * s
}

fn tuple_code(items: &[Symbol], v: u32) -> Option<u64> {
    if items.iter().any(|&x| x >= v) {
        return None;
    }
    Some(encode_tuple(items, v))
}

/// One tuple's correlation row `C(μ, ·)` with the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleRow {
    pub code: u64,
    /// Number of observations; `None` for exact rows.
    pub count: Option<u64>,
    pub row: Vec<f64>,
    /// Expected squared norm of the sampling noise in `row` (0 for exact rows).
    pub noise: f64,
}

/// Rows whose squared norm is below this multiple of their expected noise
/// power carry no usable direction yet; they are attached after clustering
/// instead of shaping it.
pub const RELIABLE_SNR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionCorrelations {
    pub t: usize,
    /// Sorted by code.
    pub rows: Vec<TupleRow>,
    /// Estimated variance of the sampling noise per entry (0 for exact rows).
    pub noise: f64,
}

/// Tuple–target correlation rows at every non-spine tuple position of one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCorrelations {
    pub depth: u32,
    pub s: u32,
    pub v: u32,
    pub samples: Option<usize>,
    pub positions: Vec<PositionCorrelations>,
}

/// Per-position counts `n_t(μ, ν)` over the first `n` rows.
fn count_tuples(data: &LevelData, n: usize, s: u32, v: u32) -> (Vec<BTreeMap<u64, Vec<u64>>>, Vec<u64>) {
    let (su, vu) = (s as usize, v as usize);
    let tuples = data.tuple_count(s);
    let space = (v as u64).checked_pow(s).unwrap_or(u64::MAX);
    let mut target = vec![0u64; vu];
    for &y in &data.targets[..n] {
        target[y as usize] += 1;
    }
    let positions: Vec<usize> = (2..=tuples).collect();
    let maps = if space.saturating_mul(v as u64) <= 1 << 20 {
        let stride = space as usize * vu;
        let mut dense = vec![0u64; stride * positions.len()];
        for k in 0..n {
            let row = data.row(k);
            let y = data.targets[k] as usize;
            for (i, &t) in positions.iter().enumerate() {
                let a = tuple_start(data.width, su, t);
                if let Some(code) = tuple_code(&row[a..a + su], v) {
                    dense[i * stride + code as usize * vu + y] += 1;
                }
            }
        }
        dense
            .chunks(stride.max(1))
            .map(|block| {
                block
                    .chunks(vu)
                    .enumerate()
                    .filter(|(_, c)| c.iter().any(|&x| x > 0))
                    .map(|(code, c)| (code as u64, c.to_vec()))
                    .collect()
            })
            .collect()
    } else {
        let mut sparse: Vec<HashMap<u64, Vec<u64>>> = vec![HashMap::new(); positions.len()];
        for k in 0..n {
            let row = data.row(k);
            let y = data.targets[k] as usize;
            for (i, &t) in positions.iter().enumerate() {
                let a = tuple_start(data.width, su, t);
                if let Some(code) = tuple_code(&row[a..a + su], v) {
                    sparse[i].entry(code).or_insert_with(|| vec![0; vu])[y] += 1;
                }
            }
        }
        sparse.into_iter().map(|m| m.into_iter().collect()).collect()
    };
    (maps, target)
}

impl LevelCorrelations {
    /// Plug-in estimate `n(μ,ν)/P - n(μ) n(ν) / P²` from the first `n` rows.
    pub fn from_data(data: &LevelData, n: usize, s: u32, v: u32) -> Result<Self> {
        if n == 0 || n > data.len() {
            return Err(RhmError::Empty(format!("need 1..={} rows, got {n}", data.len())));
        }
        let (maps, target) = count_tuples(data, n, s, v);
        let nf = n as f64;
        let positions = maps
            .into_iter()
            .enumerate()
            .map(|(i, map)| {
                let mut noise = 0.0;
                let mut entries = 0usize;
                let rows = map
                    .into_iter()
                    .map(|(code, counts)| {
                        let total: u64 = counts.iter().sum();
                        let pm = total as f64 / nf;
                        let row: Vec<f64> = counts
                            .iter()
                            .zip(&target)
                            .map(|(&c, &ny)| c as f64 / nf - pm * ny as f64 / nf)
                            .collect();
                        for &ny in &target {
                            noise += pm * ny as f64 / nf / nf;
                            entries += 1;
                        }
                        TupleRow {
                            code,
                            count: Some(total),
                            row,
                            noise: total as f64 / nf / nf,
                        }
                    })
                    .collect();
                PositionCorrelations {
                    t: i + 2,
                    rows,
                    noise: if entries > 0 { noise / entries as f64 } else { 0.0 },
                }
            })
            .collect();
        Ok(LevelCorrelations {
            depth: data.depth,
            s,
            v,
            samples: Some(n),
            positions,
        })
    }

    /// Exact rows for true depth-`depth` tuples (the infinite-data surrogate).
    pub fn exact(grammar: &GrammarInstance, depth: u32) -> Result<Self> {
        let p = grammar.params();
        if depth + 1 >= p.depth {
            return Err(RhmError::Index(format!(
                "depth {depth} has no context tuples (need depth <= L - 2 = {})",
                p.depth as i64 - 2
            )));
        }
        let level = p.depth - depth;
        let (s, v) = (p.s as usize, p.v as usize);
        let tuples = p.level_width(level) / s;
        let target = TreeNode::leaf(p.depth, -1);
        let mut positions = Vec::new();
        for t in 2..=tuples {
            let mut nodes: Vec<TreeNode> = (0..s)
                .map(|i| TreeNode::new(level, -((t * s) as i64) + i as i64))
                .collect();
            nodes.push(target);
            let joint = exact_marginal(grammar, &nodes)?;
            let py = joint.marginal(s);
            let mut rows = Vec::new();
            for (code, block) in joint.probs.chunks(v).enumerate() {
                let pm: f64 = block.iter().sum();
                if pm > 0.0 {
                    rows.push(TupleRow {
                        code: code as u64,
                        count: None,
                        row: block.iter().zip(&py).map(|(&j, &y)| j - pm * y).collect(),
                        noise: 0.0,
                    });
                }
            }
            positions.push(PositionCorrelations { t, rows, noise: 0.0 });
        }
        Ok(LevelCorrelations {
            depth,
            s: p.s,
            v: p.v,
            samples: None,
            positions,
        })
    }
}

/// How shared mode combines the per-position rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Sum the co-occurrence counts over positions (the mean of the rows).
    SumCounts,
    /// Weight each position by its estimated signal amplitude over noise
    /// variance before summing.
    SignalWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    /// Upper bound on the number of clusters.
    pub v: u32,
    /// Tuples per latent class, used to size the cut.
    pub m: u32,
    /// Tuples seen fewer times are attached after clustering.
    pub min_count: u64,
    pub pooling: Pooling,
}

impl ClusterOptions {
    pub fn new(params: &RhmParams) -> Self {
        ClusterOptions {
            v: params.v,
            m: params.m,
            min_count: 2,
            pooling: Pooling::SignalWeighted,
        }
    }
}

/// Tuple → cluster maps learned by one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentAssignment {
    /// Depth of the latents the labels stand for (1 = parents of the tokens).
    pub depth: u32,
    pub mode: Mode,
    pub s: u32,
    pub v: u32,
    /// Positional: one map per tuple position `t`. Shared: a single map stored under `t = 0`.
    pub maps: BTreeMap<usize, BTreeMap<u64, Symbol>>,
}

impl LatentAssignment {
    pub fn label(&self, t: usize, code: u64) -> Option<Symbol> {
        let key = match self.mode {
            Mode::Positional => t,
            Mode::Shared => 0,
        };
        self.maps.get(&key)?.get(&code).copied()
    }

    /// Ground-truth labels (parent symbols) for every tuple the grammar can
    /// produce at this depth.
    pub fn from_grammar(grammar: &GrammarInstance, depth: u32, mode: Mode) -> Result<Self> {
        let p = grammar.params();
        if depth == 0 || depth >= p.depth {
            return Err(RhmError::Index(format!("latent depth {depth} outside 1..={}", p.depth - 1)));
        }
        let rule_level = p.depth - depth + 1;
        let mut map = BTreeMap::new();
        for sym in 0..p.v {
            for r in 0..p.m {
                map.insert(encode_tuple(grammar.tuple(rule_level, sym, r), p.v), sym);
            }
        }
        let maps = match mode {
            Mode::Shared => BTreeMap::from([(0, map)]),
            Mode::Positional => {
                let tuples = p.level_width(p.depth - depth + 1) / p.s as usize;
                (2..=tuples).map(|t| (t, map.clone())).collect()
            }
        };
        Ok(LatentAssignment {
            depth,
            mode,
            s: p.s,
            v: p.v,
            maps,
        })
    }

    /// The same partition with label `x` renamed to `perm[x]`.
    pub fn permuted(&self, perm: &[Symbol]) -> Self {
        let mut out = self.clone();
        for map in out.maps.values_mut() {
            for label in map.values_mut() {
                *label = perm[*label as usize];
            }
        }
        out
    }

    /// The same map with the symbols inside each tuple renamed to `perm[x]`,
    /// for use after the previous depth's labels were permuted.
    pub fn recoded_inputs(&self, perm: &[Symbol]) -> Self {
        let mut out = self.clone();
        for map in out.maps.values_mut() {
            *map = map
                .iter()
                .map(|(&code, &label)| {
                    let tuple: Vec<Symbol> = decode_tuple(code, self.v, self.s).iter().map(|&x| perm[x as usize]).collect();
                    (encode_tuple(&tuple, self.v), label)
                })
                .collect();
        }
        out
    }

    /// Replace each tuple of a row by its label; the spine tuple becomes [`SPINE`].
    pub fn relabel_row(&self, row: &[Symbol], out: &mut Vec<Symbol>) {
        let s = self.s as usize;
        let tuples = row.len() / s;
        out.clear();
        for j in 0..tuples {
            let t = tuples - j;
            if t == 1 {
                out.push(SPINE);
                continue;
            }
            let label = tuple_code(&row[j * s..(j + 1) * s], self.v)
                .and_then(|code| self.label(t, code))
                .unwrap_or(UNKNOWN);
            out.push(label);
        }
    }
}

/// Cosine distance `1 - cos`; a zero row is at distance 1 from anything else.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 && bb == 0.0 {
        return 0.0;
    }
    if aa == 0.0 || bb == 0.0 {
        return 1.0;
    }
    (1.0 - ab / (aa.sqrt() * bb.sqrt())).clamp(0.0, 2.0)
}

/// Average-linkage agglomerative clustering of `n` points given a full
/// distance matrix. Merges down to `k` clusters, then keeps merging clusters
/// at distance `<= TIE_EPS`. Labels are numbered by first member.
pub fn average_linkage(dist: &[f64], n: usize, k: usize) -> Vec<usize> {
    assert_eq!(dist.len(), n * n);
    let mut d = dist.to_vec();
    let mut size = vec![1usize; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut clusters = n;
    while clusters > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && d[i * n + j] < best.0 {
                    best = (d[i * n + j], i, j);
                }
            }
        }
        let (dij, i, j) = best;
        if clusters <= k && dij > TIE_EPS {
            break;
        }
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for x in 0..n {
            if active[x] && x != i && x != j {
                let merged = (si * d[i * n + x] + sj * d[j * n + x]) / (si + sj);
                d[i * n + x] = merged;
                d[x * n + i] = merged;
            }
        }
        size[i] += size[j];
        active[j] = false;
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
        clusters -= 1;
    }
    let mut ids = HashMap::new();
    owner
        .iter()
        .map(|&o| {
            let next = ids.len();
            *ids.entry(o).or_insert(next)
        })
        .collect()
}

/// Adjusted Rand index between two labelings of the same items. Identical
/// partitions score 1 (including the degenerate all-in-one and all-apart cases).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let comb2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    let mut ca: HashMap<usize, u64> = HashMap::new();
    let mut cb: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&c| comb2(c)).sum();
    let sa: f64 = ca.values().map(|&c| comb2(c)).sum();
    let sb: f64 = cb.values().map(|&c| comb2(c)).sum();
    let expected = sa * sb / comb2(n as u64);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return if joint.len() == ca.len() && joint.len() == cb.len() { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// Combine the positions into one row per tuple for shared mode.
fn pooled_rows(corr: &LevelCorrelations, pooling: Pooling) -> Vec<TupleRow> {
    let weights: Vec<f64> = corr
        .positions
        .iter()
        .map(|pos| match pooling {
            Pooling::SumCounts => 1.0,
            Pooling::SignalWeighted if pos.noise == 0.0 => 1.0,
            Pooling::SignalWeighted => {
                let entries: usize = pos.rows.iter().map(|r| r.row.len()).sum();
                if entries == 0 {
                    return 0.0;
                }
                let power: f64 = pos.rows.iter().flat_map(|r| &r.row).map(|x| x * x).sum::<f64>() / entries as f64;
                let signal = (power - pos.noise).max(0.0).sqrt();
                signal / pos.noise
            }
        })
        .collect();
    let mut pooled: BTreeMap<u64, TupleRow> = BTreeMap::new();
    for (pos, &w) in corr.positions.iter().zip(&weights) {
        for r in &pos.rows {
            let entry = pooled.entry(r.code).or_insert_with(|| TupleRow {
                code: r.code,
                count: r.count.map(|_| 0),
                row: vec![0.0; r.row.len()],
                noise: 0.0,
            });
            if let (Some(total), Some(c)) = (entry.count.as_mut(), r.count) {
                *total += c;
            }
            entry.noise += w * w * r.noise;
            for (acc, x) in entry.row.iter_mut().zip(&r.row) {
                *acc += w * x;
            }
        }
    }
    pooled.into_values().collect()
}

/// Cluster one set of rows; returns `code -> label`.
fn cluster_rows(rows: &[TupleRow], opts: &ClusterOptions) -> Result<BTreeMap<u64, Symbol>> {
    if rows.is_empty() {
        return Err(RhmError::Degenerate("no tuples observed at this position".into()));
    }
    let frequent = |r: &TupleRow| {
        r.count.is_none_or(|c| c >= opts.min_count) && r.row.iter().map(|x| x * x).sum::<f64>() > RELIABLE_SNR * r.noise
    };
    let mut core: Vec<usize> = (0..rows.len()).filter(|&i| frequent(&rows[i])).collect();
    if core.is_empty() {
        core = (0..rows.len()).collect();
    }
    let n = core.len();
    let k = (n.div_ceil(opts.m.max(1) as usize)).min(opts.v as usize).max(1);
    let mut dist = vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let x = cosine_distance(&rows[core[a]].row, &rows[core[b]].row);
            dist[a * n + b] = x;
            dist[b * n + a] = x;
        }
    }
    let labels = average_linkage(&dist, n, k);
    let mut out: BTreeMap<u64, Symbol> = core.iter().zip(&labels).map(|(&i, &l)| (rows[i].code, l as Symbol)).collect();
    let clusters = labels.iter().max().map_or(0, |&l| l + 1);
    let rare: Vec<&TupleRow> = rows.iter().filter(|r| !out.contains_key(&r.code)).collect();
    for r in rare {
        // attach rare tuples to the cluster at the smallest mean distance
        let mut sum = vec![0.0; clusters];
        let mut cnt = vec![0usize; clusters];
        for (a, &l) in labels.iter().enumerate() {
            sum[l] += cosine_distance(&r.row, &rows[core[a]].row);
            cnt[l] += 1;
        }
        let best = (0..clusters)
            .min_by(|&x, &y| (sum[x] / cnt[x] as f64).total_cmp(&(sum[y] / cnt[y] as f64)))
            .unwrap_or(0);
        out.insert(r.code, best as Symbol);
    }
    Ok(out)
}

/// One reconstruction pass: cluster the tuples of depth-`k` data into
/// depth-`k+1` latents.
pub fn reconstruct_level(corr: &LevelCorrelations, mode: Mode, opts: &ClusterOptions) -> Result<LatentAssignment> {
    if corr.positions.is_empty() {
        return Err(RhmError::Degenerate(format!("depth {} has no context tuples", corr.depth)));
    }
    let maps = match mode {
        Mode::Positional => corr
            .positions
            .iter()
            .map(|pos| Ok((pos.t, cluster_rows(&pos.rows, opts)?)))
            .collect::<Result<BTreeMap<_, _>>>()?,
        Mode::Shared => BTreeMap::from([(0, cluster_rows(&pooled_rows(corr, opts.pooling), opts)?)]),
    };
    Ok(LatentAssignment {
        depth: corr.depth + 1,
        mode,
        s: corr.s,
        v: corr.v,
        maps,
    })
}

/// Relabel the first `n` rows into depth-`k+1` data. With a grammar, the
/// true parents are carried along as `truth`.
pub fn relabel(data: &LevelData, assignment: &LatentAssignment, grammar: Option<&GrammarInstance>, n: usize) -> LevelData {
    let s = assignment.s as usize;
    let width = data.width / s;
    let mut items = Vec::with_capacity(n * width);
    let mut buf = Vec::with_capacity(width);
    for k in 0..n {
        assignment.relabel_row(data.row(k), &mut buf);
        items.extend_from_slice(&buf);
    }
    let truth = match (grammar, &data.truth) {
        (Some(g), Some(truth)) => {
            let p = g.params();
            let rule_level = p.depth - data.depth;
            Some(
                truth[..n * data.width]
                    .chunks(s)
                    .map(|tuple| g.parent_of(rule_level, encode_tuple(tuple, p.v)).unwrap_or(UNKNOWN))
                    .collect(),
            )
        }
        _ => None,
    };
    LevelData {
        depth: data.depth + 1,
        width,
        items,
        targets: data.targets[..n].to_vec(),
        truth,
    }
}

/// The finest partition of latent symbols that tuple–target correlations can
/// reveal: two symbols fall in one class when their exact rows are parallel
/// (typically both reach the target only through the same parent symbol).
/// Keyed like [`LatentAssignment::maps`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiableClasses {
    pub mode: Mode,
    pub maps: BTreeMap<usize, BTreeMap<Symbol, usize>>,
}

impl IdentifiableClasses {
    pub fn from_exact(grammar: &GrammarInstance, corr: &LevelCorrelations, mode: Mode) -> Result<Self> {
        if corr.samples.is_some() {
            return Err(RhmError::Validation("identifiable classes need exact correlations".into()));
        }
        let p = grammar.params();
        let rule_level = p.depth - corr.depth;
        let group = |rows: &[TupleRow]| -> BTreeMap<Symbol, usize> {
            let mut reps: Vec<(Symbol, &[f64])> = Vec::new();
            for r in rows {
                if let Some(parent) = grammar.parent_of(rule_level, r.code) {
                    if !reps.iter().any(|(q, _)| *q == parent) {
                        reps.push((parent, &r.row));
                    }
                }
            }
            let mut class: BTreeMap<Symbol, usize> = BTreeMap::new();
            let mut heads: Vec<&[f64]> = Vec::new();
            for (parent, row) in reps {
                let id = heads.iter().position(|h| cosine_distance(h, row) <= TIE_EPS).unwrap_or_else(|| {
                    heads.push(row);
                    heads.len() - 1
                });
                class.insert(parent, id);
            }
            class
        };
        let maps = match mode {
            Mode::Positional => corr.positions.iter().map(|pos| (pos.t, group(&pos.rows))).collect(),
            Mode::Shared => BTreeMap::from([(0, group(&pooled_rows(corr, Pooling::SumCounts)))]),
        };
        Ok(IdentifiableClasses { mode, maps })
    }

    /// Class of a true parent symbol at position `t`; unknown symbols keep their own class.
    pub fn class(&self, t: usize, parent: Symbol) -> usize {
        let key = match self.mode {
            Mode::Positional => t,
            Mode::Shared => 0,
        };
        self.maps
            .get(&key)
            .and_then(|m| m.get(&parent))
            .copied()
            .unwrap_or(usize::MAX / 2 + parent as usize)
    }
}

/// ARI of the assignment at each position in `ts`, over tuples seen at least
/// `min_count` times in the first `n` rows. The truth of a tuple is the
/// majority true parent of its occurrences, mapped through `classes` when
/// given. Positions with nothing to grade score 0.
pub fn grade_positions(
    data: &LevelData,
    assignment: &LatentAssignment,
    grammar: &GrammarInstance,
    n: usize,
    ts: &[usize],
    min_count: u64,
    classes: Option<&IdentifiableClasses>,
) -> Result<Vec<f64>> {
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| RhmError::Validation("grading needs true symbols".into()))?;
    let p = grammar.params();
    let s = p.s as usize;
    let rule_level = p.depth - data.depth;
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        let a = tuple_start(data.width, s, t);
        let mut votes: BTreeMap<u64, (u64, BTreeMap<Symbol, u64>)> = BTreeMap::new();
        for k in 0..n {
            let row = data.row(k);
            let Some(code) = tuple_code(&row[a..a + s], p.v) else { continue };
            let true_tuple = &truth[k * data.width + a..k * data.width + a + s];
            let parent = grammar.parent_of(rule_level, encode_tuple(true_tuple, p.v)).unwrap_or(UNKNOWN);
            let e = votes.entry(code).or_default();
            e.0 += 1;
            *e.1.entry(parent).or_default() += 1;
        }
        let (mut pred, mut real) = (Vec::new(), Vec::new());
        for (code, (count, parents)) in &votes {
            if *count < min_count {
                continue;
            }
            let majority = parents.iter().max_by_key(|(&sym, &c)| (c, std::cmp::Reverse(sym))).map(|(&sym, _)| sym);
            pred.push(assignment.label(t, *code).map_or(usize::MAX, |l| l as usize));
            let parent = majority.unwrap_or(UNKNOWN);
            real.push(classes.map_or(parent as usize, |c| c.class(t, parent)));
        }
        out.push(if pred.is_empty() { 0.0 } else { adjusted_rand_index(&pred, &real) });
    }
    Ok(out)
}

fn perfect(ari: f64) -> bool {
    ari > 1.0 - 1e-12
}

/// Geometric grid `min, min·√2, min·2, ...` up to `max`, rounded and deduplicated.
pub fn geometric_grid(min: usize, max: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut k = 0;
    loop {
        let x = (min.max(1) as f64 * 2f64.powf(k as f64 / 2.0)).round() as usize;
        if x > max {
            break;
        }
        if out.last() != Some(&x) {
            out.push(x);
        }
        k += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Training-set sizes, increasing.
    pub grid: Vec<usize>,
    pub trials: usize,
    /// Fraction of trials that must succeed.
    pub theta: f64,
    /// Deepest latent depth to test (at most `L - 1`).
    pub max_depth: u32,
    pub cluster: ClusterOptions,
    pub workers: usize,
}

impl SweepConfig {
    pub fn new(params: &RhmParams, grid: Vec<usize>) -> Self {
        SweepConfig {
            grid,
            trials: 10,
            theta: 0.8,
            max_depth: params.depth.saturating_sub(1),
            cluster: ClusterOptions::new(params),
            workers: 1,
        }
    }
}

/// Outcome of reconstructing up to one depth in one trial at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub trial: usize,
    pub level: u32,
    pub mode: Mode,
    pub samples: usize,
    /// Smallest ARI over the graded positions.
    pub ari: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexityEstimate {
    pub level: u32,
    pub mode: Mode,
    /// Smallest grid point reaching the success fraction, or the largest grid
    /// point when `lower_bound` is set.
    pub p_star: usize,
    pub lower_bound: bool,
    /// Success fraction at each evaluated grid point (the sweep may stop early).
    pub success_fraction: Vec<f64>,
    /// `P_ℓ` (positional) or `P̄_ℓ` (shared).
    pub theory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub params: RhmParams,
    pub config: SweepConfig,
    pub reports: Vec<ReconstructionReport>,
    pub estimates: Vec<SampleComplexityEstimate>,
}

impl SweepResult {
    pub fn estimate(&self, level: u32, mode: Mode) -> Option<&SampleComplexityEstimate> {
        self.estimates.iter().find(|e| e.level == level && e.mode == mode)
    }
}

/// Per depth `ℓ`, pass `j` must label tuples `t = 2..=s^(ℓ-j+1)` perfectly:
/// these are the tuples within tree distance `2(ℓ-j)+3` of the target.
fn graded_positions(s: u32, level: u32, pass: u32) -> Vec<usize> {
    (2..=(s as usize).pow(level - pass + 1)).collect()
}

/// What a trial needs that does not depend on the sample size.
struct TrialSetup {
    grammar: GrammarInstance,
    data_seed: u64,
    /// `identifiable[pass - 1][mode]`, positional first.
    identifiable: Vec<[IdentifiableClasses; 2]>,
}

fn trial_setup(params: &RhmParams, trial: usize, max_depth: u32) -> Result<TrialSetup> {
    let grammar = sample_grammar(&params.with_seed(stream_seed(params.seed, domain::TRIAL, 2 * trial as u64)))?;
    let identifiable = (1..=max_depth)
        .map(|pass| {
            let exact = LevelCorrelations::exact(&grammar, pass - 1)?;
            Ok([
                IdentifiableClasses::from_exact(&grammar, &exact, Mode::Positional)?,
                IdentifiableClasses::from_exact(&grammar, &exact, Mode::Shared)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialSetup {
        grammar,
        data_seed: stream_seed(params.seed, domain::TRIAL, 2 * trial as u64 + 1),
        identifiable,
    })
}

/// Reconstruct with `n` samples in both modes and grade every depth.
fn trial_point(
    params: &RhmParams,
    trial: usize,
    setup: &TrialSetup,
    n: usize,
    cfg: &SweepConfig,
) -> Result<Vec<ReconstructionReport>> {
    // sequence k depends only on (grammar, seed, k), so this is a prefix of any larger draw
    let base = LevelData::from_dataset(&generate_dataset(&setup.grammar, n, false, setup.data_seed));
    let mut reports = Vec::new();
    for (mi, mode) in [Mode::Positional, Mode::Shared].into_iter().enumerate() {
        // aris[j-1][i] = ARI of pass j at position t = i + 2
        let mut aris: Vec<Vec<f64>> = Vec::new();
        let mut data = base.clone();
        for pass in 1..=cfg.max_depth {
            let corr = LevelCorrelations::from_data(&data, n, params.s, params.v)?;
            let assignment = match reconstruct_level(&corr, mode, &cfg.cluster) {
                Ok(a) => a,
                Err(RhmError::Degenerate(_)) => break,
                Err(e) => return Err(e),
            };
            let ts = graded_positions(params.s, cfg.max_depth, pass);
            let classes = &setup.identifiable[pass as usize - 1][mi];
            aris.push(grade_positions(
                &data,
                &assignment,
                &setup.grammar,
                n,
                &ts,
                cfg.cluster.min_count,
                Some(classes),
            )?);
            if pass < cfg.max_depth {
                data = relabel(&data, &assignment, Some(&setup.grammar), n);
            }
        }
        for level in 1..=cfg.max_depth {
            let mut worst = f64::INFINITY;
            for pass in 1..=level {
                let count = (params.s as usize).pow(level - pass + 1) - 1;
                match aris.get(pass as usize - 1) {
                    Some(a) => worst = a[..count].iter().copied().fold(worst, f64::min),
                    None => worst = 0.0,
                }
            }
            reports.push(ReconstructionReport {
                trial,
                level,
                mode,
                samples: n,
                ari: worst,
                success: perfect(worst),
            });
        }
    }
    Ok(reports)
}

/// Measure `P*` for every depth `1..=max_depth` and both modes. Trial `i`
/// draws its grammar from `(params.seed, TRIAL, 2i)` and its data from
/// `(.., 2i+1)`; grid points within a trial see nested prefixes of one
/// sequence stream. The grid is walked upwards and stops once every depth
/// and mode has reached the success fraction.
pub fn sample_complexity_sweep(params: &RhmParams, cfg: &SweepConfig) -> Result<SweepResult> {
    params.validate()?;
    if params.f() >= 1.0 {
        return Err(RhmError::Theory("correlations vanish at f=1, theory inapplicable".into()));
    }
    if cfg.max_depth == 0 || cfg.max_depth >= params.depth {
        return Err(RhmError::Parameter(format!(
            "max_depth must be in 1..={}",
            params.depth.saturating_sub(1)
        )));
    }
    if cfg.grid.is_empty() || cfg.grid.windows(2).any(|w| w[1] <= w[0]) || cfg.grid[0] == 0 {
        return Err(RhmError::Parameter("grid must be non-empty, positive and increasing".into()));
    }
    if cfg.trials == 0 || !(0.0..=1.0).contains(&cfg.theta) {
        return Err(RhmError::Parameter("need trials >= 1 and theta in [0, 1]".into()));
    }
    let setups = parallel_map(cfg.trials, cfg.workers, |i| trial_setup(params, i, cfg.max_depth))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let combos: Vec<(u32, Mode)> = (1..=cfg.max_depth)
        .flat_map(|l| [(l, Mode::Positional), (l, Mode::Shared)])
        .collect();
    let mut fractions: Vec<Vec<f64>> = vec![Vec::new(); combos.len()];
    let mut found: Vec<Option<usize>> = vec![None; combos.len()];
    let mut reports = Vec::new();
    for (gi, &n) in cfg.grid.iter().enumerate() {
        let point = parallel_map(cfg.trials, cfg.workers, |i| trial_point(params, i, &setups[i], n, cfg));
        let mut point_reports = Vec::new();
        for r in point {
            point_reports.extend(r?);
        }
        for (c, &(level, mode)) in combos.iter().enumerate() {
            let hits = point_reports
                .iter()
                .filter(|r| r.level == level && r.mode == mode && r.success)
                .count();
            let frac = hits as f64 / cfg.trials as f64;
            fractions[c].push(frac);
            if found[c].is_none() && frac >= cfg.theta - 1e-12 {
                found[c] = Some(gi);
            }
        }
        reports.extend(point_reports);
        if found.iter().all(Option::is_some) {
            break;
        }
    }
    let mut estimates = Vec::new();
    for (c, &(level, mode)) in combos.iter().enumerate() {
        let evaluated = fractions[c].len();
        estimates.push(SampleComplexityEstimate {
            level,
            mode,
            p_star: found[c].map_or(cfg.grid[evaluated - 1], |i| cfg.grid[i]),
            lower_bound: found[c].is_none(),
            success_fraction: std::mem::take(&mut fractions[c]),
            theory: sample_complexity(params, level, mode)?,
        });
    }
    Ok(SweepResult {
        params: *params,
        config: cfg.clone(),
        reports,
        estimates,
    })
}

/// `P*` for a single depth and mode.
pub fn measure_sample_complexity(
    params: &RhmParams,
    level: u32,
    mode: Mode,
    theta: f64,
    trials: usize,
    grid: Vec<usize>,
) -> Result<SampleComplexityEstimate> {
    if level == 0 || level >= params.depth {
        return Err(RhmError::Index(format!("level {level} outside 1..={}", params.depth.saturating_sub(1))));
    }
    let mut cfg = SweepConfig::new(params, grid);
    cfg.trials = trials;
    cfg.theta = theta;
    cfg.max_depth = level;
    let result = sample_complexity_sweep(params, &cfg)?;
    Ok(result.estimate(level, mode).expect("estimated").clone())
}

/// Variables the last token depends on: `s - 1` siblings at each of the `L`
/// levels plus the root.
pub fn relevant_variable_count(params: &RhmParams) -> u64 {
    (params.s as u64 - 1) * params.depth as u64 + 1
}

/// Maps a context to the sibling variables of the target's ancestors.
///
/// The key holds `(s - 1) L` entries: the siblings at depth 0, then the
/// reconstructed siblings at depths `1..L-1`. The root is never observed
/// directly and enters only through the counts, which marginalize it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalKeyer {
    pub params: RhmParams,
    /// Assignments for latent depths `1..=L-1`, in order.
    pub assignments: Vec<LatentAssignment>,
}

impl HierarchicalKeyer {
    pub fn new(params: RhmParams, assignments: Vec<LatentAssignment>) -> Result<Self> {
        params.validate()?;
        if assignments.len() + 1 != params.depth as usize {
            return Err(RhmError::Validation(format!(
                "need {} assignments, got {}",
                params.depth - 1,
                assignments.len()
            )));
        }
        for (i, a) in assignments.iter().enumerate() {
            if a.depth != i as u32 + 1 || a.s != params.s {
                return Err(RhmError::Validation(format!("assignment {i} has depth {} or s {}", a.depth, a.s)));
            }
        }
        Ok(HierarchicalKeyer { params, assignments })
    }

    pub fn from_grammar(grammar: &GrammarInstance, mode: Mode) -> Result<Self> {
        let p = *grammar.params();
        let assignments = (1..p.depth)
            .map(|k| LatentAssignment::from_grammar(grammar, k, mode))
            .collect::<Result<Vec<_>>>()?;
        HierarchicalKeyer::new(p, assignments)
    }

    /// Reconstruct every depth from training data.
    pub fn learn(data: &Dataset, mode: Mode, opts: &ClusterOptions) -> Result<Self> {
        let p = data.params;
        let mut level = LevelData::from_dataset(data);
        level.truth = None;
        let n = level.len();
        let mut assignments = Vec::new();
        for _ in 1..p.depth {
            let corr = LevelCorrelations::from_data(&level, n, p.s, p.v)?;
            let a = reconstruct_level(&corr, mode, opts)?;
            level = relabel(&level, &a, None, n);
            assignments.push(a);
        }
        HierarchicalKeyer::new(p, assignments)
    }

    pub fn group_size(&self) -> usize {
        self.params.s as usize - 1
    }

    pub fn groups(&self) -> usize {
        self.params.depth as usize
    }

    /// Key of a context of `d - 1` tokens (or a full sequence; its last token is ignored).
    pub fn key(&self, context: &[Symbol]) -> Result<Vec<Symbol>> {
        let d = self.params.seq_len();
        if context.len() + 1 != d && context.len() != d {
            return Err(RhmError::Index(format!("context length {} for sequence length {d}", context.len())));
        }
        let s = self.params.s as usize;
        let mut current: Vec<Symbol> = context[..d - 1].to_vec();
        current.push(SPINE);
        let mut key = Vec::with_capacity(self.groups() * self.group_size());
        let mut next = Vec::new();
        for depth in 0..self.groups() {
            let w = current.len();
            key.extend_from_slice(&current[w - s..w - 1]);
            if depth + 1 < self.groups() {
                self.assignments[depth].relabel_row(&current, &mut next);
                std::mem::swap(&mut current, &mut next);
            }
        }
        Ok(key)
    }
}

/// A predicted distribution and how many key groups were dropped to find it.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub dist: ConditionalDistribution,
    pub backoff: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorLoss {
    pub loss: f64,
    pub stderr: f64,
    pub n: usize,
    /// Test contexts that needed a backoff.
    pub backoffs: usize,
}

/// Count tables keyed by growing prefixes of a key; prediction uses the
/// longest prefix that was seen, with additive smoothing.
#[derive(Debug, Clone, PartialEq)]
struct BackoffTables {
    v: usize,
    alpha: f64,
    /// Prefix lengths, shortest first.
    lengths: Vec<usize>,
    tables: Vec<HashMap<Vec<Symbol>, Vec<f64>>>,
}

impl BackoffTables {
    fn new(v: usize, lengths: Vec<usize>) -> Self {
        let tables = vec![HashMap::new(); lengths.len()];
        BackoffTables {
            v,
            alpha: 0.0,
            lengths,
            tables,
        }
    }

    fn add(&mut self, key: &[Symbol], target: Symbol, weight: f64) {
        for (len, table) in self.lengths.iter().zip(self.tables.iter_mut()) {
            table.entry(key[..*len].to_vec()).or_insert_with(|| vec![0.0; self.v])[target as usize] += weight;
        }
    }

    fn predict(&self, key: &[Symbol]) -> Result<Prediction> {
        for (i, (len, table)) in self.lengths.iter().zip(&self.tables).enumerate().rev() {
            let Some(counts) = table.get(&key[..*len]) else { continue };
            let total: f64 = counts.iter().sum();
            if total <= 0.0 {
                continue;
            }
            let weights = counts.iter().map(|c| c + self.alpha).collect();
            return Ok(Prediction {
                dist: ConditionalDistribution::from_weights(weights)?,
                backoff: (self.lengths.len() - 1 - i) as u32,
            });
        }
        Err(RhmError::Empty("predictor was trained on no data".into()))
    }
}

fn evaluate_with<F>(test: &Dataset, mut predict: F) -> Result<PredictorLoss>
where
    F: FnMut(&[Symbol]) -> Result<Prediction>,
{
    if test.is_empty() {
        return Err(RhmError::Empty("empty test set".into()));
    }
    let mut stats = RunningMean::default();
    let mut backoffs = 0;
    for seq in test.sequences() {
        let pred = predict(&seq[..seq.len() - 1])?;
        backoffs += (pred.backoff > 0) as usize;
        stats.push(-pred.dist.prob(seq[seq.len() - 1]).ln());
    }
    Ok(PredictorLoss {
        loss: stats.mean(),
        stderr: stats.stderr(),
        n: stats.count,
        backoffs,
    })
}

/// Estimates `P(X_{-1} | reconstructed sibling variables)` by counting.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalPredictor {
    pub keyer: HierarchicalKeyer,
    tables: BackoffTables,
}

impl HierarchicalPredictor {
    fn empty(keyer: HierarchicalKeyer) -> Self {
        let g = keyer.group_size();
        let lengths = (0..=keyer.groups()).map(|k| k * g).collect();
        let v = keyer.params.v as usize;
        HierarchicalPredictor {
            keyer,
            tables: BackoffTables::new(v, lengths),
        }
    }

    /// Count over training sequences with `1/(vP)` pseudo-counts per entry.
    pub fn fit(keyer: HierarchicalKeyer, train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(RhmError::Empty("empty training set".into()));
        }
        let mut pred = HierarchicalPredictor::empty(keyer);
        for seq in train.sequences() {
            let key = pred.keyer.key(seq)?;
            pred.tables.add(&key, seq[seq.len() - 1], 1.0);
        }
        pred.tables.alpha = 1.0 / (pred.tables.v as f64 * train.len() as f64);
        Ok(pred)
    }

    /// Tables filled with exact probabilities by enumerating derivations (no smoothing).
    pub fn from_exact(grammar: &GrammarInstance, keyer: HierarchicalKeyer, cap: u64) -> Result<Self> {
        let mut pred = HierarchicalPredictor::empty(keyer);
        let mut failure = None;
        for_each_derivation(grammar, cap, |levels, prob| {
            let leaves = levels.last().unwrap();
            match pred.keyer.key(leaves) {
                Ok(key) => pred.tables.add(&key, leaves[leaves.len() - 1], prob),
                Err(e) => failure = Some(e),
            }
        })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(pred),
        }
    }

    pub fn predict(&self, context: &[Symbol]) -> Result<Prediction> {
        self.tables.predict(&self.keyer.key(context)?)
    }

    pub fn evaluate(&self, test: &Dataset) -> Result<PredictorLoss> {
        evaluate_with(test, |ctx| self.predict(ctx))
    }
}

/// Counting baseline on the raw last `context_len` tokens, backing off to shorter contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatNgram {
    pub context_len: usize,
    tables: BackoffTables,
}

impl FlatNgram {
    pub fn fit(train: &Dataset, context_len: usize) -> Result<Self> {
        let d = train.seq_len();
        if context_len >= d {
            return Err(RhmError::Index(format!("context length {context_len} >= sequence length {d}")));
        }
        if train.is_empty() {
            return Err(RhmError::Empty("empty training set".into()));
        }
        let v = train.params.v as usize;
        // keys are stored nearest token first so prefixes are shorter contexts
        let mut tables = BackoffTables::new(v, (0..=context_len).collect());
        let mut key = Vec::with_capacity(context_len);
        for seq in train.sequences() {
            key.clear();
            key.extend(seq[d - 1 - context_len..d - 1].iter().rev());
            tables.add(&key, seq[d - 1], 1.0);
        }
        tables.alpha = 1.0 / (v as f64 * train.len() as f64);
        Ok(FlatNgram { context_len, tables })
    }

    pub fn predict(&self, context: &[Symbol]) -> Result<Prediction> {
        if context.len() < self.context_len {
            return Err(RhmError::Index("context shorter than the n-gram order".into()));
        }
        let key: Vec<Symbol> = context[context.len() - self.context_len..].iter().rev().copied().collect();
        self.tables.predict(&key)
    }

    pub fn evaluate(&self, test: &Dataset) -> Result<PredictorLoss> {
        evaluate_with(test, |ctx| self.predict(ctx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{bp_last_token_posterior, ObservationWindow};
    use proptest::prelude::*;

    fn grammar(v: u32, m: u32, s: u32, l: u32, seed: u64) -> GrammarInstance {
        sample_grammar(&RhmParams::new(v, m, s, l, seed).unwrap()).unwrap()
    }

    #[test]
    fn ari_basic_cases() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 3, 3]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[1, 1, 1]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 1, 2], &[0, 1, 2]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 1, 2]), 0.0);
        // textbook example: ARI = 0.24242...
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        assert!((adjusted_rand_index(&a, &b) - 0.242_424_242_424).abs() < 1e-9);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    }

    #[test]
    fn linkage_separates_clear_groups() {
        let pts = [0.0f64, 0.1, 0.2, 5.0, 5.1, 9.0];
        let n = pts.len();
        let dist: Vec<f64> = (0..n * n).map(|i| (pts[i / n] - pts[i % n]).abs()).collect();
        assert_eq!(average_linkage(&dist, n, 3), vec![0, 0, 0, 1, 1, 2]);
        assert_eq!(average_linkage(&dist, n, 1), vec![0; 6]);
        // duplicates merge past the cut
        let dup = [1.0f64, 1.0, 1.0, 2.0];
        let d2: Vec<f64> = (0..16).map(|i| (dup[i / 4] - dup[i % 4]).abs()).collect();
        assert_eq!(average_linkage(&d2, 4, 4), vec![0, 0, 0, 1]);
    }

    #[test]
    fn cosine_distance_cases() {
        assert!(cosine_distance(&[1.0, 0.0], &[2.0, 0.0]).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]) - 2.0).abs() < 1e-15);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn exact_rows_give_perfect_partitions() {
        // seed 1 has two depth-1 symbols that reach the target only through
        // the same parent at t = 4, so their exact rows coincide
        for (seed, collisions) in [(0, false), (1, true), (2, false), (3, false)] {
            let g = grammar(16, 4, 2, 3, seed);
            let p = *g.params();
            let opts = ClusterOptions::new(&p);
            let mut merged = false;
            for depth in 0..p.depth - 1 {
                let corr = LevelCorrelations::exact(&g, depth).unwrap();
                for mode in [Mode::Positional, Mode::Shared] {
                    let a = reconstruct_level(&corr, mode, &opts).unwrap();
                    let truth = LatentAssignment::from_grammar(&g, depth + 1, mode).unwrap();
                    let classes = IdentifiableClasses::from_exact(&g, &corr, mode).unwrap();
                    for pos in &corr.positions {
                        let codes: Vec<u64> = pos.rows.iter().map(|r| r.code).collect();
                        let pred: Vec<usize> = codes.iter().map(|&c| a.label(pos.t, c).unwrap() as usize).collect();
                        let parents: Vec<Symbol> = codes.iter().map(|&c| truth.label(pos.t, c).unwrap()).collect();
                        let ident: Vec<usize> = parents.iter().map(|&q| classes.class(pos.t, q)).collect();
                        let real: Vec<usize> = parents.iter().map(|&q| q as usize).collect();
                        assert_eq!(adjusted_rand_index(&pred, &ident), 1.0, "seed {seed} depth {depth} {mode} t {}", pos.t);
                        merged |= adjusted_rand_index(&ident, &real) < 1.0;
                    }
                }
            }
            assert_eq!(merged, collisions, "seed {seed}");
        }
    }

    #[test]
    fn reconstruction_without_tuples_is_degenerate() {
        let corr = LevelCorrelations {
            depth: 0,
            s: 2,
            v: 4,
            samples: Some(1),
            positions: vec![PositionCorrelations {
                t: 2,
                rows: vec![],
                noise: 0.0,
            }],
        };
        let opts = ClusterOptions {
            v: 4,
            m: 2,
            min_count: 2,
            pooling: Pooling::SumCounts,
        };
        assert!(matches!(reconstruct_level(&corr, Mode::Positional, &opts), Err(RhmError::Degenerate(_))));
    }

    #[test]
    fn every_observed_tuple_is_assigned_within_v_labels() {
        let g = grammar(8, 2, 2, 3, 4);
        let p = *g.params();
        let ds = generate_dataset(&g, 300, false, 1);
        let data = LevelData::from_dataset(&ds);
        let corr = LevelCorrelations::from_data(&data, ds.len(), p.s, p.v).unwrap();
        for mode in [Mode::Positional, Mode::Shared] {
            let a = reconstruct_level(&corr, mode, &ClusterOptions::new(&p)).unwrap();
            for pos in &corr.positions {
                for r in &pos.rows {
                    assert!(a.label(pos.t, r.code).unwrap() < p.v);
                }
            }
        }
    }

    #[test]
    fn relabel_with_truth_reproduces_parse() {
        let g = grammar(8, 2, 2, 3, 9);
        let ds = generate_dataset(&g, 50, true, 2);
        let data = LevelData::from_dataset(&ds);
        let a = LatentAssignment::from_grammar(&g, 1, Mode::Shared).unwrap();
        let next = relabel(&data, &a, Some(&g), ds.len());
        let truth = next.truth.as_ref().unwrap();
        for (k, tree) in ds.trees().unwrap().iter().enumerate() {
            let row = next.row(k);
            assert_eq!(row[row.len() - 1], SPINE);
            for j in 0..next.width {
                assert_eq!(truth[k * next.width + j], tree.symbol_at(2, j));
                if j + 1 < next.width {
                    assert_eq!(row[j], tree.symbol_at(2, j));
                }
            }
        }
    }

    #[test]
    fn relevant_variable_arithmetic() {
        let p = RhmParams::new(16, 4, 2, 4, 0).unwrap();
        assert_eq!(relevant_variable_count(&p), 5);
        let g = sample_grammar(&p).unwrap();
        let keyer = HierarchicalKeyer::from_grammar(&g, Mode::Positional).unwrap();
        let ds = generate_dataset(&g, 3, false, 0);
        let key = keyer.key(ds.sequence(0)).unwrap();
        assert_eq!(key.len() as u64 + 1, relevant_variable_count(&p));
        assert_eq!(p.seq_len() - 1, 15);
    }

    #[test]
    fn exact_tables_reproduce_bp() {
        for (v, m, l, seed) in [(4, 2, 3, 1), (3, 2, 2, 2), (4, 3, 2, 5)] {
            let g = grammar(v, m, 2, l, seed);
            let keyer = HierarchicalKeyer::from_grammar(&g, Mode::Shared).unwrap();
            let pred = HierarchicalPredictor::from_exact(&g, keyer, 1 << 22).unwrap();
            let ds = generate_dataset(&g, 100, false, 3);
            for seq in ds.sequences() {
                let ctx = &seq[..seq.len() - 1];
                let a = pred.predict(ctx).unwrap();
                assert_eq!(a.backoff, 0);
                let b = bp_last_token_posterior(&g, &ObservationWindow::new(ctx.to_vec())).unwrap();
                for (x, y) in a.dist.probs().iter().zip(b.probs()) {
                    assert!((x - y).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn label_permutation_leaves_predictions_unchanged() {
        let g = grammar(8, 2, 2, 3, 6);
        let p = *g.params();
        let train = generate_dataset(&g, 2000, false, 1);
        let test = generate_dataset(&g, 200, false, 2);
        let keyer = HierarchicalKeyer::learn(&train, Mode::Positional, &ClusterOptions::new(&p)).unwrap();
        let perm: Vec<Symbol> = (0..p.v).rev().collect();
        let permuted: Vec<LatentAssignment> = keyer
            .assignments
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let a = a.permuted(&perm);
                if i == 0 { a } else { a.recoded_inputs(&perm) }
            })
            .collect();
        let permuted = HierarchicalKeyer::new(p, permuted).unwrap();
        let a = HierarchicalPredictor::fit(keyer, &train).unwrap();
        let b = HierarchicalPredictor::fit(permuted, &train).unwrap();
        for seq in test.sequences() {
            let ctx = &seq[..seq.len() - 1];
            assert_eq!(a.predict(ctx).unwrap(), b.predict(ctx).unwrap());
        }
    }

    #[test]
    fn flat_ngram_backs_off_on_unseen_contexts() {
        let g = grammar(8, 2, 2, 3, 1);
        let train = generate_dataset(&g, 20, false, 1);
        let test = generate_dataset(&g, 200, false, 2);
        let flat = FlatNgram::fit(&train, 7).unwrap();
        let loss = flat.evaluate(&test).unwrap();
        assert!(loss.backoffs > 0);
        assert!(loss.loss.is_finite());
        assert!(FlatNgram::fit(&train, 8).is_err());
    }

    #[test]
    fn grid_is_geometric() {
        let g = geometric_grid(100, 1600);
        assert_eq!(g, vec![100, 141, 200, 283, 400, 566, 800, 1131, 1600]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn ari_is_symmetric_and_label_invariant(a in proptest::collection::vec(0usize..4, 2..30), shift in 1usize..5) {
            let b: Vec<usize> = a.iter().rev().copied().collect();
            let relabeled: Vec<usize> = a.iter().map(|x| (x + shift) * 7).collect();
            prop_assert!((adjusted_rand_index(&a, &b) - adjusted_rand_index(&b, &a)).abs() < 1e-12);
            prop_assert_eq!(adjusted_rand_index(&a, &relabeled), 1.0);
            prop_assert!(adjusted_rand_index(&a, &b) <= 1.0 + 1e-12);
        }
    }
}
