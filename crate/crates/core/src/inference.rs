//! Exact inference on the fixed tree.
//!
//! Messages run upward from the leaves to the root and then downward along
//! the root path of the queried node. Each message is rescaled so that its
//! largest entry is 1, which keeps deep trees from underflowing; nodes whose
//! subtree carries no evidence send the constant message and are skipped.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, RhmError};
use crate::params::{RhmParams, Symbol, TreeNode};
use crate::grammar::GrammarInstance;

/// Default cap on the number of derivations the enumeration oracle visits.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Largest joint table [`exact_marginal`] will build.
pub const MAX_JOINT_TABLE: usize = 1 << 22;

/// A probability vector over the `v` symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDistribution {
    probs: Vec<f64>,
}

impl ConditionalDistribution {
    /// Normalizes `weights`; fails with `ImpossibleContext` if they sum to zero.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(RhmError::ImpossibleContext);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(ConditionalDistribution { probs: weights })
    }

    pub fn uniform(v: usize) -> Self {
        ConditionalDistribution {
            probs: vec![1.0 / v as f64; v],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: Symbol) -> f64 {
        self.probs[x as usize]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn argmax(&self) -> Symbol {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as Symbol
    }
}

/// The observed context `x_{-n} .. x_{-2}` preceding the last token.
/// `n = 1` observes nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationWindow {
    /// Observed tokens in sequence order, `x_{-n}` first.
    context: Vec<Symbol>,
}

impl ObservationWindow {
    pub fn new(context: Vec<Symbol>) -> Self {
        ObservationWindow { context }
    }

    pub fn empty() -> Self {
        ObservationWindow { context: Vec::new() }
    }

    /// The `n`-gram window of a full sequence: its last `n - 1` context tokens.
    pub fn from_sequence(seq: &[Symbol], n: usize) -> Result<Self> {
        if n == 0 || n > seq.len() {
            return Err(RhmError::Index(format!(
                "window size {n} outside 1..={}",
                seq.len()
            )));
        }
        let d = seq.len();
        Ok(ObservationWindow {
            context: seq[d - n..d - 1].to_vec(),
        })
    }

    /// Window size `n` (context length plus the predicted token).
    pub fn n(&self) -> usize {
        self.context.len() + 1
    }

    pub fn context(&self) -> &[Symbol] {
        &self.context
    }
}

/// Clamped node values on the tree; unclamped nodes are summed over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evidence {
    s: usize,
    depth: u32,
    clamps: Vec<Option<Symbol>>,
}

fn level_offset(s: usize, level: u32) -> usize {
    (s.pow(level) - 1) / (s - 1)
}

impl Evidence {
    pub fn new(params: &RhmParams) -> Self {
        let s = params.s as usize;
        Evidence {
            s,
            depth: params.depth,
            clamps: vec![None; level_offset(s, params.depth + 1)],
        }
    }

    pub fn from_window(params: &RhmParams, window: &ObservationWindow) -> Result<Self> {
        let d = params.seq_len();
        if window.n() > d {
            return Err(RhmError::Index(format!("window size {} > sequence length {d}", window.n())));
        }
        let mut ev = Evidence::new(params);
        let ctx = window.context();
        let start = d - 1 - ctx.len();
        for (k, &x) in ctx.iter().enumerate() {
            if x >= params.v {
                return Err(RhmError::Index(format!("token {x} >= v = {}", params.v)));
            }
            ev.clamps[level_offset(ev.s, params.depth) + start + k] = Some(x);
        }
        Ok(ev)
    }

    fn slot(&self, node: TreeNode) -> Result<usize> {
        Ok(level_offset(self.s, node.level) + node.index(self.s as u32, self.depth)?)
    }

    pub fn set(&mut self, node: TreeNode, value: Symbol) -> Result<()> {
        let slot = self.slot(node)?;
        self.clamps[slot] = Some(value);
        Ok(())
    }

    pub fn clear(&mut self, node: TreeNode) -> Result<()> {
        let slot = self.slot(node)?;
        self.clamps[slot] = None;
        Ok(())
    }

    pub fn get(&self, node: TreeNode) -> Result<Option<Symbol>> {
        Ok(self.clamps[self.slot(node)?])
    }
}

/// Reusable message buffers for repeated queries on one grammar.
#[derive(Debug, Clone, Default)]
pub struct BpWorkspace {
    up: Vec<f64>,
    informative: Vec<bool>,
    down: Vec<f64>,
    next: Vec<f64>,
}

impl BpWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

fn rescale(msg: &mut [f64]) -> Result<()> {
    let max = msg.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(RhmError::ImpossibleContext);
    }
    msg.iter_mut().for_each(|x| *x /= max);
    Ok(())
}

fn upward(grammar: &GrammarInstance, ev: &Evidence, ws: &mut BpWorkspace) -> Result<()> {
    let p = grammar.params();
    let (v, m, s) = (p.v as usize, p.m as usize, p.s as usize);
    let total = ev.clamps.len();
    ws.up.clear();
    ws.up.resize(total * v, 1.0);
    ws.informative.clear();
    ws.informative.resize(total, false);

    let leaf_off = level_offset(s, p.depth);
    for i in leaf_off..total {
        if let Some(x) = ev.clamps[i] {
            let msg = &mut ws.up[i * v..(i + 1) * v];
            msg.fill(0.0);
            msg[x as usize] = 1.0;
            ws.informative[i] = true;
        }
    }
    for level in (0..p.depth).rev() {
        let off = level_offset(s, level);
        let child_off = level_offset(s, level + 1);
        let table = grammar.level_table(level + 1);
        for i in 0..s.pow(level) {
            let node = off + i;
            let first_child = child_off + i * s;
            let any_child = ws.informative[first_child..first_child + s].iter().any(|&b| b);
            let clamp = ev.clamps[node];
            if !any_child && clamp.is_none() {
                continue;
            }
            ws.informative[node] = true;
            let (head, tail) = ws.up.split_at_mut(first_child * v);
            let msg = &mut head[node * v..(node + 1) * v];
            let kids = &tail[..s * v];
            let kid_info = &ws.informative[first_child..first_child + s];
            for (mu, out) in msg.iter_mut().enumerate() {
                if clamp.is_some_and(|c| c as usize != mu) {
                    *out = 0.0;
                    continue;
                }
                if !any_child {
                    *out = 1.0;
                    continue;
                }
                let mut acc = 0.0;
                for r in 0..m {
                    let tuple = &table[(mu * m + r) * s..(mu * m + r + 1) * s];
                    let mut prod = 1.0;
                    for k in 0..s {
                        if kid_info[k] {
                            prod *= kids[k * v + tuple[k] as usize];
                        }
                    }
                    acc += prod;
                }
                *out = acc;
            }
            rescale(msg)?;
        }
    }
    Ok(())
}

fn node_posterior_ws(
    grammar: &GrammarInstance,
    ev: &Evidence,
    node: TreeNode,
    ws: &mut BpWorkspace,
) -> Result<Vec<f64>> {
    let p = grammar.params();
    let (v, m, s) = (p.v as usize, p.m as usize, p.s as usize);
    let target = node.index(p.s, p.depth)?;
    upward(grammar, ev, ws)?;

    ws.down.clear();
    ws.down.resize(v, 1.0);
    for level in 0..node.level {
        let ancestor = target / s.pow(node.level - level);
        let child = target / s.pow(node.level - level - 1);
        let k_on_path = child - ancestor * s;
        let node_slot = level_offset(s, level) + ancestor;
        let first_child = level_offset(s, level + 1) + ancestor * s;
        let clamp = ev.clamps[node_slot];
        let table = grammar.level_table(level + 1);
        ws.next.clear();
        ws.next.resize(v, 0.0);
        for mu in 0..v {
            let g = ws.down[mu];
            if g == 0.0 || clamp.is_some_and(|c| c as usize != mu) {
                continue;
            }
            for r in 0..m {
                let tuple = &table[(mu * m + r) * s..(mu * m + r + 1) * s];
                let mut prod = g;
                for (k, &c) in tuple.iter().enumerate() {
                    if k != k_on_path && ws.informative[first_child + k] {
                        prod *= ws.up[(first_child + k) * v + c as usize];
                    }
                }
                ws.next[tuple[k_on_path] as usize] += prod;
            }
        }
        rescale(&mut ws.next)?;
        std::mem::swap(&mut ws.down, &mut ws.next);
    }
    let slot = level_offset(s, node.level) + target;
    let mut post = ws.down.clone();
    if ws.informative[slot] {
        for (x, u) in post.iter_mut().zip(&ws.up[slot * v..(slot + 1) * v]) {
            *x *= u;
        }
    }
    let total: f64 = post.iter().sum();
    if !(total > 0.0) {
        return Err(RhmError::ImpossibleContext);
    }
    post.iter_mut().for_each(|x| *x /= total);
    Ok(post)
}

/// Posterior of any node given clamped evidence.
pub fn node_posterior(grammar: &GrammarInstance, evidence: &Evidence, node: TreeNode) -> Result<ConditionalDistribution> {
    let mut ws = BpWorkspace::new();
    Ok(ConditionalDistribution {
        probs: node_posterior_ws(grammar, evidence, node, &mut ws)?,
    })
}

pub fn node_posterior_with(
    grammar: &GrammarInstance,
    evidence: &Evidence,
    node: TreeNode,
    ws: &mut BpWorkspace,
) -> Result<ConditionalDistribution> {
    Ok(ConditionalDistribution {
        probs: node_posterior_ws(grammar, evidence, node, ws)?,
    })
}

/// Exact `P(X_{-1} | window)` by message passing.
pub fn bp_last_token_posterior(grammar: &GrammarInstance, window: &ObservationWindow) -> Result<ConditionalDistribution> {
    let mut ws = BpWorkspace::new();
    last_token_posterior_with(grammar, window, &mut ws)
}

pub fn last_token_posterior_with(
    grammar: &GrammarInstance,
    window: &ObservationWindow,
    ws: &mut BpWorkspace,
) -> Result<ConditionalDistribution> {
    let p = grammar.params();
    let ev = Evidence::from_window(p, window)?;
    node_posterior_with(grammar, &ev, TreeNode::leaf(p.depth, -1), ws)
}

/// Joint law of a few nodes, row-major with the first node most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub nodes: Vec<TreeNode>,
    pub v: usize,
    pub probs: Vec<f64>,
}

impl JointTable {
    pub fn get(&self, values: &[Symbol]) -> f64 {
        self.probs[values.iter().fold(0usize, |acc, &x| acc * self.v + x as usize)]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Marginal of the node at `axis`.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let k = self.nodes.len();
        let stride = self.v.pow((k - 1 - axis) as u32);
        let mut out = vec![0.0; self.v];
        for (i, p) in self.probs.iter().enumerate() {
            out[(i / stride) % self.v] += p;
        }
        out
    }
}

/// Exact joint distribution of `nodes`, by the chain rule over posteriors.
pub fn exact_marginal(grammar: &GrammarInstance, nodes: &[TreeNode]) -> Result<JointTable> {
    let p = grammar.params();
    let v = p.v as usize;
    if nodes.is_empty() {
        return Err(RhmError::Empty("exact_marginal needs at least one node".into()));
    }
    let size = (v as u64)
        .checked_pow(nodes.len() as u32)
        .filter(|&n| n <= MAX_JOINT_TABLE as u64)
        .ok_or_else(|| {
            RhmError::Size(format!(
                "joint table v^{} exceeds {MAX_JOINT_TABLE} entries",
                nodes.len()
            ))
        })? as usize;
    for n in nodes {
        n.index(p.s, p.depth)?;
    }
    let mut probs = vec![0.0; size];
    let mut ev = Evidence::new(p);
    let mut ws = BpWorkspace::new();
    fill_joint(grammar, nodes, &mut ev, &mut ws, 1.0, 0, &mut probs)?;
    Ok(JointTable {
        nodes: nodes.to_vec(),
        v,
        probs,
    })
}

fn fill_joint(
    grammar: &GrammarInstance,
    nodes: &[TreeNode],
    ev: &mut Evidence,
    ws: &mut BpWorkspace,
    weight: f64,
    prefix: usize,
    out: &mut [f64],
) -> Result<()> {
    let v = grammar.params().v as usize;
    let (head, rest) = (nodes[0], &nodes[1..]);
    let previous = ev.get(head)?;
    let post = node_posterior_ws(grammar, ev, head, ws)?;
    for (x, &px) in post.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let idx = prefix * v + x;
        if rest.is_empty() {
            out[idx] = weight * px;
        } else {
            ev.set(head, x as Symbol)?;
            fill_joint(grammar, rest, ev, ws, weight * px, idx, out)?;
        }
    }
    match previous {
        Some(x) => ev.set(head, x)?,
        None => ev.clear(head)?,
    }
    Ok(())
}

/// Visit every derivation of the grammar with its probability. The callback
/// receives the symbols of every level. Fails if there are more than `cap`.
pub fn for_each_derivation<F>(grammar: &GrammarInstance, cap: u64, mut visit: F) -> Result<()>
where
    F: FnMut(&[Vec<Symbol>], f64),
{
    let p = grammar.params();
    let count = p.derivation_count().filter(|&c| c <= cap).ok_or_else(|| {
        RhmError::Size(format!(
            "{} derivations exceed the enumeration cap {cap}; use belief propagation",
            p.derivation_count().map_or("too many".to_string(), |c| c.to_string())
        ))
    })?;
    let _ = count;
    let (m, s) = (p.m, p.s as usize);
    let prob = crate::generator::uniform_derivation_probability(grammar);
    let internal = p.internal_nodes() as usize;
    let mut levels: Vec<Vec<Symbol>> = (0..=p.depth).map(|l| vec![0; s.pow(l)]).collect();
    let mut choice = vec![0u32; internal];
    for root in 0..p.v {
        choice.iter_mut().for_each(|c| *c = 0);
        loop {
            levels[0][0] = root;
            let mut slot = 0;
            for l in 0..p.depth as usize {
                let (upper, lower) = levels.split_at_mut(l + 1);
                for (i, &sym) in upper[l].iter().enumerate() {
                    lower[0][i * s..(i + 1) * s].copy_from_slice(grammar.tuple(l as u32 + 1, sym, choice[slot]));
                    slot += 1;
                }
            }
            visit(&levels, prob);
            // odometer over rule choices
            let mut k = 0;
            while k < internal {
                choice[k] += 1;
                if choice[k] < m {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == internal {
                break;
            }
        }
    }
    Ok(())
}

/// `P(X_{-1} | window)` by enumerating every derivation. Validation oracle.
pub fn brute_force_posterior(
    grammar: &GrammarInstance,
    window: &ObservationWindow,
    cap: u64,
) -> Result<ConditionalDistribution> {
    let p = grammar.params();
    let d = p.seq_len();
    if window.n() > d {
        return Err(RhmError::Index(format!("window size {} > sequence length {d}", window.n())));
    }
    let ctx = window.context();
    let start = d - 1 - ctx.len();
    let mut weights = vec![0.0; p.v as usize];
    for_each_derivation(grammar, cap, |levels, prob| {
        let leaves = levels.last().unwrap();
        if &leaves[start..d - 1] == ctx {
            weights[leaves[d - 1] as usize] += prob;
        }
    })?;
    ConditionalDistribution::from_weights(weights)
}

/// Mean cross-entropy with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    pub level: u32,
    pub loss: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Test loss of the exact `s^ℓ`-gram predictor: mean of
/// `-log P(x_{-1} | x_{-s^ℓ} .. x_{-2})`. Level 0 is the random-choice loss `log v`.
pub fn ngram_loss(grammar: &GrammarInstance, level: u32, test: &Dataset) -> Result<LossEstimate> {
    let p = grammar.params();
    if level > p.depth {
        return Err(RhmError::Index(format!("level {level} > depth {}", p.depth)));
    }
    if test.is_empty() {
        return Err(RhmError::Empty("ngram_loss needs a non-empty test set".into()));
    }
    if level == 0 {
        return Ok(LossEstimate {
            level,
            loss: (p.v as f64).ln(),
            stderr: 0.0,
            n: test.len(),
        });
    }
    let n = (p.s as usize).pow(level);
    let mut ws = BpWorkspace::new();
    let mut stats = RunningMean::default();
    for seq in test.sequences() {
        let window = ObservationWindow::from_sequence(seq, n)?;
        let post = last_token_posterior_with(grammar, &window, &mut ws)?;
        stats.push(-post.prob(seq[seq.len() - 1]).ln());
    }
    Ok(LossEstimate {
        level,
        loss: stats.mean(),
        stderr: stats.stderr(),
        n: stats.count,
    })
}

/// `ngram_loss` for every level `0..=L` on the same test set.
pub fn ngram_ladder(grammar: &GrammarInstance, test: &Dataset) -> Result<Vec<LossEstimate>> {
    (0..=grammar.params().depth)
        .map(|l| ngram_loss(grammar, l, test))
        .collect()
}

/// Expected `s^ℓ`-gram loss under the exact sequence distribution (by
/// enumeration, small grammars only). Level 0 returns `log v`.
pub fn expected_ngram_loss(grammar: &GrammarInstance, level: u32, cap: u64) -> Result<f64> {
    let p = grammar.params();
    if level == 0 {
        return Ok((p.v as f64).ln());
    }
    let n = (p.s as usize).pow(level);
    let mut ws = BpWorkspace::new();
    let mut total = 0.0;
    let mut failure = None;
    for_each_derivation(grammar, cap, |levels, prob| {
        let leaves = levels.last().unwrap();
        let window = ObservationWindow::from_sequence(leaves, n).expect("window fits");
        match last_token_posterior_with(grammar, &window, &mut ws) {
            Ok(post) => total -= prob * post.prob(leaves[leaves.len() - 1]).ln(),
            Err(e) => failure = Some(e),
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Streaming mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMean {
    pub count: usize,
    mean: f64,
    m2: f64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::sample_grammar;

    fn grammar(v: u32, m: u32, s: u32, l: u32, seed: u64) -> GrammarInstance {
        sample_grammar(&RhmParams::new(v, m, s, l, seed).unwrap()).unwrap()
    }

    #[test]
    fn empty_window_gives_the_unconditional_marginal() {
        let g = grammar(3, 2, 2, 2, 4);
        let post = bp_last_token_posterior(&g, &ObservationWindow::empty()).unwrap();
        let marg = exact_marginal(&g, &[TreeNode::leaf(2, -1)]).unwrap();
        for (a, b) in post.probs().iter().zip(&marg.probs) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_density_marginal_is_uniform() {
        let g = grammar(4, 4, 2, 3, 2);
        let marg = exact_marginal(&g, &[TreeNode::leaf(3, 5)]).unwrap();
        for p in &marg.probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn impossible_context_is_an_error() {
        let g = grammar(4, 1, 2, 2, 1);
        // with m = 1 only 4 of 16 pairs occur at the last tuple
        let mut found = false;
        for a in 0..4 {
            let w = ObservationWindow::new(vec![0, 0, a]);
            if let Err(e) = bp_last_token_posterior(&g, &w) {
                assert_eq!(e, RhmError::ImpossibleContext);
                assert_eq!(brute_force_posterior(&g, &w, 1000).unwrap_err(), RhmError::ImpossibleContext);
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn single_rule_grammar_is_deterministic() {
        let g = grammar(5, 1, 2, 2, 3);
        let mut found = 0;
        for_each_derivation(&g, 100, |levels, _| {
            let leaves = &levels[2];
            let w = ObservationWindow::from_sequence(leaves, 4).unwrap();
            let post = brute_force_posterior(&g, &w, 100).unwrap();
            assert_eq!(post.prob(leaves[3]), 1.0);
            found += 1;
        })
        .unwrap();
        assert_eq!(found, 5);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let g = grammar(16, 4, 2, 4, 0);
        let err = brute_force_posterior(&g, &ObservationWindow::empty(), DEFAULT_ENUMERATION_CAP).unwrap_err();
        assert!(matches!(err, RhmError::Size(ref msg) if msg.contains("belief propagation")));
    }

    #[test]
    fn joint_table_guards_size() {
        let g = grammar(16, 4, 2, 4, 0);
        let nodes: Vec<_> = (0..6).map(|i| TreeNode::leaf(4, i)).collect();
        assert!(matches!(exact_marginal(&g, &nodes), Err(RhmError::Size(_))));
        assert!(exact_marginal(&g, &[]).is_err());
    }

    #[test]
    fn sibling_pair_depends_only_on_the_parent() {
        let g = grammar(5, 3, 2, 3, 8);
        let pair = exact_marginal(&g, &[TreeNode::leaf(3, 6), TreeNode::leaf(3, 7)]).unwrap();
        let parent = exact_marginal(&g, &[TreeNode::new(2, 3)]).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let expect = match g.parse_tuple(3, &[a, b]) {
                    Some((mu, _)) => parent.probs[mu as usize] / 3.0,
                    None => 0.0,
                };
                assert!((pair.get(&[a, b]) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ladder_level_zero_is_log_v() {
        let g = grammar(16, 4, 2, 3, 0);
        let test = crate::dataset::generate_dataset(&g, 10, false, 0);
        let l0 = ngram_loss(&g, 0, &test).unwrap();
        assert_eq!(l0.loss, 16f64.ln());
        let empty = crate::dataset::generate_dataset(&g, 0, false, 0);
        assert!(matches!(ngram_loss(&g, 1, &empty), Err(RhmError::Empty(_))));
    }

    #[test]
    fn running_mean_matches_direct_formulas() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let mut r = RunningMean::default();
        xs.iter().for_each(|&x| r.push(x));
        assert!((r.mean() - 3.5).abs() < 1e-15);
        assert!((r.variance() - 7.0).abs() < 1e-12);
    }
}
