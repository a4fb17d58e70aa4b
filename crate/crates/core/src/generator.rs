//! Sampling derivations, their probabilities, parsing, and the two tree
//! transforms used to probe representations (variable replacement and rule
//! replacement).

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::grammar::{encode_tuple, GrammarInstance};
use crate::params::{Symbol, TreeNode};
use crate::rng::Stream;

/// A complete derivation: the symbols at every level and the rule chosen at
/// every internal node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationTree {
    /// `symbols[ℓ]` holds the `s^ℓ` symbols of level `ℓ`.
    pub symbols: Vec<Vec<Symbol>>,
    /// `rules[ℓ][i]` is the rule expanding node `(ℓ, i)`, for `ℓ < L`.
    pub rules: Vec<Vec<u32>>,
}

impl DerivationTree {
    pub fn depth(&self) -> u32 {
        self.rules.len() as u32
    }

    /// The observable tokens.
    pub fn leaves(&self) -> &[Symbol] {
        self.symbols.last().expect("tree has at least one level")
    }

    pub fn root(&self) -> Symbol {
        self.symbols[0][0]
    }

    pub fn node_count(&self) -> usize {
        self.symbols.iter().map(Vec::len).sum()
    }

    pub fn symbol_at(&self, level: u32, index: usize) -> Symbol {
        self.symbols[level as usize][index]
    }
}

/// Sample a derivation top-down: the root uniformly, then one uniform rule
/// per node, level by level and left to right.
pub fn sample_derivation(grammar: &GrammarInstance, rng: &mut Stream) -> DerivationTree {
    let p = grammar.params();
    let s = p.s as usize;
    let mut symbols = Vec::with_capacity(p.depth as usize + 1);
    let mut rules = Vec::with_capacity(p.depth as usize);
    symbols.push(vec![rng.below(p.v as u64) as Symbol]);
    for level in 0..p.depth {
        let parents = &symbols[level as usize];
        let mut chosen = Vec::with_capacity(parents.len());
        let mut next = Vec::with_capacity(parents.len() * s);
        for &sym in parents {
            let r = rng.below(p.m as u64) as u32;
            chosen.push(r);
            next.extend_from_slice(grammar.tuple(level + 1, sym, r));
        }
        rules.push(chosen);
        symbols.push(next);
    }
    DerivationTree { symbols, rules }
}

/// Sample only the leaves into `out` (length `s^L`), consuming the stream
/// exactly as [`sample_derivation`] does.
pub fn sample_leaves_into(
    grammar: &GrammarInstance,
    rng: &mut Stream,
    out: &mut [Symbol],
    scratch: &mut Vec<Symbol>,
) {
    let p = grammar.params();
    let s = p.s as usize;
    debug_assert_eq!(out.len(), p.seq_len());
    scratch.clear();
    scratch.push(rng.below(p.v as u64) as Symbol);
    let mut width = 1;
    for level in 0..p.depth {
        // expand in place from the back so parents are read before overwritten
        let mut next = std::mem::take(scratch);
        next.resize(width * s, 0);
        let parents: Vec<Symbol> = next[..width].to_vec();
        for (i, &sym) in parents.iter().enumerate() {
            let r = rng.below(p.m as u64) as u32;
            next[i * s..(i + 1) * s].copy_from_slice(grammar.tuple(level + 1, sym, r));
        }
        *scratch = next;
        width *= s;
    }
    out.copy_from_slice(&scratch[..width]);
}

/// Check that the tree has the right shape and every expansion is a rule of the grammar.
pub fn validate_tree(grammar: &GrammarInstance, tree: &DerivationTree) -> Result<()> {
    let p = grammar.params();
    let s = p.s as usize;
    if tree.symbols.len() != p.depth as usize + 1 || tree.rules.len() != p.depth as usize {
        return Err(RhmError::Validation(format!(
            "tree has {} levels, grammar depth is {}",
            tree.symbols.len().saturating_sub(1),
            p.depth
        )));
    }
    for level in 0..=p.depth as usize {
        if tree.symbols[level].len() != s.pow(level as u32) {
            return Err(RhmError::Validation(format!("level {level} has wrong width")));
        }
        if let Some(bad) = tree.symbols[level].iter().find(|&&x| x >= p.v) {
            return Err(RhmError::Validation(format!("symbol {bad} at level {level} >= v")));
        }
    }
    for level in 0..p.depth as usize {
        if tree.rules[level].len() != tree.symbols[level].len() {
            return Err(RhmError::Validation(format!("rule row {level} has wrong width")));
        }
        for (i, (&sym, &r)) in tree.symbols[level].iter().zip(&tree.rules[level]).enumerate() {
            if r >= p.m {
                return Err(RhmError::Validation(format!("rule index {r} >= m at ({level}, {i})")));
            }
            let kids = &tree.symbols[level + 1][i * s..(i + 1) * s];
            if kids != grammar.tuple(level as u32 + 1, sym, r) {
                return Err(RhmError::Validation(format!(
                    "children of ({level}, {i}) do not match rule {r} of symbol {sym}"
                )));
            }
        }
    }
    Ok(())
}

/// Probability of the derivation, `(1/v) * (1/m)^(internal nodes)`. By
/// unambiguity this is also the probability of its leaf sequence.
pub fn sequence_probability(grammar: &GrammarInstance, tree: &DerivationTree) -> Result<f64> {
    validate_tree(grammar, tree)?;
    Ok(uniform_derivation_probability(grammar))
}

pub(crate) fn uniform_derivation_probability(grammar: &GrammarInstance) -> f64 {
    let p = grammar.params();
    let log_p = -(p.v as f64).ln() - p.internal_nodes() as f64 * (p.m as f64).ln();
    log_p.exp()
}

/// Recover the unique derivation of a leaf sequence by bottom-up tuple lookup.
pub fn parse(grammar: &GrammarInstance, leaves: &[Symbol]) -> Result<DerivationTree> {
    let p = grammar.params();
    let s = p.s as usize;
    if leaves.len() != p.seq_len() {
        return Err(RhmError::Validation(format!(
            "sequence length {} != s^L = {}",
            leaves.len(),
            p.seq_len()
        )));
    }
    let mut symbols = vec![leaves.to_vec()];
    let mut rules = Vec::with_capacity(p.depth as usize);
    for level in (1..=p.depth).rev() {
        let row = symbols.last().unwrap();
        let mut parents = Vec::with_capacity(row.len() / s);
        let mut chosen = Vec::with_capacity(row.len() / s);
        for (i, tuple) in row.chunks(s).enumerate() {
            let (parent, r) = grammar.parse_code(level, encode_tuple(tuple, p.v)).ok_or_else(|| {
                RhmError::Validation(format!(
                    "tuple {tuple:?} at level {level}, position {i} is not produced by any rule"
                ))
            })?;
            parents.push(parent);
            chosen.push(r);
        }
        symbols.push(parents);
        rules.push(chosen);
    }
    symbols.reverse();
    rules.reverse();
    Ok(DerivationTree { symbols, rules })
}

/// Which of the two probing transforms was applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    /// Replace the variable with another symbol and resample its subtree.
    VariableReplacement,
    /// Keep the variable, switch to another of its rules and resample below.
    RuleReplacement,
}

impl TransformKind {
    pub fn tag(&self) -> &'static str {
        match self {
            TransformKind::VariableReplacement => "S",
            TransformKind::RuleReplacement => "R",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "S" => Ok(TransformKind::VariableReplacement),
            "R" => Ok(TransformKind::RuleReplacement),
            other => Err(RhmError::Format(format!("unknown transform tag {other:?}"))),
        }
    }
}

/// Output of a transform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transformed {
    pub tree: DerivationTree,
    /// Leaf indices that may differ from the original.
    pub leaf_span: Range<usize>,
    /// The root was replaced, so the whole sequence was resampled.
    pub whole_tree: bool,
    /// Every expansion of the new tree is a grammar rule. Variable
    /// replacement below the root changes a child of the parent's rule, so
    /// the parent link is generally no longer a rule of the grammar.
    pub consistent: bool,
}

fn subtree_leaf_span(s: usize, depth: u32, level: u32, index: usize) -> Range<usize> {
    let w = s.pow(depth - level);
    index * w..(index + 1) * w
}

/// Resample rules below `(level, index)` given the symbol already in place.
fn resample_subtree(
    grammar: &GrammarInstance,
    tree: &mut DerivationTree,
    level: u32,
    index: usize,
    rng: &mut Stream,
) {
    let p = grammar.params();
    let s = p.s as usize;
    let mut lo = index;
    let mut hi = index + 1;
    for l in level..p.depth {
        for i in lo..hi {
            let sym = tree.symbols[l as usize][i];
            let r = rng.below(p.m as u64) as u32;
            tree.rules[l as usize][i] = r;
            tree.symbols[l as usize + 1][i * s..(i + 1) * s]
                .copy_from_slice(grammar.tuple(l + 1, sym, r));
        }
        lo *= s;
        hi *= s;
    }
}

/// Variable replacement at `node`: the symbol is replaced by a uniform draw
/// over the other `v - 1` symbols and its whole subtree is resampled.
pub fn transform_variable_replacement(
    grammar: &GrammarInstance,
    tree: &DerivationTree,
    node: TreeNode,
    rng: &mut Stream,
) -> Result<Transformed> {
    let p = grammar.params();
    let idx = node.index(p.s, p.depth)?;
    let mut out = tree.clone();
    let old = tree.symbols[node.level as usize][idx];
    let new = rng.below_excluding(p.v as u64, old as u64) as Symbol;
    out.symbols[node.level as usize][idx] = new;
    resample_subtree(grammar, &mut out, node.level, idx, rng);
    let mut consistent = true;
    if node.level > 0 {
        let s = p.s as usize;
        let parent = idx / s;
        let plevel = node.level - 1;
        let psym = out.symbols[plevel as usize][parent];
        let kids = &out.symbols[node.level as usize][parent * s..(parent + 1) * s];
        match grammar.parse_tuple(node.level, kids) {
            Some((sym, r)) if sym == psym => out.rules[plevel as usize][parent] = r,
            _ => consistent = false,
        }
    }
    Ok(Transformed {
        tree: out,
        leaf_span: subtree_leaf_span(p.s as usize, p.depth, node.level, idx),
        whole_tree: node.level == 0,
        consistent,
    })
}

/// Rule replacement at internal `node`: the symbol stays, its rule is
/// replaced by a uniform draw over the other `m - 1` rules and everything
/// below the new children is resampled.
pub fn transform_rule_replacement(
    grammar: &GrammarInstance,
    tree: &DerivationTree,
    node: TreeNode,
    rng: &mut Stream,
) -> Result<Transformed> {
    let p = grammar.params();
    if node.level >= p.depth {
        return Err(RhmError::Index(format!(
            "rule replacement needs an internal node, got level {} (leaves are level {})",
            node.level, p.depth
        )));
    }
    if p.m < 2 {
        return Err(RhmError::NoAlternativeRule);
    }
    let idx = node.index(p.s, p.depth)?;
    let s = p.s as usize;
    let mut out = tree.clone();
    let (l, sym) = (node.level as usize, tree.symbols[node.level as usize][idx]);
    let r = rng.below_excluding(p.m as u64, tree.rules[l][idx] as u64) as u32;
    out.rules[l][idx] = r;
    out.symbols[l + 1][idx * s..(idx + 1) * s].copy_from_slice(grammar.tuple(node.level + 1, sym, r));
    for k in 0..s {
        resample_subtree(grammar, &mut out, node.level + 1, idx * s + k, rng);
    }
    Ok(Transformed {
        tree: out,
        leaf_span: subtree_leaf_span(s, p.depth, node.level, idx),
        whole_tree: node.level == 0,
        consistent: true,
    })
}

pub fn apply_transform(
    kind: TransformKind,
    grammar: &GrammarInstance,
    tree: &DerivationTree,
    node: TreeNode,
    rng: &mut Stream,
) -> Result<Transformed> {
    match kind {
        TransformKind::VariableReplacement => transform_variable_replacement(grammar, tree, node, rng),
        TransformKind::RuleReplacement => transform_rule_replacement(grammar, tree, node, rng),
    }
}
