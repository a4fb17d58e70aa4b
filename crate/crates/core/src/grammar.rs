//! Grammar instances and the uniform sampler over constrained rule sets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::params::{RhmParams, Symbol};
use crate::rng::{domain, Stream};

pub const GRAMMAR_FORMAT_VERSION: &str = "rhm-grammar/1";

/// Production rules from level `ℓ - 1` to level `ℓ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelRules {
    /// `children[(symbol * m + rule) * s + k]` is child `k` of that rule.
    children: Vec<Symbol>,
    /// tuple code -> `symbol * m + rule`
    lookup: HashMap<u64, u32>,
}

/// One realization of the model. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarInstance {
    params: RhmParams,
    levels: Vec<LevelRules>,
}

/// Encode an `s`-tuple as an integer in `0..v^s`, first child most significant.
pub fn encode_tuple(tuple: &[Symbol], v: u32) -> u64 {
    tuple.iter().fold(0u64, |acc, &x| acc * v as u64 + x as u64)
}

pub fn decode_tuple(mut code: u64, v: u32, s: u32) -> Vec<Symbol> {
    let mut out = vec![0; s as usize];
    for slot in out.iter_mut().rev() {
        *slot = (code % v as u64) as Symbol;
        code /= v as u64;
    }
    out
}

/// Draw a grammar uniformly among all rule sets obeying the constraints.
///
/// Per level, `m*v` distinct tuple codes are drawn from `0..v^s` by a partial
/// Fisher–Yates shuffle (kept sparse, so memory is `O(m*v)`); symbol `σ`
/// receives draws `σ*m .. (σ+1)*m` in draw order. Level `ℓ` uses the stream
/// `(seed, GRAMMAR, ℓ)`.
pub fn sample_grammar(params: &RhmParams) -> Result<GrammarInstance> {
    params.validate()?;
    let (v, m, s) = (params.v, params.m, params.s);
    let space = params.tuple_space();
    let used = (m * v) as u64;
    let mut levels = Vec::with_capacity(params.depth as usize);
    for level in 1..=params.depth {
        let mut rng = Stream::derive(params.seed, domain::GRAMMAR, level as u64);
        let mut swapped: HashMap<u64, u64> = HashMap::with_capacity(2 * used as usize);
        let mut children = Vec::with_capacity((used * s as u64) as usize);
        for i in 0..used {
            let j = i + rng.below(space - i);
            let at_j = *swapped.get(&j).unwrap_or(&j);
            let at_i = *swapped.get(&i).unwrap_or(&i);
            swapped.insert(j, at_i);
            children.extend(decode_tuple(at_j, v, s));
        }
        levels.push(LevelRules::build(children, v, m, s)?);
    }
    Ok(GrammarInstance {
        params: *params,
        levels,
    })
}

impl LevelRules {
    fn build(children: Vec<Symbol>, v: u32, m: u32, s: u32) -> Result<Self> {
        let mut lookup = HashMap::with_capacity((m * v) as usize);
        for (slot, tuple) in children.chunks(s as usize).enumerate() {
            if let Some(bad) = tuple.iter().find(|&&c| c >= v) {
                return Err(RhmError::Validation(format!("child symbol {bad} >= v = {v}")));
            }
            if lookup.insert(encode_tuple(tuple, v), slot as u32).is_some() {
                return Err(RhmError::Validation(format!(
                    "tuple {tuple:?} produced by two rules (unambiguity violated)"
                )));
            }
        }
        Ok(LevelRules { children, lookup })
    }
}

impl GrammarInstance {
    /// Build from explicit rule tables, `rules[ℓ-1][symbol][rule] = children`.
    pub fn from_rules(params: RhmParams, rules: &[Vec<Vec<Vec<Symbol>>>]) -> Result<Self> {
        params.validate()?;
        let (v, m, s) = (params.v, params.m, params.s);
        if rules.len() != params.depth as usize {
            return Err(RhmError::Validation(format!(
                "expected {} rule levels, found {}",
                params.depth,
                rules.len()
            )));
        }
        let mut levels = Vec::with_capacity(rules.len());
        for (l, table) in rules.iter().enumerate() {
            if table.len() != v as usize {
                return Err(RhmError::Validation(format!(
                    "level {}: expected {v} symbols, found {}",
                    l + 1,
                    table.len()
                )));
            }
            let mut children = Vec::with_capacity((v * m * s) as usize);
            for (sym, list) in table.iter().enumerate() {
                if list.len() != m as usize {
                    return Err(RhmError::Validation(format!(
                        "level {}, symbol {sym}: expected {m} rules, found {}",
                        l + 1,
                        list.len()
                    )));
                }
                for tuple in list {
                    if tuple.len() != s as usize {
                        return Err(RhmError::Validation(format!(
                            "level {}, symbol {sym}: tuple of length {} (s = {s})",
                            l + 1,
                            tuple.len()
                        )));
                    }
                    children.extend_from_slice(tuple);
                }
            }
            levels.push(LevelRules::build(children, v, m, s)?);
        }
        Ok(GrammarInstance { params, levels })
    }

    pub fn params(&self) -> &RhmParams {
        &self.params
    }

    /// Children of `symbol` (at level `level - 1`) under `rule`, as level-`level` symbols.
    pub fn tuple(&self, level: u32, symbol: Symbol, rule: u32) -> &[Symbol] {
        let s = self.params.s as usize;
        let base = ((symbol * self.params.m + rule) as usize) * s;
        &self.levels[level as usize - 1].children[base..base + s]
    }

    /// All `m` tuples of `symbol`, flattened (`m * s` entries).
    pub fn rules_of(&self, level: u32, symbol: Symbol) -> &[Symbol] {
        let ms = (self.params.m * self.params.s) as usize;
        let base = symbol as usize * ms;
        &self.levels[level as usize - 1].children[base..base + ms]
    }

    /// The flat rule table of a level: `v * m` tuples of `s` children.
    pub fn level_table(&self, level: u32) -> &[Symbol] {
        &self.levels[level as usize - 1].children
    }

    /// The unique `(parent, rule)` producing `tuple` at `level`, if any.
    pub fn parse_tuple(&self, level: u32, tuple: &[Symbol]) -> Option<(Symbol, u32)> {
        self.parse_code(level, encode_tuple(tuple, self.params.v))
    }

    pub fn parse_code(&self, level: u32, code: u64) -> Option<(Symbol, u32)> {
        let slot = *self.levels[level as usize - 1].lookup.get(&code)?;
        Some((slot / self.params.m, slot % self.params.m))
    }

    /// Parent symbol of a tuple code, if the tuple is produced by some rule.
    pub fn parent_of(&self, level: u32, code: u64) -> Option<Symbol> {
        self.parse_code(level, code).map(|(p, _)| p)
    }

    /// Nested rule tables, `rules[ℓ-1][symbol][rule]`.
    pub fn rule_tables(&self) -> Vec<Vec<Vec<Vec<Symbol>>>> {
        let (v, m) = (self.params.v, self.params.m);
        (1..=self.params.depth)
            .map(|l| {
                (0..v)
                    .map(|sym| (0..m).map(|r| self.tuple(l, sym, r).to_vec()).collect())
                    .collect()
            })
            .collect()
    }

    /// Canonical JSON text (compact, fixed key order, trailing newline).
    pub fn to_json(&self) -> String {
        let file = GrammarFile {
            version: GRAMMAR_FORMAT_VERSION.to_string(),
            params: self.params,
            rules: self.rule_tables(),
        };
        let mut text = serde_json::to_string(&file).expect("grammar serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GrammarFile = serde_json::from_str(text)?;
        if file.version != GRAMMAR_FORMAT_VERSION {
            return Err(RhmError::Format(format!(
                "grammar version {} (expected {GRAMMAR_FORMAT_VERSION})",
                file.version
            )));
        }
        Self::from_rules(file.params, &file.rules)
    }
}

#[derive(Serialize, Deserialize)]
struct GrammarFile {
    version: String,
    params: RhmParams,
    rules: Vec<Vec<Vec<Vec<Symbol>>>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn params(v: u32, m: u32, s: u32, l: u32, seed: u64) -> RhmParams {
        RhmParams::new(v, m, s, l, seed).unwrap()
    }

    fn assert_constraints(g: &GrammarInstance) {
        let p = g.params();
        for l in 1..=p.depth {
            let mut seen = HashSet::new();
            for sym in 0..p.v {
                for r in 0..p.m {
                    let t = g.tuple(l, sym, r);
                    assert_eq!(t.len(), p.s as usize);
                    assert!(t.iter().all(|&c| c < p.v));
                    assert!(seen.insert(t.to_vec()), "duplicate tuple {t:?}");
                    assert_eq!(g.parse_tuple(l, t), Some((sym, r)));
                }
            }
            assert_eq!(seen.len(), (p.m * p.v) as usize);
        }
    }

    #[test]
    fn small_grammar_uses_six_of_nine_tuples_per_level() {
        let g = sample_grammar(&params(3, 2, 2, 2, 11)).unwrap();
        assert_eq!(g.rule_tables().len(), 2);
        assert_constraints(&g);
    }

    #[test]
    fn full_density_covers_every_tuple() {
        let g = sample_grammar(&params(4, 4, 2, 1, 5)).unwrap();
        assert_constraints(&g);
        for code in 0..16 {
            assert!(g.parent_of(1, code).is_some());
        }
    }

    #[test]
    fn ambiguous_params_are_rejected() {
        let bad = RhmParams {
            v: 4,
            m: 5,
            s: 2,
            depth: 1,
            seed: 0,
        };
        assert!(matches!(sample_grammar(&bad), Err(RhmError::Parameter(_))));
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let a = sample_grammar(&params(16, 4, 2, 3, 42)).unwrap();
        let b = sample_grammar(&params(16, 4, 2, 3, 42)).unwrap();
        let c = sample_grammar(&params(16, 4, 2, 3, 43)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a, c);
        assert_constraints(&a);
    }

    #[test]
    fn tuple_codes_round_trip() {
        for code in 0..27 {
            assert_eq!(encode_tuple(&decode_tuple(code, 3, 3), 3), code);
        }
        assert_eq!(decode_tuple(5, 4, 2), vec![1, 1]);
    }

    #[test]
    fn json_round_trip_and_layout() {
        let g = sample_grammar(&params(3, 1, 2, 1, 9)).unwrap();
        let text = g.to_json();
        assert!(text.starts_with(
            "{\"version\":\"rhm-grammar/1\",\"params\":{\"v\":3,\"m\":1,\"s\":2,\"L\":1,\"seed\":9},\"rules\":[[["
        ));
        assert!(text.ends_with("]]]]}\n"));
        assert_eq!(GrammarInstance::from_json(&text).unwrap(), g);
    }

    #[test]
    fn from_json_rejects_duplicate_tuples() {
        let text = r#"{"version":"rhm-grammar/1","params":{"v":2,"m":1,"s":2,"L":1,"seed":0},"rules":[[[[0,1]],[[0,1]]]]}"#;
        assert!(matches!(GrammarInstance::from_json(text), Err(RhmError::Validation(_))));
    }

    #[test]
    fn tuple_choice_is_uniform_for_single_rule_grammars() {
        // v=3, m=1, s=2, L=1: symbol 0's tuple is uniform over the 9 tuples.
        let trials = 18_000u64;
        let mut counts = [0u64; 9];
        for seed in 0..trials {
            let g = sample_grammar(&params(3, 1, 2, 1, seed)).unwrap();
            counts[encode_tuple(g.tuple(1, 0, 0), 3) as usize] += 1;
        }
        let p = 1.0 / 9.0;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - trials as f64 * p).abs() < 4.0 * sd, "{counts:?}");
        }
    }
}
