//! Model parameters and addressing of nodes in the fixed tree.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RhmError};

/// Symbols at every level are opaque integers `0..v`.
pub type Symbol = u32;

/// Largest supported sequence length `s^L`.
pub const MAX_SEQUENCE_LEN: u64 = 1 << 24;

/// Parameters of one Random Hierarchy Model.
///
/// `depth` is the tree depth `L`; levels are numbered `0` (root) to `L`
/// (observable tokens).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RhmParams {
    pub v: u32,
    pub m: u32,
    pub s: u32,
    #[serde(rename = "L")]
    pub depth: u32,
    pub seed: u64,
}

impl RhmParams {
    pub fn new(v: u32, m: u32, s: u32, depth: u32, seed: u64) -> Result<Self> {
        let p = RhmParams {
            v,
            m,
            s,
            depth,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v < 2 {
            return Err(RhmError::Parameter(format!("v = {} must be at least 2", self.v)));
        }
        if self.s < 2 {
            return Err(RhmError::Parameter(format!("s = {} must be at least 2", self.s)));
        }
        if self.depth < 1 {
            return Err(RhmError::Parameter("L must be at least 1".into()));
        }
        if self.m < 1 {
            return Err(RhmError::Parameter("m must be at least 1".into()));
        }
        let tuples = checked_pow(self.v as u64, self.s)
            .filter(|&t| t < (1u64 << 62))
            .ok_or_else(|| RhmError::Parameter(format!("v^s = {}^{} overflows", self.v, self.s)))?;
        let used = self.m as u64 * self.v as u64;
        if used > tuples {
            return Err(RhmError::Parameter(format!(
                "unambiguity requires m*v <= v^s, got m*v = {used} > v^s = {tuples}"
            )));
        }
        match checked_pow(self.s as u64, self.depth) {
            Some(d) if d <= MAX_SEQUENCE_LEN => Ok(()),
            _ => Err(RhmError::Parameter(format!(
                "sequence length s^L = {}^{} exceeds {MAX_SEQUENCE_LEN}",
                self.s, self.depth
            ))),
        }
    }

    /// Rule density `f = m / v^(s-1)`.
    pub fn f(&self) -> f64 {
        self.m as f64 / (self.v as f64).powi(self.s as i32 - 1)
    }

    /// Sequence length `d = s^L`.
    pub fn seq_len(&self) -> usize {
        (self.s as usize).pow(self.depth)
    }

    /// Number of nodes at `level`.
    pub fn level_width(&self, level: u32) -> usize {
        (self.s as usize).pow(level)
    }

    /// Number of possible `s`-tuples, `v^s`.
    pub fn tuple_space(&self) -> u64 {
        (self.v as u64).pow(self.s)
    }

    /// Internal nodes of the tree, `(s^L - 1) / (s - 1)`.
    pub fn internal_nodes(&self) -> u64 {
        let s = self.s as u64;
        (s.pow(self.depth) - 1) / (s - 1)
    }

    /// Number of distinct derivations, `v * m^internal_nodes`, or `None` on overflow.
    pub fn derivation_count(&self) -> Option<u64> {
        let n = u32::try_from(self.internal_nodes()).ok()?;
        checked_pow(self.m as u64, n).and_then(|c| c.checked_mul(self.v as u64))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        RhmParams { seed, ..*self }
    }

    /// Canonical one-line JSON of the parameters (fixed key order).
    pub fn canonical_json(&self) -> String {
        format!(
            "{{\"v\":{},\"m\":{},\"s\":{},\"L\":{},\"seed\":{}}}",
            self.v, self.m, self.s, self.depth, self.seed
        )
    }

    /// First 64 bits of SHA-256 over [`canonical_json`](Self::canonical_json), as hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn checked_pow(base: u64, exp: u32) -> Option<u64> {
    let mut acc: u64 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// A variable node of the fixed tree: `level` in `0..=L`, `position`
/// either forward (`0..s^level`) or end-anchored (`-s^level..=-1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeNode {
    pub level: u32,
    pub position: i64,
}

impl TreeNode {
    pub fn new(level: u32, position: i64) -> Self {
        TreeNode { level, position }
    }

    pub fn root() -> Self {
        TreeNode::new(0, 0)
    }

    /// Observable token at `position` in a depth-`depth` tree.
    pub fn leaf(depth: u32, position: i64) -> Self {
        TreeNode::new(depth, position)
    }

    /// Forward index within the level.
    pub fn index(&self, s: u32, depth: u32) -> Result<usize> {
        if self.level > depth {
            return Err(RhmError::Index(format!(
                "level {} exceeds tree depth {depth}",
                self.level
            )));
        }
        let width = (s as i64).pow(self.level);
        let idx = if self.position < 0 {
            width + self.position
        } else {
            self.position
        };
        if idx < 0 || idx >= width {
            return Err(RhmError::Index(format!(
                "position {} out of range at level {} (width {width})",
                self.position, self.level
            )));
        }
        Ok(idx as usize)
    }

    /// The same node with a non-negative position.
    pub fn normalized(&self, s: u32, depth: u32) -> Result<TreeNode> {
        Ok(TreeNode::new(self.level, self.index(s, depth)? as i64))
    }
}

/// Number of parent-child links on the shortest path between two nodes.
pub fn tree_distance(params: &RhmParams, a: TreeNode, b: TreeNode) -> Result<u32> {
    let (s, depth) = (params.s as usize, params.depth);
    let (mut la, mut ia) = (a.level, a.index(params.s, depth)?);
    let (mut lb, mut ib) = (b.level, b.index(params.s, depth)?);
    let mut dist = 0;
    while la > lb {
        ia /= s;
        la -= 1;
        dist += 1;
    }
    while lb > la {
        ib /= s;
        lb -= 1;
        dist += 1;
    }
    while ia != ib {
        ia /= s;
        ib /= s;
        dist += 2;
    }
    Ok(dist)
}

/// Whether one node lies on the root path of the other.
pub fn is_ancestor_pair(params: &RhmParams, a: TreeNode, b: TreeNode) -> Result<bool> {
    let d = tree_distance(params, a, b)?;
    Ok(d == a.level.abs_diff(b.level))
}
