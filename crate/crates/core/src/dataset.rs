//! Datasets of sampled sequences and their file formats.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "RHMDATA\0"
//! version      u32      1
//! v m s L      4 x u32
//! grammar seed u64
//! data seed    u64
//! n            u64
//! d            u32
//! params hash  16 ASCII hex bytes
//! tokens       n * d x u32, sequence-major
//! ```

use std::io::{Read, Write};

use crate::error::{Result, RhmError};
use crate::generator::{sample_derivation, sample_leaves_into, DerivationTree, TransformKind};
use crate::grammar::GrammarInstance;
use crate::params::{RhmParams, Symbol, TreeNode};
use crate::rng::{domain, Stream};

pub const DATASET_MAGIC: &[u8; 8] = b"RHMDATA\0";
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// `n` token sequences of length `d`, with provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub params: RhmParams,
    pub seed: u64,
    tokens: Vec<Symbol>,
    trees: Option<Vec<DerivationTree>>,
}

/// Draw `n` i.i.d. sequences. Sequence `k` uses the stream
/// `(seed, DATASET, k)`, so it depends only on `(grammar, seed, k)`.
/// `n = 0` gives an empty dataset.
pub fn generate_dataset(grammar: &GrammarInstance, n: usize, keep_trees: bool, seed: u64) -> Dataset {
    let p = *grammar.params();
    let d = p.seq_len();
    let mut tokens = vec![0; n * d];
    let mut trees = keep_trees.then(|| Vec::with_capacity(n));
    let mut scratch = Vec::new();
    for (k, row) in tokens.chunks_mut(d.max(1)).enumerate() {
        let mut rng = Stream::derive(seed, domain::DATASET, k as u64);
        match trees.as_mut() {
            Some(list) => {
                let tree = sample_derivation(grammar, &mut rng);
                row.copy_from_slice(tree.leaves());
                list.push(tree);
            }
            None => sample_leaves_into(grammar, &mut rng, row, &mut scratch),
        }
    }
    Dataset {
        params: p,
        seed,
        tokens,
        trees,
    }
}

impl Dataset {
    pub fn from_tokens(params: RhmParams, seed: u64, tokens: Vec<Symbol>) -> Result<Self> {
        let d = params.seq_len();
        if tokens.len() % d != 0 {
            return Err(RhmError::Format(format!(
                "{} tokens is not a multiple of the sequence length {d}",
                tokens.len()
            )));
        }
        if let Some(bad) = tokens.iter().find(|&&t| t >= params.v) {
            return Err(RhmError::Format(format!("token {bad} >= v = {}", params.v)));
        }
        Ok(Dataset {
            params,
            seed,
            tokens,
            trees: None,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.params.seq_len()
    }

    pub fn len(&self) -> usize {
        self.tokens.len() / self.seq_len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn sequence(&self, k: usize) -> &[Symbol] {
        let d = self.seq_len();
        &self.tokens[k * d..(k + 1) * d]
    }

    pub fn sequences(&self) -> impl Iterator<Item = &[Symbol]> {
        self.tokens.chunks(self.seq_len())
    }

    pub fn tokens(&self) -> &[Symbol] {
        &self.tokens
    }

    pub fn trees(&self) -> Option<&[DerivationTree]> {
        self.trees.as_deref()
    }

    pub fn params_hash(&self) -> String {
        self.params.hash()
    }

    /// Token at `node` (a leaf) of sequence `k`.
    pub fn token(&self, k: usize, node: TreeNode) -> Result<Symbol> {
        if node.level != self.params.depth {
            return Err(RhmError::Index(format!("node at level {} is not a leaf", node.level)));
        }
        Ok(self.sequence(k)[node.index(self.params.s, self.params.depth)?])
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let p = &self.params;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_FORMAT_VERSION.to_le_bytes())?;
        for x in [p.v, p.m, p.s, p.depth] {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&p.seed.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.seq_len() as u32).to_le_bytes())?;
        w.write_all(self.params_hash().as_bytes())?;
        let mut buf = Vec::with_capacity(self.tokens.len() * 4);
        for t in &self.tokens {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_binary(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(RhmError::Format("not an RHM dataset file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DATASET_FORMAT_VERSION {
            return Err(RhmError::Format(format!(
                "dataset version {version} (expected {DATASET_FORMAT_VERSION})"
            )));
        }
        let (v, m, s, depth) = (read_u32(&mut r)?, read_u32(&mut r)?, read_u32(&mut r)?, read_u32(&mut r)?);
        let gseed = read_u64(&mut r)?;
        let params = RhmParams::new(v, m, s, depth, gseed)?;
        let seed = read_u64(&mut r)?;
        let n = read_u64(&mut r)? as usize;
        let d = read_u32(&mut r)? as usize;
        if d != params.seq_len() {
            return Err(RhmError::Format(format!("header length {d} != s^L")));
        }
        let mut hash = [0u8; 16];
        r.read_exact(&mut hash)?;
        if hash != params.hash().as_bytes() {
            return Err(RhmError::Format("params hash does not match header params".into()));
        }
        let mut raw = vec![0u8; n * d * 4];
        r.read_exact(&mut raw)?;
        let tokens = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Dataset::from_tokens(params, seed, tokens)
    }

    /// CSV export: `#`-prefixed provenance lines, a header row `x0..x{d-1}`,
    /// then one row per sequence.
    pub fn to_csv(&self) -> String {
        let d = self.seq_len();
        let mut out = format!(
            "# version={DATASET_FORMAT_VERSION}\n# params={}\n# params_hash={}\n# seed={}\n# n={}\n",
            self.params.canonical_json(),
            self.params_hash(),
            self.seed,
            self.len()
        );
        let header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for seq in self.sequences() {
            out.push_str(&join_symbols(seq, ","));
            out.push('\n');
        }
        out
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn join_symbols(seq: &[Symbol], sep: &str) -> String {
    seq.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(sep)
}

/// One original/transformed pair for representation probing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformPair {
    pub kind: TransformKind,
    pub level: u32,
    pub position: i64,
    pub original: Vec<Symbol>,
    pub transformed: Vec<Symbol>,
}

pub const PAIRS_HEADER: &str = "transform,level,position,original,transformed";

/// Paired-transform CSV: `transform,level,position,original,transformed`,
/// sequences space-separated inside their field.
pub fn pairs_to_csv(pairs: &[TransformPair], params: &RhmParams, seed: u64) -> String {
    let mut out = format!(
        "# version={DATASET_FORMAT_VERSION}\n# params={}\n# params_hash={}\n# seed={seed}\n{PAIRS_HEADER}\n",
        params.canonical_json(),
        params.hash()
    );
    for p in pairs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.kind.tag(),
            p.level,
            p.position,
            join_symbols(&p.original, " "),
            join_symbols(&p.transformed, " ")
        ));
    }
    out
}

pub fn pairs_from_csv(text: &str) -> Result<Vec<TransformPair>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(h) if h == PAIRS_HEADER => {}
        other => return Err(RhmError::Format(format!("unexpected header {other:?}"))),
    }
    let parse_seq = |f: &str| -> Result<Vec<Symbol>> {
        f.split_whitespace()
            .map(|x| x.parse().map_err(|_| RhmError::Format(format!("bad token {x:?}"))))
            .collect()
    };
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(RhmError::Format(format!("expected 5 fields: {line:?}")));
            }
            Ok(TransformPair {
                kind: TransformKind::from_tag(fields[0])?,
                level: fields[1].parse().map_err(|_| RhmError::Format("bad level".into()))?,
                position: fields[2].parse().map_err(|_| RhmError::Format("bad position".into()))?,
                original: parse_seq(fields[3])?,
                transformed: parse_seq(fields[4])?,
            })
        })
        .collect()
}
