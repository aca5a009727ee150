//! Exact and near-duplicate removal.
//!
//! Exact duplicates share a SHA-256 digest of the whitespace-normalized
//! body. Near duplicates are found with MinHash signatures over word
//! shingles, bucketed by LSH bands and verified against a Jaccard
//! threshold; verified pairs are joined with union-find.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{fnv1a64, from_hex, sha256, splitmix64, to_hex};
use crate::par::Executor;

pub const DEFAULT_NUM_PERM: usize = 128;
pub const DEFAULT_SHINGLE_WIDTH: usize = 5;
pub const DEFAULT_SEED: u64 = 0x7e5f_0a9e_d0c5_eed1;
pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const DEFAULT_BANDS: usize = 16;
pub const DEFAULT_ROWS: usize = 8;
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("body has fewer than {shingle_width} words")]
    BodyTooShort { shingle_width: usize },
    #[error("signatures are not comparable: {0}")]
    IncompatibleSignatures(String),
    #[error("invalid dedup parameters: {0}")]
    InvalidParams(String),
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentFingerprint(pub [u8; 32]);

impl fmt::Debug for ContentFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentFingerprint({})", to_hex(&self.0))
    }
}

impl fmt::Display for ContentFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.0))
    }
}

impl Serialize for ContentFingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_hex(&self.0))
    }
}

impl<'de> Deserialize<'de> for ContentFingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = from_hex(&s).filter(|b| b.len() == 32).ok_or_else(|| serde::de::Error::custom("bad digest"))?;
        let mut out = [0u8; 32];
        out.copy_from_slice(&bytes);
        Ok(ContentFingerprint(out))
    }
}

fn normalized_words(body: &str) -> impl Iterator<Item = &str> {
    body.split_whitespace()
}

/// SHA-256 over the body with whitespace runs collapsed to single spaces.
pub fn exact_fingerprint(body: &str) -> ContentFingerprint {
    let joined = normalized_words(body).collect::<Vec<_>>().join(" ");
    ContentFingerprint(sha256(joined.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinHashParams {
    pub num_perm: usize,
    pub shingle_width: usize,
    pub seed: u64,
}

impl Default for MinHashParams {
    fn default() -> Self {
        MinHashParams { num_perm: DEFAULT_NUM_PERM, shingle_width: DEFAULT_SHINGLE_WIDTH, seed: DEFAULT_SEED }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub shingle_width: usize,
    pub seed: u64,
}

/// Distinct word w-gram shingles, hashed.
pub fn shingle_hashes(body: &str, width: usize) -> Vec<u64> {
    let words: Vec<&str> = normalized_words(body).collect();
    if width == 0 || words.len() < width {
        return Vec::new();
    }
    let mut out: Vec<u64> = words.windows(width).map(|w| fnv1a64(w.join(" ").as_bytes())).collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn permutation_keys(params: &MinHashParams) -> Vec<u64> {
    (0..params.num_perm as u64).map(|i| splitmix64(params.seed ^ splitmix64(i))).collect()
}

pub fn minhash_signature(body: &str, params: &MinHashParams) -> Result<MinHashSignature, DedupError> {
    if params.num_perm == 0 || params.shingle_width == 0 {
        return Err(DedupError::InvalidParams("num_perm and shingle_width must be positive".into()));
    }
    let shingles = shingle_hashes(body, params.shingle_width);
    if shingles.is_empty() {
        return Err(DedupError::BodyTooShort { shingle_width: params.shingle_width });
    }
    Ok(signature_from_shingles(&shingles, params))
}

fn signature_from_shingles(shingles: &[u64], params: &MinHashParams) -> MinHashSignature {
    let keys = permutation_keys(params);
    let mut values = vec![u64::MAX; keys.len()];
    for &s in shingles {
        for (v, &key) in values.iter_mut().zip(&keys) {
            let h = splitmix64(s ^ key);
            if h < *v {
                *v = h;
            }
        }
    }
    MinHashSignature { values, shingle_width: params.shingle_width, seed: params.seed }
}

/// Fraction of agreeing signature components.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, DedupError> {
    if a.values.len() != b.values.len() {
        return Err(DedupError::IncompatibleSignatures(format!("k {} vs {}", a.values.len(), b.values.len())));
    }
    if a.shingle_width != b.shingle_width {
        return Err(DedupError::IncompatibleSignatures(format!(
            "shingle width {} vs {}",
            a.shingle_width, b.shingle_width
        )));
    }
    if a.seed != b.seed {
        return Err(DedupError::IncompatibleSignatures("seed mismatch".into()));
    }
    if a.values.is_empty() {
        return Err(DedupError::IncompatibleSignatures("empty signatures".into()));
    }
    let agree = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / a.values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepPolicy {
    #[default]
    Earliest,
    Longest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// Banded locality-sensitive hashing.
    #[default]
    Lsh,
    /// Verify every pair. Quadratic; for small corpora and testing.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub minhash: MinHashParams,
    pub threshold: f64,
    pub bands: usize,
    pub rows: usize,
    pub keep: KeepPolicy,
    pub candidates: CandidateMode,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            minhash: MinHashParams::default(),
            threshold: DEFAULT_THRESHOLD,
            bands: DEFAULT_BANDS,
            rows: DEFAULT_ROWS,
            keep: KeepPolicy::default(),
            candidates: CandidateMode::default(),
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), DedupError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(DedupError::InvalidParams(format!("threshold {} outside (0, 1]", self.threshold)));
        }
        if self.bands == 0 || self.rows == 0 || self.bands * self.rows != self.minhash.num_perm {
            return Err(DedupError::InvalidParams(format!(
                "bands ({}) x rows ({}) must equal num_perm ({})",
                self.bands, self.rows, self.minhash.num_perm
            )));
        }
        if self.minhash.shingle_width == 0 {
            return Err(DedupError::InvalidParams("shingle_width must be positive".into()));
        }
        Ok(())
    }

    pub fn header(&self) -> IndexHeader {
        IndexHeader {
            version: INDEX_FORMAT_VERSION,
            num_perm: self.minhash.num_perm,
            shingle_width: self.minhash.shingle_width,
            seed: self.minhash.seed,
            bands: self.bands,
            rows: self.rows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub version: u32,
    pub num_perm: usize,
    pub shingle_width: usize,
    pub seed: u64,
    pub bands: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub ingest: u64,
    pub chars: usize,
    pub fingerprint: ContentFingerprint,
    /// `None` when the body was too short to shingle.
    pub signature: Option<Vec<u64>>,
    /// Entries loaded from an earlier corpus; never reported as kept.
    #[serde(default, skip_serializing)]
    pub prior: bool,
}

/// Fingerprints and signatures for a set of documents, in ingest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupIndex {
    pub header: IndexHeader,
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupOutcome {
    /// Surviving ids of this run, in ingest order.
    pub kept: Vec<String>,
    /// Representative id → all member ids (representative first), for
    /// clusters with at least two members.
    pub clusters: BTreeMap<String, Vec<String>>,
    /// Removed id → representative id.
    pub removed: BTreeMap<String, String>,
    pub removed_exact: usize,
    pub removed_near: usize,
    /// Documents that skipped near-duplicate detection.
    pub too_short: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn agreement(a: &[u64], b: &[u64]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

impl DedupIndex {
    pub fn new(header: IndexHeader) -> Self {
        DedupIndex { header, entries: Vec::new() }
    }

    /// Fingerprint and sign `docs` (ingest order = slice order).
    pub fn build<S: AsRef<str> + Sync>(docs: &[(String, S)], cfg: &DedupConfig, exec: &Executor) -> Self {
        Self::build_at(docs, 0, cfg, exec)
    }

    /// Partial index for a slice that starts at global ingest position
    /// `first`. Partials built this way [`merge`](Self::merge) into the
    /// index of the whole sequence in any order.
    pub fn build_at<S: AsRef<str> + Sync>(
        docs: &[(String, S)],
        first: u64,
        cfg: &DedupConfig,
        exec: &Executor,
    ) -> Self {
        let mut index = DedupIndex::new(cfg.header());
        index.push_from(first, docs, cfg, exec);
        index
    }

    /// Append documents after the current entries.
    pub fn extend<S: AsRef<str> + Sync>(&mut self, docs: &[(String, S)], cfg: &DedupConfig, exec: &Executor) {
        let base = self.entries.iter().map(|e| e.ingest + 1).max().unwrap_or(0);
        self.push_from(base, docs, cfg, exec);
    }

    fn push_from<S: AsRef<str> + Sync>(&mut self, base: u64, docs: &[(String, S)], cfg: &DedupConfig, exec: &Executor) {
        let params = cfg.minhash;
        let new = exec.map_indexed(docs, |i, (id, body)| {
            let body = body.as_ref();
            IndexEntry {
                id: id.clone(),
                ingest: base + i as u64,
                chars: body.chars().count(),
                fingerprint: exact_fingerprint(body),
                signature: minhash_signature(body, &params).ok().map(|s| s.values),
                prior: false,
            }
        });
        self.entries.extend(new);
    }

    /// Combine two partial indexes. Entries are ordered by ingest index,
    /// so the result does not depend on argument order.
    pub fn merge(mut self, other: DedupIndex) -> Result<DedupIndex, DedupError> {
        if self.header != other.header {
            return Err(DedupError::IncompatibleSignatures(format!(
                "index headers differ: {:?} vs {:?}",
                self.header, other.header
            )));
        }
        self.entries.extend(other.entries);
        self.entries.sort_by(|a, b| a.ingest.cmp(&b.ingest).then_with(|| a.id.cmp(&b.id)));
        Ok(self)
    }

    fn candidate_pairs(&self, eligible: &[usize]) -> Vec<(usize, usize)> {
        let rows = self.header.rows;
        let mut buckets: HashMap<(usize, u64), Vec<usize>> = HashMap::new();
        for &i in eligible {
            let sig = self.entries[i].signature.as_ref().expect("eligible entries are signed");
            for (band, chunk) in sig.chunks(rows).enumerate().take(self.header.bands) {
                let mut bytes = Vec::with_capacity(rows * 8);
                for v in chunk {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                buckets.entry((band, fnv1a64(&bytes))).or_default().push(i);
            }
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for members in buckets.values() {
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    pairs.push(if a < b { (a, b) } else { (b, a) });
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Collapse exact duplicates, then join verified near-duplicate pairs.
    pub fn cluster(&self, cfg: &DedupConfig) -> DedupOutcome {
        let n = self.entries.len();
        let mut uf = UnionFind::new(n);
        let mut first_of_digest: HashMap<ContentFingerprint, usize> = HashMap::new();
        let mut exact_first = vec![true; n];
        for (i, e) in self.entries.iter().enumerate() {
            match first_of_digest.get(&e.fingerprint) {
                Some(&j) => {
                    uf.union(i, j);
                    exact_first[i] = false;
                }
                None => {
                    first_of_digest.insert(e.fingerprint, i);
                }
            }
        }
        let eligible: Vec<usize> = (0..n).filter(|&i| exact_first[i] && self.entries[i].signature.is_some()).collect();
        let pairs = match cfg.candidates {
            CandidateMode::Lsh => self.candidate_pairs(&eligible),
            CandidateMode::Exhaustive => {
                eligible.iter().enumerate().flat_map(|(x, &a)| eligible[x + 1..].iter().map(move |&b| (a, b))).collect()
            }
        };
        for (a, b) in pairs {
            let sa = self.entries[a].signature.as_ref().unwrap();
            let sb = self.entries[b].signature.as_ref().unwrap();
            if agreement(sa, sb) >= cfg.threshold {
                uf.union(a, b);
            }
        }

        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let root = uf.find(i);
            groups.entry(root).or_default().push(i);
        }
        let mut out = DedupOutcome {
            too_short: self.entries.iter().filter(|e| e.signature.is_none() && !e.prior).count(),
            ..Default::default()
        };
        let mut survivors = vec![false; n];
        for members in groups.values() {
            let rep = self.representative(members, cfg.keep);
            survivors[rep] = true;
            if members.len() > 1 {
                let rep_entry = &self.entries[rep];
                let mut ids = vec![rep_entry.id.clone()];
                for &m in members.iter().filter(|&&m| m != rep) {
                    let e = &self.entries[m];
                    ids.push(e.id.clone());
                    if e.prior {
                        continue;
                    }
                    out.removed.insert(e.id.clone(), rep_entry.id.clone());
                    if e.fingerprint == rep_entry.fingerprint || !exact_first[m] {
                        out.removed_exact += 1;
                    } else {
                        out.removed_near += 1;
                    }
                }
                out.clusters.insert(rep_entry.id.clone(), ids);
            }
        }
        out.kept =
            (0..n).filter(|&i| survivors[i] && !self.entries[i].prior).map(|i| self.entries[i].id.clone()).collect();
        out
    }

    fn representative(&self, members: &[usize], keep: KeepPolicy) -> usize {
        // Earlier corpora always win so incremental runs never drop them.
        if let Some(&p) = members.iter().find(|&&m| self.entries[m].prior) {
            return p;
        }
        match keep {
            KeepPolicy::Earliest => members[0],
            KeepPolicy::Longest => *members
                .iter()
                .max_by(|&&a, &&b| self.entries[a].chars.cmp(&self.entries[b].chars).then(b.cmp(&a)))
                .unwrap(),
        }
    }

    /// Header line followed by one entry per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), DedupError> {
        serde_json::to_writer(&mut w, &self.header).map_err(|e| DedupError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e).map_err(|e| DedupError::Format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Load a persisted index; its entries are marked as prior corpus.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<DedupIndex, DedupError> {
        let mut lines = r.lines();
        let header_line = lines.next().ok_or_else(|| DedupError::Format("missing header".into()))??;
        let header: IndexHeader =
            serde_json::from_str(&header_line).map_err(|e| DedupError::Format(format!("header: {e}")))?;
        if header.version != INDEX_FORMAT_VERSION {
            return Err(DedupError::Format(format!("unsupported index version {}", header.version)));
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut e: IndexEntry =
                serde_json::from_str(&line).map_err(|err| DedupError::Format(format!("line {}: {err}", n + 2)))?;
            if e.signature.as_ref().is_some_and(|s| s.len() != header.num_perm) {
                return Err(DedupError::Format(format!("line {}: signature length mismatch", n + 2)));
            }
            e.prior = true;
            entries.push(e);
        }
        Ok(DedupIndex { header, entries })
    }
}

/// Build an index over `docs` and cluster it.
pub fn cluster_duplicates<S: AsRef<str> + Sync>(
    docs: &[(String, S)],
    cfg: &DedupConfig,
    exec: &Executor,
) -> Result<DedupOutcome, DedupError> {
    cfg.validate()?;
    Ok(DedupIndex::build(docs, cfg, exec).cluster(cfg))
}
