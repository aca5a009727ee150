//! Weighted mixture assembly into stage-separated shards, and end-to-end
//! yield accounting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{gb_to_tokens, TokenBand};
use crate::hashing::{fnv1a64, splitmix64, unit_interval};
use crate::metadata::RejectReason;
use crate::par::Executor;

pub const DEFAULT_SHARD_TARGET_BYTES: u64 = 256 * 1024 * 1024;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretraining,
    Posttraining,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretraining => "pretraining",
            Stage::Posttraining => "posttraining",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub input_path: PathBuf,
    pub stage: Stage,
    pub weight: f64,
}

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("invalid source spec: {0}")]
    InvalidSource(String),
    #[error("source {name} is unreadable: {message}")]
    UnreadableSource { name: String, message: String },
    #[error("writing shards: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One input document of a source. Records without an id get
/// `{source}:{line}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDoc {
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub curriculum_stage1_spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardRecord {
    pub id: String,
    pub source: String,
    pub stage: Stage,
    pub weight_applied: f64,
    pub curriculum_stage1_spans: Vec<(usize, usize)>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub path: String,
    pub docs: u64,
    pub bytes: u64,
    pub stage: Stage,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTotals {
    pub shards: u64,
    pub docs: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SourceStatus {
    Ok,
    Empty,
    Unreadable { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceReport {
    pub name: String,
    pub docs: u64,
    pub emissions: u64,
    /// Lines that failed to parse and were skipped.
    pub skipped_lines: u64,
    #[serde(flatten)]
    pub status: SourceStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureManifest {
    pub version: String,
    pub config_hash: Option<String>,
    pub sources: Vec<SourceSpec>,
    pub seed: u64,
    pub shard_target_bytes: u64,
    pub shards: Vec<ShardInfo>,
    pub totals: BTreeMap<Stage, StageTotals>,
    pub source_reports: Vec<SourceReport>,
}

impl MixtureManifest {
    pub fn write(&self, path: &Path) -> Result<(), MixtureError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, MixtureError> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureOptions {
    pub seed: u64,
    pub shard_target_bytes: u64,
    pub config_hash: Option<String>,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        MixtureOptions { seed: 0, shard_target_bytes: DEFAULT_SHARD_TARGET_BYTES, config_hash: None }
    }
}

/// Uniform draw in [0, 1) keyed by (seed, source, doc id).
pub fn emission_draw(seed: u64, source: &str, doc_id: &str) -> f64 {
    let key = fnv1a64(format!("{source}\u{0}{doc_id}").as_bytes());
    unit_interval(splitmix64(seed ^ key))
}

/// `floor(w)` copies plus one more with probability `frac(w)`.
pub fn emission_count(weight: f64, seed: u64, source: &str, doc_id: &str) -> u64 {
    let whole = weight.floor();
    let frac = weight - whole;
    let extra = frac > 0.0 && emission_draw(seed, source, doc_id) < frac;
    whole as u64 + u64::from(extra)
}

fn validate_sources(sources: &[SourceSpec]) -> Result<(), MixtureError> {
    let mut names = std::collections::BTreeSet::new();
    for s in sources {
        if !(s.weight.is_finite() && s.weight > 0.0) {
            return Err(MixtureError::InvalidSource(format!("{}: weight must be positive, got {}", s.name, s.weight)));
        }
        if s.name.is_empty() || !names.insert(s.name.as_str()) {
            return Err(MixtureError::InvalidSource(format!("source name {:?} is empty or repeated", s.name)));
        }
    }
    Ok(())
}

/// Read a line-delimited source. Unparseable lines are skipped and counted.
pub fn read_source(name: &str, path: &Path) -> Result<(Vec<SourceDoc>, u64), MixtureError> {
    let unreadable = |e: io::Error| MixtureError::UnreadableSource { name: name.to_string(), message: e.to_string() };
    let file = File::open(path).map_err(unreadable)?;
    let mut docs = Vec::new();
    let mut skipped = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(unreadable)?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SourceDoc>(&line) {
            Ok(mut d) => {
                if d.id.is_none() {
                    d.id = Some(format!("{name}:{}", n + 1));
                }
                docs.push(d);
            }
            Err(_) => skipped += 1,
        }
    }
    Ok((docs, skipped))
}

struct Emission<'a> {
    source: &'a SourceSpec,
    doc: &'a SourceDoc,
}

/// Expand weighted sources into shuffled, stage-separated shards under
/// `out_dir` and return the manifest (also written to `manifest.json`).
/// Relative input paths resolve against `base_dir`.
pub fn assemble_mixture(
    sources: &[SourceSpec],
    opts: &MixtureOptions,
    base_dir: &Path,
    out_dir: &Path,
    exec: &Executor,
) -> Result<MixtureManifest, MixtureError> {
    validate_sources(sources)?;
    if opts.shard_target_bytes == 0 {
        return Err(MixtureError::InvalidSource("shard_target_bytes must be positive".into()));
    }
    fs::create_dir_all(out_dir)?;

    let loaded: Vec<Result<(Vec<SourceDoc>, u64), MixtureError>> = exec.map(sources, |s| {
        let path = if s.input_path.is_absolute() { s.input_path.clone() } else { base_dir.join(&s.input_path) };
        read_source(&s.name, &path)
    });

    let mut reports = Vec::with_capacity(sources.len());
    let mut per_source: Vec<Vec<SourceDoc>> = Vec::with_capacity(sources.len());
    for (spec, result) in sources.iter().zip(loaded) {
        match result {
            Ok((docs, skipped)) => {
                let emissions: u64 = docs
                    .iter()
                    .map(|d| emission_count(spec.weight, opts.seed, &spec.name, d.id.as_deref().unwrap_or("")))
                    .sum();
                let status = if docs.is_empty() { SourceStatus::Empty } else { SourceStatus::Ok };
                if docs.is_empty() {
                    log::warn!("source {} has no documents", spec.name);
                }
                reports.push(SourceReport {
                    name: spec.name.clone(),
                    docs: docs.len() as u64,
                    emissions,
                    skipped_lines: skipped,
                    status,
                });
                per_source.push(docs);
            }
            Err(MixtureError::UnreadableSource { name, message }) => {
                log::error!("source {name} is unreadable: {message}");
                reports.push(SourceReport {
                    name,
                    docs: 0,
                    emissions: 0,
                    skipped_lines: 0,
                    status: SourceStatus::Unreadable { message },
                });
                per_source.push(Vec::new());
            }
            Err(e) => return Err(e),
        }
    }

    let mut shards = Vec::new();
    let mut totals: BTreeMap<Stage, StageTotals> = BTreeMap::new();
    for stage in [Stage::Pretraining, Stage::Posttraining] {
        let mut emissions: Vec<Emission> = Vec::new();
        for (spec, docs) in sources.iter().zip(&per_source) {
            if spec.stage != stage {
                continue;
            }
            for doc in docs {
                let n = emission_count(spec.weight, opts.seed, &spec.name, doc.id.as_deref().unwrap_or(""));
                for _ in 0..n {
                    emissions.push(Emission { source: spec, doc });
                }
            }
        }
        if emissions.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(opts.seed ^ fnv1a64(stage.as_str().as_bytes())));
        emissions.shuffle(&mut rng);
        let lines: Vec<Result<String, serde_json::Error>> = exec.map(&emissions, |e| {
            let rec = ShardRecord {
                id: e.doc.id.clone().unwrap_or_default(),
                source: e.source.name.clone(),
                stage,
                weight_applied: e.source.weight,
                curriculum_stage1_spans: e.doc.curriculum_stage1_spans.clone(),
                text: e.doc.text.clone(),
            };
            serde_json::to_string(&rec).map(|mut s| {
                s.push('\n');
                s
            })
        });
        let stage_totals = totals.entry(stage).or_default();
        let mut writer: Option<(String, BufWriter<File>, u64, u64)> = None;
        let mut finish =
            |w: Option<(String, BufWriter<File>, u64, u64)>, shards: &mut Vec<ShardInfo>| -> io::Result<()> {
                if let Some((path, mut file, docs, bytes)) = w {
                    file.flush()?;
                    stage_totals.shards += 1;
                    stage_totals.docs += docs;
                    stage_totals.bytes += bytes;
                    shards.push(ShardInfo { path, docs, bytes, stage });
                }
                Ok(())
            };
        let mut index = 0usize;
        for line in lines {
            let line = line?;
            let len = line.len() as u64;
            let full =
                writer.as_ref().is_some_and(|(_, _, docs, bytes)| *docs > 0 && bytes + len > opts.shard_target_bytes);
            if full {
                finish(writer.take(), &mut shards)?;
            }
            if writer.is_none() {
                let name = format!("{}-{index:05}.jsonl", stage.as_str());
                index += 1;
                let file = BufWriter::new(File::create(out_dir.join(&name))?);
                writer = Some((name, file, 0, 0));
            }
            let (_, file, docs, bytes) = writer.as_mut().unwrap();
            file.write_all(line.as_bytes())?;
            *docs += 1;
            *bytes += len;
        }
        finish(writer.take(), &mut shards)?;
    }

    let manifest = MixtureManifest {
        version: crate::VERSION.to_string(),
        config_hash: opts.config_hash.clone(),
        sources: sources.to_vec(),
        seed: opts.seed,
        shard_target_bytes: opts.shard_target_bytes,
        shards,
        totals,
        source_reports: reports,
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Counters gathered across one pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct YieldCounters {
    pub input_records: u64,
    /// Each rejected record under its first reason in canonical order.
    pub rejected: BTreeMap<RejectReason, u64>,
    /// Every reason that fired, so one record may count several times.
    pub rejection_mentions: BTreeMap<RejectReason, u64>,
    pub archive_failures: BTreeMap<String, u64>,
    pub extraction_losses: BTreeMap<String, u64>,
    pub dedup_exact: u64,
    pub dedup_near: u64,
    pub final_docs: u64,
    pub final_bytes: u64,
}

impl YieldCounters {
    pub fn reject(&mut self, reasons: &[RejectReason]) {
        if let Some(primary) = reasons.iter().min() {
            *self.rejected.entry(*primary).or_default() += 1;
        }
        for r in reasons {
            *self.rejection_mentions.entry(*r).or_default() += 1;
        }
    }

    /// Sum of every attributed outcome.
    pub fn accounted(&self) -> u64 {
        self.rejected.values().sum::<u64>()
            + self.archive_failures.values().sum::<u64>()
            + self.extraction_losses.values().sum::<u64>()
            + self.dedup_exact
            + self.dedup_near
            + self.final_docs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    #[serde(flatten)]
    pub counters: YieldCounters,
    pub accounted: u64,
    pub accounting_ok: bool,
    pub yield_fraction: f64,
    pub estimated_tokens: TokenBand,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("yield accounting mismatch: {input} input records but {accounted} attributed")]
pub struct AccountingMismatch {
    pub input: u64,
    pub accounted: u64,
    pub report: YieldReport,
}

impl YieldReport {
    fn build(counters: &YieldCounters) -> Self {
        let accounted = counters.accounted();
        YieldReport {
            counters: counters.clone(),
            accounted,
            accounting_ok: accounted == counters.input_records,
            yield_fraction: if counters.input_records == 0 {
                0.0
            } else {
                counters.final_docs as f64 / counters.input_records as f64
            },
            estimated_tokens: gb_to_tokens(counters.final_bytes as f64 / 1e9),
        }
    }

    /// Plain-text table for terminals and logs.
    pub fn render_table(&self) -> String {
        let c = &self.counters;
        let mut rows: Vec<(String, u64)> = vec![("input records".into(), c.input_records)];
        for (r, n) in &c.rejected {
            rows.push((format!("rejected: {}", r.as_str()), *n));
        }
        for (k, n) in &c.archive_failures {
            rows.push((format!("archive failure: {k}"), *n));
        }
        for (k, n) in &c.extraction_losses {
            rows.push((format!("extraction loss: {k}"), *n));
        }
        rows.push(("dedup removed (exact)".into(), c.dedup_exact));
        rows.push(("dedup removed (near)".into(), c.dedup_near));
        rows.push(("final docs".into(), c.final_docs));
        rows.push(("final bytes".into(), c.final_bytes));
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>12}");
        }
        let _ = writeln!(out, "{:<width$}  {:>12}", "accounting", if self.accounting_ok { "ok" } else { "MISMATCH" });
        let _ = writeln!(
            out,
            "estimated tokens: {:.3e} to {:.3e}",
            self.estimated_tokens.tokens_low, self.estimated_tokens.tokens_high
        );
        if !c.rejection_mentions.is_empty() {
            let mentions: Vec<String> =
                c.rejection_mentions.iter().map(|(r, n)| format!("{}={n}", r.as_str())).collect();
            let _ = writeln!(out, "rule hits (all reasons): {}", mentions.join(", "));
        }
        out
    }
}

/// Build the report; a mismatch still carries the report for inspection.
pub fn yield_report(counters: &YieldCounters) -> Result<YieldReport, Box<AccountingMismatch>> {
    let report = YieldReport::build(counters);
    if report.accounting_ok {
        Ok(report)
    } else {
        Err(Box::new(AccountingMismatch { input: counters.input_records, accounted: report.accounted, report }))
    }
}
