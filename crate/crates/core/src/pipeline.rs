//! End-to-end orchestration: metadata → archives → cleaning → filters →
//! dedup → mixture → yield report, with a resumable progress ledger.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{
    extract_tex_sources, flatten_project_with, validate_archive, ArchiveError, ArchiveLimits, MissingPolicy,
    RootPolicy, DEFAULT_MAX_DECOMPRESSED_BYTES, DEFAULT_MAX_ENTRIES, DEFAULT_MAX_INCLUDE_DEPTH,
};
use crate::dedup::{DedupConfig, DedupIndex};
use crate::hashing::sha256_hex;
use crate::langid::Detection;
use crate::latexnorm::{clean_document, CleanConfig, CleanDocument};
use crate::metadata::{evaluate_filters, parse_metadata_stream, FilterPolicy, MetadataItem, PaperRecord, RejectReason};
use crate::mixture::{
    assemble_mixture, yield_report, MixtureManifest, MixtureOptions, SourceSpec, Stage, YieldCounters, YieldReport,
    DEFAULT_SHARD_TARGET_BYTES,
};
use crate::par::Executor;

pub const CORPUS_FILE: &str = "corpus/arxiv.jsonl";
pub const LEDGER_FILE: &str = "progress.jsonl";
pub const DEDUP_INDEX_FILE: &str = "dedup_index.jsonl";
pub const REPORT_JSON: &str = "yield_report.json";
pub const REPORT_TEXT: &str = "yield_report.txt";
pub const ARXIV_SOURCE: &str = "arxiv";
const ARCHIVE_SUFFIXES: &[&str] = &[".tar.gz", ".tgz", ".tar", ".gz", ".tex"];
const CHUNK_PER_WORKER: usize = 32;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Mixture(#[from] crate::mixture::MixtureError),
    #[error(transparent)]
    Dedup(#[from] crate::dedup::DedupError),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> PipelineError {
    let context = context.into();
    move |source| PipelineError::Io { context, source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchiveConfig {
    pub max_decompressed_bytes: u64,
    pub max_entries: usize,
    pub max_include_depth: usize,
    pub missing_include: MissingPolicy,
    pub root_policy: RootPolicy,
}

impl Default for ArchiveConfig {
    fn default() -> Self {
        ArchiveConfig {
            max_decompressed_bytes: DEFAULT_MAX_DECOMPRESSED_BYTES,
            max_entries: DEFAULT_MAX_ENTRIES,
            max_include_depth: DEFAULT_MAX_INCLUDE_DEPTH,
            missing_include: MissingPolicy::Drop,
            root_policy: RootPolicy::Root,
        }
    }
}

impl ArchiveConfig {
    pub fn limits(&self) -> ArchiveLimits {
        ArchiveLimits { max_decompressed_bytes: self.max_decompressed_bytes, max_entries: self.max_entries }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    pub seed: u64,
    pub shard_target_bytes: u64,
    /// Sampling weight of the cleaned arXiv corpus produced by the run.
    pub arxiv_weight: f64,
    pub arxiv_stage: Stage,
    /// Additional prepared sources (already-clean line-delimited text).
    pub sources: Vec<SourceSpec>,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            seed: 0,
            shard_target_bytes: DEFAULT_SHARD_TARGET_BYTES,
            arxiv_weight: 2.0,
            arxiv_stage: Stage::Pretraining,
            sources: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub metadata: PathBuf,
    pub archives_dir: PathBuf,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub resume: bool,
    /// Earlier dedup index to deduplicate against, if any.
    pub prior_dedup_index: Option<PathBuf>,
    pub archive: ArchiveConfig,
    pub clean: CleanConfig,
    pub filter: FilterPolicy,
    pub dedup: DedupConfig,
    pub mixture: MixtureConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            metadata: PathBuf::from("metadata.jsonl"),
            archives_dir: PathBuf::from("archives"),
            output_dir: PathBuf::from("out"),
            workers: 1,
            resume: false,
            prior_dedup_index: None,
            archive: ArchiveConfig::default(),
            clean: CleanConfig::default(),
            filter: FilterPolicy::default(),
            dedup: DedupConfig::default(),
            mixture: MixtureConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(format!("reading config {}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Digest of every setting that affects outputs. Worker count, resume
    /// flag and output location are excluded.
    pub fn config_hash(&self) -> String {
        let mut effective = self.clone();
        effective.workers = 0;
        effective.resume = false;
        effective.output_dir = PathBuf::new();
        let json = serde_json::to_string(&effective).expect("config serializes");
        sha256_hex(json.as_bytes())
    }

    /// Structural checks that need no filesystem access.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be at least 1".into()));
        }
        self.filter.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.dedup.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.mixture.shard_target_bytes == 0 {
            return Err(PipelineError::Config("mixture.shard_target_bytes must be positive".into()));
        }
        if !(self.mixture.arxiv_weight.is_finite() && self.mixture.arxiv_weight > 0.0) {
            return Err(PipelineError::Config("mixture.arxiv_weight must be positive".into()));
        }
        if self.mixture.sources.iter().any(|s| s.name == ARXIV_SOURCE) {
            return Err(PipelineError::Config(format!("source name {ARXIV_SOURCE:?} is reserved")));
        }
        Ok(())
    }

    fn check_paths(&self) -> Result<(), PipelineError> {
        if !self.metadata.is_file() {
            return Err(PipelineError::Config(format!("metadata file {} does not exist", self.metadata.display())));
        }
        if !self.archives_dir.is_dir() {
            return Err(PipelineError::Config(format!(
                "archives directory {} does not exist",
                self.archives_dir.display()
            )));
        }
        Ok(())
    }
}

/// What happened to one paper before dedup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PaperOutcome {
    ArchiveFailure { error: String },
    ExtractionLoss { error: String },
    Rejected { reasons: Vec<RejectReason>, language: Detection },
    Accepted { doc: CleanDocument },
}

/// Candidate archive paths for a record, in lookup order.
pub fn archive_candidates(record: &PaperRecord, archives_dir: &Path) -> Vec<PathBuf> {
    if let Some(p) = &record.source_path {
        let p = Path::new(p);
        return vec![if p.is_absolute() { p.to_path_buf() } else { archives_dir.join(p) }];
    }
    let stem = record.id.replace('/', "_");
    ARCHIVE_SUFFIXES.iter().map(|s| archives_dir.join(format!("{stem}{s}"))).collect()
}

/// Locate, validate, flatten, clean and filter one paper.
pub fn process_paper(record: &PaperRecord, cfg: &PipelineConfig) -> PaperOutcome {
    let Some(path) = archive_candidates(record, &cfg.archives_dir).into_iter().find(|p| p.is_file()) else {
        return PaperOutcome::ExtractionLoss { error: "missing_archive".into() };
    };
    let raw = match read_capped(&path, cfg.archive.max_decompressed_bytes) {
        Ok(raw) => raw,
        Err(e) => return PaperOutcome::ArchiveFailure { error: e.kind().into() },
    };
    let archive = match validate_archive(&record.id, &raw, &cfg.archive.limits()) {
        Ok(a) => a,
        Err(e) => return PaperOutcome::ArchiveFailure { error: e.kind().into() },
    };
    let project = match extract_tex_sources(&archive) {
        Ok(p) => p,
        Err(e) => return PaperOutcome::ExtractionLoss { error: e.kind().into() },
    };
    let flat = match flatten_project_with(
        &project,
        cfg.archive.missing_include,
        cfg.archive.root_policy,
        cfg.archive.max_include_depth,
    ) {
        Ok(f) => f,
        Err(e) => return PaperOutcome::ExtractionLoss { error: e.kind().into() },
    };
    let doc = clean_document(&record.id, &record.title, &record.abstract_text, &flat.text, &cfg.clean);
    let outcome = evaluate_filters(record, &doc, &cfg.filter);
    if outcome.accepted {
        PaperOutcome::Accepted { doc }
    } else {
        PaperOutcome::Rejected { reasons: outcome.reasons, language: outcome.language }
    }
}

fn read_capped(path: &Path, cap: u64) -> Result<Vec<u8>, ArchiveError> {
    let file = File::open(path).map_err(|e| ArchiveError::Integrity(format!("{}: {e}", path.display())))?;
    let mut raw = Vec::new();
    file.take(cap.saturating_add(1))
        .read_to_end(&mut raw)
        .map_err(|e| ArchiveError::Integrity(format!("{}: {e}", path.display())))?;
    if raw.len() as u64 > cap {
        return Err(ArchiveError::Bomb { cap });
    }
    Ok(raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub paper_id: String,
    pub config_hash: String,
    pub stage: String,
    pub outcome: PaperOutcome,
}

const LEDGER_STAGE: &str = "processed";

/// Completed papers recorded under `config_hash`. Torn or foreign lines
/// are ignored.
pub fn read_ledger(path: &Path, config_hash: &str) -> Result<HashMap<String, PaperOutcome>, PipelineError> {
    let mut done = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(io_err("opening progress ledger")(e)),
    };
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err("reading progress ledger"))?;
        if let Ok(rec) = serde_json::from_str::<LedgerRecord>(&line) {
            if rec.config_hash == config_hash && rec.stage == LEDGER_STAGE {
                done.insert(rec.paper_id, rec.outcome);
            }
        }
    }
    Ok(done)
}

fn open_ledger(path: &Path, resume: bool) -> Result<BufWriter<File>, PipelineError> {
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .write(true)
        .truncate(!resume)
        .open(path)
        .map_err(io_err("opening progress ledger"))?;
    let len = file.seek(SeekFrom::End(0)).map_err(io_err("seeking progress ledger"))?;
    if len > 0 {
        // Terminate a torn final line so the next record starts cleanly.
        file.seek(SeekFrom::End(-1)).map_err(io_err("seeking progress ledger"))?;
        let mut last = [0u8; 1];
        file.read_exact(&mut last).map_err(io_err("reading progress ledger"))?;
        file.seek(SeekFrom::End(0)).map_err(io_err("seeking progress ledger"))?;
        if last[0] != b'\n' {
            file.write_all(b"\n").map_err(io_err("writing progress ledger"))?;
        }
    }
    Ok(BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub title: String,
    pub text: String,
    pub curriculum_stage1_spans: Vec<(usize, usize)>,
    pub char_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub manifest: MixtureManifest,
    pub report: YieldReport,
    pub config_hash: String,
    /// Papers taken from the progress ledger instead of reprocessed.
    pub resumed: usize,
}

impl PipelineOutcome {
    /// True when any input was lost to a bad archive, extraction problem
    /// or malformed record (policy rejections do not count).
    pub fn has_losses(&self) -> bool {
        let c = &self.report.counters;
        c.archive_failures.values().any(|&n| n > 0)
            || c.extraction_losses.values().any(|&n| n > 0)
            || c.rejected.get(&RejectReason::Malformed).is_some_and(|&n| n > 0)
    }
}

/// Hooks used by tests to interrupt a run after a number of ledger chunks.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunControl {
    pub stop_after_chunks: Option<usize>,
}

#[derive(Debug, Error)]
#[error("run stopped after {0} chunks")]
pub struct Interrupted(pub usize);

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    match run_pipeline_with(cfg, RunControl::default())? {
        Ok(outcome) => Ok(outcome),
        Err(Interrupted(n)) => Err(PipelineError::Config(format!("unexpected interruption after {n} chunks"))),
    }
}

pub fn run_pipeline_with(
    cfg: &PipelineConfig,
    control: RunControl,
) -> Result<Result<PipelineOutcome, Interrupted>, PipelineError> {
    cfg.validate()?;
    cfg.check_paths()?;
    let exec = Executor::new(cfg.workers);
    let hash = cfg.config_hash();
    let out = &cfg.output_dir;
    fs::create_dir_all(out.join("corpus")).map_err(io_err("creating output directory"))?;

    let meta = File::open(&cfg.metadata).map_err(io_err(format!("opening {}", cfg.metadata.display())))?;
    let items = parse_metadata_stream(BufReader::new(meta))
        .map_err(|e| PipelineError::Io { context: "reading metadata".into(), source: io::Error::other(e) })?;

    let mut counters = YieldCounters { input_records: items.len() as u64, ..Default::default() };
    let mut seen_ids = HashSet::new();
    let mut records: Vec<&PaperRecord> = Vec::new();
    for item in &items {
        match item {
            MetadataItem::Malformed(m) => {
                log::warn!("metadata line {}: {}", m.line, m.reason);
                counters.reject(&[RejectReason::Malformed]);
            }
            MetadataItem::Record(r) if !seen_ids.insert(r.id.as_str()) => {
                log::warn!("duplicate metadata id {}", r.id);
                counters.reject(&[RejectReason::Malformed]);
            }
            MetadataItem::Record(r) => records.push(r),
        }
    }

    let ledger_path = out.join(LEDGER_FILE);
    let mut done = if cfg.resume { read_ledger(&ledger_path, &hash)? } else { HashMap::new() };
    let resumed = records.iter().filter(|r| done.contains_key(&r.id)).count();
    let pending: Vec<&PaperRecord> = records.iter().copied().filter(|r| !done.contains_key(&r.id)).collect();
    let mut ledger = open_ledger(&ledger_path, cfg.resume)?;
    let chunk_size = CHUNK_PER_WORKER * exec.workers().max(1);
    for (chunk_no, chunk) in pending.chunks(chunk_size).enumerate() {
        if control.stop_after_chunks == Some(chunk_no) {
            ledger.flush().map_err(io_err("writing progress ledger"))?;
            return Ok(Err(Interrupted(chunk_no)));
        }
        let outcomes = exec.map(chunk, |r| process_paper(r, cfg));
        for (rec, outcome) in chunk.iter().zip(outcomes) {
            let line = LedgerRecord {
                paper_id: rec.id.clone(),
                config_hash: hash.clone(),
                stage: LEDGER_STAGE.into(),
                outcome,
            };
            serde_json::to_writer(&mut ledger, &line)
                .map_err(|e| PipelineError::Io { context: "writing progress ledger".into(), source: e.into() })?;
            ledger.write_all(b"\n").map_err(io_err("writing progress ledger"))?;
            done.insert(line.paper_id, line.outcome);
        }
        ledger.flush().map_err(io_err("writing progress ledger"))?;
    }

    let mut accepted: Vec<&CleanDocument> = Vec::new();
    for rec in &records {
        match &done[&rec.id] {
            PaperOutcome::ArchiveFailure { error } => *counters.archive_failures.entry(error.clone()).or_default() += 1,
            PaperOutcome::ExtractionLoss { error } => {
                *counters.extraction_losses.entry(error.clone()).or_default() += 1
            }
            PaperOutcome::Rejected { reasons, .. } => counters.reject(reasons),
            PaperOutcome::Accepted { doc } => accepted.push(doc),
        }
    }

    let dedup_docs: Vec<(String, &str)> = accepted.iter().map(|d| (d.paper_id.clone(), d.body.as_str())).collect();
    let mut index = match &cfg.prior_dedup_index {
        Some(p) => {
            let f = File::open(p).map_err(io_err(format!("opening dedup index {}", p.display())))?;
            let prior = DedupIndex::read_jsonl(BufReader::new(f))?;
            if prior.header != cfg.dedup.header() {
                return Err(PipelineError::Config("prior dedup index was built with different parameters".into()));
            }
            prior
        }
        None => DedupIndex::new(cfg.dedup.header()),
    };
    let prior_count = index.entries.len();
    index.extend(&dedup_docs, &cfg.dedup, &exec);
    let dedup = index.cluster(&cfg.dedup);
    counters.dedup_exact = dedup.removed_exact as u64;
    counters.dedup_near = dedup.removed_near as u64;
    if dedup.too_short > 0 {
        log::info!("{} documents were too short for near-duplicate detection", dedup.too_short);
    }
    let current = DedupIndex { header: index.header, entries: index.entries[prior_count..].to_vec() };
    let idx_file = File::create(out.join(DEDUP_INDEX_FILE)).map_err(io_err("writing dedup index"))?;
    let mut idx_writer = BufWriter::new(idx_file);
    current.write_jsonl(&mut idx_writer)?;
    idx_writer.flush().map_err(io_err("writing dedup index"))?;

    let kept: HashSet<&str> = dedup.kept.iter().map(String::as_str).collect();
    let corpus_path = out.join(CORPUS_FILE);
    let mut corpus = BufWriter::new(File::create(&corpus_path).map_err(io_err("writing corpus"))?);
    for doc in accepted.iter().filter(|d| kept.contains(d.paper_id.as_str())) {
        let text = doc.training_text();
        counters.final_docs += 1;
        counters.final_bytes += text.len() as u64;
        let rec = CorpusRecord {
            id: doc.paper_id.clone(),
            title: doc.title.clone(),
            curriculum_stage1_spans: doc.curriculum.stage1_spans.clone(),
            char_count: doc.char_count,
            text,
        };
        serde_json::to_writer(&mut corpus, &rec)
            .map_err(|e| PipelineError::Io { context: "writing corpus".into(), source: e.into() })?;
        corpus.write_all(b"\n").map_err(io_err("writing corpus"))?;
    }
    corpus.flush().map_err(io_err("writing corpus"))?;

    let mut sources = vec![SourceSpec {
        name: ARXIV_SOURCE.into(),
        input_path: PathBuf::from(CORPUS_FILE),
        stage: cfg.mixture.arxiv_stage,
        weight: cfg.mixture.arxiv_weight,
    }];
    for s in &cfg.mixture.sources {
        let mut s = s.clone();
        if s.input_path.is_relative() {
            s.input_path = std::path::absolute(&s.input_path).map_err(io_err("resolving source path"))?;
        }
        sources.push(s);
    }
    let opts = MixtureOptions {
        seed: cfg.mixture.seed,
        shard_target_bytes: cfg.mixture.shard_target_bytes,
        config_hash: Some(hash.clone()),
    };
    remove_stale_shards(out)?;
    let manifest = assemble_mixture(&sources, &opts, out, out, &exec)?;

    let report = match yield_report(&counters) {
        Ok(r) => r,
        Err(mismatch) => {
            log::error!("{mismatch}");
            mismatch.report
        }
    };
    let mut json = serde_json::to_string_pretty(&report)
        .map_err(|e| PipelineError::Io { context: "writing report".into(), source: e.into() })?;
    json.push('\n');
    fs::write(out.join(REPORT_JSON), json).map_err(io_err("writing yield report"))?;
    fs::write(out.join(REPORT_TEXT), report.render_table()).map_err(io_err("writing yield report"))?;

    Ok(Ok(PipelineOutcome { manifest, report, config_hash: hash, resumed }))
}

/// Drop shard files from an earlier run so the directory matches the new
/// manifest.
fn remove_stale_shards(out: &Path) -> Result<(), PipelineError> {
    for entry in fs::read_dir(out).map_err(io_err("listing output directory"))? {
        let entry = entry.map_err(io_err("listing output directory"))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let is_shard = [Stage::Pretraining, Stage::Posttraining]
            .iter()
            .any(|s| name.starts_with(&format!("{}-", s.as_str())) && name.ends_with(".jsonl"));
        if is_shard {
            fs::remove_file(entry.path()).map_err(io_err("removing stale shard"))?;
        }
    }
    Ok(())
}

/// Reason tallies for a finished report, keyed by display name.
pub fn loss_summary(report: &YieldReport) -> BTreeMap<String, u64> {
    let c = &report.counters;
    let mut out = BTreeMap::new();
    for (r, n) in &c.rejected {
        out.insert(format!("rejected.{}", r.as_str()), *n);
    }
    for (k, n) in &c.archive_failures {
        out.insert(format!("archive.{k}"), *n);
    }
    for (k, n) in &c.extraction_losses {
        out.insert(format!("extraction.{k}"), *n);
    }
    out.insert("dedup.exact".into(), c.dedup_exact);
    out.insert("dedup.near".into(), c.dedup_near);
    out
}
