use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::{json, Value};

use texforge::archive::{
    extract_tex_sources, flatten_project_with, validate_archive, ArchiveLimits, MissingPolicy, RootPolicy,
};
use texforge::budget::{plan, ArchitectureSpec, ModelSpec};
use texforge::dedup::{CandidateMode, DedupConfig, DedupIndex, KeepPolicy};
use texforge::latexnorm::{clean_document, CleanConfig};
use texforge::metadata::{parse_metadata_stream, MetadataItem};
use texforge::mixture::{assemble_mixture, MixtureOptions, SourceSpec, Stage, YieldReport};
use texforge::par::{Executor, WORKERS_ENV};
use texforge::pipeline::{process_paper, run_pipeline, PaperOutcome, PipelineConfig, PipelineOutcome, REPORT_JSON};
use texforge::telemetry::{analyze, read_run_log, AnalysisOptions};
use texforge::tokenlab::{
    corpus_token_stats, fragmentation_stats, lint_model_config, train_bpe_with, ModelConfigSummary, Severity,
    SpecialTokens, TokenizerModel, TrainConfig, DEFAULT_TOP_COMMANDS,
};

/// Exit status for runs that finished but lost inputs along the way.
const EXIT_LOSSES: u8 = 2;

#[derive(Parser, Debug)]
#[command(author, version, about = "Scientific LaTeX corpus builder and training-planning tools")]
struct Cli {
    /// Increase log verbosity (-v, -vv)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    /// Worker threads for data-parallel stages
    #[arg(long, global = true, env = WORKERS_ENV, value_name = "N")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the whole pipeline from a config file
    Run(RunArgs),
    /// Print a config file with every default filled in
    InitConfig,
    /// Parse a metadata file and report malformed lines
    Ingest(IngestArgs),
    /// Check source archives for integrity, bombs and unsafe paths
    Validate(ValidateArgs),
    /// Flatten one source archive into a single LaTeX document
    Extract(ExtractArgs),
    /// Expand macros and normalize a flattened LaTeX file
    Clean(CleanArgs),
    /// Run archive handling, cleaning and metadata filters per paper
    Filter(FilterArgs),
    /// Exact and near-duplicate removal over a JSONL corpus
    Dedup(DedupArgs),
    /// Assemble weighted, shuffled shards from prepared sources
    Mix(MixArgs),
    /// Print a yield report from a finished run
    Report(ReportArgs),
    /// Token budgets, parameter counts and data regimes
    Budget(BudgetArgs),
    /// Train a BPE tokenizer
    TokTrain(TokTrainArgs),
    /// Encode text with a trained tokenizer
    TokEncode(TokEncodeArgs),
    /// Compression statistics of a tokenizer on a corpus
    TokStats(TokCorpusArgs),
    /// How often LaTeX commands are split into several tokens
    TokFrag(TokFragArgs),
    /// Check a model config against a tokenizer
    LintConfig(LintArgs),
    /// Analyze a training log (loss curves, gradient norms)
    Telemetry(TelemetryArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Pipeline config (TOML)
    #[arg(short, long, value_name = "PATH")]
    config: PathBuf,
    /// Skip papers already recorded in the progress ledger
    #[arg(long)]
    resume: bool,
    /// Override the output directory
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Line-delimited metadata records
    metadata: PathBuf,
    /// Write the parsed records as JSONL
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LimitArgs {
    #[arg(long, value_name = "BYTES", default_value_t = texforge::archive::DEFAULT_MAX_DECOMPRESSED_BYTES)]
    max_bytes: u64,
    #[arg(long, value_name = "N", default_value_t = texforge::archive::DEFAULT_MAX_ENTRIES)]
    max_entries: usize,
}

impl LimitArgs {
    fn limits(&self) -> ArchiveLimits {
        ArchiveLimits { max_decompressed_bytes: self.max_bytes, max_entries: self.max_entries }
    }
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Archive files
    #[arg(required = true)]
    archives: Vec<PathBuf>,
    #[command(flatten)]
    limits: LimitArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MissingArg {
    Drop,
    Error,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    archive: PathBuf,
    /// Write the flattened source here instead of stdout
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "drop")]
    missing: MissingArg,
    /// Concatenate all top-level files when no single root is found
    #[arg(long)]
    concatenate: bool,
    #[arg(long, default_value_t = texforge::archive::DEFAULT_MAX_INCLUDE_DEPTH)]
    max_depth: usize,
    #[command(flatten)]
    limits: LimitArgs,
}

#[derive(Args, Debug)]
struct CleanArgs {
    /// Flattened LaTeX file (`-` for stdin)
    input: PathBuf,
    #[arg(long, default_value = "")]
    id: String,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long = "abstract", default_value = "")]
    abstract_text: String,
    /// Print the full document record as JSON instead of the body
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct PipelineInputArgs {
    /// Pipeline config supplying archive, cleaning and filter settings
    #[arg(short, long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    metadata: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    archives: Option<PathBuf>,
}

impl PipelineInputArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(m) = &self.metadata {
            cfg.metadata = m.clone();
        }
        if let Some(a) = &self.archives {
            cfg.archives_dir = a.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[command(flatten)]
    input: PipelineInputArgs,
    /// Write accepted documents as JSONL (`id`, `text`, curriculum spans)
    #[arg(long, value_name = "PATH")]
    accepted: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KeepArg {
    Earliest,
    Longest,
}

#[derive(Args, Debug)]
struct DedupArgs {
    /// JSONL with `id` and `text` fields
    input: PathBuf,
    #[arg(long, default_value_t = texforge::dedup::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "earliest")]
    keep: KeepArg,
    /// Compare every pair instead of LSH candidates
    #[arg(long)]
    exhaustive: bool,
    /// Deduplicate against an earlier index
    #[arg(long, value_name = "PATH")]
    prior_index: Option<PathBuf>,
    /// Write the combined index here
    #[arg(long, value_name = "PATH")]
    write_index: Option<PathBuf>,
    /// Write surviving input lines here
    #[arg(long, value_name = "PATH")]
    kept: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MixArgs {
    /// Source as NAME:STAGE:WEIGHT:PATH (repeatable)
    #[arg(long = "source", required = true, value_name = "SPEC", value_parser = parse_source)]
    sources: Vec<SourceSpec>,
    #[arg(short, long, value_name = "DIR")]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "BYTES", default_value_t = texforge::mixture::DEFAULT_SHARD_TARGET_BYTES)]
    shard_bytes: u64,
}

fn parse_source(s: &str) -> Result<SourceSpec, String> {
    let mut parts = s.splitn(4, ':');
    let (Some(name), Some(stage), Some(weight), Some(path)) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err("expected NAME:STAGE:WEIGHT:PATH".into());
    };
    let stage = match stage {
        "pretraining" | "pre" => Stage::Pretraining,
        "posttraining" | "post" => Stage::Posttraining,
        other => return Err(format!("unknown stage {other:?}")),
    };
    let weight: f64 = weight.parse().map_err(|e| format!("bad weight {weight:?}: {e}"))?;
    Ok(SourceSpec { name: name.to_string(), input_path: PathBuf::from(path), stage, weight })
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run output directory or a yield report JSON file
    path: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct BudgetArgs {
    /// Model size in parameters
    #[arg(long, conflicts_with = "arch")]
    params: Option<u64>,
    /// Architecture description (JSON) to count parameters from
    #[arg(long, value_name = "PATH")]
    arch: Option<PathBuf>,
    /// Planned training tokens
    #[arg(long)]
    tokens: Option<u64>,
    /// Corpus size in GB of clean text
    #[arg(long)]
    gb: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// Text files, or JSONL files with a `text` field per line
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct TokTrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Learned symbols to reach (specials and byte tokens excluded)
    #[arg(long, default_value_t = 8000)]
    vocab_size: usize,
    /// Add 256 byte tokens so any input can be encoded
    #[arg(long)]
    byte_fallback: bool,
    /// Train without special tokens
    #[arg(long)]
    no_specials: bool,
    #[arg(short, long, value_name = "PATH", default_value = "tokenizer.json")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct TokEncodeArgs {
    #[arg(short, long, value_name = "PATH")]
    tokenizer: PathBuf,
    /// Text to encode; read from stdin when absent
    text: Option<String>,
    /// Print token strings next to ids
    #[arg(long)]
    show_tokens: bool,
}

#[derive(Args, Debug)]
struct TokCorpusArgs {
    #[arg(short, long, value_name = "PATH")]
    tokenizer: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
}

#[derive(Args, Debug)]
struct TokFragArgs {
    #[command(flatten)]
    inner: TokCorpusArgs,
    #[arg(long, default_value_t = DEFAULT_TOP_COMMANDS)]
    top: usize,
}

#[derive(Args, Debug)]
struct LintArgs {
    /// Model config (JSON)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(short, long, value_name = "PATH")]
    tokenizer: PathBuf,
}

#[derive(Args, Debug)]
struct TelemetryArgs {
    /// CSV log with step, train_loss and optional eval_loss, grad_norm, lr
    log: PathBuf,
    #[arg(long, default_value_t = texforge::telemetry::DEFAULT_TAIL_FRACTION)]
    tail_fraction: f64,
    #[arg(long, default_value_t = texforge::telemetry::DEFAULT_SLOPE_EPS)]
    slope_eps: f64,
    #[arg(long, default_value_t = 0)]
    warmup_steps: u64,
    #[arg(long, default_value_t = 1.0)]
    grad_threshold: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let workers = cli.workers;
    let exec = || Executor::new(workers.unwrap_or(1));
    match cli.command {
        Command::Run(args) => cmd_run(args, workers),
        Command::InitConfig => {
            print!("{}", PipelineConfig::default().to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Ingest(args) => cmd_ingest(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Clean(args) => cmd_clean(args),
        Command::Filter(args) => cmd_filter(args, &exec()),
        Command::Dedup(args) => cmd_dedup(args, &exec()),
        Command::Mix(args) => cmd_mix(args, &exec()),
        Command::Report(args) => cmd_report(args),
        Command::Budget(args) => cmd_budget(args),
        Command::TokTrain(args) => cmd_tok_train(args),
        Command::TokEncode(args) => cmd_tok_encode(args),
        Command::TokStats(args) => cmd_tok_stats(args, &exec()),
        Command::TokFrag(args) => cmd_tok_frag(args, &exec()),
        Command::LintConfig(args) => cmd_lint(args),
        Command::Telemetry(args) => cmd_telemetry(args),
    }
}

fn status(losses: bool) -> ExitCode {
    if losses {
        ExitCode::from(EXIT_LOSSES)
    } else {
        ExitCode::SUCCESS
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_run(args: RunArgs, workers: Option<usize>) -> Result<ExitCode> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if args.resume {
        cfg.resume = true;
    }
    if let Some(o) = args.output {
        cfg.output_dir = o;
    }
    // Relative paths in the config resolve against the config file.
    if let Some(base) = args.config.parent().filter(|d| !d.as_os_str().is_empty()) {
        for p in [&mut cfg.metadata, &mut cfg.archives_dir, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = cfg.prior_dedup_index.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
        for s in &mut cfg.mixture.sources {
            if s.input_path.is_relative() {
                s.input_path = base.join(&s.input_path);
            }
        }
    }
    info!("running with {} workers into {}", cfg.workers, cfg.output_dir.display());
    let outcome: PipelineOutcome = run_pipeline(&cfg)?;
    print!("{}", outcome.report.render_table());
    println!("config hash: {}", outcome.config_hash);
    if outcome.resumed > 0 {
        println!("resumed papers: {}", outcome.resumed);
    }
    Ok(status(outcome.has_losses()))
}

fn cmd_ingest(args: IngestArgs) -> Result<ExitCode> {
    let file = File::open(&args.metadata).with_context(|| format!("opening {}", args.metadata.display()))?;
    let items = parse_metadata_stream(BufReader::new(file))?;
    let mut out = args.output.as_deref().map(create).transpose()?;
    let (mut records, mut malformed) = (0u64, 0u64);
    for item in &items {
        match item {
            MetadataItem::Record(r) => {
                records += 1;
                if let Some(w) = out.as_mut() {
                    serde_json::to_writer(&mut *w, r)?;
                    writeln!(w)?;
                }
            }
            MetadataItem::Malformed(m) => {
                malformed += 1;
                warn!("line {}: {}", m.line, m.reason);
            }
        }
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    println!("records: {records}");
    println!("malformed: {malformed}");
    Ok(status(malformed > 0))
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode> {
    let limits = args.limits.limits();
    let mut failed = 0;
    for path in &args.archives {
        let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let id = archive_id(path);
        match validate_archive(&id, &raw, &limits) {
            Ok(a) => println!("ok\t{}\t{:?}\t{} entries", path.display(), a.format, a.entries.len()),
            Err(e) => {
                failed += 1;
                println!("fail\t{}\t{}\t{e}", path.display(), e.kind());
            }
        }
    }
    Ok(status(failed > 0))
}

fn archive_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for suffix in [".tar.gz", ".tgz", ".tar", ".gz", ".tex"] {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_string();
        }
    }
    name
}

fn cmd_extract(args: ExtractArgs) -> Result<ExitCode> {
    let raw = fs::read(&args.archive).with_context(|| format!("reading {}", args.archive.display()))?;
    let id = archive_id(&args.archive);
    let flat = validate_archive(&id, &raw, &args.limits.limits())
        .map_err(anyhow::Error::from)
        .and_then(|a| extract_tex_sources(&a).map_err(anyhow::Error::from))
        .and_then(|p| {
            let missing = match args.missing {
                MissingArg::Drop => MissingPolicy::Drop,
                MissingArg::Error => MissingPolicy::Error,
            };
            let root = if args.concatenate { RootPolicy::Concatenate } else { RootPolicy::Root };
            flatten_project_with(&p, missing, root, args.max_depth).map_err(anyhow::Error::from)
        });
    let flat = match flat {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{}: {e:#}", args.archive.display());
            return Ok(ExitCode::from(EXIT_LOSSES));
        }
    };
    match &args.output {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(flat.text.as_bytes())?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(flat.text.as_bytes())?,
    }
    eprintln!(
        "main={} inlined={} missing_dropped={} repeated={}",
        flat.stats.main_file, flat.stats.files_inlined, flat.stats.missing_dropped, flat.stats.repeated_includes
    );
    Ok(ExitCode::SUCCESS)
}

fn read_input(path: &Path) -> Result<String> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text)?;
    } else {
        text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(text)
}

fn cmd_clean(args: CleanArgs) -> Result<ExitCode> {
    let source = read_input(&args.input)?;
    let doc = clean_document(&args.id, &args.title, &args.abstract_text, &source, &CleanConfig::default());
    if args.json {
        print_json(&doc)?;
    } else {
        let mut out = io::stdout().lock();
        out.write_all(doc.body.as_bytes())?;
        if !doc.body.ends_with('\n') {
            writeln!(out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_filter(args: FilterArgs, exec: &Executor) -> Result<ExitCode> {
    let cfg = args.input.load()?;
    let file = File::open(&cfg.metadata).with_context(|| format!("opening {}", cfg.metadata.display()))?;
    let items = parse_metadata_stream(BufReader::new(file))?;
    let records: Vec<_> = items
        .iter()
        .filter_map(|i| match i {
            MetadataItem::Record(r) => Some(r.clone()),
            MetadataItem::Malformed(_) => None,
        })
        .collect();
    let malformed = items.len() - records.len();
    let outcomes = exec.map(&records, |r| process_paper(r, &cfg));
    let mut accepted_out = args.accepted.as_deref().map(create).transpose()?;
    let mut losses = malformed > 0;
    let mut out = io::stdout().lock();
    for (record, outcome) in records.iter().zip(&outcomes) {
        let line = match outcome {
            PaperOutcome::ArchiveFailure { error } => {
                losses = true;
                json!({"id": record.id, "kind": "archive_failure", "error": error})
            }
            PaperOutcome::ExtractionLoss { error } => {
                losses = true;
                json!({"id": record.id, "kind": "extraction_loss", "error": error})
            }
            PaperOutcome::Rejected { reasons, language } => {
                json!({"id": record.id, "kind": "rejected", "reasons": reasons, "language": language})
            }
            PaperOutcome::Accepted { doc } => {
                if let Some(w) = accepted_out.as_mut() {
                    let rec = json!({
                        "id": doc.paper_id,
                        "text": doc.training_text(),
                        "curriculum_stage1_spans": doc.curriculum.stage1_spans,
                    });
                    serde_json::to_writer(&mut *w, &rec)?;
                    writeln!(w)?;
                }
                json!({"id": record.id, "kind": "accepted", "chars": doc.char_count})
            }
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    if let Some(mut w) = accepted_out {
        w.flush()?;
    }
    if malformed > 0 {
        warn!("{malformed} malformed metadata lines skipped");
    }
    Ok(status(losses))
}

fn cmd_dedup(args: DedupArgs, exec: &Executor) -> Result<ExitCode> {
    let cfg = DedupConfig {
        threshold: args.threshold,
        keep: match args.keep {
            KeepArg::Earliest => KeepPolicy::Earliest,
            KeepArg::Longest => KeepPolicy::Longest,
        },
        candidates: if args.exhaustive { CandidateMode::Exhaustive } else { CandidateMode::Lsh },
        ..DedupConfig::default()
    };
    cfg.validate()?;
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let mut lines = Vec::new();
    let mut docs = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).with_context(|| format!("line {}", n + 1))?;
        let text = v.get("text").and_then(Value::as_str).ok_or_else(|| anyhow!("line {}: no text", n + 1))?;
        let id = v.get("id").and_then(Value::as_str).map_or_else(|| format!("line{}", n + 1), str::to_string);
        docs.push((id, text.to_string()));
        lines.push(line);
    }
    let mut index = match &args.prior_index {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let prior = DedupIndex::read_jsonl(BufReader::new(f))?;
            if prior.header != cfg.header() {
                bail!("prior index {} was built with different parameters", p.display());
            }
            prior
        }
        None => DedupIndex::new(cfg.header()),
    };
    index.extend(&docs, &cfg, exec);
    let outcome = index.cluster(&cfg);
    if let Some(p) = &args.write_index {
        let mut w = create(p)?;
        index.write_jsonl(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = &args.kept {
        let keep: std::collections::HashSet<&str> = outcome.kept.iter().map(String::as_str).collect();
        let mut w = create(p)?;
        for ((id, _), line) in docs.iter().zip(&lines) {
            if keep.contains(id.as_str()) {
                writeln!(w, "{line}")?;
            }
        }
        w.flush()?;
    }
    print_json(&outcome)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_mix(args: MixArgs, exec: &Executor) -> Result<ExitCode> {
    let opts = MixtureOptions { seed: args.seed, shard_target_bytes: args.shard_bytes, config_hash: None };
    fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    let manifest = assemble_mixture(&args.sources, &opts, Path::new("."), &args.output, exec)?;
    print_json(&manifest)?;
    let lost = manifest.source_reports.iter().any(|r| r.skipped_lines > 0);
    Ok(status(lost))
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let path = if args.path.is_dir() { args.path.join(REPORT_JSON) } else { args.path.clone() };
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report: YieldReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if args.json {
        print_json(&report)?;
    } else {
        print!("{}", report.render_table());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_budget(args: BudgetArgs) -> Result<ExitCode> {
    let model = match (&args.params, &args.arch) {
        (Some(p), _) => Some(ModelSpec::Params(*p)),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let arch: ArchitectureSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            Some(ModelSpec::Architecture(arch))
        }
        (None, None) => None,
    };
    if model.is_none() && args.tokens.is_none() && args.gb.is_none() {
        bail!("give at least one of --params, --arch, --tokens or --gb");
    }
    let p = plan(model.as_ref(), args.tokens, args.gb)?;
    if args.json {
        print_json(&p)?;
    } else {
        print!("{}", p.render_table());
    }
    Ok(ExitCode::SUCCESS)
}

/// Documents from text files (one document each) or JSONL files (`text`
/// field per line).
fn read_corpus(paths: &[PathBuf]) -> Result<Vec<String>> {
    let mut docs = Vec::new();
    for path in paths {
        let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
        if !is_jsonl {
            docs.push(read_input(path)?);
            continue;
        }
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
            match v.get("text").and_then(Value::as_str) {
                Some(t) => docs.push(t.to_string()),
                None => warn!("{}:{}: no text field", path.display(), n + 1),
            }
        }
    }
    Ok(docs)
}

fn load_tokenizer(path: &Path) -> Result<TokenizerModel> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    TokenizerModel::load(BufReader::new(file)).with_context(|| format!("loading {}", path.display()))
}

fn cmd_tok_train(args: TokTrainArgs) -> Result<ExitCode> {
    let docs = read_corpus(&args.corpus.inputs)?;
    let cfg = TrainConfig {
        target_vocab: args.vocab_size,
        specials: if args.no_specials { SpecialTokens::none() } else { SpecialTokens::default() },
        byte_fallback: args.byte_fallback,
    };
    let model = train_bpe_with(&docs, &cfg)?;
    let mut w = create(&args.output)?;
    model.save(&mut w)?;
    w.flush()?;
    println!("vocab: {}", model.vocab_size());
    println!("merges: {}", model.merges().len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_tok_encode(args: TokEncodeArgs) -> Result<ExitCode> {
    let model = load_tokenizer(&args.tokenizer)?;
    let text = match args.text {
        Some(t) => t,
        None => read_input(Path::new("-"))?,
    };
    let spans = model.encode_with_offsets(&text)?;
    let mut out = io::stdout().lock();
    if args.show_tokens {
        for s in &spans {
            writeln!(out, "{}\t{:?}", s.id, &text[s.span.clone()])?;
        }
    } else {
        let ids: Vec<String> = spans.iter().map(|s| s.id.to_string()).collect();
        writeln!(out, "{}", ids.join(" "))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_tok_stats(args: TokCorpusArgs, exec: &Executor) -> Result<ExitCode> {
    let model = load_tokenizer(&args.tokenizer)?;
    let docs = read_corpus(&args.corpus.inputs)?;
    print_json(&corpus_token_stats(&model, &docs, exec)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_tok_frag(args: TokFragArgs, exec: &Executor) -> Result<ExitCode> {
    let model = load_tokenizer(&args.inner.tokenizer)?;
    let docs = read_corpus(&args.inner.corpus.inputs)?;
    print_json(&fragmentation_stats(&model, &docs, args.top, exec)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_lint(args: LintArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let summary = ModelConfigSummary::from_json(&value)?;
    let model = load_tokenizer(&args.tokenizer)?;
    let diags = lint_model_config(&summary, &model);
    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        println!("no findings");
    }
    Ok(status(diags.iter().any(|d| d.severity == Severity::Error)))
}

fn cmd_telemetry(args: TelemetryArgs) -> Result<ExitCode> {
    let log = read_run_log(&args.log)?;
    let opts = AnalysisOptions {
        tail_fraction: args.tail_fraction,
        slope_eps: args.slope_eps,
        warmup_steps: args.warmup_steps,
        grad_threshold: args.grad_threshold,
    };
    print_json(&analyze(&log, &opts))?;
    Ok(ExitCode::SUCCESS)
}
