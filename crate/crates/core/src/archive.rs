//! Source-archive validation and LaTeX project flattening.
//!
//! Accepted inputs, detected by magic bytes: gzip-compressed tar, plain tar,
//! a gzip-compressed single file, or a bare TeX file. Decompression is
//! bounded by a byte cap so a crafted high-ratio stream is rejected after
//! reading at most `cap + 1` bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Read};
use std::path::{Component, Path};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latexnorm::scan::{read_brace, read_command};

pub const DEFAULT_MAX_DECOMPRESSED_BYTES: u64 = 512 * 1024 * 1024;
pub const DEFAULT_MAX_ENTRIES: usize = 10_000;
pub const DEFAULT_MAX_INCLUDE_DEPTH: usize = 32;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
const TAR_MAGIC_OFFSET: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchiveLimits {
    pub max_decompressed_bytes: u64,
    pub max_entries: usize,
}

impl Default for ArchiveLimits {
    fn default() -> Self {
        ArchiveLimits { max_decompressed_bytes: DEFAULT_MAX_DECOMPRESSED_BYTES, max_entries: DEFAULT_MAX_ENTRIES }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArchiveError {
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("decompressed size exceeds cap of {cap} bytes")]
    Bomb { cap: u64 },
    #[error("entry path escapes archive root: {0}")]
    Traversal(String),
    #[error("archive has more than {cap} entries")]
    TooManyEntries { cap: usize },
    #[error("archive contains no .tex sources")]
    NoTexSources,
}

impl ArchiveError {
    /// Stable key used in yield accounting.
    pub fn kind(&self) -> &'static str {
        match self {
            ArchiveError::Integrity(_) => "integrity",
            ArchiveError::Bomb { .. } => "bomb",
            ArchiveError::Traversal(_) => "traversal",
            ArchiveError::TooManyEntries { .. } => "too_many_entries",
            ArchiveError::NoTexSources => "no_tex_sources",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlattenError {
    #[error("no file declares a document class")]
    NoMainFile,
    #[error("include cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("missing include target `{target}` referenced from {from}")]
    MissingInclude { from: String, target: String },
    #[error("include depth exceeds {0}")]
    DepthExceeded(usize),
}

impl FlattenError {
    pub fn kind(&self) -> &'static str {
        match self {
            FlattenError::NoMainFile => "no_main_file",
            FlattenError::Cycle(_) => "include_cycle",
            FlattenError::MissingInclude { .. } => "missing_include",
            FlattenError::DepthExceeded(_) => "include_depth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Tex,
    Style,
    Other,
}

impl EntryKind {
    pub fn from_path(path: &str) -> Self {
        let lower = path.to_ascii_lowercase();
        if lower.ends_with(".tex") {
            EntryKind::Tex
        } else if [".sty", ".cls", ".bst", ".def"].iter().any(|s| lower.ends_with(s)) {
            EntryKind::Style
        } else {
            EntryKind::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveEntry {
    pub path: String,
    pub size: u64,
    pub kind: EntryKind,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchiveFormat {
    TarGz,
    Tar,
    GzipSingle,
    Bare,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceArchive {
    pub paper_id: String,
    pub format: ArchiveFormat,
    pub entries: Vec<ArchiveEntry>,
}

/// Reader that fails once more than `cap` bytes have been produced.
struct CappedReader<R> {
    inner: R,
    remaining: u64,
    exceeded: bool,
}

impl<R: Read> Read for CappedReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.remaining == 0 {
            // One probe byte tells "exactly at cap" from "over cap".
            let mut probe = [0u8; 1];
            let n = self.inner.read(&mut probe)?;
            if n > 0 {
                self.exceeded = true;
                return Err(io::Error::other("decompression cap exceeded"));
            }
            return Ok(0);
        }
        let max = buf.len().min(self.remaining as usize);
        let n = self.inner.read(&mut buf[..max])?;
        self.remaining -= n as u64;
        Ok(n)
    }
}

fn is_tar(bytes: &[u8]) -> bool {
    bytes.len() >= TAR_MAGIC_OFFSET + 5 && &bytes[TAR_MAGIC_OFFSET..TAR_MAGIC_OFFSET + 5] == b"ustar"
}

/// Reject absolute paths and any `..` component.
pub fn check_entry_path(path: &str) -> Result<String, ArchiveError> {
    let p = Path::new(path);
    let mut clean = Vec::new();
    for c in p.components() {
        match c {
            Component::Normal(s) => clean.push(s.to_string_lossy().into_owned()),
            Component::CurDir => {}
            Component::ParentDir | Component::RootDir | Component::Prefix(_) => {
                return Err(ArchiveError::Traversal(path.to_string()))
            }
        }
    }
    if clean.is_empty() {
        return Err(ArchiveError::Integrity(format!("empty entry path `{path}`")));
    }
    Ok(clean.join("/"))
}

fn read_tar<R: Read>(reader: R, limits: &ArchiveLimits, budget: &mut u64) -> Result<Vec<ArchiveEntry>, ArchiveError> {
    let mut archive = tar::Archive::new(reader);
    let mut entries = Vec::new();
    let iter = archive.entries().map_err(|e| ArchiveError::Integrity(format!("tar: {e}")))?;
    for entry in iter {
        let mut entry = entry.map_err(|e| map_io(e, limits))?;
        let etype = entry.header().entry_type();
        let raw_path = String::from_utf8_lossy(&entry.path_bytes()).into_owned();
        if etype.is_dir() || etype.is_pax_global_extensions() {
            continue;
        }
        let path = check_entry_path(&raw_path)?;
        if !etype.is_file() {
            // Links and devices carry no content we use.
            continue;
        }
        if entries.len() >= limits.max_entries {
            return Err(ArchiveError::TooManyEntries { cap: limits.max_entries });
        }
        let size = entry.header().size().map_err(|e| ArchiveError::Integrity(format!("tar header: {e}")))?;
        if size > *budget {
            return Err(ArchiveError::Bomb { cap: limits.max_decompressed_bytes });
        }
        let mut data = Vec::with_capacity(size.min(1 << 20) as usize);
        entry.read_to_end(&mut data).map_err(|e| map_io(e, limits))?;
        if data.len() as u64 != size {
            return Err(ArchiveError::Integrity(format!("truncated entry `{path}`")));
        }
        *budget -= size;
        entries.push(ArchiveEntry { kind: EntryKind::from_path(&path), path, size, data });
    }
    Ok(entries)
}

fn map_io(e: io::Error, limits: &ArchiveLimits) -> ArchiveError {
    if e.to_string().contains("decompression cap exceeded") {
        ArchiveError::Bomb { cap: limits.max_decompressed_bytes }
    } else {
        ArchiveError::Integrity(e.to_string())
    }
}

fn bare_entry(paper_id: &str, data: Vec<u8>) -> Result<ArchiveEntry, ArchiveError> {
    if data.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(ArchiveError::Integrity("empty source".into()));
    }
    if data.iter().take(8192).any(|&b| b == 0) {
        return Err(ArchiveError::Integrity("unrecognized binary format".into()));
    }
    let stem: String =
        paper_id.chars().map(|c| if c.is_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    let path = format!("{}.tex", if stem.is_empty() { "main" } else { &stem });
    Ok(ArchiveEntry { size: data.len() as u64, kind: EntryKind::Tex, path, data })
}

/// Enumerate and bound-check every entry of a downloaded source blob.
pub fn validate_archive(paper_id: &str, raw: &[u8], limits: &ArchiveLimits) -> Result<SourceArchive, ArchiveError> {
    let cap = limits.max_decompressed_bytes;
    let (format, entries) = if raw.starts_with(&GZIP_MAGIC) {
        let mut capped = CappedReader { inner: GzDecoder::new(raw), remaining: cap, exceeded: false };
        // Sniff the first block to tell a tarball from a single file.
        let mut head = vec![0u8; 512];
        let mut filled = 0;
        while filled < head.len() {
            match capped.read(&mut head[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) => return Err(if capped.exceeded { ArchiveError::Bomb { cap } } else { map_io(e, limits) }),
            }
        }
        head.truncate(filled);
        if is_tar(&head) {
            let mut budget = cap;
            let mut reader = io::Cursor::new(head).chain(capped);
            let entries = read_tar(&mut reader, limits, &mut budget)?;
            // The tar reader stops at the end-of-archive blocks; drain the
            // rest so the gzip trailer checksum is verified.
            io::copy(&mut reader, &mut io::sink()).map_err(|e| map_io(e, limits))?;
            (ArchiveFormat::TarGz, entries)
        } else {
            let mut data = head;
            if let Err(e) = capped.read_to_end(&mut data) {
                return Err(if capped.exceeded { ArchiveError::Bomb { cap } } else { map_io(e, limits) });
            }
            (ArchiveFormat::GzipSingle, vec![bare_entry(paper_id, data)?])
        }
    } else if is_tar(raw) {
        let mut budget = cap;
        (ArchiveFormat::Tar, read_tar(raw, limits, &mut budget)?)
    } else {
        if raw.len() as u64 > cap {
            return Err(ArchiveError::Bomb { cap });
        }
        (ArchiveFormat::Bare, vec![bare_entry(paper_id, raw.to_vec())?])
    };
    if entries.is_empty() {
        return Err(ArchiveError::Integrity("archive has no file entries".into()));
    }
    Ok(SourceArchive { paper_id: paper_id.to_string(), format, entries })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatexProject {
    pub paper_id: String,
    pub files: BTreeMap<String, String>,
    pub main_file: Option<String>,
}

/// Decode the `.tex` entries, replacing invalid UTF-8.
pub fn extract_tex_sources(archive: &SourceArchive) -> Result<LatexProject, ArchiveError> {
    let files: BTreeMap<String, String> = archive
        .entries
        .iter()
        .filter(|e| e.kind == EntryKind::Tex)
        .map(|e| (e.path.clone(), String::from_utf8_lossy(&e.data).into_owned()))
        .collect();
    if files.is_empty() {
        return Err(ArchiveError::NoTexSources);
    }
    Ok(LatexProject { paper_id: archive.paper_id.clone(), files, main_file: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    Error,
    #[default]
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootPolicy {
    /// Require a file with a document-class declaration.
    #[default]
    Root,
    /// Without a root, concatenate every file in path order.
    Concatenate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlattenStats {
    pub main_file: String,
    pub files_inlined: usize,
    pub missing_dropped: usize,
    pub repeated_includes: usize,
    pub concatenated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flattened {
    pub text: String,
    pub stats: FlattenStats,
}

fn declares_document_class(text: &str) -> bool {
    text.lines().any(|line| {
        let code = line.split('%').next().unwrap_or("");
        code.contains("\\documentclass") || code.contains("\\documentstyle")
    })
}

/// Root file: declares a document class; ties go to the largest file, then
/// the lexicographically smallest path.
pub fn select_main_file(project: &LatexProject) -> Option<String> {
    project
        .files
        .iter()
        .filter(|(_, text)| declares_document_class(text))
        .max_by(|(pa, ta), (pb, tb)| ta.len().cmp(&tb.len()).then_with(|| pb.cmp(pa)))
        .map(|(p, _)| p.clone())
}

fn normalize_rel(path: &str) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for part in path.split('/') {
        match part {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            p => parts.push(p),
        }
    }
    parts.join("/")
}

fn resolve_include(project: &LatexProject, from: &str, target: &str) -> Option<String> {
    let target = target.trim();
    let dir = from.rsplit_once('/').map_or("", |(d, _)| d);
    let mut candidates = vec![normalize_rel(target)];
    if !dir.is_empty() {
        candidates.push(normalize_rel(&format!("{dir}/{target}")));
    }
    for base in candidates {
        if project.files.contains_key(&base) {
            return Some(base);
        }
        let with_ext = format!("{base}.tex");
        if project.files.contains_key(&with_ext) {
            return Some(with_ext);
        }
    }
    None
}

struct Flattener<'a> {
    project: &'a LatexProject,
    policy: MissingPolicy,
    max_depth: usize,
    stack: Vec<String>,
    inlined: BTreeSet<String>,
    stats: FlattenStats,
}

impl Flattener<'_> {
    fn inline(&mut self, path: &str, out: &mut String) -> Result<(), FlattenError> {
        if self.stack.len() > self.max_depth {
            return Err(FlattenError::DepthExceeded(self.max_depth));
        }
        self.stack.push(path.to_string());
        self.inlined.insert(path.to_string());
        self.stats.files_inlined += 1;
        let text = &self.project.files[path];
        let b = text.as_bytes();
        let mut i = 0;
        let mut copied = 0;
        while i < b.len() {
            match b[i] {
                b'%' => {
                    i = text[i..].find('\n').map_or(b.len(), |k| i + k);
                }
                b'\\' => {
                    let Some((name, after)) = read_command(text, i) else {
                        i += 2;
                        continue;
                    };
                    if name != "input" && name != "include" {
                        i = after;
                        continue;
                    }
                    let (target, end) = match read_brace(text, after) {
                        Some((inner, end)) => (text[inner].to_string(), end),
                        None => {
                            // `\input file` form: target runs to whitespace.
                            let rest = &text[after..];
                            let trimmed = rest.trim_start_matches([' ', '\t']);
                            let skipped = rest.len() - trimmed.len();
                            let len = trimmed
                                .find(|c: char| c.is_whitespace() || c == '\\' || c == '}' || c == '%')
                                .unwrap_or(trimmed.len());
                            if skipped == 0 || len == 0 {
                                i = after;
                                continue;
                            }
                            (trimmed[..len].to_string(), after + skipped + len)
                        }
                    };
                    out.push_str(&text[copied..i]);
                    match resolve_include(self.project, path, &target) {
                        Some(resolved) => {
                            if let Some(pos) = self.stack.iter().position(|p| *p == resolved) {
                                let mut cycle = self.stack[pos..].to_vec();
                                cycle.push(resolved);
                                return Err(FlattenError::Cycle(cycle));
                            }
                            if self.inlined.contains(&resolved) {
                                self.stats.repeated_includes += 1;
                            } else {
                                self.inline(&resolved, out)?;
                            }
                        }
                        None => match self.policy {
                            MissingPolicy::Error => {
                                return Err(FlattenError::MissingInclude { from: path.to_string(), target })
                            }
                            MissingPolicy::Drop => self.stats.missing_dropped += 1,
                        },
                    }
                    i = end;
                    copied = end;
                }
                _ => i += 1,
            }
        }
        out.push_str(&text[copied..]);
        self.stack.pop();
        Ok(())
    }
}

/// Inline `\input` / `\include` directives from the root file down. Each
/// file is inlined at its first reference only; later references are
/// dropped and counted.
pub fn flatten_project(project: &LatexProject, policy: MissingPolicy) -> Result<Flattened, FlattenError> {
    flatten_project_with(project, policy, RootPolicy::Root, DEFAULT_MAX_INCLUDE_DEPTH)
}

pub fn flatten_project_with(
    project: &LatexProject,
    policy: MissingPolicy,
    root: RootPolicy,
    max_depth: usize,
) -> Result<Flattened, FlattenError> {
    let main =
        project.main_file.clone().filter(|m| project.files.contains_key(m)).or_else(|| select_main_file(project));
    let Some(main) = main else {
        return match root {
            RootPolicy::Root => Err(FlattenError::NoMainFile),
            RootPolicy::Concatenate => {
                let text = project.files.values().map(String::as_str).collect::<Vec<_>>().join("\n");
                Ok(Flattened {
                    text,
                    stats: FlattenStats {
                        files_inlined: project.files.len(),
                        concatenated: true,
                        ..Default::default()
                    },
                })
            }
        };
    };
    let mut f = Flattener {
        project,
        policy,
        max_depth,
        stack: Vec::new(),
        inlined: BTreeSet::new(),
        stats: FlattenStats { main_file: main.clone(), ..Default::default() },
    };
    let mut out = String::new();
    f.inline(&main, &mut out)?;
    Ok(Flattened { text: out, stats: f.stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    pub(crate) fn tar_bytes(files: &[(&str, &str)]) -> Vec<u8> {
        let mut builder = tar::Builder::new(Vec::new());
        for (path, text) in files {
            let mut header = tar::Header::new_ustar();
            header.set_size(text.len() as u64);
            header.set_mode(0o644);
            header.set_path(path).unwrap();
            header.set_cksum();
            builder.append(&header, text.as_bytes()).unwrap();
        }
        builder.into_inner().unwrap()
    }

    fn gzip(bytes: &[u8]) -> Vec<u8> {
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(bytes).unwrap();
        enc.finish().unwrap()
    }

    fn project(files: &[(&str, &str)]) -> LatexProject {
        LatexProject {
            paper_id: "p".into(),
            files: files.iter().map(|(p, t)| (p.to_string(), t.to_string())).collect(),
            main_file: None,
        }
    }

    #[test]
    fn valid_targz_with_two_tex_files() {
        let raw = gzip(&tar_bytes(&[("main.tex", "\\documentclass{article}"), ("sec1.tex", "S")]));
        let a = validate_archive("p", &raw, &ArchiveLimits::default()).unwrap();
        assert_eq!(a.format, ArchiveFormat::TarGz);
        assert_eq!(a.entries.len(), 2);
        assert!(a.entries.iter().all(|e| e.kind == EntryKind::Tex));
    }

    #[test]
    fn truncated_gzip_is_integrity_error() {
        let raw = gzip(&tar_bytes(&[("main.tex", &"x".repeat(5000))]));
        let cut = &raw[..raw.len() / 2];
        assert!(matches!(validate_archive("p", cut, &ArchiveLimits::default()), Err(ArchiveError::Integrity(_))));
    }

    #[test]
    fn traversal_is_rejected() {
        let mut header = tar::Header::new_gnu();
        let name = b"../../etc/x.tex";
        header.as_old_mut().name[..name.len()].copy_from_slice(name);
        header.set_size(1);
        header.set_mode(0o644);
        header.set_entry_type(tar::EntryType::Regular);
        header.set_cksum();
        let mut builder = tar::Builder::new(Vec::new());
        builder.append(&header, &b"x"[..]).unwrap();
        let raw = builder.into_inner().unwrap();
        // GNU headers carry "ustar " magic as well.
        assert!(matches!(
            validate_archive("p", &raw, &ArchiveLimits::default()),
            Err(ArchiveError::Traversal(p)) if p == "../../etc/x.tex"
        ));
    }

    #[test]
    fn bomb_is_rejected_without_reading_everything() {
        let raw = gzip(&vec![b'a'; 4 * 1024 * 1024]);
        let limits = ArchiveLimits { max_decompressed_bytes: 64 * 1024, ..Default::default() };
        assert_eq!(validate_archive("p", &raw, &limits), Err(ArchiveError::Bomb { cap: 64 * 1024 }));
        let tarred = gzip(&tar_bytes(&[("main.tex", &"b".repeat(1 << 20))]));
        assert!(matches!(validate_archive("p", &tarred, &limits), Err(ArchiveError::Bomb { .. })));
    }

    #[test]
    fn exactly_at_cap_is_accepted() {
        let raw = gzip(&vec![b'a'; 1000]);
        let limits = ArchiveLimits { max_decompressed_bytes: 1000, ..Default::default() };
        assert!(validate_archive("p", &raw, &limits).is_ok());
    }

    #[test]
    fn entry_cap() {
        let files: Vec<(String, String)> = (0..5).map(|i| (format!("f{i}.tex"), "x".to_string())).collect();
        let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let limits = ArchiveLimits { max_entries: 3, ..Default::default() };
        assert_eq!(validate_archive("p", &tar_bytes(&refs), &limits), Err(ArchiveError::TooManyEntries { cap: 3 }));
    }

    #[test]
    fn bare_and_gzipped_single_files() {
        let a = validate_archive("math/0101001", b"\\documentclass{article}", &ArchiveLimits::default()).unwrap();
        assert_eq!(a.format, ArchiveFormat::Bare);
        assert_eq!(a.entries[0].path, "math_0101001.tex");
        let g = validate_archive("p", &gzip(b"\\documentclass{article}"), &ArchiveLimits::default()).unwrap();
        assert_eq!(g.format, ArchiveFormat::GzipSingle);
        assert!(matches!(validate_archive("p", b"", &ArchiveLimits::default()), Err(ArchiveError::Integrity(_))));
        assert!(matches!(
            validate_archive("p", &[0u8, 1, 2, 3], &ArchiveLimits::default()),
            Err(ArchiveError::Integrity(_))
        ));
    }

    #[test]
    fn corrupt_tar_checksum() {
        let mut raw = tar_bytes(&[("main.tex", "hello")]);
        raw[148] ^= 0x55; // checksum field
        assert!(matches!(validate_archive("p", &raw, &ArchiveLimits::default()), Err(ArchiveError::Integrity(_))));
    }

    #[test]
    fn extraction_keeps_only_tex() {
        let raw = tar_bytes(&[("main.tex", "x"), ("refs.bib", "@a{}"), ("fig.png", "\u{1}png")]);
        let a = validate_archive("p", &raw, &ArchiveLimits::default()).unwrap();
        let p = extract_tex_sources(&a).unwrap();
        assert_eq!(p.files.len(), 1);
        assert!(p.main_file.is_none());

        let raw = tar_bytes(&[("a.tex", "1"), ("b/c.tex", "2"), ("d.tex", "3")]);
        let p = extract_tex_sources(&validate_archive("p", &raw, &ArchiveLimits::default()).unwrap()).unwrap();
        assert_eq!(p.files.len(), 3);

        let raw = tar_bytes(&[("refs.bib", "x")]);
        let a = validate_archive("p", &raw, &ArchiveLimits::default()).unwrap();
        assert_eq!(extract_tex_sources(&a), Err(ArchiveError::NoTexSources));
    }

    #[test]
    fn non_utf8_is_replaced() {
        let mut builder = tar::Builder::new(Vec::new());
        let mut header = tar::Header::new_ustar();
        header.set_path("main.tex").unwrap();
        header.set_size(3);
        header.set_cksum();
        builder.append(&header, &[b'a', 0xff, b'b'][..]).unwrap();
        let a = validate_archive("p", &builder.into_inner().unwrap(), &ArchiveLimits::default()).unwrap();
        let p = extract_tex_sources(&a).unwrap();
        assert_eq!(p.files["main.tex"], "a\u{fffd}b");
    }

    #[test]
    fn flattens_input_at_directive_site() {
        let p = project(&[("main.tex", "\\documentclass{article}\nA \\input{sec1} B"), ("sec1.tex", "S1")]);
        let f = flatten_project(&p, MissingPolicy::Drop).unwrap();
        assert_eq!(f.text, "\\documentclass{article}\nA S1 B");
        assert_eq!(f.stats.main_file, "main.tex");
    }

    #[test]
    fn bare_input_and_subdirectories() {
        let p = project(&[
            ("main.tex", "\\documentclass{article}\n\\input sections/a\n\\include{sections/b.tex}"),
            ("sections/a.tex", "A"),
            ("sections/b.tex", "B"),
        ]);
        assert_eq!(flatten_project(&p, MissingPolicy::Error).unwrap().text, "\\documentclass{article}\nA\nB");
    }

    #[test]
    fn cycle_is_reported() {
        let p = project(&[("a.tex", "\\documentclass{x}\\input{b}"), ("b.tex", "\\input{a}")]);
        assert_eq!(
            flatten_project(&p, MissingPolicy::Drop),
            Err(FlattenError::Cycle(vec!["a.tex".into(), "b.tex".into(), "a.tex".into()]))
        );
    }

    #[test]
    fn missing_include_policies() {
        let p = project(&[("main.tex", "\\documentclass{x}\\input{gone}")]);
        let f = flatten_project(&p, MissingPolicy::Drop).unwrap();
        assert_eq!(f.text, "\\documentclass{x}");
        assert_eq!(f.stats.missing_dropped, 1);
        assert!(matches!(flatten_project(&p, MissingPolicy::Error), Err(FlattenError::MissingInclude { .. })));
    }

    #[test]
    fn commented_directives_are_ignored() {
        let p = project(&[("main.tex", "\\documentclass{x}\n% \\input{old}\nbody")]);
        assert_eq!(flatten_project(&p, MissingPolicy::Error).unwrap().text, "\\documentclass{x}\n% \\input{old}\nbody");
    }

    #[test]
    fn main_file_tie_breaks() {
        let p = project(&[
            ("b.tex", "\\documentclass{a}xx"),
            ("a.tex", "\\documentclass{a}xx"),
            ("c.tex", "\\documentclass{a}"),
            ("d.tex", "no class here at all, but long"),
        ]);
        assert_eq!(select_main_file(&p).as_deref(), Some("a.tex"));
        let none = project(&[("x.tex", "text"), ("y.tex", "more")]);
        assert_eq!(flatten_project(&none, MissingPolicy::Drop), Err(FlattenError::NoMainFile));
        let cat = flatten_project_with(&none, MissingPolicy::Drop, RootPolicy::Concatenate, 32).unwrap();
        assert_eq!(cat.text, "text\nmore");
    }

    #[test]
    fn repeated_include_inlined_once() {
        let p = project(&[("m.tex", "\\documentclass{a}\\input{s}\\input{s}"), ("s.tex", "S")]);
        let f = flatten_project(&p, MissingPolicy::Drop).unwrap();
        assert_eq!(f.text, "\\documentclass{a}S");
        assert_eq!(f.stats.repeated_includes, 1);
    }

    #[test]
    fn depth_cap() {
        let mut files: Vec<(String, String)> =
            (0..40).map(|i| (format!("f{i}.tex"), format!("\\input{{f{}}}", i + 1))).collect();
        files[0].1 = format!("\\documentclass{{a}}{}", files[0].1);
        files.push(("f40.tex".into(), "end".into()));
        let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(flatten_project(&project(&refs), MissingPolicy::Drop), Err(FlattenError::DepthExceeded(32)));
    }
}
