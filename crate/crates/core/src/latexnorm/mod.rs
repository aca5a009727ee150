//! LaTeX cleaning: macro expansion, noise removal with math preserved
//! verbatim, and curriculum tagging.
//!
//! Output stays LaTeX. Section headings, theorem-like environment markers
//! and all math survive; comments, preamble, floats, bibliographies and
//! formatting commands do not.

mod curriculum;
mod macros;
mod normalize;
pub(crate) mod scan;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use curriculum::{section_headings, segment_curriculum, CurriculumTags, Heading};
pub use macros::{expand_macros, Expansion, MacroDef, MacroTable, DEFAULT_MAX_DEPTH};
pub use normalize::{
    normalize_latex, normalize_latex_with, strip_comments, NormalizeConfig, NormalizedBody, ReferenceMode,
    RemovalClass, REFERENCE_PLACEHOLDER,
};

use scan::{char_len_at, find_env_end, find_unescaped, read_begin, read_command, read_verb};

pub const DEFAULT_REMOVED_ENVIRONMENTS: &[&str] =
    &["figure", "figure*", "table", "table*", "tikzpicture", "thebibliography"];

pub const DEFAULT_MATH_ENVIRONMENTS: &[&str] = &[
    "equation",
    "equation*",
    "align",
    "align*",
    "gather",
    "gather*",
    "multline",
    "multline*",
    "eqnarray",
    "eqnarray*",
    "flalign",
    "flalign*",
    "alignat",
    "alignat*",
    "displaymath",
    "math",
];

pub const DEFAULT_STRUCTURAL_ENVIRONMENTS: &[&str] =
    &["theorem", "lemma", "proposition", "corollary", "proof", "definition", "remark"];

pub const DEFAULT_VERBATIM_ENVIRONMENTS: &[&str] = &["verbatim", "verbatim*", "lstlisting", "minted"];

/// Byte ranges of math in `source`: `$…$`, `$$…$$`, `\(…\)`, `\[…\]` and
/// the default math environments. Comments and verbatim material are
/// skipped, and an unclosed opener ends the scan.
pub fn math_spans(source: &str) -> Vec<Range<usize>> {
    let b = source.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'%' => i = source[i..].find('\n').map_or(b.len(), |k| i + k),
            b'$' => {
                let display = b.get(i + 1) == Some(&b'$');
                let (open, close) = if display { (2, "$$") } else { (1, "$") };
                match find_unescaped(source, i + open, close) {
                    Some(j) => {
                        spans.push(i..j + close.len());
                        i = j + close.len();
                    }
                    None => break,
                }
            }
            b'\\' => {
                if let Some(end) = read_verb(source, i) {
                    i = end;
                    continue;
                }
                if let Some((env, body)) = read_begin(source, i) {
                    let math = DEFAULT_MATH_ENVIRONMENTS.contains(&env);
                    if math || DEFAULT_VERBATIM_ENVIRONMENTS.contains(&env) {
                        match find_env_end(source, body, env, math) {
                            Some((_, end)) => {
                                if math {
                                    spans.push(i..end);
                                }
                                i = end;
                            }
                            None => break,
                        }
                    } else {
                        i = body;
                    }
                    continue;
                }
                if let Some((_, after)) = read_command(source, i) {
                    i = after;
                    continue;
                }
                match b.get(i + 1) {
                    Some(b'(') | Some(b'[') => {
                        let close = if b[i + 1] == b'(' { "\\)" } else { "\\]" };
                        match find_unescaped(source, i + 2, close) {
                            Some(j) => {
                                spans.push(i..j + 2);
                                i = j + 2;
                            }
                            None => break,
                        }
                    }
                    Some(_) => i += 1 + char_len_at(source, i + 1),
                    None => i += 1,
                }
            }
            _ => i += char_len_at(source, i),
        }
    }
    spans
}

/// A cleaned paper ready for filtering and mixing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanDocument {
    pub paper_id: String,
    pub title: String,
    pub abstract_text: String,
    pub body: String,
    /// Length of `body` in Unicode scalar values.
    pub char_count: usize,
    pub math_span_count: usize,
    pub removed_counters: BTreeMap<RemovalClass, u64>,
    pub curriculum: CurriculumTags,
}

pub const TEXT_SEPARATOR: &str = "\n\n";

impl CleanDocument {
    /// Assemble from a normalized body and tag curriculum spans.
    pub fn new(paper_id: &str, title: &str, abstract_text: &str, normalized: NormalizedBody) -> Self {
        let mut doc = CleanDocument {
            paper_id: paper_id.to_string(),
            title: title.trim().to_string(),
            abstract_text: abstract_text.trim().to_string(),
            char_count: normalized.body.chars().count(),
            body: normalized.body,
            math_span_count: normalized.math_span_count,
            removed_counters: normalized.removed,
            curriculum: CurriculumTags::default(),
        };
        doc.curriculum = segment_curriculum(&doc);
        doc
    }

    /// Offset of the body inside [`training_text`](Self::training_text).
    pub fn body_offset(&self) -> usize {
        if self.abstract_text.is_empty() {
            0
        } else {
            self.abstract_text.len() + TEXT_SEPARATOR.len()
        }
    }

    /// Abstract and body joined by a blank line. Curriculum spans are byte
    /// offsets into this string.
    pub fn training_text(&self) -> String {
        if self.abstract_text.is_empty() {
            self.body.clone()
        } else {
            format!("{}{}{}", self.abstract_text, TEXT_SEPARATOR, self.body)
        }
    }

    /// Title, abstract and body, as seen by language identification.
    pub fn language_text(&self) -> String {
        format!("{}\n{}\n{}", self.title, self.abstract_text, self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub max_macro_depth: usize,
    pub normalize: NormalizeConfig,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig { max_macro_depth: DEFAULT_MAX_DEPTH, normalize: NormalizeConfig::default() }
    }
}

/// Expand macros, normalize and tag one flattened source.
pub fn clean_document(
    paper_id: &str,
    title: &str,
    abstract_text: &str,
    flattened: &str,
    cfg: &CleanConfig,
) -> CleanDocument {
    let expansion = expand_macros(flattened, cfg.max_macro_depth);
    let mut normalized = normalize_latex_with(&expansion.text, &cfg.normalize);
    if expansion.depth_exceeded > 0 {
        *normalized.removed.entry(RemovalClass::MacroDepth).or_default() += expansion.depth_exceeded as u64;
    }
    CleanDocument::new(paper_id, title, abstract_text, normalized)
}
