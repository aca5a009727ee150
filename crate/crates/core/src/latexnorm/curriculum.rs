//! Curriculum tagging: stage 1 covers the abstract plus introduction and
//! conclusion sections; stage 2 is always the whole document.

use serde::{Deserialize, Serialize};

use super::scan::{char_len_at, read_brace, read_command, skip_spaces};
use super::CleanDocument;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumTags {
    /// Ascending, non-overlapping byte ranges into the training text.
    pub stage1_spans: Vec<(usize, usize)>,
    pub stage2_full: bool,
}

impl Default for CurriculumTags {
    fn default() -> Self {
        CurriculumTags { stage1_spans: Vec::new(), stage2_full: true }
    }
}

const STAGE1_STEMS: &[&str] = &["introduction", "conclusion", "concluding"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heading {
    pub level: u8,
    pub title: String,
    pub start: usize,
}

/// `\chapter` / `\section` headings in `body`, plus `\appendix` as a level-0
/// boundary with an empty title.
pub fn section_headings(body: &str) -> Vec<Heading> {
    let b = body.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if b[i] != b'\\' {
            i += char_len_at(body, i);
            continue;
        }
        let Some((name, after)) = read_command(body, i) else {
            i += 1 + if i + 1 < b.len() { char_len_at(body, i + 1) } else { 0 };
            continue;
        };
        let level = match name {
            "chapter" | "appendix" => Some(0),
            "section" => Some(1),
            _ => None,
        };
        if let Some(level) = level {
            if name == "appendix" {
                out.push(Heading { level, title: String::new(), start: i });
            } else {
                let mut j = after;
                if b.get(j) == Some(&b'*') {
                    j += 1;
                }
                if let Some((inner, _)) = read_brace(body, skip_spaces(body, j)) {
                    out.push(Heading { level, title: body[inner].to_string(), start: i });
                }
            }
        }
        i = after;
    }
    out
}

fn is_stage1_heading(title: &str) -> bool {
    let t = title.to_lowercase();
    STAGE1_STEMS.iter().any(|s| t.contains(s))
}

pub fn segment_curriculum(doc: &CleanDocument) -> CurriculumTags {
    let mut spans = Vec::new();
    if !doc.abstract_text.is_empty() {
        spans.push((0, doc.abstract_text.len()));
    }
    let offset = doc.body_offset();
    let headings = section_headings(&doc.body);
    for (k, h) in headings.iter().enumerate() {
        if h.title.is_empty() || !is_stage1_heading(&h.title) {
            continue;
        }
        let end = headings[k + 1..].iter().find(|n| n.level <= h.level).map_or(doc.body.len(), |n| n.start);
        let end = doc.body[..end].trim_end().len();
        if end > h.start {
            spans.push((offset + h.start, offset + end));
        }
    }
    CurriculumTags { stage1_spans: spans, stage2_full: true }
}

#[cfg(test)]
mod tests {
    use super::super::{CleanDocument, NormalizedBody};
    use proptest::prelude::*;

    fn doc(abstract_text: &str, body: &str) -> CleanDocument {
        CleanDocument::new(
            "id",
            "title",
            abstract_text,
            NormalizedBody { body: body.to_string(), ..Default::default() },
        )
    }

    #[test]
    fn intro_and_conclusion_tagged() {
        let body = "\\section{Introduction}\nWe study.\n\n\\section{Method}\nDetails.\n\n\\section{Conclusions}\nDone.";
        let d = doc("Abstract here.", body);
        let spans = &d.curriculum.stage1_spans;
        assert_eq!(spans.len(), 3);
        let text = d.training_text();
        assert_eq!(&text[spans[0].0..spans[0].1], "Abstract here.");
        assert_eq!(&text[spans[1].0..spans[1].1], "\\section{Introduction}\nWe study.");
        assert_eq!(&text[spans[2].0..spans[2].1], "\\section{Conclusions}\nDone.");
        assert!(d.curriculum.stage2_full);
    }

    #[test]
    fn subsections_stay_inside_their_section() {
        let body = "\\section{Introduction} a \\subsection{Background} b \\section{Results} c";
        let d = doc("", body);
        let (s, e) = d.curriculum.stage1_spans[0];
        assert_eq!(&d.training_text()[s..e], "\\section{Introduction} a \\subsection{Background} b");
    }

    #[test]
    fn concluding_remarks_and_appendix_boundary() {
        let body = "\\section*{Concluding remarks} fin \\appendix \\section{Proofs} p";
        let d = doc("", body);
        let (s, e) = d.curriculum.stage1_spans[0];
        assert_eq!(&d.training_text()[s..e], "\\section*{Concluding remarks} fin");
    }

    #[test]
    fn no_sections_gives_abstract_only() {
        let d = doc("Abs.", "Plain text without headings.");
        assert_eq!(d.curriculum.stage1_spans, vec![(0, 4)]);
    }

    #[test]
    fn empty_body() {
        let d = doc("Abs.", "");
        assert_eq!(d.curriculum.stage1_spans, vec![(0, 4)]);
        assert!(d.curriculum.stage2_full);
    }

    proptest! {
        #[test]
        fn spans_are_ordered_disjoint_and_in_bounds(
            parts in proptest::collection::vec(
                (prop_oneof![Just("Introduction"), Just("Conclusion"), Just("Method"), Just("")],
                 "[a-z \n]{0,20}",
                 any::<bool>()),
                0..8),
            abs in "[a-zA-Z .]{0,30}",
        ) {
            let mut body = String::new();
            for (title, text, sub) in &parts {
                if title.is_empty() { body.push_str("\\appendix "); }
                else if *sub { body.push_str(&format!("\\subsection{{{title}}}")); }
                else { body.push_str(&format!("\\section{{{title}}}")); }
                body.push_str(text);
            }
            let d = doc(&abs, &body);
            let len = d.training_text().len();
            let mut prev_end = 0;
            for &(s, e) in &d.curriculum.stage1_spans {
                prop_assert!(s <= e && e <= len);
                prop_assert!(s >= prev_end);
                prev_end = e;
            }
        }
    }
}
