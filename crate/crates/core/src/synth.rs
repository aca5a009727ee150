//! Seeded synthetic fixtures: LaTeX papers, archives and metadata with
//! planted violations whose expected yield is known in advance.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dedup::{shingle_hashes, DEFAULT_SHINGLE_WIDTH};
use crate::latexnorm::{clean_document, CleanConfig};
use crate::metadata::RejectReason;
use crate::mixture::YieldCounters;

const STOP_EN: &[&str] = &[
    "the", "of", "and", "to", "in", "is", "that", "for", "we", "this", "with", "as", "by", "on", "are", "be", "which",
    "from", "an", "can", "these", "if", "then", "our", "not", "all", "at", "has", "its", "each",
];
const CONTENT_EN: &[&str] = &[
    "theorem",
    "lemma",
    "operator",
    "manifold",
    "space",
    "function",
    "bound",
    "estimate",
    "algebra",
    "module",
    "group",
    "kernel",
    "measure",
    "sequence",
    "energy",
    "field",
    "model",
    "network",
    "gradient",
    "entropy",
    "sample",
    "matrix",
    "vector",
    "curvature",
    "spectrum",
    "invariant",
    "category",
    "sheaf",
    "scheme",
    "graph",
    "vertex",
    "edge",
    "algorithm",
    "complexity",
    "loss",
    "parameter",
    "proof",
    "result",
    "condition",
    "limit",
];
const STOP_FR: &[&str] = &[
    "le", "la", "les", "de", "des", "du", "et", "est", "un", "une", "que", "dans", "pour", "sur", "par", "nous",
    "avec", "qui", "ce", "cette", "sont", "pas", "plus", "au", "donc", "ainsi",
];
const CONTENT_FR: &[&str] = &[
    "théorème",
    "lemme",
    "espace",
    "fonction",
    "opérateur",
    "groupe",
    "mesure",
    "suite",
    "démonstration",
    "résultat",
    "borne",
    "variété",
    "noyau",
    "champ",
    "modèle",
];
const STOP_DE: &[&str] = &[
    "der", "die", "das", "und", "ist", "von", "mit", "den", "dem", "ein", "eine", "wir", "für", "auf", "nicht", "sich",
    "zu", "auch", "als", "wird", "durch", "gilt",
];
const CONTENT_DE: &[&str] = &[
    "Satz",
    "Beweis",
    "Raum",
    "Funktion",
    "Gruppe",
    "Operator",
    "Folge",
    "Ergebnis",
    "Menge",
    "Schranke",
    "Kern",
    "Feld",
    "Modell",
    "Abbildung",
    "Lemma",
];
const SYLLABLES: &[&str] = &[
    "ka", "ro", "mi", "ten", "vor", "lu", "sa", "pe", "dri", "nox", "bel", "qua", "zi", "fen", "tor", "ul", "gra",
    "mo", "shi", "pla",
];
const INLINE_MATH: &[&str] = &[
    "$x_{i}^{2} + y_{i}^{2}$",
    "$\\alpha \\le \\beta$",
    "$f(x) = \\sum_{k=0}^{n} a_k x^k$",
    "$\\|u\\|_{L^2} < \\epsilon$",
    "$G \\cong H \\times K$",
    "$\\int_0^1 g(t)\\,dt$",
    "$\\mathcal{O}(n \\log n)$",
    "$\\lambda_{\\max}(A)$",
];
const DISPLAY_MATH: &[&str] = &[
    "\\begin{equation}\n  E(u) = \\frac{1}{2} \\int_\\Omega |\\nabla u|^2 \\, dx\n\\end{equation}",
    "\\[\n  \\sum_{n=1}^{\\infty} \\frac{1}{n^2} = \\frac{\\pi^2}{6}\n\\]",
    "\\begin{align}\n  a &= b + c \\\\\n  d &= e \\cdot f\n\\end{align}",
    "$$\\det(A - \\lambda I) = 0$$",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lang {
    En,
    Fr,
    De,
}

fn nonce_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=4);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

/// Word-level paragraph model, so near-duplicates can be planted by
/// swapping individual words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paragraph {
    pub words: Vec<String>,
}

impl Paragraph {
    pub fn render(&self) -> String {
        self.words.join(" ")
    }
}

pub fn paragraph(rng: &mut ChaCha8Rng, lang: Lang, lexicon: &[String], sentences: usize) -> Paragraph {
    let (stop, content) = match lang {
        Lang::En => (STOP_EN, CONTENT_EN),
        Lang::Fr => (STOP_FR, CONTENT_FR),
        Lang::De => (STOP_DE, CONTENT_DE),
    };
    let mut words = Vec::new();
    for _ in 0..sentences {
        let len = rng.gen_range(9..=16);
        for k in 0..len {
            let roll: f64 = rng.gen();
            let mut w = if roll < 0.45 {
                stop.choose(rng).unwrap().to_string()
            } else if roll < 0.72 {
                content.choose(rng).unwrap().to_string()
            } else if roll < 0.97 || lexicon.is_empty() {
                lexicon.choose(rng).cloned().unwrap_or_else(|| nonce_word(rng))
            } else {
                INLINE_MATH.choose(rng).unwrap().to_string()
            };
            if k == 0 && !w.starts_with('$') {
                let mut c = w.chars();
                w = c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default();
            }
            if k + 1 == len {
                w.push('.');
            }
            words.push(w);
        }
    }
    Paragraph { words }
}

/// A paper as sections of paragraphs, rendered to LaTeX on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPaper {
    pub title: String,
    pub abstract_text: String,
    pub sections: Vec<(String, Vec<Paragraph>)>,
    pub display_math: Vec<String>,
}

pub fn synth_paper(rng: &mut ChaCha8Rng, lang: Lang, paragraphs_per_section: usize) -> SynthPaper {
    let lexicon: Vec<String> = (0..60).map(|_| nonce_word(rng)).collect();
    let title_words = paragraph(rng, lang, &lexicon, 1).words;
    let title = title_words[..title_words.len().min(8)].join(" ").trim_end_matches('.').to_string();
    let abstract_text = paragraph(rng, lang, &lexicon, 3).render();
    let names: &[&str] = match lang {
        Lang::En => &["Introduction", "Main results", "Conclusion"],
        Lang::Fr => &["Introduction", "Résultats principaux", "Conclusion"],
        Lang::De => &["Einleitung", "Hauptergebnisse", "Zusammenfassung"],
    };
    let sections = names
        .iter()
        .map(|n| {
            let count = paragraphs_per_section.max(1);
            (n.to_string(), (0..count).map(|_| paragraph(rng, lang, &lexicon, 4)).collect())
        })
        .collect();
    let display_math = (0..2).map(|_| DISPLAY_MATH.choose(rng).unwrap().to_string()).collect();
    SynthPaper { title, abstract_text, sections, display_math }
}

fn render_section(name: &str, paras: &[Paragraph], idx: usize, paper: &SynthPaper) -> String {
    let mut s = format!("\\section{{{name}}}\n\\label{{sec:{idx}}}\n");
    for (k, p) in paras.iter().enumerate() {
        s.push_str(&p.render());
        if k == 0 {
            s.push_str(" See \\cite{ref1} and Section~\\ref{sec:0}.");
        }
        s.push_str(" % reviewer note: tighten this\n\n");
        if k == 0 && idx == 1 {
            for m in &paper.display_math {
                s.push_str(m);
                s.push_str("\n\n");
            }
            s.push_str("\\begin{theorem}\nThe \\norm{u} is bounded on \\R.\n\\end{theorem}\n\n");
            s.push_str(
                "\\begin{figure}[t]\n\\centering\n\\includegraphics[width=0.5\\linewidth]{fig1.pdf}\n\\caption{Overview.}\n\\end{figure}\n\n",
            );
        }
    }
    s
}

const PREAMBLE: &str = "\\documentclass[11pt]{article}\n\\usepackage{amsmath,amssymb,graphicx}\n\\newcommand{\\R}{\\mathbb{R}}\n\\newcommand{\\norm}[1]{\\left\\| #1 \\right\\|}\n\\newtheorem{theorem}{Theorem}\n";

/// Files of the paper's LaTeX project. With `split`, the sections after
/// the first live in their own files pulled in by `\input`.
pub fn render_project(paper: &SynthPaper, split: bool) -> Vec<(String, String)> {
    let mut main = format!("{PREAMBLE}\\title{{{}}}\n\\begin{{document}}\n\\maketitle\n", paper.title);
    main.push_str(&format!("\\begin{{abstract}}\n{}\n\\end{{abstract}}\n\n", paper.abstract_text));
    let mut files = Vec::new();
    for (i, (name, paras)) in paper.sections.iter().enumerate() {
        let text = render_section(name, paras, i, paper);
        if split && i > 0 {
            let path = format!("sections/s{i}.tex");
            main.push_str(&format!("\\input{{sections/s{i}}}\n"));
            files.push((path, text));
        } else {
            main.push_str(&text);
        }
    }
    main.push_str("\\bibliographystyle{plain}\n\\begin{thebibliography}{9}\n\\bibitem{ref1} A. Author, \\emph{A paper}, 2001.\n\\end{thebibliography}\n\\end{document}\n");
    files.insert(0, ("main.tex".to_string(), main));
    files
}

/// Flattened single-file rendering.
pub fn render_flat(paper: &SynthPaper) -> String {
    render_project(paper, false).remove(0).1
}

/// `n` standalone LaTeX documents for normalization experiments.
pub fn latex_corpus(seed: u64, n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let paras = rng.gen_range(1..=3);
            render_flat(&synth_paper(&mut rng, Lang::En, paras))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "of", rename_all = "snake_case")]
pub enum Planted {
    Clean,
    PreDate,
    Short,
    Withdrawn,
    WrongCategory,
    NonEnglish,
    CorruptArchive,
    ExactDuplicateOf(String),
    NearDuplicateOf(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub papers: usize,
    /// Expected counters; `final_bytes` is left at zero.
    pub expected: YieldCounters,
    pub planted: BTreeMap<String, Planted>,
    /// Exact shingle Jaccard of each planted near-duplicate pair.
    pub near_pairs: Vec<(String, String, f64)>,
}

fn tar_gz(files: &[(String, String)]) -> io::Result<Vec<u8>> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&tar_plain(files)?)?;
    enc.finish()
}

fn tar_plain(files: &[(String, String)]) -> io::Result<Vec<u8>> {
    let mut builder = tar::Builder::new(Vec::new());
    for (path, text) in files {
        let mut header = tar::Header::new_ustar();
        header.set_path(path)?;
        header.set_size(text.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(1_000_000_000);
        header.set_cksum();
        builder.append(&header, text.as_bytes())?;
    }
    builder.into_inner()
}

fn gzip(bytes: &[u8]) -> io::Result<Vec<u8>> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes)?;
    enc.finish()
}

fn cleaned_body(text: &str) -> String {
    clean_document("x", "", "", text, &CleanConfig::default()).body
}

fn shingle_jaccard(a: &str, b: &str) -> f64 {
    let sa: std::collections::HashSet<u64> = shingle_hashes(a, DEFAULT_SHINGLE_WIDTH).into_iter().collect();
    let sb: std::collections::HashSet<u64> = shingle_hashes(b, DEFAULT_SHINGLE_WIDTH).into_iter().collect();
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Swap words evenly through the body until shingle Jaccard drops into
/// [0.88, 0.95].
fn near_duplicate(rng: &mut ChaCha8Rng, paper: &SynthPaper) -> (SynthPaper, f64) {
    let original = cleaned_body(&render_flat(paper));
    let total: usize = paper.sections.iter().flat_map(|(_, ps)| ps).map(|p| p.words.len()).sum();
    for swaps in 1..total {
        let mut copy = paper.clone();
        let stride = total / (swaps + 1);
        let mut targets: Vec<usize> = (1..=swaps).map(|k| k * stride).collect();
        targets.reverse();
        let mut seen = 0;
        for (_, paras) in copy.sections.iter_mut() {
            for p in paras.iter_mut() {
                for w in p.words.iter_mut() {
                    if targets.last() == Some(&seen) {
                        targets.pop();
                        *w = format!("{}q", nonce_word(rng));
                    }
                    seen += 1;
                }
            }
        }
        let j = shingle_jaccard(&original, &cleaned_body(&render_flat(&copy)));
        if j <= 0.95 {
            assert!(j >= 0.88, "near-duplicate overshoot: {j}");
            return (copy, j);
        }
    }
    unreachable!("body too short to plant a near duplicate")
}

struct Entry {
    id: String,
    year: i32,
    categories: Vec<String>,
    comments: Option<String>,
    title: String,
    abstract_text: String,
    archive_name: String,
    archive: Vec<u8>,
    use_source_path: bool,
}

fn packaged(rng: &mut ChaCha8Rng, id: &str, paper: &SynthPaper, style: usize) -> io::Result<(String, Vec<u8>)> {
    let stem = id.replace('/', "_");
    Ok(match style % 4 {
        0 => (format!("{stem}.tar.gz"), tar_gz(&render_project(paper, true))?),
        1 => (format!("{stem}.tar.gz"), tar_gz(&render_project(paper, false))?),
        2 => {
            let mut files = render_project(paper, rng.gen_bool(0.5));
            files.push(("refs.bib".into(), "@article{ref1, title={A paper}}".into()));
            (format!("{stem}.tar"), tar_plain(&files)?)
        }
        _ => (format!("{stem}.gz"), gzip(render_flat(paper).as_bytes())?),
    })
}

fn corrupt(kind: usize, paper: &SynthPaper) -> io::Result<Vec<u8>> {
    let files = render_project(paper, false);
    Ok(match kind {
        0 => {
            let full = tar_gz(&files)?;
            full[..full.len() / 2].to_vec()
        }
        1 => {
            let mut tar = tar_plain(&files)?;
            tar[148] ^= 0x55;
            gzip(&tar)?
        }
        _ => {
            let mut junk = vec![0x1f, 0x8b, 0x08, 0x00];
            junk.extend((0..4096u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 13) as u8));
            junk
        }
    })
}

const GOOD_CATEGORIES: &[&[&str]] =
    &[&["math.AG"], &["cs.LG", "stat.ML"], &["hep-th"], &["quant-ph"], &["math.PR", "math.ST"], &["hep-ph"]];

/// Write `metadata.jsonl` and `archives/` for the 50-paper fixture under
/// `dir` and return its ground truth.
pub fn generate_fixture(dir: &Path, seed: u64) -> io::Result<FixtureTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let archives = dir.join("archives");
    fs::create_dir_all(&archives)?;
    let mut entries: Vec<Entry> = Vec::new();
    let mut planted = BTreeMap::new();
    let mut near_pairs = Vec::new();
    let mut next_id = 0u32;
    let mut new_id = |year: i32| {
        next_id += 1;
        if year <= 2006 {
            format!("math/{:02}{:02}{:03}", year % 100, 1 + next_id % 12, next_id)
        } else {
            format!("{:02}{:02}.{:05}", year % 100, 1 + next_id % 12, next_id)
        }
    };

    let push = |rng: &mut ChaCha8Rng,
                entries: &mut Vec<Entry>,
                id: String,
                year: i32,
                cats: Vec<String>,
                comments: Option<String>,
                paper: &SynthPaper,
                archive: Option<(String, Vec<u8>)>|
     -> io::Result<()> {
        let style = entries.len();
        let (archive_name, archive) = match archive {
            Some(a) => a,
            None => packaged(rng, &id, paper, style)?,
        };
        entries.push(Entry {
            use_source_path: style.is_multiple_of(3),
            id,
            year,
            categories: cats,
            comments,
            title: paper.title.clone(),
            abstract_text: paper.abstract_text.clone(),
            archive_name,
            archive,
        });
        Ok(())
    };

    let good_cats = |rng: &mut ChaCha8Rng| -> Vec<String> {
        GOOD_CATEGORIES.choose(rng).unwrap().iter().map(|s| s.to_string()).collect()
    };
    let normal_comments = |rng: &mut ChaCha8Rng| -> Option<String> {
        if rng.gen_bool(0.5) {
            Some(format!("{} pages, {} figures", rng.gen_range(8..40), rng.gen_range(0..6)))
        } else {
            None
        }
    };

    for (k, year) in [1997, 1999, 2000].into_iter().enumerate() {
        let paper = synth_paper(&mut rng, Lang::En, 3);
        let id = format!("hep-th/{:02}{:02}{:03}", year % 100, 1 + k, 900 + k);
        let (cats, comments) = (vec!["hep-th".to_string()], normal_comments(&mut rng));
        planted.insert(id.clone(), Planted::PreDate);
        push(&mut rng, &mut entries, id, year, cats, comments, &paper, None)?;
    }
    for _ in 0..4 {
        let mut paper = synth_paper(&mut rng, Lang::En, 1);
        for (_, paras) in paper.sections.iter_mut() {
            for p in paras.iter_mut() {
                p.words.truncate(14);
            }
        }
        paper.display_math.truncate(1);
        let year = rng.gen_range(2005..2023);
        let id = new_id(year);
        planted.insert(id.clone(), Planted::Short);
        let (cats, comments) = (good_cats(&mut rng), normal_comments(&mut rng));
        push(&mut rng, &mut entries, id, year, cats, comments, &paper, None)?;
    }
    for note in ["This paper has been withdrawn by the author due to a crucial error", "WITHDRAWN: superseded"] {
        let paper = synth_paper(&mut rng, Lang::En, 3);
        let year = rng.gen_range(2005..2023);
        let id = new_id(year);
        planted.insert(id.clone(), Planted::Withdrawn);
        let cats = good_cats(&mut rng);
        push(&mut rng, &mut entries, id, year, cats, Some(note.to_string()), &paper, None)?;
    }
    for cats in [vec!["astro-ph.CO".to_string()], vec!["q-bio.NC".to_string(), "physics.bio-ph".to_string()]] {
        let paper = synth_paper(&mut rng, Lang::En, 3);
        let year = rng.gen_range(2005..2023);
        let id = new_id(year);
        planted.insert(id.clone(), Planted::WrongCategory);
        push(&mut rng, &mut entries, id, year, cats, None, &paper, None)?;
    }
    for lang in [Lang::Fr, Lang::De] {
        let paper = synth_paper(&mut rng, lang, 3);
        let year = rng.gen_range(2005..2023);
        let id = new_id(year);
        planted.insert(id.clone(), Planted::NonEnglish);
        let cats = vec!["math.AP".to_string()];
        push(&mut rng, &mut entries, id, year, cats, None, &paper, None)?;
    }
    for kind in 0..3 {
        let paper = synth_paper(&mut rng, Lang::En, 3);
        let year = rng.gen_range(2005..2023);
        let id = new_id(year);
        planted.insert(id.clone(), Planted::CorruptArchive);
        let name = format!("{}.tar.gz", id.replace('/', "_"));
        let bytes = corrupt(kind, &paper)?;
        let cats = good_cats(&mut rng);
        push(&mut rng, &mut entries, id, year, cats, None, &paper, Some((name, bytes)))?;
    }
    let mut originals = Vec::new();
    for pair in 0..4 {
        let paper = synth_paper(&mut rng, Lang::En, 3);
        let year = rng.gen_range(2005..2020);
        let id = new_id(year);
        planted.insert(id.clone(), Planted::Clean);
        let cats = good_cats(&mut rng);
        push(&mut rng, &mut entries, id.clone(), year, cats.clone(), None, &paper, None)?;
        let dup_id = new_id(year + 1);
        let dup = if pair < 2 {
            planted.insert(dup_id.clone(), Planted::ExactDuplicateOf(id.clone()));
            paper.clone()
        } else {
            let (copy, j) = near_duplicate(&mut rng, &paper);
            planted.insert(dup_id.clone(), Planted::NearDuplicateOf(id.clone()));
            near_pairs.push((id.clone(), dup_id.clone(), j));
            copy
        };
        originals.push((id, dup_id.clone()));
        push(&mut rng, &mut entries, dup_id, year + 1, cats, Some("v2: revised".into()), &dup, None)?;
    }
    for _ in 0..26 {
        let paras = rng.gen_range(2..=4);
        let paper = synth_paper(&mut rng, Lang::En, paras);
        let year = rng.gen_range(2001..2024);
        let id = new_id(year);
        planted.insert(id.clone(), Planted::Clean);
        let (cats, comments) = (good_cats(&mut rng), normal_comments(&mut rng));
        push(&mut rng, &mut entries, id, year, cats, comments, &paper, None)?;
    }

    // Shuffle ingest order, then restore each duplicate to follow its
    // original so keep-earliest retains the original.
    entries.shuffle(&mut rng);
    for (orig, dup) in &originals {
        let o = entries.iter().position(|e| &e.id == orig).unwrap();
        let d = entries.iter().position(|e| &e.id == dup).unwrap();
        if d < o {
            let e = entries.remove(d);
            let o = entries.iter().position(|e| &e.id == orig).unwrap();
            entries.insert(o + 1, e);
        }
    }

    let mut meta = String::new();
    for e in &entries {
        fs::write(archives.join(&e.archive_name), &e.archive)?;
        let mut rec = serde_json::json!({
            "id": e.id,
            "title": e.title,
            "abstract": e.abstract_text,
            "categories": e.categories,
            "date": format!("{}-{:02}-{:02}", e.year, 1 + e.id.len() % 12, 1 + e.id.len() % 28),
        });
        if let Some(c) = &e.comments {
            rec["comments"] = c.clone().into();
        }
        if e.use_source_path {
            rec["source_path"] = e.archive_name.clone().into();
        }
        meta.push_str(&rec.to_string());
        meta.push('\n');
    }
    fs::write(dir.join("metadata.jsonl"), meta)?;

    let mut expected = YieldCounters { input_records: entries.len() as u64, ..Default::default() };
    for p in planted.values() {
        let reason = match p {
            Planted::PreDate => Some(RejectReason::Temporal),
            Planted::Short => Some(RejectReason::Volume),
            Planted::Withdrawn => Some(RejectReason::Withdrawn),
            Planted::WrongCategory => Some(RejectReason::Category),
            Planted::NonEnglish => Some(RejectReason::Language),
            _ => None,
        };
        if let Some(r) = reason {
            expected.reject(&[r]);
        }
        match p {
            Planted::CorruptArchive => *expected.archive_failures.entry("integrity".into()).or_default() += 1,
            Planted::ExactDuplicateOf(_) => expected.dedup_exact += 1,
            Planted::NearDuplicateOf(_) => expected.dedup_near += 1,
            Planted::Clean => expected.final_docs += 1,
            _ => {}
        }
    }
    Ok(FixtureTruth { papers: entries.len(), expected, planted, near_pairs })
}
