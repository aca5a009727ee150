//! Cleaning of flattened LaTeX into training text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scan::{
    char_len_at, consume_args, find_env_end, find_unescaped, read_begin, read_brace, read_command, read_verb,
    skip_spaces,
};
use super::{
    DEFAULT_MATH_ENVIRONMENTS, DEFAULT_REMOVED_ENVIRONMENTS, DEFAULT_STRUCTURAL_ENVIRONMENTS,
    DEFAULT_VERBATIM_ENVIRONMENTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalClass {
    Comment,
    Preamble,
    Figure,
    Table,
    Graphics,
    Bibliography,
    Environment,
    Formatting,
    Reference,
    Unbalanced,
    MacroDepth,
}

impl RemovalClass {
    fn for_environment(env: &str) -> Self {
        match env.trim_end_matches('*') {
            "figure" | "wrapfigure" | "subfigure" => RemovalClass::Figure,
            "table" | "tabular" | "wraptable" => RemovalClass::Table,
            "tikzpicture" | "pspicture" | "picture" => RemovalClass::Graphics,
            "thebibliography" => RemovalClass::Bibliography,
            _ => RemovalClass::Environment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Replace citations and cross-references with [`REFERENCE_PLACEHOLDER`].
    #[default]
    Placeholder,
    Delete,
}

pub const REFERENCE_PLACEHOLDER: &str = "[REF]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizeConfig {
    pub removed_environments: Vec<String>,
    pub math_environments: Vec<String>,
    /// Theorem-like environments whose markers are kept and whose contents
    /// are cleaned like ordinary text.
    pub structural_environments: Vec<String>,
    pub verbatim_environments: Vec<String>,
    pub reference_mode: ReferenceMode,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        NormalizeConfig {
            removed_environments: owned(DEFAULT_REMOVED_ENVIRONMENTS),
            math_environments: owned(DEFAULT_MATH_ENVIRONMENTS),
            structural_environments: owned(DEFAULT_STRUCTURAL_ENVIRONMENTS),
            verbatim_environments: owned(DEFAULT_VERBATIM_ENVIRONMENTS),
            reference_mode: ReferenceMode::Placeholder,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedBody {
    pub body: String,
    pub math_span_count: usize,
    pub removed: BTreeMap<RemovalClass, u64>,
}

const REFERENCE_COMMANDS: &[&str] = &[
    "cite",
    "citep",
    "citet",
    "citealp",
    "citealt",
    "citeauthor",
    "citeyear",
    "citenum",
    "parencite",
    "textcite",
    "autocite",
    "ref",
    "eqref",
    "autoref",
    "cref",
    "Cref",
    "pageref",
    "nameref",
    "vref",
];

/// Commands dropped together with `n` mandatory arguments.
const DROPPED_WITH_ARGS: &[(&str, usize, RemovalClass)] = &[
    ("documentclass", 1, RemovalClass::Preamble),
    ("documentstyle", 1, RemovalClass::Preamble),
    ("usepackage", 1, RemovalClass::Preamble),
    ("RequirePackage", 1, RemovalClass::Preamble),
    ("geometry", 1, RemovalClass::Preamble),
    ("newgeometry", 1, RemovalClass::Preamble),
    ("definecolor", 3, RemovalClass::Preamble),
    ("hypersetup", 1, RemovalClass::Preamble),
    ("graphicspath", 1, RemovalClass::Preamble),
    ("pagestyle", 1, RemovalClass::Preamble),
    ("thispagestyle", 1, RemovalClass::Preamble),
    ("setlength", 2, RemovalClass::Preamble),
    ("addtolength", 2, RemovalClass::Preamble),
    ("setcounter", 2, RemovalClass::Preamble),
    ("numberwithin", 2, RemovalClass::Preamble),
    ("theoremstyle", 1, RemovalClass::Preamble),
    ("newtheorem", 2, RemovalClass::Preamble),
    ("newcommand", 2, RemovalClass::Preamble),
    ("renewcommand", 2, RemovalClass::Preamble),
    ("providecommand", 2, RemovalClass::Preamble),
    ("DeclareMathOperator", 2, RemovalClass::Preamble),
    ("newenvironment", 3, RemovalClass::Preamble),
    ("renewenvironment", 3, RemovalClass::Preamble),
    ("author", 1, RemovalClass::Preamble),
    ("date", 1, RemovalClass::Preamble),
    ("address", 1, RemovalClass::Preamble),
    ("affiliation", 1, RemovalClass::Preamble),
    ("email", 1, RemovalClass::Preamble),
    ("thanks", 1, RemovalClass::Preamble),
    ("keywords", 1, RemovalClass::Preamble),
    ("bibliographystyle", 1, RemovalClass::Bibliography),
    ("bibliography", 1, RemovalClass::Bibliography),
    ("addbibresource", 1, RemovalClass::Bibliography),
    ("includegraphics", 1, RemovalClass::Graphics),
    ("color", 1, RemovalClass::Formatting),
    ("vspace", 1, RemovalClass::Formatting),
    ("hspace", 1, RemovalClass::Formatting),
];

const DROPPED_PLAIN: &[&str] = &[
    "maketitle",
    "noindent",
    "newpage",
    "clearpage",
    "cleardoublepage",
    "centering",
    "raggedright",
    "raggedleft",
    "tiny",
    "scriptsize",
    "footnotesize",
    "small",
    "normalsize",
    "large",
    "Large",
    "LARGE",
    "huge",
    "Huge",
    "bigskip",
    "medskip",
    "smallskip",
    "vfill",
    "hfill",
    "linebreak",
    "pagebreak",
    "nolinebreak",
    "tableofcontents",
    "listoffigures",
    "listoftables",
    "protect",
    "nobreak",
    "printbibliography",
    "sloppy",
    "fussy",
    "onecolumn",
    "twocolumn",
];

/// Commands replaced by their (cleaned) argument.
const UNWRAPPED: &[&str] = &[
    "textbf",
    "textit",
    "textsl",
    "emph",
    "texttt",
    "textsf",
    "textrm",
    "textsc",
    "textnormal",
    "underline",
    "mbox",
    "footnote",
    "textup",
    "uline",
];

/// Remove comments, keeping escaped `\%` and verbatim material. A comment
/// that fills its whole line also takes the line break with it.
pub fn strip_comments(source: &str, verbatim_envs: &[String]) -> (String, u64) {
    let b = source.as_bytes();
    let mut out = String::with_capacity(source.len());
    let mut count = 0;
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'\\' => {
                if let Some(end) = read_verb(source, i) {
                    out.push_str(&source[i..end]);
                    i = end;
                    continue;
                }
                if let Some((env, body)) = read_begin(source, i) {
                    if verbatim_envs.iter().any(|v| v == env) {
                        let end = find_env_end(source, body, env, false).map_or(source.len(), |(_, e)| e);
                        out.push_str(&source[i..end]);
                        i = end;
                        continue;
                    }
                }
                if let Some((_, after)) = read_command(source, i) {
                    out.push_str(&source[i..after]);
                    i = after;
                } else {
                    let step = 1 + if i + 1 < b.len() { char_len_at(source, i + 1) } else { 0 };
                    out.push_str(&source[i..i + step]);
                    i += step;
                }
            }
            b'%' => {
                count += 1;
                while out.ends_with(' ') || out.ends_with('\t') {
                    out.pop();
                }
                let line_start = out.is_empty() || out.ends_with('\n');
                i = source[i..].find('\n').map_or(b.len(), |k| i + k);
                if line_start && i < b.len() {
                    i += 1;
                }
            }
            _ => {
                let step = char_len_at(source, i);
                out.push_str(&source[i..i + step]);
                i += step;
            }
        }
    }
    (out, count)
}

enum Seg {
    Text(String),
    Protected(String),
}

struct Walker<'c> {
    cfg: &'c NormalizeConfig,
    segs: Vec<Seg>,
    math: usize,
    removed: BTreeMap<RemovalClass, u64>,
    truncated: bool,
}

impl<'c> Walker<'c> {
    fn count(&mut self, class: RemovalClass) {
        *self.removed.entry(class).or_default() += 1;
    }

    fn text(&mut self, s: &str) {
        match self.segs.last_mut() {
            Some(Seg::Text(t)) => t.push_str(s),
            _ => self.segs.push(Seg::Text(s.to_string())),
        }
    }

    fn protected(&mut self, s: &str) {
        self.segs.push(Seg::Protected(s.to_string()));
    }

    fn truncate(&mut self) {
        self.count(RemovalClass::Unbalanced);
        self.truncated = true;
    }

    fn is_math_env(&self, env: &str) -> bool {
        self.cfg.math_environments.iter().any(|e| e == env)
    }

    fn walk(&mut self, s: &str) {
        let b = s.as_bytes();
        let mut i = 0;
        while i < b.len() && !self.truncated {
            match b[i] {
                b'\\' => i = self.command(s, i),
                b'$' => {
                    let display = b.get(i + 1) == Some(&b'$');
                    let (open, close) = if display { (2, "$$") } else { (1, "$") };
                    match find_unescaped(s, i + open, close) {
                        Some(j) => {
                            let end = j + close.len();
                            self.protected(&s[i..end]);
                            self.math += 1;
                            i = end;
                        }
                        None => self.truncate(),
                    }
                }
                _ => {
                    let step = char_len_at(s, i);
                    self.text(&s[i..i + step]);
                    i += step;
                }
            }
        }
    }

    /// Handle the control sequence at `i`; returns the next offset.
    fn command(&mut self, s: &str, i: usize) -> usize {
        let b = s.as_bytes();
        let Some((name, after)) = read_command(s, i) else {
            return match b.get(i + 1) {
                Some(b'(') | Some(b'[') => {
                    let close = if b[i + 1] == b'(' { "\\)" } else { "\\]" };
                    match find_unescaped(s, i + 2, close) {
                        Some(j) => {
                            self.protected(&s[i..j + 2]);
                            self.math += 1;
                            j + 2
                        }
                        None => {
                            self.truncate();
                            s.len()
                        }
                    }
                }
                Some(_) => {
                    let end = i + 1 + char_len_at(s, i + 1);
                    self.text(&s[i..end]);
                    end
                }
                None => {
                    self.text("\\");
                    i + 1
                }
            };
        };

        match name {
            "begin" => {
                let Some((env_range, body)) = read_brace(s, after) else {
                    self.text(&s[i..after]);
                    return after;
                };
                let env = &s[env_range];
                let cfg = self.cfg;
                if cfg.removed_environments.iter().any(|e| e == env) {
                    return match find_env_end(s, body, env, true) {
                        Some((_, end)) => {
                            self.count(RemovalClass::for_environment(env));
                            end
                        }
                        None => {
                            self.truncate();
                            s.len()
                        }
                    };
                }
                let math = self.is_math_env(env);
                if math || cfg.verbatim_environments.iter().any(|e| e == env) {
                    return match find_env_end(s, body, env, math) {
                        Some((_, end)) => {
                            self.protected(&s[i..end]);
                            if math {
                                self.math += 1;
                            }
                            end
                        }
                        None => {
                            self.truncate();
                            s.len()
                        }
                    };
                }
                self.text(&s[i..body]);
                body
            }
            "verb" => match read_verb(s, i) {
                Some(end) => {
                    self.protected(&s[i..end]);
                    end
                }
                None => {
                    self.text(&s[i..after]);
                    after
                }
            },
            "def" => {
                // Leftover `\def` (delimited or otherwise unexpandable).
                let mut j = skip_spaces(s, after);
                if let Some((_, e)) = read_command(s, j) {
                    j = e;
                }
                match s[j..].find('{').and_then(|k| read_brace(s, j + k)) {
                    Some((_, end)) => {
                        self.count(RemovalClass::Preamble);
                        end
                    }
                    None => {
                        self.text(&s[i..after]);
                        after
                    }
                }
            }
            "label" | "nocite" => {
                self.count(RemovalClass::Reference);
                consume_args(s, after, 1)
            }
            n if REFERENCE_COMMANDS.contains(&n) => {
                self.count(RemovalClass::Reference);
                if self.cfg.reference_mode == ReferenceMode::Placeholder {
                    self.text(REFERENCE_PLACEHOLDER);
                }
                consume_args(s, after, 1)
            }
            n if DROPPED_PLAIN.contains(&n) => {
                self.count(RemovalClass::Formatting);
                after
            }
            "title" => {
                // Kept as its own paragraph: titles carry math and the
                // training text has no other copy of them.
                let j = skip_spaces(s, after);
                match read_brace(s, j) {
                    Some((inner, end)) => {
                        self.walk(&s[inner]);
                        self.text("\n\n");
                        end
                    }
                    None => after,
                }
            }
            n if UNWRAPPED.contains(&n) => {
                self.count(RemovalClass::Formatting);
                let j = skip_spaces(s, after);
                match read_brace(s, j) {
                    Some((inner, end)) => {
                        self.walk(&s[inner]);
                        end
                    }
                    None => after,
                }
            }
            n => {
                if let Some(&(_, arity, class)) = DROPPED_WITH_ARGS.iter().find(|d| d.0 == n) {
                    self.count(class);
                    return consume_args(s, after, arity);
                }
                self.text(&s[i..after]);
                after
            }
        }
    }
}

/// Collapse whitespace runs: two or more line breaks become one blank line,
/// a single line break stays, anything else becomes one space.
fn collapse_whitespace(text: &str, out: &mut String) {
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_whitespace() {
            let mut newlines = usize::from(c == '\n');
            while let Some(&n) = chars.peek() {
                if !n.is_whitespace() {
                    break;
                }
                newlines += usize::from(n == '\n');
                chars.next();
            }
            out.push_str(match newlines {
                0 => " ",
                1 => "\n",
                _ => "\n\n",
            });
        } else {
            out.push(c);
        }
    }
}

/// The part between `\begin{document}` and `\end{document}`, if present.
fn document_body(source: &str) -> Option<&str> {
    let start = source.find("\\begin{document}")? + "\\begin{document}".len();
    let end = source[start..].find("\\end{document}").map_or(source.len(), |k| start + k);
    Some(&source[start..end])
}

/// Argument of the first `\title{..}` before `\begin{document}`.
fn preamble_title(source: &str) -> Option<&str> {
    let preamble = &source[..source.find("\\begin{document}")?];
    let mut from = 0;
    while let Some(k) = preamble[from..].find("\\title") {
        let after = from + k + "\\title".len();
        if !preamble[after..].starts_with(|c: char| c.is_ascii_alphabetic()) {
            let j = skip_spaces(preamble, after);
            return read_brace(preamble, j).map(|(inner, _)| &preamble[inner]);
        }
        from = after;
    }
    None
}

pub fn normalize_latex(source: &str) -> NormalizedBody {
    normalize_latex_with(source, &NormalizeConfig::default())
}

pub fn normalize_latex_with(source: &str, cfg: &NormalizeConfig) -> NormalizedBody {
    let (stripped, comments) = strip_comments(source, &cfg.verbatim_environments);
    let mut walker = Walker { cfg, segs: Vec::new(), math: 0, removed: BTreeMap::new(), truncated: false };
    if comments > 0 {
        walker.removed.insert(RemovalClass::Comment, comments);
    }
    let body = match document_body(&stripped) {
        Some(body) => {
            walker.count(RemovalClass::Preamble);
            if let Some(title) = preamble_title(&stripped) {
                walker.walk(title);
                walker.text("\n\n");
            }
            body
        }
        None => stripped.as_str(),
    };
    walker.walk(body);

    let mut out = String::with_capacity(body.len());
    for seg in &walker.segs {
        match seg {
            Seg::Text(t) => collapse_whitespace(t, &mut out),
            Seg::Protected(p) => out.push_str(p),
        }
    }
    // Edges only ever end in collapsed text, never inside a protected span.
    let first_protected = matches!(walker.segs.first(), Some(Seg::Protected(_)));
    let last_protected = matches!(walker.segs.last(), Some(Seg::Protected(_)));
    let mut body = out;
    if !last_protected {
        body.truncate(body.trim_end().len());
    }
    if !first_protected {
        let lead = body.len() - body.trim_start().len();
        body.drain(..lead);
    }

    NormalizedBody { body, math_span_count: walker.math, removed: walker.removed }
}
