//! Expansion of simple user macros.
//!
//! Handles `\newcommand`, `\renewcommand`, `\providecommand` (with an
//! optional default for the first argument), undelimited `\def`, and
//! `\DeclareMathOperator`. Conditionals, loops and delimited parameters are
//! not interpreted; such definitions stay in the text untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scan::{
    char_len_at, find_env_end, read_begin, read_brace, read_bracket, read_command, read_verb, skip_spaces,
};
use super::DEFAULT_VERBATIM_ENVIRONMENTS;

/// Upper bound on the text one top-level call may expand to.
const MAX_EXPANSION_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroDef {
    pub arity: usize,
    /// Default for an optional first argument.
    pub default_arg: Option<String>,
    pub template: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroTable {
    pub definitions: BTreeMap<String, MacroDef>,
}

impl MacroTable {
    pub fn is_empty(&self) -> bool {
        self.definitions.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&MacroDef> {
        self.definitions.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expansion {
    pub text: String,
    pub table: MacroTable,
    /// Top-level calls left unexpanded because they recursed past the cap.
    pub depth_exceeded: usize,
}

pub const DEFAULT_MAX_DEPTH: usize = 8;

/// Collect definitions (removing them from the text), then expand calls
/// leftmost-outermost. A call whose expansion recurses deeper than
/// `max_depth` is left exactly as written and counted.
pub fn expand_macros(source: &str, max_depth: usize) -> Expansion {
    let (stripped, table) = collect_definitions(source);
    if table.is_empty() {
        return Expansion { text: stripped, table, depth_exceeded: 0 };
    }
    let mut exceeded = 0;
    let text = expand_top(&stripped, &table, max_depth, &mut exceeded);
    Expansion { text, table, depth_exceeded: exceeded }
}

/// Parse a `\newcommand`-family definition starting after the command name.
fn parse_newcommand(s: &str, mut i: usize) -> Option<(String, MacroDef, usize)> {
    if s.as_bytes().get(i) == Some(&b'*') {
        i += 1;
    }
    i = skip_spaces(s, i);
    let (name, mut i) = if let Some((inner, end)) = read_brace(s, i) {
        let inner = s[inner].trim();
        let (name, after) = read_command(inner, 0)?;
        if after != inner.len() {
            return None;
        }
        (name.to_string(), end)
    } else {
        let (name, end) = read_command(s, i)?;
        (name.to_string(), end)
    };
    let mut arity = 0;
    let mut default_arg = None;
    i = skip_spaces(s, i);
    if let Some((inner, end)) = read_bracket(s, i) {
        arity = s[inner].trim().parse::<usize>().ok().filter(|&n| n <= 9)?;
        i = skip_spaces(s, end);
        if let Some((inner, end)) = read_bracket(s, i) {
            default_arg = Some(s[inner].to_string());
            i = skip_spaces(s, end);
        }
    }
    let (body, end) = read_brace(s, i)?;
    Some((name, MacroDef { arity, default_arg, template: s[body].to_string() }, end))
}

/// `\def\name#1#2{...}` with undelimited parameters only.
fn parse_def(s: &str, i: usize) -> Option<(String, MacroDef, usize)> {
    let i = skip_spaces(s, i);
    let (name, mut j) = read_command(s, i)?;
    let b = s.as_bytes();
    let mut arity = 0;
    while b.get(j) == Some(&b'#') {
        let d = *b.get(j + 1)?;
        if d != b'1' + arity as u8 {
            return None;
        }
        arity += 1;
        j += 2;
    }
    let (body, end) = read_brace(s, j)?;
    Some((name.to_string(), MacroDef { arity, default_arg: None, template: s[body].to_string() }, end))
}

fn parse_math_operator(s: &str, mut i: usize) -> Option<(String, MacroDef, usize)> {
    let starred = s.as_bytes().get(i) == Some(&b'*');
    if starred {
        i += 1;
    }
    let (name_range, end) = read_brace(s, skip_spaces(s, i))?;
    let inner = s[name_range].trim();
    let (name, after) = read_command(inner, 0)?;
    if after != inner.len() {
        return None;
    }
    let (text, end) = read_brace(s, skip_spaces(s, end))?;
    let op = if starred { "\\operatorname*" } else { "\\operatorname" };
    Some((name.to_string(), MacroDef { arity: 0, default_arg: None, template: format!("{op}{{{}}}", &s[text]) }, end))
}

/// Skip a comment or verbatim region at `i`, returning its end.
fn opaque_region(s: &str, i: usize) -> Option<usize> {
    let b = s.as_bytes();
    if b[i] == b'%' {
        return Some(s[i..].find('\n').map_or(s.len(), |k| i + k));
    }
    if let Some(end) = read_verb(s, i) {
        return Some(end);
    }
    if let Some((env, body)) = read_begin(s, i) {
        if DEFAULT_VERBATIM_ENVIRONMENTS.contains(&env) {
            return Some(find_env_end(s, body, env, false).map_or(s.len(), |(_, e)| e));
        }
    }
    None
}

fn collect_definitions(source: &str) -> (String, MacroTable) {
    let mut table = MacroTable::default();
    let mut out = String::with_capacity(source.len());
    let b = source.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if let Some(end) = opaque_region(source, i) {
            out.push_str(&source[i..end]);
            i = end;
            continue;
        }
        if b[i] == b'\\' {
            if let Some((name, after)) = read_command(source, i) {
                let parsed = match name {
                    "newcommand" | "renewcommand" | "providecommand" => parse_newcommand(source, after),
                    "def" => parse_def(source, after),
                    "DeclareMathOperator" => parse_math_operator(source, after),
                    _ => None,
                };
                match parsed {
                    Some((macro_name, def, end)) => {
                        if name == "providecommand" {
                            table.definitions.entry(macro_name).or_insert(def);
                        } else {
                            table.definitions.insert(macro_name, def);
                        }
                        i = end;
                    }
                    None => {
                        out.push_str(&source[i..after]);
                        i = after;
                    }
                }
                continue;
            }
            let step = 1 + if i + 1 < b.len() { char_len_at(source, i + 1) } else { 0 };
            out.push_str(&source[i..i + step]);
            i += step;
            continue;
        }
        let step = char_len_at(source, i);
        out.push_str(&source[i..i + step]);
        i += step;
    }
    (out, table)
}

struct DepthExceeded;

/// One argument: a brace group's contents, a control sequence, or a single
/// character.
fn read_argument(s: &str, i: usize) -> Option<(String, usize)> {
    let j = skip_spaces(s, i);
    if j >= s.len() {
        return None;
    }
    if let Some((inner, end)) = read_brace(s, j) {
        return Some((s[inner].to_string(), end));
    }
    if s.as_bytes()[j] == b'}' {
        return None;
    }
    if let Some((_, end)) = read_command(s, j) {
        return Some((s[j..end].to_string(), end));
    }
    if s.as_bytes()[j] == b'\\' {
        let end = j + 1 + if j + 1 < s.len() { char_len_at(s, j + 1) } else { 0 };
        return Some((s[j..end].to_string(), end));
    }
    let end = j + char_len_at(s, j);
    Some((s[j..end].to_string(), end))
}

/// Parse the call of `def` whose name ends at `after`; returns the
/// instantiated template and the end of the call.
fn instantiate(s: &str, after: usize, def: &MacroDef) -> Option<(String, usize)> {
    let mut args: Vec<String> = Vec::with_capacity(def.arity);
    let mut pos = after;
    let mut needed = def.arity;
    if let Some(default) = &def.default_arg {
        if needed > 0 {
            let j = skip_spaces(s, pos);
            match read_bracket(s, j) {
                Some((inner, end)) => {
                    args.push(s[inner].to_string());
                    pos = end;
                }
                None => args.push(default.clone()),
            }
            needed -= 1;
        }
    }
    for _ in 0..needed {
        let (arg, end) = read_argument(s, pos)?;
        args.push(arg);
        pos = end;
    }
    let t = def.template.as_bytes();
    let mut out = String::with_capacity(def.template.len());
    let mut k = 0;
    while k < t.len() {
        if t[k] == b'#' && k + 1 < t.len() {
            let d = t[k + 1];
            if d == b'#' {
                out.push('#');
                k += 2;
                continue;
            }
            if d.is_ascii_digit() && d != b'0' {
                if let Some(a) = args.get((d - b'1') as usize) {
                    out.push_str(a);
                    k += 2;
                    continue;
                }
            }
        }
        let step = char_len_at(&def.template, k);
        out.push_str(&def.template[k..k + step]);
        k += step;
    }
    Some((out, pos))
}

fn expand_top(s: &str, table: &MacroTable, max_depth: usize, exceeded: &mut usize) -> String {
    let mut out = String::with_capacity(s.len());
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if let Some(end) = opaque_region(s, i) {
            out.push_str(&s[i..end]);
            i = end;
            continue;
        }
        if let Some((name, after)) = read_command(s, i) {
            if let Some(def) = table.get(name) {
                if let Some((body, end)) = instantiate(s, after, def) {
                    let mut budget = MAX_EXPANSION_BYTES;
                    match expand_nested(&body, table, 1, max_depth, &mut budget) {
                        Ok(text) => out.push_str(&text),
                        Err(DepthExceeded) => {
                            *exceeded += 1;
                            out.push_str(&s[i..end]);
                        }
                    }
                    i = end;
                    continue;
                }
            }
            out.push_str(&s[i..after]);
            i = after;
            continue;
        }
        let step =
            if b[i] == b'\\' { 1 + if i + 1 < b.len() { char_len_at(s, i + 1) } else { 0 } } else { char_len_at(s, i) };
        out.push_str(&s[i..i + step]);
        i += step;
    }
    out
}

/// Expand the body produced by a call at `depth`.
fn expand_nested(
    s: &str,
    table: &MacroTable,
    depth: usize,
    max_depth: usize,
    budget: &mut usize,
) -> Result<String, DepthExceeded> {
    if depth > max_depth {
        return Err(DepthExceeded);
    }
    let mut out = String::with_capacity(s.len());
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if let Some((name, after)) = read_command(s, i) {
            if let Some(def) = table.get(name) {
                if let Some((body, end)) = instantiate(s, after, def) {
                    let text = expand_nested(&body, table, depth + 1, max_depth, budget)?;
                    out.push_str(&text);
                    i = end;
                    continue;
                }
            }
            out.push_str(&s[i..after]);
            i = after;
        } else {
            let step = if b[i] == b'\\' {
                1 + if i + 1 < b.len() { char_len_at(s, i + 1) } else { 0 }
            } else {
                char_len_at(s, i)
            };
            out.push_str(&s[i..i + step]);
            i += step;
        }
        if out.len() > *budget {
            return Err(DepthExceeded);
        }
    }
    *budget = budget.saturating_sub(out.len());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_argument_macro() {
        let e = expand_macros("\\newcommand{\\R}{\\mathbb{R}}\n$\\R^n$", 8);
        assert_eq!(e.text.trim(), "$\\mathbb{R}^n$");
        assert_eq!(e.table.definitions.len(), 1);
        assert_eq!(e.depth_exceeded, 0);
    }

    #[test]
    fn one_argument_macro() {
        let e = expand_macros("\\newcommand{\\norm}[1]{\\|#1\\|}$\\norm{x}$", 8);
        assert_eq!(e.text, "$\\|x\\|$");
        let e = expand_macros("\\newcommand\\norm[1]{\\|#1\\|}$\\norm x$", 8);
        assert_eq!(e.text, "$\\|x\\|$");
    }

    #[test]
    fn optional_default_argument() {
        let src = "\\newcommand{\\seq}[2][n]{#2_{#1}}$\\seq{a} \\seq[k]{b}$";
        assert_eq!(expand_macros(src, 8).text, "$a_{n} b_{k}$");
    }

    #[test]
    fn def_and_operator() {
        let src = "\\def\\pair#1#2{(#1,#2)}\\DeclareMathOperator{\\tr}{tr}$\\pair{a}{b} \\tr A$";
        assert_eq!(expand_macros(src, 8).text, "$(a,b) \\operatorname{tr} A$");
    }

    #[test]
    fn nested_macros_expand_outermost_first() {
        let src = "\\newcommand{\\R}{\\mathbb{R}}\\newcommand{\\Rn}{\\R^n}$\\Rn$";
        assert_eq!(expand_macros(src, 8).text, "$\\mathbb{R}^n$");
    }

    #[test]
    fn self_recursive_macro_is_left_verbatim() {
        let e = expand_macros("\\newcommand{\\loop}{\\loop x}body \\loop end", 8);
        assert_eq!(e.text, "body \\loop end");
        assert_eq!(e.depth_exceeded, 1);
    }

    #[test]
    fn longer_names_are_not_prefix_matched() {
        let e = expand_macros("\\newcommand{\\R}{X}\\Real \\R", 8);
        assert_eq!(e.text, "\\Real X");
    }

    #[test]
    fn definitions_in_comments_are_ignored() {
        let src = "% \\newcommand{\\R}{X}\n\\R";
        let e = expand_macros(src, 8);
        assert!(e.table.is_empty());
        assert_eq!(e.text, src);
    }

    #[test]
    fn exponential_macros_are_capped() {
        let src = "\\def\\a{xx}\\def\\b{\\a\\a\\a\\a\\a\\a\\a\\a}\\def\\c{\\b\\b\\b\\b\\b\\b\\b\\b}\\c";
        assert_eq!(expand_macros(src, 8).text.len(), 2 * 64);
    }

    proptest! {
        #[test]
        fn no_definitions_is_identity(s in "[a-z $\\\\{}^_%\n]{0,80}") {
            prop_assume!(!s.contains("\\def") );
            let e = expand_macros(&s, 8);
            if e.table.is_empty() {
                prop_assert_eq!(e.text, s);
            }
        }
    }
}
