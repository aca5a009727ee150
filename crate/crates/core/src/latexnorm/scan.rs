//! Byte-offset scanning primitives over LaTeX source.
//!
//! All offsets are byte indices on `char` boundaries. Control words are
//! ASCII letters; everything else after a backslash is a one-character
//! control symbol.

use std::ops::Range;

pub(crate) fn char_len_at(s: &str, i: usize) -> usize {
    s[i..].chars().next().map_or(0, char::len_utf8)
}

/// `\name` starting at `i`; returns the name and the offset after it.
pub(crate) fn read_command(s: &str, i: usize) -> Option<(&str, usize)> {
    let b = s.as_bytes();
    if b.get(i) != Some(&b'\\') {
        return None;
    }
    let start = i + 1;
    let mut end = start;
    while end < b.len() && b[end].is_ascii_alphabetic() {
        end += 1;
    }
    (end > start).then(|| (&s[start..end], end))
}

/// Skip spaces and tabs plus at most one newline.
pub(crate) fn skip_spaces(s: &str, mut i: usize) -> usize {
    let b = s.as_bytes();
    let mut newline = false;
    while i < b.len() {
        match b[i] {
            b' ' | b'\t' | b'\r' => i += 1,
            b'\n' if !newline => {
                newline = true;
                i += 1
            }
            _ => break,
        }
    }
    i
}

/// A balanced `{...}` or `[...]` group starting exactly at `i`. Returns the
/// inner range and the offset after the closing delimiter. Braces nest in
/// both kinds; escaped delimiters are skipped.
pub(crate) fn read_group(s: &str, i: usize, open: u8, close: u8) -> Option<(Range<usize>, usize)> {
    let b = s.as_bytes();
    if b.get(i) != Some(&open) {
        return None;
    }
    let mut depth = 0usize;
    let mut brace_depth = 0usize;
    let mut j = i;
    while j < b.len() {
        match b[j] {
            b'\\' => {
                j += 1 + if j + 1 < b.len() { char_len_at(s, j + 1) } else { 0 };
                continue;
            }
            c if c == open && (open == b'{' || brace_depth == 0) => depth += 1,
            c if c == close && (close == b'}' || brace_depth == 0) => {
                depth -= 1;
                if depth == 0 {
                    return Some((i + 1..j, j + 1));
                }
            }
            b'{' => brace_depth += 1,
            b'}' => brace_depth = brace_depth.saturating_sub(1),
            _ => {}
        }
        j += 1;
    }
    None
}

pub(crate) fn read_brace(s: &str, i: usize) -> Option<(Range<usize>, usize)> {
    read_group(s, i, b'{', b'}')
}

pub(crate) fn read_bracket(s: &str, i: usize) -> Option<(Range<usize>, usize)> {
    read_group(s, i, b'[', b']')
}

/// First occurrence of `pat` at or after `from`, skipping backslash escapes.
pub(crate) fn find_unescaped(s: &str, from: usize, pat: &str) -> Option<usize> {
    let b = s.as_bytes();
    let p = pat.as_bytes();
    let mut j = from;
    while j < b.len() {
        if b[j..].starts_with(p) {
            return Some(j);
        }
        if b[j] == b'\\' {
            j += 1 + if j + 1 < b.len() { char_len_at(s, j + 1) } else { 0 };
        } else {
            j += char_len_at(s, j);
        }
    }
    None
}

/// Matching `\end{env}` for an environment whose body starts at `from`,
/// honouring nested `\begin{env}` of the same name. Returns the offset of
/// the backslash of `\end` and the offset just past `\end{env}`.
pub(crate) fn find_env_end(s: &str, from: usize, env: &str, nested: bool) -> Option<(usize, usize)> {
    let begin = format!("\\begin{{{env}}}");
    let end = format!("\\end{{{env}}}");
    let mut depth = 1usize;
    let mut j = from;
    loop {
        let next_end = s[j..].find(&end).map(|k| j + k)?;
        let next_begin = if nested { s[j..].find(&begin).map(|k| j + k) } else { None };
        match next_begin {
            Some(b) if b < next_end => {
                depth += 1;
                j = b + begin.len();
            }
            _ => {
                depth -= 1;
                if depth == 0 {
                    return Some((next_end, next_end + end.len()));
                }
                j = next_end + end.len();
            }
        }
    }
}

/// `\begin{env}` at `i`: the environment name and the offset after `}`.
pub(crate) fn read_begin(s: &str, i: usize) -> Option<(&str, usize)> {
    let (name, after) = read_command(s, i)?;
    if name != "begin" {
        return None;
    }
    let (inner, end) = read_brace(s, after)?;
    Some((&s[inner], end))
}

/// Consume a command's arguments starting at `i`: an optional `*`, then up
/// to `mandatory` brace groups with any bracket groups in between. Trailing
/// whitespace is only consumed when an argument follows it.
pub(crate) fn consume_args(s: &str, i: usize, mandatory: usize) -> usize {
    let b = s.as_bytes();
    let mut pos = i;
    if b.get(pos) == Some(&b'*') {
        pos += 1;
    }
    let mut remaining = mandatory;
    loop {
        let j = skip_spaces(s, pos);
        match b.get(j) {
            Some(b'[') => match read_bracket(s, j) {
                Some((_, end)) => pos = end,
                None => return pos,
            },
            Some(b'{') if remaining > 0 => match read_brace(s, j) {
                Some((_, end)) => {
                    pos = end;
                    remaining -= 1;
                }
                None => return pos,
            },
            _ => return pos,
        }
        if remaining == 0 {
            // Bracket groups after the last mandatory argument belong to the
            // following text.
            return pos;
        }
    }
}

/// Verbatim `\verb<d>...<d>` at `i`; returns the offset after the closing
/// delimiter.
pub(crate) fn read_verb(s: &str, i: usize) -> Option<usize> {
    let (name, mut j) = read_command(s, i)?;
    if name != "verb" {
        return None;
    }
    if s.as_bytes().get(j) == Some(&b'*') {
        j += 1;
    }
    let delim = s[j..].chars().next()?;
    if delim.is_alphabetic() || delim.is_whitespace() {
        return None;
    }
    let body = j + delim.len_utf8();
    let close = s[body..].find(delim)?;
    Some(body + close + delim.len_utf8())
}
