use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::model::TokenizerModel;
use super::TokenizerError;
use crate::par::Executor;

pub const DEFAULT_TOP_COMMANDS: usize = 20;

/// Compression statistics. Totals are exact; the means are derived from
/// them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub docs: u64,
    pub tokens: u64,
    pub bytes: u64,
    pub words: u64,
    pub mean_tokens_per_doc: f64,
    pub bytes_per_token: f64,
    pub tokens_per_word: f64,
}

impl TokenStats {
    pub fn from_totals(docs: u64, tokens: u64, bytes: u64, words: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        TokenStats {
            docs,
            tokens,
            bytes,
            words,
            mean_tokens_per_doc: ratio(tokens, docs),
            bytes_per_token: ratio(bytes, tokens),
            tokens_per_word: ratio(tokens, words),
        }
    }

    pub fn merge(self, other: TokenStats) -> TokenStats {
        TokenStats::from_totals(
            self.docs + other.docs,
            self.tokens + other.tokens,
            self.bytes + other.bytes,
            self.words + other.words,
        )
    }
}

pub fn corpus_token_stats<S: AsRef<str> + Sync>(
    model: &TokenizerModel,
    docs: &[S],
    exec: &Executor,
) -> Result<TokenStats, TokenizerError> {
    let per_doc = exec.map(docs, |d| {
        let d = d.as_ref();
        model.encode(d).map(|ids| {
            TokenStats::from_totals(1, ids.len() as u64, d.len() as u64, d.split_whitespace().count() as u64)
        })
    });
    per_doc.into_iter().try_fold(TokenStats::default(), |acc, s| Ok(acc.merge(s?)))
}

/// Byte ranges of LaTeX commands (`\` followed by ASCII letters).
pub fn latex_commands(text: &str) -> Vec<Range<usize>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'\\' {
            let mut j = i + 1;
            while j < b.len() && b[j].is_ascii_alphabetic() {
                j += 1;
            }
            if j > i + 1 {
                out.push(i..j);
                i = j;
                continue;
            }
            // `\\` and other control symbols are not commands; skip both bytes.
            i += 2;
            continue;
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandFragmentation {
    pub command: String,
    pub seen: u64,
    pub intact: u64,
    pub fragmentation_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FragmentationReport {
    pub commands_seen: u64,
    pub commands_intact: u64,
    pub fragmentation_rate: f64,
    /// Most frequent commands first, ties by name.
    pub per_command: Vec<CommandFragmentation>,
}

fn rate(seen: u64, intact: u64) -> f64 {
    if seen == 0 {
        0.0
    } else {
        1.0 - intact as f64 / seen as f64
    }
}

/// A command occurrence is intact when one token covers exactly its span.
pub fn fragmentation_stats<S: AsRef<str> + Sync>(
    model: &TokenizerModel,
    docs: &[S],
    top_n: usize,
    exec: &Executor,
) -> Result<FragmentationReport, TokenizerError> {
    let per_doc = exec.map(docs, |d| -> Result<BTreeMap<String, (u64, u64)>, TokenizerError> {
        let d = d.as_ref();
        let spans = model.encode_with_offsets(d)?;
        let mut tally: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        let mut k = 0;
        for cmd in latex_commands(d) {
            while k < spans.len() && spans[k].span.start < cmd.start {
                k += 1;
            }
            let intact = spans.get(k).is_some_and(|t| t.span == cmd);
            let e = tally.entry(d[cmd].to_string()).or_default();
            e.0 += 1;
            e.1 += u64::from(intact);
        }
        Ok(tally)
    });
    let mut total: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for t in per_doc {
        for (cmd, (s, i)) in t? {
            let e = total.entry(cmd).or_default();
            e.0 += s;
            e.1 += i;
        }
    }
    let seen: u64 = total.values().map(|v| v.0).sum();
    let intact: u64 = total.values().map(|v| v.1).sum();
    let mut per_command: Vec<CommandFragmentation> = total
        .into_iter()
        .map(|(command, (s, i))| CommandFragmentation { command, seen: s, intact: i, fragmentation_rate: rate(s, i) })
        .collect();
    per_command.sort_by(|a, b| b.seen.cmp(&a.seen).then_with(|| a.command.cmp(&b.command)));
    per_command.truncate(top_n);
    Ok(FragmentationReport {
        commands_seen: seen,
        commands_intact: intact,
        fragmentation_rate: rate(seen, intact),
        per_command,
    })
}

#[cfg(test)]
mod tests {
    use super::super::model::SpecialTokens;
    use super::*;

    fn model(with_alpha: bool) -> TokenizerModel {
        let mut text: Vec<String> =
            ["\\", "a", "l", "p", "h", "$", "\\a", "\\al", "\\alp", "\\alph"].iter().map(|s| s.to_string()).collect();
        let mut merges: Vec<(String, String)> = vec![
            ("\\".into(), "a".into()),
            ("\\a".into(), "l".into()),
            ("\\al".into(), "p".into()),
            ("\\alp".into(), "h".into()),
        ];
        if with_alpha {
            text.push("\\alpha".into());
            merges.push(("\\alph".into(), "a".into()));
        }
        TokenizerModel::new(SpecialTokens::default(), true, text, merges).unwrap()
    }

    #[test]
    fn stats_arithmetic() {
        assert_eq!(TokenStats::from_totals(1, 10, 38, 5).bytes_per_token, 3.8);
        assert_eq!(TokenStats::from_totals(1, 10, 38, 5).mean_tokens_per_doc, 10.0);
        let corpus = TokenStats::from_totals(1, 52_180_000_000, 200_000_000_000, 0);
        assert!((corpus.bytes_per_token - 3.833).abs() < 1e-3);
        let empty: [&str; 0] = [];
        let s = corpus_token_stats(&model(true), &empty, &Executor::sequential()).unwrap();
        assert_eq!(s, TokenStats::default());
    }

    #[test]
    fn command_detection() {
        let t = "\\alpha\\beta \\\\ \\{ x\\c";
        let cmds: Vec<&str> = latex_commands(t).into_iter().map(|r| &t[r]).collect();
        assert_eq!(cmds, vec!["\\alpha", "\\beta", "\\c"]);
    }

    #[test]
    fn intact_and_split_commands() {
        let exec = Executor::sequential();
        let whole = fragmentation_stats(&model(true), &["$\\alpha$"], 10, &exec).unwrap();
        assert_eq!(whole.fragmentation_rate, 0.0);
        assert_eq!(whole.per_command[0].command, "\\alpha");
        let split = fragmentation_stats(&model(false), &["$\\alpha$"], 10, &exec).unwrap();
        assert_eq!(split.fragmentation_rate, 1.0);
        let none = fragmentation_stats(&model(false), &["no commands"], 10, &exec).unwrap();
        assert_eq!(none.commands_seen, 0);
        assert_eq!(none.fragmentation_rate, 0.0);
    }
}
