use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::model::{SpecialTokens, TokenizerModel};
use super::TokenizerError;

/// Split text into pre-tokens: whitespace runs, backslash commands
/// (`\` plus its letters, or `\` plus one other character) and maximal
/// runs of everything else. Merges never cross pre-token boundaries.
pub fn pretokenize(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        let mut end = start + c.len_utf8();
        if c.is_whitespace() {
            while let Some(&(i, d)) = chars.peek() {
                if !d.is_whitespace() {
                    break;
                }
                end = i + d.len_utf8();
                chars.next();
            }
        } else if c == '\\' {
            match chars.peek() {
                Some(&(_, d)) if d.is_ascii_alphabetic() => {
                    while let Some(&(i, d)) = chars.peek() {
                        if !d.is_ascii_alphabetic() {
                            break;
                        }
                        end = i + 1;
                        chars.next();
                    }
                }
                Some(&(i, d)) if !d.is_whitespace() => {
                    end = i + d.len_utf8();
                    chars.next();
                }
                _ => {}
            }
        } else {
            while let Some(&(i, d)) = chars.peek() {
                if d.is_whitespace() || d == '\\' {
                    break;
                }
                end = i + d.len_utf8();
                chars.next();
            }
        }
        out.push(start..end);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Learned symbols to reach: alphabet plus merge results. Specials and
    /// byte tokens are not counted.
    pub target_vocab: usize,
    pub specials: SpecialTokens,
    pub byte_fallback: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { target_vocab: 8000, specials: SpecialTokens::default(), byte_fallback: false }
    }
}

pub fn train_bpe<S: AsRef<str>>(corpus: &[S], target_vocab: usize) -> Result<TokenizerModel, TokenizerError> {
    train_bpe_with(corpus, &TrainConfig { target_vocab, ..Default::default() })
}

type Pair = (String, String);

fn better(a: (&Pair, i64), b: (&Pair, i64)) -> bool {
    // Higher count wins; ties go to the smaller merged string, then pair.
    match a.1.cmp(&b.1) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => {
            let ma = format!("{}{}", a.0 .0, a.0 .1);
            let mb = format!("{}{}", b.0 .0, b.0 .1);
            (ma, a.0).cmp(&(mb, b.0)) == Ordering::Less
        }
    }
}

fn add_pairs(word: &[String], freq: i64, counts: &mut HashMap<Pair, i64>) {
    for w in word.windows(2) {
        *counts.entry((w[0].clone(), w[1].clone())).or_default() += freq;
    }
}

fn remove_pairs(word: &[String], freq: i64, counts: &mut HashMap<Pair, i64>) {
    for w in word.windows(2) {
        let key = (w[0].clone(), w[1].clone());
        if let Some(c) = counts.get_mut(&key) {
            *c -= freq;
            if *c <= 0 {
                counts.remove(&key);
            }
        }
    }
}

pub(crate) fn apply_merge(word: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == left && word[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(word[i].clone());
            i += 1;
        }
    }
    out
}

/// Greedy BPE: repeatedly merge the most frequent adjacent pair until the
/// learned vocabulary reaches the target or no pair occurs twice.
pub fn train_bpe_with<S: AsRef<str>>(corpus: &[S], cfg: &TrainConfig) -> Result<TokenizerModel, TokenizerError> {
    let mut word_freq: HashMap<&str, i64> = HashMap::new();
    let mut alphabet = BTreeSet::new();
    for doc in corpus {
        let doc = doc.as_ref();
        alphabet.extend(doc.chars());
        for r in pretokenize(doc) {
            *word_freq.entry(&doc[r]).or_default() += 1;
        }
    }
    if cfg.target_vocab < alphabet.len() {
        return Err(TokenizerError::VocabTooSmall { target: cfg.target_vocab, alphabet: alphabet.len() });
    }
    let mut words: Vec<(Vec<String>, i64)> =
        word_freq.into_iter().map(|(w, f)| (w.chars().map(String::from).collect(), f)).collect();
    words.sort();

    let mut tokens: Vec<String> = alphabet.iter().map(|c| c.to_string()).collect();
    let mut known: HashSet<String> = tokens.iter().cloned().collect();
    let mut merges: Vec<Pair> = Vec::new();
    let mut counts: HashMap<Pair, i64> = HashMap::new();
    for (w, f) in &words {
        add_pairs(w, *f, &mut counts);
    }

    while tokens.len() < cfg.target_vocab {
        let mut best: Option<(&Pair, i64)> = None;
        for (pair, &count) in &counts {
            if count >= 2 && best.is_none_or(|b| better((pair, count), b)) {
                best = Some((pair, count));
            }
        }
        let Some((pair, _)) = best else { break };
        let (left, right) = pair.clone();
        for (w, f) in words.iter_mut() {
            if w.windows(2).any(|p| p[0] == left && p[1] == right) {
                remove_pairs(w, *f, &mut counts);
                *w = apply_merge(w, &left, &right);
                add_pairs(w, *f, &mut counts);
            }
        }
        let merged = format!("{left}{right}");
        if known.insert(merged.clone()) {
            tokens.push(merged);
        }
        merges.push((left, right));
    }
    TokenizerModel::new(cfg.specials.clone(), cfg.byte_fallback, tokens, merges)
}
