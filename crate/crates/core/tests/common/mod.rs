//! Independent reference implementations used by the integration tests.
//! None of these share code paths with the library beyond pre-tokenization.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use texforge::tokenlab::{pretokenize, TokenizerModel};

/// Exact Jaccard over word w-gram sets, computed on the strings.
pub fn exact_jaccard(a: &str, b: &str, width: usize) -> f64 {
    let set = |s: &str| -> BTreeSet<String> {
        let words: Vec<&str> = s.split_whitespace().collect();
        if words.len() < width {
            return BTreeSet::new();
        }
        words.windows(width).map(|w| w.join(" ")).collect()
    };
    let (sa, sb) = (set(a), set(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Document pairs spanning the whole Jaccard range: `b` is `a` with a random
/// fraction of words replaced.
pub fn jaccard_pairs(seed: u64, n: usize) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..400).map(|i| format!("w{i}")).collect();
    (0..n)
        .map(|_| {
            let len = rng.gen_range(60..240);
            let a: Vec<String> = (0..len).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
            let p: f64 = rng.gen_range(0.0..0.6);
            let b: Vec<String> = a
                .iter()
                .map(|w| if rng.gen_bool(p) { format!("x{}", rng.gen_range(0..400)) } else { w.clone() })
                .collect();
            (a.join(" "), b.join(" "))
        })
        .collect()
}

/// Brute-force BPE: every round recounts all adjacent pairs from scratch,
/// takes the highest count (ties: smaller merged string, then smaller pair)
/// and stops when no pair occurs twice or the learned vocabulary is full.
pub fn bpe_oracle(corpus: &[String], target_vocab: usize) -> (Vec<String>, Vec<(String, String)>) {
    let mut words: Vec<(Vec<String>, usize)> = {
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            for r in pretokenize(doc) {
                *freq.entry(doc[r].to_string()).or_default() += 1;
            }
        }
        freq.into_iter().map(|(w, f)| (w.chars().map(String::from).collect(), f)).collect()
    };
    let mut vocab: Vec<String> =
        corpus.iter().flat_map(|d| d.chars()).collect::<BTreeSet<char>>().into_iter().map(String::from).collect();
    let mut merges = Vec::new();
    while vocab.len() < target_vocab {
        let mut counts: HashMap<(String, String), usize> = HashMap::new();
        for (w, f) in &words {
            for i in 0..w.len().saturating_sub(1) {
                *counts.entry((w[i].clone(), w[i + 1].clone())).or_default() += f;
            }
        }
        let best = counts.into_iter().filter(|(_, c)| *c >= 2).min_by(|(pa, ca), (pb, cb)| {
            cb.cmp(ca)
                .then_with(|| format!("{}{}", pa.0, pa.1).cmp(&format!("{}{}", pb.0, pb.1)))
                .then_with(|| pa.cmp(pb))
        });
        let Some(((l, r), _)) = best else { break };
        for (w, _) in words.iter_mut() {
            *w = merge_once(w, &l, &r);
        }
        let m = format!("{l}{r}");
        if !vocab.contains(&m) {
            vocab.push(m);
        }
        merges.push((l, r));
    }
    (vocab, merges)
}

fn merge_once(word: &[String], l: &str, r: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == l && word[i + 1] == r {
            out.push(format!("{l}{r}"));
            i += 2;
        } else {
            out.push(word[i].clone());
            i += 1;
        }
    }
    out
}

/// Encode by applying the model's merges one at a time, in list order, to
/// each pre-token. Unknown characters go to byte tokens or `unk`.
pub fn encode_oracle(model: &TokenizerModel, text: &str) -> Option<Vec<u32>> {
    let id_of: HashMap<&str, u32> = model.vocab().iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();
    let specials: BTreeSet<&str> =
        [&model.specials().unk, &model.specials().bos, &model.specials().eos, &model.specials().pad]
            .into_iter()
            .flatten()
            .map(String::as_str)
            .collect();
    let mut ids = Vec::new();
    for r in pretokenize(text) {
        let mut syms: Vec<String> = text[r].chars().map(String::from).collect();
        for (l, rr) in model.merges() {
            syms = merge_once(&syms, l, rr);
        }
        for s in syms {
            match id_of.get(s.as_str()) {
                Some(&id) if !specials.contains(s.as_str()) && !is_byte_token(&s) => ids.push(id),
                _ => {
                    if model.byte_fallback() {
                        for b in s.bytes() {
                            ids.push(id_of[format!("<0x{b:02X}>").as_str()]);
                        }
                    } else {
                        ids.push(model.unk_id()?);
                    }
                }
            }
        }
    }
    Some(ids)
}

fn is_byte_token(s: &str) -> bool {
    s.len() == 6 && s.starts_with("<0x") && s.ends_with('>')
}

/// Random small LaTeX-flavoured corpora for tokenizer checks.
pub fn small_corpus(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pieces = [
        "\\alpha",
        "\\beta",
        "\\frac{a}{b}",
        "x^2",
        "the",
        "theorem",
        "of",
        "and",
        "$",
        "+",
        "=",
        "\\sum_{i=1}^n",
        "proof",
        "lemma",
        "\\mathbb{R}",
        "\\int",
        "dx",
        "{",
        "}",
        "ab",
        "abab",
        "é",
        "ü",
    ];
    let docs = rng.gen_range(2..8);
    (0..docs)
        .map(|_| {
            let n = rng.gen_range(20..200);
            let mut s = String::new();
            for _ in 0..n {
                s.push_str(pieces.choose(&mut rng).unwrap());
                s.push(if rng.gen_bool(0.8) { ' ' } else { '\n' });
            }
            s
        })
        .collect()
}

/// A `main → s1 → … → s{depth}` include chain and its expected flattening:
/// every file's text before its directive, then every file's text after it,
/// innermost first.
pub fn chain_project(depth: usize) -> (BTreeMap<String, String>, String) {
    let mut files = BTreeMap::new();
    let names: Vec<String> =
        (0..=depth).map(|i| if i == 0 { "main.tex".into() } else { format!("s{i}.tex") }).collect();
    let bodies: Vec<(String, String)> =
        (0..=depth).map(|i| (format!("before {i}\n"), format!("\nafter {i}\n"))).collect();
    for i in 0..=depth {
        let head = if i == 0 { "\\documentclass{article}\n" } else { "" };
        let include = if i < depth { format!("\\input{{s{}}}", i + 1) } else { String::new() };
        files.insert(names[i].clone(), format!("{head}{}{include}{}", bodies[i].0, bodies[i].1));
    }
    let mut expected = String::from("\\documentclass{article}\n");
    for (before, _) in &bodies {
        expected.push_str(before);
    }
    for (_, after) in bodies.iter().rev() {
        expected.push_str(after);
    }
    (files, expected)
}
