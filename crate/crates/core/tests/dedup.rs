mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use texforge::dedup::{
    cluster_duplicates, estimate_jaccard, minhash_signature, CandidateMode, DedupConfig, DedupIndex, KeepPolicy,
    MinHashParams,
};
use texforge::par::Executor;

fn words(prefix: &str, n: usize) -> String {
    (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
}

/// `base` with every `step`-th word replaced.
fn perturb(base: &str, step: usize) -> String {
    base.split_whitespace()
        .enumerate()
        .map(|(i, w)| if i % step == step - 1 { format!("edit{i}") } else { w.to_string() })
        .collect::<Vec<_>>()
        .join(" ")
}

fn doc_set() -> impl Strategy<Value = Vec<(String, String)>> {
    // A handful of base texts, each possibly copied or lightly edited.
    prop::collection::vec((0usize..4, prop::option::of(20usize..60)), 2..12).prop_map(|spec| {
        spec.into_iter()
            .enumerate()
            .map(|(i, (base, edit))| {
                let text = words(&format!("b{base}w"), 150);
                let text = match edit {
                    Some(step) => perturb(&text, step),
                    None => text,
                };
                (format!("d{i:02}"), text)
            })
            .collect()
    })
}

fn exhaustive() -> DedupConfig {
    DedupConfig { candidates: CandidateMode::Exhaustive, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn estimate_is_symmetric_and_reflexive(seed in 0u64..1000) {
        let params = MinHashParams::default();
        for (a, b) in common::jaccard_pairs(seed, 3) {
            let (sa, sb) = (minhash_signature(&a, &params).unwrap(), minhash_signature(&b, &params).unwrap());
            prop_assert_eq!(estimate_jaccard(&sa, &sb).unwrap(), estimate_jaccard(&sb, &sa).unwrap());
            prop_assert_eq!(estimate_jaccard(&sa, &sa).unwrap(), 1.0);
        }
    }

    #[test]
    fn removal_never_separates_verified_pairs(docs in doc_set(), drop in 0usize..12) {
        let cfg = exhaustive();
        let exec = Executor::sequential();
        let full = cluster_duplicates(&docs, &cfg, &exec).unwrap();
        let drop = drop % docs.len();
        let removed_id = docs[drop].0.clone();
        let rest: Vec<_> = docs.iter().filter(|d| d.0 != removed_id).cloned().collect();
        let part = cluster_duplicates(&rest, &cfg, &exec).unwrap();
        let params = cfg.minhash;
        let rep = |o: &texforge::dedup::DedupOutcome, id: &str| o.removed.get(id).cloned().unwrap_or_else(|| id.to_string());
        for (i, (ia, ta)) in rest.iter().enumerate() {
            for (ib, tb) in &rest[i + 1..] {
                let sa = minhash_signature(ta, &params).unwrap();
                let sb = minhash_signature(tb, &params).unwrap();
                let direct = ta.split_whitespace().eq(tb.split_whitespace())
                    || estimate_jaccard(&sa, &sb).unwrap() >= cfg.threshold;
                if direct && rep(&full, ia) == rep(&full, ib) {
                    prop_assert_eq!(rep(&part, ia), rep(&part, ib), "{} and {} separated after dropping {}", ia, ib, removed_id);
                }
            }
        }
    }

    #[test]
    fn kept_representative_is_earliest(docs in doc_set()) {
        let out = cluster_duplicates(&docs, &exhaustive(), &Executor::sequential()).unwrap();
        let order: Vec<&str> = docs.iter().map(|d| d.0.as_str()).collect();
        for (rep, members) in &out.clusters {
            let first = members.iter().map(|m| order.iter().position(|o| o == m).unwrap()).min().unwrap();
            prop_assert_eq!(rep.as_str(), order[first]);
        }
        let kept: BTreeSet<&String> = out.kept.iter().collect();
        prop_assert_eq!(kept.len() + out.removed.len(), docs.len());
    }

    #[test]
    fn workers_do_not_change_clusters(docs in doc_set()) {
        let cfg = DedupConfig::default();
        prop_assert_eq!(
            cluster_duplicates(&docs, &cfg, &Executor::new(1)).unwrap(),
            cluster_duplicates(&docs, &cfg, &Executor::new(4)).unwrap()
        );
    }

    #[test]
    fn index_merge_is_order_free(docs in doc_set(), cut in 0usize..12) {
        let cfg = DedupConfig::default();
        let exec = Executor::sequential();
        let cut = cut % docs.len();
        let whole = DedupIndex::build(&docs, &cfg, &exec).cluster(&cfg);
        let left = DedupIndex::build(&docs[..cut], &cfg, &exec);
        let right = DedupIndex::build_at(&docs[cut..], cut as u64, &cfg, &exec);
        let lr = left.clone().merge(right.clone()).unwrap().cluster(&cfg);
        let rl = right.merge(left).unwrap().cluster(&cfg);
        prop_assert_eq!(&lr, &whole);
        prop_assert_eq!(&rl, &whole);
    }
}

#[test]
fn minhash_error_is_within_statistical_bound() {
    let params = MinHashParams::default();
    let pairs = common::jaccard_pairs(1234, 200);
    let errs: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| {
            let est =
                estimate_jaccard(&minhash_signature(a, &params).unwrap(), &minhash_signature(b, &params).unwrap())
                    .unwrap();
            (est - common::exact_jaccard(a, b, params.shingle_width)).abs()
        })
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(mean <= 2.0 / (params.num_perm as f64).sqrt(), "mean error {mean}");
}

#[test]
fn disjoint_docs_estimate_near_zero() {
    let params = MinHashParams::default();
    let a = minhash_signature(&words("left", 300), &params).unwrap();
    let b = minhash_signature(&words("right", 300), &params).unwrap();
    assert!(estimate_jaccard(&a, &b).unwrap() <= 0.05);
}

#[test]
fn mismatched_signatures_are_rejected() {
    let a = minhash_signature(&words("x", 50), &MinHashParams::default()).unwrap();
    let b = minhash_signature(&words("x", 50), &MinHashParams { num_perm: 64, ..Default::default() }).unwrap();
    assert!(estimate_jaccard(&a, &b).is_err());
}

#[test]
fn planted_exact_pair_among_ten() {
    let mut docs: Vec<(String, String)> = (0..9).map(|i| (format!("p{i}"), words(&format!("t{i}w"), 80))).collect();
    docs.insert(5, ("copy".into(), docs[2].1.replace(' ', "  ")));
    let out = cluster_duplicates(&docs, &DedupConfig::default(), &Executor::sequential()).unwrap();
    assert_eq!(out.kept.len(), 9);
    assert_eq!(out.clusters.len(), 1);
    assert_eq!(out.clusters["p2"], vec!["p2".to_string(), "copy".to_string()]);
    assert_eq!(out.removed_exact, 1);
}

#[test]
fn planted_near_pair_clusters_and_distinct_docs_do_not() {
    let base = words("n", 400);
    let near = perturb(&base, 60);
    let j = common::exact_jaccard(&base, &near, 5);
    assert!((0.85..0.95).contains(&j), "planted pair has exact jaccard {j}");
    let mut docs = vec![("a".to_string(), base), ("b".to_string(), near)];
    for i in 0..6 {
        docs.push((format!("z{i}"), words(&format!("z{i}q"), 200)));
    }
    let out = cluster_duplicates(&docs, &DedupConfig::default(), &Executor::sequential()).unwrap();
    assert_eq!(out.removed.get("b").map(String::as_str), Some("a"));
    assert_eq!(out.kept.len(), 7);
    assert_eq!(out.clusters.len(), 1);
}

#[test]
fn keep_longest_prefers_the_longer_member() {
    let short = words("k", 200);
    let long = format!("{short} tail1 tail2");
    let docs = vec![("first".to_string(), short), ("second".to_string(), long)];
    let cfg = DedupConfig { keep: KeepPolicy::Longest, ..Default::default() };
    let out = cluster_duplicates(&docs, &cfg, &Executor::sequential()).unwrap();
    assert_eq!(out.kept, vec!["second".to_string()]);
}

#[test]
fn persisted_index_dedups_later_ingests() {
    let cfg = DedupConfig::default();
    let exec = Executor::sequential();
    let old = vec![("old".to_string(), words("p", 120))];
    let mut buf = Vec::new();
    DedupIndex::build(&old, &cfg, &exec).write_jsonl(&mut buf).unwrap();
    let mut index = DedupIndex::read_jsonl(&buf[..]).unwrap();
    index.extend(&[("new".to_string(), words("p", 120)), ("fresh".to_string(), words("f", 120))], &cfg, &exec);
    let out = index.cluster(&cfg);
    assert_eq!(out.kept, vec!["fresh".to_string()]);
    assert_eq!(out.removed.get("new").map(String::as_str), Some("old"));
}
