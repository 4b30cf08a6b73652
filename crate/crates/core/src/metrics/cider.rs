// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{HashMap, HashSet};

use super::rouge::ngram_counts;
use super::{MetricError, TokenSeq};

const MAX_N: usize = 4;

type Vector<'a> = HashMap<&'a [String], f64>;

/// Cosine similarity of two sparse vectors; 0 when either is zero.
pub fn cosine(a: &HashMap<&[String], f64>, b: &HashMap<&[String], f64>) -> f64 {
    let dot: f64 = a.iter().map(|(k, v)| v * b.get(k).copied().unwrap_or(0.0)).sum();
    let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn weigh<'a>(tokens: &'a [String], n: usize, df: &HashMap<&[String], usize>, n_items: f64) -> Vector<'a> {
    ngram_counts(tokens, n)
        .into_iter()
        .map(|(g, tf)| {
            let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
            (g, tf as f64 * (n_items / d).ln())
        })
        .collect()
}

/// Per-item CIDEr: for n = 1..4, TF-IDF cosine between hypothesis and each
/// reference averaged over references, then averaged over n, times 10.
///
/// Document frequency counts corpus items whose references contain the
/// n-gram; `idf(g) = ln(N / max(1, df(g)))`.
pub fn cider_per_item(corpus: &[(TokenSeq, Vec<TokenSeq>)]) -> Result<Vec<f64>, MetricError> {
    if corpus.len() < 2 {
        return Err(MetricError::CorpusTooSmall(corpus.len()));
    }
    let n_items = corpus.len() as f64;
    let mut scores = vec![0.0; corpus.len()];
    for n in 1..=MAX_N {
        let mut df: HashMap<&[String], usize> = HashMap::new();
        for (_, refs) in corpus {
            let grams: HashSet<&[String]> = refs.iter().flat_map(|r| ngram_counts(r, n).into_keys()).collect();
            for g in grams {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        for (score, (hyp, refs)) in scores.iter_mut().zip(corpus) {
            if refs.is_empty() {
                continue;
            }
            let hv = weigh(hyp, n, &df, n_items);
            let mean: f64 = refs.iter().map(|r| cosine(&hv, &weigh(r, n, &df, n_items))).sum::<f64>() / refs.len() as f64;
            *score += mean / MAX_N as f64;
        }
    }
    Ok(scores.into_iter().map(|s| s * 10.0).collect())
}

/// Corpus CIDEr: mean of per-item scores.
pub fn cider(corpus: &[(TokenSeq, Vec<TokenSeq>)]) -> Result<f64, MetricError> {
    let per_item = cider_per_item(corpus)?;
    Ok(per_item.iter().sum::<f64>() / per_item.len() as f64)
}
