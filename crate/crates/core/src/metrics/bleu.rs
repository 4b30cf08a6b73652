// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use super::rouge::ngram_counts;
use super::{MetricError, TokenSeq};

const MAX_N: usize = 4;

/// Corpus BLEU-4, uniform weights, no smoothing.
///
/// Counts are clipped by the maximum count in any reference. The effective
/// reference length per item is the reference closest to the hypothesis
/// length (shorter wins ties). Any zero n-gram precision yields 0.
pub fn bleu(corpus: &[(TokenSeq, Vec<TokenSeq>)]) -> Result<f64, MetricError> {
    if corpus.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut matched = [0usize; MAX_N];
    let mut total = [0usize; MAX_N];
    let (mut c, mut r) = (0usize, 0usize);
    for (hyp, refs) in corpus {
        c += hyp.len();
        r += refs
            .iter()
            .map(|x| x.len())
            .min_by_key(|len| (len.abs_diff(hyp.len()), *len))
            .unwrap_or(0);
        for n in 1..=MAX_N {
            let h = ngram_counts(hyp, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for reference in refs {
                for (g, cnt) in ngram_counts(reference, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(cnt);
                }
            }
            total[n - 1] += h.values().sum::<usize>();
            matched[n - 1] += h.iter().map(|(g, cnt)| (*cnt).min(max_ref.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
    }
    if c == 0 || matched.iter().any(|m| *m == 0) {
        return Ok(0.0);
    }
    let log_p: f64 = matched
        .iter()
        .zip(&total)
        .map(|(m, t)| (*m as f64 / *t as f64).ln())
        .sum::<f64>()
        / MAX_N as f64;
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * log_p.exp())
}
