// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! METEOR restricted to exact unigram matches (no stemming or synonyms).

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeteorAlignment {
    /// (hyp index, ref index) pairs sorted by hyp index.
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
}

/// One-to-one exact alignment built by repeatedly taking the longest
/// contiguous run of unaligned matching tokens (earliest hypothesis position,
/// then earliest reference position, on ties).
///
/// The loop only stops once no unaligned equal pair remains, so the match
/// count is the maximum possible; preferring long runs keeps chunks low.
pub fn meteor_alignment(hyp: &[String], reference: &[String]) -> MeteorAlignment {
    let (n, m) = (hyp.len(), reference.len());
    let mut h_used = vec![false; n];
    let mut r_used = vec![false; m];
    let mut pairs = Vec::new();
    let mut run = vec![0usize; (n + 1) * (m + 1)];
    loop {
        let mut best = (0usize, 0usize, 0usize);
        for i in 0..n {
            for j in 0..m {
                let cell = (i + 1) * (m + 1) + j + 1;
                run[cell] = if !h_used[i] && !r_used[j] && hyp[i] == reference[j] {
                    run[i * (m + 1) + j] + 1
                } else {
                    0
                };
                let len = run[cell];
                if len > best.0 {
                    best = (len, i + 1 - len, j + 1 - len);
                } else if len == best.0 && len > 0 {
                    let start = (i + 1 - len, j + 1 - len);
                    if start < (best.1, best.2) {
                        best = (len, start.0, start.1);
                    }
                }
            }
        }
        let (len, i0, j0) = best;
        if len == 0 {
            break;
        }
        for k in 0..len {
            h_used[i0 + k] = true;
            r_used[j0 + k] = true;
            pairs.push((i0 + k, j0 + k));
        }
    }
    pairs.sort_unstable();
    let chunks = pairs
        .iter()
        .enumerate()
        .filter(|(k, (i, j))| *k == 0 || !(pairs[k - 1].0 + 1 == *i && pairs[k - 1].1 + 1 == *j))
        .count();
    MeteorAlignment { pairs, chunks }
}

/// `F_mean · (1 − 0.5·(chunks/matches)³)` with `F_mean = 10PR / (R + 9P)`.
pub fn meteor(hyp: &[String], reference: &[String]) -> f64 {
    let a = meteor_alignment(hyp, reference);
    let matches = a.pairs.len();
    if matches == 0 {
        return 0.0;
    }
    let p = matches as f64 / hyp.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let frag = a.chunks as f64 / matches as f64;
    f_mean * (1.0 - 0.5 * frag.powi(3))
}
