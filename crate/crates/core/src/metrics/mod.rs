// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Summary evaluation: ROUGE-1/2/L, corpus BLEU, METEOR-exact, CIDEr and the
//! ROUGE-L quality gate used by the optimization loop.
//!
//! Every metric is a pure function of token sequences.

mod bleu;
mod cider;
mod meteor;
mod rouge;

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::bleu;
pub use cider::{cider, cider_per_item, cosine};
pub use meteor::{meteor, meteor_alignment, MeteorAlignment};
pub use rouge::{lcs_len, rouge_l, rouge_n, Prf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("CIDEr needs at least two corpus items, got {0}")]
    CorpusTooSmall(usize),
    #[error("baseline ROUGE-L F1 is zero")]
    ZeroBaseline,
    #[error("hypothesis/reference count mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Lowercase alphanumeric tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn from_tokens<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        TokenSeq(
            tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .map(|t| t.to_lowercase())
                .collect(),
        )
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub rouge1: Prf,
    pub rouge2: Prf,
    #[serde(rename = "rougeL")]
    pub rouge_l: Prf,
    pub bleu: f64,
    pub meteor: f64,
    pub cider: Option<f64>,
    pub items: usize,
}

/// One evaluation item: a hypothesis and one or more references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub hyp: String,
    pub refs: Vec<String>,
}

fn best_prf(hyp: &[String], refs: &[TokenSeq], f: impl Fn(&[String], &[String]) -> Prf) -> Prf {
    refs.iter()
        .map(|r| f(hyp, r))
        .fold(Prf::default(), |best, p| if p.f1 > best.f1 { p } else { best })
}

/// Corpus evaluation. ROUGE and METEOR take the best reference per item and
/// are averaged over items; BLEU and CIDEr are corpus-level. CIDEr is left
/// empty for single-item corpora.
pub fn evaluate_corpus(items: &[CorpusItem]) -> Result<MetricReport, MetricError> {
    if items.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let tokenized: Vec<(TokenSeq, Vec<TokenSeq>)> = items
        .iter()
        .map(|it| (tokenize(&it.hyp), it.refs.iter().map(|r| tokenize(r)).collect()))
        .collect();
    let n = items.len() as f64;
    let mut sums = [Prf::default(); 3];
    let mut meteor_sum = 0.0;
    for (hyp, refs) in &tokenized {
        let parts = [
            best_prf(hyp, refs, |h, r| rouge_n(h, r, 1)),
            best_prf(hyp, refs, |h, r| rouge_n(h, r, 2)),
            best_prf(hyp, refs, rouge_l),
        ];
        for (s, p) in sums.iter_mut().zip(parts) {
            s.precision += p.precision;
            s.recall += p.recall;
            s.f1 += p.f1;
        }
        meteor_sum += refs.iter().map(|r| meteor(hyp, r)).fold(0.0, f64::max);
    }
    let avg = |p: Prf| Prf { precision: p.precision / n, recall: p.recall / n, f1: p.f1 / n };
    Ok(MetricReport {
        rouge1: avg(sums[0]),
        rouge2: avg(sums[1]),
        rouge_l: avg(sums[2]),
        bleu: bleu(&tokenized)?,
        meteor: meteor_sum / n,
        cider: if items.len() >= 2 { Some(cider(&tokenized)?) } else { None },
        items: items.len(),
    })
}

/// Minimum candidate/baseline ROUGE-L ratio accepted by the optimization loop.
pub const QUALITY_GATE_THRESHOLD: f64 = 0.70;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateDecision {
    Pass,
    Recalibrate,
}

/// A ratio exactly at the threshold passes.
pub fn gate_ratio_passes(ratio: f64, threshold: f64) -> bool {
    ratio >= threshold
}

/// Compares candidate ROUGE-L F1 against the full-precision baseline.
pub fn quality_gate(
    candidate: &MetricReport,
    baseline: &MetricReport,
    threshold: f64,
) -> Result<(GateDecision, f64), MetricError> {
    if !(baseline.rouge_l.f1 > 0.0) {
        return Err(MetricError::ZeroBaseline);
    }
    let ratio = candidate.rouge_l.f1 / baseline.rouge_l.f1;
    let decision = if gate_ratio_passes(ratio, threshold) { GateDecision::Pass } else { GateDecision::Recalibrate };
    Ok((decision, ratio))
}
