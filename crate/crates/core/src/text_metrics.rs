//! Tokenization, LCS-based ROUGE and extractive fragment coverage.
//!
//! Everything here works on token ids. ROUGE is computed over whole
//! sequences without sentence splitting and without stemming.

use std::collections::HashMap;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::vocab::{TokenId, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Prediction,
    Reference,
    Document,
}

/// An ordered run of token ids. May be empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<TokenId>,
    pub origin: Origin,
}

impl TokenSeq {
    pub fn new(tokens: Vec<TokenId>, origin: Origin) -> Self {
        TokenSeq { tokens, origin }
    }
}

impl Deref for TokenSeq {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.tokens
    }
}

/// Lowercase, split on whitespace and detach every punctuation character
/// as its own word.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut cur = String::new();
        for ch in chunk.chars() {
            if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace()) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_lowercase().collect());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Map text to ids under `vocab`; unknown words become UNK.
pub fn tokenize(text: &str, vocab: &Vocab, origin: Origin) -> TokenSeq {
    TokenSeq::new(split_words(text).iter().map(|w| vocab.id(w)).collect(), origin)
}

/// Longest common subsequence length by full dynamic programming.
pub fn lcs_length(a: &[TokenId], b: &[TokenId]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &x in a {
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RougeVariant {
    R1,
    R2,
    RL,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(matches: usize, pred_total: usize, ref_total: usize) -> Self {
        if pred_total == 0 || ref_total == 0 {
            return RougeScore { precision: 0.0, recall: 0.0, f1: 0.0 };
        }
        let precision = matches as f64 / pred_total as f64;
        let recall = matches as f64 / ref_total as f64;
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        RougeScore { precision, recall, f1 }
    }
}

fn ngram_counts(seq: &[TokenId], n: usize) -> HashMap<&[TokenId], usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for gram in seq.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

pub fn rouge(pred: &[TokenId], reference: &[TokenId], variant: RougeVariant) -> RougeScore {
    match variant {
        RougeVariant::RL => RougeScore::from_counts(lcs_length(pred, reference), pred.len(), reference.len()),
        RougeVariant::R1 | RougeVariant::R2 => {
            let n = if variant == RougeVariant::R1 { 1 } else { 2 };
            let p = ngram_counts(pred, n);
            let r = ngram_counts(reference, n);
            let matches: usize = p.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
            RougeScore::from_counts(matches, pred.len().saturating_sub(n - 1), reference.len().saturating_sub(n - 1))
        }
    }
}

pub fn rouge_f1(pred: &[TokenId], reference: &[TokenId], variant: RougeVariant) -> f64 {
    rouge(pred, reference, variant).f1
}

/// A contiguous run shared by a summary and a document.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fragment {
    pub start_in_summary: usize,
    pub start_in_document: usize,
    pub length: usize,
}

/// Greedy left-to-right fragment extraction.
///
/// At each summary position the longest run that also occurs contiguously
/// in the document is taken (earliest document start on ties) and the scan
/// jumps past it; positions with no match of at least `min_len` tokens are
/// skipped one at a time.
pub fn extract_fragments_min(summary: &[TokenId], document: &[TokenId], min_len: usize) -> Vec<Fragment> {
    let (n, m) = (summary.len(), document.len());
    if n == 0 || m == 0 {
        return Vec::new();
    }
    // run[i][j]: length of the common run starting at summary[i], document[j]
    let mut run = vec![0u32; (n + 1) * (m + 1)];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            if summary[i] == document[j] {
                run[i * (m + 1) + j] = run[(i + 1) * (m + 1) + j + 1] + 1;
            }
        }
    }
    let min_len = min_len.max(1);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let row = &run[i * (m + 1)..i * (m + 1) + m];
        let (mut best_j, mut best) = (0, 0u32);
        for (j, &len) in row.iter().enumerate() {
            if len > best {
                best = len;
                best_j = j;
            }
        }
        let best = best as usize;
        if best >= min_len {
            out.push(Fragment { start_in_summary: i, start_in_document: best_j, length: best });
            i += best;
        } else {
            i += 1;
        }
    }
    out
}

pub fn extract_fragments(summary: &[TokenId], document: &[TokenId]) -> Vec<Fragment> {
    extract_fragments_min(summary, document, 1)
}

/// Extractive fragment coverage of one document by a summary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Efc {
    pub score: f64,
    /// Set when the summary is empty; `score` is then defined as 0.
    pub empty_summary: bool,
}

pub fn efc_min(summary: &[TokenId], document: &[TokenId], min_len: usize) -> Efc {
    if summary.is_empty() {
        return Efc { score: 0.0, empty_summary: true };
    }
    let covered: usize = extract_fragments_min(summary, document, min_len).iter().map(|f| f.length).sum();
    Efc { score: covered as f64 / summary.len() as f64, empty_summary: false }
}

pub fn efc(summary: &[TokenId], document: &[TokenId]) -> Efc {
    efc_min(summary, document, 1)
}
