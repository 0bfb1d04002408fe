//! Multi-document coverage reward.
//!
//! Per-document EFC is summarised by its inverse coefficient of variation,
//! compared against the reference's, scaled by the prediction/reference
//! length ratio and added to ROUGE-L F1 with weight `beta`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_metrics::{efc, rouge_f1, RougeVariant, TokenSeq};
use crate::vocab::TokenId;

/// The input documents of one record, in their original order.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentSet {
    documents: Vec<TokenSeq>,
    separator: Option<TokenId>,
}

impl DocumentSet {
    /// Empty documents are rejected; an empty set is an error.
    pub fn new(documents: Vec<TokenSeq>, separator: Option<TokenId>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyDocumentSet);
        }
        if documents.iter().any(|d| d.is_empty()) {
            return Err(Error::EmptySequence);
        }
        Ok(DocumentSet { documents, separator })
    }

    pub fn documents(&self) -> &[TokenSeq] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn separator(&self) -> Option<TokenId> {
        self.separator
    }

    /// All documents joined by the separator (if any).
    pub fn concatenated(&self) -> Vec<TokenId> {
        let mut out = Vec::new();
        for (i, d) in self.documents.iter().enumerate() {
            if i > 0 {
                if let Some(sep) = self.separator {
                    out.push(sep);
                }
            }
            out.extend_from_slice(d);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageVector {
    pub values: Vec<f64>,
    /// The summary was empty; every value is 0.
    pub degenerate: bool,
}

impl CoverageVector {
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Sample standard deviation (n − 1 divisor); 0 for a single document.
    pub fn sample_std(&self) -> f64 {
        sample_std(&self.values)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub(crate) fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub beta: f64,
    pub sigma_epsilon: f64,
    pub cv_epsilon: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { beta: 1.0, sigma_epsilon: 1e-8, cv_epsilon: 1e-8 }
    }
}

impl RewardConfig {
    pub fn with_beta(beta: f64) -> Self {
        RewardConfig { beta, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let valid = self.beta >= 0.0 && self.sigma_epsilon > 0.0 && self.cv_epsilon > 0.0;
        if !valid {
            return Err(Error::Config(format!("reward needs beta >= 0 and positive epsilons, got {self:?}")));
        }
        Ok(())
    }
}

pub fn coverage_vector(summary: &[TokenId], docs: &DocumentSet) -> CoverageVector {
    CoverageVector {
        values: docs.documents.iter().map(|d| efc(summary, d).score).collect(),
        degenerate: summary.is_empty(),
    }
}

/// μ / (σ + ε) with the sample standard deviation.
pub fn cv_inverse(values: &[f64], cfg: &RewardConfig) -> f64 {
    mean(values) / (sample_std(values) + cfg.sigma_epsilon)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageTerm {
    pub c_pred: f64,
    pub c_ref: f64,
    pub r_cov: f64,
    pub r_cov_hat: f64,
    pub degenerate: bool,
}

/// Reference-baselined coverage comparison from precomputed parts.
pub fn coverage_term_from_parts(
    c_pred: f64,
    c_ref: f64,
    pred_len: usize,
    ref_len: usize,
    cfg: &RewardConfig,
) -> Result<CoverageTerm> {
    if ref_len == 0 {
        return Err(Error::EmptyReference);
    }
    let r_cov = (c_pred - c_ref) / (c_pred + cfg.cv_epsilon);
    if r_cov.abs() > 10.0 {
        warn!("coverage term is large: r_cov = {r_cov:.4e} (c_pred = {c_pred:.4e}, c_ref = {c_ref:.4e})");
    }
    // + 0.0 folds the -0.0 produced by an empty prediction
    let r_cov_hat = r_cov * pred_len as f64 / ref_len as f64 + 0.0;
    Ok(CoverageTerm { c_pred, c_ref, r_cov, r_cov_hat, degenerate: pred_len == 0 })
}

pub fn coverage_term(
    pred: &[TokenId],
    reference: &[TokenId],
    docs: &DocumentSet,
    cfg: &RewardConfig,
) -> Result<CoverageTerm> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let c_pred = cv_inverse(&coverage_vector(pred, docs).values, cfg);
    let c_ref = cv_inverse(&coverage_vector(reference, docs).values, cfg);
    coverage_term_from_parts(c_pred, c_ref, pred.len(), reference.len(), cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub rouge_l_f1: f64,
    pub r_cov: f64,
    pub r_cov_hat: f64,
    pub combined: f64,
    pub beta: f64,
    pub pred_len: usize,
    pub ref_len: usize,
    pub degenerate: bool,
}

impl RewardBreakdown {
    /// A breakdown for rewards that are not built from coverage (test
    /// fixtures, ablations); the whole value sits in the ROUGE slot.
    pub fn constant(value: f64) -> Self {
        RewardBreakdown {
            rouge_l_f1: value,
            r_cov: 0.0,
            r_cov_hat: 0.0,
            combined: value,
            beta: 0.0,
            pred_len: 0,
            ref_len: 0,
            degenerate: false,
        }
    }
}

pub fn combined_reward(
    pred: &[TokenId],
    reference: &[TokenId],
    docs: &DocumentSet,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    let term = coverage_term(pred, reference, docs, cfg)?;
    let rouge_l_f1 = rouge_f1(pred, reference, RougeVariant::RL);
    Ok(RewardBreakdown {
        rouge_l_f1,
        r_cov: term.r_cov,
        r_cov_hat: term.r_cov_hat,
        combined: rouge_l_f1 + cfg.beta * term.r_cov_hat,
        beta: cfg.beta,
        pred_len: pred.len(),
        ref_len: reference.len(),
        degenerate: term.degenerate,
    })
}
