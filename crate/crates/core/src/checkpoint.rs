//! JSON checkpoints: vocabulary, policy and, after RELAX fine-tuning, the
//! control variate and temperature.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control_variate::CvParams;
use crate::error::{Error, Result};
use crate::params::Block;
use crate::policy::PolicyParams;
use crate::vocab::Vocab;

pub const FORMAT: &str = "covrelax-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub vocab: Vocab,
    pub policy: PolicyParams,
    #[serde(default)]
    pub control_variate: Option<CvParams>,
    #[serde(default)]
    pub log_tau: Option<f64>,
}

fn check_block(name: &str, b: &Block, rows: usize, cols: usize) -> Result<()> {
    if b.rows != rows || b.cols != cols || b.data.len() != rows * cols {
        return Err(Error::Checkpoint(format!(
            "{name} is {}×{} with {} values, expected {rows}×{cols}",
            b.rows,
            b.cols,
            b.data.len()
        )));
    }
    if !b.data.iter().all(|v| v.is_finite()) {
        return Err(Error::Checkpoint(format!("{name} holds non-finite values")));
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(vocab: Vocab, policy: PolicyParams) -> Self {
        Checkpoint { format: FORMAT.into(), version: VERSION, vocab, policy, control_variate: None, log_tau: None }
    }

    /// Shapes must agree with each other and with the vocabulary.
    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported format {} v{}", self.format, self.version)));
        }
        let p = &self.policy;
        let (v, d, h) = (p.embedding.rows, p.embedding.cols, p.hidden_bias.rows);
        if v != self.vocab.len() {
            return Err(Error::Checkpoint(format!(
                "policy vocabulary {v} differs from stored vocabulary {}",
                self.vocab.len()
            )));
        }
        check_block("embedding", &p.embedding, v, d)?;
        check_block("input_proj", &p.input_proj, h, v)?;
        check_block("context_proj", &p.context_proj, h, d)?;
        check_block("hidden_bias", &p.hidden_bias, h, 1)?;
        check_block("output_proj", &p.output_proj, v, h)?;
        check_block("output_bias", &p.output_bias, v, 1)?;
        if p.banned.iter().any(|&t| t as usize >= v) {
            return Err(Error::Checkpoint("banned token outside the vocabulary".into()));
        }
        if let Some(cv) = &self.control_variate {
            let hc = cv.layer1.rows;
            check_block("cv.layer1", &cv.layer1, hc, 2 * v)?;
            check_block("cv.bias1", &cv.bias1, hc, 1)?;
            check_block("cv.layer2", &cv.layer2, hc, hc)?;
            check_block("cv.bias2", &cv.bias2, hc, 1)?;
            check_block("cv.output", &cv.output, 1, hc)?;
            check_block("cv.output_bias", &cv.output_bias, 1, 1)?;
        }
        if self.log_tau.is_some_and(|t| !t.is_finite()) {
            return Err(Error::Checkpoint("log_tau is not finite".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        ck.validate()?;
        Ok(ck)
    }
}
