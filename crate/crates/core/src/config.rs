//! Training configuration, read from a flat TOML file whose keys mirror
//! [`TrainConfig`] one-to-one.
//!
//! ```toml
//! # full-scale values: 3e-5 / 3e-6 / 1e-2
//! lr_pretrain = 3e-2
//! lr_finetune = 3e-3
//! lr_relax = 1e-2
//! few_shot_steps = 1000
//! estimator = "relax"
//! train_path = "data/train.jsonl"
//! valid_path = "data/valid.jsonl"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::policy::Forcing;

/// Learning rates for a full-size model.
pub const FULL_SCALE_LR_PRETRAIN: f64 = 3e-5;
pub const FULL_SCALE_LR_FINETUNE: f64 = 3e-6;
pub const FULL_SCALE_LR_RELAX: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_pretrain: f64,
    pub lr_finetune: f64,
    /// Control variate and `log τ`.
    pub lr_relax: f64,
    pub pretrain_epochs: usize,
    pub few_shot_steps: usize,
    pub beta: f64,
    pub max_output_len: usize,
    pub max_input_len: usize,
    pub estimator: EstimatorKind,
    pub forcing: Forcing,
    pub log_tau_init: f64,
    pub cv_hidden: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub init_scale: f64,
    /// Pretraining steps between validation passes.
    pub validate_every: usize,
    pub seed: u64,
    pub train_path: Option<PathBuf>,
    pub valid_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_pretrain: FULL_SCALE_LR_PRETRAIN * 1000.0,
            lr_finetune: FULL_SCALE_LR_FINETUNE * 1000.0,
            lr_relax: FULL_SCALE_LR_RELAX,
            pretrain_epochs: 5,
            few_shot_steps: 1000,
            beta: 1.0,
            max_output_len: 12,
            max_input_len: 256,
            estimator: EstimatorKind::Relax,
            forcing: Forcing::Student,
            log_tau_init: 0.5,
            cv_hidden: 32,
            vocab_size: 64,
            embed_dim: 16,
            hidden_dim: 32,
            init_scale: 0.5,
            validate_every: 50,
            seed: 0,
            train_path: None,
            valid_path: None,
        }
    }
}

impl TrainConfig {
    /// Swaps in the full-scale learning rates.
    pub fn with_full_scale_learning_rates(mut self) -> Self {
        self.lr_pretrain = FULL_SCALE_LR_PRETRAIN;
        self.lr_finetune = FULL_SCALE_LR_FINETUNE;
        self.lr_relax = FULL_SCALE_LR_RELAX;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lr) in
            [("lr_pretrain", self.lr_pretrain), ("lr_finetune", self.lr_finetune), ("lr_relax", self.lr_relax)]
        {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.few_shot_steps == 0 {
            return Err(Error::Config("few_shot_steps must be at least 1".into()));
        }
        if self.max_output_len == 0 || self.max_input_len == 0 {
            return Err(Error::Config("max_output_len and max_input_len must be at least 1".into()));
        }
        if self.validate_every == 0 {
            return Err(Error::Config("validate_every must be at least 1".into()));
        }
        if self.vocab_size <= crate::vocab::RESERVED.len() {
            return Err(Error::Config(format!("vocab_size must exceed {}", crate::vocab::RESERVED.len())));
        }
        if !self.beta.is_finite() || !self.log_tau_init.is_finite() {
            return Err(Error::Config("beta and log_tau_init must be finite".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative corpus paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.train_path, &mut cfg.valid_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
