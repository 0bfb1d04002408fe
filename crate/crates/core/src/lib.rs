//! Coverage-augmented rewards and low-variance policy-gradient estimation
//! for summarisation, at a scale where every estimator can be checked
//! against exact enumeration.
//!
//! The crate is organised bottom-up:
//!
//! - [`text_metrics`]: tokenisation, ROUGE-1/2/L and extractive fragment coverage.
//! - [`coverage_reward`]: the multi-document coverage reward and its
//!   combination with ROUGE-L.
//! - [`policy`]: a small autoregressive policy with hand-written gradients.
//! - [`gumbel`]: Gumbel-Softmax and conditional Gumbel-Softmax sampling.
//! - [`control_variate`]: the learned control variate network.
//! - [`estimators`]: REINFORCE, RELAX, the exact enumeration oracle and
//!   Monte-Carlo statistics.
//! - [`trainer`]: NLL pretraining, few-shot RL fine-tuning and evaluation.
//! - [`corpus`], [`bootstrap`], [`cli`]: data handling, significance
//!   testing and the command-line front end.

pub mod bootstrap;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod control_variate;
pub mod corpus;
pub mod coverage_reward;
pub mod error;
pub mod estimators;
pub mod gumbel;
pub mod optim;
pub mod params;
pub mod policy;
pub mod text_metrics;
pub mod trainer;
pub mod vocab;

pub use control_variate::{cv_backward, cv_forward, CvParams};
pub use coverage_reward::{combined_reward, DocumentSet, RewardBreakdown, RewardConfig};
pub use error::{Error, Result};
pub use estimators::{exact_gradient_oracle, reinforce_estimate, relax_estimate, Estimator, EstimatorKind, Task};
pub use gumbel::TemperatureParam;
pub use params::ParamStore;
pub use policy::{InputBag, PolicyParams, PolicyShape};
pub use text_metrics::{efc, lcs_length, rouge_f1, RougeVariant, TokenSeq};
pub use vocab::{TokenId, Vocab};
