//! Two-stage training: teacher-forced NLL pretraining with validation-based
//! checkpoint selection, then few-shot RL fine-tuning with either
//! estimator. Also greedy evaluation with per-document-position analysis.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::control_variate::CvParams;
use crate::corpus::{prepare_record, CorpusRecord, PreparedRecord};
use crate::coverage_reward::{combined_reward, coverage_vector, mean, sample_std, RewardBreakdown, RewardConfig};
use crate::error::{Error, Result};
use crate::estimators::{reinforce_estimate, relax_estimate, CoverageReward, EstimatorKind, Task};
use crate::gumbel::TemperatureParam;
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::ParamStore;
use crate::policy::{
    accumulate_log_prob_grad, contexts_for, greedy_decode, log_prob_with_contexts, DecodeSpec, Forcing, PolicyParams,
    PolicyShape,
};
use crate::text_metrics::{efc, rouge_f1, RougeVariant};
use crate::vocab::{TokenId, Vocab, BOS, END_SEP, EOS, PAD};

/// Tokens a summary never contains.
pub const BANNED_OUTPUTS: [TokenId; 3] = [PAD, BOS, END_SEP];

/// Vocabulary plus tokenised train and validation splits.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocab: Vocab,
    pub train: Vec<PreparedRecord>,
    pub valid: Vec<PreparedRecord>,
}

impl Corpus {
    /// The vocabulary is built from the training split only.
    pub fn from_records(train: &[CorpusRecord], valid: &[CorpusRecord], cfg: &TrainConfig) -> Result<Self> {
        let vocab = Vocab::build(
            train
                .iter()
                .flat_map(|r| r.documents.iter().map(String::as_str).chain(std::iter::once(r.summary.as_str()))),
            cfg.vocab_size,
        );
        Self::with_vocab(vocab, train, valid, cfg)
    }

    pub fn with_vocab(vocab: Vocab, train: &[CorpusRecord], valid: &[CorpusRecord], cfg: &TrainConfig) -> Result<Self> {
        let prep = |rs: &[CorpusRecord]| -> Result<Vec<PreparedRecord>> {
            rs.iter().map(|r| prepare_record(r, &vocab, cfg.max_input_len)).collect()
        };
        let corpus = Corpus { train: prep(train)?, valid: prep(valid)?, vocab };
        if corpus.train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        if corpus.valid.is_empty() {
            return Err(Error::EmptySplit("validation"));
        }
        Ok(corpus)
    }
}

pub fn decode_spec(cfg: &TrainConfig) -> DecodeSpec {
    DecodeSpec { start: BOS, eos: Some(EOS), max_len: cfg.max_output_len }
}

/// Reference tokens (truncated to leave room) followed by EOS.
pub fn nll_target(reference: &[TokenId], max_output_len: usize) -> Vec<TokenId> {
    let keep = reference.len().min(max_output_len.saturating_sub(1));
    let mut y = reference[..keep].to_vec();
    y.push(EOS);
    y
}

/// Teacher-forced NLL of a record's reference.
pub fn reference_nll(policy: &PolicyParams, rec: &PreparedRecord, max_output_len: usize) -> Result<f64> {
    let y = nll_target(&rec.reference, max_output_len);
    let ctx = contexts_for(&y, BOS, Forcing::Student, &[]);
    Ok(-log_prob_with_contexts(policy, &y, &ctx, &rec.bag)?)
}

pub fn initial_policy(cfg: &TrainConfig, vocab_len: usize) -> Result<PolicyParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = PolicyShape { vocab: vocab_len, embed: cfg.embed_dim, hidden: cfg.hidden_dim };
    PolicyParams::random(shape, cfg.init_scale, &mut rng).with_banned(&BANNED_OUTPUTS)
}

/// One optimizer step. Optional fields are blank in the CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub reward: Option<f64>,
    pub rouge_l: Option<f64>,
    pub r_cov_hat: Option<f64>,
    pub cov_mean: Option<f64>,
    pub cov_std: Option<f64>,
    pub log_tau: Option<f64>,
    pub nll: Option<f64>,
}

pub const STEPLOG_HEADER: &str = "step,reward,rouge_l,r_cov_hat,cov_mean,cov_std,log_tau,nll";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn step_log_csv(rows: &[StepLog]) -> String {
    let mut out = String::from(STEPLOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            opt(r.reward),
            opt(r.rouge_l),
            opt(r.r_cov_hat),
            opt(r.cov_mean),
            opt(r.cov_std),
            opt(r.log_tau),
            opt(r.nll)
        );
    }
    out
}

pub fn write_step_log(path: &Path, rows: &[StepLog]) -> Result<()> {
    std::fs::write(path, step_log_csv(rows))?;
    Ok(())
}

/// Parse a StepLog CSV written by [`step_log_csv`].
pub fn read_step_log(text: &str) -> Result<Vec<StepLog>> {
    let mut lines = text.lines();
    if lines.next() != Some(STEPLOG_HEADER) {
        return Err(Error::Config("not a step log (header mismatch)".into()));
    }
    let field = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Config(format!("bad number `{s}` in step log")))
        }
    };
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Config(format!("step log row has {} fields", f.len())));
            }
            Ok(StepLog {
                step: f[0].parse().map_err(|_| Error::Config(format!("bad step `{}`", f[0])))?,
                reward: field(f[1])?,
                rouge_l: field(f[2])?,
                r_cov_hat: field(f[3])?,
                cov_mean: field(f[4])?,
                cov_std: field(f[5])?,
                log_tau: field(f[6])?,
                nll: field(f[7])?,
            })
        })
        .collect()
}

/// Mean of ROUGE-1/2/L F1.
pub fn average_rouge(pred: &[TokenId], reference: &[TokenId]) -> f64 {
    (rouge_f1(pred, reference, RougeVariant::R1)
        + rouge_f1(pred, reference, RougeVariant::R2)
        + rouge_f1(pred, reference, RougeVariant::RL))
        / 3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub step: usize,
    pub mean_rouge: f64,
    pub nll: f64,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    /// Parameters with the best validation ROUGE.
    pub policy: PolicyParams,
    pub final_policy: PolicyParams,
    pub logs: Vec<StepLog>,
    pub validations: Vec<ValidationPoint>,
    pub best: Option<ValidationPoint>,
}

fn strip_eos(mut y: Vec<TokenId>) -> Vec<TokenId> {
    if let Some(end) = y.iter().position(|&t| t == EOS) {
        y.truncate(end);
    }
    y
}

pub fn validate(
    policy: &PolicyParams,
    records: &[PreparedRecord],
    cfg: &TrainConfig,
    step: usize,
) -> Result<ValidationPoint> {
    let decode = decode_spec(cfg);
    let scores: Vec<(f64, f64)> = records
        .par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let pred = strip_eos(greedy_decode(policy, &r.bag, decode)?);
            Ok((average_rouge(&pred, &r.reference), reference_nll(policy, r, cfg.max_output_len)?))
        })
        .collect::<Result<_>>()?;
    let n = scores.len() as f64;
    Ok(ValidationPoint {
        step,
        mean_rouge: scores.iter().map(|s| s.0).sum::<f64>() / n,
        nll: scores.iter().map(|s| s.1).sum::<f64>() / n,
    })
}

/// Teacher-forced NLL training for `pretrain_epochs` passes, validating
/// every `validate_every` steps and at the end; returns the best checkpoint.
pub fn pretrain_nll(cfg: &TrainConfig, corpus: &Corpus) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let mut policy = initial_policy(cfg, corpus.vocab.len())?;
    if cfg.pretrain_epochs == 0 {
        return Ok(PretrainOutcome {
            final_policy: policy.clone(),
            policy,
            logs: Vec::new(),
            validations: Vec::new(),
            best: None,
        });
    }
    let adam = AdamConfig::with_lr(cfg.lr_pretrain);
    let mut state = AdamState::new(policy.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0001);
    let mut logs = Vec::new();
    let mut validations = Vec::new();
    let mut best: Option<(ValidationPoint, PolicyParams)> = None;
    let mut consider = |point: ValidationPoint, policy: &PolicyParams, validations: &mut Vec<ValidationPoint>| {
        if best.as_ref().is_none_or(|(b, _)| point.mean_rouge > b.mean_rouge) {
            best = Some((point.clone(), policy.clone()));
        }
        validations.push(point);
    };
    let mut step = 0;
    let mut order: Vec<usize> = (0..corpus.train.len()).collect();
    for _ in 0..cfg.pretrain_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let rec = &corpus.train[i];
            let y = nll_target(&rec.reference, cfg.max_output_len);
            let ctx = contexts_for(&y, BOS, Forcing::Student, &[]);
            let mut grad = policy.zeros_like();
            let lp = accumulate_log_prob_grad(&policy, &y, &ctx, &rec.bag, -1.0, &mut grad)?;
            adam_step(&mut policy, &grad, &mut state, &adam)?;
            logs.push(StepLog { step, nll: Some(-lp), ..Default::default() });
            step += 1;
            if step % cfg.validate_every == 0 {
                consider(validate(&policy, &corpus.valid, cfg, step)?, &policy, &mut validations);
            }
        }
    }
    if step % cfg.validate_every != 0 {
        consider(validate(&policy, &corpus.valid, cfg, step)?, &policy, &mut validations);
    }
    let (best_point, best_policy) = best.expect("at least one validation pass");
    Ok(PretrainOutcome { policy: best_policy, final_policy: policy, logs, validations, best: Some(best_point) })
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub policy: PolicyParams,
    /// Present for RELAX runs.
    pub control_variate: Option<CvParams>,
    pub log_tau: Option<f64>,
    pub logs: Vec<StepLog>,
}

/// `few_shot_steps` single-sample RL updates, cycling through shuffled
/// training records.
pub fn finetune_rl(cfg: &TrainConfig, corpus: &Corpus, pretrained: &PolicyParams) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if pretrained.vocab_size() != corpus.vocab.len() {
        return Err(Error::ShapeMismatch(format!(
            "policy vocabulary {} vs corpus vocabulary {}",
            pretrained.vocab_size(),
            corpus.vocab.len()
        )));
    }
    let mut policy = pretrained.clone();
    let vocab = policy.vocab_size();
    let policy_adam = AdamConfig::with_lr(cfg.lr_finetune);
    let relax_adam = AdamConfig::with_lr(cfg.lr_relax);
    let mut policy_state = AdamState::new(policy.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0002);
    let relax = cfg.estimator == EstimatorKind::Relax;
    let mut cv = relax.then(|| CvParams::random(vocab, cfg.cv_hidden, 0.5, &mut rng));
    let mut cv_state = cv.as_ref().map(|c| AdamState::new(c.num_params()));
    let mut temperature = TemperatureParam::new(cfg.log_tau_init);
    let mut tau_state = AdamState::new(1);
    let reward_cfg = RewardConfig::with_beta(cfg.beta);
    reward_cfg.validate()?;
    let decode = decode_spec(cfg);

    let mut order: Vec<usize> = (0..corpus.train.len()).collect();
    let mut logs = Vec::with_capacity(cfg.few_shot_steps);
    for step in 0..cfg.few_shot_steps {
        if step % order.len() == 0 {
            order.shuffle(&mut rng);
        }
        let rec = &corpus.train[order[step % order.len()]];
        let reward = CoverageReward { reference: &rec.reference, docs: &rec.docs, cfg: reward_cfg };
        let task = Task { bag: &rec.bag, reference: &rec.reference, reward: &reward, decode, forcing: cfg.forcing };
        let nll = reference_nll(&policy, rec, cfg.max_output_len)?;
        let mut step_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let est = match &cv {
            Some(c) => relax_estimate(&policy, c, temperature.log_tau, &task, true, &mut step_rng)?,
            None => reinforce_estimate(&policy, &task, &mut step_rng)?,
        };
        let content = strip_eos(est.tokens.clone());
        let coverage = coverage_vector(&content, &rec.docs);
        logs.push(StepLog {
            step,
            reward: Some(est.reward.combined),
            rouge_l: Some(est.reward.rouge_l_f1),
            r_cov_hat: Some(est.reward.r_cov_hat),
            cov_mean: Some(mean(&coverage.values)),
            cov_std: Some(sample_std(&coverage.values)),
            log_tau: relax.then_some(temperature.log_tau),
            nll: Some(nll),
        });
        if est.grad_theta.is_finite() {
            adam_step(&mut policy, &est.grad_theta, &mut policy_state, &policy_adam)?;
        } else {
            log::warn!("step {step}: non-finite policy gradient skipped");
        }
        if let (Some(c), Some(st), Some(g)) = (cv.as_mut(), cv_state.as_mut(), est.grad_phi.as_ref()) {
            if g.is_finite() {
                adam_step(c, g, st, &relax_adam)?;
            }
        }
        if let Some(g) = est.grad_log_tau.filter(|g| g.is_finite()) {
            adam_step(&mut temperature, &TemperatureParam::new(g), &mut tau_state, &relax_adam)?;
        }
    }
    Ok(FinetuneOutcome { policy, control_variate: cv, log_tau: relax.then_some(temperature.log_tau), logs })
}

/// Per (system, record) scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub system: String,
    pub record_id: String,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    /// EFC of the prediction against each document, in document order.
    pub efc: Vec<f64>,
    pub reward: RewardBreakdown,
}

pub const METRICS_HEADER: &str = "system,record_id,rouge1,rouge2,rouge_l,combined_reward,efc";

impl MetricsRow {
    pub fn compute(
        system: &str,
        record_id: &str,
        pred: &[TokenId],
        reference: &[TokenId],
        docs: &crate::coverage_reward::DocumentSet,
        cfg: &RewardConfig,
    ) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        Ok(MetricsRow {
            system: system.to_string(),
            record_id: record_id.to_string(),
            rouge1: rouge_f1(pred, reference, RougeVariant::R1),
            rouge2: rouge_f1(pred, reference, RougeVariant::R2),
            rouge_l: rouge_f1(pred, reference, RougeVariant::RL),
            efc: docs.documents().iter().map(|d| efc(pred, d).score).collect(),
            reward: combined_reward(pred, reference, docs, cfg)?,
        })
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// EFC values are joined with `;` in document order.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let efc: Vec<String> = r.efc.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&r.system),
            csv_field(&r.record_id),
            r.rouge1,
            r.rouge2,
            r.rouge_l,
            r.reward.combined,
            efc.join(";")
        );
    }
    out
}

/// Greedy-decoding evaluation of one split.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    /// Mean EFC at each document position, over records that have it.
    pub position_efc: Vec<f64>,
    /// Mean prediction-vs-document ROUGE (R1/R2/L average) per position.
    pub position_rouge: Vec<f64>,
    pub position_counts: Vec<usize>,
    /// Mean over records of the per-record mean EFC across documents.
    pub mean_document_efc: f64,
    pub rows: Vec<MetricsRow>,
    pub predictions: Vec<Vec<TokenId>>,
}

impl EvalReport {
    pub fn positions_csv(&self) -> String {
        let mut out = String::from("position,count,mean_efc,mean_rouge\n");
        for (i, ((e, r), c)) in
            self.position_efc.iter().zip(&self.position_rouge).zip(&self.position_counts).enumerate()
        {
            let _ = writeln!(out, "{i},{c},{e},{r}");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "rouge1,rouge2,rouge_l,mean_document_efc\n{},{},{},{}\n",
            self.rouge1, self.rouge2, self.rouge_l, self.mean_document_efc
        )
    }
}

pub fn evaluate(
    policy: &PolicyParams,
    records: &[PreparedRecord],
    cfg: &TrainConfig,
    system: &str,
) -> Result<EvalReport> {
    let decode = decode_spec(cfg);
    let reward_cfg = RewardConfig::with_beta(cfg.beta);
    let per: Vec<(MetricsRow, Vec<f64>, Vec<TokenId>)> = records
        .par_iter()
        .map(|r| {
            let pred = strip_eos(greedy_decode(policy, &r.bag, decode)?);
            let row = MetricsRow::compute(system, &r.id, &pred, &r.reference, &r.docs, &reward_cfg)?;
            let doc_rouge = r.docs.documents().iter().map(|d| average_rouge(&pred, d)).collect();
            Ok((row, doc_rouge, pred))
        })
        .collect::<Result<_>>()?;
    let positions = per.iter().map(|(row, _, _)| row.efc.len()).max().unwrap_or(0);
    let mut efc_sum = vec![0.0; positions];
    let mut rouge_sum = vec![0.0; positions];
    let mut counts = vec![0usize; positions];
    for (row, doc_rouge, _) in &per {
        for (i, (e, r)) in row.efc.iter().zip(doc_rouge).enumerate() {
            efc_sum[i] += e;
            rouge_sum[i] += r;
            counts[i] += 1;
        }
    }
    let n = per.len().max(1) as f64;
    let avg = |f: fn(&MetricsRow) -> f64| per.iter().map(|(row, _, _)| f(row)).sum::<f64>() / n;
    let divide = |sums: Vec<f64>| -> Vec<f64> { sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect() };
    Ok(EvalReport {
        rouge1: avg(|r| r.rouge1),
        rouge2: avg(|r| r.rouge2),
        rouge_l: avg(|r| r.rouge_l),
        mean_document_efc: avg(|r| mean(&r.efc)),
        position_efc: divide(efc_sum),
        position_rouge: divide(rouge_sum),
        position_counts: counts,
        predictions: per.iter().map(|(_, _, p)| p.clone()).collect(),
        rows: per.into_iter().map(|(row, _, _)| row).collect(),
    })
}

/// Trailing moving average with the given window (shorter at the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthetic_corpus, SyntheticSpec};

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            pretrain_epochs: 1,
            few_shot_steps: 20,
            validate_every: 10,
            embed_dim: 4,
            hidden_dim: 8,
            cv_hidden: 8,
            ..Default::default()
        }
    }

    fn corpus(cfg: &TrainConfig) -> Corpus {
        let recs = synthetic_corpus(&SyntheticSpec { records: 24, seed: 1, ..Default::default() }).unwrap();
        Corpus::from_records(&recs[..20], &recs[20..], cfg).unwrap()
    }

    #[test]
    fn step_log_round_trips() {
        let rows = vec![
            StepLog { step: 0, nll: Some(1.5), ..Default::default() },
            StepLog {
                step: 1,
                reward: Some(-0.25),
                rouge_l: Some(0.5),
                r_cov_hat: Some(1e-17),
                cov_mean: Some(0.1),
                cov_std: Some(0.0),
                log_tau: Some(0.5),
                nll: Some(2.0),
            },
        ];
        let csv = step_log_csv(&rows);
        assert!(csv.starts_with("step,reward,rouge_l,r_cov_hat,cov_mean,cov_std,log_tau,nll\n0,,,,,,,1.5\n"));
        assert_eq!(read_step_log(&csv).unwrap(), rows);
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let cfg = TrainConfig { pretrain_epochs: 0, ..small_cfg() };
        let c = corpus(&cfg);
        let out = pretrain_nll(&cfg, &c).unwrap();
        assert_eq!(out.policy, initial_policy(&cfg, c.vocab.len()).unwrap());
        assert!(out.logs.is_empty());
    }

    #[test]
    fn best_checkpoint_is_at_least_final() {
        let cfg = small_cfg();
        let c = corpus(&cfg);
        let out = pretrain_nll(&cfg, &c).unwrap();
        let best = out.best.unwrap();
        assert!(best.mean_rouge >= out.validations.last().unwrap().mean_rouge);
        assert_eq!(validate(&out.policy, &c.valid, &cfg, 0).unwrap().mean_rouge, best.mean_rouge);
        assert_eq!(out.logs.len(), 20);
    }

    #[test]
    fn empty_splits_are_rejected() {
        let cfg = small_cfg();
        let recs = synthetic_corpus(&SyntheticSpec { records: 3, ..Default::default() }).unwrap();
        assert!(matches!(Corpus::from_records(&[], &recs, &cfg), Err(Error::EmptySplit("train"))));
        assert!(matches!(Corpus::from_records(&recs, &[], &cfg), Err(Error::EmptySplit("validation"))));
    }

    #[test]
    fn finetune_logs_every_step_and_is_reproducible() {
        let cfg = small_cfg();
        let c = corpus(&cfg);
        let init = initial_policy(&cfg, c.vocab.len()).unwrap();
        let a = finetune_rl(&cfg, &c, &init).unwrap();
        let b = finetune_rl(&cfg, &c, &init).unwrap();
        assert_eq!(a.logs.len(), 20);
        assert!(a.logs.iter().enumerate().all(|(i, l)| l.step == i));
        assert_eq!(step_log_csv(&a.logs), step_log_csv(&b.logs));
        assert!(a.logs.iter().all(|l| l.log_tau.is_some()));
        let r = finetune_rl(&TrainConfig { estimator: EstimatorKind::Reinforce, ..cfg }, &c, &init).unwrap();
        assert!(r.control_variate.is_none() && r.logs.iter().all(|l| l.log_tau.is_none()));
    }

    #[test]
    fn zero_reward_reinforce_leaves_policy_unchanged() {
        // beta = 0 leaves ROUGE-L alone, which is zero once no reference word can be emitted
        let cfg = TrainConfig { estimator: EstimatorKind::Reinforce, beta: 0.0, ..small_cfg() };
        let c = corpus(&cfg);
        let mut init = initial_policy(&cfg, c.vocab.len()).unwrap();
        let keep: Vec<TokenId> = (0..c.vocab.len() as TokenId)
            .filter(|t| *t == EOS || !c.train.iter().any(|r| r.reference.contains(t)))
            .collect();
        let banned: Vec<TokenId> = (0..c.vocab.len() as TokenId).filter(|t| !keep.contains(t)).collect();
        init = init.with_banned(&banned).unwrap();
        let out = finetune_rl(&cfg, &c, &init).unwrap();
        assert!(out.logs.iter().all(|l| l.reward == Some(0.0)));
        assert_eq!(out.policy, init);
    }

    #[test]
    fn perfect_policy_scores_one() {
        let cfg = small_cfg();
        let c = corpus(&cfg);
        let report = evaluate(&initial_policy(&cfg, c.vocab.len()).unwrap(), &c.valid, &cfg, "init").unwrap();
        assert_eq!(report.rows.len(), c.valid.len());
        let max_docs = c.valid.iter().map(|r| r.docs.len()).max().unwrap();
        assert_eq!(report.position_efc.len(), max_docs);
        assert_eq!(report.position_counts[0], c.valid.len());
        let row = MetricsRow::compute(
            "x",
            "r",
            &c.valid[0].reference,
            &c.valid[0].reference,
            &c.valid[0].docs,
            &RewardConfig::default(),
        )
        .unwrap();
        assert_eq!((row.rouge1, row.rouge2, row.rouge_l), (1.0, 1.0, 1.0));
        assert_eq!(row.reward.r_cov_hat, 0.0);
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[2.0, 4.0, 6.0, 8.0], 2), vec![2.0, 3.0, 5.0, 7.0]);
    }
}
