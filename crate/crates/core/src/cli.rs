//! Command-line front end. [`run`] returns the process exit status:
//! 0 on success, 1 on usage or configuration errors, 2 on data errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bootstrap::{bootstrap_test_seeded, DEFAULT_RESAMPLES};
use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::control_variate::CvParams;
use crate::corpus::{load_corpus, load_document_sets, save_corpus, synthetic_corpus, CorpusRecord, SyntheticSpec};
use crate::coverage_reward::{DocumentSet, RewardConfig};
use crate::error::{Error, Result};
use crate::estimators::{
    estimator_statistics, exact_gradient_oracle, fit_control_variate, CoverageReward, Estimator, EstimatorStats,
    ExactGradient, Task,
};
use crate::gumbel::TemperatureParam;
use crate::policy::{DecodeSpec, Forcing, InputBag, PolicyParams, PolicyShape};
use crate::text_metrics::{tokenize, Origin, TokenSeq};
use crate::trainer::{evaluate, finetune_rl, metrics_csv, pretrain_nll, step_log_csv, Corpus, MetricsRow};
use crate::vocab::{TokenId, Vocab};

#[derive(Debug, Parser)]
#[command(name = "covrelax", version, about = "Coverage-reward RL fine-tuning and gradient-estimator experiments")]
pub struct Cli {
    /// TOML training configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if needed).
    #[arg(long, global = true, default_value = "covrelax-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// NLL pretraining; writes pretrain.ckpt.json, pretrain_log.csv, validation.csv.
    Pretrain,
    /// Few-shot RL fine-tuning; writes finetune.ckpt.json and steplog.csv.
    Finetune(CheckpointArg),
    /// Greedy evaluation; writes eval_metrics.csv, eval_positions.csv, eval_summary.csv.
    Eval(EvalArgs),
    /// Score prediction/reference files against document sets; writes metrics.csv.
    Score(ScoreArgs),
    /// Estimator bias/variance on a small synthetic task; writes estimate.csv.
    Estimate(EstimateArgs),
    /// Paired bootstrap test on two score files; writes bootstrap.csv.
    Bootstrap(BootstrapArgs),
    /// Synthetic multi-document corpus; writes train.jsonl and valid.jsonl.
    GenCorpus(GenCorpusArgs),
}

#[derive(Debug, Args)]
pub struct CheckpointArg {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Valid)]
    pub split: Split,
    #[arg(long, default_value = "system")]
    pub system: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Split {
    Train,
    Valid,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// One prediction per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// One reference per line.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// One `{"documents":[...]}` object per line.
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long, default_value = "system")]
    pub system: String,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EstimatorChoice {
    Reinforce,
    Relax,
    Both,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Compare against exact enumeration.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 3)]
    pub vocab: usize,
    /// Output length.
    #[arg(long = "len", default_value_t = 2)]
    pub length: usize,
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Both)]
    pub estimator: EstimatorChoice,
    /// Variance-minimisation steps for the control variate before measuring.
    #[arg(long, default_value_t = 2000)]
    pub cv_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// One score per line for system A.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub resamples: usize,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, default_value_t = 200)]
    pub records: usize,
    #[arg(long, default_value_t = 50)]
    pub valid_records: usize,
    #[arg(long, default_value_t = 2)]
    pub min_docs: usize,
    #[arg(long, default_value_t = 10)]
    pub max_docs: usize,
}

/// Parse `args` (including the program name) and run; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                2
            } else {
                1
            }
        }
    }
}

fn require<'a>(flag: &str, value: &'a Option<PathBuf>, command: &str) -> Result<&'a PathBuf> {
    value.as_ref().ok_or_else(|| Error::Config(format!("missing --{flag} (required by `{command}`)")))
}

fn load_config(cli: &Cli, command: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::load(require("config", &cli.config, command)?)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_split(path: &Option<PathBuf>, key: &str) -> Result<Vec<CorpusRecord>> {
    let path = path.as_ref().ok_or_else(|| Error::Config(format!("config key `{key}` is required")))?;
    let report = load_corpus(path)?;
    if report.is_partial() {
        eprintln!("warning: {}: {} line(s) skipped", path.display(), report.diagnostics.len());
        for d in &report.diagnostics {
            eprintln!("  {d}");
        }
    }
    Ok(report.records)
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(name), contents)?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pretrain => {
            let cfg = load_config(cli, "pretrain")?;
            let corpus = Corpus::from_records(
                &load_split(&cfg.train_path, "train_path")?,
                &load_split(&cfg.valid_path, "valid_path")?,
                &cfg,
            )?;
            let outcome = pretrain_nll(&cfg, &corpus)?;
            std::fs::create_dir_all(&cli.out)?;
            Checkpoint::new(corpus.vocab.clone(), outcome.policy).save(&cli.out.join("pretrain.ckpt.json"))?;
            write(&cli.out, "pretrain_log.csv", &step_log_csv(&outcome.logs))?;
            let mut val = String::from("step,mean_rouge,nll\n");
            for v in &outcome.validations {
                val.push_str(&format!("{},{},{}\n", v.step, v.mean_rouge, v.nll));
            }
            write(&cli.out, "validation.csv", &val)
        }
        Command::Finetune(args) => {
            let cfg = load_config(cli, "finetune")?;
            let ck = Checkpoint::load(require("checkpoint", &args.checkpoint, "finetune")?)?;
            let corpus = Corpus::with_vocab(
                ck.vocab.clone(),
                &load_split(&cfg.train_path, "train_path")?,
                &load_split(&cfg.valid_path, "valid_path")?,
                &cfg,
            )?;
            let outcome = finetune_rl(&cfg, &corpus, &ck.policy)?;
            let mut saved = Checkpoint::new(ck.vocab, outcome.policy);
            saved.control_variate = outcome.control_variate;
            saved.log_tau = outcome.log_tau;
            std::fs::create_dir_all(&cli.out)?;
            saved.save(&cli.out.join("finetune.ckpt.json"))?;
            write(&cli.out, "steplog.csv", &step_log_csv(&outcome.logs))
        }
        Command::Eval(args) => {
            let cfg = load_config(cli, "eval")?;
            let ck = Checkpoint::load(require("checkpoint", &args.checkpoint, "eval")?)?;
            let (path, key) = match args.split {
                Split::Train => (&cfg.train_path, "train_path"),
                Split::Valid => (&cfg.valid_path, "valid_path"),
            };
            let records = load_split(path, key)?;
            let corpus = Corpus::with_vocab(ck.vocab.clone(), &records, &records, &cfg)?;
            let report = evaluate(&ck.policy, &corpus.valid, &cfg, &args.system)?;
            write(&cli.out, "eval_metrics.csv", &metrics_csv(&report.rows))?;
            write(&cli.out, "eval_positions.csv", &report.positions_csv())?;
            write(&cli.out, "eval_summary.csv", &report.summary_csv())
        }
        Command::Score(args) => score(cli, args),
        Command::Estimate(args) => estimate(cli, args),
        Command::Bootstrap(args) => {
            let read = |p: &Path| -> Result<Vec<f64>> {
                std::fs::read_to_string(p)?
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .enumerate()
                    .map(|(i, l)| {
                        l.trim()
                            .parse()
                            .map_err(|_| Error::ShapeMismatch(format!("{} line {}: not a number", p.display(), i + 1)))
                    })
                    .collect()
            };
            let (a, b) = (read(&args.a)?, read(&args.b)?);
            let p = bootstrap_test_seeded(&a, &b, args.resamples, cli.seed.unwrap_or(0))?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!("p = {p}");
            write(
                &cli.out,
                "bootstrap.csv",
                &format!(
                    "n,mean_a,mean_b,difference,resamples,p_value\n{},{},{},{},{},{}\n",
                    a.len(),
                    mean(&a),
                    mean(&b),
                    mean(&a) - mean(&b),
                    args.resamples,
                    p
                ),
            )
        }
        Command::GenCorpus(args) => {
            let seed = cli.seed.unwrap_or(0);
            let spec = SyntheticSpec {
                records: args.records + args.valid_records,
                min_docs: args.min_docs,
                max_docs: args.max_docs,
                seed,
                ..Default::default()
            };
            let all = synthetic_corpus(&spec)?;
            std::fs::create_dir_all(&cli.out)?;
            save_corpus(&cli.out.join("train.jsonl"), &all[..args.records])?;
            save_corpus(&cli.out.join("valid.jsonl"), &all[args.records..])
        }
    }
}

fn score(cli: &Cli, args: &ScoreArgs) -> Result<()> {
    let read_lines =
        |p: &Path| -> Result<Vec<String>> { Ok(std::fs::read_to_string(p)?.lines().map(str::to_string).collect()) };
    let preds = read_lines(&args.pred)?;
    let refs = read_lines(&args.reference)?;
    let docs = load_document_sets(&args.docs).map_err(|e| match e {
        Error::Config(m) => Error::ShapeMismatch(m),
        other => other,
    })?;
    if preds.len() != refs.len() {
        return Err(Error::LengthMismatch { left: preds.len(), right: refs.len() });
    }
    if preds.len() != docs.len() {
        return Err(Error::LengthMismatch { left: preds.len(), right: docs.len() });
    }
    let cfg = RewardConfig::with_beta(args.beta);
    cfg.validate()?;
    let vocab = Vocab::build(
        preds.iter().chain(&refs).map(String::as_str).chain(docs.iter().flatten().map(String::as_str)),
        usize::MAX,
    );
    let mut rows: Vec<MetricsRow> = Vec::with_capacity(preds.len());
    for (i, ((p, r), d)) in preds.iter().zip(&refs).zip(&docs).enumerate() {
        let documents: Vec<TokenSeq> =
            d.iter().map(|t| tokenize(t, &vocab, Origin::Document)).filter(|t| !t.is_empty()).collect();
        let set = DocumentSet::new(documents, None)?;
        let pred = tokenize(p, &vocab, Origin::Prediction);
        let reference = tokenize(r, &vocab, Origin::Reference);
        rows.push(MetricsRow::compute(&args.system, &(i + 1).to_string(), &pred, &reference, &set, &cfg)?);
    }
    write(&cli.out, "metrics.csv", &metrics_csv(&rows))
}

/// The small task used by `estimate`: documents that each omit one token,
/// so no output has perfectly uniform coverage, and the reference
/// `0, 1, 2, ...` cycled to the output length.
pub struct ToyTask {
    pub policy: PolicyParams,
    pub docs: DocumentSet,
    pub reference: Vec<TokenId>,
    pub bag: InputBag,
}

impl ToyTask {
    pub fn new(vocab: usize, length: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        if vocab < 2 || length == 0 {
            return Err(Error::Config("the toy task needs vocab >= 2 and len >= 1".into()));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let policy = PolicyParams::random(PolicyShape { vocab, embed: 2, hidden: 3 }, 0.5, &mut rng);
        let documents = (0..vocab.min(3))
            .map(|skip| {
                let d: Vec<TokenId> = (0..vocab as TokenId).filter(|&t| t as usize != skip).collect();
                TokenSeq::new(d, Origin::Document)
            })
            .collect();
        let docs = DocumentSet::new(documents, None)?;
        let reference: Vec<TokenId> = (0..length).map(|t| (t % vocab) as TokenId).collect();
        let bag = InputBag::from_tokens(&docs.concatenated(), vocab)?;
        Ok(ToyTask { policy, docs, reference, bag })
    }

    pub fn decode(&self) -> DecodeSpec {
        DecodeSpec { start: 0, eos: None, max_len: self.reference.len() }
    }
}

fn estimate(cli: &Cli, args: &EstimateArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let toy = ToyTask::new(args.vocab, args.length, seed)?;
    let reward = CoverageReward { reference: &toy.reference, docs: &toy.docs, cfg: RewardConfig::with_beta(args.beta) };
    let task = Task {
        bag: &toy.bag,
        reference: &toy.reference,
        reward: &reward,
        decode: toy.decode(),
        forcing: Forcing::Student,
    };
    let oracle: Option<ExactGradient> =
        if args.oracle { Some(exact_gradient_oracle(&toy.policy, &task)?) } else { None };
    let mut stats: Vec<EstimatorStats> = Vec::new();
    if matches!(args.estimator, EstimatorChoice::Reinforce | EstimatorChoice::Both) {
        stats.push(estimator_statistics(
            Estimator::Reinforce,
            &toy.policy,
            &task,
            args.samples,
            seed.wrapping_add(1 << 40),
            oracle.as_ref(),
        )?);
    }
    if matches!(args.estimator, EstimatorChoice::Relax | EstimatorChoice::Both) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed ^ 0xc0);
        let mut cv = CvParams::random(args.vocab, crate::control_variate::DEFAULT_HIDDEN, 0.5, &mut rng);
        let mut temp = TemperatureParam::default();
        fit_control_variate(&toy.policy, &mut cv, &mut temp, &task, args.cv_steps, 1e-2, seed.wrapping_add(1 << 41))?;
        stats.push(estimator_statistics(
            Estimator::Relax { cv: &cv, log_tau: temp.log_tau },
            &toy.policy,
            &task,
            args.samples,
            seed.wrapping_add(1 << 42),
            oracle.as_ref(),
        )?);
    }
    let mut csv = String::from("estimator,coordinate,oracle,mean,variance,bias\n");
    for s in &stats {
        let bias = s.bias();
        for i in 0..s.mean.len() {
            let o = s.oracle.as_ref().map(|o| o[i].to_string()).unwrap_or_default();
            let b = bias.as_ref().map(|b| b[i].to_string()).unwrap_or_default();
            csv.push_str(&format!("{},{},{},{},{},{}\n", s.kind, s.labels[i], o, s.mean[i], s.variance[i], b));
        }
    }
    write(&cli.out, "estimate.csv", &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["covrelax"]), 1);
        assert_eq!(run(["covrelax", "frobnicate"]), 1);
        assert_eq!(run(["covrelax", "--help"]), 0);
    }

    #[test]
    fn missing_config_names_the_flag() {
        let cli = Cli::try_parse_from(["covrelax", "pretrain"]).unwrap();
        let err = dispatch(&cli).unwrap_err();
        assert!(err.to_string().contains("--config"), "{err}");
        assert!(!err.is_data_error());
    }

    #[test]
    fn oversized_oracle_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let code = run(["covrelax", "estimate", "--oracle", "--vocab", "12", "--len", "6", "--out", out]);
        assert_eq!(code, 2);
    }

    #[test]
    fn toy_task_has_nonuniform_coverage() {
        let toy = ToyTask::new(3, 2, 0).unwrap();
        assert_eq!(toy.docs.len(), 3);
        assert_eq!(toy.reference, vec![0, 1]);
    }
}
