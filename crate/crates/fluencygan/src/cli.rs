//! Command-line pipeline: corrupt, pretrain, train, infer, eval, gradcheck.
//!
//! Runs are driven by a flat `key=value` config file (unknown keys are
//! rejected; `#` starts a comment); individual flags and repeated
//! `--set key=value` arguments override file values, which keeps lambda/tau
//! sweeps to a one-flag change. Exit codes: 0 success, 1 gradcheck failure,
//! 2 usage error, 3 data error, 4 numeric abort, 5 checkpoint format error.

use std::path::{Path, PathBuf};

use crate::discriminator::{DiscriminatorDims, DiscriminatorParams};
use crate::eval::{evaluate_corpus, load_pairs, EvalError};
use crate::generator::{GeneratorKind, GeneratorModel};
use crate::lstm::LstmDims;
use crate::text::batch::{load_corpus, save_corpus};
use crate::text::corrupt::{corrupt, parse_rules};
use crate::text::{encode, tokenize, TextError, Vocabulary};
use crate::train::checkpoint::{self, CheckpointError};
use crate::train::{PairedCorpus, Trainer, TrainError, TrainingConfig};
use crate::transformer::TransformerDims;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_CHECKPOINT: i32 = 5;

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
    CheckpointFormat(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::CheckpointFormat(_) => EXIT_CHECKPOINT,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Data(m)
            | CliError::Numeric(m)
            | CliError::CheckpointFormat(m) => m,
        }
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        match e {
            TextError::Invalid(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NumericAbort { .. } => CliError::Numeric(e.to_string()),
            TrainError::Checkpoint(c) => c.into(),
            TrainError::Config(m) => CliError::Usage(m),
            TrainError::Text(t) => t.into(),
            TrainError::Tensor(t) => CliError::Data(t.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Format(m) => CliError::CheckpointFormat(m),
            CheckpointError::Io { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Text(t) => t.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Everything a run needs: generator choice, paths, model dimensions, and
/// the full [`TrainingConfig`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub generator: GeneratorKind,
    pub fluent: PathBuf,
    pub awkward: PathBuf,
    pub vocab: PathBuf,
    pub checkpoint: PathBuf,
    pub log: Option<PathBuf>,
    pub max_len: usize,
    pub vocab_max: usize,
    pub lstm_embed: usize,
    pub lstm_hidden: usize,
    pub tf_model: usize,
    pub tf_heads: usize,
    pub tf_ff: usize,
    pub tf_enc_layers: usize,
    pub tf_dec_layers: usize,
    pub tf_dropout: f32,
    pub disc_embed: usize,
    pub disc_dense: usize,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generator: GeneratorKind::Lstm,
            fluent: PathBuf::from("fluent.txt"),
            awkward: PathBuf::from("awkward.txt"),
            vocab: PathBuf::from("vocab.txt"),
            checkpoint: PathBuf::from("model.flgn"),
            log: None,
            max_len: 32,
            vocab_max: 2000,
            lstm_embed: 64,
            lstm_hidden: 128,
            tf_model: 64,
            tf_heads: 4,
            tf_ff: 256,
            tf_enc_layers: 2,
            tf_dec_layers: 2,
            tf_dropout: 0.1,
            disc_embed: 64,
            disc_dense: 128,
            training: TrainingConfig::default(),
        }
    }
}

impl RunConfig {
    /// Apply one `key=value` assignment; unknown keys are usage errors.
    pub(crate) fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                CliError::Usage(format!("bad value `{value}` for config key `{key}`"))
            })
        }
        match key {
            "generator" => {
                self.generator = GeneratorKind::parse(value).ok_or_else(|| {
                    CliError::Usage(format!(
                        "generator must be `lstm` or `transformer`, got `{value}`"
                    ))
                })?;
            }
            "fluent" => self.fluent = PathBuf::from(value),
            "awkward" => self.awkward = PathBuf::from(value),
            "vocab" => self.vocab = PathBuf::from(value),
            "checkpoint" => self.checkpoint = PathBuf::from(value),
            "log" => self.log = Some(PathBuf::from(value)),
            "max_len" => self.max_len = num(key, value)?,
            "vocab_max" => self.vocab_max = num(key, value)?,
            "lstm_embed" => self.lstm_embed = num(key, value)?,
            "lstm_hidden" => self.lstm_hidden = num(key, value)?,
            "tf_model" => self.tf_model = num(key, value)?,
            "tf_heads" => self.tf_heads = num(key, value)?,
            "tf_ff" => self.tf_ff = num(key, value)?,
            "tf_enc_layers" => self.tf_enc_layers = num(key, value)?,
            "tf_dec_layers" => self.tf_dec_layers = num(key, value)?,
            "tf_dropout" => self.tf_dropout = num(key, value)?,
            "disc_embed" => self.disc_embed = num(key, value)?,
            "disc_dense" => self.disc_dense = num(key, value)?,
            "lambda" => self.training.lambda = num(key, value)?,
            "tau" => self.training.tau = num(key, value)?,
            "tau_anneal_floor" => {
                self.training.tau_anneal_floor = if value == "none" {
                    None
                } else {
                    Some(num(key, value)?)
                };
            }
            "pretrain_epochs" => self.training.pretrain_epochs = num(key, value)?,
            "gen_epochs_per_disc_epoch" => {
                self.training.gen_epochs_per_disc_epoch = num(key, value)?
            }
            "adversarial_rounds" => self.training.adversarial_rounds = num(key, value)?,
            "batch_size" => self.training.batch_size = num(key, value)?,
            "adam_beta1" => self.training.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.training.adam_beta2 = num(key, value)?,
            "adam_eps" => self.training.adam_eps = num(key, value)?,
            "warmup_steps" => self.training.warmup_steps = num(key, value)?,
            "base_lr" => self.training.base_lr = num(key, value)?,
            "seed" => self.training.seed = num(key, value)?,
            other => {
                return Err(CliError::Usage(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    pub(crate) fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Data(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: expected key=value, got `{raw}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    fn build_generator(&self, vocab_size: usize) -> GeneratorModel {
        match self.generator {
            GeneratorKind::Lstm => GeneratorModel::new_lstm(
                LstmDims {
                    vocab: vocab_size,
                    embed: self.lstm_embed,
                    hidden: self.lstm_hidden,
                    max_len: self.max_len,
                },
                self.training.seed,
            ),
            GeneratorKind::Transformer => GeneratorModel::new_transformer(
                TransformerDims {
                    vocab: vocab_size,
                    model: self.tf_model,
                    heads: self.tf_heads,
                    ff: self.tf_ff,
                    enc_layers: self.tf_enc_layers,
                    dec_layers: self.tf_dec_layers,
                    max_len: self.max_len,
                    dropout: self.tf_dropout,
                },
                self.training.seed,
            ),
        }
    }

    fn build_discriminator(&self, vocab_size: usize) -> DiscriminatorParams {
        DiscriminatorParams::new(
            DiscriminatorDims {
                vocab: vocab_size,
                embed: self.disc_embed,
                dense: self.disc_dense,
                max_len: self.max_len,
            },
            self.training.seed ^ 0x5eed_d15c,
        )
    }
}

// ---- argument plumbing ----

struct Args {
    items: Vec<String>,
}

impl Args {
    fn flag_value(&mut self, name: &str) -> Result<Option<String>> {
        if let Some(pos) = self.items.iter().position(|a| a == name) {
            if pos + 1 >= self.items.len() {
                return Err(CliError::Usage(format!("{name} needs a value")));
            }
            let value = self.items.remove(pos + 1);
            self.items.remove(pos);
            Ok(Some(value))
        } else {
            Ok(None)
        }
    }

    fn require(&mut self, name: &str) -> Result<String> {
        self.flag_value(name)?
            .ok_or_else(|| CliError::Usage(format!("missing required flag {name}")))
    }

    fn finish(self) -> Result<()> {
        if let Some(extra) = self.items.first() {
            return Err(CliError::Usage(format!("unexpected argument `{extra}`")));
        }
        Ok(())
    }
}

/// Load the config file named by --config, then apply --set overrides and
/// sweep-friendly direct flags.
fn config_from_args(args: &mut Args) -> Result<RunConfig> {
    let path = args.require("--config")?;
    let mut config = RunConfig::load(Path::new(&path))?;
    for direct in ["--lambda", "--tau", "--seed", "--generator"] {
        if let Some(value) = args.flag_value(direct)? {
            config.set(&direct[2..], &value)?;
        }
    }
    while let Some(assign) = args.flag_value("--set")? {
        let (key, value) = assign.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set expects key=value, got `{assign}`"))
        })?;
        config.set(key.trim(), value.trim())?;
    }
    config.training.validate().map_err(CliError::from)?;
    Ok(config)
}

fn ensure_readable(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "{}: file not found",
            path.display()
        )));
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::Data(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    Ok(())
}

fn append_log(path: &Option<PathBuf>, logs: &[crate::train::EpochLog]) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    ensure_parent(path)?;
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Data(format!("cannot open log {}: {e}", path.display())))?;
    for log in logs {
        writeln!(file, "{}", log.to_json_line())
            .map_err(|e| CliError::Data(format!("cannot write log: {e}")))?;
    }
    Ok(())
}

// ---- subcommands ----

fn cmd_corrupt(mut args: Args) -> Result<()> {
    let input = PathBuf::from(args.require("--in")?);
    let output = PathBuf::from(args.require("--out")?);
    let rules_spec = args.flag_value("--rules")?.unwrap_or_else(|| {
        "duplicate_token:0.08,drop_token:0.06,swap_adjacent:0.08,substitute_function_word:0.25"
            .to_string()
    });
    let seed: u64 = args
        .flag_value("--seed")?
        .unwrap_or_else(|| "0".into())
        .parse()
        .map_err(|_| CliError::Usage("--seed must be an integer".into()))?;
    args.finish()?;

    let rules = parse_rules(&rules_spec)?;
    ensure_readable(&input)?;
    ensure_parent(&output)?;
    let text = std::fs::read_to_string(&input)
        .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    // Line-aligned output: every input line maps to exactly one output line.
    let out_lines: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let tokens = tokenize(line);
            if tokens.is_empty() {
                String::new()
            } else {
                corrupt(&tokens, &rules, seed.wrapping_add(i as u64)).join(" ")
            }
        })
        .collect();
    save_corpus(&output, &out_lines)?;
    println!(
        "corrupted {} lines from {} into {}",
        out_lines.len(),
        input.display(),
        output.display()
    );
    Ok(())
}

/// Vocabulary over fluent and awkward tokens together, so corrupted
/// function-word variants stay in-vocabulary.
fn build_vocab_for(
    config: &RunConfig,
    fluent: &[Vec<String>],
    awkward: &[Vec<String>],
) -> Result<Vocabulary> {
    let mut all: Vec<Vec<String>> = fluent.to_vec();
    all.extend(awkward.to_vec());
    Ok(Vocabulary::build(&all, config.vocab_max)?)
}

fn load_paired(config: &RunConfig, vocab: &Vocabulary) -> Result<PairedCorpus> {
    let fluent_tokens = load_corpus(&config.fluent)?;
    let awkward_tokens = load_corpus(&config.awkward)?;
    if fluent_tokens.len() != awkward_tokens.len() {
        return Err(CliError::Data(format!(
            "corpora are not aligned: {} fluent vs {} awkward sentences",
            fluent_tokens.len(),
            awkward_tokens.len()
        )));
    }
    let fluent = fluent_tokens
        .iter()
        .map(|t| encode(t, vocab, config.max_len))
        .collect();
    let awkward = awkward_tokens
        .iter()
        .map(|t| encode(t, vocab, config.max_len))
        .collect();
    Ok(PairedCorpus::new(awkward, fluent)?)
}

fn cmd_pretrain(mut args: Args) -> Result<()> {
    let config = config_from_args(&mut args)?;
    args.finish()?;
    ensure_readable(&config.fluent)?;
    ensure_readable(&config.awkward)?;
    ensure_parent(&config.vocab)?;
    ensure_parent(&config.checkpoint)?;

    let fluent_tokens = load_corpus(&config.fluent)?;
    let awkward_tokens = load_corpus(&config.awkward)?;
    let vocab = build_vocab_for(&config, &fluent_tokens, &awkward_tokens)?;
    vocab.save(&config.vocab)?;
    let corpus = load_paired(&config, &vocab)?;

    let generator = config.build_generator(vocab.size());
    let discriminator = config.build_discriminator(vocab.size());
    let mut trainer = Trainer::new(generator, discriminator, vocab, config.training.clone())?;
    let logs = trainer.pretrain(&corpus, config.training.pretrain_epochs)?;
    for log in &logs {
        println!("{}", log.to_json_line());
    }
    append_log(&config.log, &logs)?;
    checkpoint::save(&config.checkpoint, &trainer)?;
    let acc = trainer.token_accuracy(&corpus)?;
    println!(
        "pretrained {} epochs; token reconstruction accuracy {:.4}; checkpoint {}",
        config.training.pretrain_epochs,
        acc,
        config.checkpoint.display()
    );
    Ok(())
}

fn cmd_train(mut args: Args) -> Result<()> {
    let config = config_from_args(&mut args)?;
    args.finish()?;
    ensure_readable(&config.checkpoint)?;
    ensure_readable(&config.fluent)?;
    ensure_readable(&config.awkward)?;

    let mut trainer = checkpoint::load(&config.checkpoint)?;
    // The sweep-relevant knobs follow the current invocation.
    trainer.config.lambda = config.training.lambda;
    trainer.config.tau = config.training.tau;
    trainer.config.tau_anneal_floor = config.training.tau_anneal_floor;
    trainer.config.adversarial_rounds = config.training.adversarial_rounds;
    trainer.config.gen_epochs_per_disc_epoch = config.training.gen_epochs_per_disc_epoch;
    trainer.config.validate()?;

    let vocab = trainer.vocab.clone();
    let corpus = load_paired(&config, &vocab)?;
    // Checkpoint at every round boundary so an interrupted run loses at
    // most one round.
    let rounds = trainer.config.adversarial_rounds;
    let logs = trainer.adversarial_train_with_hook(&corpus, rounds, |state, _round| {
        checkpoint::save(&config.checkpoint, state)?;
        Ok(())
    })?;
    for log in &logs {
        println!("{}", log.to_json_line());
    }
    append_log(&config.log, &logs)?;
    checkpoint::save(&config.checkpoint, &trainer)?;
    let (copy_rate, overlap) = crate::train::copy_stats(&trainer.generator, &corpus.awkward);
    println!(
        "adversarial training done: {} rounds; exact-copy rate {:.3}, token overlap {:.3}; checkpoint {}",
        trainer.config.adversarial_rounds,
        copy_rate,
        overlap,
        config.checkpoint.display()
    );
    Ok(())
}

fn cmd_infer(mut args: Args) -> Result<()> {
    let ckpt = PathBuf::from(args.require("--checkpoint")?);
    let input = PathBuf::from(args.require("--in")?);
    let output = PathBuf::from(args.require("--out")?);
    args.finish()?;
    ensure_readable(&ckpt)?;
    ensure_readable(&input)?;
    ensure_parent(&output)?;

    let trainer = checkpoint::load(&ckpt)?;
    let max_len = trainer.generator.max_len();
    let text = std::fs::read_to_string(&input)
        .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let lines: Vec<&str> = text.lines().collect();
    let mut out_lines = vec![String::new(); lines.len()];
    // Batch the non-empty lines; empty lines stay empty, keeping alignment.
    let todo: Vec<(usize, crate::text::TokenSequence)> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i, encode(&tokenize(l), &trainer.vocab, max_len)))
        .collect();
    for chunk in todo.chunks(32) {
        let seqs: Vec<crate::text::TokenSequence> =
            chunk.iter().map(|(_, s)| s.clone()).collect();
        let decoded = trainer.generator.decode_greedy_batch(&seqs);
        for ((i, _), out) in chunk.iter().zip(decoded) {
            out_lines[*i] = crate::text::decode(&out, &trainer.vocab);
        }
    }
    save_corpus(&output, &out_lines)?;
    println!("rewrote {} lines into {}", lines.len(), output.display());
    Ok(())
}

fn cmd_eval(mut args: Args) -> Result<()> {
    let ckpt = PathBuf::from(args.require("--checkpoint")?);
    let pairs_path = PathBuf::from(args.require("--pairs")?);
    let report_path = PathBuf::from(args.require("--report")?);
    args.finish()?;
    ensure_readable(&ckpt)?;
    ensure_readable(&pairs_path)?;
    ensure_parent(&report_path)?;

    let trainer = checkpoint::load(&ckpt)?;
    let pairs = load_pairs(&pairs_path)?;
    let report = evaluate_corpus(&trainer.generator, &trainer.vocab, &pairs, &trainer.config)?;
    std::fs::write(&report_path, report.to_json())
        .map_err(|e| CliError::Data(format!("{}: {e}", report_path.display())))?;
    println!(
        "evaluated {} pairs: bleu_bow {:.4}, bleu_ngram {:.4}, cosine {:.4} -> {}",
        report.sentences.len(),
        report.means.bleu_bow,
        report.means.bleu_ngram,
        report.means.cosine,
        report_path.display()
    );
    Ok(())
}

fn cmd_gradcheck(mut args: Args) -> Result<bool> {
    let seed: u64 = args
        .flag_value("--seed")?
        .unwrap_or_else(|| "42".into())
        .parse()
        .map_err(|_| CliError::Usage("--seed must be an integer".into()))?;
    let instances: usize = args
        .flag_value("--instances")?
        .unwrap_or_else(|| "5".into())
        .parse()
        .map_err(|_| CliError::Usage("--instances must be an integer".into()))?;
    args.finish()?;
    let (reports, ok) = crate::gradcheck::run_full_suite(seed, instances);
    for report in &reports {
        println!("{}", report.line());
    }
    println!(
        "{}: {} checks, seed {seed}, {instances} instances each",
        if ok { "all gradients verified" } else { "GRADIENT CHECK FAILED" },
        reports.len()
    );
    Ok(ok)
}

const USAGE: &str = "\
fluencygan <command> [flags]

commands:
  corrupt    --in FILE --out FILE [--rules SPEC] [--seed N]
             rewrite a fluent corpus into an awkward one, line-aligned;
             SPEC is kind:prob pairs joined by commas (or `none`), kinds:
             duplicate_token drop_token swap_adjacent substitute_function_word
  pretrain   --config FILE [--seed N] [--set key=value]...
             build the vocabulary and pretrain the generator as an
             autoencoder; writes vocab, checkpoint, and training log
  train      --config FILE [--lambda X] [--tau X] [--set key=value]...
             adversarial rounds on a pretrained checkpoint (1 discriminator
             epoch then gen_epochs_per_disc_epoch generator epochs per round)
  infer      --checkpoint FILE --in FILE --out FILE
             greedy-decode each input line into its rewrite
  eval       --checkpoint FILE --pairs FILE --report FILE
             score awkward<TAB>reference pairs with BLEU variants and
             embedding cosine; writes a JSON report
  gradcheck  [--seed N] [--instances N]
             finite-difference verification of every op and the full
             composite losses; nonzero exit on any failure
";

/// Entry point for the binary; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    let Some(command) = args.first() else {
        eprint!("{USAGE}");
        return EXIT_USAGE;
    };
    let rest = Args {
        items: args[1..].to_vec(),
    };
    let outcome: Result<i32> = match command.as_str() {
        "corrupt" => cmd_corrupt(rest).map(|_| EXIT_OK),
        "pretrain" => cmd_pretrain(rest).map(|_| EXIT_OK),
        "train" => cmd_train(rest).map(|_| EXIT_OK),
        "infer" => cmd_infer(rest).map(|_| EXIT_OK),
        "eval" => cmd_eval(rest).map(|_| EXIT_OK),
        "gradcheck" => cmd_gradcheck(rest).map(|ok| if ok { EXIT_OK } else { EXIT_CHECK_FAILED }),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            return EXIT_OK;
        }
        other => {
            eprintln!("unknown command `{other}`");
            eprint!("{USAGE}");
            return EXIT_USAGE;
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        assert!(c.set("lambda", "0.5").is_ok());
        assert!((c.training.lambda - 0.5).abs() < 1e-6);
        assert!(matches!(c.set("lambada", "0.5"), Err(CliError::Usage(_))));
        assert!(matches!(c.set("lambda", "abc"), Err(CliError::Usage(_))));
        assert!(c.set("generator", "transformer").is_ok());
        assert!(matches!(
            c.set("generator", "rnn"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn config_file_parses_comments_and_overrides() {
        let dir = std::env::temp_dir().join("fluencygan-cli-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(
            &path,
            "# a comment\ngenerator = transformer\nlambda=0.25\n\nmax_len = 16 # inline\n",
        )
        .unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.generator, GeneratorKind::Transformer);
        assert!((config.training.lambda - 0.25).abs() < 1e-6);
        assert_eq!(config.max_len, 16);
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(&["explode".to_string()]), EXIT_USAGE);
        assert_eq!(run(&[]), EXIT_USAGE);
    }

    #[test]
    fn missing_files_are_data_errors() {
        let args = vec![
            "corrupt".to_string(),
            "--in".into(),
            "/no/such/corpus.txt".into(),
            "--out".into(),
            "/tmp/out.txt".into(),
        ];
        assert_eq!(run(&args), EXIT_DATA);
    }
}
