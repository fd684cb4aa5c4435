//! The staged pipeline behind the command line: mine → mask → pretrain →
//! finetune → eval. Stages communicate only through files in a work
//! directory, and each writes its resolved configuration next to its outputs.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub use config::{ApMode, ConfigValue, ObjectiveSet, RunConfig, VERSION};

use crate::corpus::{load_classification_tsv, load_conll, read_tagged_corpus, Label, LabeledExample, Vocab};
use crate::encoder::{AdamState, Checkpoint, EncoderParams, Mode};
use crate::error::{Error, Result};
use crate::finetune::{
    cross_validate, evaluate, finetune_seeds, load_grid, parse_grid, FineTuneModel, FinetuneConfig, SeedSweep, Task,
    DEFAULT_GRID,
};
use crate::masker::{mask_corpus, read_masked};
use crate::miner::{mine_lexicon, SeedSet, SentimentLexicon};
use crate::objectives::{pretrain as run_pretrain, PretrainConfig};
use crate::synth;

pub const VOCAB: &str = "vocab.txt";
pub const LEXICON: &str = "lexicon.tsv";
pub const PAIRS: &str = "pairs.tsv";
pub const MINE_REPORT: &str = "report.txt";
pub const MASKED: &str = "masked.jsonl";
pub const MASK_REPORT: &str = "mask_report.txt";
pub const ENCODER: &str = "encoder.ckpt";
pub const LAST_GOOD: &str = "last_good.ckpt";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const FINETUNED: &str = "finetuned.ckpt";
pub const DEV_REPORT: &str = "dev_report.tsv";
pub const RESULTS: &str = "results.json";
pub const EVAL_REPORT: &str = "eval_report.tsv";
pub const PREDICTIONS: &str = "predictions.tsv";
pub const ATTENTION: &str = "attention.tsv";

fn require(dir: &Path, name: &str, producer: &'static str) -> Result<PathBuf> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, producer })
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare(config: &RunConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    write(
        &config.out_dir.join(format!("{command}.config")),
        config.to_text(command),
    )
}

fn corpus_path(config: &RunConfig) -> Result<&Path> {
    config
        .corpus
        .as_deref()
        .ok_or_else(|| Error::Config("no corpus given (set corpus = <file> or pass --corpus)".into()))
}

fn load_vocab(config: &RunConfig) -> Result<Vocab> {
    Vocab::load(&require(config.input_dir(), VOCAB, "mine")?)
}

/// Builds the vocabulary, mines the lexicon and pairs.
pub fn mine(config: &RunConfig) -> Result<String> {
    prepare(config, "mine")?;
    let corpus_path = corpus_path(config)?;
    let max_size = (config.vocab_max_size > 0).then_some(config.vocab_max_size);
    let vocab = crate::corpus::build_vocab(corpus_path, config.vocab_min_freq, max_size)?;
    let corpus = read_tagged_corpus(corpus_path, &vocab, config.max_sentence_len()?)?;
    let seeds = match &config.seeds {
        Some(p) => SeedSet::load(p)?,
        None => SeedSet::default_seeds(),
    };
    let (lexicon, report) = mine_lexicon(&corpus, &seeds, &config.miner())?;
    let out = &config.out_dir;
    vocab.save(&out.join(VOCAB))?;
    lexicon.save(&out.join(LEXICON), &out.join(PAIRS))?;
    write(&out.join(MINE_REPORT), report.to_text(&lexicon, 20))?;
    Ok(format!(
        "mined {} sentences: {} lexicon words ({} positive, {} negative), {} pairs, vocabulary {}",
        report.sentences,
        lexicon.words.len(),
        report.positive,
        report.negative,
        report.pairs,
        vocab.len()
    ))
}

/// Masks the corpus against the mined lexicon.
pub fn mask(config: &RunConfig) -> Result<String> {
    let vocab = load_vocab(config)?;
    let dir = config.input_dir();
    let lexicon = SentimentLexicon::load(&require(dir, LEXICON, "mine")?, &require(dir, PAIRS, "mine")?)?;
    prepare(config, "mask")?;
    let corpus = read_tagged_corpus(corpus_path(config)?, &vocab, config.max_sentence_len()?)?;
    let stats = mask_corpus(
        &corpus,
        &lexicon,
        &vocab,
        config.masking(),
        config.seed,
        config.threads,
        &config.out_dir.join(MASKED),
    )?;
    write(&config.out_dir.join(MASK_REPORT), stats.to_text())?;
    Ok(format!(
        "masked {} sentences: {} pairs, {} sentiment-word tokens, {} common tokens",
        stats.sentences, stats.pairs, stats.word_tokens, stats.fill_tokens
    ))
}

/// The masked corpus must have been built for the same objectives.
fn check_masking(config: &RunConfig) -> Result<()> {
    let path = config.input_dir().join("mask.config");
    if !path.is_file() {
        return Ok(());
    }
    let mut masked = RunConfig::default();
    masked.apply_file(&path)?;
    if masked.masking() != config.masking() {
        return Err(Error::Config(format!(
            "{} was masked for objectives {} but pretraining asks for {}; rerun `senti mask --objectives {}`",
            MASKED,
            masked.objectives.render(),
            config.objectives.render(),
            config.objectives.render()
        )));
    }
    Ok(())
}

/// Pre-trains the encoder on the masked corpus.
pub fn pretrain(config: &RunConfig) -> Result<String> {
    let vocab = load_vocab(config)?;
    let masked = read_masked(&require(config.input_dir(), MASKED, "mask")?)?;
    check_masking(config)?;
    prepare(config, "pretrain")?;
    let mut params = EncoderParams::init(config.encoder(vocab.len())?, config.seed);
    let mut adam = AdamState::new(params.tensors());
    let train_cfg = PretrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        adam: config.adam(),
        objectives: config.loss_terms(),
        max_grad_norm: config.max_grad_norm,
        log_every: config.log_every,
        seed: config.seed,
    };
    let last_good = config.out_dir.join(LAST_GOOD);
    let _ = fs::remove_file(&last_good);
    let result = run_pretrain(&mut params, &mut adam, &masked, &train_cfg, |_, p, a| {
        let mut ckpt = Checkpoint::new(p.clone());
        ckpt.adam = Some(a.clone());
        ckpt.save(&last_good)
    });
    let log = match result {
        Ok(log) => log,
        Err(Error::Divergence { step, detail, .. }) => {
            return Err(Error::Divergence {
                step,
                detail,
                last_good: last_good.is_file().then_some(last_good),
            })
        }
        Err(e) => return Err(e),
    };
    write(&config.out_dir.join(TRAIN_LOG), log.to_tsv())?;
    let mut ckpt = Checkpoint::new(params);
    ckpt.adam = Some(adam);
    ckpt.meta = serde_json::json!({
        "objectives": config.objectives.render(),
        "seed": config.seed,
        "examples": masked.len(),
    });
    ckpt.save(&config.out_dir.join(ENCODER))?;
    let last = log.rows.last();
    Ok(format!(
        "pre-trained on {} examples for {} epochs; final loss {}",
        masked.len(),
        config.epochs,
        last.map(|r| format!("{:.4} (sw {:.4}, wp {:.4}, ap {:.4})", r.total, r.l_sw, r.l_wp, r.l_ap))
            .unwrap_or_else(|| "n/a".into())
    ))
}

pub fn load_examples(task: Task, path: &Path, vocab: &Vocab) -> Result<Vec<LabeledExample>> {
    match task {
        Task::Tagging => Ok(load_conll(path, vocab)?.0),
        Task::Sentence | Task::Aspect => load_classification_tsv(path, vocab),
    }
}

fn starting_encoder(config: &RunConfig, vocab: &Vocab) -> Result<(EncoderParams, Option<PathBuf>)> {
    match config.init.as_str() {
        "pretrained" => {
            let path = require(config.input_dir(), ENCODER, "pretrain")?;
            let ckpt = Checkpoint::load_for_vocab(&path, vocab.len())?;
            Ok((ckpt.params, Some(path)))
        }
        "random" => Ok((EncoderParams::init(config.encoder(vocab.len())?, config.seed), None)),
        other => Err(Error::Config(format!(
            "init must be pretrained or random, found {other:?}"
        ))),
    }
}

fn with_last_good<T>(result: Result<T>, path: &Option<PathBuf>) -> Result<T> {
    result.map_err(|e| match e {
        Error::Divergence { step, detail, .. } => Error::Divergence {
            step,
            detail,
            last_good: path.clone(),
        },
        other => other,
    })
}

/// Fine-tunes a task head, either once per seed (keeping the median dev
/// run), over a hyper-parameter grid, or by cross-validation.
pub fn finetune(config: &RunConfig) -> Result<String> {
    let vocab = load_vocab(config)?;
    let (encoder, source) = starting_encoder(config, &vocab)?;
    let train_path = config
        .train
        .as_deref()
        .ok_or_else(|| Error::Config("no training data given (set train = <file>)".into()))?;
    let train = load_examples(config.task, train_path, &vocab)?;
    prepare(config, "finetune")?;
    let base = FinetuneConfig {
        lr: config.ft_lr,
        batch_size: config.ft_batch_size,
        epochs: config.ft_epochs,
        max_grad_norm: config.max_grad_norm,
        keep_best_epoch: config.keep_best_epoch,
        seed: config.seed,
    };

    if config.cv_folds > 0 {
        let report = with_last_good(
            cross_validate(config.task, &encoder, &train, config.cv_folds, &base),
            &source,
        )?;
        let mut tsv = String::new();
        for (k, fold) in report.folds.iter().enumerate() {
            writeln!(tsv, "# fold {k}").unwrap();
            tsv.push_str(&fold.to_tsv());
        }
        writeln!(tsv, "mean\t{:.6}", report.mean).unwrap();
        write(&config.out_dir.join(DEV_REPORT), tsv)?;
        let json = serde_json::json!({
            "task": config.task.as_str(),
            "folds": report.folds.iter().map(|f| f.primary()).collect::<Vec<_>>(),
            "mean": report.mean,
        });
        write(
            &config.out_dir.join(RESULTS),
            serde_json::to_string_pretty(&json).unwrap(),
        )?;
        return Ok(format!(
            "{}-fold cross-validation: mean {:.4}",
            config.cv_folds, report.mean
        ));
    }

    let dev_path = config
        .dev
        .as_deref()
        .ok_or_else(|| Error::Config("no dev data given (set dev = <file>)".into()))?;
    let dev = load_examples(config.task, dev_path, &vocab)?;
    let runs = match &config.grid_dataset {
        None => vec![base],
        Some(name) => {
            let grid = match &config.grid {
                Some(p) => load_grid(p)?,
                None => parse_grid(DEFAULT_GRID, Path::new("finetune_grid.txt"))?,
            };
            let line = grid
                .iter()
                .find(|g| &g.dataset == name)
                .ok_or_else(|| Error::Config(format!("grid has no dataset {name:?}")))?;
            line.runs()
                .into_iter()
                .map(|r| FinetuneConfig {
                    lr: r.lr,
                    batch_size: r.batch,
                    epochs: r.epochs,
                    ..base
                })
                .collect()
        }
    };
    let seeds = config.finetune_seeds();
    let mut best: Option<(FinetuneConfig, SeedSweep)> = None;
    let mut grid_rows = Vec::new();
    for run in runs {
        let sweep = with_last_good(
            finetune_seeds(config.task, &encoder, &train, &dev, &run, &seeds),
            &source,
        )?;
        let score = sweep.selected().score();
        grid_rows.push(serde_json::json!({
            "lr": run.lr, "batch": run.batch_size, "epochs": run.epochs, "median_dev": score,
        }));
        if best.as_ref().is_none_or(|(_, b)| score > b.selected().score()) {
            best = Some((run, sweep));
        }
    }
    let (run, sweep) = best.expect("at least one run");
    let selected = sweep.selected();
    selected.model.to_checkpoint().save(&config.out_dir.join(FINETUNED))?;
    write(&config.out_dir.join(DEV_REPORT), selected.dev.to_tsv())?;
    let mut json = serde_json::to_value(sweep.results()).expect("results serialize");
    json["hyperparameters"] = serde_json::json!({"lr": run.lr, "batch": run.batch_size, "epochs": run.epochs});
    if config.grid_dataset.is_some() {
        json["grid"] = serde_json::Value::Array(grid_rows);
    }
    write(
        &config.out_dir.join(RESULTS),
        serde_json::to_string_pretty(&json).unwrap(),
    )?;
    Ok(format!(
        "fine-tuned {} over {} seed(s); selected seed {} with dev {} {:.4}",
        config.task.as_str(),
        seeds.len(),
        selected.seed,
        sweep.results().metric,
        selected.score()
    ))
}

fn describe_label(label: &Label) -> String {
    match label {
        Label::Class(c) => c.clone(),
        Label::Tags(tags) => tags.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" "),
    }
}

fn predict(model: &FineTuneModel, ids: &[u32]) -> Result<String> {
    match model.task() {
        Task::Tagging => {
            let set = model.head.tag_set().expect("tagging head has tags");
            Ok(model
                .decode(ids)?
                .into_iter()
                .map(|i| set.tag(i).to_string())
                .collect::<Vec<_>>()
                .join(" "))
        }
        _ => {
            let p = model.probabilities(ids)?;
            let best = (0..p.len())
                .max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            Ok(model.head.labels[best].clone())
        }
    }
}

/// Scores a fine-tuned model; optionally dumps `[CLS]` attention per head.
pub fn eval(config: &RunConfig) -> Result<String> {
    let vocab = load_vocab(config)?;
    let model_path = match &config.model {
        Some(p) => p.clone(),
        None => require(config.input_dir(), FINETUNED, "finetune")?,
    };
    let model = FineTuneModel::from_checkpoint(Checkpoint::load_for_vocab(&model_path, vocab.len())?)?;
    let data_path = config
        .eval_data
        .as_deref()
        .ok_or_else(|| Error::Config("no evaluation data given (set eval_data = <file>)".into()))?;
    let examples = load_examples(model.task(), data_path, &vocab)?;
    prepare(config, "eval")?;
    let report = evaluate(&model, &examples)?;
    write(&config.out_dir.join(EVAL_REPORT), report.to_tsv())?;

    let mut predictions = String::from("index\tgold\tpredicted\n");
    let mut attention = String::from("example\tlayer\thead\tposition\ttoken\tweight\n");
    for (i, ex) in examples.iter().enumerate() {
        let encoded = model.encode(ex)?;
        writeln!(
            predictions,
            "{i}\t{}\t{}",
            describe_label(&ex.label),
            predict(&model, &encoded.ids)?
        )
        .unwrap();
        if config.dump_attention {
            let out = model.encoder.forward(&encoded.ids, true, Mode::Eval)?;
            let cfg = &model.encoder.config;
            for layer in 0..cfg.n_layers {
                for head in 0..cfg.n_heads {
                    let row = out.cls_attention(layer, head).expect("attention retained");
                    for (pos, (&id, w)) in encoded.ids.iter().zip(row).enumerate() {
                        let token = vocab.token(id).unwrap_or("?");
                        writeln!(attention, "{i}\t{layer}\t{head}\t{pos}\t{token}\t{w:.6}").unwrap();
                    }
                }
            }
        }
    }
    write(&config.out_dir.join(PREDICTIONS), predictions)?;
    if config.dump_attention {
        write(&config.out_dir.join(ATTENTION), attention)?;
    }
    Ok(format!(
        "evaluated {} examples: {} {:.4}",
        report.examples,
        if report.accuracy.is_some() {
            "accuracy"
        } else {
            "mean binary F1"
        },
        report.primary()
    ))
}

/// Settings that let the bundled synthetic benchmark train at desk scale.
pub fn demo_defaults() -> RunConfig {
    RunConfig {
        out_dir: PathBuf::from("demo-out"),
        lr: 1e-3,
        ft_lr: 1e-3,
        median_of: 3,
        ..RunConfig::default()
    }
}

/// Generates the synthetic benchmark into `out_dir/data` and runs every
/// stage on it in `out_dir`.
pub fn demo(config: &RunConfig) -> Result<Vec<String>> {
    let data = config.out_dir.join("data");
    fs::create_dir_all(&data).map_err(|e| Error::io(&data, e))?;
    let bench = synth::benchmark(&synth::BenchmarkConfig {
        seed: config.seed,
        ..Default::default()
    });
    let mut cfg = config.clone();
    let put = |name: &str, text: String, slot: &mut Option<PathBuf>| -> Result<()> {
        let path = data.join(name);
        write(&path, text)?;
        slot.get_or_insert(path);
        Ok(())
    };
    put("corpus.txt", bench.corpus.join("\n") + "\n", &mut cfg.corpus)?;
    put("train.tsv", synth::classification_tsv(&bench.train), &mut cfg.train)?;
    put("dev.tsv", synth::classification_tsv(&bench.dev), &mut cfg.dev)?;
    if cfg.eval_data.is_none() {
        cfg.eval_data = cfg.dev.clone();
    }
    cfg.task = Task::Sentence;
    cfg.in_dir = None;
    prepare(&cfg, "demo")?;
    let mut lines = Vec::new();
    for (name, stage) in [
        ("mine", mine as fn(&RunConfig) -> Result<String>),
        ("mask", mask),
        ("pretrain", pretrain),
        ("finetune", finetune),
        ("eval", eval),
    ] {
        lines.push(format!("{name}: {}", stage(&cfg)?));
    }
    Ok(lines)
}
