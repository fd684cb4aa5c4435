use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use senti_core::pipeline::{self, RunConfig};
use senti_core::{selftest, Error};

/// Sentiment knowledge mining, sentiment-masked pre-training and fine-tuning.
#[derive(Parser, Debug)]
#[command(name = "senti", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Shared {
    /// key = value file applied over the defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Read upstream artifacts from here instead of --out-dir
    #[arg(long, global = true)]
    in_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Any config key, e.g. --set hidden_dim=32 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the vocabulary and mine sentiment words and aspect-sentiment pairs
    Mine {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Seed word file (word<TAB>+ or -); defaults to the bundled list
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        min_cand_freq: Option<u64>,
        #[arg(long)]
        min_pair_freq: Option<u64>,
        /// Accept candidates of any part of speech
        #[arg(long)]
        no_pos_filter: bool,
    },
    /// Mask the corpus against the mined knowledge
    Mask {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// sw, wp, ap (comma separated) or random
        #[arg(long)]
        objectives: Option<String>,
    },
    /// Pre-train the encoder on the masked corpus
    Pretrain {
        /// sw, wp, ap (comma separated) or random
        #[arg(long)]
        objectives: Option<String>,
        /// full, positive_only or independent
        #[arg(long)]
        ap_loss: Option<String>,
        /// sent_vector or pair_vector
        #[arg(long)]
        ap_input: Option<String>,
        /// toy, base or large
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Share the token embeddings with the word prediction output layer
        #[arg(long)]
        tie_output: bool,
    },
    /// Fine-tune a task head on labeled data
    Finetune {
        /// sentence, aspect or tagging
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        /// pretrained or random
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Train this many seeds and keep the median dev run
        #[arg(long)]
        median_of: Option<usize>,
        /// Cross-validate over the training file with this many folds
        #[arg(long)]
        cv_folds: Option<usize>,
        /// Sweep the grid line of this dataset
        #[arg(long)]
        grid_dataset: Option<String>,
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Score a fine-tuned model
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Write per-head [CLS] attention weights
        #[arg(long)]
        dump_attention: bool,
    },
    /// Run the built-in oracle checks
    Selftest {
        /// Also verify that this checkpoint loads
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Generate the synthetic benchmark and run every stage on it
    Demo,
}

type Overrides = Vec<(String, String)>;

fn push<T: ToString>(out: &mut Overrides, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        out.push((key.to_string(), v.to_string()));
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn overrides(cli: &Cli) -> Result<Overrides, Error> {
    let mut out = Overrides::new();
    let s = &cli.shared;
    push(&mut out, "seed", &s.seed);
    push(&mut out, "out_dir", &path_str(&s.out_dir));
    push(&mut out, "in_dir", &path_str(&s.in_dir));
    push(&mut out, "threads", &s.threads);
    for kv in &s.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, found {kv:?}")))?;
        out.push((k.to_string(), v.to_string()));
    }
    match &cli.command {
        Command::Mine {
            corpus,
            seeds,
            window,
            min_cand_freq,
            min_pair_freq,
            no_pos_filter,
        } => {
            push(&mut out, "corpus", &path_str(corpus));
            push(&mut out, "seeds", &path_str(seeds));
            push(&mut out, "window", window);
            push(&mut out, "min_cand_freq", min_cand_freq);
            push(&mut out, "min_pair_freq", min_pair_freq);
            if *no_pos_filter {
                out.push(("pos_filter".into(), "false".into()));
            }
        }
        Command::Mask { corpus, objectives } => {
            push(&mut out, "corpus", &path_str(corpus));
            push(&mut out, "objectives", objectives);
        }
        Command::Pretrain {
            objectives,
            ap_loss,
            ap_input,
            preset,
            epochs,
            batch_size,
            lr,
            tie_output,
        } => {
            push(&mut out, "objectives", objectives);
            push(&mut out, "ap_loss", ap_loss);
            push(&mut out, "ap_input", ap_input);
            push(&mut out, "preset", preset);
            push(&mut out, "epochs", epochs);
            push(&mut out, "batch_size", batch_size);
            push(&mut out, "lr", lr);
            if *tie_output {
                out.push(("tie_output".into(), "true".into()));
            }
        }
        Command::Finetune {
            task,
            train,
            dev,
            init,
            lr,
            epochs,
            batch_size,
            median_of,
            cv_folds,
            grid_dataset,
            grid,
        } => {
            push(&mut out, "task", task);
            push(&mut out, "train", &path_str(train));
            push(&mut out, "dev", &path_str(dev));
            push(&mut out, "init", init);
            push(&mut out, "ft_lr", lr);
            push(&mut out, "ft_epochs", epochs);
            push(&mut out, "ft_batch_size", batch_size);
            push(&mut out, "median_of", median_of);
            push(&mut out, "cv_folds", cv_folds);
            push(&mut out, "grid_dataset", grid_dataset);
            push(&mut out, "grid", &path_str(grid));
        }
        Command::Eval {
            data,
            model,
            dump_attention,
        } => {
            push(&mut out, "eval_data", &path_str(data));
            push(&mut out, "model", &path_str(model));
            if *dump_attention {
                out.push(("dump_attention".into(), "true".into()));
            }
        }
        Command::Selftest { .. } | Command::Demo => {}
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let base = match cli.command {
        Command::Demo => pipeline::demo_defaults(),
        _ => RunConfig::default(),
    };
    let config = RunConfig::resolve(base, cli.shared.config.as_deref(), &overrides(cli)?)?;
    let summary = match &cli.command {
        Command::Mine { .. } => pipeline::mine(&config)?,
        Command::Mask { .. } => pipeline::mask(&config)?,
        Command::Pretrain { .. } => pipeline::pretrain(&config)?,
        Command::Finetune { .. } => pipeline::finetune(&config)?,
        Command::Eval { .. } => pipeline::eval(&config)?,
        Command::Demo => pipeline::demo(&config)?.join("\n"),
        Command::Selftest { checkpoint } => {
            let report = selftest::run(config.seed, checkpoint.as_deref())?;
            print!("{}", report.to_table());
            return Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("self-test failed");
                ExitCode::from(2)
            });
        }
    };
    println!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
