//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::encoder::{AdamConfig, ApInput, EncoderConfig};
use crate::error::{Error, Result};
use crate::finetune::Task;
use crate::masker::{MaskingConfig, MaskingStrategy};
use crate::miner::{MinerConfig, Smoothing};
use crate::objectives::{ApLoss, Objectives, PairObjective};

/// A value that can live in a config file.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
display_value!(u64, usize, f64, bool, String);

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

/// Empty means unset.
impl<T: ConfigValue> ConfigValue for Option<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            T::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map(T::render).unwrap_or_default()
    }
}

impl ConfigValue for ApInput {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        ApInput::parse(s).ok_or_else(|| format!("expected sent_vector or pair_vector, found {s:?}"))
    }
    fn render(&self) -> String {
        self.as_str().into()
    }
}

impl ConfigValue for Task {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Task::parse(s).ok_or_else(|| format!("expected sentence, aspect or tagging, found {s:?}"))
    }
    fn render(&self) -> String {
        self.as_str().into()
    }
}

/// Pair objective variant selected by `ap_loss`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApMode {
    MultiLabel(ApLoss),
    Independent,
}

impl ConfigValue for ApMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "independent" => Ok(ApMode::Independent),
            _ => ApLoss::parse(s)
                .map(ApMode::MultiLabel)
                .ok_or_else(|| format!("expected full, positive_only or independent, found {s:?}")),
        }
    }
    fn render(&self) -> String {
        match self {
            ApMode::MultiLabel(l) => l.as_str().into(),
            ApMode::Independent => "independent".into(),
        }
    }
}

/// The `objectives` list: any of `sw`, `wp`, `ap`, or `random` on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectiveSet {
    pub sw: bool,
    pub wp: bool,
    pub ap: bool,
    pub random: bool,
}

impl ObjectiveSet {
    pub const ALL: ObjectiveSet = ObjectiveSet {
        sw: true,
        wp: true,
        ap: true,
        random: false,
    };
}

impl ConfigValue for ObjectiveSet {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let mut set = ObjectiveSet {
            sw: false,
            wp: false,
            ap: false,
            random: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "sw" => set.sw = true,
                "wp" => set.wp = true,
                "ap" => set.ap = true,
                "random" => set.random = true,
                other => return Err(format!("unknown objective {other:?} (expected sw, wp, ap or random)")),
            }
        }
        if set.random && (set.sw || set.wp || set.ap) {
            return Err("random cannot be combined with other objectives".into());
        }
        if !(set.random || set.sw || set.wp || set.ap) {
            return Err("no objective selected".into());
        }
        Ok(set)
    }
    fn render(&self) -> String {
        if self.random {
            return "random".into();
        }
        let names = [(self.sw, "sw"), (self.wp, "wp"), (self.ap, "ap")];
        names
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect::<Vec<_>>()
            .join(",")
    }
}

macro_rules! run_config {
    ($($(#[$doc:meta])* $field:ident : $ty:ty = $default:expr,)*) => {
        /// Every setting of every stage. Keys match field names.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $($(#[$doc])* pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($field: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Sets one key from its text form; unknown keys are rejected.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let key = key.trim().replace('-', "_");
                let value = value.trim();
                match key.as_str() {
                    $(stringify!($field) => {
                        self.$field = <$ty as ConfigValue>::parse_value(value)
                            .map_err(|e| Error::Config(format!("{key}: {e}")))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($field), self.$field.render())),*]
            }
        }
    };
}

run_config! {
    seed: u64 = 0,
    threads: usize = 1,
    /// Where this command writes.
    out_dir: PathBuf = PathBuf::from("out"),
    /// Where upstream artifacts are read from; defaults to `out_dir`.
    in_dir: Option<PathBuf> = None,

    corpus: Option<PathBuf> = None,
    vocab_min_freq: usize = 1,
    /// 0 keeps every token.
    vocab_max_size: usize = 0,

    seeds: Option<PathBuf> = None,
    window: usize = 10,
    min_cand_freq: u64 = 5,
    min_pair_freq: u64 = 2,
    pos_filter: bool = true,
    pair_distance: usize = 3,
    pair_smoothing: f64 = 0.5,
    unigram_smoothing: f64 = 1.0,

    mask_ratio: f64 = 0.10,
    max_pairs: usize = 2,
    random_token_rate: f64 = 0.15,

    preset: String = "toy".into(),
    n_layers: Option<usize> = None,
    hidden_dim: Option<usize> = None,
    n_heads: Option<usize> = None,
    ffn_dim: Option<usize> = None,
    max_seq_len: Option<usize> = None,
    dropout: Option<f64> = None,
    init_std: Option<f64> = None,
    tie_output: bool = false,
    ap_input: ApInput = ApInput::SentVector,

    objectives: ObjectiveSet = ObjectiveSet::ALL,
    ap_loss: ApMode = ApMode::MultiLabel(ApLoss::Full),
    epochs: usize = 3,
    batch_size: usize = 32,
    lr: f64 = 5e-5,
    beta1: f64 = 0.9,
    beta2: f64 = 0.999,
    adam_eps: f64 = 1e-8,
    max_grad_norm: f64 = 1.0,
    log_every: usize = 10,

    task: Task = Task::Sentence,
    train: Option<PathBuf> = None,
    dev: Option<PathBuf> = None,
    /// `pretrained` reads the encoder checkpoint; `random` starts from scratch.
    init: String = "pretrained".into(),
    ft_lr: f64 = 3e-5,
    ft_batch_size: usize = 16,
    ft_epochs: usize = 5,
    /// Number of seeds (`seed`, `seed + 1`, ...) whose median dev run is kept.
    median_of: usize = 1,
    keep_best_epoch: bool = true,
    /// Cross-validation folds over the training file; 0 disables.
    cv_folds: usize = 0,
    grid: Option<PathBuf> = None,
    /// Dataset line of the grid to sweep; unset trains once with `ft_*`.
    grid_dataset: Option<String> = None,

    eval_data: Option<PathBuf> = None,
    /// Fine-tuned checkpoint to evaluate; defaults to the finetune output.
    model: Option<PathBuf> = None,
    dump_attention: bool = false,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

impl RunConfig {
    /// Applies a `key = value` file on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected key = value, found {line:?}",
                    path.display(),
                    i + 1
                ))
            })?;
            self.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}:{}: {msg}", path.display(), i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Defaults, then `file`, then `overrides` in order.
    pub fn resolve(base: RunConfig, file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut config = base;
        if let Some(path) = file {
            config.apply_file(path)?;
        }
        for (k, v) in overrides {
            config.set(k, v)?;
        }
        Ok(config)
    }

    /// Serialized form with a provenance header; reading it back gives an
    /// equal config.
    pub fn to_text(&self, command: &str) -> String {
        let mut out = format!("# senti {VERSION} {command}\n");
        for (k, v) in self.entries() {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn input_dir(&self) -> &Path {
        self.in_dir.as_deref().unwrap_or(&self.out_dir)
    }

    pub fn miner(&self) -> MinerConfig {
        MinerConfig {
            window: self.window,
            min_cand_freq: self.min_cand_freq,
            min_pair_freq: self.min_pair_freq,
            pos_filter: self.pos_filter,
            smoothing: Smoothing {
                pair: self.pair_smoothing,
                unigram: self.unigram_smoothing,
            },
            pair_distance: self.pair_distance,
            threads: self.threads.max(1),
        }
    }

    /// Pair detection is only useful when the pair objective is on.
    pub fn masking(&self) -> MaskingStrategy {
        if self.objectives.random {
            MaskingStrategy::RandomToken {
                rate: self.random_token_rate,
            }
        } else {
            MaskingStrategy::Sentiment {
                detect_pairs: self.objectives.ap,
                config: MaskingConfig {
                    ratio: self.mask_ratio,
                    max_pairs: self.max_pairs,
                },
            }
        }
    }

    /// Loss terms; random-token masking trains the token head alone.
    pub fn loss_terms(&self) -> Objectives {
        let set = self.objectives;
        if set.random {
            return Objectives::SW;
        }
        Objectives {
            sw: set.sw,
            wp: set.wp,
            ap: set.ap.then_some(match self.ap_loss {
                ApMode::MultiLabel(l) => PairObjective::MultiLabel(l),
                ApMode::Independent => PairObjective::Independent,
            }),
        }
    }

    pub fn encoder(&self, vocab_size: usize) -> Result<EncoderConfig> {
        let mut c = EncoderConfig::preset(&self.preset, vocab_size).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset {:?} (expected toy, base or large)",
                self.preset
            ))
        })?;
        c.n_layers = self.n_layers.unwrap_or(c.n_layers);
        c.hidden_dim = self.hidden_dim.unwrap_or(c.hidden_dim);
        c.n_heads = self.n_heads.unwrap_or(c.n_heads);
        c.ffn_dim = self.ffn_dim.unwrap_or(c.ffn_dim);
        c.max_seq_len = self.max_seq_len.unwrap_or(c.max_seq_len);
        c.dropout_rate = self.dropout.unwrap_or(c.dropout_rate);
        c.init_std = self.init_std.unwrap_or(c.init_std);
        c.tie_output = self.tie_output;
        c.ap_input = self.ap_input;
        c.validate()?;
        Ok(c)
    }

    /// Longest raw sentence that still fits with `[CLS]` prepended.
    pub fn max_sentence_len(&self) -> Result<usize> {
        let preset = EncoderConfig::preset(&self.preset, 0)
            .ok_or_else(|| Error::Config(format!("unknown preset {:?}", self.preset)))?;
        let len = self.max_seq_len.unwrap_or(preset.max_seq_len);
        if len < 2 {
            return Err(Error::Config("max_seq_len must be at least 2".into()));
        }
        Ok(len - 1)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    /// Seeds of the median-of-n protocol.
    pub fn finetune_seeds(&self) -> Vec<u64> {
        (0..self.median_of.max(1) as u64).map(|k| self.seed + k).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("lr", "0.001").unwrap();
        c.set("objectives", "sw,wp").unwrap();
        c.set("n_layers", "4").unwrap();
        c.set("ap-loss", "independent").unwrap();
        c.set("corpus", "data/x.txt").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text("pretrain"), Path::new("c")).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::KEYS.len(), c.entries().len());
    }

    #[test]
    fn precedence_is_cli_then_file_then_default() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "epochs = 7\nlr = 0.01 # desk scale\n\n").unwrap();
        let c = RunConfig::resolve(RunConfig::default(), Some(&file), &[("epochs".into(), "9".into())]).unwrap();
        assert_eq!((c.epochs, c.lr, c.batch_size), (9, 0.01, 32));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("warmup", "3"), Err(Error::Config(_))));
        assert!(c.set("epochs", "three").is_err());
        assert!(c.set("objectives", "random,sw").is_err());
        assert!(c.set("objectives", "").is_err());
        let err = c.apply_text("seed = 1\nbogus = 2\n", Path::new("f")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("f:2:"), "{err}");
    }

    #[test]
    fn objectives_drive_masking_and_losses() {
        let mut c = RunConfig::default();
        assert!(matches!(
            c.masking(),
            MaskingStrategy::Sentiment { detect_pairs: true, .. }
        ));
        c.set("objectives", "sw").unwrap();
        assert!(matches!(
            c.masking(),
            MaskingStrategy::Sentiment {
                detect_pairs: false,
                ..
            }
        ));
        assert_eq!(c.loss_terms(), Objectives::SW);
        c.set("objectives", "random").unwrap();
        assert!(matches!(c.masking(), MaskingStrategy::RandomToken { .. }));
    }

    #[test]
    fn encoder_overrides_apply_to_preset() {
        let mut c = RunConfig::default();
        c.set("hidden_dim", "32").unwrap();
        c.set("max_seq_len", "20").unwrap();
        let e = c.encoder(50).unwrap();
        assert_eq!((e.hidden_dim, e.n_layers, e.max_seq_len), (32, 2, 20));
        assert_eq!(c.max_sentence_len().unwrap(), 19);
        c.set("n_heads", "5").unwrap();
        assert!(c.encoder(50).is_err());
    }
}
