//! Run configuration: one TOML or JSON file, then `--set key=value`
//! overrides, then dedicated flags. Later sources win.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use jargon::corpus::FilterConfig;
use jargon::detect::ScoreConfig;
use jargon::encoder::{EncoderConfig, PretrainConfig};
use jargon::evalkit::Word2VecBaselineConfig;
use jargon::model::{HeadConfig, TrainConfig};
use jargon::supervision::SamplingConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub workdir: PathBuf,
    /// word<TAB>tag lexicon exported from an external POS tagger.
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    #[default]
    ScratchTiny,
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub profile: Profile,
    /// Encoder checkpoint directory for the `pretrained` profile.
    pub path: Option<PathBuf>,
    /// Minimum corpus count for a word to enter the scratch vocabulary.
    pub vocab_min_count: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let t = EncoderConfig::scratch_tiny(0);
        EncoderSettings {
            profile: Profile::ScratchTiny,
            path: None,
            vocab_min_count: 1,
            dim: t.dim,
            layers: t.layers,
            heads: t.heads,
            ffn_dim: t.ffn_dim,
            max_len: t.max_len,
            dropout: t.dropout,
        }
    }
}

impl EncoderSettings {
    pub fn scratch_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            dim: self.dim,
            layers: self.layers,
            heads: self.heads,
            ffn_dim: self.ffn_dim,
            max_len: self.max_len,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub no_word_head: bool,
    pub no_pretrain: bool,
    pub no_neg_stms: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub word2vec: Word2VecBaselineConfig,
    pub mlm_k: usize,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        BaselineSettings {
            word2vec: Word2VecBaselineConfig::default(),
            mlm_k: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds every stage; per-stage seed keys are overwritten from it.
    pub rng_seed: u64,
    pub paths: Paths,
    pub filter: FilterConfig,
    pub sampling: SamplingConfig,
    pub encoder: EncoderSettings,
    pub pretrain: PretrainConfig,
    pub heads: HeadConfig,
    pub train: TrainConfig,
    pub score: ScoreConfig,
    pub evaluate: EvalSettings,
    pub baseline: BaselineSettings,
    pub ablation: Ablation,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rng_seed: 42,
            paths: Paths {
                workdir: PathBuf::from("work"),
                ..Paths::default()
            },
            filter: FilterConfig::default(),
            sampling: SamplingConfig::default(),
            encoder: EncoderSettings::default(),
            pretrain: PretrainConfig::default(),
            heads: HeadConfig::default(),
            train: TrainConfig::default(),
            score: ScoreConfig::default(),
            evaluate: EvalSettings::default(),
            baseline: BaselineSettings::default(),
            ablation: Ablation::default(),
        }
    }
}

/// Long help text listing every configuration key.
pub const KEY_HELP: &str = "\
CONFIGURATION KEYS (TOML or JSON file via --config; override with --set key=value)
  rng_seed                      global seed for sampling, initialization and training [42]
  paths.corpus                  raw posts, JSONL {\"id\", \"text\"}
  paths.seeds                   seed-term list, one term per line
  paths.workdir                 directory for all artifacts [work]
  paths.lexicon                 word<TAB>tag POS lexicon; rule tagger when absent
  filter.max_subword_tokens     longest kept sentence incl. start/end tokens [128]
  filter.min_words              shortest kept sentence in words [6]
  filter.max_word_chars         longer tokens are dropped as noise [16]
  sampling.r_stms               negatives per seed-mentioning sentence [5]
  sampling.r_nonstms            other-sentence negatives per positive [2.0]
  sampling.valid_fraction       stratified validation share [0.2]
  encoder.profile               scratch-tiny | pretrained [scratch-tiny]
  encoder.path                  encoder checkpoint directory (pretrained profile)
  encoder.vocab_min_count       scratch vocabulary cutoff [1]
  encoder.dim / layers / heads / ffn_dim / max_len / dropout   scratch shape [64/2/4/128/128/0.1]
  pretrain.max_seq              masked-LM sequence cap [512]
  pretrain.epochs               masked-LM epochs [3]
  pretrain.valid_pct            held-out percent for masked-LM loss [10]
  pretrain.batch_size / learning_rate / warmup_ratio / mask_prob   [32/5e-5/0.0/0.15]
  heads.word_dropout            dropout in the word-attribute head [0.1]
  heads.alpha_lo / alpha_hi     range of the ensemble weight [0.9/0.99]
  train.batch_size              [32]
  train.learning_rate           [1e-5]
  train.warmup_ratio            [0.1]
  train.max_epochs              [10]
  train.early_stop_patience     epochs without validation improvement [2]
  train.weight_decay            decoupled weight decay [0.01]
  score.n                       exponent on the positive ratio [2]
  score.top_k                   length of the extracted list [100]
  score.min_occurrences         drop words predicted fewer times [1]
  evaluate.threshold            decision threshold [0.5]
  baseline.mlm_k                top-K cutoff of the masked-LM baseline [50]
  baseline.word2vec.per_seed    neighbors kept per seed [25]
  baseline.word2vec.model.*     min_count/vector_size/window/epochs/negative/sample [10/100/10/10/5/1e-3]
  ablation.no_word_head         context head only (ensemble weight fixed at 1)
  ablation.no_pretrain          skip domain pretraining
  ablation.no_neg_stms          no negatives from seed-mentioning sentences

EXIT CODES
  0 success, 2 configuration error, 3 input error, 4 runtime failure";

/// Marker for errors that should exit with the configuration code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(ConfigError(msg.into()))
}

impl RunConfig {
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut value = match path {
            None => toml::Value::try_from(RunConfig::default()).context("serializing defaults")?,
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                let is_json = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
                if is_json {
                    let json: serde_json::Value =
                        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                    toml::Value::try_from(json).map_err(|e| config_err(format!("{}: {e}", p.display())))?
                } else {
                    text.parse::<toml::Table>()
                        .map(toml::Value::Table)
                        .map_err(|e| config_err(format!("{}: {e}", p.display())))?
                }
            }
        };
        for s in sets {
            apply_set(&mut value, s)?;
        }
        let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        Ok(cfg)
    }

    /// Propagate the global seed and check every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.sampling.rng_seed = self.rng_seed;
        self.pretrain.seed = self.rng_seed;
        self.train.seed = self.rng_seed;
        self.baseline.word2vec.model.seed = self.rng_seed;
        if self.ablation.no_neg_stms {
            self.sampling.r_stms = 0;
        }
        if self.ablation.no_word_head {
            self.heads.use_word_head = false;
        }
        let checks: [(&str, jargon::Result<()>); 4] = [
            ("filter", self.filter.validate()),
            ("sampling", self.sampling.validate()),
            ("heads", self.heads.validate()),
            ("train", self.train.validate()),
        ];
        for (section, r) in checks {
            r.map_err(|e| config_err(format!("[{section}] {e}")))?;
        }
        if self.encoder.profile == Profile::Pretrained && self.encoder.path.is_none() {
            bail!(ConfigError("encoder.profile = pretrained requires encoder.path".into()));
        }
        if !(0.0..=1.0).contains(&self.evaluate.threshold) {
            bail!(ConfigError("evaluate.threshold must lie in [0, 1]".into()));
        }
        Ok(self)
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        jargon::util::sha256_hex(&json)
    }
}

/// Apply one `a.b.c=value` override. The value is parsed as a TOML value
/// and falls back to a plain string.
fn apply_set(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("--set expects key=value, got {assignment:?}")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| config_err(format!("{key}: {part} is not a section")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(config_err(format!("empty key in {assignment:?}")))
}
