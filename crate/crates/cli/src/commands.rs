//! Command implementations. Every command reads declared inputs, writes
//! its outputs atomically under the work directory and records a run
//! manifest in `manifests/<command>.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use jargon::checkpoint::{load_bundle, load_encoder, save_bundle, save_encoder};
use jargon::corpus::{clean_sentence, ingest_corpus, read_store, word_tokens, write_store, SentenceRecord};
use jargon::detect::{detect_word, score_corpus, write_ranking, Target};
use jargon::encoder::{pretrain_domain, Encoder, Provenance};
use jargon::evalkit::{
    baseline_word2vec, cohens_kappa, evaluate, read_annotations, EvalResult, ListPredictor, MlmPredictor,
};
use jargon::model::{train, ModelBundle};
use jargon::supervision::{build_dataset, split_pools, LabeledDataset, SeedTermList};
use jargon::synth::{generate, SynthConfig};
use jargon::tagger::{LexiconTagger, PosTagger, RuleTagger};
use jargon::tokenizer::{Tokenizer, WordLevelTokenizer};
use jargon::util::{sha256_file, write_atomic, write_json};

use crate::config::{ConfigError, Profile, RunConfig};

pub const SENTENCES: &str = "sentences.jsonl";
pub const CORPUS_STATS: &str = "corpus_stats.json";
pub const DATASET: &str = "dataset.jsonl";
pub const DATASET_COUNTS: &str = "dataset_counts.json";
pub const ENCODER_DIR: &str = "encoder";
pub const PRETRAIN_REPORT: &str = "pretrain_report.json";
pub const MODEL_DIR: &str = "model";
pub const TRAIN_HISTORY: &str = "train_history.json";
pub const RANKING: &str = "ranking.jsonl";
pub const JARGON_LIST: &str = "jargon_list.txt";
pub const METRICS: &str = "metrics.json";
pub const WORD2VEC_LIST: &str = "baseline_word2vec.txt";

/// Marks a missing or unreadable input (exit code 3).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Serialize)]
struct InputRecord {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    config: &'a RunConfig,
    inputs: Vec<InputRecord>,
    outputs: Vec<PathBuf>,
    started_unix: u64,
    seconds: f64,
}

/// Tracks inputs and outputs of one command run.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    command: &'a str,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
    started_unix: u64,
}

impl<'a> Run<'a> {
    pub fn new(command: &'a str, cfg: &'a RunConfig) -> Self {
        Run {
            cfg,
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    fn work(&self, name: &str) -> PathBuf {
        self.cfg.paths.workdir.join(name)
    }

    /// Register an input that must exist.
    fn input(&mut self, path: &Path) -> Result<PathBuf> {
        if !path.exists() {
            bail!(InputError(format!("input {} does not exist", path.display())));
        }
        self.inputs.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    fn output(&mut self, path: PathBuf) -> PathBuf {
        self.outputs.push(path.clone());
        path
    }

    pub fn finish(self) -> Result<()> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            for f in files_under(p)? {
                inputs.push(InputRecord {
                    sha256: sha256_file(&f)?,
                    path: f,
                });
            }
        }
        let manifest = Manifest {
            command: self.command,
            config_hash: self.cfg.hash(),
            config: self.cfg,
            inputs,
            outputs: self.outputs.iter().flat_map(|p| files_under(p).unwrap_or_default()).collect(),
            started_unix: self.started_unix,
            seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.cfg.paths.workdir.join("manifests").join(format!("{}.json", self.command));
        write_json(&path, &manifest)?;
        Ok(())
    }
}

fn files_under(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for e in entries {
        out.extend(files_under(&e)?);
    }
    Ok(out)
}

fn required<'p>(value: &'p Option<PathBuf>, key: &str) -> Result<&'p PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!(ConfigError(format!("{key} is not set"))))
}

fn tagger(run: &mut Run) -> Result<Box<dyn PosTagger>> {
    match run.cfg.paths.lexicon.clone() {
        Some(p) => {
            let p = run.input(&p)?;
            Ok(Box::new(LexiconTagger::from_file(&p)?))
        }
        None => Ok(Box::new(RuleTagger::new())),
    }
}

fn seeds(run: &mut Run) -> Result<SeedTermList> {
    let p = required(&run.cfg.paths.seeds, "paths.seeds")?.clone();
    let p = run.input(&p)?;
    Ok(SeedTermList::from_file(&p)?)
}

fn store(run: &mut Run) -> Result<Vec<SentenceRecord>> {
    let p = run.work(SENTENCES);
    let p = run.input(&p)?;
    Ok(read_store(&p)?)
}

/// Tokenizer used before any encoder exists: the pretrained checkpoint's
/// own, or an empty word-level one (one subword per word) for scratch runs.
fn ingest_tokenizer(run: &mut Run) -> Result<Tokenizer> {
    match run.cfg.encoder.profile {
        Profile::ScratchTiny => Ok(Tokenizer::WordLevel(WordLevelTokenizer::empty())),
        Profile::Pretrained => {
            let p = required(&run.cfg.encoder.path, "encoder.path")?.clone();
            let p = run.input(&p)?;
            Ok(load_encoder(&p)?.1)
        }
    }
}

/// Starting encoder before domain pretraining.
fn initial_encoder(run: &mut Run, store: &[SentenceRecord]) -> Result<(Encoder, Tokenizer)> {
    match run.cfg.encoder.profile {
        Profile::ScratchTiny => {
            let tok = WordLevelTokenizer::from_words(
                store.iter().flat_map(|s| s.words.iter()),
                run.cfg.encoder.vocab_min_count,
            );
            let enc = Encoder::new(run.cfg.encoder.scratch_config(jargon::tokenizer::SubwordTokenizer::vocab_size(&tok)), run.cfg.rng_seed)?;
            Ok((enc, Tokenizer::WordLevel(tok)))
        }
        Profile::Pretrained => {
            let p = required(&run.cfg.encoder.path, "encoder.path")?.clone();
            let p = run.input(&p)?;
            let (mut enc, tok) = load_encoder(&p)?;
            if enc.provenance == Provenance::Scratch {
                enc.provenance = Provenance::PretrainedGeneric;
            }
            Ok((enc, tok))
        }
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::new("ingest", cfg);
    let corpus = required(&cfg.paths.corpus, "paths.corpus")?.clone();
    let corpus = run.input(&corpus)?;
    let tok = ingest_tokenizer(&mut run)?;
    let (store, stats) = ingest_corpus(&corpus, &cfg.filter, &tok)?;
    if store.is_empty() {
        log::warn!("no sentence survived the filter");
    }
    write_store(&run.output(run.work(SENTENCES)), &store)?;
    write_json(&run.output(run.work(CORPUS_STATS)), &stats)?;
    log::info!("{} posts, {} sentences, {} kept", stats.posts, stats.sentences, stats.sentences_filtered);
    run.finish()
}

pub fn build(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::new("build-dataset", cfg);
    let store = store(&mut run)?;
    let seeds = seeds(&mut run)?;
    let tagger = tagger(&mut run)?;
    let pools = split_pools(&store, &seeds);
    let ds = build_dataset(&pools, &cfg.sampling, tagger.as_ref())?;
    let (d, c) = (run.output(run.work(DATASET)), run.output(run.work(DATASET_COUNTS)));
    ds.write(&d, &c)?;
    log::info!("dataset counts: {:?}", ds.counts);
    run.finish()
}

pub fn pretrain(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::new("pretrain", cfg);
    let store = store(&mut run)?;
    let (enc, tok) = initial_encoder(&mut run, &store)?;
    let mut pcfg = cfg.pretrain;
    if cfg.ablation.no_pretrain {
        pcfg.epochs = 0;
    }
    let (adapted, report) = pretrain_domain(&enc, &tok, &store, &pcfg)?;
    save_encoder(&run.output(run.work(ENCODER_DIR)), &adapted, &tok)?;
    write_json(&run.output(run.work(PRETRAIN_REPORT)), &report)?;
    run.finish()
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::new("train", cfg);
    let dataset_path = run.work(DATASET);
    let dataset_path = run.input(&dataset_path)?;
    let dataset = LabeledDataset::read(&dataset_path)?;
    let (enc, tok) = if cfg.ablation.no_pretrain {
        let store = store(&mut run)?;
        initial_encoder(&mut run, &store)?
    } else {
        let dir = run.work(ENCODER_DIR);
        if !dir.exists() {
            bail!(InputError(format!(
                "{} is missing; run `pretrain` first or set ablation.no_pretrain",
                dir.display()
            )));
        }
        let dir = run.input(&dir)?;
        load_encoder(&dir)?
    };
    let bundle = ModelBundle::new(tok, enc, cfg.heads, cfg.rng_seed)?;
    let (trained, history) = train(&bundle, &dataset, &cfg.train)?;
    save_bundle(&run.output(run.work(MODEL_DIR)), &trained)?;
    write_json(&run.output(run.work(TRAIN_HISTORY)), &history)?;
    log::info!("best epoch {}, alpha {:.4}", history.best_epoch, trained.alpha());
    run.finish()
}

fn bundle(run: &mut Run, model: Option<&Path>) -> Result<ModelBundle> {
    let dir = match model {
        Some(p) => p.to_path_buf(),
        None => run.work(MODEL_DIR),
    };
    let dir = run.input(&dir)?;
    Ok(load_bundle(&dir)?)
}

pub fn detect(cfg: &RunConfig, sentence: &str, word: &str, model: Option<&Path>) -> Result<()> {
    let mut run = Run::new("detect", cfg);
    let bundle = bundle(&mut run, model)?;
    let words = word_tokens(&clean_sentence(sentence, cfg.filter.max_word_chars));
    let record = SentenceRecord::new("cli#0", "cli", words);
    let det = detect_word(&bundle, &record, &Target::Word(word.to_string()), &cfg.filter)?;
    println!("{}", serde_json::to_string(&det)?);
    run.finish()
}

pub fn extract(cfg: &RunConfig, model: Option<&Path>) -> Result<()> {
    let mut run = Run::new("extract-list", cfg);
    let bundle = bundle(&mut run, model)?;
    let store = store(&mut run)?;
    let tagger = tagger(&mut run)?;
    let scores = score_corpus(&bundle, &store, &cfg.score, tagger.as_ref())?;
    let (j, l) = (run.output(run.work(RANKING)), run.output(run.work(JARGON_LIST)));
    write_ranking(&j, &l, &scores)?;
    run.finish()
}

pub enum EvalPredictor {
    Model(Option<PathBuf>),
    List(PathBuf),
    Mlm(usize),
}

pub fn evaluate_cmd(cfg: &RunConfig, annotations: &Path, predictor: EvalPredictor, output: Option<&Path>) -> Result<()> {
    let mut run = Run::new("evaluate", cfg);
    let ann = run.input(annotations)?;
    let data = read_annotations(&ann)?;
    let tagger = tagger(&mut run)?;
    let threshold = cfg.evaluate.threshold;
    let result: EvalResult = match predictor {
        EvalPredictor::Model(m) => {
            let b = bundle(&mut run, m.as_deref())?;
            evaluate(&b, &data, threshold, tagger.as_ref())?
        }
        EvalPredictor::List(p) => {
            let p = run.input(&p)?;
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let list = ListPredictor::new(text.lines().map(str::trim).filter(|l| !l.is_empty()));
            evaluate(&list, &data, threshold, tagger.as_ref())?
        }
        EvalPredictor::Mlm(k) => {
            let seeds = seeds(&mut run)?;
            let dir = run.work(ENCODER_DIR);
            let dir = run.input(&dir)?;
            let (enc, tok) = load_encoder(&dir)?;
            let mlm = MlmPredictor::new(&enc, &tok, &seeds, k);
            evaluate(&mlm, &data, threshold, tagger.as_ref())?
        }
    };
    let out = match output {
        Some(p) => p.to_path_buf(),
        None => run.work(METRICS),
    };
    write_json(&run.output(out), &result)?;
    println!("{}", serde_json::to_string(&result)?);
    run.finish()
}

fn read_labels(path: &Path) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| match l {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            _ => bail!(InputError(format!("{}:{}: expected 0 or 1, got {l:?}", path.display(), i + 1))),
        })
        .collect()
}

pub fn kappa(cfg: &RunConfig, a: &Path, b: &Path, output: Option<&Path>) -> Result<()> {
    let mut run = Run::new("kappa", cfg);
    let (a, b) = (run.input(a)?, run.input(b)?);
    let (la, lb) = (read_labels(&a)?, read_labels(&b)?);
    let k = cohens_kappa(&la, &lb)?;
    let value = serde_json::json!({ "kappa": k, "n": la.len() });
    if let Some(o) = output {
        write_json(&run.output(o.to_path_buf()), &value)?;
    }
    println!("{value}");
    run.finish()
}

pub fn baseline_word2vec_cmd(cfg: &RunConfig) -> Result<()> {
    let mut run = Run::new("baseline", cfg);
    let store = store(&mut run)?;
    let seeds = seeds(&mut run)?;
    let list = baseline_word2vec(&store, &seeds, &cfg.baseline.word2vec)?;
    let mut text = list.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_atomic(&run.output(run.work(WORD2VEC_LIST)), text.as_bytes())?;
    run.finish()
}

pub fn synth(cfg: &RunConfig, out: &Path, synth: &SynthConfig) -> Result<()> {
    let mut run = Run::new("synth", cfg);
    let corpus = generate(synth)?;
    corpus.write(out)?;
    run.output(out.to_path_buf());
    run.finish()
}
