//! Context-only and word-attribute classifier heads, their learnable
//! ensemble, training and prediction.
//!
//! Vectors are rows here, so the context head computes
//! `p_c = sigmoid(tanh(h_cls W1 + b1) W2)` and the word head
//! `p_w = sigmoid(Dropout(tanh(LN(e W3 + b3))) W4)`.

use std::ops::Range;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{wrap_sentence, Encoder};
use crate::error::{Error, Result};
use crate::nn::{bce, linear_schedule, randn, sigmoid, AdamW, AdamWConfig, Mat, ParamSet, Tape, Var};
use crate::supervision::{LabeledDataset, LabeledSample, Span, Split};
use crate::tokenizer::{SubwordTokenizer, Tokenizer};
use crate::util::keyed_rng;

pub const W1: usize = 0;
pub const B1: usize = 1;
pub const W2: usize = 2;
pub const W3: usize = 3;
pub const B3: usize = 4;
pub const LN_G: usize = 5;
pub const LN_B: usize = 6;
pub const W4: usize = 7;
pub const RAW_ALPHA: usize = 8;

/// Keeps `sigmoid(raw_alpha)` strictly inside (0, 1) in f64.
const RAW_ALPHA_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub word_dropout: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// `false` drops the word head from loss and prediction (alpha pinned to 1).
    pub use_word_head: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            word_dropout: 0.1,
            alpha_lo: 0.9,
            alpha_hi: 0.99,
            use_word_head: true,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.word_dropout) {
            return Err(Error::Config("word_dropout must lie in [0, 1)".into()));
        }
        if !(0.0 < self.alpha_lo && self.alpha_lo < self.alpha_hi && self.alpha_hi <= 1.0) {
            return Err(Error::Config("alpha range must satisfy 0 < lo < hi <= 1".into()));
        }
        Ok(())
    }
}

/// Head parameters in a fixed order; see the index constants above.
pub fn init_heads(dim: usize, seed: u64) -> ParamSet {
    let mut rng = keyed_rng(seed, "heads");
    let std = 0.02;
    let mut p = ParamSet::new();
    p.add("ctx.w1", randn(&mut rng, dim, dim, std), true);
    p.add("ctx.b1", Mat::zeros((1, dim)), false);
    p.add("ctx.w2", randn(&mut rng, dim, 1, std), true);
    p.add("word.w3", randn(&mut rng, dim, dim, std), true);
    p.add("word.b3", Mat::zeros((1, dim)), false);
    p.add("word.ln_g", Mat::ones((1, dim)), false);
    p.add("word.ln_b", Mat::zeros((1, dim)), false);
    p.add("word.w4", randn(&mut rng, dim, 1, std), true);
    p.add("alpha.raw", Mat::zeros((1, 1)), false);
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_c: f64,
    pub p_w: f64,
    pub p: f64,
    pub decision: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l_c: f64,
    pub l_w: f64,
    pub l: f64,
}

/// Mean BCE of each head and their alpha-weighted sum, on plain numbers.
pub fn compute_loss(batch: &[(f64, f64, f64)], alpha: f64) -> LossParts {
    if batch.is_empty() {
        return LossParts { l_c: 0.0, l_w: 0.0, l: 0.0 };
    }
    let n = batch.len() as f64;
    let l_c = batch.iter().map(|&(pc, _, y)| bce(pc, y)).sum::<f64>() / n;
    let l_w = batch.iter().map(|&(_, pw, y)| bce(pw, y)).sum::<f64>() / n;
    LossParts {
        l_c,
        l_w,
        l: alpha * l_c + (1.0 - alpha) * l_w,
    }
}

/// (context encoder grads, head grads)
type Grads = (Vec<Mat>, Vec<Mat>);

/// Both encoder copies, the heads and the tokenizer.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub tokenizer: Tokenizer,
    /// Trainable encoder feeding the context head.
    pub context_encoder: Encoder,
    /// Frozen encoder producing target-word embeddings.
    pub word_encoder: Encoder,
    pub heads: ParamSet,
    pub config: HeadConfig,
}

/// A (words, span) pair prepared for both paths.
#[derive(Debug, Clone)]
struct Prepared {
    masked: Vec<u32>,
    e_word: Vec<f64>,
    target: f64,
}

impl ModelBundle {
    /// Both paths start from the same encoder checkpoint.
    pub fn new(tokenizer: Tokenizer, encoder: Encoder, config: HeadConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if tokenizer.vocab_size() != encoder.config.vocab_size {
            return Err(Error::DimensionMismatch {
                expected: encoder.config.vocab_size,
                got: tokenizer.vocab_size(),
            });
        }
        let heads = init_heads(encoder.dim(), seed);
        Ok(ModelBundle {
            tokenizer,
            context_encoder: encoder.clone(),
            word_encoder: encoder,
            heads,
            config,
        })
    }

    pub fn dim(&self) -> usize {
        self.context_encoder.dim()
    }

    /// Effective ensemble weight of the context head.
    pub fn alpha(&self) -> f64 {
        if !self.config.use_word_head {
            return 1.0;
        }
        let raw = self.heads.get(RAW_ALPHA).value[[0, 0]];
        self.config.alpha_lo + (self.config.alpha_hi - self.config.alpha_lo) * sigmoid(raw)
    }

    pub fn set_raw_alpha(&mut self, raw: f64) {
        self.heads.get_mut(RAW_ALPHA).value[[0, 0]] = raw.clamp(-RAW_ALPHA_LIMIT, RAW_ALPHA_LIMIT);
    }

    /// Start token, context before the span, one MASK, context after, end token.
    pub fn mask_target(&self, words: &[String], span: Span) -> Result<Vec<u32>> {
        mask_target(words, span, &self.tokenizer)
    }

    /// p_c for one masked sequence. Training mode applies encoder dropout.
    pub fn forward_context(&self, masked: &[u32], dropout: Option<&mut ChaCha8Rng>) -> Result<f64> {
        let mut tape = Tape::new();
        let ev = self.context_encoder.params().bind(&mut tape);
        let hv = self.heads.bind(&mut tape);
        let pc = self.context_probs(&mut tape, &ev, &hv, &[masked.to_vec()], dropout)?;
        Ok(tape.value(pc)[[0, 0]])
    }

    /// Mean of the frozen encoder's final-layer states over the target's
    /// subwords, computed on the unmasked sentence.
    pub fn embed_target(&self, words: &[String], span: Span) -> Result<Vec<f64>> {
        check_span(words, span)?;
        let (ids, spans) = wrap_sentence(&self.tokenizer, words);
        let states = self.word_encoder.encode(&ids)?;
        let rows = subword_range(&spans, span);
        let n = rows.len() as f64;
        let mut e = vec![0.0; self.dim()];
        for r in rows {
            for (acc, v) in e.iter_mut().zip(states.row(r)) {
                *acc += v / n;
            }
        }
        Ok(e)
    }

    /// p_w for one target embedding.
    pub fn forward_word(&self, e_word: &[f64], dropout: Option<&mut ChaCha8Rng>) -> Result<f64> {
        if e_word.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: e_word.len(),
            });
        }
        let mut tape = Tape::new();
        let hv = self.heads.bind(&mut tape);
        let e = Array2::from_shape_vec((1, e_word.len()), e_word.to_vec()).expect("shape");
        let pw = self.word_probs(&mut tape, &hv, e, dropout);
        Ok(tape.value(pw)[[0, 0]])
    }

    pub fn predict(&self, words: &[String], span: Span) -> Result<Prediction> {
        Ok(self.predict_batch(&[(words, span)])?.remove(0))
    }

    /// Eval-mode predictions, batched through the context encoder.
    pub fn predict_batch(&self, items: &[(&[String], Span)]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(32) {
            let prepared = chunk
                .iter()
                .map(|(w, s)| self.prepare(w, *s, 0.0))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Prepared> = prepared.iter().collect();
            let mut tape = Tape::new();
            let (pc, pw) = self.forward_batch(&mut tape, &refs, None)?;
            let alpha = self.alpha();
            for i in 0..chunk.len() {
                let (p_c, p_w) = (tape.value(pc)[[i, 0]], tape.value(pw)[[i, 0]]);
                let p = alpha * p_c + (1.0 - alpha) * p_w;
                out.push(Prediction {
                    p_c,
                    p_w,
                    p,
                    decision: p >= 0.5,
                });
            }
        }
        Ok(out)
    }

    /// Eval-mode ensemble loss over `(words, span, target)` triples with the
    /// gradient of every head parameter, indexed like `heads`.
    pub fn head_loss_and_grads(&self, batch: &[(&[String], Span, f64)]) -> Result<(LossParts, Vec<Mat>)> {
        let prepared = self.prepare_all(batch)?;
        let refs: Vec<&Prepared> = prepared.iter().collect();
        let (parts, grads) = self.batch_loss(&refs, None, true)?;
        Ok((parts, grads.map(|(_, hg)| hg).unwrap_or_default()))
    }

    /// Eval-mode ensemble loss over `(words, span, target)` triples.
    pub fn loss(&self, batch: &[(&[String], Span, f64)]) -> Result<LossParts> {
        let prepared = self.prepare_all(batch)?;
        let refs: Vec<&Prepared> = prepared.iter().collect();
        Ok(self.batch_loss(&refs, None, false)?.0)
    }

    fn prepare_all(&self, batch: &[(&[String], Span, f64)]) -> Result<Vec<Prepared>> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        batch.iter().map(|(w, s, y)| self.prepare(w, *s, *y)).collect()
    }

    fn prepare(&self, words: &[String], span: Span, target: f64) -> Result<Prepared> {
        Ok(Prepared {
            masked: self.mask_target(words, span)?,
            e_word: self.embed_target(words, span)?,
            target,
        })
    }

    fn context_probs(
        &self,
        tape: &mut Tape,
        ev: &[Var],
        hv: &[Var],
        seqs: &[Vec<u32>],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let hidden = self.context_encoder.forward(tape, ev, seqs, dropout)?;
        let cls = tape.gather_rows(hidden.states, &hidden.offsets);
        let z = tape.matmul(cls, hv[W1]);
        let z = tape.add_row(z, hv[B1]);
        let pooled = tape.tanh(z);
        let logit = tape.matmul(pooled, hv[W2]);
        Ok(tape.sigmoid(logit))
    }

    fn word_probs(&self, tape: &mut Tape, hv: &[Var], e: Mat, dropout: Option<&mut ChaCha8Rng>) -> Var {
        let e = tape.leaf(e);
        let z = tape.matmul(e, hv[W3]);
        let z = tape.add_row(z, hv[B3]);
        let z = tape.layer_norm(z, hv[LN_G], hv[LN_B]);
        let mut o = tape.tanh(z);
        if let Some(rng) = dropout {
            o = tape.dropout(o, self.config.word_dropout, rng);
        }
        let logit = tape.matmul(o, hv[W4]);
        tape.sigmoid(logit)
    }

    /// (p_c, p_w) columns for a batch. One RNG drives both dropouts.
    fn forward_batch(
        &self,
        tape: &mut Tape,
        batch: &[&Prepared],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, Var)> {
        let ev = self.context_encoder.params().bind(tape);
        let hv = self.heads.bind(tape);
        let seqs: Vec<Vec<u32>> = batch.iter().map(|b| b.masked.clone()).collect();
        let pc = self.context_probs(tape, &ev, &hv, &seqs, dropout.as_deref_mut())?;
        let e = Array2::from_shape_fn((batch.len(), self.dim()), |(i, j)| batch[i].e_word[j]);
        let pw = self.word_probs(tape, &hv, e, dropout);
        Ok((pc, pw))
    }

    /// Ensemble loss for a batch with gradients for the context encoder and
    /// the heads.
    fn batch_loss(
        &self,
        batch: &[&Prepared],
        dropout: Option<&mut ChaCha8Rng>,
        backward: bool,
    ) -> Result<(LossParts, Option<Grads>)> {
        let mut tape = Tape::new();
        let ev = self.context_encoder.params().bind(&mut tape);
        let hv = self.heads.bind(&mut tape);
        let seqs: Vec<Vec<u32>> = batch.iter().map(|b| b.masked.clone()).collect();
        let targets: Vec<f64> = batch.iter().map(|b| b.target).collect();
        let mut dropout = dropout;
        let pc = self.context_probs(&mut tape, &ev, &hv, &seqs, dropout.as_deref_mut())?;
        let e = Array2::from_shape_fn((batch.len(), self.dim()), |(i, j)| batch[i].e_word[j]);
        let pw = self.word_probs(&mut tape, &hv, e, dropout);
        let lc = tape.bce_mean(pc, &targets);
        let lw = tape.bce_mean(pw, &targets);
        let loss = if self.config.use_word_head {
            let (lo, hi) = (self.config.alpha_lo, self.config.alpha_hi);
            let s = tape.sigmoid(hv[RAW_ALPHA]);
            let s = tape.scale(s, hi - lo);
            let alpha = tape.add_scalar(s, lo);
            let neg = tape.scale(alpha, -1.0);
            let one_minus = tape.add_scalar(neg, 1.0);
            let a = tape.mul(alpha, lc);
            let b = tape.mul(one_minus, lw);
            tape.add(a, b)
        } else {
            lc
        };
        let parts = LossParts {
            l_c: tape.scalar(lc),
            l_w: tape.scalar(lw),
            l: tape.scalar(loss),
        };
        if !backward {
            return Ok((parts, None));
        }
        tape.backward(loss);
        let eg = self.context_encoder.params().grads(&tape, &ev);
        let hg = self.heads.grads(&tape, &hv);
        Ok((parts, Some((eg, hg))))
    }

    fn mean_loss(&self, data: &[Prepared], batch_size: usize) -> Result<LossParts> {
        let mut acc = LossParts { l_c: 0.0, l_w: 0.0, l: 0.0 };
        if data.is_empty() {
            return Ok(acc);
        }
        for chunk in data.chunks(batch_size.max(1)) {
            let refs: Vec<&Prepared> = chunk.iter().collect();
            let (p, _) = self.batch_loss(&refs, None, false)?;
            let w = chunk.len() as f64;
            acc.l_c += p.l_c * w;
            acc.l_w += p.l_w * w;
            acc.l += p.l * w;
        }
        let n = data.len() as f64;
        acc.l_c /= n;
        acc.l_w /= n;
        acc.l /= n;
        Ok(acc)
    }
}

fn check_span(words: &[String], (start, end): Span) -> Result<()> {
    if start >= end || end > words.len() {
        return Err(Error::SpanOutOfRange {
            start,
            end,
            len: words.len(),
        });
    }
    Ok(())
}

fn subword_range(spans: &[Range<usize>], (start, end): Span) -> Range<usize> {
    spans[start].start..spans[end - 1].end
}

/// Standalone form of [`ModelBundle::mask_target`].
pub fn mask_target(words: &[String], span: Span, tokenizer: &dyn SubwordTokenizer) -> Result<Vec<u32>> {
    check_span(words, span)?;
    let mut ids = vec![tokenizer.cls_id()];
    for w in &words[..span.0] {
        ids.extend(tokenizer.tokenize_word(w));
    }
    ids.push(tokenizer.mask_id());
    for w in &words[span.1..] {
        ids.extend(tokenizer.tokenize_word(w));
    }
    ids.push(tokenizer.sep_id());
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-5,
            warmup_ratio: 0.1,
            max_epochs: 10,
            early_stop_patience: 2,
            weight_decay: 0.01,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("batch_size, max_epochs and patience must be positive".into()));
        }
        if self.early_stop_patience >= self.max_epochs {
            return Err(Error::Config("early_stop_patience must be below max_epochs".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) || self.weight_decay < 0.0 {
            return Err(Error::Config("warmup_ratio must lie in [0, 1) and weight_decay be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossParts,
    pub valid: LossParts,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Eval-mode losses before the first update.
    pub initial_train: LossParts,
    pub initial_valid: LossParts,
    pub epochs: Vec<EpochRecord>,
    /// Effective alpha after every optimizer step.
    pub alpha_trace: Vec<f64>,
    /// 1-based epoch of the returned weights; 0 means untrained.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Fingerprint of the word-path encoder before and after training.
    pub frozen_fingerprint: String,
}

/// Minimize the ensemble loss on TRAIN, early-stopping on VALID loss, and
/// return the best-validation bundle. The word-path encoder is never touched.
pub fn train(bundle: &ModelBundle, dataset: &LabeledDataset, cfg: &TrainConfig) -> Result<(ModelBundle, TrainHistory)> {
    cfg.validate()?;
    if dataset.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let prep = |s: &LabeledSample| bundle.prepare(&s.words, s.span(), s.label.target());
    let train_set = dataset.split(Split::Train).map(prep).collect::<Result<Vec<_>>>()?;
    let mut valid_set = dataset.split(Split::Valid).map(prep).collect::<Result<Vec<_>>>()?;
    let positives = train_set.iter().filter(|p| p.target > 0.5).count();
    if positives == 0 || positives == train_set.len() {
        return Err(Error::DegenerateDataset(format!(
            "training split has {positives} positive of {} samples",
            train_set.len()
        )));
    }
    if valid_set.is_empty() {
        log::warn!("no VALID samples; early stopping monitors the training loss");
        valid_set = train_set.clone();
    }

    let frozen_fingerprint = bundle.word_encoder.fingerprint();
    let mut current = bundle.clone();
    let initial_train = current.mean_loss(&train_set, cfg.batch_size)?;
    let initial_valid = current.mean_loss(&valid_set, cfg.batch_size)?;
    log::info!("initial loss: train {:.4} valid {:.4}", initial_train.l, initial_valid.l);
    let mut history = TrainHistory {
        initial_train,
        initial_valid,
        epochs: Vec::new(),
        alpha_trace: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        frozen_fingerprint: frozen_fingerprint.clone(),
    };

    let adam = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut enc_opt = AdamW::new(current.context_encoder.params(), adam);
    let mut head_opt = AdamW::new(&current.heads, adam);
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.max_epochs;
    let warmup = (cfg.warmup_ratio * total as f64).round() as usize;
    let mut dropout_rng = keyed_rng(cfg.seed, "train-dropout");
    let mut best = current.clone();
    let mut best_loss = initial_valid.l;
    let mut since_best = 0;
    let mut step = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut keyed_rng(cfg.seed, &format!("train-epoch:{epoch}")));
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (_, grads) = current.batch_loss(&batch, Some(&mut dropout_rng), true)?;
            let (eg, hg) = grads.expect("gradients requested");
            let lr = linear_schedule(step, warmup, total, cfg.learning_rate);
            enc_opt.step(current.context_encoder.params_mut(), &eg, lr);
            head_opt.step(&mut current.heads, &hg, lr);
            let raw = current.heads.get(RAW_ALPHA).value[[0, 0]];
            current.set_raw_alpha(raw);
            let alpha = current.alpha();
            if current.config.use_word_head {
                assert!(
                    alpha > current.config.alpha_lo && alpha < current.config.alpha_hi,
                    "alpha {alpha} left its range"
                );
            }
            history.alpha_trace.push(alpha);
            step += 1;
        }
        if !current.heads.all_finite() || !current.context_encoder.params().all_finite() {
            return Err(Error::Checkpoint(format!("non-finite weights after epoch {epoch}")));
        }
        let train_loss = current.mean_loss(&train_set, cfg.batch_size)?;
        let valid_loss = current.mean_loss(&valid_set, cfg.batch_size)?;
        log::info!(
            "epoch {epoch}: train {:.4} valid {:.4} alpha {:.4}",
            train_loss.l,
            valid_loss.l,
            current.alpha()
        );
        history.epochs.push(EpochRecord {
            epoch,
            train: train_loss,
            valid: valid_loss,
            alpha: current.alpha(),
        });
        if valid_loss.l < best_loss {
            best_loss = valid_loss.l;
            best = current.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                history.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    debug_assert_eq!(best.word_encoder.fingerprint(), frozen_fingerprint);
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::supervision::Label;
    use crate::tokenizer::WordLevelTokenizer;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn bundle(dim: usize, heads: usize) -> ModelBundle {
        let corpus = "i love ketamine and crystal meth with friends at the party tonight";
        let tok = WordLevelTokenizer::from_words(corpus.split_whitespace(), 1);
        let cfg = EncoderConfig {
            vocab_size: tok.vocab_size(),
            dim,
            layers: 2,
            heads,
            ffn_dim: 2 * dim,
            max_len: 32,
            dropout: 0.1,
        };
        let enc = Encoder::new(cfg, 7).unwrap();
        ModelBundle::new(Tokenizer::WordLevel(tok), enc, HeadConfig::default(), 3).unwrap()
    }

    #[test]
    fn mask_target_replaces_span_with_one_mask() {
        let b = bundle(8, 2);
        let t = &b.tokenizer;
        let w = words("i love ketamine");
        let ids = b.mask_target(&w, (2, 3)).unwrap();
        let v = t.vocab();
        assert_eq!(
            ids,
            vec![t.cls_id(), v.id("i").unwrap(), v.id("love").unwrap(), t.mask_id(), t.sep_id()]
        );
        let w = words("i love crystal meth tonight");
        let ids = b.mask_target(&w, (2, 4)).unwrap();
        assert_eq!(ids.iter().filter(|&&i| i == t.mask_id()).count(), 1);
        assert!(!ids.contains(&v.id("crystal").unwrap()) && !ids.contains(&v.id("meth").unwrap()));
        assert_eq!(b.mask_target(&w, (0, 1)).unwrap()[1], t.mask_id());
        assert!(matches!(b.mask_target(&w, (4, 6)), Err(Error::SpanOutOfRange { .. })));
        assert!(matches!(b.mask_target(&w, (2, 2)), Err(Error::SpanOutOfRange { .. })));
    }

    #[test]
    fn context_head_is_delexicalized() {
        let b = bundle(8, 2);
        let a = b.predict(&words("i love ketamine at the party"), (2, 3)).unwrap();
        let c = b.predict(&words("i love friends at the party"), (2, 3)).unwrap();
        assert_eq!(a.p_c.to_bits(), c.p_c.to_bits());
    }

    #[test]
    fn zero_output_weights_give_one_half() {
        let mut b = bundle(8, 2);
        b.heads.get_mut(W2).value.fill(0.0);
        b.heads.get_mut(W4).value.fill(0.0);
        let p = b.predict(&words("i love ketamine"), (2, 3)).unwrap();
        assert_eq!(p.p_c, 0.5);
        assert_eq!(p.p_w, 0.5);
        assert_eq!(p.p, 0.5);
        assert!(p.decision);
    }

    #[test]
    fn single_subword_embedding_is_that_row() {
        let b = bundle(8, 2);
        let w = words("i love ketamine");
        let e = b.embed_target(&w, (1, 2)).unwrap();
        let (ids, _) = wrap_sentence(&b.tokenizer, &w);
        let states = b.word_encoder.encode(&ids).unwrap();
        assert_eq!(e, states.row(2).to_vec());
        let other = b.embed_target(&words("with love tonight"), (1, 2)).unwrap();
        assert_ne!(e, other);
    }

    #[test]
    fn word_head_checks_width_and_is_deterministic_in_eval() {
        let b = bundle(8, 2);
        assert!(matches!(
            b.forward_word(&[0.0; 3], None),
            Err(Error::DimensionMismatch { expected: 8, got: 3 })
        ));
        let e = vec![0.3; 8];
        assert_eq!(b.forward_word(&e, None).unwrap(), b.forward_word(&e, None).unwrap());
    }

    #[test]
    fn loss_examples() {
        let ln2 = std::f64::consts::LN_2;
        let l = compute_loss(&[(0.5, 0.5, 1.0)], 0.945);
        assert!((l.l_c - ln2).abs() < 1e-12 && (l.l_w - ln2).abs() < 1e-12 && (l.l - ln2).abs() < 1e-12);
        let l = compute_loss(&[(1.0 - 1e-7, 1.0 - 1e-7, 1.0)], 0.9);
        assert!(l.l < 1e-6);
    }

    fn sample(w: &str, span: Span, label: Label, split: Split) -> LabeledSample {
        LabeledSample {
            sent_id: w.to_string(),
            words: words(w),
            target_start: span.0,
            target_end: span.1,
            label,
            split,
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut b = bundle(4, 2);
        b.context_encoder.config.dropout = 0.0;
        b.set_raw_alpha(0.3);
        let data = [
            sample("i love ketamine tonight", (2, 3), Label::Pos, Split::Train),
            sample("crystal meth at the party", (0, 2), Label::Pos, Split::Train),
            sample("with friends at the party", (1, 2), Label::NegStms, Split::Train),
        ];
        let prepared: Vec<Prepared> = data
            .iter()
            .map(|s| b.prepare(&s.words, s.span(), s.label.target()).unwrap())
            .collect();
        let refs: Vec<&Prepared> = prepared.iter().collect();
        let (_, grads) = b.batch_loss(&refs, None, true).unwrap();
        let (_, hg) = grads.unwrap();
        let h = 1e-6;
        for pi in [W1, B1, W2, W3, B3, LN_G, LN_B, W4, RAW_ALPHA] {
            let shape = b.heads.get(pi).value.dim();
            for r in 0..shape.0 {
                for c in 0..shape.1 {
                    let mut plus = b.clone();
                    plus.heads.get_mut(pi).value[[r, c]] += h;
                    let mut minus = b.clone();
                    minus.heads.get_mut(pi).value[[r, c]] -= h;
                    let lp = plus.batch_loss(&refs, None, false).unwrap().0.l;
                    let lm = minus.batch_loss(&refs, None, false).unwrap().0.l;
                    let numeric = (lp - lm) / (2.0 * h);
                    let analytic = hg[pi][[r, c]];
                    let scale = numeric.abs().max(analytic.abs()).max(1e-6);
                    assert!(
                        (numeric - analytic).abs() / scale < 1e-4,
                        "{}[{r},{c}]: {analytic} vs {numeric}",
                        b.heads.get(pi).name
                    );
                }
            }
        }
    }

    #[test]
    fn degenerate_training_split_is_rejected() {
        let b = bundle(8, 2);
        let ds = LabeledDataset::from_samples(vec![
            sample("i love ketamine tonight", (2, 3), Label::Pos, Split::Train),
            sample("with friends at the party", (1, 2), Label::NegStms, Split::Valid),
        ]);
        let err = train(&b, &ds, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateDataset(_)));
        let empty = LabeledDataset::from_samples(Vec::new());
        assert!(matches!(train(&b, &empty, &TrainConfig::default()), Err(Error::EmptyDataset)));
    }
}
