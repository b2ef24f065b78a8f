//! Transformer encoder (BERT-style, post-norm) with a tied masked-token
//! prediction head, and domain-adaptive pretraining by masked-token
//! prediction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRecord;
use crate::error::{Error, Result};
use crate::nn::{linear_schedule, randn, AdamW, AdamWConfig, Mat, ParamSet, Tape, Var};
use crate::tokenizer::SubwordTokenizer;
use crate::util::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// Desk-scale profile: 2 layers, width 64.
    pub fn scratch_tiny(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            dim: 64,
            layers: 2,
            heads: 4,
            ffn_dim: 128,
            max_len: 128,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.layers == 0 || self.heads == 0 || self.vocab_size == 0 {
            return Err(Error::Config("encoder sizes must be positive".into()));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} is not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    PretrainedGeneric,
    DomainAdapted,
    Scratch,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerIdx {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln1_g: usize,
    ln1_b: usize,
    ff1_w: usize,
    ff1_b: usize,
    ff2_w: usize,
    ff2_b: usize,
    ln2_g: usize,
    ln2_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    tok: usize,
    pos: usize,
    emb_ln_g: usize,
    emb_ln_b: usize,
    layers: Vec<LayerIdx>,
    mlm_w: usize,
    mlm_b: usize,
    mlm_ln_g: usize,
    mlm_ln_b: usize,
    mlm_bias: usize,
}

/// Encoder weights plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub provenance: Provenance,
    params: ParamSet,
    layout: Layout,
}

/// Forward-pass output: final-layer hidden states of every sequence stacked
/// row-wise, with the first row index of each sequence.
pub struct Hidden {
    pub states: Var,
    pub offsets: Vec<usize>,
}

impl Encoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f, v) = (config.dim, config.ffn_dim, config.vocab_size);
        let std = 0.02;
        let mut p = ParamSet::new();
        let ones = |n| Mat::ones((1, n));
        let zeros = |n| Mat::zeros((1, n));
        let tok = p.add("tok_emb", randn(&mut rng, v, d, std), true);
        let pos = p.add("pos_emb", randn(&mut rng, config.max_len, d, std), true);
        let emb_ln_g = p.add("emb_ln.g", ones(d), false);
        let emb_ln_b = p.add("emb_ln.b", zeros(d), false);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let mut w = |name: &str, r, c| p.add(format!("layer{l}.{name}"), randn(&mut rng, r, c, std), true);
            let (wq, wk, wv, wo) = (w("wq", d, d), w("wk", d, d), w("wv", d, d), w("wo", d, d));
            let ff1_w = w("ff1.w", d, f);
            let ff2_w = w("ff2.w", f, d);
            let mut b = |name: &str, m: Mat| p.add(format!("layer{l}.{name}"), m, false);
            layers.push(LayerIdx {
                wq,
                bq: b("bq", zeros(d)),
                wk,
                bk: b("bk", zeros(d)),
                wv,
                bv: b("bv", zeros(d)),
                wo,
                bo: b("bo", zeros(d)),
                ln1_g: b("ln1.g", ones(d)),
                ln1_b: b("ln1.b", zeros(d)),
                ff1_w,
                ff1_b: b("ff1.b", zeros(f)),
                ff2_w,
                ff2_b: b("ff2.b", zeros(d)),
                ln2_g: b("ln2.g", ones(d)),
                ln2_b: b("ln2.b", zeros(d)),
            });
        }
        let mlm_w = p.add("mlm.w", randn(&mut rng, d, d, std), true);
        let mlm_b = p.add("mlm.b", zeros(d), false);
        let mlm_ln_g = p.add("mlm_ln.g", ones(d), false);
        let mlm_ln_b = p.add("mlm_ln.b", zeros(d), false);
        let mlm_bias = p.add("mlm.bias", zeros(v), false);
        Ok(Encoder {
            config,
            provenance: Provenance::Scratch,
            params: p,
            layout: Layout {
                tok,
                pos,
                emb_ln_g,
                emb_ln_b,
                layers,
                mlm_w,
                mlm_b,
                mlm_ln_g,
                mlm_ln_b,
                mlm_bias,
            },
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn fingerprint(&self) -> String {
        self.params.fingerprint()
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len,
                max: self.config.max_len,
            });
        }
        Ok(())
    }

    /// Run the encoder over complete id sequences (wrappers included).
    /// `dropout` supplies the RNG in training mode; `None` is eval mode.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        seqs: &[Vec<u32>],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Hidden> {
        let cfg = &self.config;
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut offsets = Vec::with_capacity(seqs.len());
        for seq in seqs {
            self.check_len(seq.len())?;
            if seq.is_empty() {
                return Err(Error::Config("empty input sequence".into()));
            }
            offsets.push(ids.len());
            for (k, &id) in seq.iter().enumerate() {
                if id as usize >= cfg.vocab_size {
                    return Err(Error::DimensionMismatch {
                        expected: cfg.vocab_size,
                        got: id as usize + 1,
                    });
                }
                ids.push(id as usize);
                positions.push(k);
            }
        }
        let lay = &self.layout;
        let rate = cfg.dropout;
        let mut drop = |tape: &mut Tape, x: Var| match dropout.as_deref_mut() {
            Some(rng) => tape.dropout(x, rate, rng),
            None => x,
        };

        let tok = tape.gather_rows(vars[lay.tok], &ids);
        let pos = tape.gather_rows(vars[lay.pos], &positions);
        let x = tape.add(tok, pos);
        let x = tape.layer_norm(x, vars[lay.emb_ln_g], vars[lay.emb_ln_b]);
        let mut x = drop(tape, x);

        let dh = cfg.dim / cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for l in &lay.layers {
            let lin = |tape: &mut Tape, x: Var, w: usize, b: usize| {
                let y = tape.matmul(x, vars[w]);
                tape.add_row(y, vars[b])
            };
            let q = lin(tape, x, l.wq, l.bq);
            let k = lin(tape, x, l.wk, l.bk);
            let v = lin(tape, x, l.wv, l.bv);
            let mut per_seq = Vec::with_capacity(seqs.len());
            for (s, seq) in seqs.iter().enumerate() {
                let (off, len) = (offsets[s], seq.len());
                let (qs, ks, vs) = (
                    tape.slice_rows(q, off, len),
                    tape.slice_rows(k, off, len),
                    tape.slice_rows(v, off, len),
                );
                let mut heads = Vec::with_capacity(cfg.heads);
                for h in 0..cfg.heads {
                    let qh = tape.slice_cols(qs, h * dh, dh);
                    let kh = tape.slice_cols(ks, h * dh, dh);
                    let vh = tape.slice_cols(vs, h * dh, dh);
                    let scores = tape.matmul_t(qh, kh);
                    let scores = tape.scale(scores, scale);
                    let attn = tape.softmax_rows(scores);
                    let attn = drop(tape, attn);
                    heads.push(tape.matmul(attn, vh));
                }
                per_seq.push(if heads.len() == 1 {
                    heads[0]
                } else {
                    tape.concat_cols(&heads)
                });
            }
            let ctx = if per_seq.len() == 1 {
                per_seq[0]
            } else {
                tape.concat_rows(&per_seq)
            };
            let attn_out = lin(tape, ctx, l.wo, l.bo);
            let attn_out = drop(tape, attn_out);
            let res = tape.add(x, attn_out);
            x = tape.layer_norm(res, vars[l.ln1_g], vars[l.ln1_b]);

            let h = lin(tape, x, l.ff1_w, l.ff1_b);
            let h = tape.gelu(h);
            let h = lin(tape, h, l.ff2_w, l.ff2_b);
            let h = drop(tape, h);
            let res = tape.add(x, h);
            x = tape.layer_norm(res, vars[l.ln2_g], vars[l.ln2_b]);
        }
        Ok(Hidden { states: x, offsets })
    }

    /// Vocabulary logits for the given rows of `states`.
    pub fn mlm_logits(&self, tape: &mut Tape, vars: &[Var], states: Var, rows: &[usize]) -> Var {
        let lay = &self.layout;
        let h = tape.gather_rows(states, rows);
        let h = tape.matmul(h, vars[lay.mlm_w]);
        let h = tape.add_row(h, vars[lay.mlm_b]);
        let h = tape.gelu(h);
        let h = tape.layer_norm(h, vars[lay.mlm_ln_g], vars[lay.mlm_ln_b]);
        let logits = tape.matmul_t(h, vars[lay.tok]);
        tape.add_row(logits, vars[lay.mlm_bias])
    }

    /// Final-layer hidden states of one sequence in eval mode.
    pub fn encode(&self, seq: &[u32]) -> Result<Mat> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let hidden = self.forward(&mut tape, &vars, &[seq.to_vec()], None)?;
        Ok(tape.value(hidden.states).clone())
    }

    /// Vocabulary logits at one position of one sequence, eval mode.
    pub fn predict_masked(&self, seq: &[u32], position: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let hidden = self.forward(&mut tape, &vars, &[seq.to_vec()], None)?;
        let logits = self.mlm_logits(&mut tape, &vars, hidden.states, &[position]);
        Ok(tape.value(logits).row(0).to_vec())
    }

    /// Replace parameter values by name, checking shapes.
    pub fn load_values(&mut self, values: impl IntoIterator<Item = (String, Mat)>) -> Result<()> {
        let mut seen = 0;
        for (name, value) in values {
            let i = self
                .params
                .index_of(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
            let p = self.params.get_mut(i);
            if p.value.raw_dim() != value.raw_dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value;
            seen += 1;
        }
        if seen != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {seen} of {} encoder tensors",
                self.params.len()
            )));
        }
        Ok(())
    }
}

/// Wrap word-level subwords with the start and end tokens.
pub fn wrap_sentence(tokenizer: &dyn SubwordTokenizer, words: &[String]) -> (Vec<u32>, Vec<std::ops::Range<usize>>) {
    let enc = tokenizer.encode_words(words);
    let mut ids = Vec::with_capacity(enc.ids.len() + 2);
    ids.push(tokenizer.cls_id());
    ids.extend(enc.ids);
    ids.push(tokenizer.sep_id());
    let spans = enc.spans.into_iter().map(|r| r.start + 1..r.end + 1).collect();
    (ids, spans)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Upper bound on the sequence length fed to the encoder.
    pub max_seq: usize,
    pub epochs: usize,
    /// Percentage of sentences held out for validation loss.
    pub valid_pct: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub mask_prob: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            max_seq: 512,
            epochs: 3,
            valid_pct: 10,
            batch_size: 32,
            learning_rate: 5e-5,
            warmup_ratio: 0.0,
            mask_prob: 0.15,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub initial_valid_loss: f64,
    pub valid_losses: Vec<f64>,
    pub train_losses: Vec<f64>,
    /// 1-based epoch of the returned weights; 0 means the input weights.
    pub best_epoch: usize,
    pub best_valid_loss: f64,
}

struct MaskedExample {
    input: Vec<u32>,
    positions: Vec<usize>,
    targets: Vec<usize>,
}

/// BERT-style corruption: each content position is selected with
/// probability `mask_prob` (at least one per sequence); selected tokens become
/// MASK 80% of the time, a random token 10%, and stay unchanged 10%.
fn corrupt(
    ids: &[u32],
    tokenizer: &dyn SubwordTokenizer,
    mask_prob: f64,
    rng: &mut ChaCha8Rng,
) -> MaskedExample {
    let vocab = tokenizer.vocab();
    let content: Vec<usize> = (1..ids.len().saturating_sub(1)).collect();
    let mut chosen: Vec<usize> = content
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() < mask_prob)
        .collect();
    if chosen.is_empty() && !content.is_empty() {
        chosen.push(*content.choose(rng).expect("non-empty"));
    }
    let mut input = ids.to_vec();
    let mut targets = Vec::with_capacity(chosen.len());
    for &p in &chosen {
        targets.push(ids[p] as usize);
        let r: f64 = rng.gen();
        if r < 0.8 {
            input[p] = vocab.mask;
        } else if r < 0.9 {
            input[p] = rng.gen_range(0..vocab.len() as u32);
        }
    }
    MaskedExample {
        input,
        positions: chosen,
        targets,
    }
}

fn mlm_batch_loss(
    encoder: &Encoder,
    batch: &[&MaskedExample],
    dropout: Option<&mut ChaCha8Rng>,
    backward: bool,
) -> Result<(f64, Option<Vec<Mat>>)> {
    let mut tape = Tape::new();
    let vars = encoder.params.bind(&mut tape);
    let seqs: Vec<Vec<u32>> = batch.iter().map(|e| e.input.clone()).collect();
    let hidden = encoder.forward(&mut tape, &vars, &seqs, dropout)?;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (ex, off) in batch.iter().zip(&hidden.offsets) {
        rows.extend(ex.positions.iter().map(|p| off + p));
        targets.extend(ex.targets.iter().copied());
    }
    if rows.is_empty() {
        return Ok((0.0, None));
    }
    let logits = encoder.mlm_logits(&mut tape, &vars, hidden.states, &rows);
    let loss = tape.cross_entropy_mean(logits, &targets);
    let value = tape.scalar(loss);
    if !backward {
        return Ok((value, None));
    }
    tape.backward(loss);
    Ok((value, Some(encoder.params.grads(&tape, &vars))))
}

fn mean_loss(encoder: &Encoder, examples: &[MaskedExample], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&MaskedExample> = chunk.iter().collect();
        let n: usize = chunk.iter().map(|e| e.positions.len()).sum();
        let (l, _) = mlm_batch_loss(encoder, &refs, None, false)?;
        total += l * n as f64;
        count += n;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Continue masked-token-prediction training on the target corpus. Returns
/// the weights with the lowest validation loss (the input weights if no
/// epoch improves on them), tagged as domain-adapted.
pub fn pretrain_domain(
    encoder: &Encoder,
    tokenizer: &dyn SubwordTokenizer,
    store: &[SentenceRecord],
    cfg: &PretrainConfig,
) -> Result<(Encoder, PretrainReport)> {
    if store.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.batch_size == 0 || cfg.valid_pct >= 100 {
        return Err(Error::Config("pretrain batch_size must be > 0 and valid_pct < 100".into()));
    }
    if tokenizer.vocab_size() != encoder.config.vocab_size {
        return Err(Error::DimensionMismatch {
            expected: encoder.config.vocab_size,
            got: tokenizer.vocab_size(),
        });
    }
    let max_len = cfg.max_seq.min(encoder.config.max_len);
    let mut train_ids = Vec::new();
    let mut valid = Vec::new();
    for rec in store {
        let (mut ids, _) = wrap_sentence(tokenizer, &rec.words);
        if ids.len() > max_len {
            ids.truncate(max_len - 1);
            ids.push(tokenizer.sep_id());
        }
        if ids.len() < 3 {
            continue;
        }
        let bucket = keyed_rng(cfg.seed, &format!("mlm-split:{}", rec.sent_id)).gen_range(0..100);
        if bucket < cfg.valid_pct {
            let mut rng = keyed_rng(cfg.seed, &format!("mlm-valid:{}", rec.sent_id));
            valid.push(corrupt(&ids, tokenizer, cfg.mask_prob, &mut rng));
        } else {
            train_ids.push((rec.sent_id.clone(), ids));
        }
    }
    if train_ids.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    // guarantee a validation signal on tiny corpora
    if valid.is_empty() {
        let (sid, ids) = &train_ids[0];
        let mut rng = keyed_rng(cfg.seed, &format!("mlm-valid:{sid}"));
        valid.push(corrupt(ids, tokenizer, cfg.mask_prob, &mut rng));
    }

    let mut current = encoder.clone();
    let initial_valid_loss = mean_loss(&current, &valid, cfg.batch_size)?;
    let mut report = PretrainReport {
        initial_valid_loss,
        valid_losses: Vec::new(),
        train_losses: Vec::new(),
        best_epoch: 0,
        best_valid_loss: initial_valid_loss,
    };
    let mut best = encoder.clone();
    let steps_per_epoch = train_ids.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let warmup = (cfg.warmup_ratio * total_steps as f64).round() as usize;
    let mut opt = AdamW::new(&current.params, AdamWConfig::default());
    let mut step = 0;
    let mut dropout_rng = keyed_rng(cfg.seed, "mlm-dropout");

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_ids.len()).collect();
        order.shuffle(&mut keyed_rng(cfg.seed, &format!("mlm-epoch:{epoch}")));
        let examples: Vec<MaskedExample> = order
            .iter()
            .map(|&i| {
                let (sid, ids) = &train_ids[i];
                let mut rng = keyed_rng(cfg.seed, &format!("mlm-train:{epoch}:{sid}"));
                corrupt(ids, tokenizer, cfg.mask_prob, &mut rng)
            })
            .collect();
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in examples.chunks(cfg.batch_size) {
            let refs: Vec<&MaskedExample> = chunk.iter().collect();
            let (loss, grads) = mlm_batch_loss(&current, &refs, Some(&mut dropout_rng), true)?;
            if let Some(grads) = grads {
                let lr = linear_schedule(step, warmup, total_steps, cfg.learning_rate);
                opt.step(&mut current.params, &grads, lr);
            }
            step += 1;
            epoch_loss += loss;
            batches += 1;
        }
        let v = mean_loss(&current, &valid, cfg.batch_size)?;
        report.train_losses.push(epoch_loss / batches.max(1) as f64);
        report.valid_losses.push(v);
        log::info!("pretrain epoch {}: train {:.4} valid {:.4}", epoch + 1, epoch_loss / batches.max(1) as f64, v);
        if v < report.best_valid_loss {
            report.best_valid_loss = v;
            report.best_epoch = epoch + 1;
            best = current.clone();
        }
    }
    if !best.params.all_finite() {
        return Err(Error::Checkpoint("non-finite weights after pretraining".into()));
    }
    if cfg.epochs > 0 {
        best.provenance = Provenance::DomainAdapted;
    }
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::WordLevelTokenizer;

    fn tiny(vocab: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size: vocab,
            dim: 8,
            layers: 2,
            heads: 2,
            ffn_dim: 16,
            max_len: 16,
            dropout: 0.0,
        }
    }

    #[test]
    fn batched_forward_matches_single() {
        let enc = Encoder::new(tiny(20), 1).unwrap();
        let a = vec![2, 5, 6, 7, 3];
        let b = vec![2, 9, 3];
        let mut tape = Tape::new();
        let vars = enc.params.bind(&mut tape);
        let h = enc.forward(&mut tape, &vars, &[a.clone(), b.clone()], None).unwrap();
        let both = tape.value(h.states).clone();
        let ea = enc.encode(&a).unwrap();
        let eb = enc.encode(&b).unwrap();
        for (x, y) in both.rows().into_iter().zip(ea.rows().into_iter().chain(eb.rows())) {
            for (p, q) in x.iter().zip(y.iter()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_long_sequences() {
        let enc = Encoder::new(tiny(20), 1).unwrap();
        let long = vec![5u32; 17];
        assert!(matches!(enc.encode(&long), Err(Error::SequenceTooLong { len: 17, max: 16 })));
    }

    #[test]
    fn heads_must_divide_dim() {
        let mut cfg = tiny(10);
        cfg.heads = 3;
        assert!(Encoder::new(cfg, 0).is_err());
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let enc = Encoder::new(tiny(12), 4).unwrap();
        let ex = MaskedExample {
            input: vec![2, 4, 7, 8, 3],
            positions: vec![1, 3],
            targets: vec![9, 10],
        };
        let (_, grads) = mlm_batch_loss(&enc, &[&ex], None, true).unwrap();
        let grads = grads.unwrap();
        let h = 1e-6;
        for (pi, param) in enc.params.iter().enumerate() {
            // spot-check a handful of entries per tensor
            for k in (0..param.value.len()).step_by(param.value.len() / 3 + 1) {
                let idx = (k / param.value.ncols(), k % param.value.ncols());
                let mut plus = enc.clone();
                plus.params.get_mut(pi).value[idx] += h;
                let mut minus = enc.clone();
                minus.params.get_mut(pi).value[idx] -= h;
                let lp = mlm_batch_loss(&plus, &[&ex], None, false).unwrap().0;
                let lm = mlm_batch_loss(&minus, &[&ex], None, false).unwrap().0;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grads[pi][idx];
                let scale = numeric.abs().max(analytic.abs()).max(1e-3);
                assert!(
                    (numeric - analytic).abs() / scale < 1e-4,
                    "{}[{:?}]: {analytic} vs {numeric}",
                    param.name,
                    idx
                );
            }
        }
    }

    #[test]
    fn pretraining_reduces_validation_loss() {
        let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];
        let store: Vec<SentenceRecord> = (0..120)
            .map(|i| {
                let w: Vec<String> = (0..6).map(|k| words[(i + k) % 6].to_string()).collect();
                SentenceRecord::new(format!("s{i}"), "d", w)
            })
            .collect();
        let tok = WordLevelTokenizer::from_words(store.iter().flat_map(|s| s.words.iter()), 1);
        let mut cfg = tiny(tok.vocab_size());
        cfg.dim = 16;
        let enc = Encoder::new(cfg, 0).unwrap();
        let pcfg = PretrainConfig {
            epochs: 4,
            learning_rate: 3e-3,
            batch_size: 16,
            ..Default::default()
        };
        let (out, report) = pretrain_domain(&enc, &tok, &store, &pcfg).unwrap();
        assert!(report.best_valid_loss < report.initial_valid_loss);
        assert_eq!(out.provenance, Provenance::DomainAdapted);

        let zero = PretrainConfig { epochs: 0, ..pcfg };
        let (same, _) = pretrain_domain(&enc, &tok, &store, &zero).unwrap();
        assert_eq!(same.fingerprint(), enc.fingerprint());
        assert!(matches!(pretrain_domain(&enc, &tok, &[], &pcfg), Err(Error::EmptyCorpus)));
    }
}
