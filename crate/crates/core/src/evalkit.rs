//! Evaluation on annotated sentences, annotator agreement, and the
//! embedding-similarity and masked-LM baselines.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRecord;
use crate::detect::{predict_parallel, JargonPredictor};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::model::{mask_target, Prediction};
use crate::supervision::{extract_noun_candidates, SeedTermList, Span};
use crate::tagger::PosTagger;
use crate::tokenizer::SubwordTokenizer;
use crate::util::read_jsonl;
use crate::word2vec::{Word2Vec, Word2VecConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub words: Vec<String>,
    pub jargon_indices: Vec<usize>,
    /// Alphanumeric-noun indices; derived from the tagger when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_indices: Option<Vec<usize>>,
}

impl AnnotatedSentence {
    /// Candidate indices for evaluation. Without explicit candidates these
    /// are the tagger's alphanumeric nouns plus every annotated jargon index,
    /// so an annotation is never lost to a tagging error.
    pub fn candidates(&self, tagger: &dyn PosTagger) -> Result<Vec<usize>> {
        let len = self.words.len();
        let bad = |i: &usize| *i >= len;
        if self.jargon_indices.iter().any(bad) {
            return Err(Error::malformed("annotation", "jargon index out of range"));
        }
        match &self.candidate_indices {
            Some(c) => {
                if c.iter().any(bad) {
                    return Err(Error::malformed("annotation", "candidate index out of range"));
                }
                let set: BTreeSet<usize> = c.iter().copied().collect();
                if !self.jargon_indices.iter().all(|i| set.contains(i)) {
                    return Err(Error::malformed("annotation", "jargon index is not a candidate"));
                }
                Ok(set.into_iter().collect())
            }
            None => {
                let mut set: BTreeSet<usize> = extract_noun_candidates(&self.words, &[], tagger).into_iter().collect();
                set.extend(self.jargon_indices.iter().copied());
                Ok(set.into_iter().collect())
            }
        }
    }
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotatedSentence>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub unique_jargon_detected: usize,
    pub confusion: Confusion,
}

impl EvalResult {
    pub fn from_confusion(confusion: Confusion, unique_jargon_detected: usize) -> Self {
        EvalResult {
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            unique_jargon_detected,
            confusion,
        }
    }
}

/// One scored candidate, kept for re-tallying and error analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub sentence: usize,
    pub index: usize,
    pub word: String,
    pub gold: bool,
    pub p: f64,
    pub predicted: bool,
}

/// Tally outcomes into a result.
pub fn tally(outcomes: &[CandidateOutcome]) -> EvalResult {
    let mut c = Confusion::default();
    let mut unique = HashSet::new();
    for o in outcomes {
        match (o.predicted, o.gold) {
            (true, true) => {
                c.tp += 1;
                unique.insert(o.word.to_lowercase());
            }
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    EvalResult::from_confusion(c, unique.len())
}

/// Predict every candidate and compare with the annotations.
pub fn evaluate_outcomes(
    predictor: &dyn JargonPredictor,
    data: &[AnnotatedSentence],
    threshold: f64,
    tagger: &dyn PosTagger,
) -> Result<Vec<CandidateOutcome>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut items: Vec<(&[String], Span)> = Vec::new();
    let mut meta = Vec::new();
    for (si, s) in data.iter().enumerate() {
        let gold: HashSet<usize> = s.jargon_indices.iter().copied().collect();
        for i in s.candidates(tagger)? {
            items.push((&s.words, (i, i + 1)));
            meta.push((si, i, gold.contains(&i)));
        }
    }
    let preds = predict_parallel(predictor, &items)?;
    Ok(meta
        .into_iter()
        .zip(preds)
        .map(|((sentence, index, gold), p)| CandidateOutcome {
            sentence,
            index,
            word: data[sentence].words[index].clone(),
            gold,
            p: p.p,
            predicted: p.p >= threshold,
        })
        .collect())
}

pub fn evaluate(
    predictor: &dyn JargonPredictor,
    data: &[AnnotatedSentence],
    threshold: f64,
    tagger: &dyn PosTagger,
) -> Result<EvalResult> {
    Ok(tally(&evaluate_outcomes(predictor, data, threshold, tagger)?))
}

/// Chance-corrected agreement of two aligned binary label sequences.
pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let po = agree / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (1.0 - pe).abs() < 1e-15 {
        return Ok(if po == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Predicts positive exactly for words on a fixed list.
#[derive(Debug, Clone)]
pub struct ListPredictor {
    words: HashSet<String>,
}

impl ListPredictor {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        ListPredictor {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }
}

impl JargonPredictor for ListPredictor {
    fn predict_batch(&self, items: &[(&[String], Span)]) -> Result<Vec<Prediction>> {
        Ok(items
            .iter()
            .map(|(words, (s, e))| {
                let hit = self.words.contains(&words[*s..*e].join(" ").to_lowercase());
                let p = if hit { 1.0 } else { 0.0 };
                Prediction {
                    p_c: p,
                    p_w: p,
                    p,
                    decision: hit,
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Word2VecBaselineConfig {
    pub model: Word2VecConfig,
    pub per_seed: usize,
}

impl Default for Word2VecBaselineConfig {
    fn default() -> Self {
        Word2VecBaselineConfig {
            model: Word2VecConfig::default(),
            per_seed: 25,
        }
    }
}

/// Union of every seed's nearest neighbors, ranked by best similarity to
/// any seed. Seeds and non-alphanumeric tokens are excluded; seeds missing
/// from the vocabulary are skipped with a warning.
pub fn baseline_word2vec(
    store: &[SentenceRecord],
    seeds: &SeedTermList,
    cfg: &Word2VecBaselineConfig,
) -> Result<Vec<String>> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let sentences: Vec<Vec<String>> = store
        .iter()
        .map(|r| r.words.iter().map(|w| w.to_lowercase()).collect())
        .collect();
    let model = Word2Vec::train(&sentences, &cfg.model)?;
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for seed in seeds.terms() {
        let Some(neighbors) = model.most_similar(seed, usize::MAX) else {
            log::warn!("seed {seed:?} is not in the embedding vocabulary; skipped");
            continue;
        };
        let kept = neighbors
            .into_iter()
            .filter(|(w, _)| !seeds.contains(w) && w.chars().all(|c| c.is_ascii_alphanumeric()))
            .take(cfg.per_seed);
        for (w, s) in kept {
            let e = best.entry(w).or_insert(f64::NEG_INFINITY);
            *e = e.max(s);
        }
    }
    let mut ranked: Vec<(String, f64)> = best.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked.into_iter().map(|(w, _)| w).collect())
}

/// Seed token ids usable by the masked-LM baseline: seeds that map to a
/// single known subword.
pub fn single_token_seeds(seeds: &SeedTermList, tokenizer: &dyn SubwordTokenizer) -> BTreeSet<u32> {
    seeds
        .terms()
        .filter(|t| !t.contains(' '))
        .filter_map(|t| match tokenizer.tokenize_word(t).as_slice() {
            [id] if *id != tokenizer.unk_id() => Some(*id),
            _ => None,
        })
        .collect()
}

/// Vocabulary ids ordered by the encoder's prediction at the masked target,
/// special tokens excluded; ties break by id.
pub fn mlm_ranking(
    encoder: &Encoder,
    tokenizer: &dyn SubwordTokenizer,
    words: &[String],
    span: Span,
) -> Result<Vec<u32>> {
    let masked = mask_target(words, span, tokenizer)?;
    let pos = masked
        .iter()
        .position(|&t| t == tokenizer.mask_id())
        .expect("mask_target inserts one mask");
    let logits = encoder.predict_masked(&masked, pos)?;
    let vocab = tokenizer.vocab();
    let mut ids: Vec<u32> = (0..logits.len() as u32).filter(|&i| !vocab.is_special(i)).collect();
    ids.sort_by(|&a, &b| logits[b as usize].total_cmp(&logits[a as usize]).then(a.cmp(&b)));
    Ok(ids)
}

/// True iff a single-token seed appears among the top `k` predictions for
/// the masked target.
pub fn baseline_mlm_topk(
    encoder: &Encoder,
    tokenizer: &dyn SubwordTokenizer,
    words: &[String],
    span: Span,
    seeds: &SeedTermList,
    k: usize,
) -> Result<bool> {
    let seed_ids = single_token_seeds(seeds, tokenizer);
    let ranking = mlm_ranking(encoder, tokenizer, words, span)?;
    Ok(ranking.iter().take(k).any(|id| seed_ids.contains(id)))
}

/// The masked-LM baseline as a predictor over candidates.
pub struct MlmPredictor<'a> {
    pub encoder: &'a Encoder,
    pub tokenizer: &'a (dyn SubwordTokenizer + Sync),
    pub seeds: BTreeSet<u32>,
    pub k: usize,
}

impl<'a> MlmPredictor<'a> {
    pub fn new(encoder: &'a Encoder, tokenizer: &'a (dyn SubwordTokenizer + Sync), seeds: &SeedTermList, k: usize) -> Self {
        MlmPredictor {
            encoder,
            tokenizer,
            seeds: single_token_seeds(seeds, tokenizer),
            k,
        }
    }
}

impl JargonPredictor for MlmPredictor<'_> {
    fn predict_batch(&self, items: &[(&[String], Span)]) -> Result<Vec<Prediction>> {
        items
            .iter()
            .map(|(words, span)| {
                let ranking = mlm_ranking(self.encoder, self.tokenizer, words, *span)?;
                let hit = ranking.iter().take(self.k).any(|id| self.seeds.contains(id));
                let p = if hit { 1.0 } else { 0.0 };
                Ok(Prediction {
                    p_c: p,
                    p_w: p,
                    p,
                    decision: hit,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_examples() {
        let t = true;
        let f = false;
        assert_eq!(cohens_kappa(&[t, f, t, f], &[t, f, t, f]).unwrap(), 1.0);
        assert!(cohens_kappa(&[t, t, f, f], &[t, f, t, f]).unwrap().abs() < 1e-12);
        assert!((cohens_kappa(&[t, f], &[f, t]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cohens_kappa(&[t, t], &[t, t]).unwrap(), 1.0);
        assert!(matches!(cohens_kappa(&[t], &[t, f]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn zero_division_conventions() {
        let c = Confusion {
            tp: 0,
            fp: 0,
            fn_: 3,
            tn: 5,
        };
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.0, 0.0, 0.0));
        let c = Confusion {
            tp: 2,
            fp: 1,
            fn_: 1,
            tn: 6,
        };
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_serializes_fn_key() {
        let json = serde_json::to_string(&Confusion::default()).unwrap();
        assert!(json.contains("\"fn\":0"));
    }
}
