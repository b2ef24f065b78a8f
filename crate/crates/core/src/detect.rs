//! Sentence-level detection and corpus-level jargon-list extraction.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{passes_filter, FilterConfig, SentenceRecord};
use crate::error::{Error, Result};
use crate::model::{ModelBundle, Prediction};
use crate::supervision::{extract_noun_candidates, Span};
use crate::tagger::PosTagger;
use crate::util::{write_atomic, write_jsonl};

/// Anything that scores (sentence, span) pairs. Implemented by the trained
/// bundle; tests plug in stubs.
pub trait JargonPredictor: Sync {
    fn predict_batch(&self, items: &[(&[String], Span)]) -> Result<Vec<Prediction>>;
}

impl JargonPredictor for ModelBundle {
    fn predict_batch(&self, items: &[(&[String], Span)]) -> Result<Vec<Prediction>> {
        ModelBundle::predict_batch(self, items)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// First case-insensitive occurrence of this word.
    Word(String),
    Span(Span),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub sent_id: String,
    pub word: String,
    pub p_c: f64,
    pub p_w: f64,
    pub p: f64,
    pub decision: bool,
}

/// Classify one target in a sentence that passes the corpus filter.
pub fn detect_word(
    bundle: &ModelBundle,
    sentence: &SentenceRecord,
    target: &Target,
    filter: &FilterConfig,
) -> Result<Detection> {
    if !passes_filter(sentence, filter, &bundle.tokenizer) {
        return Err(Error::SentenceRejectedByFilter);
    }
    let span = match target {
        Target::Span(s) => *s,
        Target::Word(w) => {
            let lw = w.to_lowercase();
            let i = sentence
                .words
                .iter()
                .position(|x| x.to_lowercase() == lw)
                .ok_or_else(|| Error::WordNotInSentence(w.clone()))?;
            (i, i + 1)
        }
    };
    let p = bundle.predict(&sentence.words, span)?;
    Ok(Detection {
        sent_id: sentence.sent_id.clone(),
        word: sentence.words[span.0..span.1].join(" "),
        p_c: p.p_c,
        p_w: p.p_w,
        p: p.p,
        decision: p.decision,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub n: u32,
    pub top_k: usize,
    pub min_occurrences: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            n: 2,
            top_k: 100,
            min_occurrences: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JargonScore {
    pub word: String,
    pub f_pred: usize,
    pub total: usize,
    pub r_pred: f64,
    pub score: f64,
}

impl JargonScore {
    pub fn new(word: String, f_pred: usize, total: usize, n: u32) -> Self {
        let r_pred = if total == 0 { 0.0 } else { f_pred as f64 / total as f64 };
        JargonScore {
            word,
            f_pred,
            total,
            r_pred,
            score: jargon_score(f_pred, r_pred, n),
        }
    }
}

pub fn jargon_score(f_pred: usize, r_pred: f64, n: u32) -> f64 {
    f_pred as f64 * r_pred.powi(n as i32)
}

/// Descending score, then higher F_pred, then lexicographic word.
pub fn rank_order(a: &JargonScore, b: &JargonScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.f_pred.cmp(&a.f_pred))
        .then_with(|| a.word.cmp(&b.word))
}

/// Turn per-word (positive, total) counts into the ranked, truncated list.
pub fn rank_counts(counts: &BTreeMap<String, (usize, usize)>, cfg: &ScoreConfig) -> Vec<JargonScore> {
    let mut scores: Vec<JargonScore> = counts
        .iter()
        .filter(|(_, &(_, total))| total >= cfg.min_occurrences)
        .map(|(w, &(pos, total))| JargonScore::new(w.clone(), pos, total, cfg.n))
        .collect();
    scores.sort_by(rank_order);
    scores.truncate(cfg.top_k);
    scores
}

/// Predict `items` across worker threads; output order matches input order.
pub fn predict_parallel(predictor: &dyn JargonPredictor, items: &[(&[String], Span)]) -> Result<Vec<Prediction>> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len());
    if workers == 1 {
        return predictor.predict_batch(items);
    }
    let chunk_len = items.len().div_ceil(workers);
    let parts: Vec<Result<Vec<Prediction>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk_len)
            .map(|chunk| s.spawn(move || predictor.predict_batch(chunk)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Predict every alphanumeric-noun occurrence in the store (each occurrence
/// counts once) and rank words by `F_pred * R_pred^n`.
pub fn score_corpus(
    predictor: &dyn JargonPredictor,
    store: &[SentenceRecord],
    cfg: &ScoreConfig,
    tagger: &dyn PosTagger,
) -> Result<Vec<JargonScore>> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let mut items: Vec<(&[String], Span)> = Vec::new();
    for rec in store {
        for i in extract_noun_candidates(&rec.words, &[], tagger) {
            items.push((&rec.words, (i, i + 1)));
        }
    }
    let preds = predict_parallel(predictor, &items)?;
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for ((words, (i, _)), p) in items.iter().zip(preds) {
        let e = counts.entry(words[*i].to_lowercase()).or_insert((0, 0));
        e.0 += p.decision as usize;
        e.1 += 1;
    }
    Ok(rank_counts(&counts, cfg))
}

/// Write the ranked list as JSONL and as a plain word-per-line list.
pub fn write_ranking(jsonl: &Path, list: &Path, scores: &[JargonScore]) -> Result<()> {
    write_jsonl(jsonl, scores)?;
    let mut text = String::new();
    for s in scores {
        text.push_str(&s.word);
        text.push('\n');
    }
    write_atomic(list, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_arithmetic() {
        let s = JargonScore::new("x".into(), 10, 20, 2);
        assert!((s.score - 2.5).abs() < 1e-12);
        assert_eq!(JargonScore::new("x".into(), 7, 9, 0).score, 7.0);
    }

    #[test]
    fn ties_break_by_frequency_then_word() {
        let mut counts = BTreeMap::new();
        counts.insert("b".to_string(), (4, 4));
        counts.insert("a".to_string(), (4, 4));
        counts.insert("c".to_string(), (0, 3));
        counts.insert("d".to_string(), (1, 1));
        let cfg = ScoreConfig {
            n: 2,
            top_k: 10,
            min_occurrences: 2,
        };
        let words: Vec<_> = rank_counts(&counts, &cfg).into_iter().map(|s| s.word).collect();
        assert_eq!(words, ["a", "b", "c"]);
    }
}
