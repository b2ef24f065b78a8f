//! Continuous bag-of-words embeddings trained with negative sampling.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Word2VecConfig {
    pub min_count: usize,
    pub vector_size: usize,
    pub window: usize,
    pub epochs: usize,
    pub negative: usize,
    /// Frequent-word downsampling threshold; 0 disables it.
    pub sample: f64,
    pub alpha: f64,
    pub min_alpha: f64,
    pub seed: u64,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Word2VecConfig {
            min_count: 10,
            vector_size: 100,
            window: 10,
            epochs: 10,
            negative: 5,
            sample: 1e-3,
            alpha: 0.025,
            min_alpha: 1e-4,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Word2Vec {
    pub words: Vec<String>,
    index: HashMap<String, usize>,
    /// Unit-normalized input vectors, one row per word.
    normed: Vec<Vec<f32>>,
}

const NOISE_TABLE: usize = 1 << 20;

impl Word2Vec {
    /// Train on lowercased sentences. Deterministic for a fixed seed.
    pub fn train(sentences: &[Vec<String>], cfg: &Word2VecConfig) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::EmptyStore);
        }
        if cfg.vector_size == 0 || cfg.window == 0 || cfg.negative == 0 {
            return Err(Error::Config("word2vec sizes must be positive".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in sentences {
            for w in s {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
        let mut vocab: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= cfg.min_count.max(1)).collect();
        vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if vocab.is_empty() {
            return Err(Error::Config("no word reaches min_count".into()));
        }
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (w.to_string(), i)).collect();
        let total: usize = vocab.iter().map(|v| v.1).sum();
        let (n, d) = (vocab.len(), cfg.vector_size);

        let pow_sum: f64 = vocab.iter().map(|v| (v.1 as f64).powf(0.75)).sum();
        let mut table = Vec::with_capacity(NOISE_TABLE);
        let mut acc = 0.0;
        for (i, v) in vocab.iter().enumerate() {
            acc += (v.1 as f64).powf(0.75) / pow_sum;
            while (table.len() as f64) < acc * NOISE_TABLE as f64 && table.len() < NOISE_TABLE {
                table.push(i);
            }
        }
        while table.len() < NOISE_TABLE {
            table.push(n - 1);
        }
        let keep_prob: Vec<f64> = vocab
            .iter()
            .map(|v| {
                if cfg.sample <= 0.0 {
                    return 1.0;
                }
                let f = v.1 as f64 / (cfg.sample * total as f64);
                ((f.sqrt() + 1.0) / f).min(1.0)
            })
            .collect();

        let mut rng = keyed_rng(cfg.seed, "word2vec");
        let mut syn0: Vec<f32> = (0..n * d).map(|_| (rng.gen::<f32>() - 0.5) / d as f32).collect();
        let mut syn1 = vec![0f32; n * d];
        let encoded: Vec<Vec<usize>> = sentences
            .iter()
            .map(|s| s.iter().filter_map(|w| index.get(w).copied()).collect())
            .collect();
        let total_words = (encoded.iter().map(Vec::len).sum::<usize>() * cfg.epochs).max(1);
        let mut seen = 0usize;
        let mut hidden = vec![0f32; d];
        let mut grad = vec![0f32; d];

        for _ in 0..cfg.epochs {
            for sent in &encoded {
                let kept: Vec<usize> = sent.iter().copied().filter(|&w| rng.gen::<f64>() < keep_prob[w]).collect();
                seen += sent.len();
                let progress = seen as f64 / total_words as f64;
                let lr = (cfg.alpha - (cfg.alpha - cfg.min_alpha) * progress).max(cfg.min_alpha) as f32;
                for pos in 0..kept.len() {
                    let b = rng.gen_range(0..cfg.window);
                    let lo = pos.saturating_sub(cfg.window - b);
                    let hi = (pos + cfg.window - b + 1).min(kept.len());
                    let ctx: Vec<usize> = (lo..hi).filter(|&j| j != pos).map(|j| kept[j]).collect();
                    if ctx.is_empty() {
                        continue;
                    }
                    hidden.fill(0.0);
                    for &c in &ctx {
                        for k in 0..d {
                            hidden[k] += syn0[c * d + k];
                        }
                    }
                    let inv = 1.0 / ctx.len() as f32;
                    hidden.iter_mut().for_each(|h| *h *= inv);
                    grad.fill(0.0);
                    for s in 0..=cfg.negative {
                        let (target, label) = if s == 0 {
                            (kept[pos], 1.0)
                        } else {
                            let t = table[rng.gen_range(0..NOISE_TABLE)];
                            if t == kept[pos] {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let row = &mut syn1[target * d..(target + 1) * d];
                        let dot: f32 = row.iter().zip(&hidden).map(|(a, b)| a * b).sum();
                        let g = (label - 1.0 / (1.0 + (-dot).exp())) * lr;
                        for k in 0..d {
                            grad[k] += g * row[k];
                            row[k] += g * hidden[k];
                        }
                    }
                    // gensim-style cbow_mean: the full error goes to every context word
                    for &c in &ctx {
                        for k in 0..d {
                            syn0[c * d + k] += grad[k];
                        }
                    }
                }
            }
        }

        let normed = (0..n)
            .map(|i| {
                let v = &syn0[i * d..(i + 1) * d];
                let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
                v.iter().map(|x| x / norm).collect()
            })
            .collect();
        Ok(Word2Vec {
            words: vocab.iter().map(|v| v.0.to_string()).collect(),
            index,
            normed,
        })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        let (i, j) = (self.index.get(a)?, self.index.get(b)?);
        Some(dot(&self.normed[*i], &self.normed[*j]))
    }

    /// The `k` most cosine-similar words, excluding the query itself.
    /// Ties break by vocabulary order.
    pub fn most_similar(&self, word: &str, k: usize) -> Option<Vec<(String, f64)>> {
        let i = *self.index.get(word)?;
        let mut sims: Vec<(usize, f64)> = (0..self.words.len())
            .filter(|&j| j != i)
            .map(|j| (j, dot(&self.normed[i], &self.normed[j])))
            .collect();
        sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        sims.truncate(k);
        Some(sims.into_iter().map(|(j, s)| (self.words[j].clone(), s)).collect())
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for i in 0..400 {
            let s = match i % 4 {
                0 => "the cat ate some food near the house",
                1 => "the dog ate some food near the house",
                2 => "a car drove along roads past every town",
                _ => "a bus drove along roads past every town",
            };
            out.push(s.split(' ').map(String::from).collect());
        }
        out
    }

    #[test]
    fn related_words_are_closer() {
        let cfg = Word2VecConfig {
            min_count: 1,
            vector_size: 16,
            window: 3,
            epochs: 5,
            sample: 0.0,
            ..Default::default()
        };
        let m = Word2Vec::train(&corpus(), &cfg).unwrap();
        assert!(m.similarity("cat", "dog").unwrap() > m.similarity("cat", "bus").unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = Word2VecConfig {
            min_count: 1,
            vector_size: 4,
            epochs: 2,
            ..Default::default()
        };
        let a = Word2Vec::train(&corpus(), &cfg).unwrap();
        let b = Word2Vec::train(&corpus(), &cfg).unwrap();
        assert_eq!(a.normed, b.normed);
        assert!(Word2Vec::train(&[], &cfg).is_err());
    }
}
