//! Distant supervision: seed-term matching, pool splitting and labeled
//! dataset construction with controlled negative sampling.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRecord;
use crate::error::{Error, Result};
use crate::tagger::{Pos, PosTagger};
use crate::util::keyed_rng;

/// Word-index span `[start, end)`.
pub type Span = (usize, usize);

/// Known explicit terms (1 to 3 words each), stored lowercase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedTermList {
    terms: BTreeSet<String>,
    max_words: usize,
}

impl SeedTermList {
    pub fn new<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        let mut max_words = 0;
        for t in terms {
            let norm = t
                .as_ref()
                .split_whitespace()
                .map(str::to_lowercase)
                .collect::<Vec<_>>();
            if norm.is_empty() {
                continue;
            }
            if norm.len() > 3 {
                return Err(Error::malformed(
                    "seed term",
                    format!("{:?} has more than three words", t.as_ref()),
                ));
            }
            max_words = max_words.max(norm.len());
            set.insert(norm.join(" "));
        }
        if set.is_empty() {
            return Err(Error::EmptySeedList);
        }
        Ok(SeedTermList {
            terms: set,
            max_words,
        })
    }

    /// One term per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::UnreadableInput {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.terms.iter().map(|t| format!("{t}\n")).collect()
    }
}

/// Leftmost, longest-first, non-overlapping case-insensitive matches.
pub fn match_seed_spans(words: &[String], seeds: &SeedTermList) -> Vec<Span> {
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        let longest = seeds.max_words.min(lower.len() - i);
        let hit = (1..=longest)
            .rev()
            .find(|&len| seeds.contains(&lower[i..i + len].join(" ")));
        match hit {
            Some(len) => {
                spans.push((i, i + len));
                i += len;
            }
            None => i += 1,
        }
    }
    spans
}

fn is_alphanumeric_word(w: &str) -> bool {
    !w.is_empty()
        && w.chars().all(|c| c.is_ascii_alphanumeric())
        && w.chars().any(|c| c.is_ascii_alphabetic())
}

/// Indices of alphanumeric nouns outside every seed span.
pub fn extract_noun_candidates(
    words: &[String],
    seed_spans: &[Span],
    tagger: &dyn PosTagger,
) -> Vec<usize> {
    let tags = tagger.tag(words);
    (0..words.len())
        .filter(|&i| {
            is_alphanumeric_word(&words[i])
                && tags[i] == Pos::Noun
                && !seed_spans.iter().any(|&(s, e)| s <= i && i < e)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StmsSentence {
    pub record: SentenceRecord,
    pub spans: Vec<Span>,
}

/// Partition of the sentence store into seed-mentioning and other sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pools {
    pub stms: Vec<StmsSentence>,
    pub non_stms: Vec<SentenceRecord>,
}

pub fn split_pools(store: &[SentenceRecord], seeds: &SeedTermList) -> Pools {
    let mut pools = Pools::default();
    for record in store {
        let spans = match_seed_spans(&record.words, seeds);
        if spans.is_empty() {
            pools.non_stms.push(record.clone());
        } else {
            pools.stms.push(StmsSentence {
                record: record.clone(),
                spans,
            });
        }
    }
    pools
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Maximum negatives drawn from one seed-mentioning sentence.
    pub r_stms: usize,
    /// Non-seed-sentence negatives per positive sample.
    pub r_nonstms: f64,
    pub rng_seed: u64,
    pub valid_fraction: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            r_stms: 5,
            r_nonstms: 2.0,
            rng_seed: 42,
            valid_fraction: 0.2,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_nonstms >= 0.0 && self.r_nonstms.is_finite()) {
            return Err(Error::Config("r_nonstms must be a finite value >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.valid_fraction) {
            return Err(Error::Config("valid_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "POS")]
    Pos,
    #[serde(rename = "NEG_STMS")]
    NegStms,
    #[serde(rename = "NEG_NONSTMS")]
    NegNonStms,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Pos
    }

    pub fn target(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Pos => "POS",
            Label::NegStms => "NEG_STMS",
            Label::NegNonStms => "NEG_NONSTMS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Train,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sent_id: String,
    pub words: Vec<String>,
    pub target_start: usize,
    pub target_end: usize,
    pub label: Label,
    pub split: Split,
}

impl LabeledSample {
    pub fn span(&self) -> Span {
        (self.target_start, self.target_end)
    }

    pub fn target_text(&self) -> String {
        self.words[self.target_start..self.target_end]
            .iter()
            .map(|w| w.to_lowercase())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub pos: usize,
    pub neg_stms: usize,
    pub neg_nonstms: usize,
    pub train: usize,
    pub valid: usize,
    /// Requested non-seed negatives that could not be drawn.
    pub nonstms_shortfall: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub samples: Vec<LabeledSample>,
    pub counts: DatasetCounts,
}

impl LabeledDataset {
    pub fn from_samples(samples: Vec<LabeledSample>) -> Self {
        let mut counts = DatasetCounts::default();
        for s in &samples {
            match s.label {
                Label::Pos => counts.pos += 1,
                Label::NegStms => counts.neg_stms += 1,
                Label::NegNonStms => counts.neg_nonstms += 1,
            }
            match s.split {
                Split::Train => counts.train += 1,
                Split::Valid => counts.valid += 1,
            }
        }
        LabeledDataset { samples, counts }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn write(&self, path: &Path, counts_path: &Path) -> Result<()> {
        crate::util::write_jsonl(path, &self.samples)?;
        crate::util::write_json(counts_path, &self.counts)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let samples: Vec<LabeledSample> = crate::util::read_jsonl(path)?;
        for s in &samples {
            if !(s.target_start < s.target_end && s.target_end <= s.words.len()) {
                return Err(Error::SpanOutOfRange {
                    start: s.target_start,
                    end: s.target_end,
                    len: s.words.len(),
                });
            }
        }
        Ok(Self::from_samples(samples))
    }
}

fn hash_key(seed: u64, key: &str) -> u64 {
    keyed_rng(seed, key).gen()
}

/// Build the labeled dataset:
/// one positive per seed occurrence; up to `r_stms` distinct noun negatives per
/// seed-mentioning sentence; `round(r_nonstms * #POS)` negatives, one per
/// distinct non-seed sentence with at least one noun candidate. Draws are keyed
/// by sentence id, so the result does not depend on pool order within a split.
pub fn build_dataset(
    pools: &Pools,
    cfg: &SamplingConfig,
    tagger: &dyn PosTagger,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut samples = Vec::new();
    let sample_for = |rec: &SentenceRecord, span: Span, label: Label| LabeledSample {
        sent_id: rec.sent_id.clone(),
        words: rec.words.clone(),
        target_start: span.0,
        target_end: span.1,
        label,
        split: Split::Train,
    };

    for s in &pools.stms {
        for &span in &s.spans {
            samples.push(sample_for(&s.record, span, Label::Pos));
        }
        if cfg.r_stms == 0 {
            continue;
        }
        let candidates = extract_noun_candidates(&s.record.words, &s.spans, tagger);
        let take = cfg.r_stms.min(candidates.len());
        let mut rng = keyed_rng(cfg.rng_seed, &format!("neg_stms:{}", s.record.sent_id));
        let mut picked: Vec<usize> = sample(&mut rng, candidates.len(), take)
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        picked.sort_unstable();
        for i in picked {
            samples.push(sample_for(&s.record, (i, i + 1), Label::NegStms));
        }
    }

    let n_pos = samples.iter().filter(|s| s.label.is_positive()).count();
    let quota = (cfg.r_nonstms * n_pos as f64).round() as usize;
    let mut order: Vec<(u64, &SentenceRecord)> = pools
        .non_stms
        .iter()
        .map(|r| (hash_key(cfg.rng_seed, &format!("draw:{}", r.sent_id)), r))
        .collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.sent_id.cmp(&b.1.sent_id)));
    let mut drawn = 0;
    for (_, rec) in order {
        if drawn == quota {
            break;
        }
        let candidates = extract_noun_candidates(&rec.words, &[], tagger);
        if candidates.is_empty() {
            continue;
        }
        let mut rng = keyed_rng(cfg.rng_seed, &format!("neg_nonstms:{}", rec.sent_id));
        let i = candidates[rng.gen_range(0..candidates.len())];
        samples.push(sample_for(rec, (i, i + 1), Label::NegNonStms));
        drawn += 1;
    }
    if drawn < quota {
        log::warn!(
            "non-seed pool exhausted: drew {drawn} of {quota} requested negatives"
        );
    }

    assign_splits(&mut samples, cfg);
    let mut ds = LabeledDataset::from_samples(samples);
    ds.counts.nonstms_shortfall = quota - drawn;
    Ok(ds)
}

/// Stratified split: within each label, the `round(n * valid_fraction)`
/// samples with the smallest keyed hash go to VALID.
fn assign_splits(samples: &mut [LabeledSample], cfg: &SamplingConfig) {
    let mut by_label: HashMap<Label, Vec<(u64, usize)>> = HashMap::new();
    for (idx, s) in samples.iter().enumerate() {
        let key = format!("split:{}:{}:{}", s.sent_id, s.target_start, s.target_end);
        by_label
            .entry(s.label)
            .or_default()
            .push((hash_key(cfg.rng_seed, &key), idx));
    }
    for group in by_label.values_mut() {
        group.sort_by(|a, b| a.0.cmp(&b.0).then(Ordering::Equal).then(a.1.cmp(&b.1)));
        let n_valid = (group.len() as f64 * cfg.valid_fraction).round() as usize;
        for &(_, idx) in group.iter().take(n_valid) {
            samples[idx].split = Split::Valid;
        }
    }
}
