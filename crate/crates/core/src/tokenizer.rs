//! Subword tokenizers with word-to-subword alignment.
//!
//! Two vocabularies are supported behind [`SubwordTokenizer`]:
//! a word-level tokenizer built from the corpus (one token per word, used by
//! the desk-scale encoder profile) and a WordPiece tokenizer compatible with
//! BERT-style `vocab.txt` files.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

/// Subword tokenizer with reserved start, end and mask tokens.
pub trait SubwordTokenizer {
    /// Subword ids for a single word. Never empty: unknown input maps to UNK.
    fn tokenize_word(&self, word: &str) -> Vec<u32>;
    fn vocab(&self) -> &Vocab;

    fn vocab_size(&self) -> usize {
        self.vocab().len()
    }
    fn cls_id(&self) -> u32 {
        self.vocab().cls
    }
    fn sep_id(&self) -> u32 {
        self.vocab().sep
    }
    fn mask_id(&self) -> u32 {
        self.vocab().mask
    }
    fn unk_id(&self) -> u32 {
        self.vocab().unk
    }

    /// Subword ids for a word sequence plus, per word, the range of
    /// positions it occupies in `ids` (no wrapper tokens included).
    fn encode_words(&self, words: &[String]) -> Encoding {
        let mut ids = Vec::new();
        let mut spans = Vec::with_capacity(words.len());
        for w in words {
            let start = ids.len();
            ids.extend(self.tokenize_word(w));
            spans.push(start..ids.len());
        }
        Encoding { ids, spans }
    }

    /// Subword length of the sentence including the start and end wrappers.
    fn wrapped_len(&self, words: &[String]) -> usize {
        words.iter().map(|w| self.tokenize_word(w).len()).sum::<usize>() + 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub spans: Vec<Range<usize>>,
}

/// Token strings indexed by id, plus the resolved special ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::malformed("vocabulary", format!("duplicate token {t:?}")));
            }
        }
        let special = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::malformed("vocabulary", format!("missing {name}")))
        };
        Ok(Vocab {
            pad: special(PAD)?,
            unk: special(UNK)?,
            cls: special(CLS)?,
            sep: special(SEP)?,
            mask: special(MASK)?,
            tokens,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(&self, id: u32) -> bool {
        [self.pad, self.unk, self.cls, self.sep, self.mask].contains(&id)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

/// One token per (lowercased) word; out-of-vocabulary words map to UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordLevelTokenizer {
    vocab: Vocab,
}

impl WordLevelTokenizer {
    /// A vocabulary holding only the special tokens. Useful for counting
    /// lengths before a corpus vocabulary exists, since every word still
    /// occupies exactly one position.
    pub fn empty() -> Self {
        Self::from_words(std::iter::empty::<&str>(), 1)
    }

    /// Build from word occurrences, keeping words seen at least `min_count`
    /// times. Ids are assigned by descending count, then lexicographically.
    pub fn from_words<'a, I, S>(words: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str> + 'a,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for w in words {
            *counts.entry(w.as_ref().to_lowercase()).or_default() += 1;
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count.max(1) && !SPECIALS.contains(&w.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(w, _)| w))
            .collect();
        WordLevelTokenizer {
            vocab: Vocab::from_tokens(tokens).expect("specials are present and unique"),
        }
    }

    pub fn from_vocab(vocab: Vocab) -> Self {
        WordLevelTokenizer { vocab }
    }
}

impl SubwordTokenizer for WordLevelTokenizer {
    fn tokenize_word(&self, word: &str) -> Vec<u32> {
        vec![self.vocab.id(&word.to_lowercase()).unwrap_or(self.vocab.unk)]
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }
}

/// Greedy longest-match-first WordPiece with `##` continuation pieces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPieceTokenizer {
    vocab: Vocab,
    lowercase: bool,
    max_word_chars: usize,
}

impl WordPieceTokenizer {
    pub fn new(vocab: Vocab, lowercase: bool) -> Self {
        WordPieceTokenizer {
            vocab,
            lowercase,
            max_word_chars: 100,
        }
    }

    pub fn from_vocab_file(path: &Path, lowercase: bool) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::UnreadableInput {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(Self::new(Vocab::from_text(&text)?, lowercase))
    }
}

impl SubwordTokenizer for WordPieceTokenizer {
    fn tokenize_word(&self, word: &str) -> Vec<u32> {
        let word = if self.lowercase {
            word.to_lowercase()
        } else {
            word.to_string()
        };
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() || chars.len() > self.max_word_chars {
            return vec![self.vocab.unk];
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(id) = self.vocab.id(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => return vec![self.vocab.unk],
            }
        }
        pieces
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerKind {
    WordLevel,
    WordPiece,
}

/// Owned tokenizer of either kind, as stored inside checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tokenizer {
    WordLevel(WordLevelTokenizer),
    WordPiece(WordPieceTokenizer),
}

impl Tokenizer {
    pub fn kind(&self) -> TokenizerKind {
        match self {
            Tokenizer::WordLevel(_) => TokenizerKind::WordLevel,
            Tokenizer::WordPiece(_) => TokenizerKind::WordPiece,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, self.vocab().to_text().as_bytes())
    }

    pub fn load(kind: TokenizerKind, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::UnreadableInput {
            path: path.to_path_buf(),
            source: e,
        })?;
        let vocab = Vocab::from_text(&text)?;
        Ok(match kind {
            TokenizerKind::WordLevel => Tokenizer::WordLevel(WordLevelTokenizer::from_vocab(vocab)),
            TokenizerKind::WordPiece => Tokenizer::WordPiece(WordPieceTokenizer::new(vocab, true)),
        })
    }
}

impl SubwordTokenizer for Tokenizer {
    fn tokenize_word(&self, word: &str) -> Vec<u32> {
        match self {
            Tokenizer::WordLevel(t) => t.tokenize_word(word),
            Tokenizer::WordPiece(t) => t.tokenize_word(word),
        }
    }

    fn vocab(&self) -> &Vocab {
        match self {
            Tokenizer::WordLevel(t) => t.vocab(),
            Tokenizer::WordPiece(t) => t.vocab(),
        }
    }
}
