//! Corpus ingestion: sentence splitting, noise cleaning and length filtering.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::SubwordTokenizer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub source: String,
}

/// A cleaned sentence as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sent_id: String,
    pub doc_id: String,
    pub words: Vec<String>,
}

impl SentenceRecord {
    pub fn new(sent_id: impl Into<String>, doc_id: impl Into<String>, words: Vec<String>) -> Self {
        SentenceRecord {
            sent_id: sent_id.into(),
            doc_id: doc_id.into(),
            words,
        }
    }

    /// Reconstructed sentence text.
    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    /// Number of tokens that carry at least one alphanumeric character.
    pub fn word_count(&self) -> usize {
        count_words(&self.words)
    }
}

fn count_words(words: &[String]) -> usize {
    words
        .iter()
        .filter(|w| w.chars().any(|c| c.is_ascii_alphanumeric()))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub max_subword_tokens: usize,
    pub min_words: usize,
    pub max_word_chars: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_subword_tokens: 128,
            min_words: 6,
            max_word_chars: 16,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_subword_tokens == 0 || self.min_words == 0 || self.max_word_chars == 0 {
            return Err(Error::Config("filter limits must be strictly positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub posts: usize,
    pub sentences: usize,
    pub sentences_filtered: usize,
    pub malformed: usize,
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "approx",
    "fig", "inc", "ltd",
];

fn is_abbreviation(token: &str) -> bool {
    let t = token
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .trim_end_matches('.')
        .to_ascii_lowercase();
    if t.chars().count() == 1 && t.chars().all(|c| c.is_alphabetic()) {
        return true;
    }
    ABBREVIATIONS.contains(&t.as_str())
}

/// Split text into sentences at terminal punctuation (`.`, `!`, `?`, possibly
/// followed by closing quotes or brackets) that precedes whitespace, and at
/// blank lines. Common abbreviations and single-letter initials do not end a
/// sentence. Returned slices are trimmed and non-empty.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut start = 0usize;
    let mut i = 0usize;
    fn push<'a>(out: &mut Vec<&'a str>, text: &'a str, s: usize, e: usize) {
        let seg = text[s..e].trim();
        if !seg.is_empty() {
            out.push(seg);
        }
    }
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        if c == '\n' {
            // blank line
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].1 != '\n' && bytes[j].1.is_whitespace() {
                j += 1;
            }
            if j < bytes.len() && bytes[j].1 == '\n' {
                push(&mut out, text, start, pos);
                start = bytes[j].0;
                i = j;
                continue;
            }
        }
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < bytes.len() && matches!(bytes[j].1, '.' | '!' | '?' | '"' | '\'' | ')' | ']') {
                j += 1;
            }
            let at_end = j >= bytes.len();
            if at_end || bytes[j].1.is_whitespace() {
                let end = if at_end { text.len() } else { bytes[j].0 };
                let token_start = text[start..pos]
                    .rfind(char::is_whitespace)
                    .map(|k| start + k + 1)
                    .unwrap_or(start);
                let token = &text[token_start..end];
                let abbreviation = c == '.' && j == i + 1 && is_abbreviation(token);
                if !abbreviation {
                    push(&mut out, text, start, end);
                    start = end;
                }
            }
            i = j;
            continue;
        }
        i += 1;
    }
    push(&mut out, text, start, text.len());
    out
}

fn html_tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]{1,64}>").expect("static regex"))
}

fn html_entity_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"&[a-zA-Z#0-9]{1,10};").expect("static regex"))
}

fn clean_once(text: &str, max_word_chars: usize) -> String {
    let ascii: String = text.chars().filter(char::is_ascii).collect();
    let no_tags = html_tag_re().replace_all(&ascii, " ");
    let no_entities = html_entity_re().replace_all(&no_tags, " ");
    no_entities
        .split_ascii_whitespace()
        .filter(|w| w.len() <= max_word_chars)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Remove non-ASCII characters, HTML tags and entities, and whitespace tokens
/// longer than `max_word_chars`; collapse whitespace to single spaces.
///
/// Applied until a fixed point, since removing one pattern can expose another.
pub fn clean_sentence(text: &str, max_word_chars: usize) -> String {
    let mut current = clean_once(text, max_word_chars);
    loop {
        let next = clean_once(&current, max_word_chars);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Split cleaned text into word tokens, detaching leading and trailing
/// punctuation runs ("coke." becomes "coke", ".").
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for tok in text.split_ascii_whitespace() {
        let core_start = tok.find(|c: char| !c.is_ascii_punctuation());
        let Some(core_start) = core_start else {
            out.push(tok.to_string());
            continue;
        };
        let core_end = tok
            .rfind(|c: char| !c.is_ascii_punctuation())
            .map(|k| k + 1)
            .unwrap_or(tok.len());
        if core_start > 0 {
            out.push(tok[..core_start].to_string());
        }
        out.push(tok[core_start..core_end].to_string());
        if core_end < tok.len() {
            out.push(tok[core_end..].to_string());
        }
    }
    out
}

/// True iff the sentence has at least `min_words` words and its wrapped
/// subword length (start and end tokens included) is within the limit.
pub fn passes_filter(
    sentence: &SentenceRecord,
    cfg: &FilterConfig,
    tokenizer: &dyn SubwordTokenizer,
) -> bool {
    sentence.word_count() >= cfg.min_words
        && tokenizer.wrapped_len(&sentence.words) <= cfg.max_subword_tokens
}

/// Check every stored-sentence invariant.
pub fn check_record(
    sentence: &SentenceRecord,
    cfg: &FilterConfig,
    tokenizer: &dyn SubwordTokenizer,
) -> bool {
    sentence.words.len() >= cfg.min_words
        && sentence
            .words
            .iter()
            .all(|w| !w.is_empty() && w.len() <= cfg.max_word_chars && w.is_ascii())
        && tokenizer.wrapped_len(&sentence.words) <= cfg.max_subword_tokens
}

/// Split, clean and filter one document. Returns the number of raw sentences
/// and the retained records.
pub fn process_document(
    doc: &RawDocument,
    cfg: &FilterConfig,
    tokenizer: &dyn SubwordTokenizer,
) -> (usize, Vec<SentenceRecord>) {
    let raw = split_sentences(&doc.text);
    let kept = raw
        .iter()
        .enumerate()
        .filter_map(|(k, seg)| {
            let cleaned = clean_sentence(seg, cfg.max_word_chars);
            let record = SentenceRecord::new(
                format!("{}#{}", doc.doc_id, k),
                doc.doc_id.clone(),
                word_tokens(&cleaned),
            );
            passes_filter(&record, cfg, tokenizer).then_some(record)
        })
        .collect();
    (raw.len(), kept)
}

#[derive(Deserialize)]
struct RawLine {
    id: Option<serde_json::Value>,
    text: String,
    #[serde(default)]
    source: String,
}

/// Read a JSONL stream of raw documents and produce the filtered sentence
/// store in input order. Malformed lines and duplicate ids are skipped and
/// counted.
pub fn ingest_corpus(
    input: &Path,
    cfg: &FilterConfig,
    tokenizer: &dyn SubwordTokenizer,
) -> Result<(Vec<SentenceRecord>, CorpusStats)> {
    cfg.validate()?;
    let file = File::open(input).map_err(|e| Error::UnreadableInput {
        path: input.to_path_buf(),
        source: e,
    })?;
    let mut stats = CorpusStats::default();
    let mut store = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::UnreadableInput {
            path: input.to_path_buf(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let Ok(raw) = serde_json::from_str::<RawLine>(&line) else {
            log::warn!("{}:{}: malformed record skipped", input.display(), lineno + 1);
            stats.malformed += 1;
            continue;
        };
        let doc_id = match raw.id {
            Some(serde_json::Value::String(s)) => s,
            Some(v) => v.to_string(),
            None => format!("line{}", lineno + 1),
        };
        if !seen.insert(doc_id.clone()) {
            log::warn!("{}:{}: duplicate id {doc_id:?} skipped", input.display(), lineno + 1);
            stats.malformed += 1;
            continue;
        }
        let doc = RawDocument {
            doc_id,
            text: raw.text,
            source: raw.source,
        };
        let (n_raw, kept) = process_document(&doc, cfg, tokenizer);
        stats.posts += 1;
        stats.sentences += n_raw;
        stats.sentences_filtered += kept.len();
        store.extend(kept);
    }
    Ok((store, stats))
}

/// In-memory counterpart of [`ingest_corpus`] for already-parsed documents.
pub fn ingest_documents(
    docs: &[RawDocument],
    cfg: &FilterConfig,
    tokenizer: &dyn SubwordTokenizer,
) -> Result<(Vec<SentenceRecord>, CorpusStats)> {
    cfg.validate()?;
    let mut stats = CorpusStats::default();
    let mut store = Vec::new();
    let mut seen = HashSet::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            stats.malformed += 1;
            continue;
        }
        let (n_raw, kept) = process_document(doc, cfg, tokenizer);
        stats.posts += 1;
        stats.sentences += n_raw;
        stats.sentences_filtered += kept.len();
        store.extend(kept);
    }
    Ok((store, stats))
}

pub fn write_store(path: &Path, store: &[SentenceRecord]) -> Result<()> {
    crate::util::write_jsonl(path, store)
}

pub fn read_store(path: &Path) -> Result<Vec<SentenceRecord>> {
    crate::util::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::WordLevelTokenizer;
    use proptest::prelude::*;

    fn rec(text: &str) -> SentenceRecord {
        SentenceRecord::new("s", "d", word_tokens(text))
    }

    #[test]
    fn splits_on_terminal_punctuation() {
        assert_eq!(
            split_sentences("I bought coke. It was pure."),
            vec!["I bought coke.", "It was pure."]
        );
        assert!(split_sentences("").is_empty());
        assert_eq!(
            split_sentences("No terminal punctuation here"),
            vec!["No terminal punctuation here"]
        );
    }

    #[test]
    fn splitter_handles_abbreviations_and_runs() {
        assert_eq!(
            split_sentences("Dr. Smith said no. Really?! Yes... ok"),
            vec!["Dr. Smith said no.", "Really?!", "Yes...", "ok"]
        );
        assert_eq!(split_sentences("v1.2 is out. next"), vec!["v1.2 is out.", "next"]);
        assert_eq!(split_sentences("first part\n\nsecond part"), vec!["first part", "second part"]);
    }

    #[test]
    fn cleaning_examples() {
        assert_eq!(clean_sentence("nice <br> stuff \u{2603} here", 16), "nice stuff here");
        assert_eq!(
            clean_sentence("pure supercalifragilisticexpialidocious powder", 16),
            "pure powder"
        );
        assert_eq!(clean_sentence("hello world", 16), "hello world");
        assert_eq!(clean_sentence("fish &amp; chips&#39;", 16), "fish chips");
    }

    #[test]
    fn cleaning_reaches_fixed_point_on_nested_patterns() {
        let long = "a".repeat(70);
        let text = format!("< {long} b>");
        let once = clean_once(&text, 16);
        assert_eq!(once, "< b>");
        assert_eq!(clean_sentence(&text, 16), "");
    }

    #[test]
    fn word_tokens_detach_punctuation() {
        assert_eq!(word_tokens("I bought coke."), vec!["I", "bought", "coke", "."]);
        assert_eq!(word_tokens("(really) don't ..."), vec!["(", "really", ")", "don't", "..."]);
    }

    #[test]
    fn filter_bounds() {
        let tok = WordLevelTokenizer::empty();
        let cfg = FilterConfig::default();
        assert!(!passes_filter(&rec("one two three four five"), &cfg, &tok));
        assert!(passes_filter(&rec("one two three four five six."), &cfg, &tok));
        let forty: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let long = rec(&forty.join(" "));
        assert!(passes_filter(&long, &cfg, &tok));
        let tight = FilterConfig {
            max_subword_tokens: 41,
            ..cfg
        };
        assert!(!passes_filter(&long, &tight, &tok));
    }

    #[test]
    fn filter_counts_subwords_with_wrappers() {
        use crate::tokenizer::{Vocab, WordPieceTokenizer};
        let tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "##b"]
            .map(String::from)
            .to_vec();
        let tok = WordPieceTokenizer::new(Vocab::from_tokens(tokens).unwrap(), true);
        // 6 words: four single pieces and two "ab" (two pieces each) -> 8 + 2 wrappers
        let s = rec("a a ab ab a a");
        assert_eq!(tok.wrapped_len(&s.words), 10);
        let cfg = FilterConfig::default();
        assert!(passes_filter(&s, &cfg, &tok));
        assert!(!passes_filter(&s, &FilterConfig { max_subword_tokens: 9, ..cfg }, &tok));
    }

    #[test]
    fn ingest_counts_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.jsonl");
        let lines = [
            r#"{"id":"a","text":"one two three four five six. short one.","source":"t"}"#,
            r#"not json"#,
            r#"{"id":"b","text":"seven eight nine ten eleven twelve thirteen.","source":"t"}"#,
            r#"{"id":"c","source":"t"}"#,
            r#"{"id":"d","text":"","source":"t"}"#,
        ];
        std::fs::write(&path, lines.join("\n")).unwrap();
        let (store, stats) =
            ingest_corpus(&path, &FilterConfig::default(), &WordLevelTokenizer::empty()).unwrap();
        assert_eq!(
            stats,
            CorpusStats {
                posts: 3,
                sentences: 3,
                sentences_filtered: 2,
                malformed: 2
            }
        );
        assert_eq!(store[0].sent_id, "a#0");
        assert_eq!(store[1].sent_id, "b#0");
    }

    #[test]
    fn ingest_empty_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let tok = WordLevelTokenizer::empty();
        let (store, stats) = ingest_corpus(&path, &FilterConfig::default(), &tok).unwrap();
        assert!(store.is_empty());
        assert_eq!(stats, CorpusStats::default());
        let missing = dir.path().join("nope.jsonl");
        assert!(matches!(
            ingest_corpus(&missing, &FilterConfig::default(), &tok),
            Err(Error::UnreadableInput { .. })
        ));
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(s in "(\\PC|<|>|&|;|#| ){0,120}") {
            let once = clean_sentence(&s, 16);
            prop_assert_eq!(clean_sentence(&once, 16), once.clone());
            prop_assert!(once.is_ascii());
            prop_assert!(!html_tag_re().is_match(&once));
            prop_assert!(!html_entity_re().is_match(&once));
            prop_assert!(once.split(' ').all(|w| w.len() <= 16));
            prop_assert!(!once.contains("  "));
        }

        #[test]
        fn splitting_preserves_content(s in "[a-z .!?\n]{0,200}") {
            let joined: String = split_sentences(&s).concat().split_whitespace().collect();
            let orig: String = s.split_whitespace().collect();
            prop_assert_eq!(joined, orig);
        }

        #[test]
        fn stronger_filter_retains_subset(
            words in proptest::collection::vec("[a-z]{1,8}", 0..30),
            min_a in 1usize..10, extra_min in 0usize..5,
            max_a in 5usize..40, less_max in 0usize..5,
        ) {
            let tok = WordLevelTokenizer::empty();
            let s = SentenceRecord::new("s", "d", words);
            let weak = FilterConfig { max_subword_tokens: max_a, min_words: min_a, max_word_chars: 16 };
            let strong = FilterConfig {
                max_subword_tokens: max_a.saturating_sub(less_max).max(1),
                min_words: min_a + extra_min,
                max_word_chars: 16,
            };
            if passes_filter(&s, &strong, &tok) {
                prop_assert!(passes_filter(&s, &weak, &tok));
            }
        }
    }
}
