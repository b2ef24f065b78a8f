//! Part-of-speech tagging used to pick noun candidates.
//!
//! [`RuleTagger`] is a deterministic lexicon-plus-suffix tagger. [`LexiconTagger`]
//! adapts a word/tag lexicon exported from an external tagger (one
//! `word<TAB>TAG` pair per line, Penn or universal tags) and falls back to the
//! rule tagger for words it does not list.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Pron,
    Det,
    Adp,
    Conj,
    Num,
    Part,
    Punct,
    Other,
}

pub trait PosTagger: Send + Sync {
    fn tag(&self, words: &[String]) -> Vec<Pos>;
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every", "no",
    "another", "all", "both", "either", "neither", "much", "many", "few", "several", "such",
    "what", "which", "whatever",
];
const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "he", "him", "his",
    "himself", "she", "her", "hers", "herself", "it", "its", "itself", "we", "us", "our", "ours",
    "ourselves", "they", "them", "their", "theirs", "themselves", "who", "whom", "whose",
    "someone", "anyone", "everyone", "something", "anything", "everything", "nothing", "nobody",
    "somebody", "anybody", "everybody", "one", "i'm", "i've", "i'd", "i'll", "you're", "it's",
    "we're", "they're", "he's", "she's", "there's", "that's",
];
const ADPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "by", "for", "with", "about", "against", "between", "into",
    "through", "during", "before", "after", "above", "below", "to", "from", "up", "down", "out",
    "off", "over", "under", "around", "near", "across", "behind", "beside", "without", "within",
    "along", "among", "until", "upon", "via", "per", "like", "than", "since", "toward",
    "towards",
];
const CONJUNCTIONS: &[&str] = &[
    "and", "or", "but", "nor", "so", "yet", "because", "although", "though", "while", "if",
    "unless", "whether", "when", "where", "whenever", "as", "then",
];
const PARTICLES: &[&str] = &["not", "n't", "to", "'s", "there", "too", "also", "just", "only"];
const ADVERBS: &[&str] = &[
    "very", "really", "again", "still", "always", "never", "often", "sometimes", "here", "now",
    "soon", "ever", "already", "almost", "even", "quite", "pretty", "super", "way", "once",
    "twice", "back", "away", "together", "tonight", "today", "yesterday", "tomorrow", "later",
    "ago", "maybe", "instead", "all", "more", "most", "less", "least", "well", "how", "why",
    "fast", "hard", "straight",
];
const VERBS: &[&str] = &[
    "is", "am", "are", "was", "were", "be", "been", "being", "have", "has", "had", "do", "does",
    "did", "done", "will", "would", "can", "could", "should", "shall", "may", "might", "must",
    "get", "got", "gets", "gotten", "go", "goes", "went", "gone", "make", "made", "take", "took",
    "taken", "give", "gave", "given", "buy", "bought", "sell", "sold", "try", "tried", "use",
    "used", "find", "found", "feel", "felt", "hit", "snort", "snorted", "smoke", "smoked",
    "inject", "injected", "shot", "pop", "popped", "drop", "dropped", "order", "ordered",
    "ship", "shipped", "see", "saw", "seen", "say", "said", "know", "knew", "think", "thought",
    "want", "wanted", "need", "needed", "like", "liked", "love", "loved", "hate", "kept", "keep",
    "put", "ran", "run", "walk", "walked", "watch", "watched", "play", "played", "read", "wrote",
    "write", "cook", "cooked", "clean", "cleaned", "fix", "fixed", "paint", "painted", "wash",
    "washed", "fell", "fall", "covered", "cover", "bake", "baked", "grew", "grow", "brought",
    "bring", "carried", "carry", "mixed", "mix", "rolled", "roll", "picked", "pick", "come",
    "came", "left", "leave", "met", "meet", "helped", "help", "lost", "lose", "won", "win",
    "told", "tell", "asked", "ask", "started", "start", "stopped", "stop", "scored", "spent",
    "spend", "sent", "send", "paid", "pay", "swept", "sweep", "dusted", "shoveled", "melted",
    "ate", "eat", "drank", "drink", "sat", "sit", "stood", "slept", "sleep", "woke", "wake",
    "looked", "look", "called", "call", "tasted", "taste", "arrived", "arrive", "delivered",
    "dosed", "dose", "crushed", "crush", "burned", "burn", "cut", "cuts", "sniffed", "kicked",
    "kick", "hits", "sells", "buys", "makes", "gives", "feels", "took", "tripped", "trip",
    "peaked", "craving", "crave", "craved", "spilled", "spill", "poured", "pour", "filled",
    "fill", "built", "build", "cleared", "clear", "loaded", "load", "hid", "hide", "stashed",
    "stash", "weighed", "weigh", "tested", "test", "laced", "lace", "scored", "planted",
    "plant", "mowed", "mow", "glued", "glue", "drew", "draw",
];
const ADJECTIVES: &[&str] = &[
    "good", "bad", "great", "new", "old", "big", "small", "little", "long", "short", "high",
    "low", "best", "worst", "better", "worse", "pure", "clean", "strong", "weak", "cheap",
    "expensive", "fat", "huge", "tiny", "nice", "fine", "whole", "last", "next", "first",
    "second", "few", "white", "black", "red", "blue", "green", "brown", "fresh", "dry", "wet",
    "cold", "hot", "warm", "heavy", "light", "real", "fake", "same", "other", "own", "amazing",
    "awesome", "crazy", "quick", "slow", "full", "empty", "entire", "free", "happy", "sad",
    "sick", "tired", "local", "legit", "solid", "decent", "rough", "smooth", "bright", "dark",
    "deep", "thick", "thin", "sweet", "bitter", "loud", "quiet", "early", "late", "lovely",
    "dirty", "messy", "shiny", "broken", "sticky", "cloudy", "sunny", "rainy", "frozen",
];

/// Lexicon and suffix rules; unknown alphabetic words default to nouns.
#[derive(Debug, Clone, Default)]
pub struct RuleTagger {
    overrides: HashMap<String, Pos>,
}

impl RuleTagger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add word-specific tags that take precedence over the built-in rules.
    pub fn with_overrides(mut self, entries: impl IntoIterator<Item = (String, Pos)>) -> Self {
        self.overrides
            .extend(entries.into_iter().map(|(w, p)| (w.to_lowercase(), p)));
        self
    }

    pub fn tag_word(&self, word: &str) -> Pos {
        let lower = word.to_lowercase();
        if let Some(p) = self.overrides.get(&lower) {
            return *p;
        }
        if lower.is_empty() || lower.chars().all(|c| c.is_ascii_punctuation()) {
            return Pos::Punct;
        }
        if lower.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
            return Pos::Num;
        }
        let w = lower.as_str();
        let table: [(&[&str], Pos); 8] = [
            (PRONOUNS, Pos::Pron),
            (DETERMINERS, Pos::Det),
            (VERBS, Pos::Verb),
            (ADPOSITIONS, Pos::Adp),
            (CONJUNCTIONS, Pos::Conj),
            (PARTICLES, Pos::Part),
            (ADJECTIVES, Pos::Adj),
            (ADVERBS, Pos::Adv),
        ];
        for (list, pos) in table {
            if list.contains(&w) {
                return pos;
            }
        }
        if !w.chars().any(|c| c.is_ascii_alphabetic()) {
            return Pos::Other;
        }
        let len = w.len();
        if len > 4 && w.ends_with("ly") {
            return Pos::Adv;
        }
        if len > 5 && (w.ends_with("ing") || w.ends_with("ed")) {
            return Pos::Verb;
        }
        if len > 5
            && ["ous", "ful", "ive", "able", "ible", "less"]
                .iter()
                .any(|s| w.ends_with(s))
        {
            return Pos::Adj;
        }
        Pos::Noun
    }
}

impl PosTagger for RuleTagger {
    fn tag(&self, words: &[String]) -> Vec<Pos> {
        words.iter().map(|w| self.tag_word(w)).collect()
    }
}

/// Tagger backed by an externally produced word/tag lexicon.
#[derive(Debug, Clone, Default)]
pub struct LexiconTagger {
    lexicon: HashMap<String, Pos>,
    fallback: RuleTagger,
}

/// Map Penn Treebank or universal tags to coarse classes.
pub fn coarse_tag(tag: &str) -> Pos {
    let t = tag.trim().to_ascii_uppercase();
    match t.as_str() {
        "NOUN" | "PROPN" | "NN" | "NNS" | "NNP" | "NNPS" => Pos::Noun,
        "VERB" | "AUX" | "MD" => Pos::Verb,
        "ADJ" => Pos::Adj,
        "ADV" | "WRB" => Pos::Adv,
        "PRON" | "PRP" | "PRP$" | "WP" | "WP$" => Pos::Pron,
        "DET" | "DT" | "PDT" | "WDT" => Pos::Det,
        "ADP" | "IN" => Pos::Adp,
        "CONJ" | "CCONJ" | "SCONJ" | "CC" => Pos::Conj,
        "NUM" | "CD" => Pos::Num,
        "PART" | "RP" | "TO" | "POS" => Pos::Part,
        "PUNCT" | "." | "," | ":" | "``" | "''" => Pos::Punct,
        _ if t.starts_with("VB") => Pos::Verb,
        _ if t.starts_with("JJ") => Pos::Adj,
        _ if t.starts_with("RB") => Pos::Adv,
        _ => Pos::Other,
    }
}

impl LexiconTagger {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        LexiconTagger {
            lexicon: entries
                .into_iter()
                .map(|(w, t)| (w.to_lowercase(), coarse_tag(&t)))
                .collect(),
            fallback: RuleTagger::new(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::UnreadableInput {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (w, t) = line.split_once('\t').ok_or_else(|| {
                Error::malformed(format!("{}:{}", path.display(), n + 1), "expected word<TAB>tag")
            })?;
            entries.push((w.to_string(), t.to_string()));
        }
        Ok(Self::from_entries(entries))
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, words: &[String]) -> Vec<Pos> {
        words
            .iter()
            .map(|w| {
                self.lexicon
                    .get(&w.to_lowercase())
                    .copied()
                    .unwrap_or_else(|| self.fallback.tag_word(w))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(t: &dyn PosTagger, s: &str) -> Vec<Pos> {
        let words: Vec<String> = s.split(' ').map(String::from).collect();
        t.tag(&words)
    }

    #[test]
    fn rule_tagger_basics() {
        let t = RuleTagger::new();
        let nouns: Vec<bool> = tags(&t, "cocaine was super clean on the nose")
            .into_iter()
            .map(|p| p == Pos::Noun)
            .collect();
        assert_eq!(nouns, vec![true, false, false, false, false, false, true]);
        assert_eq!(tags(&t, "quickly walking . 42"), vec![Pos::Adv, Pos::Verb, Pos::Punct, Pos::Num]);
        assert_eq!(t.tag_word("c0caine"), Pos::Noun);
        assert_eq!(t.tag_word("dangerous"), Pos::Adj);
    }

    #[test]
    fn overrides_win() {
        let t = RuleTagger::new().with_overrides([("Nose".to_string(), Pos::Verb)]);
        assert_eq!(t.tag_word("nose"), Pos::Verb);
    }

    #[test]
    fn lexicon_tagger_maps_penn_tags() {
        let t = LexiconTagger::from_entries([
            ("run".to_string(), "NN".to_string()),
            ("blue".to_string(), "VBD".to_string()),
        ]);
        assert_eq!(tags(&t, "run blue house"), vec![Pos::Noun, Pos::Verb, Pos::Noun]);
    }
}
