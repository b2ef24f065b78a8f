//! Synthetic forum corpus for behavioral checks.
//!
//! Drug-talk and benign templates are written in parallel so that only the
//! surrounding context separates them. Drug slots are filled with explicit
//! pseudo-drug names (all seeds), with pseudo-jargon words (half of them
//! seeds, half never seen as seeds) or with euphemisms, which also fill the
//! benign templates in their everyday sense.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{clean_sentence, word_tokens, RawDocument};
use crate::error::{Error, Result};
use crate::evalkit::AnnotatedSentence;
use crate::supervision::SeedTermList;
use crate::tagger::{LexiconTagger, Pos, RuleTagger};
use crate::util::{keyed_rng, write_atomic, write_jsonl};

// `{D}` is the drug slot, `{B}` the benign slot; `^word` marks a noun.
const DRUG_TEMPLATES: &[&str] = &[
    "i picked up some {D} from my ^dealer last {T} .",
    "we smoked {D} all {T} and got really high .",
    "how much {D} should i take for my first ^trip ?",
    "my ^plug sold me a ^gram of {D} for {M} ^bucks .",
    "he overdosed on {D} at a ^rave in {C} .",
    "never mix {D} with ^alcohol if you want to stay safe .",
    "i snorted a ^line of {D} before the ^party started .",
    "the {D} ^comedown hit me hard the next ^morning .",
    "anyone know a reliable ^vendor for {D} in {C} ?",
    "tested my {D} with a ^reagent ^kit and it came back pure .",
    "been sober from {D} for {M} ^days now .",
    "dosed {D} last {T} and the ^buzz lasted ^hours .",
];

const BENIGN_TEMPLATES: &[&str] = &[
    "i picked up some {B} from the ^store last {T} .",
    "we cooked {B} all {T} and it tasted great .",
    "how much {B} should i buy for the ^family ^dinner ?",
    "my ^neighbor sold me a ^bag of {B} for {M} ^bucks .",
    "the ^kids played with {B} at the ^park in {C} .",
    "never leave {B} outside if you want it to stay fresh .",
    "i bought a ^box of {B} before the ^party started .",
    "the {B} ^delivery arrived late the next ^morning .",
    "anyone know a good ^shop for {B} in {C} ?",
    "washed my {B} with warm ^water and it came back shiny .",
    "been collecting {B} for {M} ^days now .",
    "grew {B} last {T} and the ^harvest lasted ^weeks .",
];

const TIMES: &[&str] = &["night", "week", "weekend", "friday", "saturday", "summer"];
const AMOUNTS: &[&str] = &["twenty", "forty", "fifty", "sixty", "eighty", "hundred"];
const CITIES: &[&str] = &["boston", "denver", "chicago", "austin", "seattle", "portland", "miami", "dallas"];

const EUPHEMISMS: &[&str] = &["snow", "ice", "candy", "grass", "crystal", "powder", "rocks", "beans"];
const BENIGN_NOUNS: &[&str] = &[
    "bread", "apples", "rice", "flour", "cookies", "pasta", "cheese", "coffee", "tea", "flowers",
    "tomatoes", "paint", "shoes", "books", "soap", "milk", "eggs", "butter", "chocolate",
    "peppers", "stamps", "shells", "coins", "lemons", "onions", "honey", "yarn", "cards",
];

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gl", "kr",
    "pl", "tr", "sk", "st",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const CODAS: &[&str] = &["x", "n", "r", "l", "m", "z", "k"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub explicit_drugs: usize,
    /// Pseudo-jargon words; the first half become seeds.
    pub jargon_words: usize,
    pub sentences: usize,
    pub drug_fraction: f64,
    /// Share of drug sentences filled with unseen jargon and with euphemisms.
    pub unseen_share: f64,
    pub euphemism_drug_share: f64,
    /// Share of benign sentences whose slot is a euphemism.
    pub euphemism_benign_share: f64,
    pub eval_unseen_sentences: usize,
    pub eval_euphemism_sentences: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            explicit_drugs: 38,
            jargon_words: 16,
            sentences: 3000,
            drug_fraction: 0.2,
            unseen_share: 0.1,
            euphemism_drug_share: 0.1,
            euphemism_benign_share: 0.2,
            eval_unseen_sentences: 300,
            eval_euphemism_sentences: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLexicon {
    pub explicit_drugs: Vec<String>,
    pub seeded_jargon: Vec<String>,
    pub unseen_jargon: Vec<String>,
    pub euphemisms: Vec<String>,
    pub benign_nouns: Vec<String>,
}

impl SynthLexicon {
    pub fn seeds(&self) -> Vec<String> {
        self.explicit_drugs.iter().chain(&self.seeded_jargon).cloned().collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub lexicon: SynthLexicon,
    pub documents: Vec<RawDocument>,
    pub seeds: SeedTermList,
    /// word -> coarse tag for every template and filler word.
    pub pos_lexicon: BTreeMap<String, String>,
    /// Held-out drug sentences with unseen jargon plus benign sentences;
    /// gold jargon is the unseen word, candidates are every noun.
    pub eval_unseen: Vec<AnnotatedSentence>,
    /// Held-out euphemism uses; the only candidate is the euphemism.
    pub eval_euphemism: Vec<AnnotatedSentence>,
}

fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let tagger = RuleTagger::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = format!(
            "{}{}{}{}{}",
            ONSETS.choose(rng).unwrap(),
            VOWELS.choose(rng).unwrap(),
            ONSETS.choose(rng).unwrap(),
            VOWELS.choose(rng).unwrap(),
            CODAS.choose(rng).unwrap()
        );
        if tagger.tag_word(&w) == Pos::Noun && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn lexicon(cfg: &SynthConfig) -> SynthLexicon {
    let mut rng = keyed_rng(cfg.seed, "synth-lexicon");
    let mut taken: BTreeSet<String> = EUPHEMISMS.iter().chain(BENIGN_NOUNS).map(|s| s.to_string()).collect();
    let explicit = pseudo_words(&mut rng, cfg.explicit_drugs, &mut taken);
    let jargon = pseudo_words(&mut rng, cfg.jargon_words, &mut taken);
    let half = cfg.jargon_words / 2;
    SynthLexicon {
        explicit_drugs: explicit,
        seeded_jargon: jargon[..half].to_vec(),
        unseen_jargon: jargon[half..].to_vec(),
        euphemisms: EUPHEMISMS.iter().map(|s| s.to_string()).collect(),
        benign_nouns: BENIGN_NOUNS.iter().map(|s| s.to_string()).collect(),
    }
}

/// A rendered template: words plus the slot's word index.
struct Rendered {
    words: Vec<String>,
    slot: usize,
    nouns: Vec<usize>,
}

fn render(template: &str, filler: &str, rng: &mut ChaCha8Rng) -> Rendered {
    let mut words = Vec::new();
    let mut slot = usize::MAX;
    let mut nouns = Vec::new();
    for tok in template.split(' ') {
        let (word, noun) = match tok {
            "{D}" | "{B}" => {
                slot = words.len();
                (filler.to_string(), true)
            }
            "{T}" => (TIMES.choose(rng).unwrap().to_string(), true),
            "{C}" => (CITIES.choose(rng).unwrap().to_string(), true),
            "{M}" => (AMOUNTS.choose(rng).unwrap().to_string(), false),
            t if t.starts_with('^') => (t[1..].to_string(), true),
            t => (t.to_string(), false),
        };
        if noun {
            nouns.push(words.len());
        }
        words.push(word);
    }
    Rendered { words, slot, nouns }
}

fn text_of(r: &Rendered) -> String {
    r.words.join(" ")
}

/// Words as the ingestion pipeline would produce them from `text`.
fn ingest_words(text: &str) -> Vec<String> {
    word_tokens(&clean_sentence(text, 16))
}

fn pos_lexicon(lex: &SynthLexicon) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for t in DRUG_TEMPLATES.iter().chain(BENIGN_TEMPLATES) {
        for tok in t.split(' ') {
            if tok.starts_with('{') {
                continue;
            }
            let (w, tag) = match tok.strip_prefix('^') {
                Some(w) => (w, "NOUN"),
                None if tok.chars().all(|c| c.is_ascii_punctuation()) => (tok, "PUNCT"),
                None => (tok, "X"),
            };
            out.insert(w.to_string(), tag.to_string());
        }
    }
    let nouns = TIMES
        .iter()
        .chain(CITIES)
        .map(|s| s.to_string())
        .chain(lex.explicit_drugs.iter().cloned())
        .chain(lex.seeded_jargon.iter().cloned())
        .chain(lex.unseen_jargon.iter().cloned())
        .chain(lex.euphemisms.iter().cloned())
        .chain(lex.benign_nouns.iter().cloned());
    for w in nouns {
        out.insert(w, "NOUN".to_string());
    }
    for w in AMOUNTS {
        out.insert(w.to_string(), "NUM".to_string());
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.jargon_words < 2 || cfg.explicit_drugs == 0 || cfg.sentences == 0 {
        return Err(Error::Config("synthetic corpus sizes must be positive".into()));
    }
    let lex = lexicon(cfg);
    let seeds = SeedTermList::new(lex.seeds())?;
    let mut rng = keyed_rng(cfg.seed, "synth-corpus");

    let seed_terms = lex.seeds();
    let drug_filler = |rng: &mut ChaCha8Rng| -> String {
        let r: f64 = rng.gen();
        if r < cfg.unseen_share {
            lex.unseen_jargon.choose(rng).unwrap().clone()
        } else if r < cfg.unseen_share + cfg.euphemism_drug_share {
            lex.euphemisms.choose(rng).unwrap().clone()
        } else {
            seed_terms.choose(rng).unwrap().clone()
        }
    };
    let benign_filler = |rng: &mut ChaCha8Rng| -> String {
        if rng.gen::<f64>() < cfg.euphemism_benign_share {
            lex.euphemisms.choose(rng).unwrap().clone()
        } else {
            lex.benign_nouns.choose(rng).unwrap().clone()
        }
    };

    let mut sentences = Vec::with_capacity(cfg.sentences);
    for _ in 0..cfg.sentences {
        let r = if rng.gen::<f64>() < cfg.drug_fraction {
            let f = drug_filler(&mut rng);
            render(DRUG_TEMPLATES.choose(&mut rng).unwrap(), &f, &mut rng)
        } else {
            let f = benign_filler(&mut rng);
            render(BENIGN_TEMPLATES.choose(&mut rng).unwrap(), &f, &mut rng)
        };
        sentences.push(text_of(&r));
    }
    let mut documents = Vec::new();
    let mut i = 0;
    while i < sentences.len() {
        let n = rng.gen_range(1..=4).min(sentences.len() - i);
        documents.push(RawDocument {
            doc_id: format!("post{:05}", documents.len()),
            text: sentences[i..i + n].join(" "),
            source: "synthetic".into(),
        });
        i += n;
    }

    let mut eval_rng = keyed_rng(cfg.seed, "synth-eval");
    let mut eval_unseen = Vec::new();
    for k in 0..cfg.eval_unseen_sentences {
        let (r, gold) = if k % 2 == 0 {
            let w = lex.unseen_jargon[(k / 2) % lex.unseen_jargon.len()].clone();
            (render(DRUG_TEMPLATES.choose(&mut eval_rng).unwrap(), &w, &mut eval_rng), true)
        } else {
            let w = lex.benign_nouns.choose(&mut eval_rng).unwrap().clone();
            (render(BENIGN_TEMPLATES.choose(&mut eval_rng).unwrap(), &w, &mut eval_rng), false)
        };
        eval_unseen.push(annotate(&r, gold, false));
    }
    let mut eval_euphemism = Vec::new();
    for k in 0..cfg.eval_euphemism_sentences {
        let w = lex.euphemisms[(k / 2) % lex.euphemisms.len()].clone();
        let drug = k % 2 == 0;
        let templates = if drug { DRUG_TEMPLATES } else { BENIGN_TEMPLATES };
        let r = render(templates.choose(&mut eval_rng).unwrap(), &w, &mut eval_rng);
        eval_euphemism.push(annotate(&r, drug, true));
    }

    Ok(SynthCorpus {
        pos_lexicon: pos_lexicon(&lex),
        lexicon: lex,
        documents,
        seeds,
        eval_unseen,
        eval_euphemism,
    })
}

fn annotate(r: &Rendered, gold: bool, slot_only: bool) -> AnnotatedSentence {
    let words = ingest_words(&text_of(r));
    debug_assert_eq!(words, r.words);
    AnnotatedSentence {
        words,
        jargon_indices: if gold { vec![r.slot] } else { Vec::new() },
        candidate_indices: Some(if slot_only { vec![r.slot] } else { r.nouns.clone() }),
    }
}

impl SynthCorpus {
    pub fn tagger(&self) -> LexiconTagger {
        LexiconTagger::from_entries(self.pos_lexicon.iter().map(|(w, t)| (w.clone(), t.clone())))
    }

    /// Seeded and unseen pseudo-jargon words.
    pub fn all_jargon(&self) -> BTreeSet<String> {
        let l = &self.lexicon;
        l.seeded_jargon.iter().chain(&l.unseen_jargon).cloned().collect()
    }

    /// Writes corpus.jsonl, seeds.txt, lexicon.tsv, eval_unseen.jsonl,
    /// eval_euphemism.jsonl and lexicon.json into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_jsonl(&dir.join("corpus.jsonl"), &self.documents)?;
        write_atomic(&dir.join("seeds.txt"), self.seeds.to_text().as_bytes())?;
        let mut tsv = String::new();
        for (w, t) in &self.pos_lexicon {
            tsv.push_str(&format!("{w}\t{t}\n"));
        }
        write_atomic(&dir.join("lexicon.tsv"), tsv.as_bytes())?;
        write_jsonl(&dir.join("eval_unseen.jsonl"), &self.eval_unseen)?;
        write_jsonl(&dir.join("eval_euphemism.jsonl"), &self.eval_euphemism)?;
        crate::util::write_json(&dir.join("lexicon.json"), &self.lexicon)
    }
}

/// True when every token of every template has one consistent tag.
pub fn templates_are_consistent() -> bool {
    let mut seen: BTreeMap<&str, bool> = BTreeMap::new();
    for t in DRUG_TEMPLATES.iter().chain(BENIGN_TEMPLATES) {
        for tok in t.split(' ').filter(|t| !t.starts_with('{')) {
            let (w, noun) = match tok.strip_prefix('^') {
                Some(w) => (w, true),
                None => (tok, false),
            };
            if *seen.entry(w).or_insert(noun) != noun {
                return false;
            }
        }
    }
    true
}
