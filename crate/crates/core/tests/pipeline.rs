//! Small end-to-end runs through the library API.

use jargon::checkpoint::{load_bundle, save_bundle};
use jargon::corpus::{ingest_documents, FilterConfig, SentenceRecord};
use jargon::detect::{detect_word, score_corpus, ScoreConfig, Target};
use jargon::encoder::{Encoder, EncoderConfig};
use jargon::evalkit::{evaluate, ListPredictor};
use jargon::model::{train, HeadConfig, ModelBundle, TrainConfig};
use jargon::supervision::{build_dataset, split_pools, SamplingConfig, Split};
use jargon::synth::{generate, SynthConfig};
use jargon::tokenizer::{SubwordTokenizer, Tokenizer, WordLevelTokenizer};
use jargon::Error;

fn small() -> (jargon::synth::SynthCorpus, Vec<SentenceRecord>, WordLevelTokenizer) {
    let synth = generate(&SynthConfig {
        sentences: 400,
        ..Default::default()
    })
    .unwrap();
    let (store, stats) = ingest_documents(&synth.documents, &FilterConfig::default(), &WordLevelTokenizer::empty()).unwrap();
    assert_eq!(stats.malformed, 0);
    let tok = WordLevelTokenizer::from_words(store.iter().flat_map(|s| s.words.iter()), 1);
    (synth, store, tok)
}

#[test]
fn training_keeps_word_encoder_frozen_and_checkpoints_round_trip() {
    let (synth, store, tok) = small();
    let tagger = synth.tagger();
    let ds = build_dataset(&split_pools(&store, &synth.seeds), &SamplingConfig::default(), &tagger).unwrap();
    assert!(ds.split(Split::Valid).count() > 0);
    let enc = Encoder::new(EncoderConfig::scratch_tiny(tok.vocab_size()), 1).unwrap();
    let bundle = ModelBundle::new(Tokenizer::WordLevel(tok), enc, HeadConfig::default(), 1).unwrap();
    let before = bundle.word_encoder.fingerprint();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 3,
        ..Default::default()
    };
    let (trained, hist) = train(&bundle, &ds, &cfg).unwrap();
    assert_eq!(trained.word_encoder.fingerprint(), before);
    assert_eq!(hist.frozen_fingerprint, before);
    assert_ne!(trained.context_encoder.fingerprint(), bundle.context_encoder.fingerprint());
    assert!(hist.best_epoch >= 1);
    let best = &hist.epochs[hist.best_epoch - 1];
    assert!(best.valid.l <= hist.initial_valid.l);

    let dir = tempfile::tempdir().unwrap();
    save_bundle(dir.path(), &trained).unwrap();
    let loaded = load_bundle(dir.path()).unwrap();
    let items: Vec<(&[String], (usize, usize))> = store.iter().take(20).map(|r| (r.words.as_slice(), (1, 2))).collect();
    assert_eq!(trained.predict_batch(&items).unwrap(), loaded.predict_batch(&items).unwrap());
    assert_eq!(trained.alpha(), loaded.alpha());
}

#[test]
fn detect_word_reports_missing_words_and_filtered_sentences() {
    let (_, store, tok) = small();
    let enc = Encoder::new(EncoderConfig::scratch_tiny(tok.vocab_size()), 2).unwrap();
    let bundle = ModelBundle::new(Tokenizer::WordLevel(tok), enc, HeadConfig::default(), 2).unwrap();
    let filter = FilterConfig::default();
    let rec = &store[0];
    let d = detect_word(&bundle, rec, &Target::Word(rec.words[1].to_uppercase()), &filter).unwrap();
    assert_eq!(d.word, rec.words[1]);
    assert_eq!(d.decision, d.p >= 0.5);
    let missing = detect_word(&bundle, rec, &Target::Word("zzzzz".into()), &filter);
    assert!(matches!(missing, Err(Error::WordNotInSentence(_))));
    let short = SentenceRecord::new("s", "d", vec!["too".into(), "short".into()]);
    let rejected = detect_word(&bundle, &short, &Target::Span((0, 1)), &filter);
    assert!(matches!(rejected, Err(Error::SentenceRejectedByFilter)));
}

#[test]
fn list_predictor_ranks_and_scores_its_words() {
    let (synth, store, _) = small();
    let tagger = synth.tagger();
    let jargon: Vec<String> = synth.all_jargon().into_iter().collect();
    let list = ListPredictor::new(&jargon);
    let ranked = score_corpus(&list, &store, &ScoreConfig::default(), &tagger).unwrap();
    let positives: Vec<_> = ranked.iter().take_while(|s| s.f_pred > 0).collect();
    assert!(!positives.is_empty());
    for s in &positives {
        assert!(jargon.contains(&s.word));
        assert_eq!(s.f_pred, s.total);
        assert_eq!(s.score, s.f_pred as f64);
    }
    assert!(matches!(score_corpus(&list, &[], &ScoreConfig::default(), &tagger), Err(Error::EmptyStore)));

    let unseen = ListPredictor::new(&synth.lexicon.unseen_jargon);
    let r = evaluate(&unseen, &synth.eval_unseen, 0.5, &tagger).unwrap();
    assert_eq!((r.precision, r.recall), (1.0, 1.0));
    assert_eq!(r.unique_jargon_detected, synth.lexicon.unseen_jargon.len());
}
