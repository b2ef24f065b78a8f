//! On-disk checkpoints: safetensors weight archives plus a JSON manifest and
//! the tokenizer vocabulary.
//!
//! An encoder directory holds `manifest.json`, `encoder.safetensors` and
//! `vocab.txt`. A bundle directory holds `manifest.json`,
//! `context.safetensors`, `word.safetensors`, `heads.safetensors` and
//! `vocab.txt`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig, Provenance};
use crate::error::{Error, Result};
use crate::model::{init_heads, HeadConfig, ModelBundle};
use crate::nn::{Mat, ParamSet};
use crate::tokenizer::{SubwordTokenizer, Tokenizer, TokenizerKind};
use crate::util::{read_json, write_atomic, write_json};

const MANIFEST: &str = "manifest.json";
const VOCAB: &str = "vocab.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderManifest {
    pub kind: String,
    pub dim: usize,
    pub layers: usize,
    pub provenance: Provenance,
    pub tokenizer: TokenizerKind,
    pub config: EncoderConfig,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub kind: String,
    pub dim: usize,
    pub layers: usize,
    pub provenance: Provenance,
    pub alpha: f64,
    pub raw_alpha: f64,
    pub tokenizer: TokenizerKind,
    pub encoder: EncoderConfig,
    pub heads: HeadConfig,
    pub context_fingerprint: String,
    pub word_fingerprint: String,
    pub heads_fingerprint: String,
}

fn to_bytes(params: &ParamSet) -> Result<Vec<u8>> {
    let buffers: Vec<(String, Vec<usize>, Vec<u8>)> = params
        .iter()
        .map(|p| {
            let bytes = p.value.iter().flat_map(|v| v.to_le_bytes()).collect();
            (p.name.clone(), p.value.shape().to_vec(), bytes)
        })
        .collect();
    let views = buffers
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F64, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize(views, &None).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn read_tensors(path: &Path) -> Result<Vec<(String, Mat)>> {
    let bytes = fs::read(path).map_err(|e| Error::UnreadableInput {
        path: path.to_path_buf(),
        source: e,
    })?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F64 || view.shape().len() != 2 {
            return Err(Error::Checkpoint(format!("tensor {name} is not a 2-d f64 matrix")));
        }
        let values: Vec<f64> = view
            .data()
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let m = Array2::from_shape_vec((view.shape()[0], view.shape()[1]), values)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        out.push((name, m));
    }
    Ok(out)
}

fn load_params(target: &mut ParamSet, tensors: Vec<(String, Mat)>) -> Result<()> {
    let found: HashMap<String, Mat> = tensors.into_iter().collect();
    if found.len() != target.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            target.len(),
            found.len()
        )));
    }
    for i in 0..target.len() {
        let p = target.get_mut(i);
        let m = found
            .get(&p.name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", p.name)))?;
        if m.dim() != p.value.dim() {
            return Err(Error::Checkpoint(format!("tensor {} has the wrong shape", p.name)));
        }
        p.value = m.clone();
    }
    Ok(())
}

fn encoder_from(config: EncoderConfig, provenance: Provenance, path: &Path) -> Result<Encoder> {
    let mut enc = Encoder::new(config, 0)?;
    enc.load_values(read_tensors(path)?)?;
    enc.provenance = provenance;
    Ok(enc)
}

pub fn save_encoder(dir: &Path, encoder: &Encoder, tokenizer: &Tokenizer) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("encoder.safetensors"), &to_bytes(encoder.params())?)?;
    tokenizer.save(&dir.join(VOCAB))?;
    write_json(
        &dir.join(MANIFEST),
        &EncoderManifest {
            kind: "encoder".into(),
            dim: encoder.config.dim,
            layers: encoder.config.layers,
            provenance: encoder.provenance,
            tokenizer: tokenizer.kind(),
            config: encoder.config,
            fingerprint: encoder.fingerprint(),
        },
    )
}

pub fn load_encoder(dir: &Path) -> Result<(Encoder, Tokenizer)> {
    let m: EncoderManifest = read_json(&dir.join(MANIFEST))?;
    if m.kind != "encoder" {
        return Err(Error::Checkpoint(format!("{} is a {} checkpoint", dir.display(), m.kind)));
    }
    let tok = Tokenizer::load(m.tokenizer, &dir.join(VOCAB))?;
    let enc = encoder_from(m.config, m.provenance, &dir.join("encoder.safetensors"))?;
    check_vocab(&enc, &tok)?;
    Ok((enc, tok))
}

fn check_vocab(enc: &Encoder, tok: &Tokenizer) -> Result<()> {
    if enc.config.vocab_size != tok.vocab_size() {
        return Err(Error::DimensionMismatch {
            expected: enc.config.vocab_size,
            got: tok.vocab_size(),
        });
    }
    Ok(())
}

pub fn save_bundle(dir: &Path, bundle: &ModelBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("context.safetensors"), &to_bytes(bundle.context_encoder.params())?)?;
    write_atomic(&dir.join("word.safetensors"), &to_bytes(bundle.word_encoder.params())?)?;
    write_atomic(&dir.join("heads.safetensors"), &to_bytes(&bundle.heads)?)?;
    bundle.tokenizer.save(&dir.join(VOCAB))?;
    write_json(
        &dir.join(MANIFEST),
        &BundleManifest {
            kind: "bundle".into(),
            dim: bundle.dim(),
            layers: bundle.context_encoder.config.layers,
            provenance: bundle.word_encoder.provenance,
            alpha: bundle.alpha(),
            raw_alpha: bundle.heads.get(crate::model::RAW_ALPHA).value[[0, 0]],
            tokenizer: bundle.tokenizer.kind(),
            encoder: bundle.context_encoder.config,
            heads: bundle.config,
            context_fingerprint: bundle.context_encoder.fingerprint(),
            word_fingerprint: bundle.word_encoder.fingerprint(),
            heads_fingerprint: bundle.heads.fingerprint(),
        },
    )
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let m: BundleManifest = read_json(&dir.join(MANIFEST))?;
    if m.kind != "bundle" {
        return Err(Error::Checkpoint(format!("{} is a {} checkpoint", dir.display(), m.kind)));
    }
    m.heads.validate()?;
    let tokenizer = Tokenizer::load(m.tokenizer, &dir.join(VOCAB))?;
    let context_encoder = encoder_from(m.encoder, m.provenance, &dir.join("context.safetensors"))?;
    let word_encoder = encoder_from(m.encoder, m.provenance, &dir.join("word.safetensors"))?;
    check_vocab(&context_encoder, &tokenizer)?;
    let mut heads = init_heads(m.dim, 0);
    load_params(&mut heads, read_tensors(&dir.join("heads.safetensors"))?)?;
    let bundle = ModelBundle {
        tokenizer,
        context_encoder,
        word_encoder,
        heads,
        config: m.heads,
    };
    if bundle.word_encoder.fingerprint() != m.word_fingerprint {
        return Err(Error::Checkpoint("word encoder fingerprint mismatch".into()));
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::WordLevelTokenizer;

    #[test]
    fn bundle_round_trip_is_exact() {
        let tok = WordLevelTokenizer::from_words("a b c d e".split(' '), 1);
        let mut cfg = EncoderConfig::scratch_tiny(tok.vocab_size());
        cfg.dim = 8;
        cfg.heads = 2;
        let enc = Encoder::new(cfg, 1).unwrap();
        let mut b = ModelBundle::new(Tokenizer::WordLevel(tok), enc, HeadConfig::default(), 2).unwrap();
        b.set_raw_alpha(-0.7);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(dir.path(), &b).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.heads, b.heads);
        assert_eq!(back.context_encoder, b.context_encoder);
        assert_eq!(back.word_encoder, b.word_encoder);
        assert_eq!(back.tokenizer, b.tokenizer);
        let m: BundleManifest = read_json(&dir.path().join(MANIFEST)).unwrap();
        assert_eq!(m.dim, 8);
        assert!((m.alpha - b.alpha()).abs() < 1e-15);

        let edir = dir.path().join("enc");
        save_encoder(&edir, &b.word_encoder, &b.tokenizer).unwrap();
        let (e, t) = load_encoder(&edir).unwrap();
        assert_eq!(e, b.word_encoder);
        assert_eq!(t, b.tokenizer);
        assert!(load_bundle(&edir).is_err());
    }
}
