use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{fuse_with, FusionStrategy, HeadParams, MatchPrediction};
use super::train::TrainConfig;
use crate::attnet::{similarity_with_trace, AttentionParams, AttnConfig, SimilarityTrace, TokenEmbeddings};
use crate::data::{CandidatePair, DatasetBundle, EntityRecord};
use crate::encoder::{Encoder, EncoderConfig, EncoderInput};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::serializer::{tokenize_with_spans, SerializedPair, WordPieceTokenizer, COL, PAD, VAL};

pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const VOCAB_FILE: &str = "vocab.txt";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderPreset {
    #[default]
    Tiny,
    Base,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderPreset,
    /// Directory holding a converted BERT checkpoint: `config.json`,
    /// `vocab.txt` and `model.safetensors`. Overrides `encoder`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained: Option<PathBuf>,
    /// Vocabulary budget when the vocabulary is learned from the data.
    pub vocab_size: usize,
    pub min_token_freq: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    pub attention: AttnConfig,
    pub fusion: FusionStrategy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderPreset::Tiny,
            pretrained: None,
            vocab_size: 8000,
            min_token_freq: 1,
            dropout: None,
            attention: AttnConfig::default(),
            fusion: FusionStrategy::default(),
        }
    }
}

/// The subset of a Hugging Face `config.json` the encoder needs.
#[derive(Deserialize)]
struct HfConfig {
    vocab_size: usize,
    hidden_size: usize,
    num_hidden_layers: usize,
    num_attention_heads: usize,
    intermediate_size: usize,
    max_position_embeddings: usize,
    #[serde(default = "two")]
    type_vocab_size: usize,
    #[serde(default = "ln_eps")]
    layer_norm_eps: f64,
    #[serde(default)]
    hidden_dropout_prob: f64,
}

fn two() -> usize {
    2
}

fn ln_eps() -> f64 {
    1e-12
}

impl ModelConfig {
    /// Tokenizer for this configuration: the pretrained `vocab.txt` when
    /// given, otherwise a vocabulary learned from the bundles' records.
    pub fn build_tokenizer(&self, bundles: &[&DatasetBundle]) -> Result<WordPieceTokenizer> {
        if let Some(dir) = &self.pretrained {
            return pretrained_vocab(&dir.join(VOCAB_FILE));
        }
        let corpus = bundles
            .iter()
            .flat_map(|b| &b.pairs)
            .flat_map(|p| [&p.left, &p.right])
            .flat_map(|e| e.attributes())
            .flat_map(|(n, v)| [n.as_str(), v.as_str()]);
        Ok(WordPieceTokenizer::train(corpus, self.vocab_size, self.min_token_freq))
    }

    pub fn encoder_config(&self, vocab_size: usize) -> Result<EncoderConfig> {
        let mut cfg = match &self.pretrained {
            Some(dir) => {
                let path = dir.join("config.json");
                let text = fs::read_to_string(&path).map_err(|_| Error::MissingFile(path.clone()))?;
                let hf: HfConfig = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                EncoderConfig {
                    vocab_size: hf.vocab_size,
                    hidden_size: hf.hidden_size,
                    num_layers: hf.num_hidden_layers,
                    num_heads: hf.num_attention_heads,
                    intermediate_size: hf.intermediate_size,
                    max_position: hf.max_position_embeddings,
                    type_vocab_size: hf.type_vocab_size,
                    dropout: hf.hidden_dropout_prob,
                    layer_norm_eps: hf.layer_norm_eps,
                }
            }
            None => match self.encoder {
                EncoderPreset::Tiny => EncoderConfig::tiny(vocab_size),
                EncoderPreset::Base => EncoderConfig::base(vocab_size),
            },
        };
        if let Some(p) = self.dropout {
            cfg.dropout = p;
        }
        if cfg.vocab_size < vocab_size {
            return Err(Error::Config(format!(
                "tokenizer has {vocab_size} entries but the encoder only {}",
                cfg.vocab_size
            )));
        }
        Ok(cfg)
    }
}

/// Reads a BERT vocabulary, reusing the first `[unused*]` slots for the
/// column/value markers so the embedding table keeps its size.
fn pretrained_vocab(path: &Path) -> Result<WordPieceTokenizer> {
    let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let mut tokens: Vec<String> = text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect();
    let absent: Vec<&str> = [COL, VAL].into_iter().filter(|m| !tokens.iter().any(|t| t == m)).collect();
    let mut markers = absent.into_iter();
    for t in tokens.iter_mut().filter(|t| t.starts_with("[unused")) {
        match markers.next() {
            Some(m) => *t = m.to_string(),
            None => break,
        }
    }
    WordPieceTokenizer::from_tokens(tokens)
}

/// Everything persisted next to the weights of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub epoch: usize,
    pub valid_f1: f64,
    pub max_seq_len: usize,
    pub model: ModelConfig,
    pub encoder: EncoderConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
}

/// Encoder, attribute-association network and linear head.
#[derive(Debug, Clone)]
pub struct EmCarModel {
    config: ModelConfig,
    encoder_config: EncoderConfig,
    store: ParamStore,
    encoder: Encoder,
    attention: AttentionParams,
    head: HeadParams,
    tokenizer: WordPieceTokenizer,
    max_seq_len: usize,
    seed: u64,
}

/// HF checkpoints may drop the `bert.` prefix or use gamma/beta names.
fn hf_aliases(name: &str) -> Vec<String> {
    let mut out = Vec::new();
    let bare = name.strip_prefix("bert.").unwrap_or(name);
    for base in [name, bare] {
        if let Some(stem) = base.strip_suffix("LayerNorm.weight") {
            out.push(format!("{stem}LayerNorm.gamma"));
        } else if let Some(stem) = base.strip_suffix("LayerNorm.bias") {
            out.push(format!("{stem}LayerNorm.beta"));
        }
    }
    out.push(bare.to_string());
    out
}

impl EmCarModel {
    /// Fresh model with seeded initialization (and pretrained encoder
    /// weights when configured).
    pub fn new(config: &ModelConfig, tokenizer: WordPieceTokenizer, max_seq_len: usize, seed: u64) -> Result<Self> {
        let encoder_config = config.encoder_config(tokenizer.vocab_size())?;
        let model = Self::assemble(config, encoder_config, tokenizer, max_seq_len, seed)?;
        if let Some(dir) = &config.pretrained {
            let missing = model
                .store
                .load_with_aliases(&dir.join(WEIGHTS_FILE), true, hf_aliases)?;
            if let Some(name) = missing.iter().find(|n| n.starts_with("bert.")) {
                return Err(Error::Checkpoint(format!("pretrained weights lack `{name}`")));
            }
        }
        Ok(model)
    }

    fn assemble(
        config: &ModelConfig,
        encoder_config: EncoderConfig,
        tokenizer: WordPieceTokenizer,
        max_seq_len: usize,
        seed: u64,
    ) -> Result<Self> {
        if max_seq_len > encoder_config.max_position {
            return Err(Error::Config(format!(
                "max_seq_len {max_seq_len} exceeds the encoder's {} positions",
                encoder_config.max_position
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(DType::F32, Device::Cpu);
        let encoder = Encoder::register(&mut store, &encoder_config, &mut rng)?;
        let d = encoder_config.hidden_size;
        let attention = AttentionParams::register(&mut store, "attnet", d, &mut rng)?;
        let head = HeadParams::register(&mut store, d + config.fusion.width(), &mut rng)?;
        Ok(Self {
            config: config.clone(),
            encoder_config,
            store,
            encoder,
            attention,
            head,
            tokenizer,
            max_seq_len,
            seed,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        &self.encoder_config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn attention(&self) -> &AttentionParams {
        &self.attention
    }

    pub fn head(&self) -> &HeadParams {
        &self.head
    }

    pub fn tokenizer(&self) -> &WordPieceTokenizer {
        &self.tokenizer
    }

    pub fn max_seq_len(&self) -> usize {
        self.max_seq_len
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encode_pair(&self, pair: &CandidatePair) -> Result<SerializedPair> {
        tokenize_with_spans(&self.tokenizer, pair, self.max_seq_len)
    }

    pub fn encode_pairs(&self, pairs: &[CandidatePair]) -> Result<Vec<SerializedPair>> {
        pairs.iter().map(|p| self.encode_pair(p)).collect()
    }

    /// Contextual embeddings of each pair in a padded batch.
    pub fn embed(&self, batch: &[&SerializedPair], rng: Option<&mut ChaCha8Rng>) -> Result<Vec<TokenEmbeddings>> {
        let seqs: Vec<(&[u32], Vec<u32>)> = batch
            .iter()
            .map(|p| (p.token_ids.as_slice(), p.segment_ids()))
            .collect();
        let input = EncoderInput::pad(&seqs, self.tokenizer.special(PAD), self.store.dtype(), self.store.device())?;
        let hidden = self.encoder.forward(&input, rng)?;
        batch
            .iter()
            .enumerate()
            .map(|(b, p)| {
                let vectors = hidden.get(b)?.narrow(0, 0, p.len())?;
                Ok(TokenEmbeddings {
                    pooled: vectors.get(0)?,
                    vectors,
                    left_spans: p.left_spans.clone(),
                    right_spans: p.right_spans.clone(),
                })
            })
            .collect()
    }

    /// Fused feature vector of one embedded pair, with the similarity trace
    /// when the fusion strategy uses it.
    pub fn features(&self, emb: &TokenEmbeddings) -> Result<(Tensor, Option<SimilarityTrace>)> {
        let trace = if self.config.fusion.uses_similarity() {
            Some(similarity_with_trace(emb, &self.attention, &self.config.attention)?)
        } else {
            None
        };
        let f = fuse_with(self.config.fusion, &emb.pooled, trace.as_ref().map(|t| &t.matrix))?;
        Ok((f, trace))
    }

    /// (B, 2) logits. Dropout is active only when `rng` is given.
    pub fn logits(&self, batch: &[&SerializedPair], rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let embs = self.embed(batch, rng)?;
        let feats = embs
            .iter()
            .map(|e| Ok(self.features(e)?.0))
            .collect::<Result<Vec<_>>>()?;
        self.head.logits(&Tensor::stack(&feats, 0)?)
    }

    pub fn predict_serialized(&self, pairs: &[SerializedPair], batch_size: usize) -> Result<Vec<MatchPrediction>> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(batch_size.max(1)) {
            let refs: Vec<&SerializedPair> = chunk.iter().collect();
            out.extend(MatchPrediction::from_logit_rows(&self.logits(&refs, None)?)?);
        }
        Ok(out)
    }

    pub fn predict_pairs(&self, pairs: &[CandidatePair], batch_size: usize) -> Result<Vec<MatchPrediction>> {
        self.predict_serialized(&self.encode_pairs(pairs)?, batch_size)
    }

    pub fn predict(&self, e1: &EntityRecord, e2: &EntityRecord) -> Result<MatchPrediction> {
        let pair = CandidatePair::unlabeled(e1.clone(), e2.clone());
        Ok(self.predict_pairs(std::slice::from_ref(&pair), 1)?[0])
    }

    /// Serialized pair, embeddings and full similarity trace of one pair.
    pub fn trace(&self, pair: &CandidatePair) -> Result<(SerializedPair, TokenEmbeddings, SimilarityTrace)> {
        let sp = self.encode_pair(pair)?;
        let emb = self.embed(&[&sp], None)?.remove(0);
        let trace = similarity_with_trace(&emb, &self.attention, &self.config.attention)?;
        Ok((sp, emb, trace))
    }

    pub fn manifest(&self, epoch: usize, valid_f1: f64, train: Option<&TrainConfig>) -> Manifest {
        Manifest {
            format_version: MANIFEST_VERSION,
            seed: self.seed,
            epoch,
            valid_f1,
            max_seq_len: self.max_seq_len,
            model: self.config.clone(),
            encoder: self.encoder_config.clone(),
            train: train.cloned(),
        }
    }

    /// Writes weights, vocabulary and manifest into `dir`.
    pub fn save(&self, dir: &Path, manifest: &Manifest) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.store.save(&dir.join(WEIGHTS_FILE))?;
        self.tokenizer.save(&dir.join(VOCAB_FILE))?;
        let text = toml::to_string(manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, Manifest)> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported manifest version {}",
                manifest.format_version
            )));
        }
        let tokenizer = WordPieceTokenizer::from_vocab_file(&dir.join(VOCAB_FILE))?;
        let model = Self::assemble(
            &manifest.model,
            manifest.encoder.clone(),
            tokenizer,
            manifest.max_seq_len,
            manifest.seed,
        )?;
        model.store.load(&dir.join(WEIGHTS_FILE), false)?;
        Ok((model, manifest))
    }
}
