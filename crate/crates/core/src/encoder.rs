//! BERT-style bidirectional transformer encoder.
//!
//! Parameter names follow the Hugging Face BERT layout (`bert.embeddings.*`,
//! `bert.encoder.layer.N.*`) so a converted `model.safetensors` checkpoint
//! can be loaded into a matching configuration.

use candle_core::{DType, Device, Tensor, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attnet::softmax_last;
use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_position: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
}

fn default_type_vocab() -> usize {
    2
}

fn default_ln_eps() -> f64 {
    1e-12
}

impl EncoderConfig {
    /// BERT-base geometry: 12 layers, width 768, 12 heads.
    pub fn base(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden_size: 768,
            num_layers: 12,
            num_heads: 12,
            intermediate_size: 3072,
            max_position: 512,
            type_vocab_size: 2,
            dropout: 0.1,
            layer_norm_eps: 1e-12,
        }
    }

    /// Two layers of width 64; trains from scratch on a CPU in seconds.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            hidden_size: 64,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 128,
            max_position: 512,
            type_vocab_size: 2,
            dropout: 0.0,
            layer_norm_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_heads == 0 || self.hidden_size % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {} must be a positive multiple of {} heads",
                self.hidden_size, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.vocab_size == 0 || self.max_position == 0 {
            return Err(Error::Config("vocabulary and position table must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    fn register(store: &mut ParamStore, name: &str, inp: usize, out: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            weight: store.normal(&format!("{name}.weight"), &[out, inp], 0.02, rng)?,
            bias: store.constant(&format!("{name}.bias"), &[out], 0.0)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.broadcast_matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone)]
struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn register(store: &mut ParamStore, name: &str, width: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            weight: store.constant(&format!("{name}.weight"), &[width], 1.0)?,
            bias: store.constant(&format!("{name}.bias"), &[width], 0.0)?,
            eps,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone)]
struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
}

/// Inverted dropout with masks drawn from a seeded generator.
fn dropout(x: &Tensor, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
    let Some(rng) = rng else { return Ok(x.clone()) };
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f32> = (0..x.elem_count())
        .map(|_| if rng.random_bool(p) { 0.0 } else { scale as f32 })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}

/// Padded batch of token sequences.
#[derive(Debug, Clone)]
pub struct EncoderInput {
    /// (B, L) u32
    pub token_ids: Tensor,
    /// (B, L) u32
    pub segment_ids: Tensor,
    /// (B, L) 1 for real tokens, 0 for padding, in the model dtype.
    pub attention_mask: Tensor,
    pub lengths: Vec<usize>,
}

impl EncoderInput {
    /// Right-pads sequences with `pad_id` to the longest length.
    pub fn pad(seqs: &[(&[u32], Vec<u32>)], pad_id: u32, dtype: DType, device: &Device) -> Result<Self> {
        let b = seqs.len();
        let l = seqs.iter().map(|(ids, _)| ids.len()).max().unwrap_or(0);
        let mut ids = vec![pad_id; b * l];
        let mut segs = vec![0u32; b * l];
        let mut mask = vec![0f32; b * l];
        for (row, (tok, seg)) in seqs.iter().enumerate() {
            ids[row * l..row * l + tok.len()].copy_from_slice(tok);
            segs[row * l..row * l + seg.len()].copy_from_slice(seg);
            mask[row * l..row * l + tok.len()].fill(1.0);
        }
        Ok(Self {
            token_ids: Tensor::from_vec(ids, (b, l), device)?,
            segment_ids: Tensor::from_vec(segs, (b, l), device)?,
            attention_mask: Tensor::from_vec(mask, (b, l), device)?.to_dtype(dtype)?,
            lengths: seqs.iter().map(|(t, _)| t.len()).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    word: Tensor,
    position: Tensor,
    segment: Tensor,
    emb_norm: LayerNorm,
    layers: Vec<Layer>,
}

impl Encoder {
    pub fn register(store: &mut ParamStore, cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.hidden_size;
        let word = store.normal("bert.embeddings.word_embeddings.weight", &[cfg.vocab_size, d], 0.02, rng)?;
        let position = store.normal("bert.embeddings.position_embeddings.weight", &[cfg.max_position, d], 0.02, rng)?;
        let segment = store.normal("bert.embeddings.token_type_embeddings.weight", &[cfg.type_vocab_size, d], 0.02, rng)?;
        let emb_norm = LayerNorm::register(store, "bert.embeddings.LayerNorm", d, cfg.layer_norm_eps)?;
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for i in 0..cfg.num_layers {
            let p = format!("bert.encoder.layer.{i}");
            layers.push(Layer {
                query: Linear::register(store, &format!("{p}.attention.self.query"), d, d, rng)?,
                key: Linear::register(store, &format!("{p}.attention.self.key"), d, d, rng)?,
                value: Linear::register(store, &format!("{p}.attention.self.value"), d, d, rng)?,
                attn_out: Linear::register(store, &format!("{p}.attention.output.dense"), d, d, rng)?,
                attn_norm: LayerNorm::register(store, &format!("{p}.attention.output.LayerNorm"), d, cfg.layer_norm_eps)?,
                intermediate: Linear::register(store, &format!("{p}.intermediate.dense"), d, cfg.intermediate_size, rng)?,
                output: Linear::register(store, &format!("{p}.output.dense"), cfg.intermediate_size, d, rng)?,
                out_norm: LayerNorm::register(store, &format!("{p}.output.LayerNorm"), d, cfg.layer_norm_eps)?,
            });
        }
        Ok(Self {
            cfg: cfg.clone(),
            word,
            position,
            segment,
            emb_norm,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn hidden_size(&self) -> usize {
        self.cfg.hidden_size
    }

    /// Contextual embeddings (B, L, d). Dropout is applied only when a
    /// generator is supplied.
    pub fn forward(&self, input: &EncoderInput, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let (b, l) = input.token_ids.dims2()?;
        if l > self.cfg.max_position {
            return Err(Error::Length {
                len: l,
                max: self.cfg.max_position,
            });
        }
        let d = self.cfg.hidden_size;
        let heads = self.cfg.num_heads;
        let dh = d / heads;
        let p = self.cfg.dropout;

        let words = self.word.index_select(&input.token_ids.flatten_all()?, 0)?.reshape((b, l, d))?;
        let segs = self.segment.index_select(&input.segment_ids.flatten_all()?, 0)?.reshape((b, l, d))?;
        let pos = self.position.narrow(0, 0, l)?.unsqueeze(0)?;
        let mut x = self.emb_norm.forward(&(words + segs)?.broadcast_add(&pos)?)?;
        x = dropout(&x, p, rng.as_deref_mut())?;

        // Additive key mask: 0 for real tokens, -1e9 for padding.
        let key_mask = ((input.attention_mask.affine(1.0, -1.0)?) * 1e9)?.reshape((b, 1, 1, l))?;
        let scale = 1.0 / (dh as f64).sqrt();
        let split = |t: Tensor| -> Result<Tensor> { Ok(t.reshape((b, l, heads, dh))?.transpose(1, 2)?.contiguous()?) };

        for layer in &self.layers {
            let q = split(layer.query.forward(&x)?)?;
            let k = split(layer.key.forward(&x)?)?;
            let v = split(layer.value.forward(&x)?)?;
            let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?.broadcast_add(&key_mask)?;
            let probs = dropout(&softmax_last(&scores)?, p, rng.as_deref_mut())?;
            let ctx = probs.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, l, d))?;
            let attn = dropout(&layer.attn_out.forward(&ctx)?, p, rng.as_deref_mut())?;
            let h = layer.attn_norm.forward(&(attn + &x)?)?;
            let ff = layer.intermediate.forward(&h)?.gelu_erf()?;
            let ff = dropout(&layer.output.forward(&ff)?, p, rng.as_deref_mut())?;
            x = layer.out_norm.forward(&(ff + h)?)?;
        }
        Ok(x)
    }
}
