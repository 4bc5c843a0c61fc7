//! Attribute-similarity matrix for one encoded pair.
//!
//! Each direction handles all attributes of both entities with a handful of
//! masked tensor ops: block-diagonal self-attention over the source value
//! tokens, and one masked inter-attention per target attribute stacked on
//! a leading axis.

use std::ops::Range;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::ops::{comparison_features, ensure_finite, highway, softmax_last, M2vAxis};
use super::params::AttentionParams;
use crate::error::{Error, Result};
use crate::serializer::AttrSpan;

/// Contextual token embeddings of one serialized pair.
#[derive(Debug, Clone)]
pub struct TokenEmbeddings {
    /// (sequence_length, d)
    pub vectors: Tensor,
    /// (d,) the leading `[CLS]` position.
    pub pooled: Tensor,
    pub left_spans: Vec<AttrSpan>,
    pub right_spans: Vec<AttrSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttnConfig {
    pub m2v_axis: M2vAxis,
    /// Average the left→right matrix with the transposed right→left one.
    pub direction_fusion: bool,
}

impl Default for AttnConfig {
    fn default() -> Self {
        Self {
            m2v_axis: M2vAxis::Column,
            direction_fusion: true,
        }
    }
}

/// The (m, n) matrix of cross-entity attribute similarities.
#[derive(Debug, Clone)]
pub struct AttributeSimilarityMatrix {
    pub values: Tensor,
    pub m: usize,
    pub n: usize,
}

impl AttributeSimilarityMatrix {
    pub fn to_vec2(&self) -> Result<Vec<Vec<f64>>> {
        Ok(self.values.to_dtype(DType::F64)?.to_vec2()?)
    }
}

/// Intermediates of one direction. Tensor fields are `None` when either
/// side has no value tokens at all.
#[derive(Debug, Clone)]
pub struct DirectionTrace {
    /// Token ranges of each source attribute inside the gathered source rows.
    pub src_ranges: Vec<Range<usize>>,
    pub tgt_ranges: Vec<Range<usize>>,
    /// (L_s, L_s) block-diagonal self-attention.
    pub alpha: Option<Tensor>,
    /// (L_s,) token weights.
    pub alpha_prime: Option<Tensor>,
    /// (n, L_s, L_t): slice j holds attention restricted to target attribute j.
    pub beta: Option<Tensor>,
    /// (n, L_s): token scores against each target attribute.
    pub scores: Option<Tensor>,
    /// (m, n)
    pub r: Tensor,
}

#[derive(Debug, Clone)]
pub struct SimilarityTrace {
    pub left_to_right: DirectionTrace,
    pub right_to_left: Option<DirectionTrace>,
    pub matrix: AttributeSimilarityMatrix,
}

struct Side {
    tokens: Option<Tensor>,
    ranges: Vec<Range<usize>>,
}

fn gather(vectors: &Tensor, spans: &[AttrSpan]) -> Result<Side> {
    let mut idx: Vec<u32> = Vec::new();
    let mut ranges = Vec::with_capacity(spans.len());
    for s in spans {
        let start = idx.len();
        idx.extend((s.start..s.end).map(|i| i as u32));
        ranges.push(start..idx.len());
    }
    let tokens = if idx.is_empty() {
        None
    } else {
        let n = idx.len();
        let index = Tensor::from_vec(idx, n, vectors.device())?;
        Some(vectors.index_select(&index, 0)?)
    };
    Ok(Side { tokens, ranges })
}

fn tensor_from(data: Vec<f64>, shape: &[usize], dtype: DType, dev: &Device) -> Result<Tensor> {
    Ok(Tensor::from_vec(data, shape, dev)?.to_dtype(dtype)?)
}

/// (m, L) 0/1 attribute membership of each token.
fn membership(ranges: &[Range<usize>], len: usize, dtype: DType, dev: &Device) -> Result<Tensor> {
    let mut data = vec![0.0; ranges.len() * len];
    for (i, r) in ranges.iter().enumerate() {
        for x in r.clone() {
            data[i * len + x] = 1.0;
        }
    }
    tensor_from(data, &[ranges.len(), len], dtype, dev)
}

fn directional(src: &Side, tgt: &Side, p: &AttentionParams, axis: M2vAxis) -> Result<DirectionTrace> {
    let (m, n) = (src.ranges.len(), tgt.ranges.len());
    let (hs, ht) = match (&src.tokens, &tgt.tokens) {
        (Some(hs), Some(ht)) => (hs, ht),
        _ => {
            return Ok(DirectionTrace {
                src_ranges: src.ranges.clone(),
                tgt_ranges: tgt.ranges.clone(),
                alpha: None,
                alpha_prime: None,
                beta: None,
                scores: None,
                r: Tensor::zeros((m, n), p.w_self.dtype(), p.w_self.device())?,
            })
        }
    };
    let (dtype, dev) = (hs.dtype(), hs.device().clone());
    let (ls, d) = hs.dims2()?;
    let lt = ht.dims2()?.0;

    // Self-attention, restricted to tokens of the same attribute.
    let mut block = vec![f64::NEG_INFINITY; ls * ls];
    for r in &src.ranges {
        for x in r.clone() {
            for y in r.clone() {
                block[x * ls + y] = 0.0;
            }
        }
    }
    let block = tensor_from(block, &[ls, ls], dtype, &dev)?;
    let alpha = softmax_last(&hs.matmul(&p.w_self)?.matmul(&hs.t()?)?.broadcast_add(&block)?)?;

    // m2v per attribute: axis sums, divided by the attribute's maximum.
    let member = membership(&src.ranges, ls, dtype, &dev)?;
    let sums = match axis {
        M2vAxis::Column => alpha.sum(0)?,
        M2vAxis::Row => alpha.sum(1)?,
    };
    let block_max = member.broadcast_mul(&sums.unsqueeze(0)?)?.max(1)?;
    let token_max = block_max.unsqueeze(0)?.matmul(&member)?.squeeze(0)?;
    let alpha_prime = (&sums / &token_max)?;

    // Inter-attention against each target attribute separately.
    let mut tmask = vec![f64::NEG_INFINITY; n * lt];
    let mut tgt_present = vec![0.0; n];
    for (j, r) in tgt.ranges.iter().enumerate() {
        if r.is_empty() {
            // Unmasked placeholder; the column is zeroed below.
            tmask[j * lt..(j + 1) * lt].fill(0.0);
        } else {
            tgt_present[j] = 1.0;
            for y in r.clone() {
                tmask[j * lt + y] = 0.0;
            }
        }
    }
    let tmask = tensor_from(tmask, &[n, 1, lt], dtype, &dev)?;
    let cross = hs.matmul(&p.w_inter)?.matmul(&ht.t()?)?;
    let beta = softmax_last(&cross.unsqueeze(0)?.broadcast_add(&tmask)?)?;
    let attended = beta.broadcast_matmul(ht)?;

    // Highway comparison of every source token with its attended view.
    let hs_n = hs.unsqueeze(0)?.broadcast_as((n, ls, d))?;
    let u = comparison_features(&hs_n, &attended)?.reshape((n * ls, 2 * d))?;
    let y = highway(&u, p)?;
    let scores = y
        .matmul(&p.w_c.unsqueeze(1)?)?
        .broadcast_add(&p.c_c)?
        .reshape((n, ls))?;

    // R[i, j] = sum over tokens x of attribute i of C_j(x) * alpha'(x).
    let weights = member.broadcast_mul(&alpha_prime.unsqueeze(0)?)?.t()?;
    let r_t = scores.matmul(&weights)?;
    let present = tensor_from(tgt_present, &[1, n], dtype, &dev)?;
    let r = r_t.t()?.broadcast_mul(&present)?;

    Ok(DirectionTrace {
        src_ranges: src.ranges.clone(),
        tgt_ranges: tgt.ranges.clone(),
        alpha: Some(alpha),
        alpha_prime: Some(alpha_prime),
        beta: Some(beta),
        scores: Some(scores),
        r,
    })
}

/// The similarity matrix plus every intermediate that produced it.
pub fn similarity_with_trace(
    emb: &TokenEmbeddings,
    p: &AttentionParams,
    cfg: &AttnConfig,
) -> Result<SimilarityTrace> {
    let (m, n) = (emb.left_spans.len(), emb.right_spans.len());
    if m == 0 || n == 0 {
        return Err(Error::Argument("both entities need at least one attribute".into()));
    }
    let (len, d) = emb.vectors.dims2()?;
    if d != p.width() {
        return Err(Error::Argument(format!(
            "embedding width {d} does not match parameter width {}",
            p.width()
        )));
    }
    if let Some(s) = emb.left_spans.iter().chain(&emb.right_spans).find(|s| s.end > len || s.start > s.end) {
        return Err(Error::Argument(format!("span {s:?} outside a {len}-token sequence")));
    }
    let left = gather(&emb.vectors, &emb.left_spans)?;
    let right = gather(&emb.vectors, &emb.right_spans)?;

    let forward = directional(&left, &right, p, cfg.m2v_axis)?;
    let (values, backward) = if cfg.direction_fusion {
        let back = directional(&right, &left, p, cfg.m2v_axis)?;
        let fused = ((&forward.r + back.r.t()?)? * 0.5)?;
        (fused, Some(back))
    } else {
        (forward.r.clone(), None)
    };
    Ok(SimilarityTrace {
        left_to_right: forward,
        right_to_left: backward,
        matrix: AttributeSimilarityMatrix { values, m, n },
    })
}

/// The (m, n) attribute-similarity matrix of one pair.
pub fn attribute_similarity_matrix(
    emb: &TokenEmbeddings,
    p: &AttentionParams,
    cfg: &AttnConfig,
) -> Result<AttributeSimilarityMatrix> {
    let out = similarity_with_trace(emb, p, cfg)?.matrix;
    ensure_finite(&out.values, "attribute similarity matrix")?;
    Ok(out)
}
