//! Single-attribute building blocks. Token matrices are row-major: one row
//! per token, `d` columns.

use candle_core::{DType, Tensor, D};
use serde::{Deserialize, Serialize};

use super::params::AttentionParams;
use crate::error::{Error, Result};

/// Softmax over the last axis. The max shift is detached; the result is
/// unchanged and its gradient is exact.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let shift = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&shift)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

pub(crate) fn ensure_finite(t: &Tensor, what: &str) -> Result<()> {
    let bad = t
        .flatten_all()?
        .to_dtype(DType::F64)?
        .to_vec1::<f64>()?
        .into_iter()
        .any(|v| !v.is_finite());
    if bad {
        Err(Error::Numeric(format!("{what} contains non-finite values")))
    } else {
        Ok(())
    }
}

fn require_rows(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    let (l, d) = t.dims2()?;
    if l == 0 {
        return Err(Error::Argument(format!("{what} has no tokens")));
    }
    Ok((l, d))
}

/// Token self-attention within one attribute: row-wise softmax of
/// `H · W · Hᵀ` for `H` of shape (L, d). Returns (L, L).
pub fn self_attention(h_attr: &Tensor, w_self: &Tensor) -> Result<Tensor> {
    require_rows(h_attr, "attribute")?;
    ensure_finite(h_attr, "attribute embeddings")?;
    let scores = h_attr.matmul(w_self)?.matmul(&h_attr.t()?)?;
    softmax_last(&scores)
}

/// Which axis of a row-stochastic attention matrix is summed into token
/// weights. `Column` collects the attention mass each token receives; `Row`
/// is the literal per-row sum, which is constant for softmax output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum M2vAxis {
    #[default]
    Column,
    Row,
}

/// Matrix-to-vector token weights: axis sums divided by their maximum.
pub fn m2v(alpha: &Tensor, axis: M2vAxis) -> Result<Tensor> {
    let sums = match axis {
        M2vAxis::Column => alpha.sum(0)?,
        M2vAxis::Row => alpha.sum(1)?,
    };
    let peak = sums.max_keepdim(0)?;
    let peak_value = peak.to_dtype(DType::F64)?.to_vec1::<f64>()?[0];
    if !(peak_value > 0.0) || !peak_value.is_finite() {
        return Err(Error::Numeric(format!(
            "attention sums have non-positive maximum {peak_value}"
        )));
    }
    Ok(sums.broadcast_div(&peak)?)
}

/// Cross-entity attention from one source attribute to target tokens.
///
/// Returns `beta` (L_s, L_t), the row-wise softmax of `H_s · W · H_tᵀ`, and
/// the attended representation `beta · H_t` of shape (L_s, d).
pub fn inter_attention(h_src: &Tensor, h_tgt: &Tensor, w_inter: &Tensor) -> Result<(Tensor, Tensor)> {
    require_rows(h_src, "source attribute")?;
    require_rows(h_tgt, "target")?;
    ensure_finite(h_src, "source embeddings")?;
    ensure_finite(h_tgt, "target embeddings")?;
    let scores = h_src.matmul(w_inter)?.matmul(&h_tgt.t()?)?;
    let beta = softmax_last(&scores)?;
    let attended = beta.matmul(h_tgt)?;
    Ok((beta, attended))
}

/// One highway layer `T ⊙ relu(u·W_h + b_h) + (1 − T) ⊙ u` with
/// `T = sigmoid(u·W_t + b_t)`, applied to rows of `u`.
pub fn highway(u: &Tensor, p: &AttentionParams) -> Result<Tensor> {
    let gate = sigmoid(&u.matmul(&p.w_t)?.broadcast_add(&p.b_t)?)?;
    let transform = u.matmul(&p.w_h)?.broadcast_add(&p.b_h)?.relu()?;
    let carry = gate.affine(-1.0, 1.0)?;
    Ok(((gate * transform)? + (carry * u)?)?)
}

/// Comparison features `[|h − ĥ|, h ⊙ ĥ]` along the last axis.
pub fn comparison_features(h: &Tensor, attended: &Tensor) -> Result<Tensor> {
    let diff = (h - attended)?.abs()?;
    let prod = (h * attended)?;
    Ok(Tensor::cat(&[&diff, &prod], D::Minus1)?)
}

/// Token-level similarity scores: comparison features through the highway
/// layer, projected to one scalar per source token. Returns (L_s,).
pub fn compare_tokens(h_src: &Tensor, attended: &Tensor, p: &AttentionParams) -> Result<Tensor> {
    if h_src.dims() != attended.dims() {
        return Err(Error::Argument(format!(
            "shape mismatch: {:?} vs {:?}",
            h_src.dims(),
            attended.dims()
        )));
    }
    let (_, d) = h_src.dims2()?;
    if p.width() != d {
        return Err(Error::Argument(format!(
            "embedding width {d} does not match parameter width {}",
            p.width()
        )));
    }
    let u = comparison_features(h_src, attended)?;
    let y = highway(&u, p)?;
    Ok(y.matmul(&p.w_c.unsqueeze(1)?)?.squeeze(1)?.broadcast_add(&p.c_c)?)
}
