use candle_core::{DType, Tensor, D};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attnet::AttributeSimilarityMatrix;
use crate::error::{Error, Result};
use crate::params::ParamStore;

/// How the attribute-similarity matrix joins the pooled embedding before
/// the linear head.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FusionStrategy {
    /// Four summary statistics of R: mean row max, mean column max, mean,
    /// max.
    #[default]
    PooledStats,
    /// Pooled embedding alone; R is not computed.
    PooledOnly,
    /// R zero-padded (or cropped) to `rows × cols` and flattened.
    PaddedFlatten { rows: usize, cols: usize },
}

impl FusionStrategy {
    /// Width `q` of the similarity part of the fused features.
    pub fn width(&self) -> usize {
        match *self {
            Self::PooledStats => 4,
            Self::PooledOnly => 0,
            Self::PaddedFlatten { rows, cols } => rows * cols,
        }
    }

    pub fn uses_similarity(&self) -> bool {
        !matches!(self, Self::PooledOnly)
    }
}

/// `[mean_i max_j R, mean_j max_i R, mean R, max R]`.
pub fn similarity_summary(r: &AttributeSimilarityMatrix) -> Result<Tensor> {
    if r.m == 0 || r.n == 0 {
        return Err(Error::Argument("similarity matrix is empty".into()));
    }
    let v = &r.values;
    let stats = [
        v.max(1)?.mean(0)?,
        v.max(0)?.mean(0)?,
        v.mean_all()?,
        v.flatten_all()?.max(0)?,
    ];
    Ok(Tensor::stack(&stats, 0)?)
}

/// `concat(pooled, summary(R))`, width d + 4.
pub fn fuse_features(pooled: &Tensor, r: &AttributeSimilarityMatrix) -> Result<Tensor> {
    fuse_with(FusionStrategy::PooledStats, pooled, Some(r))
}

pub fn fuse_with(
    strategy: FusionStrategy,
    pooled: &Tensor,
    r: Option<&AttributeSimilarityMatrix>,
) -> Result<Tensor> {
    let need = || r.ok_or_else(|| Error::Argument("fusion strategy needs a similarity matrix".into()));
    let extra = match strategy {
        FusionStrategy::PooledOnly => return Ok(pooled.clone()),
        FusionStrategy::PooledStats => similarity_summary(need()?)?,
        FusionStrategy::PaddedFlatten { rows, cols } => {
            let r = need()?;
            if r.m == 0 || r.n == 0 {
                return Err(Error::Argument("similarity matrix is empty".into()));
            }
            let (m, n) = (r.m.min(rows), r.n.min(cols));
            r.values
                .narrow(0, 0, m)?
                .narrow(1, 0, n)?
                .pad_with_zeros(0, 0, rows - m)?
                .pad_with_zeros(1, 0, cols - n)?
                .flatten_all()?
        }
    };
    Ok(Tensor::cat(&[pooled, &extra.to_dtype(pooled.dtype())?], 0)?)
}

/// The linear head `features · W + b` over two classes.
#[derive(Debug, Clone)]
pub struct HeadParams {
    /// (d + q, 2)
    pub weight: Tensor,
    /// (2,)
    pub bias: Tensor,
}

impl HeadParams {
    pub fn register(store: &mut ParamStore, width: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            weight: store.normal("head.weight", &[width, 2], 0.02, rng)?,
            bias: store.constant("head.bias", &[2], 0.0)?,
        })
    }

    pub fn width(&self) -> usize {
        self.weight.dims()[0]
    }

    /// Logits for a (B, width) batch or a single (width,) vector.
    pub fn logits(&self, features: &Tensor) -> Result<Tensor> {
        let width = *features.dims().last().unwrap_or(&0);
        if width != self.width() {
            return Err(Error::Argument(format!(
                "feature width {width} does not match head width {}",
                self.width()
            )));
        }
        match features.rank() {
            1 => Ok(features.unsqueeze(0)?.matmul(&self.weight)?.squeeze(0)?.add(&self.bias)?),
            2 => Ok(features.matmul(&self.weight)?.broadcast_add(&self.bias)?),
            r => Err(Error::Argument(format!("features must have rank 1 or 2, got {r}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPrediction {
    pub prob_no_match: f64,
    pub prob_match: f64,
    pub decision: u8,
}

impl MatchPrediction {
    /// Two-class softmax in f64; equal probabilities resolve to 0.
    pub fn from_logits(no_match: f64, matched: f64) -> Self {
        let top = no_match.max(matched);
        let (a, b) = ((no_match - top).exp(), (matched - top).exp());
        let (p0, p1) = (a / (a + b), b / (a + b));
        Self {
            prob_no_match: p0,
            prob_match: p1,
            decision: (p1 > p0) as u8,
        }
    }

    /// One prediction per row of a (B, 2) logit tensor.
    pub fn from_logit_rows(logits: &Tensor) -> Result<Vec<Self>> {
        let rows: Vec<Vec<f64>> = logits.to_dtype(DType::F64)?.to_vec2()?;
        Ok(rows.iter().map(|r| Self::from_logits(r[0], r[1])).collect())
    }
}

pub fn classify(features: &Tensor, head: &HeadParams) -> Result<MatchPrediction> {
    let l: Vec<f64> = head.logits(features)?.to_dtype(DType::F64)?.to_vec1()?;
    Ok(MatchPrediction::from_logits(l[0], l[1]))
}

/// Mean two-class cross-entropy of (B, 2) logits against 0/1 labels.
pub fn cross_entropy(logits: &Tensor, labels: &[u8]) -> Result<Tensor> {
    let targets = Tensor::from_vec(
        labels.iter().map(|&l| l as u32).collect::<Vec<_>>(),
        labels.len(),
        logits.device(),
    )?;
    let shift = logits.max_keepdim(D::Minus1)?.detach();
    let z = logits.broadcast_sub(&shift)?;
    let log_probs = z.broadcast_sub(&z.exp()?.sum_keepdim(D::Minus1)?.log()?)?;
    let picked = log_probs.gather(&targets.unsqueeze(1)?, 1)?;
    Ok(picked.mean_all()?.neg()?)
}
