use std::ops::Range;
use std::path::Path;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::head::{fuse_with, MatchPrediction};
use super::model::EmCarModel;
use crate::attnet::DirectionTrace;
use crate::data::CandidatePair;
use crate::error::Result;
use crate::serializer::AttrSpan;

/// Attention intermediates for one (left attribute, right attribute) cell,
/// taken from the left-to-right direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDump {
    pub i: usize,
    pub j: usize,
    pub left_attribute: String,
    pub right_attribute: String,
    /// Self-attention among the value tokens of left attribute `i`.
    pub alpha: Vec<Vec<f64>>,
    pub alpha_prime: Vec<f64>,
    /// Attention from left attribute `i` tokens to right attribute `j` tokens.
    pub beta: Vec<Vec<f64>>,
    /// Per-token comparison scores of attribute `i` against attribute `j`.
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "R")]
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    pub left_attributes: Vec<String>,
    pub right_attributes: Vec<String>,
    pub left_tokens: Vec<Vec<String>>,
    pub right_tokens: Vec<Vec<String>>,
    /// The (m, n) matrix fed to the head.
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "R_left_to_right")]
    pub r_left_to_right: Vec<Vec<f64>>,
    /// (n, m); absent when direction fusion is off.
    #[serde(rename = "R_right_to_left", skip_serializing_if = "Option::is_none")]
    pub r_right_to_left: Option<Vec<Vec<f64>>>,
    /// m·n cells in row-major order.
    pub cells: Vec<CellDump>,
    pub prediction: MatchPrediction,
}

fn mat(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(t.to_dtype(DType::F64)?.to_vec2()?)
}

fn block(m: &[Vec<f64>], rows: Range<usize>, cols: Range<usize>) -> Vec<Vec<f64>> {
    m[rows].iter().map(|r| r[cols.clone()].to_vec()).collect()
}

fn span_tokens(model: &EmCarModel, ids: &[u32], spans: &[AttrSpan]) -> Vec<Vec<String>> {
    spans
        .iter()
        .map(|s| {
            ids[s.start..s.end]
                .iter()
                .map(|&id| model.tokenizer().token(id).unwrap_or("[UNK]").to_string())
                .collect()
        })
        .collect()
}

fn cells(trace: &DirectionTrace, r: &[Vec<f64>], names: (&[String], &[String])) -> Result<Vec<CellDump>> {
    let alpha = trace.alpha.as_ref().map(mat).transpose()?;
    let alpha_prime: Option<Vec<f64>> = trace
        .alpha_prime
        .as_ref()
        .map(|t| t.to_dtype(DType::F64)?.to_vec1())
        .transpose()?;
    let beta: Option<Vec<Vec<Vec<f64>>>> = trace
        .beta
        .as_ref()
        .map(|t| t.to_dtype(DType::F64)?.to_vec3())
        .transpose()?;
    let scores = trace.scores.as_ref().map(mat).transpose()?;

    let mut out = Vec::new();
    for (i, src) in trace.src_ranges.iter().enumerate() {
        for (j, tgt) in trace.tgt_ranges.iter().enumerate() {
            out.push(CellDump {
                i,
                j,
                left_attribute: names.0[i].clone(),
                right_attribute: names.1[j].clone(),
                alpha: alpha.as_ref().map_or(Vec::new(), |a| block(a, src.clone(), src.clone())),
                alpha_prime: alpha_prime.as_ref().map_or(Vec::new(), |a| a[src.clone()].to_vec()),
                beta: beta.as_ref().map_or(Vec::new(), |b| block(&b[j], src.clone(), tgt.clone())),
                c: scores.as_ref().map_or(Vec::new(), |s| s[j][src.clone()].to_vec()),
                r: r[i][j],
            });
        }
    }
    Ok(out)
}

impl EmCarModel {
    /// Every attention intermediate of one pair plus the final prediction.
    pub fn inspect(&self, pair: &CandidatePair) -> Result<AttentionDump> {
        let (sp, emb, trace) = self.trace(pair)?;
        let left_attributes: Vec<String> = pair.left.names().map(str::to_string).collect();
        let right_attributes: Vec<String> = pair.right.names().map(str::to_string).collect();
        let r = trace.matrix.to_vec2()?;
        let features = fuse_with(self.config().fusion, &emb.pooled, Some(&trace.matrix))?;
        let logits: Vec<f64> = self.head().logits(&features)?.to_dtype(DType::F64)?.to_vec1()?;
        Ok(AttentionDump {
            left_tokens: span_tokens(self, &sp.token_ids, &sp.left_spans),
            right_tokens: span_tokens(self, &sp.token_ids, &sp.right_spans),
            r_left_to_right: mat(&trace.left_to_right.r)?,
            r_right_to_left: trace.right_to_left.as_ref().map(|t| mat(&t.r)).transpose()?,
            cells: cells(&trace.left_to_right, &r, (&left_attributes, &right_attributes))?,
            r,
            left_attributes,
            right_attributes,
            prediction: MatchPrediction::from_logits(logits[0], logits[1]),
        })
    }
}

pub fn inspect_attention(checkpoint: &Path, pair: &CandidatePair) -> Result<AttentionDump> {
    EmCarModel::load(checkpoint)?.0.inspect(pair)
}
