//! The attribute-association network: token self-attention, m2v token
//! weights, cross-entity inter-attention and highway comparison, reduced to
//! an attribute-similarity matrix.

mod ops;
mod params;
mod similarity;

pub use ops::{
    comparison_features, compare_tokens, highway, inter_attention, m2v, self_attention, sigmoid,
    softmax_last, M2vAxis,
};
pub use params::{AttentionParams, GATE_BIAS_INIT};
pub use similarity::{
    attribute_similarity_matrix, similarity_with_trace, AttnConfig, AttributeSimilarityMatrix,
    DirectionTrace, SimilarityTrace, TokenEmbeddings,
};
