//! Heterogeneous entity matching over attribute-association attention.
//!
//! Pairs of records are serialized into `[CLS] ... [SEP] ... [SEP]` token
//! sequences, encoded by a BERT-style transformer, and compared attribute by
//! attribute through intra-entity self-attention and cross-entity
//! inter-attention. The resulting attribute-similarity matrix is fused with
//! the pooled sentence embedding for a binary match decision.

pub mod attnet;
pub mod data;
pub mod encoder;
pub mod error;
pub mod matcher;
pub mod params;
pub mod serializer;

pub use attnet::{AttentionParams, AttnConfig, AttributeSimilarityMatrix, M2vAxis};
pub use data::{CandidatePair, DatasetBundle, EntityRecord, Metrics, SplitTag};
pub use encoder::{Encoder, EncoderConfig};
pub use error::{Error, Result};
pub use matcher::{
    AttentionDump, EmCarModel, FusionStrategy, MatchPrediction, ModelConfig, ProtocolReport, TrainConfig,
};
pub use params::ParamStore;
pub use serializer::{SerializedPair, WordPieceTokenizer};
