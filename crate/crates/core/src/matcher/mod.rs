//! Feature fusion, the linear match head, training with validation-based
//! checkpoint selection, evaluation, prediction and attention dumps.

mod head;
mod inspect;
mod model;
mod train;

pub use head::{
    classify, cross_entropy, fuse_features, fuse_with, similarity_summary, FusionStrategy, HeadParams,
    MatchPrediction,
};
pub use inspect::{inspect_attention, AttentionDump, CellDump};
pub use model::{EmCarModel, EncoderPreset, Manifest, ModelConfig, MANIFEST_FILE, VOCAB_FILE, WEIGHTS_FILE};
pub use train::{
    epochs_for_size, evaluate, evaluate_model, predict_pair, run_protocol, train, train_model, EpochRecord,
    ProtocolReport, RunReport, TrainConfig, TrainReport,
};
