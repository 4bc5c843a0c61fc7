//! Entity and pair model, benchmark I/O, splitting, synthetic data and
//! evaluation metrics.

mod magellan;
mod metrics;
mod record;
mod split;
mod synonyms;
mod uis;

pub use magellan::{
    load_magellan_dataset, load_magellan_splits, read_pairs, read_table, write_magellan_dataset, write_pairs,
    write_table, LEFT_TABLE, PAIR_FILES, RIGHT_TABLE,
};
pub use metrics::{compute_metrics, mean_std, Metrics};
pub use record::{CandidatePair, DatasetBundle, DatasetSummary, EntityRecord, SplitTag};
pub use split::{split_dataset, split_sizes};
pub use synonyms::{synonym_negatives, SynonymLexicon};
pub use uis::{
    generate_uis_tables, merge_attributes, synthesize_people, UisOptions, UisTables,
    UIS_ATTRIBUTES,
};
