//! Semantic and sequence modalities, labels and batching.

pub mod dataset;
pub mod embed;
pub mod labels;
pub mod sequence;
pub mod tokenize;
pub mod vocab;

pub use dataset::{
    batch_plan, make_batches, Batch, Dataset, EventStore, PrepareConfig, PreparedMeta, Sample,
    SampleView, SemanticInput, Split,
};
pub use embed::{RandomProjectionEmbedder, SentenceEmbedder};
pub use labels::{derive_labels, joint_label, label_with_keywords, Lexicon};
pub use sequence::{build_sequence, SequenceInput, WindowKind};
pub use tokenize::tokenize;
pub use vocab::{Vocabulary, PAD, UNK};
