//! Frame normalisation, sensor standardisation, tokenisation and splitting.

mod sensor;
mod split;
mod video;
mod vocab;

pub use sensor::{apply_sensor_norm, denormalize_sensor, fit_sensor_stats, SensorStats, STD_FLOOR};
pub use split::{split_dataset, SplitAssignment};
pub use video::{normalize_clip, NormalizedClip};
pub use vocab::{
    build_vocab, detokenize, split_words, tokenize, Framing, TokenSequence, Vocabulary, BOS, CLS, EOS, PAD, RESERVED,
    UNK,
};

/// Maximum token sequence length, including framing tokens.
pub const MAX_LEN: usize = 50;
