//! Beam-search sequence decoding with external language-model fusion.
//!
//! The crate bundles everything the decoding experiments need: a token
//! vocabulary with fixed special symbols, corpus reversal and
//! partial-sentence generation, interpolated n-gram language models in
//! forward or backward orientation, synthetic per-step posterior grids, a
//! label-synchronous beam search that fuses forward and backward LM
//! scores with two-step pruning, word-error-rate scoring, and a seeded
//! experiment harness for method comparisons and length sweeps.

pub mod acoustic;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod ngram;
pub mod textgen;
pub mod vocab;
pub mod wer;

pub use acoustic::PosteriorGrid;
pub use decoder::{beam_search, rescore_total, DecodeResult, DecodeStats};
pub use error::{Error, Result};
pub use fusion::{backward_sequence_score, isf_applies, isf_delta, step_score, BlmBook, FusionConfig};
pub use ngram::{NGramLm, Orientation};
pub use vocab::{TokenId, Vocabulary, EOS_ID, SOS_ID, UNK_ID};
pub use wer::{edit_distance_wer, WerReport};
