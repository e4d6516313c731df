//! Decoding and evaluation toolkit for audio-visual speech recognition.
//!
//! The crate covers the deterministic parts of a hybrid CTC/attention
//! recognizer: the CTC lattice (loss, gradient, prefix probabilities), the
//! joint CTC/attention beam search, fusion and frame-rate contracts between
//! the audio and visual streams, SNR-controlled noise augmentation, mouth-ROI
//! preprocessing geometry and word error rate scoring.

pub mod audio;
pub mod ctc;
pub mod decoder;
pub mod demo;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod logspace;
pub mod manifest;
pub mod scorer;
pub mod visual;
pub mod vocab;
pub mod wer;

pub use ctc::{ctc_forward_loss, ctc_gradient, prefix_extend, prefix_init, Extension, PrefixState};
pub use decoder::{
    decode, exhaustive_oracle, greedy_ctc, DecodeMode, DecodeOutput, DecoderConfig, Hypothesis,
};
pub use error::{Error, Result};
pub use grid::{PosteriorGrid, SymbolLayout};
pub use scorer::{
    cross_entropy_loss, hybrid_loss, BigramScorer, HybridLossConfig, Scorer, ScorerState,
    TableScorer, UniformScorer,
};
pub use vocab::{TokenRole, TokenSequence, Vocabulary};
pub use wer::{align_words, corpus_wer, WerBreakdown};
