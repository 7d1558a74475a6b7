//! Reserved marker tokens shared across the pipeline.
//!
//! These markers live in the token alphabet next to ordinary units and
//! words: `<sp>` stands for the space between words, `<s>`/`</s>` delimit
//! sequences in the language model, `<unk>` absorbs out-of-vocabulary
//! tokens, and `<blank>` is the no-emission label of collapse topologies.

/// Explicit word-boundary token inserted between words at tokenization.
pub const WORD_BOUNDARY: &str = "<sp>";

/// Sequence-start marker (context only, never predicted).
pub const SEQ_START: &str = "<s>";

/// Sequence-end marker.
pub const SEQ_END: &str = "</s>";

/// Out-of-vocabulary token.
pub const UNKNOWN: &str = "<unk>";

/// Blank (no emission) label used by collapse topologies and lattices.
pub const BLANK: &str = "<blank>";

/// Display name of the epsilon label (id 0) in symbol tables.
pub const EPSILON: &str = "<eps>";

/// Prefix of auxiliary disambiguation symbols (`#0`, `#1`, ...).
pub const DISAMBIG_PREFIX: char = '#';

/// True for the four language-model markers.
pub fn is_marker(token: &str) -> bool {
    matches!(token, WORD_BOUNDARY | SEQ_START | SEQ_END | UNKNOWN)
}
