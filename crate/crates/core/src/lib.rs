//! Sub-lexical unit learning, n-gram language modeling, and WFST decoding
//! over character posterior lattices.
//!
//! The pipeline, end to end:
//!
//! 1. [`corpus`] — load and normalize line-oriented text, manage character
//!    inventories shared across languages.
//! 2. [`multigram`] — learn variable-length character units with a
//!    zero-order hidden semi-Markov model, segment words with them, and
//!    assemble unit lexicons.
//! 3. [`lm`] — count n-grams over unit sequences and estimate backoff
//!    language models with modified Kneser-Ney smoothing.
//! 4. [`fst`] — tropical-semiring transducer algebra: composition,
//!    determinization, minimization, epsilon removal, shortest paths.
//! 5. [`graph`] — compile frame-label, lexicon, and grammar transducers
//!    and fuse them into a single decoding graph.
//! 6. [`lattice`] — synthesize character posterior lattices with
//!    controlled noise for repeatable experiments.
//! 7. [`decode`] — beam search over lattice × graph, producing ranked
//!    transcriptions with separated acoustic and grammar costs.
//! 8. [`eval`] — error-rate and graph-complexity reporting.

pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod fst;
pub mod graph;
pub mod lattice;
pub mod lm;
pub mod logmath;
pub mod multigram;
pub mod tokens;

pub use error::{Error, Result};
