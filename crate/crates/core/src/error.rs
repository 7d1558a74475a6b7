use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the toolkit.
///
/// Variants are grouped by pipeline stage; every variant carries enough
/// context (path, line number, offending symbol) to act on the report
/// without a debugger.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: invalid UTF-8")]
    InvalidEncoding { path: PathBuf, line: usize },

    #[error("{path}:{line}: {msg}")]
    FileFormat {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("word {word:?} cannot be segmented with the current unit inventory")]
    UnsegmentableWord { word: String },

    #[error("unknown token {token:?} (not in the lexicon spelling table)")]
    MissingSpelling { token: String },

    #[error(
        "spelling {spelling:?} of token {token:?} uses character {ch:?} outside the inventory"
    )]
    SpellingOutsideInventory {
        token: String,
        spelling: String,
        ch: char,
    },

    #[error("symbol table mismatch: {0}")]
    SymbolTableMismatch(String),

    #[error(
        "transducer is not deterministic: state {state} has duplicate or epsilon input labels"
    )]
    NotDeterministic { state: usize },

    #[error(
        "determinization exceeded its state budget ({budget} states for {input_states} input states)"
    )]
    DeterminizationBudget { budget: usize, input_states: usize },

    #[error("cannot determinize: a final state is reached with pending output symbols")]
    DeterminizationResidual,

    #[error("negative-weight cycle makes shortest distances unbounded")]
    NegativeWeightCycle,

    #[error("epsilon cycle with negative weight through state {state}")]
    NegativeEpsilonCycle { state: usize },

    #[error("cannot remove input-epsilon arcs: state {state} accumulates a multi-symbol output")]
    EpsilonOutputTooLong { state: usize },

    #[error("no accepting path")]
    NoAcceptingPath,

    #[error("search graph is empty (no states or no final state)")]
    EmptyGraph,

    #[error("lattice label table does not match the graph input alphabet: {0}")]
    LabelTableMismatch(String),

    #[error("no hypothesis survived decoding (beam too narrow or final states unreachable)")]
    NoHypothesis,

    #[error("shortest-path search exceeded its expansion budget")]
    SearchBudgetExceeded,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::FileFormat {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
