use alloc::string::String;

/// Syntax or well-formedness error in KB text, with 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("symbol `{0}` is not in the vocabulary")]
    UnknownSymbol(String),
    #[error("query is not derivable from the premise base")]
    UnreachableQuery,
    #[error("formula has no predecessors: {0}")]
    UndefinedPredecessor(String),
    #[error("step {step}: pointer {pointer} outside pool of size {pool}")]
    PointerOutOfRange {
        step: usize,
        pointer: usize,
        pool: usize,
    },
    #[error("step {step}: rule {rule} does not exist")]
    UnknownRule { step: usize, rule: u32 },
    #[error("step {step}: rule {rule} does not match its premises")]
    RuleInapplicable { step: usize, rule: u32 },
    #[error("step {step}: conjunction introduction needs an atom as right premise")]
    Structural { step: usize },
    #[error("trace encoding is truncated")]
    Truncated,
    #[error("{count} candidates exceed the brute-force limit of {limit}")]
    TooManyCandidates { count: usize, limit: usize },
    #[error("lost premise is not in the baseline: {0}")]
    LostNotSubset(String),
    #[error("spurious premise already in the baseline: {0}")]
    SpuriousInBaseline(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = core::result::Result<T, Error>;
