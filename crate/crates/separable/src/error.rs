use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped by the stage that raises them so that callers (the
/// CLI in particular) can map each group to a distinct exit status.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    // ingestion
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("duplicate interval k={k} for subject {id}")]
    DuplicateInterval { id: String, k: usize },
    #[error("interval {k} out of range 0..={horizon}")]
    IndexOutOfRange { k: usize, horizon: usize },
    #[error("dataset failed validation with {0} finding(s)")]
    ValidationFailed(usize),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    // graphs
    #[error("graph parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cycle detected through node {0}")]
    CycleDetected(String),
    #[error("bad deterministic edge {from} -> {to}")]
    BadDeterministicEdge { from: String, to: String },
    #[error("edge {from} -> {to} violates time order")]
    TimeOrder { from: String, to: String },
    #[error("graph has no treatment decomposition")]
    NoDecomposition,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("partition does not cover exactly the common causes: {0}")]
    IncompletePartition(String),
    #[error("too many measured covariates to enumerate partitions ({0})")]
    TooManyCovariates(usize),

    // model fitting
    #[error("formula error: {0}")]
    Formula(String),
    #[error("unknown covariate {0}")]
    UnknownCovariate(String),
    #[error("empty risk set for {0}")]
    EmptyRiskSet(String),
    #[error("separation detected (max |coefficient| {max_coef:.1}, max |score| {max_score:.3e})")]
    Separation { max_coef: f64, max_score: f64 },
    #[error("singular information matrix")]
    SingularInformation,
    #[error("no convergence after {iterations} iterations (max |score| {max_score:.3e})")]
    NonConvergence { iterations: usize, max_score: f64 },
    #[error("model is not converged")]
    NotConverged,
    #[error("history level unseen at fit time in model {0}")]
    UnseenLevel(String),

    // weights and estimators
    #[error("positivity breach: {what} probability {value:.3e} below threshold at subject {subject}, interval {k}")]
    PositivityBreach { what: &'static str, value: f64, subject: String, k: usize },
    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),
    #[error("sensitivity offset moves a probability out of (0,1): {value} at interval {k}")]
    OffsetOutOfRange { value: f64, k: usize },
    #[error("no subjects in arm {0}")]
    NoSubjectsInArm(u8),
    #[error("continuous covariate {0} cannot be enumerated")]
    ContinuousCovariate(String),
    #[error("empty cell: {0}")]
    EmptyCell(String),
    #[error("missing regime {0}")]
    MissingRegime(String),
    #[error("{failed} of {total} bootstrap resamples failed to fit")]
    ResampleFitFailure { failed: usize, total: usize },

    // oracle
    #[error("invalid data-generating process: {0}")]
    InvalidDgp(String),
    #[error("state space exceeds {0} trajectories")]
    StateSpaceTooLarge(usize),
    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        Error::Io { path: path.to_string(), message: err.to_string() }
    }
}
