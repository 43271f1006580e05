use separable::Error as LibError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0} data finding(s)")]
    Findings(usize),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
    #[error(transparent)]
    Lib(#[from] LibError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 0 ok, 1 data findings, 2 usage, 3 model failure, 4 positivity breach,
    /// 5 internal.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Findings(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Output { .. } => 5,
            CliError::Lib(e) => match e {
                LibError::ValidationFailed(_)
                | LibError::MalformedRow { .. }
                | LibError::DuplicateInterval { .. }
                | LibError::IndexOutOfRange { .. }
                | LibError::SchemaMismatch(_) => 1,
                LibError::Io { .. }
                | LibError::InvalidSchema(_)
                | LibError::Parse { .. }
                | LibError::CycleDetected(_)
                | LibError::BadDeterministicEdge { .. }
                | LibError::TimeOrder { .. }
                | LibError::NoDecomposition
                | LibError::UnknownNode(_)
                | LibError::IncompletePartition(_)
                | LibError::TooManyCovariates(_)
                | LibError::Formula(_)
                | LibError::UnknownCovariate(_)
                | LibError::PartitionMismatch(_)
                | LibError::OffsetOutOfRange { .. }
                | LibError::ContinuousCovariate(_)
                | LibError::MissingRegime(_)
                | LibError::InvalidDgp(_) => 2,
                LibError::EmptyRiskSet(_)
                | LibError::Separation { .. }
                | LibError::SingularInformation
                | LibError::NonConvergence { .. }
                | LibError::NotConverged
                | LibError::UnseenLevel(_)
                | LibError::EmptyCell(_)
                | LibError::NoSubjectsInArm(_)
                | LibError::ResampleFitFailure { .. } => 3,
                LibError::PositivityBreach { .. } => 4,
                LibError::StateSpaceTooLarge(_) | LibError::UndefinedConditional(_) => 5,
            },
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
