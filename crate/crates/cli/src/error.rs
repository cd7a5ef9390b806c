use evosts::eval_report::ReportError;
use evosts::evolution::EvoError;
use evosts::lstm::LstmError;
use evosts::signal_io::SignalError;
use evosts::sparse_coding::SparseError;
use thiserror::Error;

/// Every failure maps onto one of three stable exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn key(key: &str, message: impl std::fmt::Display) -> Self {
        CliError::Config(format!("`{key}`: {message}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        let msg = e.to_string();
        match e {
            SignalError::FileNotFound(_)
            | SignalError::Io { .. }
            | SignalError::Parse { .. }
            | SignalError::EmptySignal
            | SignalError::OddByteCount(_) => CliError::Io(msg),
            SignalError::ZeroVariance => CliError::Numeric(msg),
            SignalError::InvalidLength(_)
            | SignalError::InvalidParameter(_)
            | SignalError::SignalTooShort { .. }
            | SignalError::TooFewPairs { .. } => CliError::Config(msg),
        }
    }
}

impl From<SparseError> for CliError {
    fn from(e: SparseError) -> Self {
        let msg = e.to_string();
        match e {
            SparseError::NonFinite(_) | SparseError::DegenerateDictionary => CliError::Numeric(msg),
            SparseError::DimensionMismatch { .. }
            | SparseError::EmptyTrainingSet
            | SparseError::InvalidConfig(_) => CliError::Config(msg),
        }
    }
}

impl From<LstmError> for CliError {
    fn from(e: LstmError) -> Self {
        let msg = e.to_string();
        match e {
            LstmError::NonFinite(_) | LstmError::NonFiniteInput => CliError::Numeric(msg),
            LstmError::Io(_) | LstmError::Sidecar(_) => CliError::Io(msg),
            LstmError::DimensionMismatch { .. }
            | LstmError::CacheMismatch
            | LstmError::EmptyDataset
            | LstmError::InvalidConfig(_) => CliError::Config(msg),
        }
    }
}

impl From<EvoError> for CliError {
    fn from(e: EvoError) -> Self {
        match e {
            EvoError::Signal(e) => e.into(),
            EvoError::Sparse(e) => e.into(),
            EvoError::Lstm(e) => e.into(),
            EvoError::NonFiniteScore { .. } => CliError::Numeric(e.to_string()),
            EvoError::Io(_) | EvoError::Manifest(_) => CliError::Io(e.to_string()),
            EvoError::InvalidConfig(_)
            | EvoError::EmptyPartition
            | EvoError::DictionaryMismatch { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Evo(e) => e.into(),
            ReportError::Signal(e) => e.into(),
            ReportError::Lstm(e) => e.into(),
            ReportError::ZeroVariance => CliError::Numeric(e.to_string()),
            ReportError::Io(_) | ReportError::Json(_) => CliError::Io(e.to_string()),
            ReportError::DimensionMismatch(_) | ReportError::EmptyInput => {
                CliError::Config(e.to_string())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(
            CliError::from(SignalError::FileNotFound("x".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::from(SignalError::TooFewPairs {
                pairs: 1,
                needed: 2
            })
            .exit_code(),
            1
        );
        assert_eq!(
            CliError::from(EvoError::NonFiniteScore {
                generation: 0,
                child: 1
            })
            .exit_code(),
            3
        );
        assert_eq!(
            CliError::from(EvoError::Lstm(LstmError::NonFinite("loss"))).exit_code(),
            3
        );
        assert_eq!(
            CliError::from(ReportError::Evo(EvoError::InvalidConfig("k".into()))).exit_code(),
            1
        );
    }
}
