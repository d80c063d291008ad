use std::fmt;

use dualprice::Error;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => match e {
                Error::Io(_) => "io",
                Error::InvalidFairness(_) => "invalid_fairness",
                Error::NotConverged { .. } => "not_converged",
                Error::DualUnbounded(_) => "dual_unbounded",
                Error::SchemaVersion { .. } => "schema_version",
                Error::Parse(_) | Error::Csv(_) | Error::Json(_) => "parse",
                Error::UnknownGroup(_) => "unknown_group",
                Error::InvalidInput(_) => "invalid_input",
                Error::DimensionMismatch(_) => "dimension_mismatch",
                Error::EmptyArm(_) => "empty_arm",
                Error::SingularDesign { .. } => "singular_design",
                Error::MissingPropensity(_) => "missing_propensity",
                Error::SingleTreatment => "single_treatment",
                Error::NonFinite { .. } => "non_finite",
                Error::MissingOutcome(_) => "missing_outcome",
                Error::TraceExhausted(_) => "trace_exhausted",
                Error::OracleScale(_) => "oracle_scale",
            },
        }
    }

    /// 2 config, 3 io, 4 invalid fairness, 5 solver failure, 6 data, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                Error::Io(_) => 3,
                Error::InvalidFairness(_) => 4,
                Error::NotConverged { .. } | Error::DualUnbounded(_) => 5,
                Error::OracleScale(_) => 1,
                _ => 6,
            },
        }
    }

    /// One-line JSON error record.
    pub fn line(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}
