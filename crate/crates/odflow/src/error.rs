//! Error taxonomy shared by the CLI and the pipeline.
//!
//! Every failure is classified into one of four kinds so that callers and
//! scripts can react without parsing prose. The kind determines the process
//! exit code, and the final error record printed to stderr is a single JSON
//! line of the form `{"error":{"kind":"...","message":"..."}}`.

use std::fmt;
use std::path::Path;

/// Failure classification. Maps one-to-one onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A required input file or directory does not exist.
    InputMissing,
    /// An input exists but its contents violate the format contract.
    InputInvalid,
    /// The configuration (file or flags) is rejected before any input is read.
    ConfigInvalid,
    /// A bug or an environment failure that is not the user's fault.
    Internal,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::InputMissing => "input-missing",
            ErrorKind::InputInvalid => "input-invalid",
            ErrorKind::ConfigInvalid => "config-invalid",
            ErrorKind::Internal => "internal",
        }
    }

    /// Exit codes: 0 success, 1 internal, 2 input problems, 3 config problems.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::InputMissing | ErrorKind::InputInvalid => 2,
            ErrorKind::ConfigInvalid => 3,
            ErrorKind::Internal => 1,
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An error with a classification attached.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }

    pub fn input_missing(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::InputMissing, message)
    }

    pub fn input_invalid(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::InputInvalid, message)
    }

    pub fn config_invalid(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::ConfigInvalid, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, message)
    }

    /// Classifies an IO failure on `path`: a missing file is the user's
    /// problem to fix, anything else is reported as the input being unreadable.
    pub fn from_io(path: &Path, err: &std::io::Error) -> Self {
        let message = format!("{}: {}", path.display(), err);
        if err.kind() == std::io::ErrorKind::NotFound {
            Self::input_missing(message)
        } else {
            Self::input_invalid(message)
        }
    }

    /// The machine-readable record printed as the last line on stderr.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind.as_str(), "message": self.message }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(ErrorKind::Internal.exit_code(), 1);
        assert_eq!(ErrorKind::InputMissing.exit_code(), 2);
        assert_eq!(ErrorKind::InputInvalid.exit_code(), 2);
        assert_eq!(ErrorKind::ConfigInvalid.exit_code(), 3);
    }

    #[test]
    fn record_is_one_json_object() {
        let err = CliError::input_missing("districts.geojson: no such file");
        let v: serde_json::Value = serde_json::from_str(&err.record()).unwrap();
        assert_eq!(v["error"]["kind"], "input-missing");
        assert!(v["error"]["message"].as_str().unwrap().contains("districts"));
    }

    #[test]
    fn io_not_found_maps_to_input_missing() {
        let err = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let cli = CliError::from_io(Path::new("x.csv"), &err);
        assert_eq!(cli.kind, ErrorKind::InputMissing);
        let err = std::io::Error::new(std::io::ErrorKind::PermissionDenied, "nope");
        let cli = CliError::from_io(Path::new("x.csv"), &err);
        assert_eq!(cli.kind, ErrorKind::InputInvalid);
    }
}
