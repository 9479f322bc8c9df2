//! Error classes mapped to exit codes: 2 config, 3 missing prerequisite,
//! 4 backend failure, 1 anything else.

use std::fmt;

use awaken_core::CoreError;

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Prerequisite(String),
    Backend(anyhow::Error),
    Other(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e:#}"),
            CliError::Prerequisite(msg) => write!(f, "prerequisite missing: {msg}"),
            CliError::Backend(e) => write!(f, "backend failure: {e:#}"),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Prerequisite(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    /// Core backend errors become exit 4; everything else stays generic.
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::Backend { .. } => CliError::Backend(e.into()),
            _ => CliError::Other(e.into()),
        }
    }

    /// Core errors raised while reading configured inputs are config errors.
    pub fn input(e: CoreError) -> Self {
        CliError::Config(e.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_match_the_documented_classes() {
        assert_eq!(CliError::Config(anyhow::anyhow!("x")).exit_code(), 2);
        assert_eq!(CliError::Prerequisite("x".into()).exit_code(), 3);
        assert_eq!(CliError::Backend(anyhow::anyhow!("x")).exit_code(), 4);
        assert_eq!(CliError::Other(anyhow::anyhow!("x")).exit_code(), 1);
    }

    #[test]
    fn core_backend_errors_class_as_backend() {
        let e = CoreError::Backend {
            msg: "boom".into(),
            retryable: false,
        };
        assert_eq!(CliError::from_core(e).exit_code(), 4);
        let e = CoreError::EmptyCandidates;
        assert_eq!(CliError::from_core(e).exit_code(), 1);
    }
}
