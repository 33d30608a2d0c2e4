use std::fmt;

use thiserror::Error;

/// One problem found while validating input records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    /// Study the problem belongs to, when it can be attributed to one.
    pub study: Option<String>,
    pub message: String,
}

impl Issue {
    pub fn new(study: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            study: study.map(str::to_owned),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.study {
            Some(s) => write!(f, "study {s}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// All validation issues for an input, reported together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issues(pub Vec<Issue>);

impl fmt::Display for Issues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation issue(s)", self.0.len())?;
        for issue in &self.0 {
            write!(f, "\n  - {issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(Issues),

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure{}: {message}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        message: String,
        iteration: Option<usize>,
    },

    #[error("{0}")]
    NotApplicable(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed configuration: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
            iteration: None,
        }
    }

    pub(crate) fn single(study: Option<&str>, msg: impl Into<String>) -> Self {
        Error::Validation(Issues(vec![Issue::new(study, msg)]))
    }

    /// True for errors caused by bad input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Domain(_)
                | Error::Dimension(_)
                | Error::NotApplicable(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Config(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
