use thiserror::Error;

/// Errors produced by ensemble construction, channel analysis, design and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain parameters: {0}")]
    InvalidParams(String),

    #[error("constraint {id} violated: {detail}")]
    Constraint { id: u8, detail: String },

    #[error("connection budget mismatch: {spare} spare sockets, {demanded} edges demanded")]
    BudgetMismatch { spare: u32, demanded: u32 },

    #[error("erasure profile: {0}")]
    Profile(String),

    #[error("target {target} outside profile range [{lo}, {hi}]")]
    OutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("no threshold bracket in profile range: {0}")]
    NoBracket(String),

    #[error("invalid bit mapping: {0}")]
    Mapping(String),

    #[error("lifting failed: {0}")]
    Lifting(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid-params",
            Error::Constraint { .. } => "constraint",
            Error::BudgetMismatch { .. } => "budget",
            Error::Profile(_) => "profile",
            Error::OutOfRange { .. } => "out-of-range",
            Error::NoBracket(_) => "no-bracket",
            Error::Mapping(_) => "mapping",
            Error::Lifting(_) => "lifting",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
