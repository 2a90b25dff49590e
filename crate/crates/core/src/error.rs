use std::ops::Range;

use thiserror::Error;

use crate::formula::{ParseError, Violation};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("invalid model: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing covariate `{0}`")]
    MissingCovariate(String),

    #[error("effect {effect}: {distinct} distinct values, basis needs at least {required}")]
    TooFewDistinct {
        effect: usize,
        distinct: usize,
        required: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular penalized system{}", describe_span(.effect, .columns))]
    Singular {
        effect: Option<usize>,
        columns: Range<usize>,
    },

    #[error("degenerate GCV: n = {n} does not exceed tr(A) = {trace}")]
    DegenerateGcv { n: usize, trace: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical routines (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::DegenerateGcv { .. } | Error::NonFinite(_)
        )
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn describe_span(effect: &Option<usize>, columns: &Range<usize>) -> String {
    match effect {
        Some(k) => format!(
            " at effect {k} (columns {}..{})",
            columns.start, columns.end
        ),
        None if columns.start == 0 && columns.end == 1 => " at the intercept".to_string(),
        None => format!(" (columns {}..{})", columns.start, columns.end),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
