use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the classification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("azimuth window retains no samples")]
    EmptySegment,

    #[error("parameter outside its domain: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("estimation failed: {message} (last iterate {last_iterate:?})")]
    Estimation {
        message: String,
        last_iterate: Vec<f64>,
    },

    #[error("mixture component {component} collapsed (total responsibility {mass:e})")]
    ComponentCollapse { component: usize, mass: f64 },

    #[error("every class scored -inf; classification is indeterminate")]
    Indeterminate,

    #[error("singular covariance matrix: {0}")]
    SingularMatrix(String),

    #[error("fitting class `{class}`: {source}")]
    ClassFit {
        class: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric(_)
            | Error::Estimation { .. }
            | Error::ComponentCollapse { .. }
            | Error::Indeterminate
            | Error::SingularMatrix(_)
            | Error::DegenerateData(_) => true,
            Error::ClassFit { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub(crate) fn for_class(self, class: &str) -> Error {
        Error::ClassFit {
            class: class.to_string(),
            source: Box::new(self),
        }
    }
}
