use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("argument error: {0}")]
    Argument(String),

    /// A spectrum left the cone; `index` is the first elementary symmetric
    /// function that is not positive.
    #[error("domain error: sigma_{index} = {value:e} is not positive")]
    Domain { index: usize, value: f64 },

    #[error("metric error at grid point {point}: minimum eigenvalue {min_eigenvalue:e}")]
    Metric { point: usize, min_eigenvalue: f64 },

    #[error("positivity error: {0}")]
    Positivity(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error at grid point {point}: spectrum {spectrum:?} has an axis limit outside the cone")]
    SubsolutionDomain { point: usize, spectrum: Vec<f64> },

    #[error("admissibility error at grid point {point}: spectrum {spectrum:?}")]
    Admissibility { point: usize, spectrum: Vec<f64> },

    #[error("line search stagnated after {halvings} halvings (residual {residual:e})")]
    Stagnation { halvings: usize, residual: f64 },

    #[error("continuation failed: step underflow below {min_step:e}, last good t = {last_t}")]
    Continuation { last_t: f64, min_step: f64 },

    #[error("flow aborted at step {step}: {reason}")]
    FlowAbort { step: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("case {case}: {source}")]
    Case { case: String, source: Box<Error> },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// The innermost error, looking through case context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Case { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
