use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid network architecture: {0}")]
    Architecture(String),

    #[error("non-finite {what} at epoch {epoch}")]
    NonFiniteTraining { what: &'static str, epoch: usize },

    #[error("non-finite model value at sample {index}")]
    NonFiniteSample { index: usize },

    #[error("model evaluation failed at sample {index}: {source}")]
    Evaluation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("constant model: output has zero variance over the sample")]
    ConstantModel,

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("point outside domain: coordinate {coord} = {value} not in [{lo}, {hi}]")]
    OutsideDomain {
        coord: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("latent value {t} outside interval [{lo}, {hi}]")]
    OutsideLatentInterval { t: f64, lo: f64, hi: f64 },

    #[error("degenerate gradient at t = {t}")]
    DegenerateGradient { t: f64 },

    #[error("{degenerate} of {total} grid points have a degenerate gradient")]
    DegenerateGrid { degenerate: usize, total: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("no exact reference quantities registered for `{0}`")]
    NoExactQuantities(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
