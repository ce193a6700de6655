use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid genotype call {value} for marker {marker} (expected 0, 1, 2 or missing)")]
    InvalidCall { marker: String, value: u8 },

    #[error("marker {0} has no observed calls")]
    AllMissing(String),

    #[error("column {0} is constant")]
    ConstantColumn(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariate matrix is rank deficient")]
    RankDeficient,

    #[error("zero residual variance after covariate regression")]
    ZeroResidualVariance,

    #[error("invalid shrinkage intensity {0} (expected a value in (0, 1])")]
    InvalidLambda(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("each class needs at least 2 samples (got {0} and {1})")]
    SingleClass(usize, usize),

    #[error("zero pooled variance in column {0}")]
    ZeroPooledVariance(String),

    #[error("variance decomposition is only defined for CAR and CAT scores, not {0}")]
    DecompositionUnsupported(String),

    #[error("local fdr needs at least {needed} scores, got {got}; use fixed-size selection instead")]
    TooFewScores { needed: usize, got: usize },

    #[error("all scores have the same magnitude")]
    DegenerateScores,

    #[error("invalid fdr cutoff {0} (expected a value in (0, 1])")]
    InvalidCutoff(f64),

    #[error("k = {k} out of range 1..={d}")]
    KOutOfRange { k: usize, d: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("causal markers carry zero genetic variance but heritability is positive")]
    ZeroGeneticVariance,

    #[error("bad factor cache: {0}")]
    Cache(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }

    /// Process exit code for this error: 2 for data problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient
            | Error::ZeroResidualVariance
            | Error::ZeroPooledVariance(_)
            | Error::DegenerateScores
            | Error::ZeroGeneticVariance
            | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
