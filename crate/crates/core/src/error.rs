use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("score {score} is outside [-1, 1]")]
    ScoreOutOfRange { score: f64 },

    #[error("item `{item}` is compared with itself")]
    SelfComparison { item: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("item `{item}` has {found} features, expected {expected}")]
    FeatureWidth {
        item: String,
        expected: usize,
        found: usize,
    },

    #[error("feature dimension must be positive")]
    ZeroDimension,

    #[error("duplicate item `{0}`")]
    DuplicateItem(String),

    #[error("missing item `{0}`")]
    MissingItem(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("users with fewer than 2 comparisons: {}", .0.join(", "))]
    TooFewComparisons(Vec<String>),

    #[error("need at least {needed} users, found {found}")]
    TooFewUsers { needed: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("mean is zero, {0} is undefined")]
    ZeroMean(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training loss became non-finite at epoch {epoch}; try a smaller learning rate")]
    Diverged { epoch: usize },
}
