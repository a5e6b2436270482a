use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("column `{0}` is missing from the input table")]
    MissingColumn(String),

    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },

    #[error("value `{value}` of variable `{variable}` is not one of its declared categories")]
    UnknownCategory { variable: String, value: String },

    #[error("could not parse `{value}` in continuous variable `{variable}` as a number")]
    InvalidNumber { variable: String, value: String },

    #[error("outcome `{column}` has value `{value}`, expected `{positive}` or `{negative}`")]
    NonBinaryOutcome {
        column: String,
        value: String,
        positive: String,
        negative: String,
    },

    #[error("encoded column `{0}` is constant; it carries no information after centering")]
    DegenerateColumn(String),

    #[error("outcome contains a single class; both classes are required")]
    DegenerateOutcome,

    #[error("requested {target} degrees of freedom but the column block has rank {rank}")]
    UnattainableDf { target: f64, rank: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("design does not match the fitted model: {0}")]
    ColumnMismatch(String),

    #[error("unknown learner `{0}`")]
    UnknownLearner(String),

    #[error("learner `{0}` appears twice with different column sets")]
    LearnerConflict(String),

    #[error("stage {0} has a cross-validated budget; resolve it before fitting")]
    UnresolvedBudget(usize),

    #[error("at least {needed} observations are required, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("cross-validation fold {0} has a single outcome class in its training part")]
    DegenerateFold(usize),

    #[error("ROC analysis requires both classes among the labels")]
    SingleClass,

    #[error("logistic fit did not converge: {0}")]
    NonConvergence(String),

    #[error("artifact schema fingerprint {artifact} does not match the supplied schema {supplied}")]
    FingerprintMismatch { artifact: String, supplied: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("schema parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Failures that come from the numerics rather than from user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure(_) | Error::NonConvergence(_) | Error::UnattainableDf { .. }
        )
    }
}
