use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParams { name: &'static str, detail: String },

    /// The frequency lattice needs at least two interior points per axis to
    /// make a non-degenerate experiment.
    #[error("degenerate frequency lattice: R^sigma = {r_sigma:.4} <= 2 leaves too few lattice points")]
    DegenerateLattice { r_sigma: f64 },

    #[error("empty sampled set: {0}")]
    EmptySet(String),

    #[error("node budget exceeded: the run needs about {needed} phase evaluations, budget is {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },

    #[error("exponent fit needs at least 4 records, got {0}")]
    TooFewRecords(usize),

    #[error("exponent fit requires positive values, got {value} at R = {r}")]
    NonPositiveValue { r: f64, value: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
