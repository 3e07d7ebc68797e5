use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hybridsurf::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read config file: {0}")]
    ConfigParse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlWrite(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Machine-readable form printed on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        use hybridsurf::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::InvalidGrid { .. } => "invalid_grid",
                E::InvalidOrder { .. } => "invalid_order",
                E::NotSpd { .. } => "not_spd",
                E::DimensionMismatch { .. } => "dimension_mismatch",
                E::Kernel(_) => "kernel",
                E::RankDeficientDesign { .. } => "rank_deficient_design",
                E::AnchoringInsufficient { .. } => "anchoring_insufficient",
                E::InvalidPrior(_) => "invalid_prior",
                E::InvalidConfig(_) => "invalid_config",
                E::Chain { .. } => "chain",
                E::NonFinite { .. } => "non_finite",
                E::TooFewDraws { .. } => "too_few_draws",
                E::UndefinedMetric => "undefined_metric",
                E::Integration { .. } => "integration",
                E::Ingest(_) => "ingest",
                E::Io(_) => "io",
                E::Csv(_) => "csv",
            },
            CliError::Config(_) | CliError::ConfigParse(_) => "config",
            CliError::Io(_) => "io",
            CliError::Csv(_) => "csv",
            CliError::Json(_) | CliError::TomlWrite(_) => "serialization",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport { error: self.kind(), message: self.to_string() }
    }
}
