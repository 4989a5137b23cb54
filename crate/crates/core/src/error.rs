use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate state: Jones vector has zero norm")]
    DegenerateState,

    #[error("waveplate cascade mismatch: {axes} axes but {retardances} retardances")]
    CascadeMismatch { axes: usize, retardances: usize },

    #[error("empty waveplate cascade")]
    EmptyCascade,

    #[error("invalid channel plan: {0}")]
    ChannelPlan(String),

    #[error("background probability per gate {0} exceeds 1")]
    BackgroundTooHigh(f64),

    #[error("degenerate Raman calibration: {0}")]
    DegenerateCalibration(String),

    #[error("uncalibrated configuration: n={n}, spacing={spacing_ghz} GHz, fiber={fiber}")]
    UncalibratedConfiguration {
        n: u32,
        spacing_ghz: u32,
        fiber: String,
    },

    #[error("no counts: both detector rates are zero")]
    NoCounts,

    #[error("threshold never reached within {limit_km} km")]
    ThresholdNeverReached { limit_km: f64 },

    #[error("baseline visibility {baseline} does not exceed threshold {threshold}")]
    BelowThresholdAtReference { baseline: f64, threshold: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown override key `{0}`")]
    UnknownKey(String),

    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
