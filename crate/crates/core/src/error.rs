use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("step {t} outside 1..={tau}")]
    StepOutOfRange { t: usize, tau: usize },

    #[error("grid half-width {half_width} does not cover required {required}")]
    GridTooNarrow { half_width: f64, required: f64 },

    #[error("grid needs at least 3 points, got {0}")]
    GridTooCoarse(usize),

    #[error("equivalence check requires sigma = sigma1 = 0 and no intermediate rewards: {0}")]
    EquivalenceConditions(String),

    #[error("schedule has {got} entries, task expects {expected}")]
    ScheduleMismatch { expected: usize, got: usize },

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("need at least {needed} subjects, got {got}")]
    TooFewSubjects { needed: usize, got: usize },

    #[error("no usable data: {0}")]
    NoUsableData(String),

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("session `{0}` is closed")]
    SessionClosed(String),

    #[error("out-of-order event: tick {tick} after {last}")]
    OutOfOrderTick { tick: u64, last: u64 },

    #[error("duplicate event at tick {0}")]
    DuplicateEvent(u64),

    #[error("refusing to overwrite existing file {0}")]
    WouldOverwrite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error JSON and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::StepOutOfRange { .. } => "step_out_of_range",
            Error::GridTooNarrow { .. } | Error::GridTooCoarse(_) => "bad_grid",
            Error::EquivalenceConditions(_) => "equivalence_conditions",
            Error::ScheduleMismatch { .. } => "schedule_mismatch",
            Error::InfeasibleSchedule(_) => "infeasible_schedule",
            Error::TooFewSubjects { .. } => "too_few_subjects",
            Error::NoUsableData(_) => "no_usable_data",
            Error::UnknownProtocol(_) => "unknown_protocol",
            Error::UnknownSession(_) => "unknown_session",
            Error::SessionClosed(_) => "session_closed",
            Error::OutOfOrderTick { .. } => "out_of_order_tick",
            Error::DuplicateEvent(_) => "duplicate_event",
            Error::WouldOverwrite(_) => "would_overwrite",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
