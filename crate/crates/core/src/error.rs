//! Crate-wide error type.
//!
//! Variants split into three rough families: configuration and contract
//! violations (bad grids, bad parameters, misuse of an API), data errors
//! (score table ingestion, persistence), and benchmark regressions (golden
//! file mismatch). The CLI maps these families onto distinct exit codes.

use crate::viewsphere::{GridSpec, ViewIndex};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("view ({}, {}) lies outside the {}x{} grid", view.azimuth, view.elevation, grid.azimuth_steps, grid.elevation_steps)]
    OutOfGrid { view: ViewIndex, grid: GridSpec },

    #[error("requested {steps} steps but the enumeration horizon is capped at {cap}")]
    HorizonExceeded { steps: usize, cap: usize },

    #[error("straight-path direction must have components in -1..=1 and not be (0, 0)")]
    InvalidDirection,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no training pair realises relative pose ({d_azimuth}, {d_elevation})")]
    PoseCoverage { d_azimuth: i32, d_elevation: i32 },

    #[error("weight table has no entry for relative pose ({d_azimuth}, {d_elevation})")]
    PoseLookup { d_azimuth: i32, d_elevation: i32 },

    #[error("score table parse error at line {line}: {msg}")]
    ScoreParse { line: usize, msg: String },

    #[error("weight table parse error at line {line}: {msg}")]
    WeightParse { line: usize, msg: String },

    #[error("results table parse error at line {line}: {msg}")]
    ResultsParse { line: usize, msg: String },

    #[error("score table is missing object {object:?} at view ({azimuth}, {elevation})")]
    IncompleteScores {
        object: String,
        azimuth: usize,
        elevation: usize,
    },

    #[error("unknown object id {0:?}")]
    UnknownObject(String),

    #[error("view ({}, {}) was already observed in this episode", view.azimuth, view.elevation)]
    DuplicateObservation { view: ViewIndex },

    #[error("every view on the grid has been observed; no next view exists")]
    EpisodeComplete,

    #[error("config error: {0}")]
    Config(String),

    #[error("results differ from golden file {path}: {detail}")]
    GoldenMismatch { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by an invalid configuration or API misuse,
    /// as opposed to bad input data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::OutOfGrid { .. }
                | Error::HorizonExceeded { .. }
                | Error::InvalidDirection
                | Error::InvalidParameter(_)
                | Error::EmptyInput(_)
                | Error::PoseLookup { .. }
                | Error::DuplicateObservation { .. }
                | Error::EpisodeComplete
                | Error::Config(_)
        )
    }
}
