use std::path::PathBuf;

use thiserror::Error;

use crate::ids::{EventId, MemberId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input file `{}`", .0.display())]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {reason}")]
    MalformedRow { file: String, line: u64, reason: String },

    #[error("rsvps.csv references unknown event `{event}` (member `{member}`)")]
    DanglingEvent { member: MemberId, event: EventId },

    #[error("unknown member `{0}`")]
    UnknownMember(MemberId),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("year {year} is outside the dataset range {range}")]
    YearOutOfRange { year: i32, range: String },

    #[error("year slice is empty")]
    EmptySlice,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("member `{member}` has no RSVP dated in or before {year}")]
    NoAttendanceBy { member: MemberId, year: i32 },

    #[error("attendance vector is zero; novelty is undefined")]
    ZeroVector,

    #[error("attendance vectors are not comparable: {0}")]
    IncomparableVectors(String),

    #[error("no member in the population has any interest term")]
    NoInterestTerms,

    #[error("invalid interest distribution: {0}")]
    InvalidDistribution(String),

    #[error("year {0} has no active members")]
    EmptyYear(i32),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph has no edges; modularity is undefined")]
    EdgelessGraph,

    #[error("partition covers {got} nodes but the graph has {expected}")]
    PartitionMismatch { expected: usize, got: usize },

    #[error("member `{member}` attended {count} events but only {available} exist in the year")]
    InfeasibleResample {
        member: MemberId,
        count: usize,
        available: usize,
    },

    #[error("regressor `{0}` has zero within-member variance")]
    ZeroWithinVariance(String),

    #[error("design matrix is singular after demeaning")]
    SingularDesign,

    #[error("panel has too few observations: {0}")]
    InsufficientPanel(String),

    #[error("dataset fails validation ({} violations): {}", .0.len(), .0.first().map_or("", String::as_str))]
    InvalidDataset(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Input or configuration problems, as opposed to failures while
    /// computing on valid input.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Self::MissingFile(_)
                | Self::MalformedRow { .. }
                | Self::DanglingEvent { .. }
                | Self::InvalidConfig(_)
                | Self::InvalidDataset(_)
                | Self::YearOutOfRange { .. }
                | Self::Json(_)
                | Self::Csv(_)
        )
    }
}
