use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{0}: no triples")]
    EmptyGraph(PathBuf),

    #[error("only {eligible} entities have degree in [{min}, {max}], {needed} requested")]
    InsufficientEntities {
        eligible: usize,
        needed: usize,
        min: usize,
        max: usize,
    },

    #[error("entity {entity} has {available} triples, need at least {needed}")]
    TooFewTriples {
        entity: u32,
        available: usize,
        needed: usize,
    },

    #[error("no valid corruption candidates for entity {entity} under relation {relation}")]
    NegativePoolExhausted { entity: u32, relation: u32 },

    #[error("entity {entity} has no outgoing edges")]
    NoEdges { entity: u32 },

    #[error("unknown entity id {id} (valid range 0..{len})")]
    UnknownEntity { id: u32, len: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("truth entity {0} was filtered out of its own candidate set")]
    TruthFiltered(u32),

    #[error(transparent)]
    Autodiff(#[from] autodiff::AutodiffError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure is a non-finite value in the numeric core.
    pub fn is_numeric_fault(&self) -> bool {
        matches!(
            self,
            Error::Autodiff(autodiff::AutodiffError::NumericFault { .. })
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
