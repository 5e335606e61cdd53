//! Indoor scene layout synthesis from short text descriptions.
//!
//! A description is enriched with priors retrieved from a memory of parsed
//! scenes, grounded into functionality zones, dominant objects and their
//! accessories, then refined by a diagnose, score and rectify loop until
//! the weighted violation penalty drops below its threshold.
//!
//! Every model call sits behind [`agents::ChatBackend`] and
//! [`agents::EmbeddingBackend`]; the deterministic mock backends make the
//! whole pipeline reproducible offline.

pub mod agents;
pub mod cli;
pub mod config;
pub mod document;
pub mod edit;
pub mod eval;
pub mod geometry;
pub mod grounding;
pub mod memory;
pub mod pipeline;
pub mod refine;
pub mod render;
pub mod scene;

use thiserror::Error;

/// Any failure surfaced by the command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Validation(#[from] scene::ValidationError),
    #[error(transparent)]
    Document(#[from] document::DocumentError),
    #[error(transparent)]
    Memory(#[from] memory::MemoryError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
    #[error(transparent)]
    Refine(#[from] refine::RefineError),
    #[error(transparent)]
    Edit(#[from] edit::EditError),
    #[error(transparent)]
    Agent(#[from] agents::AgentError),
}

impl Error {
    /// True when a model or embedding endpoint is at fault.
    pub fn is_client(&self) -> bool {
        use memory::MemoryError as M;
        use refine::RefineError as R;
        match self {
            Error::Agent(_) => true,
            Error::Memory(M::Agent(_) | M::Parse { .. }) => true,
            Error::Pipeline(p) => p.is_client(),
            Error::Refine(R::Agent(_)) => true,
            Error::Edit(edit::EditError::Refine(R::Agent(_))) => true,
            _ => false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_client() {
            2
        } else {
            1
        }
    }
}
