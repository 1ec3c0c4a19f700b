//! Running compiled plans. Wrapper instances frame and extract records; the
//! shared repository decides which instances exist.

mod framing;
mod instance;
mod repository;
mod transform;
mod value;

use thiserror::Error;

pub use framing::{encode_frame, FrameDecoder, FrameError, MAX_LINE_BYTES};
pub use instance::{
    ElementSink, WrapperInstance, WrapperState, WrapperStats, IO_DEADLINE, POLL_RETRY_ATTEMPTS,
    POLL_RETRY_BACKOFF,
};
pub use repository::{
    DefinitionResolver, EntrySnapshot, OsPlanCompiler, PlanCompiler, ProvisionFailure,
    Registration, RepositoryError, WrapperRepository,
};
pub use transform::{apply_program, ExtractError};
pub use value::{StreamElement, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("wrapper is {found:?}, expected {expected:?}")]
    InvalidState {
        expected: WrapperState,
        found: WrapperState,
    },
    #[error("wrapper failed: {0}")]
    Failed(String),
}
