//! Wrapper generation: definitions compiled into execution plans, and wrapper
//! source emitted from middleware templates.

mod emit;
mod fetch;
mod plan;
mod template;

use thiserror::Error;

use crate::definitions::Violation;

pub use emit::emit_source;
pub use fetch::{fetch_libraries, FetchOutcome, LibraryFetchReport};
pub use plan::{
    compile_plan, decode_literal, resolve_config, CompiledExtractor, CompiledStep, ExecutionPlan,
    TransportBinding,
};
pub use template::WrapperTemplate;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("required configuration `{0}` has no value for this OS and no override")]
    MissingRequiredConfig(String),
    #[error("configuration `{0}` may not be overridden")]
    OverrideNotPermitted(String),
    #[error("placeholder `${{{0}}}` has no resolved value")]
    UnresolvedPlaceholder(String),
    #[error("invalid transport binding: {0}")]
    InvalidBinding(String),
    #[error("inconsistent plan: {0}")]
    PlanConsistency(String),
    #[error("definition is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidDefinition(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template syntax: {0}")]
    Syntax(String),
    #[error("placeholder `{{{{{0}}}}}` is used but not declared")]
    Undeclared(String),
    #[error("template io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("template demands placeholder `{{{{{0}}}}}` which the generator cannot fill")]
    UnboundPlaceholder(String),
}
