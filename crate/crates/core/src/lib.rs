//! Declarative sensor device definitions compiled into runnable wrappers.
//!
//! The crate is split along the data path:
//!
//! * [`definitions`] parses and validates device (SDD) and virtual sensor (VSD)
//!   documents and derives wrapper connection requests.
//! * [`codegen`] compiles a definition into an [`codegen::ExecutionPlan`] and
//!   emits wrapper source from middleware templates.
//! * [`runtime`] runs plans as wrapper instances and shares them through the
//!   wrapper repository.
//! * [`engine`] hosts virtual sensors: windowed stores fed by wrappers.
//! * [`registry`] resolves missing definitions from a local directory, then a
//!   remote registry service.
//! * [`devsim`] simulates devices for every supported transport.

pub mod definitions;
pub mod codegen;
pub mod runtime;
pub mod engine;
pub mod registry;
pub mod devsim;
