//! Definition resolution: the local store first, then a remote registry.

mod cloud;
mod local;
mod server;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::definitions::{SensorDeviceDefinition, Violation};
use crate::runtime::DefinitionResolver;

pub use cloud::{CloudClient, DEFAULT_TIMEOUT};
pub use local::LocalStore;
pub use server::{decide_put, serve_registry, RegistryServer};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("definition is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("local store: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CloudError {
    #[error("registry unreachable: {0}")]
    Unreachable(String),
    #[error("registry sent an unusable response: {0}")]
    BadPayload(String),
    #[error("registry rejected the request ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("bad registry URL {0}")]
    BadUrl(String),
}

/// Result of an upload under the registry's version policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PutOutcome {
    Created,
    UpdatedVersion,
    IdenticalNoop,
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub name: String,
    pub version: String,
    pub description: String,
}

/// Remote definition registry operations.
pub trait CloudRegistry: Send + Sync {
    fn get(&self, name: &str) -> Result<Option<SensorDeviceDefinition>, CloudError>;
    fn put(&self, sdd: &SensorDeviceDefinition) -> Result<PutOutcome, CloudError>;
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, CloudError>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResolutionResult {
    Local(SensorDeviceDefinition),
    Cloud(SensorDeviceDefinition),
    NotFound,
}

impl ResolutionResult {
    pub fn into_definition(self) -> Option<SensorDeviceDefinition> {
        match self {
            ResolutionResult::Local(s) | ResolutionResult::Cloud(s) => Some(s),
            ResolutionResult::NotFound => None,
        }
    }
}

/// Local hit wins without touching the network; a cloud hit is cached locally.
///
/// Registry failures degrade to `NotFound` with a warning.
pub fn resolve(store: &LocalStore, cloud: Option<&dyn CloudRegistry>, name: &str) -> ResolutionResult {
    if let Some(sdd) = store.get(name) {
        return ResolutionResult::Local(sdd);
    }
    let Some(cloud) = cloud else {
        return ResolutionResult::NotFound;
    };
    match cloud.get(name) {
        Ok(Some(sdd)) => {
            if let Err(e) = store.put(&sdd) {
                log::warn!("could not cache definition {name} locally: {e}");
            }
            ResolutionResult::Cloud(sdd)
        }
        Ok(None) => ResolutionResult::NotFound,
        Err(e) => {
            log::warn!("definition {name} not resolved from registry: {e}");
            ResolutionResult::NotFound
        }
    }
}

/// The resolution cascade packaged for the wrapper repository.
pub struct Cascade {
    pub store: LocalStore,
    pub cloud: Option<Box<dyn CloudRegistry>>,
}

impl DefinitionResolver for Cascade {
    fn resolve(&self, wrapper_name: &str) -> Option<SensorDeviceDefinition> {
        resolve(&self.store, self.cloud.as_deref(), wrapper_name).into_definition()
    }
}
