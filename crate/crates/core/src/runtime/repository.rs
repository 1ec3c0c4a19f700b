use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::codegen::{compile_plan, CompileError, ExecutionPlan};
use crate::definitions::{canonical_key, OsTag, SensorDeviceDefinition, WrapperConnectionRequest};

use super::instance::{ElementSink, WrapperInstance, WrapperState};

/// Finds a device definition for a wrapper name.
pub trait DefinitionResolver: Send + Sync {
    fn resolve(&self, wrapper_name: &str) -> Option<SensorDeviceDefinition>;
}

impl<F> DefinitionResolver for F
where
    F: Fn(&str) -> Option<SensorDeviceDefinition> + Send + Sync,
{
    fn resolve(&self, wrapper_name: &str) -> Option<SensorDeviceDefinition> {
        self(wrapper_name)
    }
}

impl DefinitionResolver for HashMap<String, SensorDeviceDefinition> {
    fn resolve(&self, wrapper_name: &str) -> Option<SensorDeviceDefinition> {
        self.get(wrapper_name).cloned()
    }
}

/// Turns a resolved definition plus the request's parameters into a plan.
pub trait PlanCompiler: Send + Sync {
    fn compile(
        &self,
        sdd: &SensorDeviceDefinition,
        wcr: &WrapperConnectionRequest,
    ) -> Result<ExecutionPlan, CompileError>;
}

/// Compiles for a fixed OS, using the request parameters as config overrides.
#[derive(Debug, Clone, Copy)]
pub struct OsPlanCompiler(pub OsTag);

impl PlanCompiler for OsPlanCompiler {
    fn compile(
        &self,
        sdd: &SensorDeviceDefinition,
        wcr: &WrapperConnectionRequest,
    ) -> Result<ExecutionPlan, CompileError> {
        let overrides: BTreeMap<String, String> = wcr.init_params.iter().cloned().collect();
        compile_plan(sdd, self.0, &overrides)
    }
}

/// Why a connection request could not be satisfied.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProvisionFailure {
    #[error("no definition found for wrapper `{0}`")]
    NotFound(String),
    #[error("definition for `{0}` does not compile: {1}")]
    CompileError(String, CompileError),
    #[error("wrapper `{0}` failed to initialise")]
    InitFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepositoryError {
    #[error("no wrapper instance for key `{0}`")]
    UnknownKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Registration {
    /// A new instance was created for this request.
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntrySnapshot {
    pub wrapper_name: String,
    pub registered_sources: usize,
    pub state: WrapperState,
}

struct Entry {
    instance: Arc<WrapperInstance>,
    registered_sources: usize,
}

type Slot = Arc<Mutex<Option<Entry>>>;

/// Live wrapper instances keyed by canonical request key, shared between
/// every stream source that asks for the same wrapper and parameters.
///
/// Creation is serialized per key; different keys provision concurrently.
#[derive(Default)]
pub struct WrapperRepository {
    slots: Mutex<HashMap<String, Slot>>,
}

impl WrapperRepository {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&self, key: &str) -> Slot {
        let mut slots = self.slots.lock().unwrap();
        Arc::clone(slots.entry(key.to_string()).or_default())
    }

    fn still_current(&self, key: &str, slot: &Slot) -> bool {
        self.slots
            .lock()
            .unwrap()
            .get(key)
            .is_some_and(|s| Arc::ptr_eq(s, slot))
    }

    fn forget(&self, key: &str, slot: &Slot) {
        let mut slots = self.slots.lock().unwrap();
        if slots.get(key).is_some_and(|s| Arc::ptr_eq(s, slot)) {
            slots.remove(key);
        }
    }

    /// Registers a stream source, creating the wrapper instance on first use.
    ///
    /// On failure the repository is left exactly as it was.
    pub fn try_handle_wcr(
        &self,
        wcr: &WrapperConnectionRequest,
        resolver: &dyn DefinitionResolver,
        compiler: &dyn PlanCompiler,
        sink: Option<Arc<dyn ElementSink>>,
    ) -> Result<Registration, ProvisionFailure> {
        let key = canonical_key(wcr);
        loop {
            let slot = self.slot(&key);
            let mut guard = slot.lock().unwrap();
            if !self.still_current(&key, &slot) {
                // removed by a failed creation or a release while we waited
                continue;
            }

            if let Some(entry) = guard.as_mut() {
                if entry.instance.state() != WrapperState::Failed {
                    entry.registered_sources += 1;
                    if let Some(sink) = sink {
                        entry.instance.add_sink(sink);
                    }
                    return Ok(Registration { created: false });
                }
                log::warn!("replacing failed wrapper instance for {key}");
                entry.instance.finalise();
                *guard = None;
            }

            let outcome = self.provision(wcr, resolver, compiler);
            return match outcome {
                Ok(instance) => {
                    if let Some(sink) = sink {
                        instance.add_sink(sink);
                    }
                    if let Err(e) = instance.start() {
                        log::warn!("wrapper {key} did not start: {e}");
                        instance.finalise();
                        drop(guard);
                        self.forget(&key, &slot);
                        return Err(ProvisionFailure::InitFailed(wcr.wrapper_name.clone()));
                    }
                    *guard = Some(Entry {
                        instance,
                        registered_sources: 1,
                    });
                    Ok(Registration { created: true })
                }
                Err(failure) => {
                    log::warn!("wrapper connection request {key} refused: {failure}");
                    if guard.is_none() {
                        drop(guard);
                        self.forget(&key, &slot);
                    }
                    Err(failure)
                }
            };
        }
    }

    fn provision(
        &self,
        wcr: &WrapperConnectionRequest,
        resolver: &dyn DefinitionResolver,
        compiler: &dyn PlanCompiler,
    ) -> Result<Arc<WrapperInstance>, ProvisionFailure> {
        let sdd = resolver
            .resolve(&wcr.wrapper_name)
            .ok_or_else(|| ProvisionFailure::NotFound(wcr.wrapper_name.clone()))?;
        let plan = compiler
            .compile(&sdd, wcr)
            .map_err(|e| ProvisionFailure::CompileError(wcr.wrapper_name.clone(), e))?;
        let instance = Arc::new(WrapperInstance::new(plan));
        if !instance.initialise() {
            return Err(ProvisionFailure::InitFailed(wcr.wrapper_name.clone()));
        }
        Ok(instance)
    }

    /// Registers `wcr`, sharing the live instance for its key when there is one.
    pub fn handle_wcr(
        &self,
        wcr: &WrapperConnectionRequest,
        resolver: &dyn DefinitionResolver,
        compiler: &dyn PlanCompiler,
        sink: Option<Arc<dyn ElementSink>>,
    ) -> bool {
        self.try_handle_wcr(wcr, resolver, compiler, sink).is_ok()
    }

    /// Drops one registration; the last one finalises and removes the instance.
    pub fn release_wcr(
        &self,
        wcr: &WrapperConnectionRequest,
        sink: Option<&Arc<dyn ElementSink>>,
    ) -> Result<(), RepositoryError> {
        let key = canonical_key(wcr);
        let slot = self
            .slots
            .lock()
            .unwrap()
            .get(&key)
            .cloned()
            .ok_or_else(|| RepositoryError::UnknownKey(key.clone()))?;
        let mut guard = slot.lock().unwrap();
        let entry = guard
            .as_mut()
            .ok_or_else(|| RepositoryError::UnknownKey(key.clone()))?;
        if let Some(sink) = sink {
            entry.instance.remove_sink(sink);
        }
        entry.registered_sources -= 1;
        if entry.registered_sources == 0 {
            entry.instance.finalise();
            *guard = None;
            drop(guard);
            self.forget(&key, &slot);
        }
        Ok(())
    }

    pub fn instance(&self, wcr: &WrapperConnectionRequest) -> Option<Arc<WrapperInstance>> {
        let slot = self.slots.lock().unwrap().get(&canonical_key(wcr)).cloned()?;
        let guard = slot.lock().unwrap();
        guard.as_ref().map(|e| Arc::clone(&e.instance))
    }

    /// Live entries by key. Failed instances are finalised and dropped first.
    pub fn snapshot(&self) -> BTreeMap<String, EntrySnapshot> {
        let slots: Vec<(String, Slot)> = self
            .slots
            .lock()
            .unwrap()
            .iter()
            .map(|(k, s)| (k.clone(), Arc::clone(s)))
            .collect();
        let mut out = BTreeMap::new();
        for (key, slot) in slots {
            let mut guard = slot.lock().unwrap();
            let failed = match guard.as_ref() {
                None => continue,
                Some(entry) => entry.instance.state() == WrapperState::Failed,
            };
            if failed {
                if let Some(entry) = guard.take() {
                    entry.instance.finalise();
                }
                drop(guard);
                self.forget(&key, &slot);
                continue;
            }
            let entry = guard.as_ref().expect("checked above");
            out.insert(
                key,
                EntrySnapshot {
                    wrapper_name: entry.instance.get_wrapper_name().to_string(),
                    registered_sources: entry.registered_sources,
                    state: entry.instance.state(),
                },
            );
        }
        out
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Finalises and removes every instance.
    pub fn shutdown(&self) {
        let slots: Vec<Slot> = self.slots.lock().unwrap().drain().map(|(_, s)| s).collect();
        for slot in slots {
            if let Some(entry) = slot.lock().unwrap().take() {
                entry.instance.finalise();
            }
        }
    }
}
