//! Virtual sensors: stream sources bound through the wrapper repository,
//! feeding one windowed store each.

mod store;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::definitions::{canonical_key, make_wcr, VirtualSensorDefinition, WindowSpec, WrapperConnectionRequest};
use crate::runtime::{DefinitionResolver, ElementSink, PlanCompiler, ProvisionFailure, StreamElement, WrapperRepository};

pub use store::{replay, Row, SensorStore};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("stream source `{alias}` could not be provisioned: {cause}")]
    LoadFailure { alias: String, cause: ProvisionFailure },
    #[error("no stream source with alias `{0}`")]
    UnknownAlias(String),
    #[error("virtual sensor has no window configured")]
    NoWindow,
    #[error("persistence: {0}")]
    Persistence(#[from] std::io::Error),
}

/// Tags every element from one stream source with its alias.
struct SourceSink {
    alias: String,
    store: Arc<SensorStore>,
}

impl ElementSink for SourceSink {
    fn deliver(&self, element: &StreamElement) {
        self.store.append(&self.alias, element);
    }
}

struct Binding {
    wcr: WrapperConnectionRequest,
    key: String,
    sink: Arc<dyn ElementSink>,
}

/// A loaded virtual sensor. Every source is registered with the repository
/// for as long as the sensor lives; call [`unload`](Self::unload) to release them.
pub struct VirtualSensor {
    name: String,
    window: Option<WindowSpec>,
    store: Arc<SensorStore>,
    bindings: BTreeMap<String, Binding>,
    repo: Arc<WrapperRepository>,
    unloaded: bool,
}

impl std::fmt::Debug for VirtualSensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VirtualSensor")
            .field("name", &self.name)
            .field("sources", &self.bound_sources())
            .field("window", &self.window)
            .finish_non_exhaustive()
    }
}

/// Registers every stream source of `vsd`; all or nothing.
///
/// On the first refusal, sources registered so far are released again and
/// the offending alias is reported.
pub fn load_virtual_sensor(
    vsd: &VirtualSensorDefinition,
    repo: &Arc<WrapperRepository>,
    resolver: &dyn DefinitionResolver,
    compiler: &dyn PlanCompiler,
    persist_to: Option<&Path>,
) -> Result<VirtualSensor, EngineError> {
    let store = Arc::new(match persist_to {
        Some(path) => SensorStore::persistent(path)?,
        None => SensorStore::in_memory(),
    });
    let mut vs = VirtualSensor {
        name: vsd.name.clone(),
        window: vsd.window,
        store: Arc::clone(&store),
        bindings: BTreeMap::new(),
        repo: Arc::clone(repo),
        unloaded: false,
    };
    for source in &vsd.stream_sources {
        let wcr = make_wcr(source);
        let sink: Arc<dyn ElementSink> = Arc::new(SourceSink {
            alias: source.alias.clone(),
            store: Arc::clone(&store),
        });
        if let Err(cause) = repo.try_handle_wcr(&wcr, resolver, compiler, Some(Arc::clone(&sink))) {
            // dropping `vs` releases what was registered so far
            log::warn!("virtual sensor {}: source {} refused: {cause}", vsd.name, source.alias);
            drop(vs);
            return Err(EngineError::LoadFailure {
                alias: source.alias.clone(),
                cause,
            });
        }
        let key = canonical_key(&wcr);
        vs.bindings.insert(source.alias.clone(), Binding { wcr, key, sink });
    }
    log::info!("virtual sensor {} live with {} source(s)", vs.name, vs.bindings.len());
    Ok(vs)
}

impl VirtualSensor {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn window(&self) -> Option<WindowSpec> {
        self.window
    }

    pub fn store(&self) -> &SensorStore {
        &self.store
    }

    /// Alias to canonical wrapper key.
    pub fn bound_sources(&self) -> BTreeMap<String, String> {
        self.bindings
            .iter()
            .map(|(alias, b)| (alias.clone(), b.key.clone()))
            .collect()
    }

    /// Appends an element as if it had arrived from `alias`.
    pub fn ingest(&self, alias: &str, element: &StreamElement) -> Result<(), EngineError> {
        if !self.bindings.contains_key(alias) {
            return Err(EngineError::UnknownAlias(alias.to_string()));
        }
        self.store.append(alias, element);
        Ok(())
    }

    pub fn window_snapshot(&self) -> Result<Vec<StreamElement>, EngineError> {
        let spec = self.window.ok_or(EngineError::NoWindow)?;
        Ok(self.store.window(spec))
    }

    /// The last `min(n, stored)` rows, newest last.
    pub fn query_latest(&self, n: usize) -> Vec<Row> {
        self.store.latest(n)
    }

    /// Releases every stream source. Idempotent; also runs on drop.
    pub fn unload(&mut self) {
        if std::mem::replace(&mut self.unloaded, true) {
            return;
        }
        for (alias, b) in std::mem::take(&mut self.bindings) {
            if let Err(e) = self.repo.release_wcr(&b.wcr, Some(&b.sink)) {
                log::warn!("virtual sensor {}: releasing {alias}: {e}", self.name);
            }
        }
        if let Err(e) = self.store.flush() {
            log::warn!("virtual sensor {}: flush: {e}", self.name);
        }
    }
}

impl Drop for VirtualSensor {
    fn drop(&mut self) {
        self.unload();
    }
}
