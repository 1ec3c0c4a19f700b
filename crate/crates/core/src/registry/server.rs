use std::collections::HashMap;
use std::io::{self, Read};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use tiny_http::{Header, Method, Request, Response, Server};

use crate::definitions::{compare_versions, is_identifier, parse_sdd, serialize_sdd, SensorDeviceDefinition};

use super::{LocalStore, PutOutcome, SearchHit};

const WORKERS: usize = 4;
const MAX_UPLOAD: u64 = 1024 * 1024;
const POLL: Duration = Duration::from_millis(100);

/// The version policy for uploads.
///
/// A strictly greater dotted version replaces; an equal version must be
/// byte-identical in canonical form; anything else conflicts.
pub fn decide_put(existing: Option<&SensorDeviceDefinition>, incoming: &SensorDeviceDefinition) -> PutOutcome {
    let Some(existing) = existing else {
        return PutOutcome::Created;
    };
    match compare_versions(&incoming.version, &existing.version) {
        std::cmp::Ordering::Greater => PutOutcome::UpdatedVersion,
        std::cmp::Ordering::Equal if serialize_sdd(incoming) == serialize_sdd(existing) => {
            PutOutcome::IdenticalNoop
        }
        _ => PutOutcome::Conflict,
    }
}

struct State {
    store: LocalStore,
    // PUTs on one name are serialized; different names proceed in parallel
    put_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl State {
    fn put_lock(&self, name: &str) -> Arc<Mutex<()>> {
        let mut locks = self.put_locks.lock().unwrap();
        Arc::clone(locks.entry(name.to_string()).or_default())
    }
}

/// A running registry service. Dropping it stops the workers.
pub struct RegistryServer {
    server: Arc<Server>,
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl std::fmt::Debug for RegistryServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegistryServer").field("addr", &self.addr).finish_non_exhaustive()
    }
}

/// Serves the definitions under `root` over HTTP on `listen`.
pub fn serve_registry(root: impl Into<PathBuf>, listen: &str) -> io::Result<RegistryServer> {
    let store = LocalStore::open(root)?;
    let server = Server::http(listen).map_err(|e| io::Error::new(io::ErrorKind::AddrNotAvailable, format!("{listen}: {e}")))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| io::Error::other("registry must listen on an IP address"))?;
    let server = Arc::new(server);
    let stop = Arc::new(AtomicBool::new(false));
    let state = Arc::new(State {
        store,
        put_locks: Mutex::new(HashMap::new()),
    });
    let workers = (0..WORKERS)
        .map(|i| {
            let (server, stop, state) = (Arc::clone(&server), Arc::clone(&stop), Arc::clone(&state));
            std::thread::Builder::new()
                .name(format!("registry-{i}"))
                .spawn(move || {
                    while !stop.load(Ordering::SeqCst) {
                        match server.recv_timeout(POLL) {
                            Ok(Some(request)) => handle(&state, request),
                            Ok(None) => {}
                            Err(e) => log::warn!("registry accept: {e}"),
                        }
                    }
                })
        })
        .collect::<io::Result<Vec<_>>>()?;
    log::info!("registry listening on http://{addr}");
    Ok(RegistryServer {
        server,
        addr,
        stop,
        workers,
    })
}

impl RegistryServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    /// Blocks until another thread calls [`shutdown`](Self::shutdown).
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    /// A handle that stops the server from another thread.
    pub fn stopper(&self) -> impl Fn() + Send + Sync + 'static {
        let (stop, server) = (Arc::clone(&self.stop), Arc::clone(&self.server));
        move || {
            stop.store(true, Ordering::SeqCst);
            server.unblock();
        }
    }
}

impl Drop for RegistryServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header")
}

fn text(status: u16, body: impl Into<String>) -> Response<io::Cursor<Vec<u8>>> {
    Response::from_string(body.into())
        .with_status_code(status)
        .with_header(header("Content-Type", "text/plain; charset=utf-8"))
}

fn json(status: u16, body: &impl serde::Serialize) -> Response<io::Cursor<Vec<u8>>> {
    Response::from_string(serde_json::to_string(body).expect("responses serialize"))
        .with_status_code(status)
        .with_header(header("Content-Type", "application/json"))
}

fn handle(state: &State, mut request: Request) {
    let parsed = url::Url::parse("http://registry.invalid").and_then(|b| b.join(request.url()));
    let response = match parsed {
        Err(_) => text(400, "bad request target"),
        Ok(target) => route(state, &mut request, &target),
    };
    log::debug!("{} {} -> {}", request.method(), request.url(), response.status_code().0);
    if let Err(e) = request.respond(response) {
        log::debug!("registry response: {e}");
    }
}

fn route(state: &State, request: &mut Request, target: &url::Url) -> Response<io::Cursor<Vec<u8>>> {
    let path = target.path();
    let method = request.method().clone();
    if path == "/healthz" {
        return match method {
            Method::Get => text(200, "ok"),
            _ => text(405, "method not allowed"),
        };
    }
    if path == "/search" {
        return match method {
            Method::Get => {
                let q = target
                    .query_pairs()
                    .find(|(k, _)| k == "q")
                    .map(|(_, v)| v.into_owned())
                    .unwrap_or_default();
                search(state, &q)
            }
            _ => text(405, "method not allowed"),
        };
    }
    if let Some(name) = path.strip_prefix("/sdd/") {
        if !is_identifier(name) {
            return text(404, "not found");
        }
        return match method {
            Method::Get => match state.store.get(name) {
                Some(sdd) => Response::from_string(serialize_sdd(&sdd))
                    .with_header(header("Content-Type", "application/xml; charset=utf-8")),
                None => text(404, "not found"),
            },
            Method::Put => put(state, name, request),
            _ => text(405, "method not allowed"),
        };
    }
    text(404, "not found")
}

fn search(state: &State, query: &str) -> Response<io::Cursor<Vec<u8>>> {
    let needle = query.to_lowercase();
    match state.store.all() {
        Ok(all) => {
            let hits: Vec<SearchHit> = all
                .into_iter()
                .filter(|s| s.name.to_lowercase().contains(&needle) || s.description.to_lowercase().contains(&needle))
                .map(|s| SearchHit {
                    name: s.name,
                    version: s.version,
                    description: s.description,
                })
                .collect();
            json(200, &hits)
        }
        Err(e) => text(500, format!("store: {e}")),
    }
}

fn put(state: &State, name: &str, request: &mut Request) -> Response<io::Cursor<Vec<u8>>> {
    let mut body = String::new();
    if let Err(e) = request.as_reader().take(MAX_UPLOAD + 1).read_to_string(&mut body) {
        return text(400, format!("unreadable body: {e}"));
    }
    if body.len() as u64 > MAX_UPLOAD {
        return text(400, "definition too large");
    }
    let sdd = match parse_sdd(&body) {
        Ok(sdd) => sdd,
        Err(e) => return text(400, e.to_string()),
    };
    if sdd.name != name {
        return text(400, format!("path names `{name}` but the definition is `{}`", sdd.name));
    }
    let lock = state.put_lock(name);
    let _guard = lock.lock().unwrap();
    let outcome = decide_put(state.store.get(name).as_ref(), &sdd);
    let status = match outcome {
        PutOutcome::Created => 201,
        PutOutcome::UpdatedVersion | PutOutcome::IdenticalNoop => 200,
        PutOutcome::Conflict => 409,
    };
    if matches!(outcome, PutOutcome::Created | PutOutcome::UpdatedVersion) {
        if let Err(e) = state.store.put(&sdd) {
            return text(500, format!("store: {e}"));
        }
    }
    json(status, &serde_json::json!({ "outcome": outcome }))
}
