//! The `serve` command: loads virtual sensors and runs the admin socket.
//!
//! The admin protocol is line based. A client sends one command per line and
//! gets back zero or more JSON lines followed by an empty line.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value as Json};
use sensorforge::definitions::parse_vsd;
use sensorforge::engine::{load_virtual_sensor, VirtualSensor};
use sensorforge::registry::{Cascade, CloudClient, CloudRegistry, LocalStore};
use sensorforge::runtime::{OsPlanCompiler, WrapperRepository};

use crate::args::{host_os, ServeArgs};
use crate::{Failure, Outcome};

const ACCEPT_POLL: Duration = Duration::from_millis(50);
const MAX_COMMAND: u64 = 4096;

enum Deployed {
    Live(VirtualSensor),
    Failed { file: PathBuf, error: String },
}

struct Middleware {
    sensors: Mutex<BTreeMap<String, Deployed>>,
    repo: Arc<WrapperRepository>,
    stop: AtomicBool,
}

fn vsd_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.to_string_lossy().ends_with(".vsd.xml"))
        .collect();
    files.sort();
    Ok(files)
}

fn file_stem(path: &Path) -> String {
    let name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".vsd.xml").unwrap_or(&name).to_string()
}

fn deploy(
    files: &[PathBuf],
    repo: &Arc<WrapperRepository>,
    resolver: &Cascade,
    compiler: &OsPlanCompiler,
    persist_dir: Option<&Path>,
) -> BTreeMap<String, Deployed> {
    let mut sensors = BTreeMap::new();
    for file in files {
        let parsed = std::fs::read_to_string(file)
            .map_err(|e| e.to_string())
            .and_then(|t| parse_vsd(&t).map_err(|e| e.to_string()));
        let vsd = match parsed {
            Ok(vsd) => vsd,
            Err(error) => {
                log::error!("{}: {error}", file.display());
                sensors.insert(file_stem(file), Deployed::Failed { file: file.clone(), error });
                continue;
            }
        };
        if sensors.contains_key(&vsd.name) {
            let error = format!("virtual sensor `{}` is already defined by another file", vsd.name);
            log::error!("{}: {error}", file.display());
            sensors.insert(
                format!("{}#{}", vsd.name, file_stem(file)),
                Deployed::Failed { file: file.clone(), error },
            );
            continue;
        }
        let persist = persist_dir.map(|d| d.join(format!("{}.jsonl", vsd.name)));
        let deployed = match load_virtual_sensor(&vsd, repo, resolver, compiler, persist.as_deref()) {
            Ok(vs) => Deployed::Live(vs),
            Err(e) => {
                log::error!("{}: {e}", file.display());
                Deployed::Failed { file: file.clone(), error: e.to_string() }
            }
        };
        sensors.insert(vsd.name.clone(), deployed);
    }
    sensors
}

pub fn run(a: ServeArgs) -> Outcome {
    if !a.vsd_dir.is_dir() {
        return Err(Failure::Usage(format!("{}: not a directory", a.vsd_dir.display())));
    }
    let cloud: Option<Box<dyn CloudRegistry>> = match a.sddcr_url.as_deref().filter(|u| !u.is_empty()) {
        Some(url) => Some(Box::new(CloudClient::new(url).map_err(|e| Failure::Usage(e.to_string()))?)),
        None => None,
    };
    let store = LocalStore::open(&a.sddlr).map_err(|e| Failure::Domain(format!("{}: {e}", a.sddlr.display())))?;
    if let Some(dir) = &a.persist_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Domain(format!("{}: {e}", dir.display())))?;
    }
    let listener = TcpListener::bind(&a.listen).map_err(|e| Failure::Domain(format!("{}: {e}", a.listen)))?;
    let admin = listener.local_addr().map_err(|e| Failure::Domain(e.to_string()))?;

    let resolver = Cascade { store, cloud };
    let compiler = OsPlanCompiler(a.os.unwrap_or_else(host_os));
    let repo = Arc::new(WrapperRepository::new());
    let files = vsd_files(&a.vsd_dir).map_err(|e| Failure::Usage(format!("{}: {e}", a.vsd_dir.display())))?;
    let sensors = deploy(&files, &repo, &resolver, &compiler, a.persist_dir.as_deref());
    let live = sensors.values().filter(|d| matches!(d, Deployed::Live(_))).count();

    println!(
        "{}",
        json!({ "event": "ready", "admin": admin.to_string(), "live": live, "failed": sensors.len() - live })
    );
    let _ = io::stdout().flush();

    let mw = Arc::new(Middleware {
        sensors: Mutex::new(sensors),
        repo,
        stop: AtomicBool::new(false),
    });
    accept_loop(&listener, &mw).map_err(|e| Failure::Domain(format!("admin socket: {e}")))?;

    let sensors = std::mem::take(&mut *mw.sensors.lock().unwrap());
    for (_, deployed) in sensors {
        if let Deployed::Live(mut vs) = deployed {
            let _ = vs.store().flush();
            vs.unload();
        }
    }
    mw.repo.shutdown();
    log::info!("shut down");
    Ok(())
}

fn accept_loop(listener: &TcpListener, mw: &Arc<Middleware>) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    while !mw.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let mw = Arc::clone(mw);
                std::thread::spawn(move || {
                    if let Err(e) = serve_client(stream, &mw) {
                        log::debug!("admin client {peer}: {e}");
                    }
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(ACCEPT_POLL),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn serve_client(stream: TcpStream, mw: &Middleware) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    let mut out = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    loop {
        let mut line = String::new();
        if (&mut reader).take(MAX_COMMAND).read_line(&mut line)? == 0 {
            return Ok(());
        }
        let (lines, shutdown) = respond(mw, line.trim());
        let mut body = String::new();
        for l in &lines {
            body.push_str(&l.to_string());
            body.push('\n');
        }
        body.push('\n');
        out.write_all(body.as_bytes())?;
        out.flush()?;
        if shutdown {
            mw.stop.store(true, Ordering::SeqCst);
            return Ok(());
        }
    }
}

fn error(message: impl Into<String>) -> Vec<Json> {
    vec![json!({ "error": message.into() })]
}

/// Answers one admin command. The flag is true when the process should stop.
fn respond(mw: &Middleware, command: &str) -> (Vec<Json>, bool) {
    let words: Vec<&str> = command.split_whitespace().collect();
    match words.as_slice() {
        ["status"] => (status(mw), false),
        ["query", name, n] => match n.parse::<usize>() {
            Ok(n) => (query(mw, name, n), false),
            Err(_) => (error(format!("`{n}` is not a row count")), false),
        },
        ["shutdown"] => (vec![json!({ "ok": true })], true),
        [] => (error("empty command"), false),
        _ => (error(format!("unknown command `{command}`; expected status, query <vs> <n> or shutdown")), false),
    }
}

fn status(mw: &Middleware) -> Vec<Json> {
    let mut lines: Vec<Json> = mw
        .sensors
        .lock()
        .unwrap()
        .iter()
        .map(|(name, d)| match d {
            Deployed::Live(vs) => json!({
                "kind": "virtual-sensor",
                "name": name,
                "state": "live",
                "sources": vs.bound_sources(),
                "stored": vs.store().len(),
            }),
            Deployed::Failed { file, error } => json!({
                "kind": "virtual-sensor",
                "name": name,
                "state": "failed",
                "file": file.display().to_string(),
                "error": error,
            }),
        })
        .collect();
    lines.extend(mw.repo.snapshot().into_iter().map(|(key, e)| {
        json!({
            "kind": "wrapper",
            "key": key,
            "wrapper": e.wrapper_name,
            "state": e.state,
            "registeredSources": e.registered_sources,
        })
    }));
    lines
}

fn query(mw: &Middleware, name: &str, n: usize) -> Vec<Json> {
    match mw.sensors.lock().unwrap().get(name) {
        Some(Deployed::Live(vs)) => vs
            .query_latest(n)
            .iter()
            .map(|row| serde_json::to_value(row).expect("rows serialize"))
            .collect(),
        Some(Deployed::Failed { error: e, .. }) => error(format!("virtual sensor `{name}` failed to load: {e}")),
        None => error(format!("no virtual sensor named `{name}`")),
    }
}
