mod common;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use common::{free_port, port_is_bindable, sdd, sdd_corpus};
use sensorforge::codegen::{compile_plan, ExecutionPlan};
use sensorforge::definitions::{OsTag, SensorDeviceDefinition, WrapperConnectionRequest};
use sensorforge::runtime::*;

fn plan(name: &str, overrides: &[(&str, String)]) -> ExecutionPlan {
    let o: BTreeMap<String, String> = overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    compile_plan(&sdd(name), OsTag::Linux, &o).unwrap()
}

fn sunspot_plan(port: u16) -> ExecutionPlan {
    plan("SunSPOT", &[("port", port.to_string())])
}

fn wait_for(what: &str, timeout: Duration, mut cond: impl FnMut() -> bool) {
    let end = Instant::now() + timeout;
    while !cond() {
        assert!(Instant::now() < end, "timed out waiting for {what}");
        thread::sleep(Duration::from_millis(10));
    }
}

#[derive(Default)]
struct Collect(Mutex<Vec<StreamElement>>);

impl ElementSink for Collect {
    fn deliver(&self, element: &StreamElement) {
        self.0.lock().unwrap().push(element.clone());
    }
}

impl Collect {
    fn len(&self) -> usize {
        self.0.lock().unwrap().len()
    }
    fn take(&self) -> Vec<StreamElement> {
        self.0.lock().unwrap().clone()
    }
}

#[test]
fn push_initialise_binds_and_finalise_releases() {
    let port = free_port();
    let w = WrapperInstance::new(sunspot_plan(port));
    assert_eq!(w.state(), WrapperState::Created);
    assert!(w.initialise());
    assert_eq!(w.state(), WrapperState::Initialised);
    assert!(!port_is_bindable(port));

    let rival = WrapperInstance::new(sunspot_plan(port));
    assert!(!rival.initialise());
    assert_eq!(rival.state(), WrapperState::Failed);

    w.finalise();
    assert_eq!(w.state(), WrapperState::Finalised);
    assert!(port_is_bindable(port));
    w.finalise();
    assert_eq!(w.state(), WrapperState::Finalised);
    assert!(matches!(
        w.run_loop(&Collect::default()),
        Err(RuntimeError::InvalidState { found: WrapperState::Finalised, .. })
    ));
}

#[test]
fn file_tail_on_missing_path_fails() {
    let w = WrapperInstance::new(plan("Mica2Serial", &[("serialPort", "/nonexistent/mica2".into())]));
    assert!(!w.initialise());
    assert_eq!(w.state(), WrapperState::Failed);
}

#[test]
fn names_and_output_formats() {
    let s = WrapperInstance::new(sunspot_plan(free_port()));
    assert_eq!(s.get_wrapper_name(), "SunSPOT");
    let a = WrapperInstance::new(plan("AndroidWrapper", &[("port", free_port().to_string())]));
    assert_eq!(a.get_wrapper_name(), "AndroidWrapper");
    assert!(s.initialise());
    s.finalise();
    assert_eq!(s.get_wrapper_name(), "SunSPOT");

    for (name, _) in sdd_corpus() {
        let def = sdd(&name);
        let p = compile_plan(&def, OsTag::Linux, &BTreeMap::new()).unwrap();
        let w = WrapperInstance::new(p);
        assert!(!w.get_output_format().is_empty());
        assert_eq!(w.get_output_format(), def.data_structure.as_slice(), "{name}");
    }
}

/// Runs a push wrapper on a background thread with its own sink.
fn running_push(port: u16) -> (Arc<WrapperInstance>, Arc<Collect>) {
    let w = Arc::new(WrapperInstance::new(sunspot_plan(port)));
    assert!(w.initialise());
    let sink = Arc::new(Collect::default());
    w.add_sink(sink.clone());
    w.start().unwrap();
    (w, sink)
}

#[test]
fn push_records_become_elements() {
    let port = free_port();
    let (w, sink) = running_push(port);
    let mut c = TcpStream::connect(("127.0.0.1", port)).unwrap();
    c.write_all(b"23.5,412,0.98\n23.5,412\n").unwrap();
    wait_for("two records", Duration::from_secs(5), || w.stats().records == 2);
    let got = sink.take();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].values, vec![Value::Float(23.5), Value::Int(412), Value::Float(0.98)]);
    assert_eq!(w.stats().malformed, 1);
    drop(c);
    w.finalise();
}

#[test]
fn hundred_packets_hundred_elements_in_order() {
    let port = free_port();
    let (w, sink) = running_push(port);
    let mut c = TcpStream::connect(("127.0.0.1", port)).unwrap();
    let mut expected = Vec::new();
    for i in 0..100 {
        let line = format!("{}.5,{},{}", i, i * 3, i as f64 / 100.0);
        writeln!(c, "{line}").unwrap();
        let parts: Vec<&str> = line.split(',').collect();
        expected.push(vec![
            Value::Float(parts[0].parse().unwrap()),
            Value::Int(parts[1].parse().unwrap()),
            Value::Float(parts[2].parse().unwrap()),
        ]);
    }
    drop(c);
    wait_for("100 elements", Duration::from_secs(5), || sink.len() == 100);
    let got = sink.take();
    assert_eq!(got.iter().map(|e| e.values.clone()).collect::<Vec<_>>(), expected);
    assert!(got.windows(2).all(|p| p[0].timestamp_ms <= p[1].timestamp_ms));
    assert_eq!(w.last_timestamp_ms(), Some(got[99].timestamp_ms));
    w.finalise();
}

#[test]
fn push_wrapper_awaits_the_next_client() {
    let port = free_port();
    let (w, sink) = running_push(port);
    for round in 1..=3 {
        let mut c = TcpStream::connect(("127.0.0.1", port)).unwrap();
        c.write_all(b"1,2,3\n").unwrap();
        drop(c);
        wait_for("element", Duration::from_secs(5), || sink.len() == round);
    }
    assert_eq!(w.state(), WrapperState::Running);
    w.finalise();
}

#[test]
fn stop_is_honoured_quickly() {
    let port = free_port();
    let (w, _sink) = running_push(port);
    let _idle_client = TcpStream::connect(("127.0.0.1", port)).unwrap();
    thread::sleep(Duration::from_millis(100));
    let t = Instant::now();
    w.finalise();
    assert!(t.elapsed() < Duration::from_millis(500), "{:?}", t.elapsed());
    assert!(port_is_bindable(port));
}

#[test]
fn file_tail_ignores_existing_content() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("serial.bin");
    let record = |node: i64| {
        let mut r = node.to_be_bytes().to_vec();
        r.extend_from_slice(&3.3f64.to_be_bytes());
        r.extend_from_slice(b"OK\0\0 42\0");
        r
    };
    std::fs::write(&path, record(1)).unwrap();
    let p = plan("Mica2Serial", &[("serialPort", path.display().to_string())]);
    let w = Arc::new(WrapperInstance::new(p));
    assert!(w.initialise());
    let sink = Arc::new(Collect::default());
    w.add_sink(sink.clone());
    w.start().unwrap();
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    for node in 2..=4 {
        f.write_all(&record(node)).unwrap();
    }
    wait_for("3 elements", Duration::from_secs(5), || sink.len() == 3);
    let got = sink.take();
    assert_eq!(
        got[0].values,
        vec![Value::Int(2), Value::Float(3.3), Value::Text("OK".into()), Value::Int(42)]
    );
    w.finalise();
    assert_eq!(w.state(), WrapperState::Finalised);
}

/// Answers `POLL\n` with the next line. After `max_polls` replies the device
/// hangs up and stops listening.
fn poll_device(records: Vec<&'static str>, max_polls: usize) -> u16 {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    thread::spawn(move || {
        let Ok((stream, _)) = listener.accept() else { return };
        let mut out = stream.try_clone().unwrap();
        for (n, line) in BufReader::new(stream).lines().enumerate() {
            if n >= max_polls {
                break;
            }
            let Ok(line) = line else { break };
            if line == "POLL" {
                writeln!(out, "{}", records[n % records.len()]).unwrap();
            }
        }
    });
    port
}

fn running_poll(port: u16) -> (Arc<WrapperInstance>, Arc<Collect>) {
    let w = Arc::new(WrapperInstance::new(plan("WeatherStation", &[("port", port.to_string())])));
    assert!(w.initialise());
    let sink = Arc::new(Collect::default());
    w.add_sink(sink.clone());
    w.start().unwrap();
    (w, sink)
}

#[test]
fn poll_wrapper_samples_on_interval() {
    let port = poll_device(vec!["roof;20.5;40;false", "roof;21.0;41;TRUE"], usize::MAX);
    let (w, sink) = running_poll(port);
    thread::sleep(Duration::from_millis(1000));
    w.finalise();
    // 100 ms sampling for one second, with scheduling slack
    let n = sink.len();
    assert!((9..=11).contains(&n), "{n}");
    assert_eq!(
        sink.take()[1].values,
        vec![Value::Text("roof".into()), Value::Float(21.0), Value::Int(41), Value::Bool(true)]
    );
    assert_eq!(w.state(), WrapperState::Finalised);
}

#[test]
fn poll_wrapper_fails_after_retries() {
    let port = poll_device(vec!["roof;20.5;40;false"], 3);
    let (w, sink) = running_poll(port);
    let started = Instant::now();
    wait_for(
        "failed state",
        POLL_RETRY_BACKOFF * (POLL_RETRY_ATTEMPTS + 3),
        || w.state() == WrapperState::Failed,
    );
    // five refused reconnects, one backoff each
    assert!(started.elapsed() >= POLL_RETRY_BACKOFF * POLL_RETRY_ATTEMPTS);
    assert_eq!(sink.len(), 3);
    w.finalise();
    assert_eq!(w.state(), WrapperState::Failed);
}

#[test]
fn poll_initialise_fails_without_device() {
    let w = WrapperInstance::new(plan("WeatherStation", &[("port", free_port().to_string())]));
    assert!(!w.initialise());
    assert_eq!(w.state(), WrapperState::Failed);
}

// ---- repository ----

fn resolver() -> HashMap<String, SensorDeviceDefinition> {
    ["SunSPOT", "AndroidWrapper"]
        .into_iter()
        .map(|n| (n.to_string(), sdd(n)))
        .collect()
}

fn wcr(name: &str, port: u16) -> WrapperConnectionRequest {
    WrapperConnectionRequest::new(name, vec![("port".into(), port.to_string())])
}

const COMPILER: OsPlanCompiler = OsPlanCompiler(OsTag::Linux);

#[test]
fn three_case_lifecycle() {
    let repo = WrapperRepository::new();
    let res = resolver();
    let port = free_port();
    let req = wcr("SunSPOT", port);

    assert!(repo.handle_wcr(&req, &res, &COMPILER, None));
    assert_eq!(repo.len(), 1);
    assert!(repo.handle_wcr(&req, &res, &COMPILER, None));
    let snap = repo.snapshot();
    assert_eq!(snap.len(), 1);
    assert_eq!(snap.values().next().unwrap().registered_sources, 2);

    let empty: HashMap<String, SensorDeviceDefinition> = HashMap::new();
    let before = repo.snapshot();
    assert!(!repo.handle_wcr(&WrapperConnectionRequest::new("NoSuchSensor", vec![]), &empty, &COMPILER, None));
    assert_eq!(repo.snapshot(), before);

    assert!(matches!(
        repo.try_handle_wcr(&wcr("SunSPOT", 0), &res, &COMPILER, None),
        Err(ProvisionFailure::CompileError(..))
    ));
    assert_eq!(repo.snapshot(), before);

    repo.release_wcr(&req, None).unwrap();
    assert_eq!(repo.len(), 1);
    assert!(!port_is_bindable(port));
    repo.release_wcr(&req, None).unwrap();
    assert!(repo.is_empty());
    assert!(port_is_bindable(port));
    assert_eq!(
        repo.release_wcr(&req, None),
        Err(RepositoryError::UnknownKey(format!("SunSPOT?port={port}")))
    );
}

#[test]
fn init_failure_leaves_repository_unchanged() {
    let repo = WrapperRepository::new();
    let blocker = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = blocker.local_addr().unwrap().port();
    assert!(matches!(
        repo.try_handle_wcr(&wcr("SunSPOT", port), &resolver(), &COMPILER, None),
        Err(ProvisionFailure::InitFailed(_))
    ));
    assert!(repo.is_empty());
}

#[test]
fn shared_instance_fans_out_to_every_sink() {
    let repo = WrapperRepository::new();
    let res = resolver();
    let port = free_port();
    let req = wcr("SunSPOT", port);
    let a = Arc::new(Collect::default());
    let b = Arc::new(Collect::default());
    let a_dyn: Arc<dyn ElementSink> = a.clone();
    assert!(repo.handle_wcr(&req, &res, &COMPILER, Some(a_dyn.clone())));
    assert!(repo.handle_wcr(&req, &res, &COMPILER, Some(b.clone())));
    let mut c = TcpStream::connect(("127.0.0.1", port)).unwrap();
    c.write_all(b"1,2,3\n").unwrap();
    wait_for("both sinks", Duration::from_secs(5), || a.len() == 1 && b.len() == 1);

    repo.release_wcr(&req, Some(&a_dyn)).unwrap();
    c.write_all(b"4,5,6\n").unwrap();
    wait_for("second element", Duration::from_secs(5), || b.len() == 2);
    assert_eq!(a.len(), 1);
    repo.shutdown();
    assert!(port_is_bindable(port));
}

#[test]
fn concurrent_requests_share_one_instance() {
    let res = Arc::new(resolver());
    for _ in 0..5 {
        let repo = Arc::new(WrapperRepository::new());
        let port = free_port();
        let barrier = Arc::new(Barrier::new(32));
        let handles: Vec<_> = (0..32)
            .map(|_| {
                let (repo, res, barrier) = (repo.clone(), res.clone(), barrier.clone());
                thread::spawn(move || {
                    barrier.wait();
                    repo.handle_wcr(&wcr("SunSPOT", port), &*res, &COMPILER, None)
                })
            })
            .collect();
        let ok = handles.into_iter().filter_map(|h| h.join().ok()).filter(|ok| *ok).count();
        assert_eq!(ok, 32);
        let snap = repo.snapshot();
        assert_eq!(snap.len(), 1);
        assert_eq!(snap.values().next().unwrap().registered_sources, 32);
        repo.shutdown();
    }
}
