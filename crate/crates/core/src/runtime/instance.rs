use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::codegen::{CompiledStep, ExecutionPlan, TransportBinding};
use crate::definitions::FieldSpec;

use super::framing::FrameDecoder;
use super::transform::apply_program;
use super::value::{StreamElement, Value};
use super::RuntimeError;

/// Granularity at which blocked loops re-check the stop flag.
const STOP_CHECK: Duration = Duration::from_millis(50);
/// Fixed delay before each poll-mode reconnect attempt.
pub const POLL_RETRY_BACKOFF: Duration = Duration::from_secs(1);
pub const POLL_RETRY_ATTEMPTS: u32 = 5;
/// Bound on connect, handshake and poll-response waits.
pub const IO_DEADLINE: Duration = Duration::from_secs(5);
const FILE_IDLE: Duration = Duration::from_millis(20);
const READ_CHUNK: usize = 16 * 1024;

/// Receives every element a wrapper emits.
pub trait ElementSink: Send + Sync {
    fn deliver(&self, element: &StreamElement);
}

impl<F> ElementSink for F
where
    F: Fn(&StreamElement) + Send + Sync,
{
    fn deliver(&self, element: &StreamElement) {
        self(element)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WrapperState {
    Created,
    Initialised,
    Running,
    Finalised,
    Failed,
}

#[derive(Debug, Default)]
struct Counters {
    records: AtomicU64,
    emitted: AtomicU64,
    malformed: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct WrapperStats {
    /// Framed records received, including malformed ones.
    pub records: u64,
    pub emitted: u64,
    pub malformed: u64,
}

struct Connection {
    stream: TcpStream,
    decoder: FrameDecoder,
}

enum Resource {
    Listener(TcpListener),
    Poll(Connection),
    File(File),
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

fn timed_out(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted
    )
}

/// One running wrapper: an [`ExecutionPlan`] plus its transport resources.
pub struct WrapperInstance {
    plan: Arc<ExecutionPlan>,
    state: Mutex<WrapperState>,
    resource: Mutex<Option<Resource>>,
    stop: AtomicBool,
    active: Mutex<bool>,
    active_cv: Condvar,
    // watermark; held while delivering so emission order matches timestamps
    emit_lock: Mutex<i64>,
    counters: Counters,
    sinks: RwLock<Vec<Arc<dyn ElementSink>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
    local_addr: Mutex<Option<SocketAddr>>,
}

impl std::fmt::Debug for WrapperInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WrapperInstance")
            .field("wrapper", &self.plan.wrapper_name)
            .field("state", &self.state())
            .finish_non_exhaustive()
    }
}

struct FanOut<'a>(&'a WrapperInstance);

impl ElementSink for FanOut<'_> {
    fn deliver(&self, element: &StreamElement) {
        for sink in self.0.sinks.read().unwrap().iter() {
            sink.deliver(element);
        }
    }
}

fn same_sink(a: &Arc<dyn ElementSink>, b: &Arc<dyn ElementSink>) -> bool {
    std::ptr::eq(
        Arc::as_ptr(a) as *const (),
        Arc::as_ptr(b) as *const (),
    )
}

impl WrapperInstance {
    pub fn new(plan: ExecutionPlan) -> Self {
        WrapperInstance {
            plan: Arc::new(plan),
            state: Mutex::new(WrapperState::Created),
            resource: Mutex::new(None),
            stop: AtomicBool::new(false),
            active: Mutex::new(false),
            active_cv: Condvar::new(),
            emit_lock: Mutex::new(i64::MIN),
            counters: Counters::default(),
            sinks: RwLock::new(Vec::new()),
            worker: Mutex::new(None),
            local_addr: Mutex::new(None),
        }
    }

    pub fn plan(&self) -> &ExecutionPlan {
        &self.plan
    }

    pub fn get_wrapper_name(&self) -> &str {
        &self.plan.wrapper_name
    }

    pub fn get_output_format(&self) -> &[FieldSpec] {
        &self.plan.output_schema
    }

    pub fn state(&self) -> WrapperState {
        *self.state.lock().unwrap()
    }

    pub fn stats(&self) -> WrapperStats {
        WrapperStats {
            records: self.counters.records.load(Ordering::Relaxed),
            emitted: self.counters.emitted.load(Ordering::Relaxed),
            malformed: self.counters.malformed.load(Ordering::Relaxed),
        }
    }

    /// Timestamp of the last emitted element, if any.
    pub fn last_timestamp_ms(&self) -> Option<i64> {
        let wm = *self.emit_lock.lock().unwrap();
        (wm != i64::MIN).then_some(wm)
    }

    /// Address of the listening socket for push wrappers.
    pub fn local_addr(&self) -> Option<SocketAddr> {
        *self.local_addr.lock().unwrap()
    }

    pub fn add_sink(&self, sink: Arc<dyn ElementSink>) {
        self.sinks.write().unwrap().push(sink);
    }

    pub fn remove_sink(&self, sink: &Arc<dyn ElementSink>) -> bool {
        let mut sinks = self.sinks.write().unwrap();
        match sinks.iter().position(|s| same_sink(s, sink)) {
            Some(i) => {
                sinks.remove(i);
                true
            }
            None => false,
        }
    }

    pub fn sink_count(&self) -> usize {
        self.sinks.read().unwrap().len()
    }

    fn fail(&self) {
        let mut state = self.state.lock().unwrap();
        if *state != WrapperState::Finalised {
            *state = WrapperState::Failed;
        }
    }

    /// Acquires the transport resource. On failure the instance is `Failed`
    /// and holds nothing.
    pub fn initialise(&self) -> bool {
        {
            let state = self.state.lock().unwrap();
            if *state != WrapperState::Created {
                log::warn!(
                    "initialise on wrapper {} in state {:?}",
                    self.plan.wrapper_name,
                    *state
                );
                return false;
            }
        }
        let acquired = match &self.plan.binding {
            TransportBinding::PushListen { addr } => TcpListener::bind(addr).and_then(|l| {
                l.set_nonblocking(true)?;
                *self.local_addr.lock().unwrap() = Some(l.local_addr()?);
                Ok(Resource::Listener(l))
            }),
            TransportBinding::PollConnect { .. } => self.open_poll().map(Resource::Poll),
            TransportBinding::FileTail { path } => File::open(path).and_then(|mut f| {
                f.seek(SeekFrom::End(0))?;
                Ok(Resource::File(f))
            }),
        };
        match acquired {
            Ok(resource) => {
                *self.resource.lock().unwrap() = Some(resource);
                *self.state.lock().unwrap() = WrapperState::Initialised;
                true
            }
            Err(e) => {
                log::warn!(
                    "wrapper {} failed to initialise {:?}: {e}",
                    self.plan.wrapper_name,
                    self.plan.binding
                );
                self.fail();
                false
            }
        }
    }

    /// Runs the retrieval loop on the calling thread until [`stop`](Self::stop).
    pub fn run_loop(&self, sink: &dyn ElementSink) -> Result<(), RuntimeError> {
        {
            let mut state = self.state.lock().unwrap();
            if *state != WrapperState::Initialised {
                return Err(RuntimeError::InvalidState {
                    expected: WrapperState::Initialised,
                    found: *state,
                });
            }
            *state = WrapperState::Running;
        }
        self.drive(sink)
    }

    /// Runs the loop on a dedicated thread, fanning elements out to the
    /// registered sinks.
    pub fn start(self: &Arc<Self>) -> Result<(), RuntimeError> {
        {
            let mut state = self.state.lock().unwrap();
            if *state != WrapperState::Initialised {
                return Err(RuntimeError::InvalidState {
                    expected: WrapperState::Initialised,
                    found: *state,
                });
            }
            *state = WrapperState::Running;
        }
        let this = Arc::clone(self);
        let handle = thread::Builder::new()
            .name(format!("wrapper-{}", self.plan.wrapper_name))
            .spawn(move || {
                if let Err(e) = this.drive(&FanOut(&this)) {
                    log::warn!("wrapper {} stopped: {e}", this.plan.wrapper_name);
                }
            })
            .map_err(|e| RuntimeError::Failed(format!("spawn: {e}")))?;
        *self.worker.lock().unwrap() = Some(handle);
        Ok(())
    }

    /// Asks the loop to exit; safe from any thread.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    /// Releases every transport resource. Idempotent.
    pub fn finalise(&self) {
        if self.state() == WrapperState::Finalised {
            return;
        }
        self.stop();
        let worker = self.worker.lock().unwrap().take();
        if let Some(handle) = worker {
            if handle.thread().id() != thread::current().id() {
                let _ = handle.join();
            }
        }
        {
            let active = self.active.lock().unwrap();
            let (active, timeout) = self
                .active_cv
                .wait_timeout_while(active, IO_DEADLINE, |a| *a)
                .unwrap();
            if timeout.timed_out() && *active {
                log::warn!("wrapper {} loop did not exit in time", self.plan.wrapper_name);
            }
        }
        if let Some(resource) = self.resource.lock().unwrap().take() {
            match resource {
                Resource::Poll(mut conn) => self.close_connection(&mut conn),
                Resource::Listener(_) | Resource::File(_) => {}
            }
        }
        *self.local_addr.lock().unwrap() = None;
        let mut state = self.state.lock().unwrap();
        if *state != WrapperState::Failed {
            *state = WrapperState::Finalised;
        }
    }

    fn drive(&self, sink: &dyn ElementSink) -> Result<(), RuntimeError> {
        *self.active.lock().unwrap() = true;
        let resource = if self.stopped() {
            None
        } else {
            self.resource.lock().unwrap().take()
        };
        let result = match resource {
            _ if self.stopped() => Ok(()),
            Some(Resource::Listener(listener)) => self.push_loop(listener, sink),
            Some(Resource::Poll(conn)) => self.poll_loop(conn, sink),
            Some(Resource::File(file)) => self.tail_loop(file, sink),
            None => Err(RuntimeError::Failed("no transport resource".into())),
        };
        if result.is_err() {
            self.fail();
        }
        *self.active.lock().unwrap() = false;
        self.active_cv.notify_all();
        result
    }

    fn emit(&self, values: Vec<Value>, sink: &dyn ElementSink) {
        let mut watermark = self.emit_lock.lock().unwrap();
        let ts = now_ms().max(*watermark);
        *watermark = ts;
        let element = StreamElement {
            timestamp_ms: ts,
            values,
        };
        debug_assert!(
            element.conforms_to(&self.plan.output_schema),
            "element does not conform to the output format"
        );
        sink.deliver(&element);
        self.counters.emitted.fetch_add(1, Ordering::Relaxed);
    }

    fn drain_frames(&self, decoder: &mut FrameDecoder, sink: &dyn ElementSink, limit: Option<usize>) -> usize {
        let mut taken = 0;
        while limit.is_none_or(|l| taken < l) {
            let Some(frame) = decoder.next_frame() else { break };
            taken += 1;
            self.counters.records.fetch_add(1, Ordering::Relaxed);
            let values = frame
                .map_err(|e| e.to_string())
                .and_then(|record| apply_program(&self.plan.transform_program, &record).map_err(|e| e.to_string()));
            match values {
                Ok(values) => self.emit(values, sink),
                Err(e) => {
                    log::debug!("wrapper {} skipped record: {e}", self.plan.wrapper_name);
                    self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        taken
    }

    /// Reads more bytes into the decoder. `Ok(false)` on end of stream.
    fn fill(&self, conn: &mut Connection, deadline: Instant) -> io::Result<bool> {
        let mut buf = [0u8; READ_CHUNK];
        loop {
            if self.stopped() {
                return Err(io::Error::new(io::ErrorKind::Interrupted, "stopped"));
            }
            if Instant::now() >= deadline {
                return Err(io::Error::new(io::ErrorKind::TimedOut, "device did not answer in time"));
            }
            match conn.stream.read(&mut buf) {
                Ok(0) => return Ok(false),
                Ok(n) => {
                    conn.decoder.push(&buf[..n]);
                    return Ok(true);
                }
                Err(e) if timed_out(&e) => continue,
                Err(e) => return Err(e),
            }
        }
    }

    fn run_steps(&self, conn: &mut Connection, steps: &[CompiledStep]) -> io::Result<()> {
        for step in steps {
            match step {
                CompiledStep::Send(bytes) => conn.stream.write_all(bytes)?,
                CompiledStep::Expect(literal) => {
                    let deadline = Instant::now() + IO_DEADLINE;
                    loop {
                        match conn.decoder.consume_literal(literal) {
                            Some(true) => break,
                            Some(false) => {
                                return Err(io::Error::new(
                                    io::ErrorKind::InvalidData,
                                    "device reply does not match expect-literal",
                                ))
                            }
                            None => {
                                if !self.fill(conn, deadline)? {
                                    return Err(io::ErrorKind::UnexpectedEof.into());
                                }
                            }
                        }
                    }
                }
                CompiledStep::Close => {}
            }
        }
        Ok(())
    }

    fn close_connection(&self, conn: &mut Connection) {
        if let Err(e) = self.run_steps(conn, &self.plan.close_steps) {
            log::debug!("wrapper {} close steps: {e}", self.plan.wrapper_name);
        }
        let _ = conn.stream.shutdown(std::net::Shutdown::Both);
    }

    fn prepare_stream(stream: &TcpStream) -> io::Result<()> {
        stream.set_nonblocking(false)?;
        stream.set_read_timeout(Some(STOP_CHECK))?;
        stream.set_write_timeout(Some(IO_DEADLINE))?;
        stream.set_nodelay(true)
    }

    fn open_poll(&self) -> io::Result<Connection> {
        let TransportBinding::PollConnect { host, port } = &self.plan.binding else {
            unreachable!("open_poll on a non-poll plan");
        };
        let mut last_err = io::Error::new(io::ErrorKind::NotFound, "host resolved to no address");
        for addr in (host.as_str(), *port).to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, IO_DEADLINE) {
                Ok(stream) => {
                    Self::prepare_stream(&stream)?;
                    let mut conn = Connection {
                        stream,
                        decoder: FrameDecoder::new(self.plan.framing),
                    };
                    self.run_steps(&mut conn, &self.plan.connect_steps)?;
                    return Ok(conn);
                }
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }

    fn push_loop(&self, listener: TcpListener, sink: &dyn ElementSink) -> Result<(), RuntimeError> {
        thread::scope(|scope| {
            while !self.stopped() {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        let spawned = thread::Builder::new()
                            .name(format!("wrapper-{}-client", self.plan.wrapper_name))
                            .spawn_scoped(scope, move || self.serve_client(stream, peer, sink));
                        if let Err(e) = spawned {
                            log::warn!("wrapper {}: cannot serve {peer}: {e}", self.plan.wrapper_name);
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                    Err(e) => {
                        log::warn!("wrapper {} accept: {e}", self.plan.wrapper_name);
                        thread::sleep(Duration::from_millis(10));
                    }
                }
            }
        });
        Ok(())
    }

    fn serve_client(&self, stream: TcpStream, peer: SocketAddr, sink: &dyn ElementSink) {
        if let Err(e) = Self::prepare_stream(&stream) {
            log::warn!("wrapper {} client {peer}: {e}", self.plan.wrapper_name);
            return;
        }
        let mut conn = Connection {
            stream,
            decoder: FrameDecoder::new(self.plan.framing),
        };
        if let Err(e) = self.run_steps(&mut conn, &self.plan.retrieval_steps) {
            log::warn!("wrapper {} client {peer} handshake: {e}", self.plan.wrapper_name);
            return;
        }
        self.drain_frames(&mut conn.decoder, sink, None);
        let mut buf = vec![0u8; READ_CHUNK];
        loop {
            if self.stopped() {
                self.close_connection(&mut conn);
                return;
            }
            match conn.stream.read(&mut buf) {
                Ok(0) => {
                    if conn.decoder.pending() > 0 {
                        self.counters.records.fetch_add(1, Ordering::Relaxed);
                        self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                    }
                    return;
                }
                Ok(n) => {
                    conn.decoder.push(&buf[..n]);
                    self.drain_frames(&mut conn.decoder, sink, None);
                }
                Err(e) if timed_out(&e) => {}
                Err(e) => {
                    log::debug!("wrapper {} client {peer}: {e}", self.plan.wrapper_name);
                    return;
                }
            }
        }
    }

    /// Sleeps until `until`, waking early on stop. Returns `false` if stopped.
    fn sleep_until(&self, until: Instant) -> bool {
        loop {
            if self.stopped() {
                return false;
            }
            let now = Instant::now();
            if now >= until {
                return true;
            }
            thread::sleep((until - now).min(STOP_CHECK));
        }
    }

    fn poll_once(&self, conn: &mut Connection, sink: &dyn ElementSink) -> io::Result<()> {
        self.run_steps(conn, &self.plan.retrieval_steps)?;
        let deadline = Instant::now() + IO_DEADLINE;
        while self.drain_frames(&mut conn.decoder, sink, Some(1)) == 0 {
            if !self.fill(conn, deadline)? {
                return Err(io::ErrorKind::UnexpectedEof.into());
            }
        }
        Ok(())
    }

    fn poll_loop(&self, mut conn: Connection, sink: &dyn ElementSink) -> Result<(), RuntimeError> {
        let interval = Duration::from_millis(self.plan.sampling_interval_ms.unwrap_or(1000));
        let mut next = Instant::now();
        loop {
            if !self.sleep_until(next) {
                self.close_connection(&mut conn);
                return Ok(());
            }
            next += interval;
            let now = Instant::now();
            if next < now {
                next = now;
            }
            match self.poll_once(&mut conn, sink) {
                Ok(()) => {}
                Err(_) if self.stopped() => {
                    self.close_connection(&mut conn);
                    return Ok(());
                }
                Err(e) => {
                    log::warn!("wrapper {} lost its device: {e}", self.plan.wrapper_name);
                    let _ = conn.stream.shutdown(std::net::Shutdown::Both);
                    conn = self.reconnect()?;
                    next = Instant::now();
                }
            }
        }
    }

    fn reconnect(&self) -> Result<Connection, RuntimeError> {
        for attempt in 1..=POLL_RETRY_ATTEMPTS {
            if !self.sleep_until(Instant::now() + POLL_RETRY_BACKOFF) {
                return Err(RuntimeError::Failed("stopped while reconnecting".into()));
            }
            match self.open_poll() {
                Ok(conn) => return Ok(conn),
                Err(e) => log::warn!(
                    "wrapper {} reconnect {attempt}/{POLL_RETRY_ATTEMPTS}: {e}",
                    self.plan.wrapper_name
                ),
            }
        }
        Err(RuntimeError::Failed(format!(
            "device unreachable after {POLL_RETRY_ATTEMPTS} attempts"
        )))
    }

    fn tail_loop(&self, mut file: File, sink: &dyn ElementSink) -> Result<(), RuntimeError> {
        let mut decoder = FrameDecoder::new(self.plan.framing);
        let mut buf = vec![0u8; READ_CHUNK];
        while !self.stopped() {
            match file.read(&mut buf) {
                Ok(0) => thread::sleep(FILE_IDLE),
                Ok(n) => {
                    decoder.push(&buf[..n]);
                    self.drain_frames(&mut decoder, sink, None);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(RuntimeError::Failed(format!("tail read: {e}"))),
            }
        }
        Ok(())
    }
}

impl Drop for WrapperInstance {
    fn drop(&mut self) {
        self.stop();
    }
}
