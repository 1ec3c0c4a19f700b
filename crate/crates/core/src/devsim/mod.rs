//! Scripted sensor devices for every transport, driven by JSON fixtures.

use std::fs::OpenOptions;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::definitions::Framing;
use crate::runtime::{encode_frame, FrameError};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("fixture has no records")]
    NoRecords,
    #[error("rateHz must be a positive finite number")]
    BadRate,
    #[error("record {index}: {source}")]
    Record { index: usize, source: FrameError },
    #[error("record {index}: invalid base64: {message}")]
    Base64 { index: usize, message: String },
    #[error("fixture file: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("connection refused by {0}")]
    ConnectionRefused(String),
    #[error("{0}")]
    Io(#[from] io::Error),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawRecord {
    Text(String),
    Binary { base64: String },
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawFixture {
    records: Vec<RawRecord>,
    rate_hz: f64,
    seed: u64,
    framing: Framing,
}

/// A scripted device: framed records plus the rate to send them at.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceFixture {
    pub records: Vec<Vec<u8>>,
    pub rate_hz: f64,
    /// Reserved for send-time jitter; pacing is currently exact.
    pub seed: u64,
    pub framing: Framing,
}

impl DeviceFixture {
    pub fn new(records: Vec<Vec<u8>>, rate_hz: f64, framing: Framing) -> Result<Self, FixtureError> {
        let fixture = DeviceFixture {
            records,
            rate_hz,
            seed: 0,
            framing,
        };
        fixture.check()?;
        Ok(fixture)
    }

    /// Parses the JSON form. Binary records are written `{"base64": "..."}`.
    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        let raw: RawFixture = serde_json::from_str(text)?;
        let records = raw
            .records
            .into_iter()
            .enumerate()
            .map(|(index, r)| match r {
                RawRecord::Text(s) => Ok(s.into_bytes()),
                RawRecord::Binary { base64 } => base64::engine::general_purpose::STANDARD
                    .decode(base64)
                    .map_err(|e| FixtureError::Base64 {
                        index,
                        message: e.to_string(),
                    }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let fixture = DeviceFixture {
            records,
            rate_hz: raw.rate_hz,
            seed: raw.seed,
            framing: raw.framing,
        };
        fixture.check()?;
        Ok(fixture)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<(), FixtureError> {
        if self.records.is_empty() {
            return Err(FixtureError::NoRecords);
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(FixtureError::BadRate);
        }
        for (index, record) in self.records.iter().enumerate() {
            encode_frame(self.framing, record).map_err(|source| FixtureError::Record { index, source })?;
        }
        Ok(())
    }

    /// Record `i` as it goes on the wire.
    pub fn frame(&self, i: usize) -> Vec<u8> {
        encode_frame(self.framing, &self.records[i % self.records.len()]).expect("checked at construction")
    }

    /// The whole fixture as one byte stream.
    pub fn wire_bytes(&self) -> Vec<u8> {
        (0..self.records.len()).flat_map(|i| self.frame(i)).collect()
    }

    fn period(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.rate_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SendReport {
    /// Records attempted, including one that failed mid-stream.
    pub sent: u64,
    pub errors: u64,
}

impl std::fmt::Display for SendReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sent={} errors={}", self.sent, self.errors)
    }
}

/// Sleeps until the `i`th slot of a fixed schedule, so pacing does not drift.
fn pace(start: Instant, period: Duration, i: usize) {
    let due = start + period.mul_f64(i as f64);
    let now = Instant::now();
    if due > now {
        thread::sleep(due - now);
    }
}

/// Connects once and sends every record at the fixture's rate.
pub fn run_push_device(host: &str, port: u16, fixture: &DeviceFixture) -> Result<SendReport, DeviceError> {
    let target = format!("{host}:{port}");
    let mut last = io::Error::new(io::ErrorKind::NotFound, format!("{target}: no address"));
    let mut stream = None;
    for addr in (host, port).to_socket_addrs()? {
        match TcpStream::connect_timeout(&addr, Duration::from_secs(5)) {
            Ok(s) => {
                stream = Some(s);
                break;
            }
            Err(e) => last = e,
        }
    }
    let mut stream = match stream {
        Some(s) => s,
        None if last.kind() == io::ErrorKind::ConnectionRefused => return Err(DeviceError::ConnectionRefused(target)),
        None => return Err(last.into()),
    };
    stream.set_nodelay(true)?;
    let mut report = SendReport::default();
    let (start, period) = (Instant::now(), fixture.period());
    for i in 0..fixture.records.len() {
        pace(start, period, i);
        report.sent += 1;
        if let Err(e) = stream.write_all(&fixture.frame(i)) {
            log::warn!("push device {target}: record {i}: {e}");
            report.errors += 1;
            return Ok(report);
        }
    }
    let _ = stream.shutdown(Shutdown::Write);
    Ok(report)
}

/// Appends every record framed to `path` at the fixture's rate.
pub fn run_file_device(path: &Path, fixture: &DeviceFixture) -> Result<SendReport, DeviceError> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut report = SendReport::default();
    let (start, period) = (Instant::now(), fixture.period());
    for i in 0..fixture.records.len() {
        pace(start, period, i);
        report.sent += 1;
        if let Err(e) = file.write_all(&fixture.frame(i)).and_then(|_| file.flush()) {
            log::warn!("file device {}: record {i}: {e}", path.display());
            report.errors += 1;
            return Ok(report);
        }
    }
    Ok(report)
}

/// A device that answers each poll literal with its next record, cycling.
///
/// Clients are served one at a time; the record cursor carries over between
/// connections. Bytes that are not part of a poll literal are ignored.
pub struct PollableDevice {
    listener: TcpListener,
    fixture: DeviceFixture,
    poll_literal: Vec<u8>,
    next: AtomicU64,
}

const STOP_CHECK: Duration = Duration::from_millis(50);

impl PollableDevice {
    pub fn bind(listen: &str, fixture: DeviceFixture, poll_literal: Vec<u8>) -> io::Result<Self> {
        if poll_literal.is_empty() {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "poll literal must not be empty"));
        }
        let listener = TcpListener::bind(listen)?;
        listener.set_nonblocking(true)?;
        Ok(PollableDevice {
            listener,
            fixture,
            poll_literal,
            next: AtomicU64::new(0),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Replies sent so far.
    pub fn replies(&self) -> u64 {
        self.next.load(Ordering::SeqCst)
    }

    /// Serves until `stop` is set.
    pub fn run(&self, stop: &AtomicBool) -> io::Result<()> {
        while !stop.load(Ordering::SeqCst) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    if let Err(e) = self.serve(stream, stop) {
                        log::debug!("pollable device: client {peer}: {e}");
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Runs on a background thread; the handle stops it.
    pub fn spawn(self) -> DeviceHandle {
        let device = Arc::new(self);
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let (device, stop) = (Arc::clone(&device), Arc::clone(&stop));
            thread::spawn(move || {
                if let Err(e) = device.run(&stop) {
                    log::warn!("pollable device stopped: {e}");
                }
            })
        };
        DeviceHandle {
            device,
            stop,
            thread: Some(thread),
        }
    }

    fn serve(&self, mut stream: TcpStream, stop: &AtomicBool) -> io::Result<()> {
        stream.set_nonblocking(false)?;
        stream.set_read_timeout(Some(STOP_CHECK))?;
        stream.set_nodelay(true)?;
        let lit = self.poll_literal.as_slice();
        let mut pending: Vec<u8> = Vec::new();
        let mut buf = [0u8; 4096];
        while !stop.load(Ordering::SeqCst) {
            let n = match stream.read(&mut buf) {
                Ok(0) => return Ok(()),
                Ok(n) => n,
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
                Err(e) => return Err(e),
            };
            pending.extend_from_slice(&buf[..n]);
            while let Some(pos) = pending.windows(lit.len()).position(|w| w == lit) {
                let i = self.next.fetch_add(1, Ordering::SeqCst) as usize;
                stream.write_all(&self.fixture.frame(i))?;
                pending.drain(..pos + lit.len());
            }
            // keep only a tail that could still start a literal
            let keep = pending.len().min(lit.len() - 1);
            pending.drain(..pending.len() - keep);
        }
        Ok(())
    }
}

/// Binds `listen` and serves polls until `stop` is set.
pub fn run_pollable_device(
    listen: &str,
    fixture: DeviceFixture,
    poll_literal: Vec<u8>,
    stop: &AtomicBool,
) -> io::Result<()> {
    PollableDevice::bind(listen, fixture, poll_literal)?.run(stop)
}

pub struct DeviceHandle {
    device: Arc<PollableDevice>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl DeviceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.device.local_addr()
    }

    pub fn replies(&self) -> u64 {
        self.device.replies()
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for DeviceHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
