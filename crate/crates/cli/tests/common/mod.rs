#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(rel: &str) -> PathBuf {
    fixtures().join(rel)
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sensorforge"));
    cmd.env_remove("SENSORFORGE_SDDCR_URL").env("RUST_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// A VSD reading one SunSPOT source bound to `port`.
pub fn sunspot_vsd(name: &str, port: u16) -> String {
    format!(
        r#"<virtual-sensor name="{name}">
  <window size="10" slide="1"/>
  <streams>
    <source alias="spot">
      <address wrapper="SunSPOT"><predicate key="port">{port}</predicate></address>
    </source>
  </streams>
</virtual-sensor>"#
    )
}

/// A long-running child that prints one JSON "ready" line first.
/// Killed on drop if still alive.
pub struct Daemon {
    pub child: Child,
    pub ready: Value,
    stdout: BufReader<ChildStdout>,
}

impl Daemon {
    pub fn spawn(args: &[&str], stderr_log: &Path) -> Daemon {
        Self::spawn_with(bin().args(args), stderr_log)
    }

    pub fn spawn_with(cmd: &mut Command, stderr_log: &Path) -> Daemon {
        let log = std::fs::File::create(stderr_log).unwrap();
        let mut child = cmd.stdout(Stdio::piped()).stderr(log).spawn().expect("spawn");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        let ready: Value = serde_json::from_str(&line).unwrap_or_else(|_| {
            let _ = child.kill();
            panic!(
                "no ready line (got {line:?}); stderr:\n{}",
                std::fs::read_to_string(stderr_log).unwrap_or_default()
            )
        });
        assert_eq!(ready["event"], "ready");
        Daemon { child, ready, stdout }
    }

    /// Waits for a clean exit and returns its status code.
    pub fn wait_exit(&mut self, within: Duration) -> Option<i32> {
        let deadline = Instant::now() + within;
        while Instant::now() < deadline {
            if let Some(status) = self.child.try_wait().unwrap() {
                return status.code();
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        None
    }

    pub fn rest_of_stdout(&mut self) -> String {
        let mut s = String::new();
        let _ = std::io::Read::read_to_string(&mut self.stdout, &mut s);
        s
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        if self.child.try_wait().ok().flatten().is_none() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Sends one admin command and collects the JSON lines up to the blank terminator.
pub fn admin(addr: &str, command: &str) -> Vec<Value> {
    let mut stream = TcpStream::connect(addr).expect("admin socket");
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    writeln!(stream, "{command}").unwrap();
    let mut reader = BufReader::new(stream);
    let mut out = Vec::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap() == 0 {
            panic!("admin response for `{command}` ended without a blank line");
        }
        if line.trim().is_empty() {
            return out;
        }
        out.push(serde_json::from_str(&line).expect("admin lines are JSON"));
    }
}

/// Polls `query` until it returns `want` rows or `within` passes.
pub fn wait_rows(addr: &str, vs: &str, want: usize, within: Duration) -> Vec<Value> {
    let deadline = Instant::now() + within;
    loop {
        let rows = admin(addr, &format!("query {vs} {want}"));
        if rows.len() >= want || Instant::now() > deadline {
            return rows;
        }
        std::thread::sleep(Duration::from_millis(25));
    }
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
