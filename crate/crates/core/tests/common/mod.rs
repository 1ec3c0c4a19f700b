#![allow(dead_code)]

use std::net::TcpListener;
use std::path::PathBuf;

use sensorforge::definitions::{parse_sdd, SensorDeviceDefinition};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_fixture(rel: &str) -> String {
    let path = fixtures().join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn sdd(name: &str) -> SensorDeviceDefinition {
    parse_sdd(&read_fixture(&format!("sdd/{name}.sdd.xml"))).unwrap()
}

/// Every valid SDD fixture as (file stem, text).
pub fn sdd_corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(fixtures().join("sdd"))
        .unwrap()
        .filter_map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name()?.to_str()?.strip_suffix(".sdd.xml")?.to_string();
            Some((name, std::fs::read_to_string(&path).unwrap()))
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

/// A port nothing is listening on right now.
pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

pub fn port_is_bindable(port: u16) -> bool {
    TcpListener::bind(("127.0.0.1", port)).is_ok()
}
