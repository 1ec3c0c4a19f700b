mod common;

use std::time::Duration;

use common::*;

fn serve_args<'a>(vsd: &'a str, sddlr: &'a str, persist: &'a str) -> Vec<&'a str> {
    vec![
        "serve",
        "--vsd-dir",
        vsd,
        "--sddlr",
        sddlr,
        "--listen",
        "127.0.0.1:0",
        "--persist-dir",
        persist,
        "--os",
        "linux",
    ]
}

#[test]
fn serve_ingests_reports_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let (vsd, sddlr, persist) = (dir.path().join("vsd"), dir.path().join("sddlr"), dir.path().join("data"));
    std::fs::create_dir_all(&vsd).unwrap();
    std::fs::create_dir_all(&sddlr).unwrap();
    std::fs::copy(fixture("sdd/SunSPOT.sdd.xml"), sddlr.join("SunSPOT.sdd.xml")).unwrap();
    let port = free_port();
    std::fs::write(vsd.join("room.vsd.xml"), sunspot_vsd("room", port)).unwrap();
    // a sensor whose wrapper exists nowhere: reported as failed, server stays up
    std::fs::write(
        vsd.join("ghost.vsd.xml"),
        sunspot_vsd("ghost", free_port()).replace("SunSPOT", "Ghost"),
    )
    .unwrap();
    std::fs::write(vsd.join("junk.vsd.xml"), "<virtual-sensor").unwrap();

    let (v, s, p) = (vsd.display().to_string(), sddlr.display().to_string(), persist.display().to_string());
    let mut server = Daemon::spawn(&serve_args(&v, &s, &p), &dir.path().join("serve.log"));
    assert_eq!(server.ready["live"], 1);
    assert_eq!(server.ready["failed"], 2);
    let addr = server.ready["admin"].as_str().unwrap().to_string();

    let sim = run(&[
        "sim",
        "push",
        "--fixture",
        &fixture("devices/sunspot-100.json").display().to_string(),
        "--rate-hz",
        "1000",
        "--port",
        &port.to_string(),
    ]);
    assert_eq!(sim.status.code(), Some(0), "{}", stderr(&sim));
    assert_eq!(stdout(&sim).trim(), "sent=100 errors=0");

    let rows = wait_rows(&addr, "room", 100, Duration::from_secs(5));
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r["source"] == "spot"));
    assert!(rows.windows(2).all(|w| w[0]["ts"].as_i64() <= w[1]["ts"].as_i64()));
    assert_eq!(admin(&addr, "query room 5").len(), 5);

    let status = admin(&addr, "status");
    let by_name = |n: &str| status.iter().find(|l| l["name"] == n).cloned().unwrap();
    assert_eq!(by_name("room")["state"], "live");
    assert_eq!(by_name("room")["stored"], 100);
    assert_eq!(by_name("ghost")["state"], "failed");
    assert!(by_name("ghost")["error"].as_str().unwrap().contains("Ghost"));
    assert_eq!(by_name("junk")["state"], "failed");
    let wrappers: Vec<_> = status.iter().filter(|l| l["kind"] == "wrapper").collect();
    assert_eq!(wrappers.len(), 1);
    assert_eq!(wrappers[0]["wrapper"], "SunSPOT");
    assert_eq!(wrappers[0]["state"], "running");
    assert_eq!(wrappers[0]["registeredSources"], 1);

    assert!(admin(&addr, "query ghost 1")[0]["error"].is_string());
    assert!(admin(&addr, "bogus")[0]["error"].is_string());

    assert_eq!(admin(&addr, "shutdown"), vec![serde_json::json!({ "ok": true })]);
    assert_eq!(server.wait_exit(Duration::from_secs(5)), Some(0));
    // the wrapper's port is free again once the process is gone
    assert!(std::net::TcpListener::bind(("127.0.0.1", port)).is_ok());

    // a restart replays the persisted rows
    let mut again = Daemon::spawn(&serve_args(&v, &s, &p), &dir.path().join("serve2.log"));
    let addr = again.ready["admin"].as_str().unwrap().to_string();
    assert_eq!(admin(&addr, "query room 1000").len(), 100);
    admin(&addr, "shutdown");
    assert_eq!(again.wait_exit(Duration::from_secs(5)), Some(0));
}

#[test]
fn serve_rejects_missing_vsd_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "serve",
        "--vsd-dir",
        "/nonexistent/vsd",
        "--sddlr",
        &dir.path().display().to_string(),
        "--listen",
        "127.0.0.1:0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn admin_port_in_use_is_a_domain_failure() {
    let dir = tempfile::tempdir().unwrap();
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let out = run(&[
        "serve",
        "--vsd-dir",
        &dir.path().display().to_string(),
        "--sddlr",
        &dir.path().join("l").display().to_string(),
        "--listen",
        &addr,
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}
