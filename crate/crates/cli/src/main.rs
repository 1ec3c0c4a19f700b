mod args;
mod serve;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use sensorforge::codegen::{decode_literal, emit_source, EmitError, WrapperTemplate};
use sensorforge::definitions::{parse_sdd, parse_sdd_unchecked, validate_sdd, DefinitionError, SensorDeviceDefinition};
use sensorforge::devsim::{run_file_device, run_push_device, DeviceFixture, PollableDevice, SendReport};
use sensorforge::registry::{serve_registry, CloudClient, CloudRegistry, PutOutcome};

use args::{Cli, Command, FixtureArgs, GenerateArgs, RegistryCommand, SddCommand, SimCommand};

/// Why a command failed, and so which exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    /// The command ran but the answer is no, such as an invalid definition or a refused connection.
    Domain(String),
    /// The invocation itself was wrong: bad arguments or unreadable inputs.
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let result = match cli.command {
        Command::Sdd(SddCommand::Validate { path }) => validate(&path),
        Command::Generate(a) => generate(a),
        Command::Serve(a) => serve::run(a),
        Command::Registry(c) => registry(c),
        Command::Sim(c) => sim(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Domain(m) | Failure::Usage(m) if !m.is_empty() => eprintln!("error: {m}"),
                _ => {}
            }
            ExitCode::from(f.code())
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Reads and fully validates a definition; every violation goes to stderr.
fn load_sdd(path: &Path) -> Result<SensorDeviceDefinition, Failure> {
    match parse_sdd(&read_text(path)?) {
        Ok(sdd) => Ok(sdd),
        Err(DefinitionError::InvariantViolation { violations: vs }) => {
            for v in &vs {
                eprintln!("{v}");
            }
            Err(Failure::Domain(format!("{}: {} violation(s)", path.display(), vs.len())))
        }
        Err(e) => Err(Failure::Domain(format!("{}: {e}", path.display()))),
    }
}

fn validate(path: &Path) -> Outcome {
    let text = read_text(path)?;
    let sdd = match parse_sdd_unchecked(&text) {
        Ok(sdd) => sdd,
        Err(e) => {
            println!("{e}");
            return Err(Failure::Domain(String::new()));
        }
    };
    let violations = validate_sdd(&sdd);
    if violations.is_empty() {
        println!("OK");
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure::Domain(String::new()))
}

fn generate(a: GenerateArgs) -> Outcome {
    let template = WrapperTemplate::builtin(&a.target).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown target `{}`; available targets: {}",
            a.target,
            WrapperTemplate::builtin_targets().join(", ")
        ))
    })?;
    let sdd = load_sdd(&a.sdd)?;
    let os = a.os.unwrap_or_else(args::host_os);
    let overrides: BTreeMap<String, String> = a.set.into_iter().collect();
    let source = emit_source(&sdd, &template, os, &overrides).map_err(|e| match e {
        EmitError::Compile(c) => Failure::Domain(c.to_string()),
        other => Failure::Domain(other.to_string()),
    })?;
    match a.out {
        Some(path) => std::fs::write(&path, source).map_err(|e| Failure::Domain(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(source.as_bytes())
            .map_err(|e| Failure::Domain(e.to_string())),
    }
}

fn client(url: &str) -> Result<CloudClient, Failure> {
    CloudClient::new(url).map_err(|e| Failure::Usage(e.to_string()))
}

fn registry(cmd: RegistryCommand) -> Outcome {
    match cmd {
        RegistryCommand::Serve { root, listen } => {
            let server = serve_registry(&root, &listen).map_err(|e| Failure::Domain(e.to_string()))?;
            println!("{}", serde_json::json!({ "event": "ready", "url": server.url() }));
            let _ = std::io::stdout().flush();
            server.wait();
            Ok(())
        }
        RegistryCommand::Push { sdd, registry } => {
            let cloud = client(&registry.url)?;
            let sdd = load_sdd(&sdd)?;
            match cloud.put(&sdd).map_err(|e| Failure::Domain(e.to_string()))? {
                PutOutcome::Conflict => Err(Failure::Domain(format!(
                    "conflict: the registry holds a different {} at this or a newer version",
                    sdd.name
                ))),
                outcome => {
                    println!("{} {} {}", serde_json::to_value(outcome).unwrap().as_str().unwrap(), sdd.name, sdd.version);
                    Ok(())
                }
            }
        }
        RegistryCommand::Pull { name, registry, out } => {
            let cloud = client(&registry.url)?;
            let sdd = cloud
                .get(&name)
                .map_err(|e| Failure::Domain(e.to_string()))?
                .ok_or_else(|| Failure::Domain(format!("{name}: not found")))?;
            let text = sensorforge::definitions::serialize_sdd(&sdd);
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| Failure::Domain(format!("{}: {e}", path.display()))),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        RegistryCommand::Search { query, registry } => {
            let hits = client(&registry.url)?
                .search(&query)
                .map_err(|e| Failure::Domain(e.to_string()))?;
            print!("{}", search_table(&hits));
            Ok(())
        }
    }
}

fn search_table(hits: &[sensorforge::registry::SearchHit]) -> String {
    let rows: Vec<[&str; 3]> = std::iter::once(["NAME", "VERSION", "DESCRIPTION"])
        .chain(hits.iter().map(|h| [h.name.as_str(), h.version.as_str(), h.description.as_str()]))
        .collect();
    let w0 = rows.iter().map(|r| r[0].len()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r[1].len()).max().unwrap_or(0);
    rows.iter()
        .map(|r| format!("{:<w0$}  {:<w1$}  {}\n", r[0], r[1], r[2]).trim_end().to_string() + "\n")
        .collect()
}

fn fixture(a: &FixtureArgs) -> Result<DeviceFixture, Failure> {
    let mut f = DeviceFixture::load(&a.fixture).map_err(|e| Failure::Usage(format!("{}: {e}", a.fixture.display())))?;
    if let Some(rate) = a.rate_hz {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Failure::Usage("--rate-hz must be a positive number".into()));
        }
        f.rate_hz = rate;
    }
    Ok(f)
}

fn report(r: SendReport) -> Outcome {
    println!("{r}");
    if r.errors > 0 {
        return Err(Failure::Domain(format!("{} record(s) failed", r.errors)));
    }
    Ok(())
}

fn sim(cmd: SimCommand) -> Outcome {
    match cmd {
        SimCommand::Push { fixture: f, host, port } => {
            let f = fixture(&f)?;
            report(run_push_device(&host, port, &f).map_err(|e| Failure::Domain(e.to_string()))?)
        }
        SimCommand::File { fixture: f, path } => {
            let f = fixture(&f)?;
            report(run_file_device(&path, &f).map_err(|e| Failure::Domain(e.to_string()))?)
        }
        SimCommand::Poll {
            fixture: f,
            listen,
            poll_literal,
            duration_secs,
        } => {
            let f = fixture(&f)?;
            let literal = decode_literal(&poll_literal).map_err(|e| Failure::Usage(format!("--poll-literal: {e}")))?;
            if literal.is_empty() {
                return Err(Failure::Usage("--poll-literal must not be empty".into()));
            }
            let device = PollableDevice::bind(&listen, f, literal).map_err(|e| Failure::Domain(format!("{listen}: {e}")))?;
            println!("{}", serde_json::json!({ "event": "ready", "listen": device.local_addr().to_string() }));
            let _ = std::io::stdout().flush();
            let stop = Arc::new(AtomicBool::new(false));
            if let Some(secs) = duration_secs {
                if !(secs.is_finite() && secs >= 0.0) {
                    return Err(Failure::Usage("--duration-secs must be a non-negative number".into()));
                }
                let stop = Arc::clone(&stop);
                std::thread::spawn(move || {
                    std::thread::sleep(Duration::from_secs_f64(secs));
                    stop.store(true, Ordering::SeqCst);
                });
            }
            device.run(&stop).map_err(|e| Failure::Domain(e.to_string()))?;
            println!("replies={}", device.replies());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sensorforge::registry::SearchHit;

    #[test]
    fn table_aligns_columns() {
        let hits = vec![
            SearchHit { name: "SunSPOT".into(), version: "1.0.0".into(), description: "board".into() },
            SearchHit { name: "A".into(), version: "2".into(), description: String::new() },
        ];
        let table = search_table(&hits);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "NAME     VERSION  DESCRIPTION");
        assert_eq!(lines[1], "SunSPOT  1.0.0    board");
        assert_eq!(lines[2], "A        2");
    }

    #[test]
    fn failures_map_to_exit_codes() {
        assert_eq!(Failure::Domain("x".into()).code(), 1);
        assert_eq!(Failure::Usage("x".into()).code(), 2);
    }
}
