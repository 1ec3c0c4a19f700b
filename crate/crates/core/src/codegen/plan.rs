use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use crate::definitions::{
    validate_sdd, ConfigProperty, ConnStep, Extractor, FieldSpec, Framing, OsTag,
    SensorDeviceDefinition, StepVerb, Transport, ValueType, ViolationCode,
};

use super::CompileError;

/// Runnable form of a device definition, resolved for one OS.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    pub wrapper_name: String,
    pub version: String,
    pub output_schema: Vec<FieldSpec>,
    pub resolved_config: BTreeMap<String, String>,
    pub binding: TransportBinding,
    pub framing: Framing,
    /// Steps run right after the endpoint is opened (handshake).
    pub connect_steps: Vec<CompiledStep>,
    /// Steps run before each record is read: once per client for push, once
    /// per sampling tick for poll.
    pub retrieval_steps: Vec<CompiledStep>,
    pub close_steps: Vec<CompiledStep>,
    /// Index-aligned with `output_schema`.
    pub transform_program: Vec<CompiledExtractor>,
    pub sampling_interval_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportBinding {
    PushListen { addr: SocketAddr },
    PollConnect { host: String, port: u16 },
    FileTail { path: PathBuf },
}

impl TransportBinding {
    pub fn transport(&self) -> Transport {
        match self {
            TransportBinding::PushListen { .. } => Transport::TcpPushListen,
            TransportBinding::PollConnect { .. } => Transport::TcpPollConnect,
            TransportBinding::FileTail { .. } => Transport::FileTail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompiledStep {
    Send(Vec<u8>),
    Expect(Vec<u8>),
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledExtractor {
    pub field: String,
    pub value_type: ValueType,
    pub extractor: Extractor,
}

/// Resolves every system-config property for `os`.
///
/// Overrides win for overridable keys; overrides naming undeclared keys are ignored.
pub fn resolve_config(
    sdd: &SensorDeviceDefinition,
    os: OsTag,
    overrides: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>, CompileError> {
    let mut resolved = BTreeMap::new();
    for ConfigProperty {
        key,
        per_os_default,
        required,
        overridable,
    } in &sdd.system_config
    {
        let value = match overrides.get(key) {
            Some(_) if !overridable => return Err(CompileError::OverrideNotPermitted(key.clone())),
            Some(v) => Some(v.clone()),
            None => per_os_default.get(&os).cloned(),
        };
        match value {
            Some(v) => {
                resolved.insert(key.clone(), v);
            }
            None if *required => return Err(CompileError::MissingRequiredConfig(key.clone())),
            None => {}
        }
    }
    Ok(resolved)
}

fn substitute(argument: &str, config: &BTreeMap<String, String>) -> Result<String, CompileError> {
    let mut out = String::with_capacity(argument.len());
    let mut rest = argument;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| CompileError::UnresolvedPlaceholder(after.to_string()))?;
        let key = &after[..end];
        let value = config
            .get(key)
            .ok_or_else(|| CompileError::UnresolvedPlaceholder(key.to_string()))?;
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Decodes `\n`, `\r`, `\t`, `\0`, `\\` and `\xHH` escapes in a step literal.
pub fn decode_literal(text: &str) -> Result<Vec<u8>, CompileError> {
    let bad = || CompileError::InvalidBinding(format!("bad escape in literal `{text}`"));
    let mut out = Vec::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0u8; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        match chars.next().ok_or_else(bad)? {
            'n' => out.push(b'\n'),
            'r' => out.push(b'\r'),
            't' => out.push(b'\t'),
            '0' => out.push(0),
            '\\' => out.push(b'\\'),
            'x' => {
                let hi = chars.next().and_then(|c| c.to_digit(16)).ok_or_else(bad)?;
                let lo = chars.next().and_then(|c| c.to_digit(16)).ok_or_else(bad)?;
                out.push((hi * 16 + lo) as u8);
            }
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

fn parse_port(text: &str, context: &str) -> Result<u16, CompileError> {
    let invalid = || CompileError::InvalidBinding(format!("{context}: `{text}` is not a port in 1-65535"));
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(invalid());
    }
    match text.parse::<u32>() {
        Ok(p @ 1..=65535) => Ok(p as u16),
        _ => Err(invalid()),
    }
}

fn split_host_port(text: &str) -> Option<(&str, &str)> {
    if let Some(rest) = text.strip_prefix('[') {
        let (host, port) = rest.split_once("]:")?;
        return Some((host, port));
    }
    text.rsplit_once(':')
}

fn parse_bind(text: &str) -> Result<SocketAddr, CompileError> {
    match split_host_port(text) {
        None => Ok(SocketAddr::new(
            IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            parse_port(text, "bind")?,
        )),
        Some((host, port)) => {
            let port = parse_port(port, "bind")?;
            let ip: IpAddr = if host == "localhost" {
                IpAddr::V4(Ipv4Addr::LOCALHOST)
            } else {
                host.parse().map_err(|_| {
                    CompileError::InvalidBinding(format!("bind: `{host}` is not an IP address"))
                })?
            };
            Ok(SocketAddr::new(ip, port))
        }
    }
}

fn compile_steps(
    steps: &[ConnStep],
    config: &BTreeMap<String, String>,
) -> Result<Vec<CompiledStep>, CompileError> {
    steps
        .iter()
        .filter_map(|step| {
            let compiled = match step.verb {
                StepVerb::SendLiteral => substitute(&step.argument, config)
                    .and_then(|s| decode_literal(&s))
                    .map(CompiledStep::Send),
                StepVerb::ExpectLiteral => substitute(&step.argument, config)
                    .and_then(|s| decode_literal(&s))
                    .map(CompiledStep::Expect),
                StepVerb::Close => Ok(CompiledStep::Close),
                // endpoints are compiled into the binding
                StepVerb::Bind | StepVerb::Connect | StepVerb::OpenPath => return None,
            };
            Some(compiled)
        })
        .collect()
}

/// Compiles a definition into an [`ExecutionPlan`] for one OS and set of overrides.
pub fn compile_plan(
    sdd: &SensorDeviceDefinition,
    os: OsTag,
    overrides: &BTreeMap<String, String>,
) -> Result<ExecutionPlan, CompileError> {
    let violations = validate_sdd(sdd);
    if let Some(v) = violations.iter().find(|v| {
        matches!(
            v.code,
            ViolationCode::FrameOverflow | ViolationCode::BadBinaryLength | ViolationCode::EncodingType
        )
    }) {
        return Err(CompileError::PlanConsistency(format!("{}: {}", v.path, v.message)));
    }
    if !violations.is_empty() {
        return Err(CompileError::InvalidDefinition(violations));
    }

    let resolved_config = resolve_config(sdd, os, overrides)?;
    // values are substituted once, so a value carrying `${` would leak into the plan
    if let Some((key, _)) = resolved_config.iter().find(|(_, v)| v.contains("${")) {
        return Err(CompileError::UnresolvedPlaceholder(key.clone()));
    }
    let conn = &sdd.connection;

    // validation guarantees the endpoint step is first
    let endpoint = &conn.initiate_connection[0];
    let target = substitute(&endpoint.argument, &resolved_config)?;
    let binding = match conn.transport {
        Transport::TcpPushListen => TransportBinding::PushListen {
            addr: parse_bind(&target)?,
        },
        Transport::TcpPollConnect => {
            let (host, port) = split_host_port(&target).ok_or_else(|| {
                CompileError::InvalidBinding(format!("connect: `{target}` is not host:port"))
            })?;
            if host.is_empty() {
                return Err(CompileError::InvalidBinding(format!(
                    "connect: `{target}` has an empty host"
                )));
            }
            TransportBinding::PollConnect {
                host: host.to_string(),
                port: parse_port(port, "connect")?,
            }
        }
        Transport::FileTail => {
            if target.trim().is_empty() {
                return Err(CompileError::InvalidBinding("open-path: empty path".into()));
            }
            TransportBinding::FileTail {
                path: PathBuf::from(target),
            }
        }
    };

    let transform_program = sdd
        .data_structure
        .iter()
        .map(|field| {
            let rule = sdd
                .transformation
                .iter()
                .find(|r| r.target == field.name)
                .ok_or_else(|| {
                    CompileError::PlanConsistency(format!("field `{}` has no rule", field.name))
                })?;
            Ok(CompiledExtractor {
                field: field.name.clone(),
                value_type: field.value_type,
                extractor: rule.extractor.clone(),
            })
        })
        .collect::<Result<Vec<_>, CompileError>>()?;

    Ok(ExecutionPlan {
        wrapper_name: sdd.name.clone(),
        version: sdd.version.clone(),
        output_schema: sdd.data_structure.clone(),
        resolved_config: resolved_config.clone(),
        binding,
        framing: conn.framing,
        connect_steps: compile_steps(&conn.initiate_connection, &resolved_config)?,
        retrieval_steps: compile_steps(&conn.initiate_retrieval, &resolved_config)?,
        close_steps: compile_steps(&conn.close_connection, &resolved_config)?,
        transform_program,
        sampling_interval_ms: conn.sampling_interval_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_escapes() {
        assert_eq!(decode_literal("POLL\\n").unwrap(), b"POLL\n");
        assert_eq!(decode_literal("a\\x41\\\\").unwrap(), b"aA\\");
        assert!(decode_literal("bad\\q").is_err());
        assert!(decode_literal("trailing\\").is_err());
        assert!(decode_literal("\\x4").is_err());
    }

    #[test]
    fn bind_targets() {
        assert_eq!(parse_bind("9005").unwrap(), "0.0.0.0:9005".parse().unwrap());
        assert_eq!(
            parse_bind("127.0.0.1:9005").unwrap(),
            "127.0.0.1:9005".parse().unwrap()
        );
        assert_eq!(parse_bind("[::1]:80").unwrap(), "[::1]:80".parse().unwrap());
        assert_eq!(
            parse_bind("localhost:1").unwrap(),
            "127.0.0.1:1".parse().unwrap()
        );
        for bad in ["0", "65536", "port", "", "10.0.0.1:", "host:80"] {
            assert!(matches!(parse_bind(bad), Err(CompileError::InvalidBinding(_))), "{bad}");
        }
    }

    #[test]
    fn substitution_requires_resolved_keys() {
        let mut cfg = BTreeMap::new();
        cfg.insert("port".to_string(), "9005".to_string());
        assert_eq!(substitute("127.0.0.1:${port}", &cfg).unwrap(), "127.0.0.1:9005");
        assert!(matches!(
            substitute("${host}", &cfg),
            Err(CompileError::UnresolvedPlaceholder(k)) if k == "host"
        ));
    }
}
