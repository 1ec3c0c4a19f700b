use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::sdd::{
    BinaryEncoding, ConnStep, Extractor, Framing, SensorDeviceDefinition, StepVerb, Transport,
    ValueType,
};
use super::{is_dotted_version, is_identifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    BadName,
    BadVersion,
    EmptyPackage,
    BadPackage,
    BadPlatform,
    BadLibraryUrl,
    BadChecksum,
    EmptyDataStructure,
    BadIdentifier,
    DupField,
    DupConfigKey,
    UnsatisfiableConfig,
    MissingSampling,
    UnexpectedSampling,
    BadSampling,
    BadFrameSize,
    VerbTransport,
    MisplacedStep,
    MissingEndpoint,
    EmptyArgument,
    BadPlaceholder,
    UndeclaredPlaceholder,
    UnknownTransformTarget,
    DupTransformTarget,
    UntransformedField,
    BadSeparator,
    BadBinaryLength,
    FrameOverflow,
    EncodingType,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            BadName => "BAD_NAME",
            BadVersion => "BAD_VERSION",
            EmptyPackage => "EMPTY_PACKAGE",
            BadPackage => "BAD_PACKAGE",
            BadPlatform => "BAD_PLATFORM",
            BadLibraryUrl => "BAD_LIBRARY_URL",
            BadChecksum => "BAD_CHECKSUM",
            EmptyDataStructure => "EMPTY_DATA_STRUCTURE",
            BadIdentifier => "BAD_IDENTIFIER",
            DupField => "DUP_FIELD",
            DupConfigKey => "DUP_CONFIG_KEY",
            UnsatisfiableConfig => "UNSATISFIABLE_CONFIG",
            MissingSampling => "MISSING_SAMPLING",
            UnexpectedSampling => "UNEXPECTED_SAMPLING",
            BadSampling => "BAD_SAMPLING",
            BadFrameSize => "BAD_FRAME_SIZE",
            VerbTransport => "VERB_TRANSPORT",
            MisplacedStep => "MISPLACED_STEP",
            MissingEndpoint => "MISSING_ENDPOINT",
            EmptyArgument => "EMPTY_ARGUMENT",
            BadPlaceholder => "BAD_PLACEHOLDER",
            UndeclaredPlaceholder => "UNDECLARED_PLACEHOLDER",
            UnknownTransformTarget => "UNKNOWN_TRANSFORM_TARGET",
            DupTransformTarget => "DUP_TRANSFORM_TARGET",
            UntransformedField => "UNTRANSFORMED_FIELD",
            BadSeparator => "BAD_SEPARATOR",
            BadBinaryLength => "BAD_BINARY_LENGTH",
            FrameOverflow => "FRAME_OVERFLOW",
            EncodingType => "ENCODING_TYPE",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One broken invariant, located by an element path such as
/// `/sensor-device/transformation/rule[2]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.code, self.path, self.message)
    }
}

/// Splits an argument into the names of its `${key}` placeholders.
///
/// Returns `Err` with a description when a `${` is never closed or encloses
/// an empty name.
pub(crate) fn placeholder_names(argument: &str) -> Result<Vec<&str>, String> {
    let mut names = Vec::new();
    let mut rest = argument;
    while let Some(start) = rest.find("${") {
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| format!("unterminated placeholder in `{argument}`"))?;
        let name = &after[..end];
        if name.is_empty() {
            return Err(format!("empty placeholder in `{argument}`"));
        }
        names.push(name);
        rest = &after[end + 1..];
    }
    Ok(names)
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            code,
            path: path.into(),
            message: message.into(),
        });
    }
}

fn endpoint_verb(transport: Transport) -> StepVerb {
    match transport {
        Transport::TcpPushListen => StepVerb::Bind,
        Transport::TcpPollConnect => StepVerb::Connect,
        Transport::FileTail => StepVerb::OpenPath,
    }
}

fn check_steps(
    out: &mut Collector,
    sdd: &SensorDeviceDefinition,
    segment: &str,
    steps: &[ConnStep],
    config_keys: &BTreeSet<&str>,
) {
    let transport = sdd.connection.transport;
    for (i, step) in steps.iter().enumerate() {
        let path = format!("/sensor-device/connection/{segment}/step[{i}]");
        let allowed = match step.verb {
            StepVerb::Bind => transport == Transport::TcpPushListen,
            StepVerb::Connect => transport == Transport::TcpPollConnect,
            StepVerb::OpenPath => transport == Transport::FileTail,
            StepVerb::SendLiteral | StepVerb::ExpectLiteral => transport != Transport::FileTail,
            StepVerb::Close => true,
        };
        if !allowed {
            out.push(
                ViolationCode::VerbTransport,
                &path,
                format!("verb `{}` is not allowed under transport `{transport}`", step.verb),
            );
        }
        let endpoint = matches!(
            step.verb,
            StepVerb::Bind | StepVerb::Connect | StepVerb::OpenPath
        );
        let placement_ok = match step.verb {
            StepVerb::Close => segment == "close-connection",
            _ if endpoint => segment == "initiate-connection",
            _ => true,
        };
        if !placement_ok {
            out.push(
                ViolationCode::MisplacedStep,
                &path,
                format!("verb `{}` may not appear in <{segment}>", step.verb),
            );
        }
        if step.verb != StepVerb::Close && step.argument.is_empty() {
            out.push(
                ViolationCode::EmptyArgument,
                &path,
                format!("verb `{}` needs an argument", step.verb),
            );
        }
        match placeholder_names(&step.argument) {
            Err(msg) => out.push(ViolationCode::BadPlaceholder, &path, msg),
            Ok(names) => {
                for name in names {
                    if !config_keys.contains(name) {
                        out.push(
                            ViolationCode::UndeclaredPlaceholder,
                            &path,
                            format!("placeholder `${{{name}}}` names no system-config property"),
                        );
                    }
                }
            }
        }
    }
}

fn encoding_accepts(encoding: BinaryEncoding, value_type: ValueType) -> bool {
    match encoding {
        BinaryEncoding::AsciiNumber => {
            matches!(value_type, ValueType::Int64 | ValueType::Float64)
        }
        BinaryEncoding::Ieee754F64BigEndian => value_type == ValueType::Float64,
        BinaryEncoding::I64BigEndian => value_type == ValueType::Int64,
        BinaryEncoding::Utf8 => matches!(value_type, ValueType::Text | ValueType::Boolean),
    }
}

/// Checks every SDD invariant, returning all violations found (empty when valid).
pub fn validate_sdd(sdd: &SensorDeviceDefinition) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Collector(Vec::new());

    if !is_identifier(&sdd.name) {
        out.push(
            BadName,
            "/sensor-device/@name",
            format!("`{}` does not match [A-Za-z0-9_-]{{1,64}}", sdd.name),
        );
    }
    if !is_dotted_version(&sdd.version) {
        out.push(
            BadVersion,
            "/sensor-device/@version",
            format!("`{}` is not a dotted numeric version", sdd.version),
        );
    }

    for (i, lib) in sdd.libraries.iter().enumerate() {
        let path = format!("/sensor-device/libraries/library[{i}]");
        if lib.package_name.is_empty() {
            out.push(EmptyPackage, &path, "package name is empty");
        } else if lib.package_name.contains(['/', '\\'])
            || lib.package_name == "."
            || lib.package_name == ".."
        {
            out.push(
                BadPackage,
                &path,
                format!("package name `{}` is not a plain file name", lib.package_name),
            );
        }
        if lib.platform_tag.is_empty() {
            out.push(BadPlatform, &path, "platform tag is empty");
        }
        match url::Url::parse(&lib.source_url) {
            Ok(u) if matches!(u.scheme(), "http" | "https" | "file") => {}
            Ok(u) => out.push(
                BadLibraryUrl,
                &path,
                format!("scheme `{}` is not http, https, or file", u.scheme()),
            ),
            Err(e) => out.push(
                BadLibraryUrl,
                &path,
                format!("`{}` is not a URL: {e}", lib.source_url),
            ),
        }
        if let Some(sum) = &lib.checksum {
            if sum.len() != 64 || !sum.bytes().all(|b| b.is_ascii_hexdigit()) {
                out.push(BadChecksum, &path, "checksum is not 64 hex digits of SHA-256");
            }
        }
    }

    if sdd.data_structure.is_empty() {
        out.push(
            EmptyDataStructure,
            "/sensor-device/data-structure",
            "at least one field is required",
        );
    }
    let mut field_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, field) in sdd.data_structure.iter().enumerate() {
        let path = format!("/sensor-device/data-structure/field[{i}]");
        if !is_identifier(&field.name) {
            out.push(
                BadIdentifier,
                &path,
                format!("field name `{}` is not an identifier", field.name),
            );
        }
        if field_index.insert(&field.name, i).is_some() {
            out.push(
                DupField,
                &path,
                format!("field `{}` is declared more than once", field.name),
            );
        }
    }

    let mut config_keys: BTreeSet<&str> = BTreeSet::new();
    for (i, prop) in sdd.system_config.iter().enumerate() {
        let path = format!("/sensor-device/system-config/property[{i}]");
        if !is_identifier(&prop.key) {
            out.push(
                BadIdentifier,
                &path,
                format!("config key `{}` is not an identifier", prop.key),
            );
        }
        if !config_keys.insert(&prop.key) {
            out.push(
                DupConfigKey,
                &path,
                format!("config key `{}` is declared more than once", prop.key),
            );
        }
        if prop.required && prop.per_os_default.is_empty() && !prop.overridable {
            out.push(
                UnsatisfiableConfig,
                &path,
                format!(
                    "`{}` is required but has no default and cannot be overridden",
                    prop.key
                ),
            );
        }
    }

    let conn = &sdd.connection;
    let conn_path = "/sensor-device/connection";
    match (conn.transport, conn.sampling_interval_ms) {
        (Transport::TcpPollConnect, None) => out.push(
            MissingSampling,
            conn_path,
            "tcp-poll-connect requires sampling-interval-ms",
        ),
        (Transport::TcpPollConnect, Some(0)) => {
            out.push(BadSampling, conn_path, "sampling-interval-ms must be positive")
        }
        (Transport::TcpPollConnect, Some(_)) => {}
        (other, Some(_)) => out.push(
            UnexpectedSampling,
            conn_path,
            format!("sampling-interval-ms is only meaningful for tcp-poll-connect, not {other}"),
        ),
        (_, None) => {}
    }
    if conn.framing == Framing::Fixed(0) {
        out.push(BadFrameSize, conn_path, "fixed framing needs a positive frame size");
    }
    let expected_endpoint = endpoint_verb(conn.transport);
    let endpoints = conn
        .initiate_connection
        .iter()
        .filter(|s| s.verb == expected_endpoint)
        .count();
    if endpoints != 1 || conn.initiate_connection.first().map(|s| s.verb) != Some(expected_endpoint)
    {
        out.push(
            MissingEndpoint,
            format!("{conn_path}/initiate-connection"),
            format!(
                "transport `{}` needs exactly one `{}` step, first in the segment",
                conn.transport, expected_endpoint
            ),
        );
    }
    check_steps(
        &mut out,
        sdd,
        "initiate-connection",
        &conn.initiate_connection,
        &config_keys,
    );
    check_steps(
        &mut out,
        sdd,
        "initiate-retrieval",
        &conn.initiate_retrieval,
        &config_keys,
    );
    check_steps(
        &mut out,
        sdd,
        "close-connection",
        &conn.close_connection,
        &config_keys,
    );

    let mut targeted: BTreeSet<&str> = BTreeSet::new();
    for (i, rule) in sdd.transformation.iter().enumerate() {
        let path = format!("/sensor-device/transformation/rule[{i}]");
        let field = field_index
            .get(rule.target.as_str())
            .map(|&idx| &sdd.data_structure[idx]);
        if field.is_none() {
            out.push(
                UnknownTransformTarget,
                &path,
                format!("target `{}` is not a data-structure field", rule.target),
            );
        }
        if !targeted.insert(&rule.target) {
            out.push(
                DupTransformTarget,
                &path,
                format!("field `{}` is targeted by more than one rule", rule.target),
            );
        }
        match &rule.extractor {
            Extractor::Delimited { .. } => {}
            Extractor::KeyValue {
                key,
                pair_separator,
                kv_separator,
            } => {
                if key.is_empty() {
                    out.push(BadSeparator, &path, "key-value extractor needs a key");
                }
                if pair_separator == kv_separator {
                    out.push(
                        BadSeparator,
                        &path,
                        "pair and key/value separators must differ",
                    );
                }
            }
            Extractor::Binary {
                offset,
                length,
                encoding,
            } => {
                let fixed_width = matches!(
                    encoding,
                    BinaryEncoding::Ieee754F64BigEndian | BinaryEncoding::I64BigEndian
                );
                if *length == 0 || (fixed_width && *length != 8) {
                    out.push(
                        BadBinaryLength,
                        &path,
                        format!("length {length} is not valid for encoding `{encoding}`"),
                    );
                }
                if let Framing::Fixed(n) = conn.framing {
                    if offset.checked_add(*length).is_none_or(|end| end > n) {
                        out.push(
                            FrameOverflow,
                            &path,
                            format!("bytes {offset}..{offset}+{length} exceed the {n}-byte frame"),
                        );
                    }
                }
                if let Some(field) = field {
                    if !encoding_accepts(*encoding, field.value_type) {
                        out.push(
                            EncodingType,
                            &path,
                            format!(
                                "encoding `{encoding}` cannot produce a `{}` value",
                                field.value_type
                            ),
                        );
                    }
                }
            }
        }
    }
    for (i, field) in sdd.data_structure.iter().enumerate() {
        if !targeted.contains(field.name.as_str()) {
            out.push(
                UntransformedField,
                format!("/sensor-device/data-structure/field[{i}]"),
                format!("field `{}` has no transformation rule", field.name),
            );
        }
    }

    out.0
}
