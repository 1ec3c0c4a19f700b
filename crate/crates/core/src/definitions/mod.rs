//! Device definitions (SDD) and virtual sensor definitions (VSD), plus the
//! wrapper connection requests derived from the latter.

mod sdd;
mod validate;
mod vsd;
mod wcr;
pub(crate) mod xml;

use thiserror::Error;

pub use sdd::{
    parse_sdd, parse_sdd_unchecked, serialize_sdd, BinaryEncoding, ConfigProperty,
    ConnStep, ConnectionSpec, Extractor, FieldSpec, Framing, LibraryRequirement, OsTag,
    SensorDeviceDefinition, StepVerb, TransformRule, Transport, ValueType,
};
pub use validate::{validate_sdd, Violation, ViolationCode};
pub use vsd::{parse_vsd, serialize_vsd, StreamSource, VirtualSensorDefinition, WindowSpec};
pub use wcr::{canonical_key, make_wcr, WrapperConnectionRequest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DefinitionError {
    #[error("malformed XML at line {line}: {message}")]
    MalformedXml { line: usize, message: String },
    #[error("schema violation at line {line} ({path}): {message}")]
    SchemaViolation {
        line: usize,
        path: String,
        message: String,
    },
    #[error("invariant violated: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvariantViolation { violations: Vec<Violation> },
}

/// `[A-Za-z0-9_-]{1,64}`
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 64
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Dotted numeric version such as `1.0.0`.
pub fn is_dotted_version(s: &str) -> bool {
    !s.is_empty()
        && s
            .split('.')
            .all(|part| !part.is_empty() && part.bytes().all(|b| b.is_ascii_digit()))
}

/// Compares dotted versions numerically; missing trailing components count as zero.
pub fn compare_versions(a: &str, b: &str) -> std::cmp::Ordering {
    fn parts(v: &str) -> Vec<u128> {
        let mut p: Vec<u128> = v.split('.').map(|s| s.parse().unwrap_or(0)).collect();
        while p.len() > 1 && p.last() == Some(&0) {
            p.pop();
        }
        p
    }
    parts(a).cmp(&parts(b))
}
