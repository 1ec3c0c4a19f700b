use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::validate::validate_sdd;
use super::xml::{parse_document, Element, XmlWriter};
use super::DefinitionError;

/// The five-segment declarative description of one sensor device type.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorDeviceDefinition {
    pub name: String,
    pub version: String,
    pub description: String,
    pub libraries: Vec<LibraryRequirement>,
    pub data_structure: Vec<FieldSpec>,
    pub system_config: Vec<ConfigProperty>,
    pub connection: ConnectionSpec,
    pub transformation: Vec<TransformRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibraryRequirement {
    pub package_name: String,
    pub source_url: String,
    pub platform_tag: String,
    /// Lowercase hex SHA-256 of the artifact.
    pub checksum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigProperty {
    pub key: String,
    pub per_os_default: BTreeMap<OsTag, String>,
    pub required: bool,
    pub overridable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionSpec {
    pub transport: Transport,
    pub initiate_connection: Vec<ConnStep>,
    pub initiate_retrieval: Vec<ConnStep>,
    pub framing: Framing,
    pub sampling_interval_ms: Option<u64>,
    pub close_connection: Vec<ConnStep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnStep {
    pub verb: StepVerb,
    pub argument: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformRule {
    pub target: String,
    pub extractor: Extractor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extractor {
    Delimited {
        delimiter: char,
        index: usize,
    },
    KeyValue {
        key: String,
        pair_separator: char,
        kv_separator: char,
    },
    Binary {
        offset: usize,
        length: usize,
        encoding: BinaryEncoding,
    },
}

/// Declares a closed string-valued enum with `Display`/`FromStr` over its wire names.
macro_rules! wire_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "`{}` is not one of: {}",
                        other,
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

wire_enum!(ValueType {
    Int64 => "int64",
    Float64 => "float64",
    Text => "text",
    Boolean => "boolean",
});

wire_enum!(
    /// Operating systems a configuration default can target.
    OsTag {
        Linux => "linux",
        Windows => "windows",
        Macos => "macos",
    }
);

wire_enum!(Transport {
    TcpPushListen => "tcp-push-listen",
    TcpPollConnect => "tcp-poll-connect",
    FileTail => "file-tail",
});

wire_enum!(StepVerb {
    Bind => "bind",
    Connect => "connect",
    SendLiteral => "send-literal",
    ExpectLiteral => "expect-literal",
    OpenPath => "open-path",
    Close => "close",
});

wire_enum!(BinaryEncoding {
    AsciiNumber => "ascii-number",
    Ieee754F64BigEndian => "ieee754-f64-big-endian",
    I64BigEndian => "i64-big-endian",
    Utf8 => "utf8",
});

/// How one device record is delimited on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Framing {
    LineDelimited,
    LengthPrefixedU16BigEndian,
    Fixed(usize),
}

impl fmt::Display for Framing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Framing::LineDelimited => f.write_str("line-delimited"),
            Framing::LengthPrefixedU16BigEndian => f.write_str("length-prefixed-u16-big-endian"),
            Framing::Fixed(n) => write!(f, "fixed({n})"),
        }
    }
}

impl FromStr for Framing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "line-delimited" => Ok(Framing::LineDelimited),
            "length-prefixed-u16-big-endian" => Ok(Framing::LengthPrefixedU16BigEndian),
            _ => {
                let n = s
                    .strip_prefix("fixed(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .filter(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| {
                        format!(
                            "`{s}` is not one of: line-delimited, \
                             length-prefixed-u16-big-endian, fixed(<bytes>)"
                        )
                    })?;
                if n == 0 {
                    return Err("fixed framing needs a positive frame size".into());
                }
                Ok(Framing::Fixed(n))
            }
        }
    }
}

impl Serialize for Framing {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Framing {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn parse_enum<T: FromStr<Err = String>>(el: &Element, attr: &str) -> Result<T, DefinitionError> {
    el.required_attr(attr)?
        .parse()
        .map_err(|e: String| el.schema_error(format!("attribute `{attr}`: {e}")))
}

fn parse_bool(el: &Element, attr: &str) -> Result<bool, DefinitionError> {
    match el.attr(attr) {
        None => Ok(false),
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(other) => Err(el.schema_error(format!(
            "attribute `{attr}` must be `true` or `false`, got `{other}`"
        ))),
    }
}

fn parse_uint<T: FromStr>(el: &Element, attr: &str) -> Result<T, DefinitionError> {
    let raw = el.required_attr(attr)?;
    if raw.is_empty() || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return Err(el.schema_error(format!("attribute `{attr}` must be a non-negative integer")));
    }
    raw.parse()
        .map_err(|_| el.schema_error(format!("attribute `{attr}` is out of range")))
}

fn parse_char(el: &Element, attr: &str) -> Result<char, DefinitionError> {
    let raw = el.required_attr(attr)?;
    let mut chars = raw.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(el.schema_error(format!("attribute `{attr}` must be a single character"))),
    }
}

fn parse_steps(segment: &Element) -> Result<Vec<ConnStep>, DefinitionError> {
    segment.only_attrs(&[])?;
    segment.no_text()?;
    segment.only_children(&["step"])?;
    segment
        .children
        .iter()
        .map(|step| {
            step.only_attrs(&["verb", "argument"])?;
            step.no_text()?;
            step.only_children(&[])?;
            Ok(ConnStep {
                verb: parse_enum(step, "verb")?,
                argument: step.attr("argument").unwrap_or_default().to_string(),
            })
        })
        .collect()
}

fn parse_extractor(rule: &Element) -> Result<Extractor, DefinitionError> {
    let mut children = rule.children.iter();
    let el = match (children.next(), children.next()) {
        (Some(el), None) => el,
        _ => return Err(rule.schema_error("a rule holds exactly one extractor element")),
    };
    el.no_text()?;
    el.only_children(&[])?;
    match el.name.as_str() {
        "delimited" => {
            el.only_attrs(&["delimiter", "index"])?;
            Ok(Extractor::Delimited {
                delimiter: parse_char(el, "delimiter")?,
                index: parse_uint(el, "index")?,
            })
        }
        "key-value" => {
            el.only_attrs(&["key", "pair-separator", "kv-separator"])?;
            Ok(Extractor::KeyValue {
                key: el.required_attr("key")?.to_string(),
                pair_separator: parse_char(el, "pair-separator")?,
                kv_separator: parse_char(el, "kv-separator")?,
            })
        }
        "binary" => {
            el.only_attrs(&["offset", "length", "encoding"])?;
            Ok(Extractor::Binary {
                offset: parse_uint(el, "offset")?,
                length: parse_uint(el, "length")?,
                encoding: parse_enum(el, "encoding")?,
            })
        }
        other => Err(el.schema_error(format!("unknown extractor <{other}>"))),
    }
}

/// Parses the document structure without checking cross-field invariants.
///
/// Used by authoring tools that want the full violation list from
/// [`validate_sdd`] instead of the first failure.
pub fn parse_sdd_unchecked(document: &str) -> Result<SensorDeviceDefinition, DefinitionError> {
    let root = parse_document(document)?;
    if root.name != "sensor-device" {
        return Err(root.schema_error(format!(
            "root element must be <sensor-device>, found <{}>",
            root.name
        )));
    }
    root.only_attrs(&["name", "version"])?;
    root.no_text()?;
    root.only_children(&[
        "description",
        "libraries",
        "data-structure",
        "system-config",
        "connection",
        "transformation",
    ])?;

    let description = match root.optional_child("description")? {
        Some(d) => {
            d.only_attrs(&[])?;
            d.only_children(&[])?;
            d.text.clone()
        }
        None => String::new(),
    };

    let libs_el = root.single_child("libraries")?;
    libs_el.only_attrs(&[])?;
    libs_el.no_text()?;
    libs_el.only_children(&["library"])?;
    let libraries = libs_el
        .children
        .iter()
        .map(|lib| {
            lib.only_attrs(&["package", "source", "platform", "sha256"])?;
            lib.no_text()?;
            lib.only_children(&[])?;
            Ok(LibraryRequirement {
                package_name: lib.required_attr("package")?.to_string(),
                source_url: lib.required_attr("source")?.to_string(),
                platform_tag: lib.required_attr("platform")?.to_string(),
                checksum: lib.attr("sha256").map(str::to_string),
            })
        })
        .collect::<Result<Vec<_>, DefinitionError>>()?;

    let ds_el = root.single_child("data-structure")?;
    ds_el.only_attrs(&[])?;
    ds_el.no_text()?;
    ds_el.only_children(&["field"])?;
    let data_structure = ds_el
        .children
        .iter()
        .map(|f| {
            f.only_attrs(&["name", "type", "unit"])?;
            f.no_text()?;
            f.only_children(&[])?;
            Ok(FieldSpec {
                name: f.required_attr("name")?.to_string(),
                value_type: parse_enum(f, "type")?,
                unit: f.attr("unit").map(str::to_string),
            })
        })
        .collect::<Result<Vec<_>, DefinitionError>>()?;

    let sc_el = root.single_child("system-config")?;
    sc_el.only_attrs(&[])?;
    sc_el.no_text()?;
    sc_el.only_children(&["property"])?;
    let system_config = sc_el
        .children
        .iter()
        .map(|p| {
            p.only_attrs(&["key", "required", "overridable"])?;
            p.no_text()?;
            p.only_children(&["default"])?;
            let mut per_os_default = BTreeMap::new();
            for d in &p.children {
                d.only_attrs(&["os"])?;
                d.only_children(&[])?;
                let os: OsTag = parse_enum(d, "os")?;
                if per_os_default.insert(os, d.text.clone()).is_some() {
                    return Err(d.schema_error(format!("duplicate default for os `{os}`")));
                }
            }
            Ok(ConfigProperty {
                key: p.required_attr("key")?.to_string(),
                per_os_default,
                required: parse_bool(p, "required")?,
                overridable: parse_bool(p, "overridable")?,
            })
        })
        .collect::<Result<Vec<_>, DefinitionError>>()?;

    let conn_el = root.single_child("connection")?;
    conn_el.only_attrs(&["transport", "framing", "sampling-interval-ms"])?;
    conn_el.no_text()?;
    conn_el.only_children(&["initiate-connection", "initiate-retrieval", "close-connection"])?;
    let sampling_interval_ms = match conn_el.attr("sampling-interval-ms") {
        None => None,
        Some(_) => {
            let ms: u64 = parse_uint(conn_el, "sampling-interval-ms")?;
            if ms == 0 {
                return Err(conn_el.schema_error("sampling-interval-ms must be positive"));
            }
            Some(ms)
        }
    };
    let connection = ConnectionSpec {
        transport: parse_enum(conn_el, "transport")?,
        framing: parse_enum(conn_el, "framing")?,
        sampling_interval_ms,
        initiate_connection: parse_steps(conn_el.single_child("initiate-connection")?)?,
        initiate_retrieval: parse_steps(conn_el.single_child("initiate-retrieval")?)?,
        close_connection: parse_steps(conn_el.single_child("close-connection")?)?,
    };

    let tr_el = root.single_child("transformation")?;
    tr_el.only_attrs(&[])?;
    tr_el.no_text()?;
    tr_el.only_children(&["rule"])?;
    let transformation = tr_el
        .children
        .iter()
        .map(|rule| {
            rule.only_attrs(&["target"])?;
            rule.no_text()?;
            Ok(TransformRule {
                target: rule.required_attr("target")?.to_string(),
                extractor: parse_extractor(rule)?,
            })
        })
        .collect::<Result<Vec<_>, DefinitionError>>()?;

    Ok(SensorDeviceDefinition {
        name: root.required_attr("name")?.to_string(),
        version: root.required_attr("version")?.to_string(),
        description,
        libraries,
        data_structure,
        system_config,
        connection,
        transformation,
    })
}

/// Parses an SDD document and rejects it unless every invariant holds.
pub fn parse_sdd(document: &str) -> Result<SensorDeviceDefinition, DefinitionError> {
    let sdd = parse_sdd_unchecked(document)?;
    let violations = validate_sdd(&sdd);
    if violations.is_empty() {
        Ok(sdd)
    } else {
        Err(DefinitionError::InvariantViolation { violations })
    }
}

fn write_steps(w: &mut XmlWriter, segment: &str, steps: &[ConnStep]) {
    if steps.is_empty() {
        return w.empty(segment, &[]);
    }
    w.open(segment, &[]);
    for step in steps {
        if step.argument.is_empty() {
            w.empty("step", &[("verb", step.verb.as_str())]);
        } else {
            w.empty(
                "step",
                &[("verb", step.verb.as_str()), ("argument", &step.argument)],
            );
        }
    }
    w.close(segment);
}

/// Canonical serialization with a fixed element order and two-space indent.
pub fn serialize_sdd(sdd: &SensorDeviceDefinition) -> String {
    let mut w = XmlWriter::new();
    w.open(
        "sensor-device",
        &[("name", &sdd.name), ("version", &sdd.version)],
    );
    w.text_element("description", &[], &sdd.description);

    if sdd.libraries.is_empty() {
        w.empty("libraries", &[]);
    } else {
        w.open("libraries", &[]);
        for lib in &sdd.libraries {
            let mut attrs = vec![
                ("package", lib.package_name.as_str()),
                ("source", lib.source_url.as_str()),
                ("platform", lib.platform_tag.as_str()),
            ];
            if let Some(sum) = &lib.checksum {
                attrs.push(("sha256", sum));
            }
            w.empty("library", &attrs);
        }
        w.close("libraries");
    }

    w.open("data-structure", &[]);
    for f in &sdd.data_structure {
        let mut attrs = vec![("name", f.name.as_str()), ("type", f.value_type.as_str())];
        if let Some(unit) = &f.unit {
            attrs.push(("unit", unit));
        }
        w.empty("field", &attrs);
    }
    w.close("data-structure");

    if sdd.system_config.is_empty() {
        w.empty("system-config", &[]);
    } else {
        w.open("system-config", &[]);
        for p in &sdd.system_config {
            let attrs = [
                ("key", p.key.as_str()),
                ("required", if p.required { "true" } else { "false" }),
                ("overridable", if p.overridable { "true" } else { "false" }),
            ];
            if p.per_os_default.is_empty() {
                w.empty("property", &attrs);
                continue;
            }
            w.open("property", &attrs);
            for (os, value) in &p.per_os_default {
                w.text_element("default", &[("os", os.as_str())], value);
            }
            w.close("property");
        }
        w.close("system-config");
    }

    let conn = &sdd.connection;
    let framing = conn.framing.to_string();
    let sampling = conn.sampling_interval_ms.map(|ms| ms.to_string());
    let mut attrs = vec![
        ("transport", conn.transport.as_str()),
        ("framing", framing.as_str()),
    ];
    if let Some(ms) = &sampling {
        attrs.push(("sampling-interval-ms", ms));
    }
    w.open("connection", &attrs);
    write_steps(&mut w, "initiate-connection", &conn.initiate_connection);
    write_steps(&mut w, "initiate-retrieval", &conn.initiate_retrieval);
    write_steps(&mut w, "close-connection", &conn.close_connection);
    w.close("connection");

    w.open("transformation", &[]);
    for rule in &sdd.transformation {
        w.open("rule", &[("target", &rule.target)]);
        match &rule.extractor {
            Extractor::Delimited { delimiter, index } => w.empty(
                "delimited",
                &[
                    ("delimiter", &delimiter.to_string()),
                    ("index", &index.to_string()),
                ],
            ),
            Extractor::KeyValue {
                key,
                pair_separator,
                kv_separator,
            } => w.empty(
                "key-value",
                &[
                    ("key", key),
                    ("pair-separator", &pair_separator.to_string()),
                    ("kv-separator", &kv_separator.to_string()),
                ],
            ),
            Extractor::Binary {
                offset,
                length,
                encoding,
            } => w.empty(
                "binary",
                &[
                    ("offset", &offset.to_string()),
                    ("length", &length.to_string()),
                    ("encoding", encoding.as_str()),
                ],
            ),
        }
        w.close("rule");
    }
    w.close("transformation");

    w.close("sensor-device");
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<sensor-device name="Probe" version="1.0.0">
  <libraries/>
  <data-structure>
    <field name="t" type="float64" unit="celsius"/>
  </data-structure>
  <system-config>
    <property key="serialPort" required="true" overridable="true">
      <default os="linux">/dev/ttyACM0</default>
      <default os="windows">COM3</default>
    </property>
  </system-config>
  <connection transport="file-tail" framing="line-delimited">
    <initiate-connection>
      <step verb="open-path" argument="${serialPort}"/>
    </initiate-connection>
    <initiate-retrieval/>
    <close-connection>
      <step verb="close"/>
    </close-connection>
  </connection>
  <transformation>
    <rule target="t">
      <delimited delimiter="," index="0"/>
    </rule>
  </transformation>
</sensor-device>
"#;

    #[test]
    fn parses_minimal_document() {
        let sdd = parse_sdd(MINIMAL).unwrap();
        assert_eq!(sdd.name, "Probe");
        assert_eq!(sdd.description, "");
        assert!(sdd.libraries.is_empty());
        let port = &sdd.system_config[0];
        assert_eq!(port.per_os_default[&OsTag::Linux], "/dev/ttyACM0");
        assert_eq!(port.per_os_default[&OsTag::Windows], "COM3");
        assert_eq!(sdd.connection.transport, Transport::FileTail);
    }

    #[test]
    fn canonical_output_is_stable_and_reparses() {
        let sdd = parse_sdd(MINIMAL).unwrap();
        let text = serialize_sdd(&sdd);
        assert_eq!(parse_sdd(&text).unwrap(), sdd);
        assert_eq!(serialize_sdd(&parse_sdd(&text).unwrap()), text);
        assert!(text.contains("  <libraries/>\n"));
    }

    #[test]
    fn unknown_enum_values_are_rejected() {
        let doc = MINIMAL.replace("type=\"float64\"", "type=\"float32\"");
        let err = parse_sdd(&doc).unwrap_err();
        match err {
            DefinitionError::SchemaViolation { line, path, .. } => {
                assert_eq!(line, 5);
                assert_eq!(path, "/sensor-device/data-structure/field");
            }
            other => panic!("{other:?}"),
        }
        let doc = MINIMAL.replace("file-tail", "udp");
        assert!(matches!(
            parse_sdd(&doc),
            Err(DefinitionError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn missing_segment_is_a_schema_violation() {
        let doc = MINIMAL.replace("  <libraries/>\n", "");
        let err = parse_sdd(&doc).unwrap_err();
        assert!(err.to_string().contains("missing segment <libraries>"), "{err}");
    }

    #[test]
    fn unknown_elements_and_attributes_are_rejected() {
        let doc = MINIMAL.replace("<libraries/>", "<libraries/><extras/>");
        assert!(matches!(
            parse_sdd(&doc),
            Err(DefinitionError::SchemaViolation { .. })
        ));
        let doc = MINIMAL.replace("index=\"0\"", "index=\"0\" colour=\"red\"");
        assert!(matches!(
            parse_sdd(&doc),
            Err(DefinitionError::SchemaViolation { .. })
        ));
        let doc = MINIMAL.replace("index=\"0\"", "index=\"-1\"");
        assert!(matches!(
            parse_sdd(&doc),
            Err(DefinitionError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn transform_to_missing_field_is_an_invariant_violation() {
        let doc = MINIMAL.replace("rule target=\"t\"", "rule target=\"humidity\"");
        match parse_sdd(&doc).unwrap_err() {
            DefinitionError::InvariantViolation { violations } => {
                assert!(violations
                    .iter()
                    .any(|v| v.path == "/sensor-device/transformation/rule[0]"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn framing_text_forms() {
        for f in [
            Framing::LineDelimited,
            Framing::LengthPrefixedU16BigEndian,
            Framing::Fixed(12),
        ] {
            assert_eq!(f.to_string().parse::<Framing>().unwrap(), f);
        }
        assert!("fixed(0)".parse::<Framing>().is_err());
        assert!("fixed()".parse::<Framing>().is_err());
        assert!("fixed(+3)".parse::<Framing>().is_err());
        assert!("lines".parse::<Framing>().is_err());
    }
}
