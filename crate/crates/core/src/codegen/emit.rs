use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::definitions::{BinaryEncoding, Extractor, Framing, OsTag, SensorDeviceDefinition, ValueType};

use super::plan::{compile_plan, CompiledStep, ExecutionPlan, TransportBinding};
use super::template::{scan_placeholders, WrapperTemplate};
use super::EmitError;

const BODY: &str = "        ";

fn java_string(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// A Java expression producing exactly `bytes`.
fn java_bytes(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(text) => format!("Channel.utf8({})", java_string(text)),
        Err(_) => {
            let items: Vec<String> = bytes.iter().map(|b| (*b as i8).to_string()).collect();
            format!("new byte[] {{ {} }}", items.join(", "))
        }
    }
}

fn java_type(value_type: ValueType) -> &'static str {
    match value_type {
        ValueType::Int64 => "bigint",
        ValueType::Float64 => "double",
        ValueType::Text => "varchar(255)",
        ValueType::Boolean => "boolean",
    }
}

fn java_framing(framing: Framing) -> String {
    match framing {
        Framing::LineDelimited => "Channel.Framing.lineDelimited()".into(),
        Framing::LengthPrefixedU16BigEndian => "Channel.Framing.lengthPrefixedU16()".into(),
        Framing::Fixed(n) => format!("Channel.Framing.fixed({n})"),
    }
}

fn java_encoding(encoding: BinaryEncoding) -> &'static str {
    match encoding {
        BinaryEncoding::AsciiNumber => "Extract.Encoding.ASCII_NUMBER",
        BinaryEncoding::Ieee754F64BigEndian => "Extract.Encoding.IEEE754_F64_BIG_ENDIAN",
        BinaryEncoding::I64BigEndian => "Extract.Encoding.I64_BIG_ENDIAN",
        BinaryEncoding::Utf8 => "Extract.Encoding.UTF8",
    }
}

fn conversion(value_type: ValueType) -> &'static str {
    match value_type {
        ValueType::Int64 => "asLong",
        ValueType::Float64 => "asDouble",
        ValueType::Text => "asText",
        ValueType::Boolean => "asBoolean",
    }
}

fn class_name(wrapper_name: &str) -> String {
    let mut name: String = wrapper_name
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|part| !part.is_empty())
        .map(|part| {
            let mut chars = part.chars();
            let first = chars.next().map(|c| c.to_ascii_uppercase());
            first.into_iter().chain(chars).collect::<String>()
        })
        .collect();
    if name.is_empty() || name.starts_with(|c: char| c.is_ascii_digit()) {
        name.insert(0, 'W');
    }
    if !name.ends_with("Wrapper") {
        name.push_str("Wrapper");
    }
    name
}

fn step_lines(out: &mut String, indent: &str, steps: &[CompiledStep]) {
    for step in steps {
        match step {
            CompiledStep::Send(bytes) => {
                let _ = writeln!(out, "{indent}channel.send({});", java_bytes(bytes));
            }
            CompiledStep::Expect(bytes) => {
                let _ = writeln!(out, "{indent}channel.expect({});", java_bytes(bytes));
            }
            CompiledStep::Close => {}
        }
    }
}

fn output_format(plan: &ExecutionPlan) -> String {
    plan.output_schema
        .iter()
        .map(|f| match &f.unit {
            Some(unit) => format!(
                "{BODY}new DataField({}, {}, {}),",
                java_string(&f.name),
                java_string(java_type(f.value_type)),
                java_string(unit)
            ),
            None => format!(
                "{BODY}new DataField({}, {}),",
                java_string(&f.name),
                java_string(java_type(f.value_type))
            ),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn initialise_body(plan: &ExecutionPlan, os: OsTag) -> String {
    let mut out = String::new();
    let config: Vec<String> = plan
        .resolved_config
        .iter()
        .map(|(k, v)| format!("{k}={}", java_string(v)))
        .collect();
    let _ = writeln!(out, "{BODY}// system configuration ({os}): {}", if config.is_empty() {
        "none".to_string()
    } else {
        config.join(", ")
    });
    let _ = writeln!(out, "{BODY}try {{");
    let framing = java_framing(plan.framing);
    let open = match &plan.binding {
        TransportBinding::PushListen { addr } => format!(
            "Channel.listen({}, {}, {framing})",
            java_string(&addr.ip().to_string()),
            addr.port()
        ),
        TransportBinding::PollConnect { host, port } => {
            format!("Channel.connect({}, {port}, {framing})", java_string(host))
        }
        TransportBinding::FileTail { path } => format!(
            "Channel.tail({}, {framing})",
            java_string(&path.to_string_lossy())
        ),
    };
    let _ = writeln!(out, "{BODY}    channel = {open};");
    step_lines(&mut out, &format!("{BODY}    "), &plan.connect_steps);
    if matches!(plan.binding, TransportBinding::PushListen { .. }) {
        for step in &plan.retrieval_steps {
            match step {
                CompiledStep::Send(b) => {
                    let _ = writeln!(out, "{BODY}    channel.onAccept(Channel.send({}));", java_bytes(b));
                }
                CompiledStep::Expect(b) => {
                    let _ = writeln!(out, "{BODY}    channel.onAccept(Channel.expect({}));", java_bytes(b));
                }
                CompiledStep::Close => {}
            }
        }
    }
    let _ = writeln!(out, "{BODY}    return true;");
    let _ = writeln!(out, "{BODY}}} catch (IOException e) {{");
    let _ = writeln!(out, "{BODY}    channel = null;");
    let _ = writeln!(out, "{BODY}    return false;");
    let _ = write!(out, "{BODY}}}");
    out
}

fn run_body(plan: &ExecutionPlan) -> String {
    let mut out = String::new();
    let inner = format!("{BODY}    ");
    let _ = writeln!(out, "{BODY}while (isActive()) {{");
    if let Some(ms) = plan.sampling_interval_ms {
        let _ = writeln!(out, "{inner}try {{");
        let _ = writeln!(out, "{inner}    Thread.sleep({ms}L);");
        let _ = writeln!(out, "{inner}}} catch (InterruptedException e) {{");
        let _ = writeln!(out, "{inner}    return;");
        let _ = writeln!(out, "{inner}}}");
    }
    let _ = writeln!(out, "{inner}byte[] record;");
    let _ = writeln!(out, "{inner}try {{");
    if !matches!(plan.binding, TransportBinding::PushListen { .. }) {
        step_lines(&mut out, &format!("{inner}    "), &plan.retrieval_steps);
    }
    let _ = writeln!(out, "{inner}    record = channel.nextRecord();");
    let _ = writeln!(out, "{inner}}} catch (IOException e) {{");
    let _ = writeln!(out, "{inner}    continue;");
    let _ = writeln!(out, "{inner}}}");
    let _ = writeln!(out, "{inner}if (record == null) {{");
    let _ = writeln!(out, "{inner}    continue;");
    let _ = writeln!(out, "{inner}}}");
    let _ = writeln!(
        out,
        "{inner}Serializable[] values = new Serializable[{}];",
        plan.transform_program.len()
    );
    let _ = writeln!(out, "{inner}try {{");
    for (i, step) in plan.transform_program.iter().enumerate() {
        let extract = match &step.extractor {
            Extractor::Delimited { delimiter, index } => format!(
                "Extract.delimited(record, {}, {index})",
                java_string(&delimiter.to_string())
            ),
            Extractor::KeyValue {
                key,
                pair_separator,
                kv_separator,
            } => format!(
                "Extract.keyValue(record, {}, {}, {})",
                java_string(key),
                java_string(&pair_separator.to_string()),
                java_string(&kv_separator.to_string())
            ),
            Extractor::Binary {
                offset,
                length,
                encoding,
            } => format!(
                "Extract.binary(record, {offset}, {length}, {})",
                java_encoding(*encoding)
            ),
        };
        let _ = writeln!(
            out,
            "{inner}    values[{i}] = {extract}.{}(); // {}",
            conversion(step.value_type),
            step.field
        );
    }
    let _ = writeln!(out, "{inner}}} catch (Extract.MalformedRecord e) {{");
    let _ = writeln!(out, "{inner}    continue;");
    let _ = writeln!(out, "{inner}}}");
    let _ = writeln!(
        out,
        "{inner}postStreamElement(new StreamElement(OUTPUT_FORMAT, values, System.currentTimeMillis()));"
    );
    let _ = write!(out, "{BODY}}}");
    out
}

fn finalise_body(plan: &ExecutionPlan) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{BODY}if (channel == null) {{");
    let _ = writeln!(out, "{BODY}    return;");
    let _ = writeln!(out, "{BODY}}}");
    if plan.close_steps.iter().any(|s| !matches!(s, CompiledStep::Close)) {
        let _ = writeln!(out, "{BODY}try {{");
        step_lines(&mut out, &format!("{BODY}    "), &plan.close_steps);
        let _ = writeln!(out, "{BODY}}} catch (IOException e) {{");
        let _ = writeln!(out, "{BODY}    // the channel is closed below either way");
        let _ = writeln!(out, "{BODY}}}");
    }
    let _ = writeln!(out, "{BODY}channel.close();");
    let _ = write!(out, "{BODY}channel = null;");
    out
}

/// Values the generator can supply, keyed by placeholder name.
fn fills(sdd: &SensorDeviceDefinition, plan: &ExecutionPlan, os: OsTag) -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("wrapper_name", sdd.name.clone()),
        ("class_name", class_name(&sdd.name)),
        ("sdd_version", sdd.version.clone()),
        ("output_format", output_format(plan)),
        ("initialise_body", initialise_body(plan, os)),
        ("run_body", run_body(plan)),
        ("finalise_body", finalise_body(plan)),
    ])
}

/// Renders wrapper source for `template` from a definition.
pub fn emit_source(
    sdd: &SensorDeviceDefinition,
    template: &WrapperTemplate,
    os: OsTag,
    overrides: &BTreeMap<String, String>,
) -> Result<String, EmitError> {
    let plan = compile_plan(sdd, os, overrides)?;
    let values = fills(sdd, &plan, os);
    for name in &template.required_placeholders {
        if !values.contains_key(name.as_str()) {
            return Err(EmitError::UnboundPlaceholder(name.clone()));
        }
    }
    // WrapperTemplate::new already checked the syntax
    let names = scan_placeholders(&template.template_text)
        .map_err(|e| EmitError::UnboundPlaceholder(e.to_string()))?;
    let mut out = String::with_capacity(template.template_text.len() * 2);
    let mut rest = template.template_text.as_str();
    for name in names {
        let start = rest.find("{{").expect("scanned placeholder");
        out.push_str(&rest[..start]);
        let value = values
            .get(name)
            .ok_or_else(|| EmitError::UnboundPlaceholder(name.to_string()))?;
        out.push_str(value);
        rest = &rest[start + 4 + name.len()..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_names() {
        assert_eq!(class_name("SunSPOT"), "SunSPOTWrapper");
        assert_eq!(class_name("AndroidWrapper"), "AndroidWrapper");
        assert_eq!(class_name("serial-probe_v2"), "SerialProbeV2Wrapper");
        assert_eq!(class_name("9dof"), "W9dofWrapper");
    }

    #[test]
    fn java_literals() {
        assert_eq!(java_string("a\"b\\\n\u{1}"), "\"a\\\"b\\\\\\n\\u0001\"");
        assert_eq!(java_bytes(b"POLL\n"), "Channel.utf8(\"POLL\\n\")");
        assert_eq!(java_bytes(&[0xff, 1]), "new byte[] { -1, 1 }");
    }
}
