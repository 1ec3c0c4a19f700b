use std::collections::BTreeSet;

use super::xml::{parse_document, Element, XmlWriter};
use super::{is_identifier, DefinitionError};

/// Deployment descriptor for one virtual sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualSensorDefinition {
    pub name: String,
    pub stream_sources: Vec<StreamSource>,
    pub window: Option<WindowSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSource {
    pub alias: String,
    pub wrapper_name: String,
    pub init_params: Vec<(String, String)>,
}

/// Count-based sliding window: the last `size` elements, refreshed every `slide` arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub size: usize,
    pub slide: usize,
}

impl WindowSpec {
    pub fn new(size: usize, slide: usize) -> Option<Self> {
        (1 <= slide && slide <= size).then_some(WindowSpec { size, slide })
    }
}

fn parse_count(el: &Element, attr: &str) -> Result<usize, DefinitionError> {
    let raw = el.required_attr(attr)?;
    if raw.is_empty() || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return Err(el.schema_error(format!("attribute `{attr}` must be a positive integer")));
    }
    raw.parse()
        .map_err(|_| el.schema_error(format!("attribute `{attr}` is out of range")))
}

fn parse_source(el: &Element) -> Result<StreamSource, DefinitionError> {
    el.only_attrs(&["alias"])?;
    el.no_text()?;
    el.only_children(&["address"])?;
    let alias = el.required_attr("alias")?;
    if !is_identifier(alias) {
        return Err(el.schema_error(format!("alias `{alias}` is not an identifier")));
    }
    let address = el.single_child("address")?;
    address.only_attrs(&["wrapper"])?;
    address.no_text()?;
    address.only_children(&["predicate"])?;
    let wrapper = address.required_attr("wrapper")?;
    if !is_identifier(wrapper) {
        return Err(address.schema_error(format!("wrapper `{wrapper}` is not an identifier")));
    }
    let mut seen = BTreeSet::new();
    let mut init_params = Vec::new();
    for p in &address.children {
        p.only_attrs(&["key"])?;
        p.only_children(&[])?;
        let key = p.required_attr("key")?;
        if key.is_empty() {
            return Err(p.schema_error("predicate key is empty"));
        }
        if !seen.insert(key.to_string()) {
            return Err(p.schema_error(format!("duplicate predicate key `{key}`")));
        }
        init_params.push((key.to_string(), p.text.clone()));
    }
    Ok(StreamSource {
        alias: alias.to_string(),
        wrapper_name: wrapper.to_string(),
        init_params,
    })
}

/// Parses a `virtual-sensor` document.
pub fn parse_vsd(document: &str) -> Result<VirtualSensorDefinition, DefinitionError> {
    let root = parse_document(document)?;
    if root.name != "virtual-sensor" {
        return Err(root.schema_error(format!(
            "root element must be <virtual-sensor>, found <{}>",
            root.name
        )));
    }
    root.only_attrs(&["name"])?;
    root.no_text()?;
    root.only_children(&["window", "streams"])?;
    let name = root.required_attr("name")?;
    if !is_identifier(name) {
        return Err(root.schema_error(format!("name `{name}` is not an identifier")));
    }

    let window = match root.optional_child("window")? {
        None => None,
        Some(w) => {
            w.only_attrs(&["size", "slide"])?;
            w.no_text()?;
            w.only_children(&[])?;
            let size = parse_count(w, "size")?;
            let slide = parse_count(w, "slide")?;
            Some(
                WindowSpec::new(size, slide)
                    .ok_or_else(|| w.schema_error("window needs 1 <= slide <= size"))?,
            )
        }
    };

    let streams = root.single_child("streams")?;
    streams.only_attrs(&[])?;
    streams.no_text()?;
    streams.only_children(&["source"])?;
    if streams.children.is_empty() {
        return Err(streams.schema_error("at least one stream source is required"));
    }
    let mut aliases = BTreeSet::new();
    let mut stream_sources = Vec::new();
    for el in &streams.children {
        let source = parse_source(el)?;
        if !aliases.insert(source.alias.clone()) {
            return Err(el.schema_error(format!("duplicate source alias `{}`", source.alias)));
        }
        stream_sources.push(source);
    }

    Ok(VirtualSensorDefinition {
        name: name.to_string(),
        stream_sources,
        window,
    })
}

/// Canonical serialization of a VSD.
pub fn serialize_vsd(vsd: &VirtualSensorDefinition) -> String {
    let mut w = XmlWriter::new();
    w.open("virtual-sensor", &[("name", &vsd.name)]);
    if let Some(win) = vsd.window {
        w.empty(
            "window",
            &[("size", &win.size.to_string()), ("slide", &win.slide.to_string())],
        );
    }
    w.open("streams", &[]);
    for s in &vsd.stream_sources {
        w.open("source", &[("alias", &s.alias)]);
        if s.init_params.is_empty() {
            w.empty("address", &[("wrapper", &s.wrapper_name)]);
        } else {
            w.open("address", &[("wrapper", &s.wrapper_name)]);
            for (k, v) in &s.init_params {
                w.text_element("predicate", &[("key", k)], v);
            }
            w.close("address");
        }
        w.close("source");
    }
    w.close("streams");
    w.close("virtual-sensor");
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(sources: &str) -> String {
        format!(
            "<virtual-sensor name=\"vs1\">\n  <window size=\"3\" slide=\"1\"/>\n  <streams>\n{sources}  </streams>\n</virtual-sensor>\n"
        )
    }

    #[test]
    fn parses_address_and_predicates() {
        let vsd = parse_vsd(&doc(
            "    <source alias=\"s1\">\n      <address wrapper=\"AndroidWrapper\">\n        <predicate key=\"port\">9005</predicate>\n      </address>\n    </source>\n",
        ))
        .unwrap();
        assert_eq!(vsd.window, WindowSpec::new(3, 1));
        let src = &vsd.stream_sources[0];
        assert_eq!(src.wrapper_name, "AndroidWrapper");
        assert_eq!(src.init_params, vec![("port".to_string(), "9005".to_string())]);
        assert_eq!(parse_vsd(&serialize_vsd(&vsd)).unwrap(), vsd);
    }

    #[test]
    fn duplicate_alias_is_rejected() {
        let src = "    <source alias=\"s1\"><address wrapper=\"A\"/></source>\n";
        let err = parse_vsd(&doc(&format!("{src}{src}"))).unwrap_err();
        assert!(matches!(err, DefinitionError::SchemaViolation { .. }), "{err:?}");
    }

    #[test]
    fn empty_streams_and_bad_windows_are_rejected() {
        assert!(parse_vsd(&doc("")).is_err());
        let bad = doc("    <source alias=\"s1\"><address wrapper=\"A\"/></source>\n")
            .replace("slide=\"1\"", "slide=\"4\"");
        assert!(parse_vsd(&bad).is_err());
    }

    #[test]
    fn predicate_order_is_preserved() {
        let vsd = parse_vsd(&doc(
            "    <source alias=\"s\"><address wrapper=\"A\"><predicate key=\"b\">2</predicate><predicate key=\"a\">1</predicate></address></source>\n",
        ))
        .unwrap();
        let keys: Vec<_> = vsd.stream_sources[0]
            .init_params
            .iter()
            .map(|(k, _)| k.as_str())
            .collect();
        assert_eq!(keys, ["b", "a"]);
    }
}
