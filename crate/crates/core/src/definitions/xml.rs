//! Minimal element tree over `quick-xml`, with line numbers kept for error
//! locators, plus a small canonical writer.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::DefinitionError;

#[derive(Debug, Clone)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
    pub text: String,
    pub line: usize,
    pub path: String,
}

impl Element {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn schema_error(&self, message: impl Into<String>) -> DefinitionError {
        DefinitionError::SchemaViolation {
            line: self.line,
            path: self.path.clone(),
            message: message.into(),
        }
    }

    pub fn required_attr(&self, key: &str) -> Result<&str, DefinitionError> {
        self.attr(key)
            .ok_or_else(|| self.schema_error(format!("missing attribute `{key}`")))
    }

    /// Rejects attributes outside `allowed`.
    pub fn only_attrs(&self, allowed: &[&str]) -> Result<(), DefinitionError> {
        match self.attrs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            Some((k, _)) => Err(self.schema_error(format!("unknown attribute `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn no_text(&self) -> Result<(), DefinitionError> {
        if self.text.trim().is_empty() {
            Ok(())
        } else {
            Err(self.schema_error("unexpected text content"))
        }
    }

    /// Rejects children outside `allowed`.
    pub fn only_children(&self, allowed: &[&str]) -> Result<(), DefinitionError> {
        match self
            .children
            .iter()
            .find(|c| !allowed.contains(&c.name.as_str()))
        {
            Some(c) => Err(c.schema_error(format!("unknown element <{}>", c.name))),
            None => Ok(()),
        }
    }

    /// Exactly one child with the given name.
    pub fn single_child(&self, name: &str) -> Result<&Element, DefinitionError> {
        let mut found = self.children.iter().filter(|c| c.name == name);
        match (found.next(), found.next()) {
            (Some(c), None) => Ok(c),
            (None, _) => Err(self.schema_error(format!("missing segment <{name}>"))),
            (Some(_), Some(dup)) => Err(dup.schema_error(format!("duplicate <{name}>"))),
        }
    }

    pub fn optional_child(&self, name: &str) -> Result<Option<&Element>, DefinitionError> {
        let mut found = self.children.iter().filter(|c| c.name == name);
        match (found.next(), found.next()) {
            (c, None) => Ok(c),
            (Some(_), Some(dup)) => Err(dup.schema_error(format!("duplicate <{name}>"))),
            (None, Some(_)) => unreachable!(),
        }
    }
}

fn malformed(line: usize, message: impl Into<String>) -> DefinitionError {
    DefinitionError::MalformedXml {
        line,
        message: message.into(),
    }
}

struct LineCounter<'a> {
    input: &'a [u8],
    pos: usize,
    line: usize,
}

impl LineCounter<'_> {
    fn line_at(&mut self, offset: usize) -> usize {
        let offset = offset.min(self.input.len());
        if offset >= self.pos {
            self.line += self.input[self.pos..offset]
                .iter()
                .filter(|b| **b == b'\n')
                .count();
        } else {
            self.line = 1 + self.input[..offset].iter().filter(|b| **b == b'\n').count();
        }
        self.pos = offset;
        self.line
    }
}

fn open_element(
    start: &BytesStart<'_>,
    line: usize,
    parent_path: &str,
) -> Result<Element, DefinitionError> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(|_| malformed(line, "element name is not UTF-8"))?
        .to_string();
    if name.contains(':') {
        return Err(DefinitionError::SchemaViolation {
            line,
            path: format!("{parent_path}/{name}"),
            message: "XML namespaces are not supported".into(),
        });
    }
    let mut attrs: Vec<(String, String)> = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| malformed(line, e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|_| malformed(line, "attribute name is not UTF-8"))?
            .to_string();
        let value = attr
            .unescape_value()
            .map_err(|e| malformed(line, e.to_string()))?
            .into_owned();
        if attrs.iter().any(|(k, _)| *k == key) {
            return Err(malformed(line, format!("duplicate attribute `{key}`")));
        }
        attrs.push((key, value));
    }
    Ok(Element {
        path: format!("{parent_path}/{name}"),
        name,
        attrs,
        children: Vec::new(),
        text: String::new(),
        line,
    })
}

/// Parses a whole document into its root element.
pub(crate) fn parse_document(input: &str) -> Result<Element, DefinitionError> {
    let mut reader = Reader::from_str(input);
    let config = reader.config_mut();
    config.check_end_names = true;
    config.expand_empty_elements = false;
    config.trim_text(false);

    let mut lines = LineCounter {
        input: input.as_bytes(),
        pos: 0,
        line: 1,
    };
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    loop {
        let before = reader.buffer_position() as usize;
        let event = reader.read_event();
        let line = lines.line_at(before);
        let event = match event {
            Ok(ev) => ev,
            Err(e) => {
                let at = lines.line_at(reader.error_position() as usize);
                return Err(malformed(at, e.to_string()));
            }
        };
        match event {
            Event::Start(start) => {
                if root.is_some() {
                    return Err(malformed(line, "content after the root element"));
                }
                let parent = stack.last().map(|e| e.path.as_str()).unwrap_or("");
                let el = open_element(&start, line, parent)?;
                stack.push(el);
            }
            Event::Empty(start) => {
                if root.is_some() {
                    return Err(malformed(line, "content after the root element"));
                }
                let parent = stack.last().map(|e| e.path.as_str()).unwrap_or("");
                let el = open_element(&start, line, parent)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| malformed(line, "unbalanced end tag"))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::Text(text) => {
                let text = text.unescape().map_err(|e| malformed(line, e.to_string()))?;
                match stack.last_mut() {
                    Some(el) => el.text.push_str(&text),
                    None if text.trim().is_empty() => {}
                    None => return Err(malformed(line, "text outside the root element")),
                }
            }
            Event::CData(data) => {
                let data = std::str::from_utf8(&data)
                    .map_err(|_| malformed(line, "CDATA is not UTF-8"))?
                    .to_string();
                match stack.last_mut() {
                    Some(el) => el.text.push_str(&data),
                    None => return Err(malformed(line, "CDATA outside the root element")),
                }
            }
            Event::DocType(_) => {
                return Err(malformed(line, "DOCTYPE declarations are not accepted"));
            }
            Event::Decl(_) | Event::PI(_) | Event::Comment(_) => {}
            Event::Eof => break,
        }
    }
    if let Some(open) = stack.last() {
        return Err(malformed(
            lines.line_at(input.len()),
            format!("unclosed element <{}>", open.name),
        ));
    }
    root.ok_or_else(|| malformed(1, "document has no root element"))
}

/// Indented writer producing the canonical document layout.
pub(crate) struct XmlWriter {
    out: String,
    depth: usize,
}

pub(crate) fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

impl XmlWriter {
    pub fn new() -> Self {
        XmlWriter {
            out: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
            depth: 0,
        }
    }

    fn indent(&mut self) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
    }

    fn tag(&mut self, name: &str, attrs: &[(&str, &str)]) {
        self.indent();
        self.out.push('<');
        self.out.push_str(name);
        for (k, v) in attrs {
            self.out.push(' ');
            self.out.push_str(k);
            self.out.push_str("=\"");
            self.out.push_str(&escape(v));
            self.out.push('"');
        }
    }

    pub fn open(&mut self, name: &str, attrs: &[(&str, &str)]) {
        self.tag(name, attrs);
        self.out.push_str(">\n");
        self.depth += 1;
    }

    pub fn close(&mut self, name: &str) {
        self.depth -= 1;
        self.indent();
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push_str(">\n");
    }

    pub fn empty(&mut self, name: &str, attrs: &[(&str, &str)]) {
        self.tag(name, attrs);
        self.out.push_str("/>\n");
    }

    pub fn text_element(&mut self, name: &str, attrs: &[(&str, &str)], text: &str) {
        if text.is_empty() {
            return self.empty(name, attrs);
        }
        self.tag(name, attrs);
        self.out.push('>');
        self.out.push_str(&escape(text));
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push_str(">\n");
    }

    pub fn finish(self) -> String {
        self.out
    }
}
