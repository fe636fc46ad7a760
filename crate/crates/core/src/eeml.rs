//! Codec for the hub's EEML 0.5.1 profile.
//!
//! The profile is strict: one `<environment>` per document, a mandatory
//! `@at` on every `<current_value>`, and no elements or attributes beyond
//! the ones listed below. Anything else is rejected as malformed.
//!
//! ```text
//! eeml[@version="0.5.1", xmlns="http://www.eeml.org/xsd/0.5.1"]
//!   environment[@updated, @id?]
//!     title
//!     location? (lat, lon)
//!     data[@id]+
//!       tag*
//!       current_value[@at]
//!       unit[@symbol?]?
//! ```
//!
//! Values are kept as their lexical text so a document survives a
//! parse/serialize round trip byte for byte.

use std::collections::HashSet;
use std::fmt::Write as _;

use roxmltree::{Document, Node};
use thiserror::Error;

use crate::model::{format_timestamp, is_decimal_lexical, parse_timestamp, GeoPoint, StreamId, Timestamp};

pub const EEML_NAMESPACE: &str = "http://www.eeml.org/xsd/0.5.1";
pub const EEML_VERSION: &str = "0.5.1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EemlError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("wrong namespace or version: {0}")]
    WrongNamespace(String),
    #[error("missing required {0}")]
    MissingRequired(String),
    #[error("non-numeric value {0:?}")]
    NonNumericValue(String),
    #[error("duplicate data id {0:?}")]
    DuplicateDataId(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
}

impl EemlError {
    /// Short class name, stable across messages.
    pub fn class(&self) -> &'static str {
        match self {
            EemlError::MalformedXml(_) => "MalformedXml",
            EemlError::WrongNamespace(_) => "WrongNamespace",
            EemlError::MissingRequired(_) => "MissingRequired",
            EemlError::NonNumericValue(_) => "NonNumericValue",
            EemlError::DuplicateDataId(_) => "DuplicateDataId",
            EemlError::InvalidDocument(_) => "InvalidDocument",
        }
    }
}

/// One `<environment>`: the unit of ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentDocument {
    pub environment_id: Option<String>,
    pub updated: Timestamp,
    pub title: String,
    pub location: Option<GeoPoint>,
    pub data_elements: Vec<DataElement>,
}

/// One `<data>` element carrying the current value of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DataElement {
    pub id: StreamId,
    pub tags: Vec<String>,
    pub current_value: String,
    pub at: Timestamp,
    pub unit_label: Option<String>,
    pub unit_symbol: Option<String>,
}

impl DataElement {
    pub fn numeric_value(&self) -> Option<f64> {
        crate::model::parse_decimal(&self.current_value)
    }
}

impl EnvironmentDocument {
    /// Checks the invariants the serializer relies on.
    pub fn validate(&self) -> Result<(), EemlError> {
        let invalid = |m: String| Err(EemlError::InvalidDocument(m));
        if self.data_elements.is_empty() {
            return invalid("document has no data elements".into());
        }
        let mut texts: Vec<&str> = vec![&self.title];
        if let Some(id) = &self.environment_id {
            texts.push(id);
        }
        let mut seen = HashSet::new();
        for el in &self.data_elements {
            if !seen.insert(el.id.as_str()) {
                return invalid(format!("duplicate data id {:?}", el.id.as_str()));
            }
            if !is_decimal_lexical(&el.current_value) {
                return invalid(format!("value {:?} is not a finite decimal", el.current_value));
            }
            if el.unit_label.as_deref() == Some("") {
                return invalid("unit label present but empty".into());
            }
            texts.extend(el.tags.iter().map(String::as_str));
            texts.extend(el.unit_label.as_deref());
            texts.extend(el.unit_symbol.as_deref());
        }
        if let Some(bad) = texts.iter().find(|t| !is_xml_text(t)) {
            return invalid(format!("{bad:?} contains characters XML cannot carry"));
        }
        Ok(())
    }
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..='\u{10FFFF}')
}

fn is_xml_text(s: &str) -> bool {
    s.chars().all(is_xml_char)
}

fn escape_text(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#xD;"),
            c => out.push(c),
        }
    }
}

fn escape_attr(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#x9;"),
            '\n' => out.push_str("&#xA;"),
            '\r' => out.push_str("&#xD;"),
            c => out.push(c),
        }
    }
}

/// Serializes a document to UTF-8 profile XML. Output is deterministic.
pub fn serialize_eeml(doc: &EnvironmentDocument) -> Result<Vec<u8>, EemlError> {
    doc.validate()?;
    let mut out = String::with_capacity(256 + 192 * doc.data_elements.len());
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<eeml xmlns=\"{EEML_NAMESPACE}\" version=\"{EEML_VERSION}\">");
    out.push_str("  <environment updated=\"");
    out.push_str(&format_timestamp(&doc.updated));
    out.push('"');
    if let Some(id) = &doc.environment_id {
        out.push_str(" id=\"");
        escape_attr(&mut out, id);
        out.push('"');
    }
    out.push_str(">\n    <title>");
    escape_text(&mut out, &doc.title);
    out.push_str("</title>\n");
    if let Some(loc) = &doc.location {
        let _ = writeln!(out, "    <location><lat>{}</lat><lon>{}</lon></location>", loc.lat(), loc.lon());
    }
    for el in &doc.data_elements {
        let _ = writeln!(out, "    <data id=\"{}\">", el.id);
        for tag in &el.tags {
            out.push_str("      <tag>");
            escape_text(&mut out, tag);
            out.push_str("</tag>\n");
        }
        let _ = writeln!(
            out,
            "      <current_value at=\"{}\">{}</current_value>",
            format_timestamp(&el.at),
            el.current_value
        );
        if el.unit_label.is_some() || el.unit_symbol.is_some() {
            out.push_str("      <unit");
            if let Some(sym) = &el.unit_symbol {
                out.push_str(" symbol=\"");
                escape_attr(&mut out, sym);
                out.push('"');
            }
            out.push('>');
            if let Some(label) = &el.unit_label {
                escape_text(&mut out, label);
            }
            out.push_str("</unit>\n");
        }
        out.push_str("    </data>\n");
    }
    out.push_str("  </environment>\n</eeml>\n");
    Ok(out.into_bytes())
}

fn malformed(msg: impl Into<String>) -> EemlError {
    EemlError::MalformedXml(msg.into())
}

fn missing(what: &str) -> EemlError {
    EemlError::MissingRequired(what.to_string())
}

fn check_attributes(node: Node, allowed: &[&str]) -> Result<(), EemlError> {
    for attr in node.attributes() {
        if attr.namespace().is_some() || !allowed.contains(&attr.name()) {
            return Err(malformed(format!(
                "unexpected attribute {:?} on <{}>",
                attr.name(),
                node.tag_name().name()
            )));
        }
    }
    Ok(())
}

/// Element children of a container; stray non-whitespace text is rejected.
fn child_elements<'a, 'input>(node: Node<'a, 'input>) -> Result<Vec<Node<'a, 'input>>, EemlError> {
    let mut out = Vec::new();
    for child in node.children() {
        if child.is_element() {
            if child.tag_name().namespace() != Some(EEML_NAMESPACE) {
                return Err(malformed(format!(
                    "unexpected element <{}> in <{}>",
                    child.tag_name().name(),
                    node.tag_name().name()
                )));
            }
            out.push(child);
        } else if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
            return Err(malformed(format!("unexpected text in <{}>", node.tag_name().name())));
        }
    }
    Ok(out)
}

/// Text content of a leaf element; nested elements are rejected.
fn leaf_text(node: Node) -> Result<String, EemlError> {
    let mut text = String::new();
    for child in node.children() {
        if child.is_element() {
            return Err(malformed(format!("<{}> must not contain elements", node.tag_name().name())));
        }
        if let Some(t) = child.text() {
            if child.is_text() {
                text.push_str(t);
            }
        }
    }
    Ok(text)
}

fn parse_time_attr(node: Node, attr: &str, what: &str) -> Result<Timestamp, EemlError> {
    let raw = node.attribute(attr).ok_or_else(|| missing(what))?;
    parse_timestamp(raw).ok_or_else(|| malformed(format!("{what} {raw:?} is not an ISO-8601 UTC timestamp")))
}

fn parse_coordinate(node: Node) -> Result<f64, EemlError> {
    check_attributes(node, &[])?;
    let text = leaf_text(node)?;
    crate::model::parse_decimal(&text).ok_or(EemlError::NonNumericValue(text))
}

fn parse_location(node: Node) -> Result<GeoPoint, EemlError> {
    check_attributes(node, &[])?;
    let (mut lat, mut lon) = (None, None);
    for child in child_elements(node)? {
        let slot = match child.tag_name().name() {
            "lat" => &mut lat,
            "lon" => &mut lon,
            other => return Err(malformed(format!("unexpected element <{other}> in <location>"))),
        };
        if slot.replace(parse_coordinate(child)?).is_some() {
            return Err(malformed("repeated coordinate in <location>"));
        }
    }
    let lat = lat.ok_or_else(|| missing("location/lat"))?;
    let lon = lon.ok_or_else(|| missing("location/lon"))?;
    GeoPoint::new(lat, lon).map_err(|e| malformed(e.to_string()))
}

fn parse_data(node: Node) -> Result<DataElement, EemlError> {
    check_attributes(node, &["id"])?;
    let raw_id = node.attribute("id").ok_or_else(|| missing("data@id"))?;
    let id = StreamId::new(raw_id).map_err(|e| malformed(e.to_string()))?;
    let mut tags = Vec::new();
    let mut value: Option<(String, Timestamp)> = None;
    let mut unit: Option<(Option<String>, Option<String>)> = None;
    for child in child_elements(node)? {
        match child.tag_name().name() {
            "tag" => {
                check_attributes(child, &[])?;
                tags.push(leaf_text(child)?);
            }
            "current_value" => {
                check_attributes(child, &["at"])?;
                let at = parse_time_attr(child, "at", "current_value@at")?;
                let text = leaf_text(child)?;
                if !is_decimal_lexical(&text) {
                    return Err(EemlError::NonNumericValue(text));
                }
                if value.replace((text, at)).is_some() {
                    return Err(malformed(format!("repeated <current_value> in data {raw_id:?}")));
                }
            }
            "unit" => {
                check_attributes(child, &["symbol"])?;
                let label = leaf_text(child)?;
                let label = (!label.is_empty()).then_some(label);
                let symbol = child.attribute("symbol").map(str::to_string);
                if unit.replace((label, symbol)).is_some() {
                    return Err(malformed(format!("repeated <unit> in data {raw_id:?}")));
                }
            }
            other => return Err(malformed(format!("unexpected element <{other}> in <data>"))),
        }
    }
    let (current_value, at) = value.ok_or_else(|| missing("current_value"))?;
    let (unit_label, unit_symbol) = unit.unwrap_or((None, None));
    Ok(DataElement { id, tags, current_value, at, unit_label, unit_symbol })
}

fn parse_environment(node: Node) -> Result<EnvironmentDocument, EemlError> {
    check_attributes(node, &["updated", "id"])?;
    let updated = parse_time_attr(node, "updated", "environment@updated")?;
    let environment_id = node.attribute("id").map(str::to_string);
    let mut title = None;
    let mut location = None;
    let mut data_elements = Vec::new();
    let mut seen = HashSet::new();
    for child in child_elements(node)? {
        match child.tag_name().name() {
            "title" => {
                check_attributes(child, &[])?;
                if title.replace(leaf_text(child)?).is_some() {
                    return Err(malformed("repeated <title>"));
                }
            }
            "location" => {
                if location.replace(parse_location(child)?).is_some() {
                    return Err(malformed("repeated <location>"));
                }
            }
            "data" => {
                let el = parse_data(child)?;
                if !seen.insert(el.id.clone()) {
                    return Err(EemlError::DuplicateDataId(el.id.to_string()));
                }
                data_elements.push(el);
            }
            other => return Err(malformed(format!("unexpected element <{other}> in <environment>"))),
        }
    }
    let title = title.ok_or_else(|| missing("title"))?;
    if data_elements.is_empty() {
        return Err(missing("data"));
    }
    Ok(EnvironmentDocument { environment_id, updated, title, location, data_elements })
}

/// Parses one profile document. Returns a document only if it satisfies
/// every [`EnvironmentDocument`] invariant.
pub fn parse_eeml(bytes: &[u8]) -> Result<EnvironmentDocument, EemlError> {
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(format!("not UTF-8: {e}")))?;
    let xml = Document::parse(text).map_err(|e| malformed(e.to_string()))?;
    let root = xml.root_element();
    if root.tag_name().name() != "eeml" {
        return Err(malformed(format!("root element is <{}>, expected <eeml>", root.tag_name().name())));
    }
    if root.tag_name().namespace() != Some(EEML_NAMESPACE) {
        return Err(EemlError::WrongNamespace(format!(
            "expected {EEML_NAMESPACE}, found {:?}",
            root.tag_name().namespace().unwrap_or("")
        )));
    }
    check_attributes(root, &["version"])?;
    match root.attribute("version") {
        None => return Err(missing("eeml@version")),
        Some(EEML_VERSION) => {}
        Some(other) => return Err(EemlError::WrongNamespace(format!("unsupported version {other:?}"))),
    }
    let children = child_elements(root)?;
    let mut envs = children.iter().filter(|c| c.tag_name().name() == "environment");
    if let Some(other) = children.iter().find(|c| c.tag_name().name() != "environment") {
        return Err(malformed(format!("unexpected element <{}> in <eeml>", other.tag_name().name())));
    }
    let env = envs.next().ok_or_else(|| missing("environment"))?;
    if envs.next().is_some() {
        return Err(malformed("profile allows exactly one <environment>"));
    }
    parse_environment(*env)
}
