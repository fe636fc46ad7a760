//! Hypercat (PAS 212) catalogue of the feeds held by a hub.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::Feed;

pub const CATALOGUE_CONTENT_TYPE: &str = "application/vnd.hypercat.catalogue+json";
pub const FEED_CONTENT_TYPE: &str = "application/xml";

pub const REL_CONTENT_TYPE: &str = "urn:X-hypercat:rels:isContentType";
pub const REL_DESCRIPTION_EN: &str = "urn:X-hypercat:rels:hasDescription:en";
pub const REL_HAS_TAG: &str = "urn:X-hypercat:rels:hasTag";
pub const REL_LAT: &str = "http://www.w3.org/2003/01/geo/wgs84_pos#lat";
pub const REL_LONG: &str = "http://www.w3.org/2003/01/geo/wgs84_pos#long";

const DEFAULT_DESCRIPTION: &str = "IoT data hub catalogue";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CatalogueError {
    #[error("invalid catalogue: {0}")]
    InvalidCatalogue(String),
    #[error("catalogue is not valid JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelVal {
    pub rel: String,
    pub val: String,
}

impl RelVal {
    pub fn new(rel: impl Into<String>, val: impl Into<String>) -> Self {
        Self { rel: rel.into(), val: val.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogueItem {
    pub href: String,
    #[serde(rename = "item-metadata")]
    pub item_metadata: Vec<RelVal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogueDoc {
    #[serde(rename = "catalogue-metadata")]
    pub catalogue_metadata: Vec<RelVal>,
    pub items: Vec<CatalogueItem>,
}

/// Renders a coordinate with at most six fractional digits, trailing zeros
/// trimmed.
pub fn format_coordinate(value: f64) -> String {
    let mut text = format!("{value:.6}");
    if text.contains('.') {
        let trimmed = text.trim_end_matches('0').trim_end_matches('.').len();
        text.truncate(trimmed);
    }
    if text == "-0" {
        text = "0".into();
    }
    text
}

pub fn feed_href(feed_id: &str) -> String {
    format!("/v1/feeds/{feed_id}")
}

fn feed_item(feed: &Feed) -> CatalogueItem {
    let mut meta = vec![
        RelVal::new(REL_CONTENT_TYPE, FEED_CONTENT_TYPE),
        RelVal::new(REL_DESCRIPTION_EN, feed.title.clone()),
    ];
    meta.extend(feed.tags.iter().map(|t| RelVal::new(REL_HAS_TAG, t.clone())));
    meta.push(RelVal::new(REL_LAT, format_coordinate(feed.location.lat())));
    meta.push(RelVal::new(REL_LONG, format_coordinate(feed.location.lon())));
    CatalogueItem { href: feed_href(feed.id.as_str()), item_metadata: meta }
}

/// One item per feed, hrefs sorted by feed id.
pub fn build_catalogue<'a>(feeds: impl IntoIterator<Item = &'a Feed>, base_description: &str) -> CatalogueDoc {
    let mut feeds: Vec<&Feed> = feeds.into_iter().collect();
    feeds.sort_by(|a, b| a.id.cmp(&b.id));
    let description = if base_description.is_empty() { DEFAULT_DESCRIPTION } else { base_description };
    CatalogueDoc {
        catalogue_metadata: vec![
            RelVal::new(REL_CONTENT_TYPE, CATALOGUE_CONTENT_TYPE),
            RelVal::new(REL_DESCRIPTION_EN, description),
        ],
        items: feeds.into_iter().map(feed_item).collect(),
    }
}

/// Keeps the items carrying a pair that satisfies the constraint. With
/// both parts given, a single pair must match both.
pub fn filter_catalogue(doc: &CatalogueDoc, rel: Option<&str>, val: Option<&str>) -> CatalogueDoc {
    if rel.is_none() && val.is_none() {
        return doc.clone();
    }
    let matches = |p: &RelVal| rel.is_none_or(|r| p.rel == r) && val.is_none_or(|v| p.val == v);
    CatalogueDoc {
        catalogue_metadata: doc.catalogue_metadata.clone(),
        items: doc
            .items
            .iter()
            .filter(|item| item.item_metadata.iter().any(matches))
            .cloned()
            .collect(),
    }
}

/// Checks the mandatory-rel rules of a catalogue.
pub fn validate_catalogue(doc: &CatalogueDoc) -> Result<(), CatalogueError> {
    let invalid = |m: String| Err(CatalogueError::InvalidCatalogue(m));
    let all_pairs = doc
        .catalogue_metadata
        .iter()
        .chain(doc.items.iter().flat_map(|i| i.item_metadata.iter()));
    for pair in all_pairs {
        if pair.rel.is_empty() || pair.val.is_empty() {
            return invalid(format!("empty rel or val in {pair:?}"));
        }
    }
    let content_types: Vec<&RelVal> = doc.catalogue_metadata.iter().filter(|p| p.rel == REL_CONTENT_TYPE).collect();
    if content_types.len() != 1 || content_types[0].val != CATALOGUE_CONTENT_TYPE {
        return invalid("catalogue-metadata needs exactly one catalogue content-type pair".into());
    }
    if !doc.catalogue_metadata.iter().any(|p| p.rel == REL_DESCRIPTION_EN) {
        return invalid("catalogue-metadata lacks an English description".into());
    }
    let mut hrefs = HashSet::new();
    for item in &doc.items {
        if item.href.is_empty() || !hrefs.insert(item.href.as_str()) {
            return invalid(format!("empty or duplicate href {:?}", item.href));
        }
        if item.item_metadata.iter().filter(|p| p.rel == REL_CONTENT_TYPE).count() != 1 {
            return invalid(format!("item {} needs exactly one content-type pair", item.href));
        }
        if !item.item_metadata.iter().any(|p| p.rel == REL_DESCRIPTION_EN) {
            return invalid(format!("item {} lacks a description", item.href));
        }
    }
    Ok(())
}

/// Compact JSON; field and item order follow the document.
pub fn serialize_catalogue(doc: &CatalogueDoc) -> Result<Vec<u8>, CatalogueError> {
    validate_catalogue(doc)?;
    serde_json::to_vec(doc).map_err(|e| CatalogueError::Json(e.to_string()))
}

pub fn parse_catalogue(bytes: &[u8]) -> Result<CatalogueDoc, CatalogueError> {
    serde_json::from_slice(bytes).map_err(|e| CatalogueError::Json(e.to_string()))
}

/// Standalone conformance check over a serialized catalogue.
pub fn validate_serialized(bytes: &[u8]) -> Result<CatalogueDoc, CatalogueError> {
    let doc = parse_catalogue(bytes)?;
    validate_catalogue(&doc)?;
    Ok(doc)
}
