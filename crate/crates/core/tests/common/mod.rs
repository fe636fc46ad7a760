#![allow(dead_code)]

pub mod checks;

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use cityhub::auth::{Action, Role};
use cityhub::eeml::{DataElement, EnvironmentDocument};
use cityhub::model::{parse_timestamp, GeoPoint, StreamId, Timestamp};
use cityhub::HubOptions;

pub fn ts(s: &str) -> Timestamp {
    parse_timestamp(s).unwrap_or_else(|| panic!("bad timestamp {s}"))
}

pub fn fixed_options() -> HubOptions {
    HubOptions { clock: Arc::new(|| ts("2016-07-21T00:00:00Z")), ..Default::default() }
}

// ---- EEML generators ----------------------------------------------------

fn xml_text(max: usize) -> impl Strategy<Value = String> {
    prop_oneof![
        4 => proptest::string::string_regex(&format!("[a-zA-Z0-9 ._-]{{0,{max}}}")).unwrap(),
        1 => proptest::string::string_regex(&format!("[\\PC\t\n\r<>&\"']{{0,{max}}}")).unwrap(),
    ]
}

fn decimal() -> impl Strategy<Value = String> {
    prop_oneof![
        proptest::string::string_regex("[+-]?[0-9]{1,6}(\\.[0-9]{1,4})?").unwrap(),
        proptest::string::string_regex("[+-]?[0-9]{1,3}\\.[0-9]{0,3}[eE][+-]?[0-9]{1,2}").unwrap(),
        proptest::string::string_regex("[+-]?\\.[0-9]{1,4}").unwrap(),
        (-1.0e6f64..1.0e6).prop_map(|v| v.to_string()),
    ]
}

fn timestamp() -> impl Strategy<Value = Timestamp> {
    (0i64..4_102_444_800, prop_oneof![Just(0u32), 0u32..1_000_000_000])
        .prop_map(|(secs, nanos)| Utc.timestamp_opt(secs, nanos).single().expect("in range"))
}

fn geo() -> impl Strategy<Value = GeoPoint> {
    prop_oneof![
        (-90.0f64..=90.0, -180.0f64..=180.0),
        (-9000i32..=9000, -18000i32..=18000).prop_map(|(a, b)| (a as f64 / 100.0, b as f64 / 100.0)),
    ]
    .prop_map(|(lat, lon)| GeoPoint::new(lat, lon).expect("in range"))
}

fn unit() -> impl Strategy<Value = (Option<String>, Option<String>)> {
    prop_oneof![
        Just((None, None)),
        xml_text(8).prop_map(|s| (None, Some(s))),
        (xml_text(12).prop_filter("label non-empty", |s| !s.is_empty()), proptest::option::of(xml_text(8))).prop_map(|(l, s)| (Some(l), s)),
    ]
}

fn data_element(id: String) -> impl Strategy<Value = DataElement> {
    (proptest::collection::vec(xml_text(10), 0..3), decimal(), timestamp(), unit()).prop_map(move |(tags, value, at, (label, symbol))| DataElement {
        id: StreamId::new(id.clone()).expect("generated id valid"),
        tags,
        current_value: value,
        at,
        unit_label: label,
        unit_symbol: symbol,
    })
}

/// Valid profile documents.
pub fn arb_document() -> impl Strategy<Value = EnvironmentDocument> {
    let ids = proptest::collection::btree_set("[a-zA-Z0-9_-]{1,12}", 1..6);
    let elements = ids.prop_flat_map(|ids| {
        // generation order is not id order
        let ids: Vec<String> = ids.into_iter().rev().collect();
        ids.into_iter().map(data_element).collect::<Vec<_>>()
    });
    (proptest::option::of("[a-z0-9-]{1,20}"), timestamp(), xml_text(40), proptest::option::of(geo()), elements).prop_map(
        |(environment_id, updated, title, location, data_elements)| EnvironmentDocument {
            environment_id,
            updated,
            title,
            location,
            data_elements,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    Namespace,
    MissingTitle,
    NonNumeric,
    DuplicateId,
}

impl Mutation {
    pub const ALL: [Mutation; 4] = [Mutation::Namespace, Mutation::MissingTitle, Mutation::NonNumeric, Mutation::DuplicateId];

    pub fn expected_class(self) -> &'static str {
        match self {
            Mutation::Namespace => "WrongNamespace",
            Mutation::MissingTitle => "MissingRequired",
            Mutation::NonNumeric => "NonNumericValue",
            Mutation::DuplicateId => "DuplicateDataId",
        }
    }
}

const NON_NUMERIC: [&str; 8] = ["abc", "NaN", "inf", "1,5", "", " 12", "0x1F", "1e"];
const OTHER_NAMESPACES: [&str; 4] = ["http://www.eeml.org/xsd/005", "http://www.eeml.org/xsd/0.5.0", "urn:example", ""];

/// Applies `m` to serialized profile text. `variant` picks among the
/// replacement values.
pub fn mutate(xml: &str, m: Mutation, variant: usize) -> String {
    match m {
        Mutation::Namespace => {
            let ns = OTHER_NAMESPACES[variant % OTHER_NAMESPACES.len()];
            xml.replacen("xmlns=\"http://www.eeml.org/xsd/0.5.1\"", &format!("xmlns=\"{ns}\""), 1)
        }
        Mutation::MissingTitle => {
            let start = xml.find("    <title>").expect("title present");
            let end = xml[start..].find("</title>\n").expect("title closed") + start + "</title>\n".len();
            format!("{}{}", &xml[..start], &xml[end..])
        }
        Mutation::NonNumeric => {
            let open = xml.find("<current_value at=\"").expect("value present");
            let text_start = xml[open..].find('>').unwrap() + open + 1;
            let text_end = xml[text_start..].find("</current_value>").unwrap() + text_start;
            let bad = NON_NUMERIC[variant % NON_NUMERIC.len()];
            format!("{}{}{}", &xml[..text_start], bad, &xml[text_end..])
        }
        Mutation::DuplicateId => {
            let start = xml.find("    <data id=").expect("data present");
            let end = xml[start..].find("    </data>\n").unwrap() + start + "    </data>\n".len();
            let block = &xml[start..end];
            format!("{}{}{}", &xml[..end], block, &xml[end..])
        }
    }
}

// ---- permission table ----------------------------------------------------

/// Columns of the published matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Operator,
    ProviderOwn,
    ProviderOther,
    DeveloperSubscribed,
    DeveloperOther,
    EndUser,
}

/// The table, transcribed row by row: `true` = allow.
pub fn table_allows(action: Action, column: Column) -> bool {
    use Column::*;
    let row: [bool; 6] = match action {
        Action::CreateFeed => [true, false, false, false, false, false],
        Action::CreateStream => [true, true, false, false, false, false],
        Action::Ingest => [true, true, false, false, false, false],
        Action::ReadData => [true, true, false, true, false, false],
        Action::ReadLatest => [true, true, false, true, false, true],
        Action::Subscribe => [false, false, false, true, true, false],
        Action::IssueKey | Action::RevokeKey => [true, false, false, false, false, false],
    };
    let idx = match column {
        Operator => 0,
        ProviderOwn => 1,
        ProviderOther => 2,
        DeveloperSubscribed => 3,
        DeveloperOther => 4,
        EndUser => 5,
    };
    row[idx]
}

pub fn column_for(role: Role, owns: bool, subscribed: bool) -> Column {
    match role {
        Role::PlatformOperator => Column::Operator,
        Role::DataProvider if owns => Column::ProviderOwn,
        Role::DataProvider => Column::ProviderOther,
        Role::AppDeveloper if subscribed => Column::DeveloperSubscribed,
        Role::AppDeveloper => Column::DeveloperOther,
        Role::EndUser => Column::EndUser,
    }
}

// ---- geo -----------------------------------------------------------------

/// Haversine written out independently, mean Earth radius 6371.0088 km.
/// Float operations follow the textbook order so boundary radii taken from
/// this function are reproducible.
pub fn oracle_distance_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let r = 6371.0088_f64;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let half_dp = (p2 - p1) / 2.0;
    let half_dl = (lon2 - lon1).to_radians() / 2.0;
    let a = half_dp.sin().powi(2) + p1.cos() * p2.cos() * half_dl.sin().powi(2);
    2.0 * r * a.clamp(0.0, 1.0).sqrt().asin()
}

// ---- time series ---------------------------------------------------------

/// List-scan reference for one stream: later writes at the same instant
/// replace earlier ones.
#[derive(Debug, Default, Clone)]
pub struct ListSeries {
    pub points: Vec<(Timestamp, String)>,
}

impl ListSeries {
    pub fn put(&mut self, at: Timestamp, value: String) {
        if let Some(slot) = self.points.iter_mut().find(|(t, _)| *t == at) {
            slot.1 = value;
        } else {
            self.points.push((at, value));
        }
    }

    pub fn sorted(&self) -> Vec<(Timestamp, String)> {
        let mut v = self.points.clone();
        v.sort_by_key(|(t, _)| *t);
        v
    }

    pub fn range(&self, start: Timestamp, end: Timestamp, limit: usize) -> Vec<(Timestamp, String)> {
        self.sorted().into_iter().filter(|(t, _)| *t >= start && *t <= end).take(limit).collect()
    }

    /// `(window_start, [values])` per non-empty window, ascending.
    pub fn windows(&self, start: Timestamp, end: Timestamp, window_s: i64) -> Vec<(Timestamp, Vec<f64>)> {
        let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for (t, v) in self.sorted() {
            if t < start || t > end {
                continue;
            }
            let elapsed = t.timestamp() - start.timestamp() - if t.timestamp_subsec_nanos() < start.timestamp_subsec_nanos() { 1 } else { 0 };
            groups.entry(elapsed / window_s).or_default().push(v.parse().unwrap());
        }
        groups
            .into_iter()
            .map(|(k, vals)| (start + chrono::TimeDelta::seconds(k * window_s), vals))
            .collect()
    }
}

pub fn oracle_aggregate(function: &str, vals: &[f64]) -> f64 {
    match function {
        "min" => vals.iter().copied().fold(f64::INFINITY, f64::min),
        "max" => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "sum" => vals.iter().sum(),
        "count" => vals.len() as f64,
        "avg" => vals.iter().sum::<f64>() / vals.len() as f64,
        other => panic!("unknown fn {other}"),
    }
}
