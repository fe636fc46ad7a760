//! UAE weather scenario: one feed per emirate, five measurement streams,
//! a day of hourly CSV readings per feed.

use std::collections::BTreeSet;

use crate::adapter::{AdapterMapping, ColumnRule, TIMESTAMP_FORMAT_ISO8601};
use crate::model::{FeedId, GeoPoint, StreamId};
use crate::registry::{Datastream, NewFeed};

pub const CSV_HEADER: &str = "TimeUTC,TemperatureC,HumidityPct,PrecipitationMM,WindSpeedKPH,PressureHPa";

/// `(csv column, stream id, unit label, unit symbol)`.
pub const WEATHER_COLUMNS: [(&str, &str, &str, &str); 5] = [
    ("TemperatureC", "temperature", "Celsius", "C"),
    ("HumidityPct", "humidity", "Percent", "%"),
    ("PrecipitationMM", "precipitation", "Millimetres", "mm"),
    ("WindSpeedKPH", "wind_speed", "KilometresPerHour", "km/h"),
    ("PressureHPa", "pressure", "Hectopascal", "hPa"),
];

#[derive(Debug, Clone, Copy)]
pub struct Emirate {
    pub feed_id: &'static str,
    pub name: &'static str,
    pub lat: f64,
    pub lon: f64,
}

pub const EMIRATES: [Emirate; 7] = [
    Emirate { feed_id: "abu-dhabi-weather", name: "Abu Dhabi", lat: 24.45, lon: 54.38 },
    Emirate { feed_id: "ajman-weather", name: "Ajman", lat: 25.41, lon: 55.51 },
    Emirate { feed_id: "dubai-weather", name: "Dubai", lat: 25.20, lon: 55.27 },
    Emirate { feed_id: "fujairah-weather", name: "Fujairah", lat: 25.13, lon: 56.33 },
    Emirate { feed_id: "ras-al-khaimah-weather", name: "Ras Al Khaimah", lat: 25.79, lon: 55.94 },
    Emirate { feed_id: "sharjah-weather", name: "Sharjah", lat: 25.35, lon: 55.42 },
    Emirate { feed_id: "umm-al-quwain-weather", name: "Umm Al Quwain", lat: 25.56, lon: 55.55 },
];

/// Day the fixture readings are stamped with.
pub const FIXTURE_DAY: &str = "2016-07-20";

impl Emirate {
    pub fn feed_id(&self) -> FeedId {
        FeedId::new(self.feed_id).expect("fixture ids are valid slugs")
    }

    pub fn new_feed(&self) -> NewFeed {
        NewFeed {
            id: self.feed_id(),
            title: format!("{} weather", self.name),
            location: GeoPoint::new(self.lat, self.lon).expect("fixture coordinates are valid"),
            tags: BTreeSet::from(["weather".to_string(), "uae".to_string()]),
        }
    }

    pub fn mapping(&self) -> AdapterMapping {
        AdapterMapping {
            feed_id: self.feed_id(),
            timestamp_column: "TimeUTC".into(),
            timestamp_format: TIMESTAMP_FORMAT_ISO8601.into(),
            columns: WEATHER_COLUMNS
                .iter()
                .map(|(column, stream, label, symbol)| ColumnRule {
                    column: column.to_string(),
                    stream: StreamId::new(*stream).expect("fixture stream ids are valid"),
                    unit_label: Some(label.to_string()),
                    unit_symbol: Some(symbol.to_string()),
                })
                .collect(),
        }
    }

    /// The canonical mapping file for this emirate, as JSON text.
    pub fn mapping_json(&self) -> String {
        serde_json::to_string_pretty(&self.mapping()).expect("mapping serializes")
    }

    /// One CSV row per hour of the fixture day, all cells filled.
    pub fn day_rows(&self) -> Vec<[String; 6]> {
        let idx = EMIRATES.iter().position(|e| e.feed_id == self.feed_id).unwrap_or(0) as i64;
        (0..24i64)
            .map(|hour| {
                // afternoon peak, cooler on the east coast
                let diurnal = 12 - (hour - 14).abs();
                let temp_tenths = 330 + diurnal * 9 - idx * 7 + (hour * 3 + idx) % 5;
                let humidity = 40 + (12 - diurnal) * 3 + idx;
                let rain_tenths = if idx == 3 && (2..5).contains(&hour) { hour - 1 } else { 0 };
                let wind = 8 + (hour * 7 + idx * 5) % 17;
                let pressure = 1000 + (hour + idx) % 6;
                [
                    format!("{FIXTURE_DAY}T{hour:02}:00:00Z"),
                    format!("{}.{}", temp_tenths / 10, temp_tenths % 10),
                    humidity.to_string(),
                    format!("{}.{}", rain_tenths / 10, rain_tenths % 10),
                    wind.to_string(),
                    pressure.to_string(),
                ]
            })
            .collect()
    }

    pub fn day_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in self.day_rows() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// The five weather datastreams every emirate feed carries.
pub fn weather_streams() -> Vec<Datastream> {
    WEATHER_COLUMNS
        .iter()
        .map(|(_, id, label, symbol)| Datastream::new(StreamId::new(*id).expect("valid"), *label, *symbol))
        .collect()
}
