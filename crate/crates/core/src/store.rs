//! Datapoint storage with time-range queries and geodesic feed filtering.
//!
//! Each stream owns an ordered map keyed by timestamp, so equal-timestamp
//! appends overwrite (last write wins) and range scans come out ascending.
//! Streams sit behind their own lock: appends to one stream serialize, appends
//! to different streams do not contend.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::RwLock;

use crate::error::HubError;
use crate::model::{Datapoint, FeedId, GeoPoint, StreamRef, Timestamp};
use crate::registry::Feed;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance by the haversine formula.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat().to_radians(), b.lat().to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon() - a.lon()).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Ids of the feeds within `radius_km` of `center` (inclusive), id-sorted.
pub fn feeds_near<'a>(
    feeds: impl IntoIterator<Item = &'a Feed>,
    center: GeoPoint,
    radius_km: f64,
) -> Result<Vec<FeedId>, HubError> {
    if radius_km.is_nan() || radius_km < 0.0 {
        return Err(HubError::InvalidFilter(format!("radius_km must be >= 0, got {radius_km}")));
    }
    let mut ids: Vec<FeedId> = feeds
        .into_iter()
        .filter(|f| haversine_km(f.location, center) <= radius_km)
        .map(|f| f.id.clone())
        .collect();
    ids.sort();
    Ok(ids)
}

/// Points of one stream, ordered by timestamp.
#[derive(Debug, Default, Clone)]
pub struct Series {
    points: BTreeMap<Timestamp, String>,
}

impl Series {
    /// Inserts or replaces the value at `p.at`; returns the replaced value.
    pub fn insert(&mut self, p: Datapoint) -> Option<String> {
        self.points.insert(p.at, p.value)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn range(&self, start: Timestamp, end: Timestamp, limit: usize) -> Vec<Datapoint> {
        if start > end {
            return Vec::new();
        }
        self.points
            .range(start..=end)
            .take(limit)
            .map(|(at, value)| Datapoint { at: *at, value: value.clone() })
            .collect()
    }

    pub fn latest(&self) -> Option<Datapoint> {
        self.points
            .last_key_value()
            .map(|(at, value)| Datapoint { at: *at, value: value.clone() })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Timestamp, &str)> {
        self.points.iter().map(|(k, v)| (k, v.as_str()))
    }
}

pub fn check_range(start: Timestamp, end: Timestamp) -> Result<(), HubError> {
    if start > end {
        return Err(HubError::InvalidRange(format!("start {start} is after end {end}")));
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct TimeseriesStore {
    streams: RwLock<HashMap<StreamRef, Arc<RwLock<Series>>>>,
}

impl TimeseriesStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an empty series. No-op when it already exists.
    pub fn create(&self, stream: StreamRef) {
        self.streams.write().entry(stream).or_default();
    }

    pub fn contains(&self, stream: &StreamRef) -> bool {
        self.streams.read().contains_key(stream)
    }

    fn series(&self, stream: &StreamRef) -> Result<Arc<RwLock<Series>>, HubError> {
        self.streams
            .read()
            .get(stream)
            .cloned()
            .ok_or_else(|| HubError::UnknownStream(stream.to_string()))
    }

    pub fn append(&self, stream: &StreamRef, p: Datapoint) -> Result<(), HubError> {
        self.append_with(stream, p, |_| Ok(()))
    }

    /// Appends while holding the stream's writer lock. `persist` runs first;
    /// the point becomes visible only if it succeeds.
    pub fn append_with(
        &self,
        stream: &StreamRef,
        p: Datapoint,
        persist: impl FnOnce(&Datapoint) -> Result<(), HubError>,
    ) -> Result<(), HubError> {
        let series = self.series(stream)?;
        let mut guard = series.write();
        persist(&p)?;
        guard.insert(p);
        Ok(())
    }

    pub fn query_range(
        &self,
        stream: &StreamRef,
        start: Timestamp,
        end: Timestamp,
        limit: usize,
    ) -> Result<Vec<Datapoint>, HubError> {
        let series = self.series(stream)?;
        check_range(start, end)?;
        if limit == 0 {
            return Err(HubError::InvalidRange("limit must be >= 1".into()));
        }
        let points = series.read().range(start, end, limit);
        Ok(points)
    }

    pub fn latest(&self, stream: &StreamRef) -> Result<Option<Datapoint>, HubError> {
        Ok(self.series(stream)?.read().latest())
    }

    pub fn len(&self, stream: &StreamRef) -> Result<usize, HubError> {
        Ok(self.series(stream)?.read().len())
    }

    /// Runs `f` over a consistent view of one stream.
    pub fn with_series<R>(&self, stream: &StreamRef, f: impl FnOnce(&Series) -> R) -> Result<R, HubError> {
        let series = self.series(stream)?;
        let guard = series.read();
        Ok(f(&guard))
    }
}
