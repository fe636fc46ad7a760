//! Developer-facing reads: datapoint ranges, latest values, feed snapshots
//! and windowed aggregates.

use std::fmt;
use std::str::FromStr;

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::auth::Action;
use crate::eeml::{DataElement, EnvironmentDocument};
use crate::error::HubError;
use crate::hub::Hub;
use crate::model::{timestamp_serde, Datapoint, FeedId, KeySecret, StreamId, StreamRef, Timestamp};
use crate::store::check_range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateFn {
    Min,
    Max,
    Avg,
    Sum,
    Count,
}

impl AggregateFn {
    pub const ALL: [AggregateFn; 5] = [AggregateFn::Min, AggregateFn::Max, AggregateFn::Avg, AggregateFn::Sum, AggregateFn::Count];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregateFn::Min => "min",
            AggregateFn::Max => "max",
            AggregateFn::Avg => "avg",
            AggregateFn::Sum => "sum",
            AggregateFn::Count => "count",
        }
    }
}

impl fmt::Display for AggregateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregateFn {
    type Err = HubError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AggregateFn::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| HubError::BadRequest(format!("unknown aggregate function {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateBucket {
    #[serde(with = "timestamp_serde")]
    pub window_start: Timestamp,
    #[serde(rename = "fn")]
    pub function: AggregateFn,
    pub value: f64,
}

#[derive(Default)]
struct Fold {
    count: u64,
    sum: f64,
    min: f64,
    max: f64,
}

impl Fold {
    fn push(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.sum += v;
        self.count += 1;
    }

    fn finish(&self, function: AggregateFn) -> f64 {
        match function {
            AggregateFn::Min => self.min,
            AggregateFn::Max => self.max,
            AggregateFn::Sum => self.sum,
            AggregateFn::Count => self.count as f64,
            AggregateFn::Avg => self.sum / self.count as f64,
        }
    }
}

/// Buckets `[start + k·w, start + (k+1)·w)` clipped to `[start, end]`, over
/// ascending points. Empty buckets are omitted.
pub fn aggregate_points<'a>(
    points: impl IntoIterator<Item = (&'a Timestamp, &'a str)>,
    function: AggregateFn,
    window_s: u64,
    start: Timestamp,
    end: Timestamp,
) -> Result<Vec<AggregateBucket>, HubError> {
    check_range(start, end)?;
    let window = i64::try_from(window_s)
        .ok()
        .filter(|w| *w >= 1)
        .ok_or_else(|| HubError::InvalidWindow(format!("window_s must be in 1..=i64::MAX, got {window_s}")))?;
    let mut buckets: Vec<(i64, Fold)> = Vec::new();
    for (at, value) in points {
        if *at < start || *at > end {
            continue;
        }
        let k = (*at - start).num_seconds() / window;
        let v: f64 = value
            .parse()
            .map_err(|_| HubError::InvalidDatapoint(format!("stored value {value:?} is not numeric")))?;
        match buckets.last_mut() {
            Some((last, fold)) if *last == k => fold.push(v),
            _ => {
                let mut fold = Fold::default();
                fold.push(v);
                buckets.push((k, fold));
            }
        }
    }
    buckets
        .into_iter()
        .map(|(k, fold)| {
            let offset = k
                .checked_mul(window)
                .and_then(TimeDelta::try_seconds)
                .and_then(|d| start.checked_add_signed(d))
                .ok_or_else(|| HubError::InvalidWindow("window start out of range".into()))?;
            Ok(AggregateBucket { window_start: offset, function, value: fold.finish(function) })
        })
        .collect()
}

impl Hub {
    pub fn read_datapoints(
        &self,
        stream: &StreamRef,
        start: Timestamp,
        end: Timestamp,
        limit: usize,
        key: &KeySecret,
    ) -> Result<Vec<Datapoint>, HubError> {
        self.read_state().authorize_on_feed(key, Action::ReadData, &stream.feed)?;
        self.store.query_range(stream, start, end, limit)
    }

    pub fn latest(&self, feed: &FeedId, stream: &StreamId, key: &KeySecret) -> Result<Option<Datapoint>, HubError> {
        self.read_state().authorize_on_feed(key, Action::ReadLatest, feed)?;
        self.store.latest(&StreamRef::new(feed.clone(), stream.clone()))
    }

    pub fn aggregate(
        &self,
        stream: &StreamRef,
        function: AggregateFn,
        window_s: u64,
        start: Timestamp,
        end: Timestamp,
        key: &KeySecret,
    ) -> Result<Vec<AggregateBucket>, HubError> {
        self.read_state().authorize_on_feed(key, Action::ReadData, &stream.feed)?;
        self.store
            .with_series(stream, |series| aggregate_points(series.iter(), function, window_s, start, end))?
    }

    /// EEML document of each stream's latest value, authorized as
    /// `read_latest`.
    pub fn snapshot(&self, feed: &FeedId, key: &KeySecret) -> Result<EnvironmentDocument, HubError> {
        self.read_state().authorize_on_feed(key, Action::ReadLatest, feed)?;
        self.feed_snapshot(feed)
    }

    /// Streams without data are left out; a feed with no data at all is
    /// [`HubError::EmptyFeed`].
    pub fn feed_snapshot(&self, feed: &FeedId) -> Result<EnvironmentDocument, HubError> {
        let state = self.read_state();
        let f = state.registry.get_feed(feed)?;
        let mut data_elements = Vec::new();
        for stream in f.streams.values() {
            let Some(point) = self.store.latest(&StreamRef::new(feed.clone(), stream.id.clone()))? else {
                continue;
            };
            data_elements.push(DataElement {
                id: stream.id.clone(),
                tags: stream.tags.iter().cloned().collect(),
                current_value: point.value,
                at: point.at,
                unit_label: (!stream.unit_label.is_empty()).then(|| stream.unit_label.clone()),
                unit_symbol: (!stream.unit_symbol.is_empty()).then(|| stream.unit_symbol.clone()),
            });
        }
        let updated = data_elements
            .iter()
            .map(|e| e.at)
            .max()
            .ok_or_else(|| HubError::EmptyFeed(feed.to_string()))?;
        Ok(EnvironmentDocument {
            environment_id: Some(feed.to_string()),
            updated,
            title: f.title.clone(),
            location: Some(f.location),
            data_elements,
        })
    }
}
