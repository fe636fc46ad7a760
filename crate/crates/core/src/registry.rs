//! Durable domain entities: feeds, datastreams, event and context journals,
//! subscriptions.
//!
//! The registry is plain data. [`crate::hub::Hub`] owns it behind a single
//! writer lock and pairs every mutation with a log record.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::auth::{ApiKey, Role};
use crate::error::HubError;
use crate::model::{timestamp_serde, FeedId, GeoPoint, KeyId, StreamId, Timestamp};
use crate::store::feeds_near;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datastream {
    pub id: StreamId,
    #[serde(default)]
    pub unit_label: String,
    #[serde(default)]
    pub unit_symbol: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

impl Datastream {
    pub fn new(id: StreamId, unit_label: impl Into<String>, unit_symbol: impl Into<String>) -> Self {
        Datastream { id, unit_label: unit_label.into(), unit_symbol: unit_symbol.into(), tags: BTreeSet::new() }
    }

    pub fn validate(&self) -> Result<(), HubError> {
        if self.unit_symbol.chars().count() > 8 {
            return Err(HubError::InvalidField(format!("unit symbol {:?} exceeds 8 characters", self.unit_symbol)));
        }
        if self.unit_symbol.is_empty() && !self.unit_label.is_empty() {
            return Err(HubError::InvalidField("unit symbol required when a unit label is given".into()));
        }
        validate_tags(&self.tags)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feed {
    pub id: FeedId,
    pub title: String,
    pub location: GeoPoint,
    pub tags: BTreeSet<String>,
    pub provider: KeyId,
    #[serde(with = "timestamp_serde")]
    pub created_at: Timestamp,
    pub streams: BTreeMap<StreamId, Datastream>,
}

/// Request to register a feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewFeed {
    pub id: FeedId,
    pub title: String,
    pub location: GeoPoint,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub feed: FeedId,
    #[serde(with = "timestamp_serde")]
    pub at: Timestamp,
    pub kind: String,
    #[serde(default)]
    pub description: String,
}

impl EventRecord {
    pub fn validate(&self) -> Result<(), HubError> {
        check_len("event kind", &self.kind, 1, 64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub feed: FeedId,
    #[serde(with = "timestamp_serde")]
    pub at: Timestamp,
    pub key: String,
    #[serde(default)]
    pub value: String,
}

impl ContextRecord {
    pub fn validate(&self) -> Result<(), HubError> {
        check_len("context key", &self.key, 1, 64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscription {
    pub subscriber: KeyId,
    pub feed: FeedId,
    #[serde(with = "timestamp_serde")]
    pub created_at: Timestamp,
}

fn check_len(what: &str, value: &str, min: usize, max: usize) -> Result<(), HubError> {
    let n = value.chars().count();
    if n < min || n > max {
        return Err(HubError::InvalidField(format!("{what} must be {min}..{max} characters, got {n}")));
    }
    Ok(())
}

fn validate_tags(tags: &BTreeSet<String>) -> Result<(), HubError> {
    tags.iter().try_for_each(|t| check_len("tag", t, 1, 64))
}

#[derive(Debug, Default, Clone)]
struct Journal {
    events: Vec<EventRecord>,
    context: Vec<ContextRecord>,
}

#[derive(Debug, Default, Clone)]
pub struct Registry {
    feeds: BTreeMap<FeedId, Feed>,
    journals: HashMap<FeedId, Journal>,
    subscriptions: BTreeMap<(KeyId, FeedId), Subscription>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks a feed request without mutating anything.
    pub fn check_new_feed(&self, new: &NewFeed, provider: &ApiKey) -> Result<(), HubError> {
        if self.feeds.contains_key(&new.id) {
            return Err(HubError::DuplicateFeed(new.id.to_string()));
        }
        check_len("feed title", &new.title, 1, 200)?;
        validate_tags(&new.tags)?;
        if provider.revoked || !matches!(provider.role, Role::DataProvider | Role::PlatformOperator) {
            return Err(HubError::UnknownProvider(provider.id.to_string()));
        }
        Ok(())
    }

    pub fn insert_feed(&mut self, new: NewFeed, provider: KeyId, created_at: Timestamp) -> Result<Feed, HubError> {
        if self.feeds.contains_key(&new.id) {
            return Err(HubError::DuplicateFeed(new.id.to_string()));
        }
        let feed = Feed {
            id: new.id,
            title: new.title,
            location: new.location,
            tags: new.tags,
            provider,
            created_at,
            streams: BTreeMap::new(),
        };
        self.journals.insert(feed.id.clone(), Journal::default());
        self.feeds.insert(feed.id.clone(), feed.clone());
        Ok(feed)
    }

    pub fn check_new_stream(&self, feed: &FeedId, stream: &Datastream) -> Result<(), HubError> {
        let f = self.get_feed(feed)?;
        stream.validate()?;
        if f.streams.contains_key(&stream.id) {
            return Err(HubError::DuplicateStream(format!("{feed}/{}", stream.id)));
        }
        Ok(())
    }

    pub fn insert_stream(&mut self, feed: &FeedId, stream: Datastream) -> Result<Datastream, HubError> {
        self.check_new_stream(feed, &stream)?;
        let f = self.feeds.get_mut(feed).ok_or_else(|| HubError::UnknownFeed(feed.to_string()))?;
        f.streams.insert(stream.id.clone(), stream.clone());
        Ok(stream)
    }

    pub fn get_feed(&self, id: &FeedId) -> Result<&Feed, HubError> {
        self.feeds.get(id).ok_or_else(|| HubError::UnknownFeed(id.to_string()))
    }

    pub fn contains_feed(&self, id: &FeedId) -> bool {
        self.feeds.contains_key(id)
    }

    pub fn has_stream(&self, feed: &FeedId, stream: &StreamId) -> bool {
        self.feeds.get(feed).is_some_and(|f| f.streams.contains_key(stream))
    }

    pub fn feeds(&self) -> impl Iterator<Item = &Feed> {
        self.feeds.values()
    }

    /// Feeds matching every supplied filter, id-sorted.
    pub fn list_feeds(&self, tag: Option<&str>, near: Option<(GeoPoint, f64)>) -> Result<Vec<Feed>, HubError> {
        let tagged = self.feeds.values().filter(|f| tag.is_none_or(|t| f.tags.contains(t)));
        let ids: Option<BTreeSet<FeedId>> = match near {
            Some((center, radius)) => Some(feeds_near(self.feeds.values(), center, radius)?.into_iter().collect()),
            None => None,
        };
        Ok(tagged
            .filter(|f| ids.as_ref().is_none_or(|ids| ids.contains(&f.id)))
            .cloned()
            .collect())
    }

    pub fn append_event(&mut self, e: EventRecord) -> Result<(), HubError> {
        e.validate()?;
        let j = self.journals.get_mut(&e.feed).ok_or_else(|| HubError::UnknownFeed(e.feed.to_string()))?;
        j.events.push(e);
        Ok(())
    }

    pub fn append_context(&mut self, c: ContextRecord) -> Result<(), HubError> {
        c.validate()?;
        let j = self.journals.get_mut(&c.feed).ok_or_else(|| HubError::UnknownFeed(c.feed.to_string()))?;
        j.context.push(c);
        Ok(())
    }

    pub fn events(&self, feed: &FeedId) -> Result<&[EventRecord], HubError> {
        self.journals
            .get(feed)
            .map(|j| j.events.as_slice())
            .ok_or_else(|| HubError::UnknownFeed(feed.to_string()))
    }

    pub fn context(&self, feed: &FeedId) -> Result<&[ContextRecord], HubError> {
        self.journals
            .get(feed)
            .map(|j| j.context.as_slice())
            .ok_or_else(|| HubError::UnknownFeed(feed.to_string()))
    }

    pub fn subscription(&self, subscriber: &KeyId, feed: &FeedId) -> Option<&Subscription> {
        self.subscriptions.get(&(subscriber.clone(), feed.clone()))
    }

    pub fn is_subscribed(&self, subscriber: &KeyId, feed: &FeedId) -> bool {
        self.subscription(subscriber, feed).is_some()
    }

    pub fn insert_subscription(&mut self, sub: Subscription) -> Result<Subscription, HubError> {
        self.get_feed(&sub.feed)?;
        let entry = self
            .subscriptions
            .entry((sub.subscriber.clone(), sub.feed.clone()))
            .or_insert(sub);
        Ok(entry.clone())
    }

    pub fn remove_subscription(&mut self, subscriber: &KeyId, feed: &FeedId) -> Result<Subscription, HubError> {
        self.subscriptions
            .remove(&(subscriber.clone(), feed.clone()))
            .ok_or_else(|| HubError::UnknownSubscription(format!("{subscriber} on {feed}")))
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &Subscription> {
        self.subscriptions.values()
    }
}
