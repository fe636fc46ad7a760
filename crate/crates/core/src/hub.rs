//! The hub: registry, key ring, datapoint store and event log behind one
//! façade.
//!
//! Lock order is `state` → stream series → `log`. Registry and key mutations
//! hold the `state` write lock while they log, so they are serialized.
//! Datapoint appends only hold their stream's lock plus the log mutex.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use chrono::Utc;
use parking_lot::{Mutex, RwLock, RwLockReadGuard};

use crate::auth::{self, check_scope, decide, Action, ApiKey, Decision, KeyInfo, KeyScope, Role};
use crate::error::HubError;
use crate::hypercat::{build_catalogue, filter_catalogue, CatalogueDoc};
use crate::log::{parse_records, read_log_file, EventLog, LogEvent, LogRecord};
use crate::model::{Datapoint, FeedId, GeoPoint, KeyId, KeySecret, StreamRef, Timestamp};
use crate::registry::{ContextRecord, Datastream, EventRecord, Feed, NewFeed, Registry, Subscription};
use crate::store::TimeseriesStore;

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub const DEFAULT_DESCRIPTION: &str = "City IoT data hub catalogue";

#[derive(Clone)]
pub struct HubOptions {
    /// `hasDescription:en` value of the catalogue.
    pub description: String,
    /// fsync every log record, not just flush it to the OS.
    pub sync_writes: bool,
    pub clock: Clock,
}

impl Default for HubOptions {
    fn default() -> Self {
        HubOptions { description: DEFAULT_DESCRIPTION.into(), sync_writes: false, clock: Arc::new(Utc::now) }
    }
}

impl std::fmt::Debug for HubOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HubOptions")
            .field("description", &self.description)
            .field("sync_writes", &self.sync_writes)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Default)]
pub(crate) struct KeyRing {
    by_id: HashMap<KeyId, ApiKey>,
    by_secret: HashMap<KeySecret, KeyId>,
}

impl KeyRing {
    pub(crate) fn resolve(&self, secret: &KeySecret) -> Option<&ApiKey> {
        self.by_secret.get(secret).and_then(|id| self.by_id.get(id))
    }

    fn insert(&mut self, key: ApiKey) -> Result<(), HubError> {
        if self.by_id.contains_key(&key.id) || self.by_secret.contains_key(&key.secret) {
            return Err(HubError::InvalidField(format!("key {} collides with an existing key", key.id)));
        }
        self.by_secret.insert(key.secret.clone(), key.id.clone());
        self.by_id.insert(key.id.clone(), key);
        Ok(())
    }

    fn has_operator(&self) -> bool {
        self.by_id.values().any(|k| k.role == Role::PlatformOperator && !k.revoked)
    }
}

#[derive(Debug, Default)]
pub(crate) struct State {
    pub(crate) registry: Registry,
    pub(crate) keys: KeyRing,
}

impl State {
    /// Resolves a secret to a live key.
    pub(crate) fn caller(&self, secret: &KeySecret) -> Result<&ApiKey, HubError> {
        self.keys.resolve(secret).filter(|k| !k.revoked).ok_or(HubError::Unauthorized)
    }

    pub(crate) fn decision(&self, secret: &KeySecret, action: Action, resource: Option<&FeedId>) -> Decision {
        let key = self.keys.resolve(secret);
        let subscribed = match (key, resource) {
            (Some(k), Some(f)) => self.registry.is_subscribed(&k.id, f),
            _ => false,
        };
        decide(key, subscribed, action, resource)
    }

    /// Authenticate, then check the feed exists, then apply the matrix.
    pub(crate) fn authorize_on_feed(&self, secret: &KeySecret, action: Action, feed: &FeedId) -> Result<&ApiKey, HubError> {
        let key = self.caller(secret)?;
        self.registry.get_feed(feed)?;
        self.decision(secret, action, Some(feed)).into_result()?;
        Ok(key)
    }
}

/// Applies one logged event to in-memory state. Shared by live writes
/// (after the record is persisted) and by replay.
fn apply(state: &mut State, store: &TimeseriesStore, event: LogEvent) -> Result<(), HubError> {
    match event {
        LogEvent::FeedCreated(feed) => {
            let new = NewFeed { id: feed.id, title: feed.title, location: feed.location, tags: feed.tags };
            let created = state.registry.insert_feed(new, feed.provider, feed.created_at)?;
            for (_, stream) in feed.streams {
                store.create(StreamRef::new(created.id.clone(), stream.id.clone()));
                state.registry.insert_stream(&created.id, stream)?;
            }
        }
        LogEvent::StreamCreated { feed, stream } => {
            let sref = StreamRef::new(feed.clone(), stream.id.clone());
            state.registry.insert_stream(&feed, stream)?;
            store.create(sref);
        }
        LogEvent::DatapointAppended { feed, stream, at, value } => {
            store.append(&StreamRef::new(feed, stream), Datapoint::new(at, value)?)?;
        }
        LogEvent::EventRecorded(e) => state.registry.append_event(e)?,
        LogEvent::ContextRecorded(c) => state.registry.append_context(c)?,
        LogEvent::KeyIssued(key) => {
            check_scope(key.role, &key.scope)?;
            state.keys.insert(key)?;
        }
        LogEvent::KeyRevoked { id } => {
            let key = state.keys.by_id.get_mut(&id).ok_or_else(|| HubError::UnknownKey(id.to_string()))?;
            key.revoked = true;
        }
        LogEvent::SubscriptionCreated(sub) => {
            if !state.keys.by_id.contains_key(&sub.subscriber) {
                return Err(HubError::UnknownKey(sub.subscriber.to_string()));
            }
            state.registry.insert_subscription(sub)?;
        }
        LogEvent::SubscriptionRevoked { subscriber, feed } => {
            state.registry.remove_subscription(&subscriber, &feed)?;
        }
    }
    Ok(())
}

/// Feed plus the key auto-issued for it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CreatedFeed {
    pub feed: Feed,
    pub key: ApiKey,
}

pub struct Hub {
    pub(crate) state: RwLock<State>,
    pub(crate) store: TimeseriesStore,
    log: Mutex<EventLog>,
    options: HubOptions,
}

impl std::fmt::Debug for Hub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hub").field("options", &self.options).finish_non_exhaustive()
    }
}

impl Hub {
    /// Empty hub whose log lives in memory.
    pub fn in_memory(options: HubOptions) -> Self {
        Hub { state: RwLock::default(), store: TimeseriesStore::new(), log: Mutex::new(EventLog::in_memory()), options }
    }

    /// Rebuilds a hub from log records; later writes go to `log`.
    pub fn replay(records: Vec<LogRecord>, log: EventLog, options: HubOptions) -> Result<Self, HubError> {
        let mut state = State::default();
        let store = TimeseriesStore::new();
        for record in records {
            let seq = record.seq;
            apply(&mut state, &store, record.event)
                .map_err(|e| HubError::CorruptLog(format!("record {seq} cannot be applied: {e}")))?;
        }
        Ok(Hub { state: RwLock::new(state), store, log: Mutex::new(log), options })
    }

    /// Rebuilds an in-memory hub from captured log lines.
    pub fn replay_lines(lines: Vec<String>, options: HubOptions) -> Result<Self, HubError> {
        let records = parse_records(&lines)?;
        Self::replay(records, EventLog::in_memory_from(lines), options)
    }

    /// Opens the hub stored in `dir`, replaying `hub.log`. On an empty log a
    /// bootstrap operator key is issued and returned; it is never returned
    /// again.
    pub fn open(dir: &Path, options: HubOptions) -> Result<(Self, Option<ApiKey>), HubError> {
        std::fs::create_dir_all(dir)?;
        let records = read_log_file(dir)?;
        let last_seq = records.len() as u64;
        let log = EventLog::open_file(dir, last_seq, options.sync_writes)?;
        let hub = Self::replay(records, log, options)?;
        let bootstrap = if last_seq == 0 { hub.bootstrap_operator()? } else { None };
        Ok((hub, bootstrap))
    }

    /// Issues the first operator key if the hub has none.
    pub fn bootstrap_operator(&self) -> Result<Option<ApiKey>, HubError> {
        let mut state = self.state.write();
        if state.keys.has_operator() {
            return Ok(None);
        }
        let key = self.new_key(Role::PlatformOperator, KeyScope::AllFeeds, "bootstrap operator".into());
        self.commit(&mut state, LogEvent::KeyIssued(key.clone()))?;
        Ok(Some(key))
    }

    pub fn options(&self) -> &HubOptions {
        &self.options
    }

    pub(crate) fn now(&self) -> Timestamp {
        (self.options.clock)()
    }

    pub(crate) fn read_state(&self) -> RwLockReadGuard<'_, State> {
        self.state.read()
    }

    fn new_key(&self, role: Role, scope: KeyScope, label: String) -> ApiKey {
        ApiKey {
            id: auth::generate_key_id(),
            secret: auth::generate_secret(),
            role,
            scope,
            label,
            revoked: false,
            created_at: self.now(),
        }
    }

    /// Logs then applies, under the caller's state write lock.
    fn commit(&self, state: &mut State, event: LogEvent) -> Result<(), HubError> {
        self.log.lock().append(self.now(), event.clone())?;
        apply(state, &self.store, event)
    }

    /// Logs a datapoint under its stream lock, then makes it visible.
    pub(crate) fn commit_datapoint(&self, stream: &StreamRef, point: Datapoint) -> Result<(), HubError> {
        self.store.append_with(stream, point, |p| {
            let event = LogEvent::DatapointAppended {
                feed: stream.feed.clone(),
                stream: stream.stream.clone(),
                at: p.at,
                value: p.value.clone(),
            };
            self.log.lock().append(self.now(), event).map(|_| ())
        })
    }

    /// Every log line written so far, in order.
    pub fn log_lines(&self) -> Result<Vec<String>, HubError> {
        self.log.lock().lines()
    }

    pub fn flush(&self) -> Result<(), HubError> {
        self.log.lock().flush()
    }

    // ---- policy -------------------------------------------------------

    /// Pure decision for `(secret, action, resource)`.
    pub fn authorize(&self, secret: &KeySecret, action: Action, resource: Option<&FeedId>) -> Decision {
        self.state.read().decision(secret, action, resource)
    }

    /// Authenticates, checks the feed exists (for feed-bound actions), then
    /// applies the matrix.
    pub fn require(&self, secret: &KeySecret, action: Action, feed: Option<&FeedId>) -> Result<(), HubError> {
        let state = self.state.read();
        match feed {
            Some(f) => state.authorize_on_feed(secret, action, f).map(|_| ()),
            None => {
                state.caller(secret)?;
                state.decision(secret, action, None).into_result()
            }
        }
    }

    pub fn issue_key(&self, caller: &KeySecret, role: Role, scope: KeyScope, label: &str) -> Result<ApiKey, HubError> {
        let mut state = self.state.write();
        state.caller(caller)?;
        state.decision(caller, Action::IssueKey, None).into_result()?;
        check_scope(role, &scope)?;
        if let KeyScope::Feed(feed) = &scope {
            state.registry.get_feed(feed)?;
        }
        let key = self.new_key(role, scope, label.to_string());
        self.commit(&mut state, LogEvent::KeyIssued(key.clone()))?;
        Ok(key)
    }

    pub fn revoke_key(&self, caller: &KeySecret, id: &KeyId) -> Result<KeyInfo, HubError> {
        let mut state = self.state.write();
        state.caller(caller)?;
        state.decision(caller, Action::RevokeKey, None).into_result()?;
        let key = state.keys.by_id.get(id).ok_or_else(|| HubError::UnknownKey(id.to_string()))?;
        if !key.revoked {
            self.commit(&mut state, LogEvent::KeyRevoked { id: id.clone() })?;
        }
        Ok(KeyInfo::from(&state.keys.by_id[id]))
    }

    pub fn key_info(&self, id: &KeyId) -> Result<KeyInfo, HubError> {
        let state = self.state.read();
        state.keys.by_id.get(id).map(KeyInfo::from).ok_or_else(|| HubError::UnknownKey(id.to_string()))
    }

    /// Looks up the public record behind a secret.
    pub fn whoami(&self, secret: &KeySecret) -> Result<KeyInfo, HubError> {
        self.state.read().caller(secret).map(KeyInfo::from)
    }

    // ---- registry -----------------------------------------------------

    /// Registers a feed on behalf of `caller` and auto-issues a
    /// DataProvider key scoped to it.
    pub fn create_feed(&self, caller: &KeySecret, new: NewFeed) -> Result<CreatedFeed, HubError> {
        let mut state = self.state.write();
        let provider = state.caller(caller)?.clone();
        state.decision(caller, Action::CreateFeed, None).into_result()?;
        state.registry.check_new_feed(&new, &provider)?;
        let feed = Feed {
            id: new.id.clone(),
            title: new.title,
            location: new.location,
            tags: new.tags,
            provider: provider.id.clone(),
            created_at: self.now(),
            streams: Default::default(),
        };
        let key = self.new_key(Role::DataProvider, KeyScope::Feed(new.id.clone()), format!("feed key for {}", new.id));
        self.commit(&mut state, LogEvent::FeedCreated(feed.clone()))?;
        self.commit(&mut state, LogEvent::KeyIssued(key.clone()))?;
        Ok(CreatedFeed { feed, key })
    }

    pub fn create_datastream(&self, caller: &KeySecret, feed: &FeedId, stream: Datastream) -> Result<Datastream, HubError> {
        let mut state = self.state.write();
        state.authorize_on_feed(caller, Action::CreateStream, feed)?;
        state.registry.check_new_stream(feed, &stream)?;
        self.commit(&mut state, LogEvent::StreamCreated { feed: feed.clone(), stream: stream.clone() })?;
        Ok(stream)
    }

    /// Creates a stream whose authorization was already established.
    pub(crate) fn create_stream_unchecked(&self, feed: &FeedId, stream: Datastream) -> Result<(), HubError> {
        let mut state = self.state.write();
        if state.registry.has_stream(feed, &stream.id) {
            return Ok(());
        }
        state.registry.check_new_stream(feed, &stream)?;
        self.commit(&mut state, LogEvent::StreamCreated { feed: feed.clone(), stream })
    }

    pub fn get_feed(&self, id: &FeedId) -> Result<Feed, HubError> {
        self.state.read().registry.get_feed(id).cloned()
    }

    pub fn list_feeds(&self, tag: Option<&str>, near: Option<(GeoPoint, f64)>) -> Result<Vec<Feed>, HubError> {
        self.state.read().registry.list_feeds(tag, near)
    }

    pub fn record_event(&self, caller: &KeySecret, event: EventRecord) -> Result<(), HubError> {
        let mut state = self.state.write();
        state.authorize_on_feed(caller, Action::Ingest, &event.feed)?;
        event.validate()?;
        self.commit(&mut state, LogEvent::EventRecorded(event))
    }

    pub fn record_context(&self, caller: &KeySecret, record: ContextRecord) -> Result<(), HubError> {
        let mut state = self.state.write();
        state.authorize_on_feed(caller, Action::Ingest, &record.feed)?;
        record.validate()?;
        self.commit(&mut state, LogEvent::ContextRecorded(record))
    }

    pub fn events(&self, caller: &KeySecret, feed: &FeedId) -> Result<Vec<EventRecord>, HubError> {
        let state = self.state.read();
        state.authorize_on_feed(caller, Action::ReadData, feed)?;
        Ok(state.registry.events(feed)?.to_vec())
    }

    pub fn context(&self, caller: &KeySecret, feed: &FeedId) -> Result<Vec<ContextRecord>, HubError> {
        let state = self.state.read();
        state.authorize_on_feed(caller, Action::ReadData, feed)?;
        Ok(state.registry.context(feed)?.to_vec())
    }

    /// Idempotent: re-subscribing returns the existing subscription.
    pub fn subscribe(&self, caller: &KeySecret, feed: &FeedId) -> Result<Subscription, HubError> {
        let mut state = self.state.write();
        let key_id = state.authorize_on_feed(caller, Action::Subscribe, feed)?.id.clone();
        if let Some(existing) = state.registry.subscription(&key_id, feed) {
            return Ok(existing.clone());
        }
        let sub = Subscription { subscriber: key_id, feed: feed.clone(), created_at: self.now() };
        self.commit(&mut state, LogEvent::SubscriptionCreated(sub.clone()))?;
        Ok(sub)
    }

    /// Operator-only removal of a developer's subscription.
    pub fn revoke_subscription(&self, caller: &KeySecret, subscriber: &KeyId, feed: &FeedId) -> Result<Subscription, HubError> {
        let mut state = self.state.write();
        state.caller(caller)?;
        state.decision(caller, Action::RevokeKey, None).into_result()?;
        let sub = state
            .registry
            .subscription(subscriber, feed)
            .cloned()
            .ok_or_else(|| HubError::UnknownSubscription(format!("{subscriber} on {feed}")))?;
        self.commit(&mut state, LogEvent::SubscriptionRevoked { subscriber: subscriber.clone(), feed: feed.clone() })?;
        Ok(sub)
    }

    // ---- discovery ----------------------------------------------------

    /// Hypercat catalogue over a consistent snapshot of the registry.
    pub fn catalogue(&self, rel: Option<&str>, val: Option<&str>) -> CatalogueDoc {
        let state = self.state.read();
        let doc = build_catalogue(state.registry.feeds(), &self.options.description);
        filter_catalogue(&doc, rel, val)
    }
}
