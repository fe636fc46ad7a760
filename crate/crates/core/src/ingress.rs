//! Provider-side ingestion: authorize, parse EEML, route data elements to
//! datastreams.

use serde::{Deserialize, Serialize};

use crate::auth::Action;
use crate::eeml::{parse_eeml, EnvironmentDocument};
use crate::error::HubError;
use crate::hub::Hub;
use crate::model::{Datapoint, FeedId, KeySecret, StreamRef};
use crate::registry::{ContextRecord, Datastream, EventRecord};

pub const REJECT_UNKNOWN_STREAM: &str = "unknown-stream";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

/// Outcome of one document. `accepted + rejected.len()` equals the number
/// of data elements submitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub feed: FeedId,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

impl IngestReport {
    pub fn total(&self) -> usize {
        self.accepted + self.rejected.len()
    }
}

impl Hub {
    /// Parses `body` and routes its elements. A parse failure stores
    /// nothing; after that each element stands on its own.
    pub fn ingest_eeml(&self, feed: &FeedId, key: &KeySecret, body: &[u8], strict: bool) -> Result<IngestReport, HubError> {
        self.read_state().authorize_on_feed(key, Action::Ingest, feed)?;
        let doc = parse_eeml(body)?;
        self.ingest_document(feed, key, &doc, strict)
    }

    pub fn ingest_document(
        &self,
        feed: &FeedId,
        key: &KeySecret,
        doc: &EnvironmentDocument,
        strict: bool,
    ) -> Result<IngestReport, HubError> {
        let may_create = {
            let state = self.read_state();
            state.authorize_on_feed(key, Action::Ingest, feed)?;
            !strict && state.decision(key, Action::CreateStream, Some(feed)).allow
        };
        let mut report = IngestReport { feed: feed.clone(), accepted: 0, rejected: Vec::new() };
        for el in &doc.data_elements {
            let stream = StreamRef::new(feed.clone(), el.id.clone());
            let known = self.read_state().registry.has_stream(feed, &el.id);
            if !known {
                if !may_create {
                    report.rejected.push(Rejection { id: el.id.to_string(), reason: REJECT_UNKNOWN_STREAM.into() });
                    continue;
                }
                if let Err(e) = self.create_stream_unchecked(feed, Datastream::new(el.id.clone(), "", "")) {
                    report.rejected.push(Rejection { id: el.id.to_string(), reason: e.code().into() });
                    continue;
                }
            }
            let outcome = Datapoint::new(el.at, el.current_value.clone()).and_then(|p| self.commit_datapoint(&stream, p));
            match outcome {
                Ok(()) => report.accepted += 1,
                Err(e @ HubError::Storage(_)) => return Err(e),
                Err(e) => report.rejected.push(Rejection { id: el.id.to_string(), reason: e.code().into() }),
            }
        }
        Ok(report)
    }

    pub fn ingest_event(&self, feed: &FeedId, key: &KeySecret, mut event: EventRecord) -> Result<(), HubError> {
        event.feed = feed.clone();
        self.record_event(key, event)
    }

    pub fn ingest_context(&self, feed: &FeedId, key: &KeySecret, mut record: ContextRecord) -> Result<(), HubError> {
        record.feed = feed.clone();
        self.record_context(key, record)
    }
}
