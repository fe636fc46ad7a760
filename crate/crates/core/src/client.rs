//! Thin async client for the hub's REST surface.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::auth::{ApiKey, KeyInfo, Role};
use crate::egress::{AggregateBucket, AggregateFn};
use crate::http::{ErrorBody, FeedSummary, IssueKeyRequest, SubscribeRequest, API_KEY_HEADER};
use crate::hub::CreatedFeed;
use crate::hypercat::{parse_catalogue, CatalogueDoc};
use crate::ingress::IngestReport;
use crate::model::{format_timestamp, Datapoint, FeedId, KeyId, KeySecret, StreamRef, Timestamp};
use crate::registry::{Datastream, NewFeed, Subscription};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("hub unreachable at {url}: {message}")]
    Unreachable { url: String, message: String },
    #[error("hub answered {status}: {}", error.as_ref().map(|e| format!("{} ({})", e.code, e.message)).unwrap_or_default())]
    Api { status: StatusCode, error: Option<ErrorBody>, body: Vec<u8> },
    #[error("cannot decode hub response: {0}")]
    Decode(String),
    #[error("invalid hub URL {0:?}")]
    BadUrl(String),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { error: Some(e), .. } => Some(&e.code),
            _ => None,
        }
    }

    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// Successful response, body untouched.
#[derive(Debug, Clone)]
pub struct RawResponse {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl RawResponse {
    pub fn json<T: DeserializeOwned>(&self) -> Result<T, ClientError> {
        serde_json::from_slice(&self.body).map_err(|e| ClientError::Decode(e.to_string()))
    }
}

pub enum Body {
    None,
    Json(Vec<u8>),
    Xml(Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct HubClient {
    base: String,
    key: Option<KeySecret>,
    http: reqwest::Client,
}

impl HubClient {
    pub fn new(base_url: &str, key: Option<KeySecret>) -> Result<Self, ClientError> {
        let base = base_url.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) || reqwest::Url::parse(&base).is_err() {
            return Err(ClientError::BadUrl(base_url.to_string()));
        }
        Ok(HubClient { base, key, http: reqwest::Client::new() })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub fn with_key(&self, key: KeySecret) -> Self {
        HubClient { key: Some(key), ..self.clone() }
    }

    /// Sends one request; non-2xx answers become [`ClientError::Api`].
    pub async fn send(&self, method: Method, path: &str, query: &[(&str, String)], body: Body) -> Result<RawResponse, ClientError> {
        let url = format!("{}{}", self.base, path);
        let mut req = self.http.request(method, &url).query(query);
        if let Some(key) = &self.key {
            req = req.header(API_KEY_HEADER, key.as_str());
        }
        req = match body {
            Body::None => req,
            Body::Json(b) => req.header("content-type", "application/json").body(b),
            Body::Xml(b) => req.header("content-type", "application/xml").body(b),
        };
        let resp = req
            .send()
            .await
            .map_err(|e| ClientError::Unreachable { url: url.clone(), message: e.to_string() })?;
        let status = resp.status();
        let content_type = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).map(str::to_string);
        let body = resp
            .bytes()
            .await
            .map_err(|e| ClientError::Unreachable { url, message: e.to_string() })?
            .to_vec();
        if !status.is_success() {
            let error = serde_json::from_slice(&body).ok();
            return Err(ClientError::Api { status, error, body });
        }
        Ok(RawResponse { status, content_type, body })
    }

    fn json_body<T: Serialize>(value: &T) -> Result<Body, ClientError> {
        serde_json::to_vec(value).map(Body::Json).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn create_feed(&self, new: &NewFeed) -> Result<CreatedFeed, ClientError> {
        self.send(Method::POST, "/v1/feeds", &[], Self::json_body(new)?).await?.json()
    }

    pub async fn list_feeds(&self, query: &[(&str, String)]) -> Result<Vec<FeedSummary>, ClientError> {
        self.send(Method::GET, "/v1/feeds", query, Body::None).await?.json()
    }

    pub async fn create_datastream(&self, feed: &FeedId, stream: &Datastream) -> Result<Datastream, ClientError> {
        let path = format!("/v1/feeds/{feed}/datastreams");
        self.send(Method::POST, &path, &[], Self::json_body(stream)?).await?.json()
    }

    pub async fn ingest(&self, feed: &FeedId, eeml: Vec<u8>, strict: bool) -> Result<IngestReport, ClientError> {
        let query = if strict { vec![] } else { vec![("strict", "false".to_string())] };
        self.send(Method::PUT, &format!("/v1/feeds/{feed}"), &query, Body::Xml(eeml)).await?.json()
    }

    /// Raw EEML snapshot bytes.
    pub async fn snapshot(&self, feed: &FeedId) -> Result<Vec<u8>, ClientError> {
        Ok(self.send(Method::GET, &format!("/v1/feeds/{feed}"), &[], Body::None).await?.body)
    }

    pub async fn datapoints(
        &self,
        stream: &StreamRef,
        start: Option<Timestamp>,
        end: Option<Timestamp>,
        limit: Option<usize>,
    ) -> Result<Vec<Datapoint>, ClientError> {
        let mut query = Vec::new();
        if let Some(s) = start {
            query.push(("start", format_timestamp(&s)));
        }
        if let Some(e) = end {
            query.push(("end", format_timestamp(&e)));
        }
        if let Some(l) = limit {
            query.push(("limit", l.to_string()));
        }
        let path = format!("/v1/feeds/{}/datastreams/{}/datapoints", stream.feed, stream.stream);
        self.send(Method::GET, &path, &query, Body::None).await?.json()
    }

    pub async fn latest(&self, stream: &StreamRef) -> Result<Option<Datapoint>, ClientError> {
        let path = format!("/v1/feeds/{}/datastreams/{}/latest", stream.feed, stream.stream);
        self.send(Method::GET, &path, &[], Body::None).await?.json()
    }

    pub async fn aggregate(
        &self,
        stream: &StreamRef,
        function: AggregateFn,
        window_s: u64,
        start: Timestamp,
        end: Timestamp,
    ) -> Result<Vec<AggregateBucket>, ClientError> {
        let query = [
            ("fn", function.to_string()),
            ("window_s", window_s.to_string()),
            ("start", format_timestamp(&start)),
            ("end", format_timestamp(&end)),
        ];
        let path = format!("/v1/feeds/{}/datastreams/{}/aggregate", stream.feed, stream.stream);
        self.send(Method::GET, &path, &query, Body::None).await?.json()
    }

    pub async fn subscribe(&self, feed: &FeedId) -> Result<Subscription, ClientError> {
        let req = SubscribeRequest { feed_id: feed.clone() };
        self.send(Method::POST, "/v1/subscriptions", &[], Self::json_body(&req)?).await?.json()
    }

    pub async fn issue_key(&self, role: Role, feed: Option<FeedId>, label: &str) -> Result<ApiKey, ClientError> {
        let req = IssueKeyRequest { role, feed_id: feed, label: label.to_string() };
        self.send(Method::POST, "/v1/keys", &[], Self::json_body(&req)?).await?.json()
    }

    pub async fn revoke_key(&self, id: &KeyId) -> Result<KeyInfo, ClientError> {
        self.send(Method::POST, &format!("/v1/keys/{id}/revoke"), &[], Body::None).await?.json()
    }

    pub async fn catalogue(&self, rel: Option<&str>, val: Option<&str>) -> Result<CatalogueDoc, ClientError> {
        let mut query = Vec::new();
        if let Some(r) = rel {
            query.push(("rel", r.to_string()));
        }
        if let Some(v) = val {
            query.push(("val", v.to_string()));
        }
        let raw = self.send(Method::GET, "/cat", &query, Body::None).await?;
        parse_catalogue(&raw.body).map_err(|e| ClientError::Decode(e.to_string()))
    }
}
