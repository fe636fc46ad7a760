//! REST binding of the hub.
//!
//! | route                                                       | policy              |
//! |-------------------------------------------------------------|---------------------|
//! | `POST /v1/feeds`                                            | create_feed         |
//! | `GET  /v1/feeds[?tag=&lat=&lon=&radius_km=]`                | public              |
//! | `GET  /v1/feeds/{fid}` (EEML snapshot)                      | read_latest         |
//! | `PUT  /v1/feeds/{fid}[?strict=false]` (EEML ingest)         | ingest              |
//! | `POST /v1/feeds/{fid}/datastreams`                          | create_stream       |
//! | `GET  /v1/feeds/{fid}/datastreams/{sid}/datapoints`         | read_data           |
//! | `GET  /v1/feeds/{fid}/datastreams/{sid}/aggregate`          | read_data           |
//! | `GET  /v1/feeds/{fid}/datastreams/{sid}/latest`             | read_latest         |
//! | `POST`/`GET /v1/feeds/{fid}/events`, `.../context`          | ingest / read_data  |
//! | `POST /v1/subscriptions`                                    | subscribe           |
//! | `DELETE /v1/subscriptions/{key_id}/{fid}`                   | operator            |
//! | `POST /v1/keys`, `POST /v1/keys/{id}/revoke`                | issue/revoke        |
//! | `GET  /cat[?rel=&val=]`                                     | public              |
//!
//! Status codes: 400 bad input, 401 missing/unknown/revoked key, 403 policy
//! deny, 404 unknown resource, 409 duplicate. Error bodies are
//! `{"code": ..., "message": ...}`.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::auth::{Action, KeyScope, Role};
use crate::eeml::serialize_eeml;
use crate::egress::AggregateFn;
use crate::error::HubError;
use crate::hub::{Hub, HubOptions};
use crate::hypercat::{serialize_catalogue, CATALOGUE_CONTENT_TYPE};
use crate::model::{parse_timestamp, timestamp_serde, FeedId, GeoPoint, KeyId, KeySecret, StreamId, StreamRef, Timestamp};
use crate::registry::{ContextRecord, Datastream, EventRecord, Feed, NewFeed};

pub const API_KEY_HEADER: &str = "x-api-key";
const JSON: &str = "application/json";
const XML: &str = "application/xml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

/// HTTP status for each error class.
pub fn status_for(err: &HubError) -> StatusCode {
    use HubError::*;
    match err {
        InvalidId(_) | InvalidLocation(_) | InvalidField(_) | InvalidScope(_) | InvalidFilter(_) | InvalidRange(_)
        | InvalidWindow(_) | InvalidDatapoint(_) | MalformedDocument(_) | BadRequest(_) => StatusCode::BAD_REQUEST,
        Unauthorized => StatusCode::UNAUTHORIZED,
        Forbidden(_) => StatusCode::FORBIDDEN,
        UnknownFeed(_) | UnknownStream(_) | UnknownProvider(_) | UnknownKey(_) | UnknownSubscription(_)
        | EmptyFeed(_) | UnknownRoute(_) => StatusCode::NOT_FOUND,
        MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
        DuplicateFeed(_) | DuplicateStream(_) => StatusCode::CONFLICT,
        CorruptLog(_) | Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct ApiError(HubError);

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.0.code().into(), message: self.0.to_string() };
        let bytes = serde_json::to_vec(&body).unwrap_or_default();
        (status_for(&self.0), [(header::CONTENT_TYPE, JSON)], bytes).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn json<T: Serialize>(status: StatusCode, value: &T) -> ApiResult {
    let bytes = serde_json::to_vec(value).map_err(|e| HubError::Storage(e.to_string()))?;
    Ok((status, [(header::CONTENT_TYPE, JSON)], bytes).into_response())
}

fn api_key(headers: &HeaderMap) -> Result<KeySecret, HubError> {
    headers
        .get(API_KEY_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|v| !v.is_empty())
        .map(KeySecret::new)
        .ok_or(HubError::Unauthorized)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, HubError> {
    serde_json::from_slice(body).map_err(|e| HubError::BadRequest(format!("invalid JSON body: {e}")))
}

struct Params(HashMap<String, String>);

impl Params {
    fn new(raw: Option<String>) -> Self {
        let raw = raw.unwrap_or_default();
        Params(form_urlencoded::parse(raw.as_bytes()).into_owned().collect())
    }

    fn str(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, HubError> {
        self.str(name)
            .map(|v| v.parse().map_err(|_| HubError::BadRequest(format!("invalid value {v:?} for {name}"))))
            .transpose()
    }

    fn time(&self, name: &str) -> Result<Option<Timestamp>, HubError> {
        self.str(name)
            .map(|v| parse_timestamp(v).ok_or_else(|| HubError::BadRequest(format!("{name} must be ISO-8601 UTC with Z, got {v:?}"))))
            .transpose()
    }

    fn required<T>(&self, name: &str, value: Option<T>) -> Result<T, HubError> {
        value.ok_or_else(|| HubError::BadRequest(format!("missing query parameter {name}")))
    }
}

fn feed_id(raw: &str) -> Result<FeedId, HubError> {
    FeedId::new(raw)
}

fn stream_ref(fid: &str, sid: &str) -> Result<StreamRef, HubError> {
    Ok(StreamRef::new(FeedId::new(fid)?, StreamId::new(sid)?))
}

/// Public listing entry: a feed without its provider key id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedSummary {
    pub id: FeedId,
    pub title: String,
    pub location: GeoPoint,
    pub tags: Vec<String>,
    #[serde(with = "timestamp_serde")]
    pub created_at: Timestamp,
    pub streams: Vec<Datastream>,
}

impl From<Feed> for FeedSummary {
    fn from(f: Feed) -> Self {
        FeedSummary {
            id: f.id,
            title: f.title,
            location: f.location,
            tags: f.tags.into_iter().collect(),
            created_at: f.created_at,
            streams: f.streams.into_values().collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubscribeRequest {
    pub feed_id: FeedId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IssueKeyRequest {
    pub role: Role,
    #[serde(default)]
    pub feed_id: Option<FeedId>,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventBody {
    #[serde(with = "timestamp_serde")]
    pub at: Timestamp,
    pub kind: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextBody {
    #[serde(with = "timestamp_serde")]
    pub at: Timestamp,
    pub key: String,
    #[serde(default)]
    pub value: String,
}

/// Wire shapes decoded before domain validation, so a bad id or
/// coordinate reports its own error code rather than `bad-request`.
#[derive(Deserialize)]
struct WirePoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct WireFeed {
    id: String,
    title: String,
    location: WirePoint,
    #[serde(default)]
    tags: std::collections::BTreeSet<String>,
}

impl WireFeed {
    fn into_new_feed(self) -> Result<NewFeed, HubError> {
        Ok(NewFeed {
            id: FeedId::new(self.id)?,
            title: self.title,
            location: GeoPoint::new(self.location.lat, self.location.lon)?,
            tags: self.tags,
        })
    }
}

#[derive(Deserialize)]
struct WireStream {
    id: String,
    #[serde(default)]
    unit_label: String,
    #[serde(default)]
    unit_symbol: String,
    #[serde(default)]
    tags: std::collections::BTreeSet<String>,
}

#[derive(Deserialize)]
struct WireFeedRef {
    feed_id: String,
}

type AppState = State<Arc<Hub>>;

async fn create_feed(State(hub): AppState, headers: HeaderMap, body: Bytes) -> ApiResult {
    let key = api_key(&headers)?;
    hub.require(&key, Action::CreateFeed, None)?;
    let new = parse_body::<WireFeed>(&body)?.into_new_feed()?;
    json(StatusCode::CREATED, &hub.create_feed(&key, new)?)
}

async fn list_feeds(State(hub): AppState, RawQuery(q): RawQuery) -> ApiResult {
    let p = Params::new(q);
    let lat: Option<f64> = p.parsed("lat")?;
    let lon: Option<f64> = p.parsed("lon")?;
    let radius: Option<f64> = p.parsed("radius_km")?;
    let near = match (lat, lon, radius) {
        (None, None, None) => None,
        (Some(lat), Some(lon), Some(r)) => {
            Some((GeoPoint::new(lat, lon).map_err(|e| HubError::InvalidFilter(e.to_string()))?, r))
        }
        _ => return Err(HubError::InvalidFilter("lat, lon and radius_km must be given together".into()).into()),
    };
    let feeds: Vec<FeedSummary> = hub.list_feeds(p.str("tag"), near)?.into_iter().map(Into::into).collect();
    json(StatusCode::OK, &feeds)
}

async fn feed_snapshot(State(hub): AppState, Path(fid): Path<String>, headers: HeaderMap) -> ApiResult {
    let key = api_key(&headers)?;
    let doc = hub.snapshot(&feed_id(&fid)?, &key)?;
    let bytes = serialize_eeml(&doc).map_err(HubError::from)?;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, XML)], bytes).into_response())
}

async fn ingest(State(hub): AppState, Path(fid): Path<String>, headers: HeaderMap, RawQuery(q): RawQuery, body: Bytes) -> ApiResult {
    let key = api_key(&headers)?;
    let strict = Params::new(q).parsed::<bool>("strict")?.unwrap_or(true);
    json(StatusCode::OK, &hub.ingest_eeml(&feed_id(&fid)?, &key, &body, strict)?)
}

async fn create_stream(State(hub): AppState, Path(fid): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let key = api_key(&headers)?;
    let feed = feed_id(&fid)?;
    hub.require(&key, Action::CreateStream, Some(&feed))?;
    let wire: WireStream = parse_body(&body)?;
    let stream = Datastream { id: StreamId::new(wire.id)?, unit_label: wire.unit_label, unit_symbol: wire.unit_symbol, tags: wire.tags };
    json(StatusCode::CREATED, &hub.create_datastream(&key, &feed, stream)?)
}

async fn datapoints(
    State(hub): AppState,
    Path((fid, sid)): Path<(String, String)>,
    headers: HeaderMap,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let key = api_key(&headers)?;
    let p = Params::new(q);
    let start = p.time("start")?.unwrap_or(Timestamp::MIN_UTC);
    let end = p.time("end")?.unwrap_or(Timestamp::MAX_UTC);
    let limit = p.parsed::<usize>("limit")?.unwrap_or(usize::MAX);
    json(StatusCode::OK, &hub.read_datapoints(&stream_ref(&fid, &sid)?, start, end, limit, &key)?)
}

async fn aggregate(
    State(hub): AppState,
    Path((fid, sid)): Path<(String, String)>,
    headers: HeaderMap,
    RawQuery(q): RawQuery,
) -> ApiResult {
    let key = api_key(&headers)?;
    let p = Params::new(q);
    let function: AggregateFn = p.required("fn", p.parsed("fn")?)?;
    let window = p.required("window_s", p.parsed::<u64>("window_s")?)?;
    let start = p.required("start", p.time("start")?)?;
    let end = p.required("end", p.time("end")?)?;
    json(StatusCode::OK, &hub.aggregate(&stream_ref(&fid, &sid)?, function, window, start, end, &key)?)
}

async fn latest(State(hub): AppState, Path((fid, sid)): Path<(String, String)>, headers: HeaderMap) -> ApiResult {
    let key = api_key(&headers)?;
    let r = stream_ref(&fid, &sid)?;
    json(StatusCode::OK, &hub.latest(&r.feed, &r.stream, &key)?)
}

async fn post_event(State(hub): AppState, Path(fid): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let key = api_key(&headers)?;
    let feed = feed_id(&fid)?;
    let b: EventBody = parse_body(&body)?;
    let record = EventRecord { feed: feed.clone(), at: b.at, kind: b.kind, description: b.description };
    hub.ingest_event(&feed, &key, record.clone())?;
    json(StatusCode::CREATED, &record)
}

async fn get_events(State(hub): AppState, Path(fid): Path<String>, headers: HeaderMap) -> ApiResult {
    let key = api_key(&headers)?;
    json(StatusCode::OK, &hub.events(&key, &feed_id(&fid)?)?)
}

async fn post_context(State(hub): AppState, Path(fid): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let key = api_key(&headers)?;
    let feed = feed_id(&fid)?;
    let b: ContextBody = parse_body(&body)?;
    let record = ContextRecord { feed: feed.clone(), at: b.at, key: b.key, value: b.value };
    hub.ingest_context(&feed, &key, record.clone())?;
    json(StatusCode::CREATED, &record)
}

async fn get_context(State(hub): AppState, Path(fid): Path<String>, headers: HeaderMap) -> ApiResult {
    let key = api_key(&headers)?;
    json(StatusCode::OK, &hub.context(&key, &feed_id(&fid)?)?)
}

async fn subscribe(State(hub): AppState, headers: HeaderMap, body: Bytes) -> ApiResult {
    let key = api_key(&headers)?;
    let req: WireFeedRef = parse_body(&body)?;
    json(StatusCode::OK, &hub.subscribe(&key, &FeedId::new(req.feed_id)?)?)
}

async fn unsubscribe(State(hub): AppState, Path((kid, fid)): Path<(String, String)>, headers: HeaderMap) -> ApiResult {
    let key = api_key(&headers)?;
    json(StatusCode::OK, &hub.revoke_subscription(&key, &KeyId::new(kid)?, &feed_id(&fid)?)?)
}

async fn issue_key(State(hub): AppState, headers: HeaderMap, body: Bytes) -> ApiResult {
    let key = api_key(&headers)?;
    let req: IssueKeyRequest = parse_body(&body)?;
    let scope = req.feed_id.map(KeyScope::Feed).unwrap_or(KeyScope::AllFeeds);
    json(StatusCode::CREATED, &hub.issue_key(&key, req.role, scope, &req.label)?)
}

async fn revoke_key(State(hub): AppState, Path(id): Path<String>, headers: HeaderMap) -> ApiResult {
    let key = api_key(&headers)?;
    json(StatusCode::OK, &hub.revoke_key(&key, &KeyId::new(id)?)?)
}

async fn catalogue(State(hub): AppState, RawQuery(q): RawQuery) -> ApiResult {
    let p = Params::new(q);
    let doc = hub.catalogue(p.str("rel"), p.str("val"));
    let bytes = serialize_catalogue(&doc).map_err(|e| HubError::Storage(e.to_string()))?;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, HeaderValue::from_static(CATALOGUE_CONTENT_TYPE))], bytes).into_response())
}

async fn not_found(uri: axum::http::Uri) -> ApiError {
    ApiError(HubError::UnknownRoute(uri.path().to_string()))
}

async fn wrong_method() -> ApiError {
    ApiError(HubError::MethodNotAllowed)
}

/// The full route table over a shared hub.
pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/cat", get(catalogue))
        .route("/v1/feeds", post(create_feed).get(list_feeds))
        .route("/v1/feeds/{fid}", get(feed_snapshot).put(ingest))
        .route("/v1/feeds/{fid}/datastreams", post(create_stream))
        .route("/v1/feeds/{fid}/datastreams/{sid}/datapoints", get(datapoints))
        .route("/v1/feeds/{fid}/datastreams/{sid}/aggregate", get(aggregate))
        .route("/v1/feeds/{fid}/datastreams/{sid}/latest", get(latest))
        .route("/v1/feeds/{fid}/events", post(post_event).get(get_events))
        .route("/v1/feeds/{fid}/context", post(post_context).get(get_context))
        .route("/v1/subscriptions", post(subscribe))
        .route("/v1/subscriptions/{kid}/{fid}", delete(unsubscribe))
        .route("/v1/keys", post(issue_key))
        .route("/v1/keys/{id}/revoke", post(revoke_key))
        .fallback(not_found)
        .method_not_allowed_fallback(wrong_method)
        .with_state(hub)
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: std::io::Error },
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Serves `hub` on `listener` until `shutdown` resolves, then flushes the log.
pub async fn serve_on(listener: TcpListener, hub: Arc<Hub>, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
    axum::serve(listener, router(hub.clone())).with_graceful_shutdown(shutdown).await?;
    hub.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: String,
    pub data_dir: PathBuf,
    pub options: HubOptions,
}

/// A hub opened from disk and bound to its address, ready to serve.
#[derive(Debug)]
pub struct BoundService {
    pub hub: Arc<Hub>,
    pub listener: TcpListener,
    /// Present only on the very first start of an empty data directory.
    pub bootstrap_key: Option<crate::auth::ApiKey>,
}

impl BoundService {
    pub async fn open(config: &ServeConfig) -> Result<Self, ServeError> {
        let (hub, bootstrap_key) = Hub::open(&config.data_dir, config.options.clone())?;
        let listener = TcpListener::bind(&config.addr)
            .await
            .map_err(|source| ServeError::BindFailure { addr: config.addr.clone(), source })?;
        Ok(BoundService { hub: Arc::new(hub), listener, bootstrap_key })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServeError> {
        Ok(self.listener.local_addr()?)
    }

    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
        serve_on(self.listener, self.hub, shutdown).await
    }
}

/// Handle to a server running on a background task.
#[derive(Debug)]
pub struct RunningServer {
    pub addr: SocketAddr,
    pub hub: Arc<Hub>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<Result<(), ServeError>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting requests, waits for in-flight ones, flushes the log.
    pub async fn shutdown(mut self) -> Result<(), ServeError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.task.await.map_err(|e| ServeError::Io(std::io::Error::other(e)))?
    }
}

/// Binds `addr` (use port 0 for an ephemeral port) and serves `hub` on a
/// background task.
pub async fn spawn(hub: Arc<Hub>, addr: &str) -> Result<RunningServer, ServeError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::BindFailure { addr: addr.to_string(), source })?;
    let local = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(serve_on(listener, hub.clone(), async {
        let _ = rx.await;
    }));
    Ok(RunningServer { addr: local, hub, stop: Some(tx), task })
}
