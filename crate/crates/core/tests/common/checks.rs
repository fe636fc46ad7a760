//! One check per acceptance criterion. Each returns a short summary on
//! success and a description of the first discrepancy on failure.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::TimeDelta;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, TestRng, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use cityhub::adapter::Adapter;
use cityhub::auth::{Action, ApiKey, KeyScope, Role};
use cityhub::client::HubClient;
use cityhub::eeml::{parse_eeml, serialize_eeml, DataElement, EnvironmentDocument};
use cityhub::egress::AggregateFn;
use cityhub::fixtures::{weather_streams, EMIRATES, WEATHER_COLUMNS};
use cityhub::http::{self, API_KEY_HEADER};
use cityhub::hypercat::{feed_href, validate_serialized, CATALOGUE_CONTENT_TYPE, REL_DESCRIPTION_EN, REL_LAT, REL_LONG};
use cityhub::model::{format_timestamp, FeedId, GeoPoint, KeySecret, StreamId, StreamRef, Timestamp};
use cityhub::registry::{Datastream, NewFeed};
use cityhub::{Hub, HubError};

use super::*;

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn feed_id(s: &str) -> FeedId {
    FeedId::new(s).unwrap()
}

fn stream_id(s: &str) -> StreamId {
    StreamId::new(s).unwrap()
}

pub fn operator_hub(options: HubOptions) -> (Arc<Hub>, KeySecret) {
    let hub = Hub::in_memory(options);
    let op = hub.bootstrap_operator().unwrap().expect("fresh hub has no operator");
    (Arc::new(hub), op.secret)
}

pub fn new_feed(id: &str, lat: f64, lon: f64, tags: &[&str]) -> NewFeed {
    NewFeed {
        id: feed_id(id),
        title: format!("{id} title"),
        location: GeoPoint::new(lat, lon).unwrap(),
        tags: tags.iter().map(|t| t.to_string()).collect(),
    }
}

pub fn one_point_doc(stream: &str, at: Timestamp, value: &str) -> EnvironmentDocument {
    EnvironmentDocument {
        environment_id: None,
        updated: at,
        title: "t".into(),
        location: None,
        data_elements: vec![DataElement {
            id: stream_id(stream),
            tags: vec![],
            current_value: value.into(),
            at,
            unit_label: None,
            unit_symbol: None,
        }],
    }
}

// ---- 1: UAE scenario -----------------------------------------------------

pub async fn uae_scenario() -> Outcome {
    let started = Instant::now();
    let (hub, op) = operator_hub(HubOptions::default());
    let server = http::spawn(hub, "127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let admin = HubClient::new(&server.url(), Some(op)).unwrap();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    for e in EMIRATES {
        let created = admin.create_feed(&e.new_feed()).await.map_err(|err| err.to_string())?;
        let provider = admin.with_key(created.key.secret.clone());
        for stream in weather_streams() {
            provider.create_datastream(&e.feed_id(), &stream).await.map_err(|err| err.to_string())?;
        }
        let csv = dir.path().join(format!("{}.csv", e.feed_id));
        std::fs::write(&csv, e.day_csv()).map_err(|err| err.to_string())?;
        let mut adapter = Adapter::new(e.mapping(), &csv, provider);
        let summary = adapter.run_cycle().await.map_err(|err| err.to_string())?;
        ensure!(
            summary.submitted == 24 && summary.accepted == 120 && summary.rejected == 0,
            "{}: adapter summary {summary}",
            e.feed_id
        );
    }

    for e in EMIRATES {
        let rows = e.day_rows();
        let last = rows.last().unwrap();
        for (i, (_, sid, _, _)) in WEATHER_COLUMNS.iter().enumerate() {
            let stream = StreamRef::new(e.feed_id(), stream_id(sid));
            let points = admin.datapoints(&stream, None, None, None).await.map_err(|err| err.to_string())?;
            ensure!(points.len() == 24, "{stream}: {} datapoints", points.len());
            for (p, row) in points.iter().zip(&rows) {
                ensure!(format_timestamp(&p.at) == row[0] && p.value == row[i + 1], "{stream}: {p:?} vs row {row:?}");
            }
            let latest = admin.latest(&stream).await.map_err(|err| err.to_string())?.ok_or(format!("{stream}: no latest"))?;
            ensure!(
                latest.value == last[i + 1] && format_timestamp(&latest.at) == last[0],
                "{stream}: latest {latest:?}, last row {last:?}"
            );
        }
    }

    let resp = reqwest::get(format!("{}/cat", server.url())).await.map_err(|e| e.to_string())?;
    ensure!(resp.status() == 200, "/cat status {}", resp.status());
    let ctype = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).unwrap_or("").to_string();
    ensure!(ctype == CATALOGUE_CONTENT_TYPE, "/cat content type {ctype:?}");
    let body = resp.bytes().await.map_err(|e| e.to_string())?;
    let cat = validate_serialized(&body).map_err(|e| format!("/cat not conformant: {e}"))?;
    ensure!(cat.items.len() == 7, "/cat lists {} items", cat.items.len());
    for (item, e) in cat.items.iter().zip(EMIRATES) {
        ensure!(item.href == feed_href(e.feed_id), "item href {}", item.href);
        let has = |rel: &str| item.item_metadata.iter().any(|p| p.rel == rel);
        ensure!(has(REL_DESCRIPTION_EN) && has(REL_LAT) && has(REL_LONG), "item {} lacks metadata", item.href);
    }
    server.shutdown().await.map_err(|e| e.to_string())?;

    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("7 feeds x 5 streams x 24 points, latest verbatim, /cat 7 items, {:.2}s", elapsed.as_secs_f64()))
}

// ---- 2: EEML round trip ----------------------------------------------------

pub fn eeml_round_trip(documents: usize, mutated: usize) -> Outcome {
    let mut runner = TestRunner::new_with_rng(Config::default(), TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha));
    let strategy = arb_document();
    let mut failures = 0;
    let mut first = None;
    for _ in 0..documents {
        let doc = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let ok = serialize_eeml(&doc).ok().and_then(|b| parse_eeml(&b).ok()).is_some_and(|back| back == doc);
        if !ok {
            failures += 1;
            first.get_or_insert(doc);
        }
    }
    ensure!(failures == 0, "{failures} round-trip failures, first: {:?}", first);

    let mut rejected = 0;
    for i in 0..mutated {
        let m = Mutation::ALL[i % Mutation::ALL.len()];
        let doc = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let xml = String::from_utf8(serialize_eeml(&doc).map_err(|e| e.to_string())?).unwrap();
        let bad = mutate(&xml, m, i / Mutation::ALL.len());
        match parse_eeml(bad.as_bytes()) {
            Err(e) if e.class() == m.expected_class() => rejected += 1,
            Err(e) => return Err(format!("{m:?} rejected as {} ({e})", e.class())),
            Ok(_) => return Err(format!("{m:?} accepted:\n{bad}")),
        }
    }
    Ok(format!("{documents} round-trips, 0 failures; {rejected}/{mutated} mutants rejected with expected class"))
}

// ---- 3: store oracle -------------------------------------------------------

pub fn store_oracle(points: usize, streams: usize, queries: usize, seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let (hub, op) = operator_hub(fixed_options());
    let feeds = 5;
    let per_feed = streams.div_ceil(feeds);
    let mut refs = Vec::new();
    for f in 0..feeds {
        let fid = feed_id(&format!("feed-{f}"));
        hub.create_feed(&op, new_feed(fid.as_str(), 0.0, 0.0, &[])).map_err(|e| e.to_string())?;
        for s in 0..per_feed {
            if refs.len() == streams {
                break;
            }
            let sid = stream_id(&format!("s{s}"));
            hub.create_datastream(&op, &fid, Datastream::new(sid.clone(), "", "")).map_err(|e| e.to_string())?;
            refs.push(StreamRef::new(fid.clone(), sid));
        }
    }

    let base = ts("2016-01-01T00:00:00Z");
    let span_s = 30 * 86_400i64;
    let mut oracle: Vec<ListSeries> = vec![ListSeries::default(); refs.len()];
    for _ in 0..points {
        let i = rng.gen_range(0..refs.len());
        let mut at = base + TimeDelta::seconds(rng.gen_range(0..span_s));
        if rng.gen_bool(0.2) {
            at += TimeDelta::milliseconds(rng.gen_range(0..1000));
        }
        let value = match rng.gen_range(0..3) {
            0 => format!("{}", rng.gen_range(-500..500)),
            1 => format!("{:.2}", rng.gen_range(-100.0..100.0f64)),
            _ => format!("{}", rng.gen_range(-1.0e3..1.0e3f64)),
        };
        let doc = one_point_doc(refs[i].stream.as_str(), at, &value);
        let report = hub.ingest_document(&refs[i].feed, &op, &doc, true).map_err(|e| e.to_string())?;
        ensure!(report.accepted == 1, "ingest rejected {:?}", report.rejected);
        oracle[i].put(at, value);
    }

    let random_time = |rng: &mut StdRng| {
        let mut t = base + TimeDelta::seconds(rng.gen_range(-86_400..span_s + 86_400));
        if rng.gen_bool(0.3) {
            t += TimeDelta::milliseconds(rng.gen_range(0..1000));
        }
        t
    };

    for q in 0..queries {
        let i = rng.gen_range(0..refs.len());
        let (a, b) = (random_time(&mut rng), random_time(&mut rng));
        let (start, end) = (a.min(b), a.max(b));
        let limit = if rng.gen_bool(0.3) { rng.gen_range(1..50) } else { usize::MAX };
        let got: Vec<(Timestamp, String)> = hub
            .read_datapoints(&refs[i], start, end, limit, &op)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p| (p.at, p.value))
            .collect();
        let want = oracle[i].range(start, end, limit);
        ensure!(got == want, "range query {q} on {}: {} points vs oracle {}", refs[i], got.len(), want.len());
    }

    let windows = [1u64, 60, 900, 3600, 86_400];
    for q in 0..queries {
        let i = rng.gen_range(0..refs.len());
        let (a, b) = (random_time(&mut rng), random_time(&mut rng));
        let (start, end) = (a.min(b), a.max(b));
        let window = if rng.gen_bool(0.8) { windows[rng.gen_range(0..windows.len())] } else { rng.gen_range(2..200_000) };
        let function = AggregateFn::ALL[rng.gen_range(0..AggregateFn::ALL.len())];
        let got = hub.aggregate(&refs[i], function, window, start, end, &op).map_err(|e| e.to_string())?;
        let want = oracle[i].windows(start, end, window as i64);
        ensure!(got.len() == want.len(), "aggregate {q}: {} buckets vs oracle {}", got.len(), want.len());
        for (g, (w_start, vals)) in got.iter().zip(&want) {
            let expected = oracle_aggregate(function.as_str(), vals);
            let ok = match function {
                AggregateFn::Avg => ((g.value - expected) / expected.abs().max(f64::MIN_POSITIVE)).abs() <= 1e-9 || g.value == expected,
                _ => g.value == expected,
            };
            ensure!(g.window_start == *w_start && g.function == function && ok, "aggregate {q} {function}: {g:?} vs ({w_start}, {expected})");
        }
    }
    Ok(format!("{points} points / {} streams; {queries} ranges and {queries} aggregates match the list scan", refs.len()))
}

// ---- 4: permission matrix --------------------------------------------------

pub struct MatrixFixture {
    pub hub: Arc<Hub>,
    pub op: ApiKey,
    pub provider_a: ApiKey,
    pub developer: ApiKey,
    pub end_user: ApiKey,
    pub spare: ApiKey,
}

pub const FEED_A: &str = "feed-a";
pub const FEED_B: &str = "feed-b";

/// Two feeds with one stream and one point each; the developer is
/// subscribed to feed-a only.
pub fn matrix_fixture() -> MatrixFixture {
    let hub = Hub::in_memory(fixed_options());
    let op = hub.bootstrap_operator().unwrap().unwrap();
    let a = hub.create_feed(&op.secret, new_feed(FEED_A, 1.0, 1.0, &[])).unwrap();
    hub.create_feed(&op.secret, new_feed(FEED_B, 2.0, 2.0, &[])).unwrap();
    for f in [FEED_A, FEED_B] {
        hub.create_datastream(&op.secret, &feed_id(f), Datastream::new(stream_id("s"), "", "")).unwrap();
        hub.ingest_document(&feed_id(f), &op.secret, &one_point_doc("s", ts("2016-07-20T00:00:00Z"), "1"), true).unwrap();
    }
    let developer = hub.issue_key(&op.secret, Role::AppDeveloper, KeyScope::AllFeeds, "dev").unwrap();
    hub.subscribe(&developer.secret, &feed_id(FEED_A)).unwrap();
    let end_user = hub.issue_key(&op.secret, Role::EndUser, KeyScope::AllFeeds, "user").unwrap();
    let spare = hub.issue_key(&op.secret, Role::EndUser, KeyScope::AllFeeds, "spare").unwrap();
    MatrixFixture { hub: Arc::new(hub), op, provider_a: a.key, developer, end_user, spare }
}

/// Performs `action` for real. `Ok(true)` = it went through,
/// `Ok(false)` = Forbidden.
pub fn perform(fx: &MatrixFixture, who: &KeySecret, action: Action, target: &FeedId) -> Result<bool, HubError> {
    let hub = &fx.hub;
    let at = ts("2016-07-20T06:00:00Z");
    let result = match action {
        Action::CreateFeed => hub.create_feed(who, new_feed("feed-new", 3.0, 3.0, &[])).map(|_| ()),
        Action::CreateStream => hub.create_datastream(who, target, Datastream::new(stream_id("fresh"), "", "")).map(|_| ()),
        Action::Ingest => hub.ingest_document(target, who, &one_point_doc("s", at, "2"), true).map(|_| ()),
        Action::ReadData => hub.read_datapoints(&StreamRef::new(target.clone(), stream_id("s")), at, at, 10, who).map(|_| ()),
        Action::ReadLatest => hub.latest(target, &stream_id("s"), who).map(|_| ()),
        Action::Subscribe => hub.subscribe(who, target).map(|_| ()),
        Action::IssueKey => hub.issue_key(who, Role::EndUser, KeyScope::AllFeeds, "x").map(|_| ()),
        Action::RevokeKey => hub.revoke_key(who, &fx.spare.id).map(|_| ()),
    };
    match result {
        Ok(()) => Ok(true),
        Err(HubError::Forbidden(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

fn state_fingerprint(hub: &Hub) -> usize {
    hub.log_lines().unwrap().len()
}

pub fn permission_matrix() -> Outcome {
    let fx = matrix_fixture();
    let who: [(&str, &ApiKey); 4] =
        [("operator", &fx.op), ("provider", &fx.provider_a), ("developer", &fx.developer), ("end-user", &fx.end_user)];
    let mut cells = 0;
    for (name, key) in who {
        for action in Action::ALL {
            for target in [FEED_A, FEED_B] {
                let owns = key.role == Role::DataProvider && target == FEED_A;
                let subscribed = key.role == Role::AppDeveloper && target == FEED_A;
                let expected = table_allows(action, column_for(key.role, owns, subscribed));
                let fid = feed_id(target);
                let decision = fx.hub.authorize(&key.secret, action, Some(&fid));
                ensure!(
                    decision.allow == expected,
                    "authorize({name}, {action:?}, {target}) = {decision:?}, table says {expected}"
                );
                ensure!(decision.allow || !decision.reason.is_empty(), "deny without reason");

                // the same cell, exercised for real on a fresh fixture
                let fresh = matrix_fixture();
                let fresh_key = match name {
                    "operator" => &fresh.op,
                    "provider" => &fresh.provider_a,
                    "developer" => &fresh.developer,
                    _ => &fresh.end_user,
                };
                let before = state_fingerprint(&fresh.hub);
                let went_through = perform(&fresh, &fresh_key.secret, action, &fid)
                    .map_err(|e| format!("{name} {action:?} on {target}: unexpected {e}"))?;
                ensure!(went_through == expected, "{name} {action:?} on {target}: performed={went_through}, table says {expected}");
                if !went_through {
                    ensure!(state_fingerprint(&fresh.hub) == before, "{name} {action:?} denied but state changed");
                }
                cells += 1;
            }
        }
    }

    // unknown and revoked secrets are denied everything
    let revoked = fx.hub.issue_key(&fx.op.secret, Role::AppDeveloper, KeyScope::AllFeeds, "gone").unwrap();
    fx.hub.revoke_key(&fx.op.secret, &revoked.id).unwrap();
    for secret in [KeySecret::new("not-a-key"), revoked.secret.clone()] {
        for action in Action::ALL {
            let d = fx.hub.authorize(&secret, action, Some(&feed_id(FEED_A)));
            ensure!(!d.allow && d.reason == "unauthorized", "{action:?} with dead key: {d:?}");
        }
    }

    // feed creation auto-issues a key that ingests only to its own feed
    let fresh = matrix_fixture();
    let created = fresh.hub.create_feed(&fresh.op.secret, new_feed("feed-c", 4.0, 4.0, &[])).unwrap();
    let auto = &created.key;
    ensure!(
        auto.role == Role::DataProvider && auto.scope == KeyScope::Feed(feed_id("feed-c")),
        "auto key is {:?}/{:?}",
        auto.role,
        auto.scope
    );
    fresh.hub.create_datastream(&auto.secret, &feed_id("feed-c"), Datastream::new(stream_id("s"), "", "")).map_err(|e| e.to_string())?;
    let report = fresh
        .hub
        .ingest_document(&feed_id("feed-c"), &auto.secret, &one_point_doc("s", ts("2016-07-20T00:00:00Z"), "7"), true)
        .map_err(|e| e.to_string())?;
    ensure!(report.accepted == 1, "auto key ingest to own feed: {report:?}");
    for target in [FEED_A, FEED_B] {
        for action in Action::ALL {
            let went_through = perform(&fresh, &auto.secret, action, &feed_id(target)).map_err(|e| e.to_string())?;
            ensure!(!went_through, "auto key allowed {action:?} on {target}");
        }
    }
    let other = fresh.hub.create_feed(&fresh.op.secret, new_feed("feed-d", 5.0, 5.0, &[])).unwrap();
    ensure!(other.key.secret != auto.secret, "two feeds share a secret");
    Ok(format!("{cells} cells agree with the table (decision and effect); auto key confined to its feed"))
}

// ---- 5: crash recovery -----------------------------------------------------

pub struct Capture {
    pub label: String,
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

pub async fn request(http: &reqwest::Client, method: reqwest::Method, url: &str, key: Option<&KeySecret>, body: Option<(&str, Vec<u8>)>) -> Capture {
    let mut req = http.request(method.clone(), url);
    if let Some(k) = key {
        req = req.header(API_KEY_HEADER, k.as_str());
    }
    if let Some((ctype, bytes)) = body {
        req = req.header("content-type", ctype).body(bytes);
    }
    let resp = req.send().await.unwrap_or_else(|e| panic!("{method} {url}: {e}"));
    let status = resp.status().as_u16();
    let content_type = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).unwrap_or("").to_string();
    let body = resp.bytes().await.unwrap().to_vec();
    Capture { label: format!("{method} {url}"), status, content_type, body }
}

pub struct Session {
    pub op: KeySecret,
    pub provider: KeySecret,
    pub developer: KeySecret,
    pub revoked: KeySecret,
    pub end_user: KeySecret,
}

fn json(v: serde_json::Value) -> Option<(&'static str, Vec<u8>)> {
    Some(("application/json", v.to_string().into_bytes()))
}

/// Mutating session through the REST surface.
pub async fn scripted_session(base: &str, op: KeySecret) -> Session {
    let http = reqwest::Client::new();
    let post = reqwest::Method::POST;
    let mut provider = None;
    for (i, e) in EMIRATES.iter().take(3).enumerate() {
        let r = request(&http, post.clone(), &format!("{base}/v1/feeds"), Some(&op), json(serde_json::to_value(e.new_feed()).unwrap())).await;
        assert_eq!(r.status, 201, "{}", String::from_utf8_lossy(&r.body));
        let created: serde_json::Value = serde_json::from_slice(&r.body).unwrap();
        let key = KeySecret::new(created["key"]["secret"].as_str().unwrap());
        for s in weather_streams().into_iter().take(2 + i) {
            let r = request(&http, post.clone(), &format!("{base}/v1/feeds/{}/datastreams", e.feed_id), Some(&key), json(serde_json::to_value(&s).unwrap())).await;
            assert_eq!(r.status, 201);
        }
        let mapping = e.mapping();
        let conv = cityhub::adapter::convert_csv(&mapping, e.day_csv().as_bytes()).unwrap();
        for doc in conv.documents.iter().take(10) {
            let r = request(&http, reqwest::Method::PUT, &format!("{base}/v1/feeds/{}", e.feed_id), Some(&key), Some(("application/xml", serialize_eeml(doc).unwrap()))).await;
            assert_eq!(r.status, 200);
        }
        let r = request(&http, post.clone(), &format!("{base}/v1/feeds/{}/events", e.feed_id), Some(&key), json(serde_json::json!({"at": "2016-07-20T03:00:00Z", "kind": "maintenance", "description": "sensor swap"}))).await;
        assert_eq!(r.status, 201);
        let r = request(&http, post.clone(), &format!("{base}/v1/feeds/{}/context", e.feed_id), Some(&key), json(serde_json::json!({"at": "2016-07-20T00:00:00Z", "key": "station", "value": e.name}))).await;
        assert_eq!(r.status, 201);
        provider.get_or_insert(key);
    }
    let issue = |role: &str| json(serde_json::json!({"role": role, "label": role}));
    let secret_of = |c: &Capture| {
        assert_eq!(c.status, 201, "{}", String::from_utf8_lossy(&c.body));
        let v: serde_json::Value = serde_json::from_slice(&c.body).unwrap();
        (v["id"].as_str().unwrap().to_string(), KeySecret::new(v["secret"].as_str().unwrap()))
    };
    let (_, developer) = secret_of(&request(&http, post.clone(), &format!("{base}/v1/keys"), Some(&op), issue("AppDeveloper")).await);
    let (_, end_user) = secret_of(&request(&http, post.clone(), &format!("{base}/v1/keys"), Some(&op), issue("EndUser")).await);
    let (revoked_id, revoked) = secret_of(&request(&http, post.clone(), &format!("{base}/v1/keys"), Some(&op), issue("AppDeveloper")).await);
    let r = request(&http, post.clone(), &format!("{base}/v1/subscriptions"), Some(&developer), json(serde_json::json!({"feed_id": EMIRATES[0].feed_id}))).await;
    assert_eq!(r.status, 200);
    let r = request(&http, post.clone(), &format!("{base}/v1/subscriptions"), Some(&revoked), json(serde_json::json!({"feed_id": EMIRATES[1].feed_id}))).await;
    assert_eq!(r.status, 200);
    let r = request(&http, post.clone(), &format!("{base}/v1/keys/{revoked_id}/revoke"), Some(&op), None).await;
    assert_eq!(r.status, 200);
    Session { op, provider: provider.unwrap(), developer, revoked, end_user }
}

/// Fixed read script; every response is captured whole.
pub async fn read_script(base: &str, s: &Session) -> Vec<Capture> {
    let http = reqwest::Client::new();
    let get = reqwest::Method::GET;
    let ad = EMIRATES[0].feed_id;
    let aj = EMIRATES[1].feed_id;
    let mut urls: Vec<(String, Option<&KeySecret>)> = vec![
        ("/cat".into(), None),
        ("/cat?rel=urn:X-hypercat:rels:hasTag&val=weather".into(), None),
        ("/v1/feeds".into(), None),
        ("/v1/feeds?tag=uae&lat=25.0&lon=55.0&radius_km=150".into(), None),
        (format!("/v1/feeds/{ad}"), Some(&s.op)),
        (format!("/v1/feeds/{aj}"), Some(&s.end_user)),
        (format!("/v1/feeds/{ad}/datastreams/temperature/datapoints"), Some(&s.developer)),
        (format!("/v1/feeds/{ad}/datastreams/humidity/datapoints?start=2016-07-20T02:00:00Z&end=2016-07-20T07:00:00Z&limit=3"), Some(&s.op)),
        (format!("/v1/feeds/{ad}/datastreams/temperature/aggregate?fn=avg&window_s=3600&start=2016-07-20T00:00:00Z&end=2016-07-21T00:00:00Z"), Some(&s.op)),
        (format!("/v1/feeds/{aj}/datastreams/temperature/aggregate?fn=max&window_s=14400&start=2016-07-20T00:00:00Z&end=2016-07-21T00:00:00Z"), Some(&s.provider)),
        (format!("/v1/feeds/{ad}/datastreams/temperature/latest"), Some(&s.end_user)),
        (format!("/v1/feeds/{ad}/events"), Some(&s.op)),
        (format!("/v1/feeds/{ad}/context"), Some(&s.developer)),
        (format!("/v1/feeds/{aj}/datastreams/temperature/datapoints"), Some(&s.developer)),
        (format!("/v1/feeds/{aj}/datastreams/temperature/datapoints"), Some(&s.revoked)),
        ("/v1/feeds/nope".into(), Some(&s.op)),
        (format!("/v1/feeds/{ad}/datastreams/nope/latest"), Some(&s.op)),
    ];
    for e in EMIRATES.iter().take(3) {
        urls.push((format!("/v1/feeds/{}", e.feed_id), Some(&s.op)));
    }
    let mut out = Vec::new();
    for (path, key) in urls {
        out.push(request(&http, get.clone(), &format!("{base}{path}"), key, None).await);
    }
    out
}

pub async fn crash_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let live_dir = dir.path().join("live");
    let (hub, boot) = Hub::open(&live_dir, HubOptions::default()).map_err(|e| e.to_string())?;
    let op = boot.ok_or("no bootstrap key on empty dir")?.secret;
    let server = http::spawn(Arc::new(hub), "127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let session = scripted_session(&server.url(), op).await;
    let before = read_script(&server.url(), &session).await;

    // the process dies here: copy the log as it stands, no graceful flush
    let crashed = dir.path().join("crashed");
    std::fs::create_dir_all(&crashed).map_err(|e| e.to_string())?;
    std::fs::copy(live_dir.join(cityhub::log::LOG_FILE_NAME), crashed.join(cityhub::log::LOG_FILE_NAME)).map_err(|e| e.to_string())?;

    let (restored, boot_again) = Hub::open(&crashed, HubOptions::default()).map_err(|e| e.to_string())?;
    ensure!(boot_again.is_none(), "restart issued a second bootstrap key");
    let server2 = http::spawn(Arc::new(restored), "127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let after = read_script(&server2.url(), &session).await;
    server.shutdown().await.map_err(|e| e.to_string())?;
    server2.shutdown().await.map_err(|e| e.to_string())?;

    ensure!(before.len() == after.len(), "script length changed");
    let statuses: BTreeSet<u16> = before.iter().map(|c| c.status).collect();
    for (b, a) in before.iter().zip(&after) {
        ensure!(
            b.status == a.status && b.content_type == a.content_type && b.body == a.body,
            "response differs after restart for {}: {} {:?} vs {} {:?}",
            b.label,
            b.status,
            String::from_utf8_lossy(&b.body),
            a.status,
            String::from_utf8_lossy(&a.body)
        );
    }
    Ok(format!("{} read responses byte-identical after replay (statuses {:?})", before.len(), statuses))
}

// ---- 6: geo filter ---------------------------------------------------------

pub fn geo_filter(feeds: usize, queries: usize, seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let (hub, op) = operator_hub(fixed_options());
    let mut locations = Vec::new();
    for i in 0..feeds {
        let (lat, lon) = if rng.gen_bool(0.5) {
            (rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0))
        } else {
            // clustered around the Gulf to make small radii interesting
            (rng.gen_range(22.0..27.0), rng.gen_range(51.0..57.0))
        };
        let id = format!("geo-{i:03}");
        hub.create_feed(&op, new_feed(&id, lat, lon, &[])).map_err(|e| e.to_string())?;
        locations.push((id, lat, lon));
    }
    let mut boundary = 0;
    let mut non_empty = 0;
    for q in 0..queries {
        let (clat, clon) = if rng.gen_bool(0.5) {
            (rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0))
        } else {
            (rng.gen_range(22.0..27.0), rng.gen_range(51.0..57.0))
        };
        let radius = match q % 5 {
            // exactly the distance to some feed
            0 => {
                let (_, lat, lon) = &locations[rng.gen_range(0..locations.len())];
                boundary += 1;
                oracle_distance_km(clat, clon, *lat, *lon)
            }
            1 => rng.gen_range(0.0..50.0),
            2 => rng.gen_range(0.0..500.0),
            3 => rng.gen_range(0.0..5000.0),
            _ => rng.gen_range(0.0..20_100.0),
        };
        let center = GeoPoint::new(clat, clon).unwrap();
        let got: Vec<String> = hub.list_feeds(None, Some((center, radius))).map_err(|e| e.to_string())?.into_iter().map(|f| f.id.to_string()).collect();
        let want: Vec<String> = locations
            .iter()
            .filter(|(_, lat, lon)| oracle_distance_km(clat, clon, *lat, *lon) <= radius)
            .map(|(id, _, _)| id.clone())
            .collect();
        ensure!(got == want, "query {q} ({clat}, {clon}, r={radius}): got {got:?}, oracle {want:?}");
        if !want.is_empty() {
            non_empty += 1;
        }
    }
    Ok(format!("{feeds} feeds, {queries} queries match brute force ({boundary} on the boundary, {non_empty} non-empty)"))
}

// ---- 7: ingest atomicity and partition ----------------------------------------

fn store_dump(hub: &Hub, op: &KeySecret) -> BTreeMap<String, Vec<(Timestamp, String)>> {
    let mut out = BTreeMap::new();
    for feed in hub.list_feeds(None, None).unwrap() {
        for sid in feed.streams.keys() {
            let r = StreamRef::new(feed.id.clone(), sid.clone());
            let pts = hub.read_datapoints(&r, Timestamp::MIN_UTC, Timestamp::MAX_UTC, usize::MAX, op).unwrap();
            out.insert(r.to_string(), pts.into_iter().map(|p| (p.at, p.value)).collect());
        }
    }
    out
}

pub fn ingest_atomicity(cases: usize, seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let (hub, op) = operator_hub(fixed_options());
    let fid = feed_id("atomic");
    let created = hub.create_feed(&op, new_feed("atomic", 0.0, 0.0, &[])).map_err(|e| e.to_string())?;
    let known: Vec<String> = (0..6).map(|i| format!("k{i}")).collect();
    for k in &known {
        hub.create_datastream(&op, &fid, Datastream::new(stream_id(k), "", "")).map_err(|e| e.to_string())?;
    }
    let base = ts("2016-07-20T00:00:00Z");

    // malformed documents leave everything untouched
    let good = serialize_eeml(&one_point_doc("k0", base, "1")).unwrap();
    let good = String::from_utf8(good).unwrap();
    let mut malformed: Vec<String> = Mutation::ALL.iter().enumerate().map(|(i, m)| mutate(&good, *m, i)).collect();
    malformed.push(good.replace("</eeml>", ""));
    malformed.push(String::new());
    malformed.push("not xml at all".into());
    malformed.push(good.replace("<data id=\"k0\">", "<data id=\"k0\"><bogus/>"));
    // a two-element document whose second element is broken
    let two = EnvironmentDocument {
        data_elements: vec![one_point_doc("k1", base, "5").data_elements.remove(0), one_point_doc("k2", base, "6").data_elements.remove(0)],
        ..one_point_doc("k1", base, "5")
    };
    let two = String::from_utf8(serialize_eeml(&two).unwrap()).unwrap();
    malformed.push(two.replacen(">6</current_value>", ">six</current_value>", 1));
    let log_before = hub.log_lines().unwrap();
    let store_before = store_dump(&hub, &op);
    for (i, body) in malformed.iter().enumerate() {
        let err = hub.ingest_eeml(&fid, &created.key.secret, body.as_bytes(), true);
        ensure!(matches!(err, Err(HubError::MalformedDocument(_))), "malformed case {i} gave {err:?}");
    }
    ensure!(hub.log_lines().unwrap() == log_before, "malformed ingest wrote to the log");
    ensure!(store_dump(&hub, &op) == store_before, "malformed ingest changed the store");

    // partition: every element is accepted or rejected, never both or neither
    let mut total_elements = 0;
    for case in 0..cases {
        let n = rng.gen_range(1..10);
        let mut ids = BTreeSet::new();
        while ids.len() < n {
            let id = if rng.gen_bool(0.5) { known[rng.gen_range(0..known.len())].clone() } else { format!("u{}", rng.gen_range(0..40)) };
            ids.insert(id);
        }
        let mut ids: Vec<String> = ids.into_iter().collect();
        let len = ids.len();
        ids.rotate_left(rng.gen_range(0..len));
        let at = base + TimeDelta::seconds(case as i64);
        let doc = EnvironmentDocument {
            data_elements: ids.iter().map(|id| one_point_doc(id, at, &format!("{case}.5")).data_elements.remove(0)).collect(),
            ..one_point_doc("k0", at, "0")
        };
        let body = serialize_eeml(&doc).unwrap();
        let streams_before = hub.get_feed(&fid).unwrap().streams.len();
        let report = hub.ingest_eeml(&fid, &created.key.secret, &body, true).map_err(|e| e.to_string())?;
        ensure!(report.accepted + report.rejected.len() == ids.len(), "case {case}: {report:?} for {ids:?}");
        let want_rejected: BTreeSet<&str> = ids.iter().map(String::as_str).filter(|id| !known.iter().any(|k| k == id)).collect();
        let got_rejected: BTreeSet<&str> = report.rejected.iter().map(|r| r.id.as_str()).collect();
        ensure!(got_rejected == want_rejected, "case {case}: rejected {got_rejected:?}, expected {want_rejected:?}");
        ensure!(report.rejected.iter().all(|r| r.reason == "unknown-stream"), "case {case}: reasons {report:?}");
        ensure!(hub.get_feed(&fid).unwrap().streams.len() == streams_before, "strict ingest created streams");
        for id in &ids {
            if known.contains(id) {
                let latest = hub.latest(&fid, &stream_id(id), &op).unwrap();
                ensure!(latest.is_some_and(|p| p.at == at), "case {case}: {id} not stored");
            }
        }
        total_elements += ids.len();
    }

    // lenient mode with the feed key creates the unknown streams instead
    let doc = EnvironmentDocument {
        data_elements: ["k0", "new-a", "new-b"].iter().map(|id| one_point_doc(id, base, "1").data_elements.remove(0)).collect(),
        ..one_point_doc("k0", base, "1")
    };
    let report = hub.ingest_eeml(&fid, &created.key.secret, &serialize_eeml(&doc).unwrap(), false).map_err(|e| e.to_string())?;
    ensure!(report.accepted == 3 && report.rejected.is_empty(), "lenient ingest: {report:?}");
    Ok(format!("{} malformed documents left state unchanged; {cases} fuzz cases, {total_elements} elements partitioned exactly", malformed.len()))
}
