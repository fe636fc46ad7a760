//! `cityhub` command line: runs the service and drives it as a client.
//!
//! Exit codes: 0 success, 1 usage error, 2 remote or runtime failure.

use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reqwest::Method;
use serde_json::Value;

use crate::adapter::{load_mapping, Adapter, AdapterError, DEFAULT_INTERVAL_S};
use crate::auth::{ApiKey, Role};
use crate::client::{Body, ClientError, HubClient, RawResponse};
use crate::hub::{HubOptions, DEFAULT_DESCRIPTION};
use crate::http::{BoundService, ServeConfig};
use crate::model::{FeedId, GeoPoint, KeySecret, StreamId};
use crate::registry::{Datastream, NewFeed};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_REMOTE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputMode {
    Json,
    Table,
}

#[derive(Debug, Parser)]
#[command(name = "cityhub", version, about = "IoT data hub service and client")]
pub struct Cli {
    /// Hub base URL.
    #[arg(long, env = "CITYHUB_URL", default_value = "http://127.0.0.1:8080", global = true)]
    pub url: String,
    /// API key secret; takes precedence over CITYHUB_KEY.
    #[arg(long, env = "CITYHUB_KEY", global = true, hide_env_values = true)]
    pub key: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputMode::Table, global = true)]
    pub output: OutputMode,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the hub service.
    Serve(ServeArgs),
    /// Create and list feeds.
    #[command(subcommand)]
    Feed(FeedCommand),
    /// Add datastreams to a feed.
    #[command(subcommand)]
    Stream(StreamCommand),
    /// Issue and revoke API keys.
    #[command(subcommand)]
    Key(KeyCommand),
    /// Subscribe the current developer key to a feed.
    Subscribe { feed: String },
    /// Push an EEML document to a feed.
    Ingest {
        feed: String,
        file: PathBuf,
        /// Auto-create streams for unknown data ids.
        #[arg(long)]
        lenient: bool,
    },
    /// CSV edge adapter.
    #[command(subcommand)]
    Adapter(AdapterCommand),
    /// Read datapoints and aggregates.
    #[command(subcommand)]
    Query(QueryCommand),
    /// Print the Hypercat catalogue.
    Cat {
        #[arg(long)]
        rel: Option<String>,
        #[arg(long)]
        val: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, default_value = "hub-data")]
    pub data_dir: PathBuf,
    /// fsync each log record.
    #[arg(long)]
    pub sync: bool,
}

#[derive(Debug, Subcommand)]
pub enum FeedCommand {
    /// Register a feed; prints its provider key.
    Create {
        id: String,
        #[arg(long)]
        title: String,
        #[arg(long, allow_hyphen_values = true)]
        lat: f64,
        #[arg(long, allow_hyphen_values = true)]
        lon: f64,
        #[arg(long = "tag")]
        tags: Vec<String>,
    },
    /// List feeds, optionally by tag or distance.
    List {
        #[arg(long)]
        tag: Option<String>,
        #[arg(long, allow_hyphen_values = true, requires_all = ["lon", "radius_km"])]
        lat: Option<f64>,
        #[arg(long, allow_hyphen_values = true, requires_all = ["lat", "radius_km"])]
        lon: Option<f64>,
        #[arg(long, allow_hyphen_values = true, requires_all = ["lat", "lon"])]
        radius_km: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum StreamCommand {
    Create {
        feed: String,
        id: String,
        #[arg(long, default_value = "")]
        unit_label: String,
        #[arg(long, default_value = "")]
        unit_symbol: String,
        #[arg(long = "tag")]
        tags: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum KeyCommand {
    /// Roles: PlatformOperator, DataProvider, AppDeveloper, EndUser.
    Issue {
        #[arg(long)]
        role: String,
        #[arg(long)]
        feed: Option<String>,
        #[arg(long, default_value = "")]
        label: String,
    },
    Revoke { id: String },
}

#[derive(Debug, Subcommand)]
pub enum AdapterCommand {
    /// Convert CSV to EEML and push it to the hub.
    Run {
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value_t = DEFAULT_INTERVAL_S)]
        interval_s: u64,
        /// Run a single cycle and exit.
        #[arg(long)]
        once: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum QueryCommand {
    /// Raw points in [start, end].
    Datapoints {
        feed: String,
        stream: String,
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        end: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// min, max, avg, sum or count per window.
    Aggregate {
        feed: String,
        stream: String,
        #[arg(long = "fn")]
        function: String,
        #[arg(long)]
        window_s: u64,
        #[arg(long)]
        start: String,
        #[arg(long)]
        end: String,
    },
}

enum Failure {
    Usage(String),
    Remote(String),
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::BadUrl(_) => Failure::Usage(e.to_string()),
            ClientError::Api { body, .. } if !body.is_empty() => {
                Failure::Remote(String::from_utf8_lossy(&body).into_owned())
            }
            e => Failure::Remote(e.to_string()),
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

struct Ctx<'a> {
    cli: &'a Cli,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn client(&self) -> Result<HubClient, Failure> {
        Ok(HubClient::new(&self.cli.url, self.cli.key.clone().map(KeySecret::new))?)
    }

    fn json_mode(&self) -> bool {
        self.cli.output == OutputMode::Json
    }

    fn line(&mut self, text: impl AsRef<str>) {
        let _ = writeln!(self.out, "{}", text.as_ref());
    }

    /// JSON mode writes the body untouched; table mode calls `render`.
    fn emit(&mut self, resp: &RawResponse, render: impl FnOnce(&mut Self, &Value)) {
        if self.json_mode() {
            let _ = self.out.write_all(&resp.body);
            return;
        }
        match serde_json::from_slice::<Value>(&resp.body) {
            Ok(v) => render(self, &v),
            Err(_) => {
                let _ = self.out.write_all(&resp.body);
            }
        }
    }
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        Value::Array(items) => items.iter().map(text).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn table(ctx: &mut Ctx<'_>, headers: &[&str], rows: Vec<Vec<String>>) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let fmt_row = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    ctx.line(fmt_row(headers.iter().map(|h| h.to_string()).collect()));
    for row in rows {
        ctx.line(fmt_row(row));
    }
}

fn fields(ctx: &mut Ctx<'_>, v: &Value) {
    if let Value::Object(map) = v {
        for (k, val) in map {
            ctx.line(format!("{k}: {}", text(val)));
        }
    } else {
        ctx.line(text(v));
    }
}

fn print_key(ctx: &mut Ctx<'_>, key: &Value) {
    ctx.line(format!("key id:     {}", text(&key["id"])));
    ctx.line(format!("key secret: {}", text(&key["secret"])));
    ctx.line(format!("role:       {}", text(&key["role"])));
    ctx.line("the secret is shown only once; store it now");
}

fn timestamp_arg(value: &Option<String>, name: &str) -> Result<Vec<(&'static str, String)>, Failure> {
    let Some(v) = value else { return Ok(vec![]) };
    crate::model::parse_timestamp(v).ok_or_else(|| usage(format!("--{name} must be ISO-8601 UTC ending in Z")))?;
    Ok(vec![(if name == "start" { "start" } else { "end" }, v.clone())])
}

async fn execute(ctx: &mut Ctx<'_>) -> Result<(), Failure> {
    let cli = ctx.cli;
    match &cli.command {
        Command::Serve(args) => serve(ctx, args).await,
        Command::Feed(FeedCommand::Create { id, title, lat, lon, tags }) => {
            let new = NewFeed {
                id: FeedId::new(id.as_str()).map_err(usage)?,
                title: title.clone(),
                location: GeoPoint::new(*lat, *lon).map_err(usage)?,
                tags: tags.iter().cloned().collect(),
            };
            let body = serde_json::to_vec(&new).map_err(usage)?;
            let resp = ctx.client()?.send(Method::POST, "/v1/feeds", &[], Body::Json(body)).await?;
            ctx.emit(&resp, |ctx, v| {
                ctx.line(format!("created feed {}", text(&v["feed"]["id"])));
                print_key(ctx, &v["key"]);
            });
            Ok(())
        }
        Command::Feed(FeedCommand::List { tag, lat, lon, radius_km }) => {
            let mut query = Vec::new();
            if let Some(t) = tag {
                query.push(("tag", t.clone()));
            }
            if let (Some(lat), Some(lon), Some(r)) = (lat, lon, radius_km) {
                query.extend([("lat", lat.to_string()), ("lon", lon.to_string()), ("radius_km", r.to_string())]);
            }
            let resp = ctx.client()?.send(Method::GET, "/v1/feeds", &query, Body::None).await?;
            ctx.emit(&resp, |ctx, v| {
                let rows = v
                    .as_array()
                    .map(|feeds| {
                        feeds
                            .iter()
                            .map(|f| {
                                vec![
                                    text(&f["id"]),
                                    text(&f["title"]),
                                    text(&f["location"]["lat"]),
                                    text(&f["location"]["lon"]),
                                    text(&f["tags"]),
                                    f["streams"].as_array().map_or(0, Vec::len).to_string(),
                                ]
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                table(ctx, &["ID", "TITLE", "LAT", "LON", "TAGS", "STREAMS"], rows);
            });
            Ok(())
        }
        Command::Stream(StreamCommand::Create { feed, id, unit_label, unit_symbol, tags }) => {
            let feed = FeedId::new(feed.as_str()).map_err(usage)?;
            let mut stream = Datastream::new(StreamId::new(id.as_str()).map_err(usage)?, unit_label, unit_symbol);
            stream.tags = tags.iter().cloned().collect();
            let body = serde_json::to_vec(&stream).map_err(usage)?;
            let resp = ctx
                .client()?
                .send(Method::POST, &format!("/v1/feeds/{feed}/datastreams"), &[], Body::Json(body))
                .await?;
            ctx.emit(&resp, |ctx, v| ctx.line(format!("created stream {feed}/{}", text(&v["id"]))));
            Ok(())
        }
        Command::Key(KeyCommand::Issue { role, feed, label }) => {
            let role: Role = role.parse().map_err(usage)?;
            let feed = feed.as_deref().map(FeedId::new).transpose().map_err(usage)?;
            let body = serde_json::json!({ "role": role, "feed_id": feed, "label": label });
            let resp = ctx.client()?.send(Method::POST, "/v1/keys", &[], Body::Json(body.to_string().into_bytes())).await?;
            ctx.emit(&resp, print_key);
            Ok(())
        }
        Command::Key(KeyCommand::Revoke { id }) => {
            let id = crate::model::KeyId::new(id.as_str()).map_err(usage)?;
            let resp = ctx.client()?.send(Method::POST, &format!("/v1/keys/{id}/revoke"), &[], Body::None).await?;
            ctx.emit(&resp, |ctx, v| ctx.line(format!("revoked {}", text(&v["id"]))));
            Ok(())
        }
        Command::Subscribe { feed } => {
            let feed = FeedId::new(feed.as_str()).map_err(usage)?;
            let body = serde_json::json!({ "feed_id": feed }).to_string().into_bytes();
            let resp = ctx.client()?.send(Method::POST, "/v1/subscriptions", &[], Body::Json(body)).await?;
            ctx.emit(&resp, fields);
            Ok(())
        }
        Command::Ingest { feed, file, lenient } => {
            let feed = FeedId::new(feed.as_str()).map_err(usage)?;
            let bytes = std::fs::read(file).map_err(|e| usage(format!("cannot read {}: {e}", file.display())))?;
            let query = if *lenient { vec![("strict", "false".to_string())] } else { vec![] };
            let resp = ctx.client()?.send(Method::PUT, &format!("/v1/feeds/{feed}"), &query, Body::Xml(bytes)).await?;
            ctx.emit(&resp, |ctx, v| {
                ctx.line(format!("accepted: {}", text(&v["accepted"])));
                for r in v["rejected"].as_array().into_iter().flatten() {
                    ctx.line(format!("rejected: {} ({})", text(&r["id"]), text(&r["reason"])));
                }
            });
            Ok(())
        }
        Command::Adapter(AdapterCommand::Run { mapping, source, interval_s, once }) => {
            let raw = std::fs::read(mapping).map_err(|e| usage(format!("cannot read {}: {e}", mapping.display())))?;
            let mapping = load_mapping(&raw).map_err(usage)?;
            if *interval_s == 0 {
                return Err(usage("--interval-s must be positive"));
            }
            let mut adapter = Adapter::new(mapping, source.clone(), ctx.client()?);
            let result = if *once {
                adapter.run_cycle().await
            } else {
                let interval = Duration::from_secs(*interval_s);
                adapter.run_until(interval, async { let _ = tokio::signal::ctrl_c().await; }).await
            };
            let summary = result.map_err(|e| match e {
                AdapterError::Remote(c) => Failure::from(c),
                other => Failure::Remote(other.to_string()),
            })?;
            if ctx.json_mode() {
                let json = serde_json::to_string(&summary).map_err(usage)?;
                ctx.line(json);
            } else {
                ctx.line(format!("adapter: {summary}"));
            }
            Ok(())
        }
        Command::Query(QueryCommand::Datapoints { feed, stream, start, end, limit }) => {
            let feed = FeedId::new(feed.as_str()).map_err(usage)?;
            let stream = StreamId::new(stream.as_str()).map_err(usage)?;
            let mut query = timestamp_arg(start, "start")?;
            query.extend(timestamp_arg(end, "end")?);
            if let Some(l) = limit {
                query.push(("limit", l.to_string()));
            }
            let path = format!("/v1/feeds/{feed}/datastreams/{stream}/datapoints");
            let resp = ctx.client()?.send(Method::GET, &path, &query, Body::None).await?;
            ctx.emit(&resp, |ctx, v| {
                let rows = v
                    .as_array()
                    .map(|ps| ps.iter().map(|p| vec![text(&p["at"]), text(&p["value"])]).collect())
                    .unwrap_or_default();
                table(ctx, &["AT", "VALUE"], rows);
            });
            Ok(())
        }
        Command::Query(QueryCommand::Aggregate { feed, stream, function, window_s, start, end }) => {
            let feed = FeedId::new(feed.as_str()).map_err(usage)?;
            let stream = StreamId::new(stream.as_str()).map_err(usage)?;
            function.parse::<crate::egress::AggregateFn>().map_err(usage)?;
            let mut query = vec![("fn", function.clone()), ("window_s", window_s.to_string())];
            query.extend(timestamp_arg(&Some(start.clone()), "start")?);
            query.extend(timestamp_arg(&Some(end.clone()), "end")?);
            let path = format!("/v1/feeds/{feed}/datastreams/{stream}/aggregate");
            let resp = ctx.client()?.send(Method::GET, &path, &query, Body::None).await?;
            ctx.emit(&resp, |ctx, v| {
                let rows = v
                    .as_array()
                    .map(|bs| bs.iter().map(|b| vec![text(&b["window_start"]), text(&b["fn"]), text(&b["value"])]).collect())
                    .unwrap_or_default();
                table(ctx, &["WINDOW_START", "FN", "VALUE"], rows);
            });
            Ok(())
        }
        Command::Cat { rel, val } => {
            let mut query = Vec::new();
            if let Some(r) = rel {
                query.push(("rel", r.clone()));
            }
            if let Some(v) = val {
                query.push(("val", v.clone()));
            }
            let resp = ctx.client()?.send(Method::GET, "/cat", &query, Body::None).await?;
            ctx.emit(&resp, |ctx, v| {
                let rows = v["items"]
                    .as_array()
                    .map(|items| {
                        items
                            .iter()
                            .map(|item| {
                                let desc = item["item-metadata"]
                                    .as_array()
                                    .and_then(|m| m.iter().find(|p| p["rel"] == crate::hypercat::REL_DESCRIPTION_EN))
                                    .map(|p| text(&p["val"]))
                                    .unwrap_or_default();
                                vec![text(&item["href"]), desc]
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                table(ctx, &["HREF", "DESCRIPTION"], rows);
            });
            Ok(())
        }
    }
}

async fn serve(ctx: &mut Ctx<'_>, args: &ServeArgs) -> Result<(), Failure> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .try_init();
    let config = ServeConfig {
        addr: args.addr.clone(),
        data_dir: args.data_dir.clone(),
        options: HubOptions { description: DEFAULT_DESCRIPTION.into(), sync_writes: args.sync, ..Default::default() },
    };
    let service = BoundService::open(&config).await.map_err(|e| Failure::Remote(e.to_string()))?;
    if let Some(key) = &service.bootstrap_key {
        announce_bootstrap(ctx, key);
    }
    let addr = service.local_addr().map_err(|e| Failure::Remote(e.to_string()))?;
    tracing::info!("serving on http://{addr} (data in {})", config.data_dir.display());
    let _ = ctx.out.flush();
    service
        .run(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Failure::Remote(e.to_string()))
}

fn announce_bootstrap(ctx: &mut Ctx<'_>, key: &ApiKey) {
    ctx.line("bootstrap PlatformOperator key (shown once):");
    ctx.line(format!("  id:     {}", key.id));
    ctx.line(format!("  secret: {}", key.secret.as_str()));
}

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            let _ = writeln!(err, "cannot start runtime: {e}");
            return EXIT_REMOTE;
        }
    };
    let mut ctx = Ctx { cli: &cli, out, err };
    let result = runtime.block_on(execute(&mut ctx));
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(ctx.err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Remote(msg)) => {
            let _ = writeln!(ctx.err, "{msg}");
            EXIT_REMOTE
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    dispatch(std::env::args_os(), &mut out, &mut err)
}
