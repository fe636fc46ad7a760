//! The full UAE deployment: seven emirate feeds, five weather streams each,
//! a day of readings through the adapter, then a developer discovering and
//! reading the data.

use std::sync::Arc;

use cityhub::adapter::Adapter;
use cityhub::auth::Role;
use cityhub::client::HubClient;
use cityhub::egress::AggregateFn;
use cityhub::fixtures::{weather_streams, EMIRATES};
use cityhub::hypercat::REL_HAS_TAG;
use cityhub::model::{parse_timestamp, StreamId, StreamRef};
use cityhub::{Hub, HubOptions};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hub = Hub::in_memory(HubOptions::default());
    let op = hub.bootstrap_operator()?.ok_or("operator exists")?.secret;
    let server = cityhub::http::spawn(Arc::new(hub), "127.0.0.1:0").await?;
    let admin = HubClient::new(&server.url(), Some(op))?;
    let csv_dir = tempfile::tempdir()?;

    for e in EMIRATES {
        let created = admin.create_feed(&e.new_feed()).await?;
        let provider = admin.with_key(created.key.secret.clone());
        for s in weather_streams() {
            provider.create_datastream(&e.feed_id(), &s).await?;
        }
        let file = csv_dir.path().join(format!("{}.csv", e.feed_id));
        std::fs::write(&file, e.day_csv())?;
        let summary = Adapter::new(e.mapping(), &file, provider).run_cycle().await?;
        println!("{:<24} {summary}", e.feed_id);
    }

    let dev_key = admin.issue_key(Role::AppDeveloper, None, "weather app").await?;
    let dev = admin.with_key(dev_key.secret);
    let catalogue = dev.catalogue(Some(REL_HAS_TAG), Some("weather")).await?;
    println!("\ncatalogue lists {} weather feeds", catalogue.items.len());

    let near_dubai = dev.list_feeds(&[("lat", "25.2".into()), ("lon", "55.27".into()), ("radius_km", "40".into())]).await?;
    println!("feeds within 40 km of Dubai: {:?}", near_dubai.iter().map(|f| f.id.as_str()).collect::<Vec<_>>());

    let dubai = EMIRATES[2].feed_id();
    dev.subscribe(&dubai).await?;
    let temp = StreamRef::new(dubai, StreamId::new("temperature")?);
    let start = parse_timestamp("2016-07-20T00:00:00Z").ok_or("bad timestamp")?;
    let end = parse_timestamp("2016-07-21T00:00:00Z").ok_or("bad timestamp")?;
    let latest = dev.latest(&temp).await?.ok_or("no data")?;
    println!("latest Dubai temperature: {} at {}", latest.value, latest.at);
    for b in dev.aggregate(&temp, AggregateFn::Max, 6 * 3600, start, end).await? {
        println!("  max from {}: {}", b.window_start, b.value);
    }
    server.shutdown().await?;
    Ok(())
}
