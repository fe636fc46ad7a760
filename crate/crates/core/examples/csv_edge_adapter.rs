//! Runs the CSV edge adapter once against a hub served on a local port:
//! CSV rows become EEML documents pushed over HTTP.

use std::sync::Arc;

use cityhub::adapter::{convert_csv, Adapter};
use cityhub::client::HubClient;
use cityhub::eeml::serialize_eeml;
use cityhub::fixtures::{weather_streams, EMIRATES};
use cityhub::{Hub, HubOptions};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let emirate = EMIRATES[0];
    let mapping = emirate.mapping();
    println!("mapping:\n{}\n", emirate.mapping_json());

    let csv = emirate.day_csv();
    let conversion = convert_csv(&mapping, csv.as_bytes())?;
    println!("{} rows -> {} documents; first one:", conversion.rows_read, conversion.documents.len());
    println!("{}", String::from_utf8(serialize_eeml(&conversion.documents[0])?)?);

    let hub = Hub::in_memory(HubOptions::default());
    let op = hub.bootstrap_operator()?.ok_or("operator exists")?.secret;
    let created = hub.create_feed(&op, emirate.new_feed())?;
    for s in weather_streams() {
        hub.create_datastream(&created.key.secret, &emirate.feed_id(), s)?;
    }
    let server = cityhub::http::spawn(Arc::new(hub), "127.0.0.1:0").await?;

    let dir = tempfile::tempdir()?;
    std::fs::write(dir.path().join("2016-07-20.csv"), &csv)?;
    let client = HubClient::new(&server.url(), Some(created.key.secret))?;
    let mut adapter = Adapter::new(mapping, dir.path(), client.clone());
    println!("cycle: {}", adapter.run_cycle().await?);
    println!("second cycle: {}", adapter.run_cycle().await?);

    let snapshot = client.snapshot(&emirate.feed_id()).await?;
    println!("\nfeed snapshot:\n{}", String::from_utf8(snapshot)?);
    server.shutdown().await?;
    Ok(())
}
